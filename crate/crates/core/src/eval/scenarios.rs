//! Randomized system-setting scenarios for the emergent-behavior benchmark.
//!
//! Every scenario fixes the flow rate at 100% so that a sensible corrective
//! strategy must address the actual root cause (temperature, feed, z offset)
//! instead of nudging the extrusion multiplier.

use crate::perception::stream_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Material {
    Pla,
    Abs,
    Tpu,
    Petg,
}

pub const MATERIALS: [Material; 4] = [Material::Pla, Material::Abs, Material::Tpu, Material::Petg];

impl Material {
    /// Nominal nozzle temperature for the material, degC.
    pub fn nominal_temp(self) -> f64 {
        match self {
            Material::Pla => 200.0,
            Material::Abs => 240.0,
            Material::Tpu => 220.0,
            Material::Petg => 235.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Material::Pla => "PLA",
            Material::Abs => "ABS",
            Material::Tpu => "TPU",
            Material::Petg => "PETG",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Allowed deviation from nominal before a temperature counts as faulty.
pub const NOMINAL_TEMP_TOLERANCE_C: f64 = 10.0;

/// One randomized system configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nozzle_temp: f64,
    pub feed_rate: f64,
    pub z_offset: f64,
    pub material: Material,
    /// Held at 100 by construction.
    pub flow_rate: f64,
}

impl Scenario {
    /// Is the nozzle temperature within tolerance of the material's nominal?
    pub fn temp_is_nominal(&self) -> bool {
        (self.nozzle_temp - self.material.nominal_temp()).abs() <= NOMINAL_TEMP_TOLERANCE_C
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Printing {} with nozzle temperature {:.1} C, feed rate {:.1}%, z offset {:+.2} mm, flow rate {:.0}%.",
            self.material, self.nozzle_temp, self.feed_rate, self.z_offset, self.flow_rate
        )
    }
}

fn sample_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let material = MATERIALS[rng.gen_range(0..MATERIALS.len())];
    let nominal = material.nominal_temp();

    let nozzle_temp = if rng.gen_bool(0.5) {
        nominal + rng.gen_range(-5.0..=5.0)
    } else {
        let offset = rng.gen_range(15.0..=60.0);
        if rng.gen_bool(0.5) { nominal + offset } else { nominal - offset }
    };
    let feed_rate = if rng.gen_bool(0.5) {
        rng.gen_range(95.0..=105.0)
    } else if rng.gen_bool(0.5) {
        rng.gen_range(40.0..=70.0)
    } else {
        rng.gen_range(140.0..=200.0)
    };
    let z_offset = if rng.gen_bool(0.5) {
        rng.gen_range(-0.05..=0.05)
    } else {
        let magnitude = rng.gen_range(0.2..=0.6);
        if rng.gen_bool(0.5) { magnitude } else { -magnitude }
    };

    Scenario {
        nozzle_temp,
        feed_rate,
        z_offset,
        material,
        flow_rate: 100.0,
    }
}

/// Generate `n` pairwise-distinct scenarios mixing healthy and faulty
/// settings per dimension, flow fixed at 100%.
pub fn generate_scenarios(n: usize, rng_seed: u64) -> Vec<Scenario> {
    let mut scenarios: Vec<Scenario> = Vec::with_capacity(n);
    let mut stream = 0usize;
    while scenarios.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(rng_seed, stream));
        stream += 1;
        let candidate = sample_scenario(&mut rng);
        if !scenarios.contains(&candidate) {
            scenarios.push(candidate);
        }
    }
    scenarios
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn flow_fixed_at_100() {
        for scenario in generate_scenarios(100, 1) {
            assert_eq!(scenario.flow_rate, 100.0);
        }
    }

    #[test]
    fn pairwise_distinct() {
        let scenarios = generate_scenarios(100, 2);
        for (i, a) in scenarios.iter().enumerate() {
            for b in &scenarios[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn covers_most_materials() {
        let scenarios = generate_scenarios(100, 3);
        let materials: HashSet<Material> = scenarios.iter().map(|s| s.material).collect();
        assert!(materials.len() >= 3);
    }

    #[test]
    fn abs_at_nominal_temp_flags_healthy() {
        let scenario = Scenario {
            nozzle_temp: 240.0,
            feed_rate: 100.0,
            z_offset: 0.0,
            material: Material::Abs,
            flow_rate: 100.0,
        };
        assert!(scenario.temp_is_nominal());
        let cold = Scenario { nozzle_temp: 190.0, ..scenario };
        assert!(!cold.temp_is_nominal());
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_scenarios(25, 9), generate_scenarios(25, 9));
    }

    #[test]
    fn mixes_healthy_and_faulty_temperatures() {
        let scenarios = generate_scenarios(100, 4);
        let healthy = scenarios.iter().filter(|s| s.temp_is_nominal()).count();
        assert!(healthy > 10, "expected some healthy temperatures, got {healthy}");
        assert!(healthy < 90, "expected some faulty temperatures, got {healthy}");
    }

    #[test]
    fn description_mentions_every_setting() {
        let scenario = Scenario {
            nozzle_temp: 240.0,
            feed_rate: 100.0,
            z_offset: -0.3,
            material: Material::Abs,
            flow_rate: 100.0,
        };
        let text = scenario.to_string();
        assert!(text.contains("ABS"));
        assert!(text.contains("240.0"));
        assert!(text.contains("z offset"));
        assert!(text.contains("flow rate 100%"));
    }
}
