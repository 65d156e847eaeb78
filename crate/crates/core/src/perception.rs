//! The process-expert seam: a synthetic flow estimator calibrated to a
//! target mean absolute error, caption synthesis from numeric labels,
//! numeric and class extraction from free text, and the log-space codec the
//! real regressor trains in.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("flow value must be > 0, got {0}")]
    NonPositiveValue(f64),
    #[error("template pool '{0}' is empty or too small (need at least {MIN_TEMPLATES})")]
    BadTemplatePool(String),
    #[error("quantitative template missing a {{value}} placeholder: '{0}'")]
    MissingPlaceholder(String),
    #[error("no extractable flow value in text")]
    NoExtractableValue,
    #[error("no extrusion-quality class mentioned in text")]
    NoClassMention,
    #[error("text mentions more than one extrusion-quality class")]
    AmbiguousClassMention,
    #[error("malformed template file: {0}")]
    BadTemplateFile(String),
}

/// Qualitative extrusion classes, totally ordered Under < Good < Over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualitativeClass {
    UnderExtrusion,
    GoodExtrusion,
    OverExtrusion,
}

impl QualitativeClass {
    pub fn label(self) -> &'static str {
        match self {
            Self::UnderExtrusion => "under-extrusion",
            Self::GoodExtrusion => "good extrusion",
            Self::OverExtrusion => "over-extrusion",
        }
    }
}

/// Band thresholds for the qualitative classes, in flow percent.
pub const UNDER_THRESHOLD: f64 = 90.0;
pub const OVER_THRESHOLD: f64 = 110.0;

/// Classify a flow percentage: below 90 is under-extrusion, within
/// [90, 110] is good, above 110 is over-extrusion. Boundary values count
/// as good.
pub fn classify_flow(value: f64) -> Result<QualitativeClass, PerceptionError> {
    if !(value > 0.0) {
        return Err(PerceptionError::NonPositiveValue(value));
    }
    Ok(if value < UNDER_THRESHOLD {
        QualitativeClass::UnderExtrusion
    } else if value > OVER_THRESHOLD {
        QualitativeClass::OverExtrusion
    } else {
        QualitativeClass::GoodExtrusion
    })
}

/// Strict variant used by the alignment metric flag: below, equal to, or
/// above exactly 100 percent.
pub fn classify_flow_strict(value: f64) -> Result<QualitativeClass, PerceptionError> {
    if !(value > 0.0) {
        return Err(PerceptionError::NonPositiveValue(value));
    }
    Ok(if value < 100.0 {
        QualitativeClass::UnderExtrusion
    } else if value > 100.0 {
        QualitativeClass::OverExtrusion
    } else {
        QualitativeClass::GoodExtrusion
    })
}

/// Which classification rule the alignment metric applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentRule {
    /// Banded thresholds: under < 90, good in [90, 110], over > 110.
    #[default]
    Banded,
    /// Literal comparison against 100 percent.
    Strict100,
}

// ---------------------------------------------------------------------------
// Captions

/// Three-part caption: a general statement, a quantitative sentence carrying
/// the flow value, and a qualitative sentence naming the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub general: String,
    pub quantitative: String,
    pub qualitative: String,
}

impl Caption {
    pub fn full_text(&self) -> String {
        format!("{} {} {}", self.general, self.quantitative, self.qualitative)
    }
}

const MIN_TEMPLATES: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualitativePools {
    pub under: Vec<String>,
    pub good: Vec<String>,
    pub over: Vec<String>,
}

/// Template pools for the three caption components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplatePools {
    pub general: Vec<String>,
    pub quantitative: Vec<String>,
    pub qualitative: QualitativePools,
}

impl TemplatePools {
    /// Pools shipped with the library.
    pub fn builtin() -> &'static TemplatePools {
        static POOLS: OnceLock<TemplatePools> = OnceLock::new();
        POOLS.get_or_init(|| {
            let pools: TemplatePools =
                serde_json::from_str(include_str!("assets/templates.json"))
                    .expect("builtin templates are valid");
            pools.validate().expect("builtin templates validate");
            pools
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, PerceptionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PerceptionError::BadTemplateFile(e.to_string()))?;
        let pools: TemplatePools = serde_json::from_str(&text)
            .map_err(|e| PerceptionError::BadTemplateFile(e.to_string()))?;
        pools.validate()?;
        Ok(pools)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let checks = [
            ("general", &self.general),
            ("quantitative", &self.quantitative),
            ("qualitative.under", &self.qualitative.under),
            ("qualitative.good", &self.qualitative.good),
            ("qualitative.over", &self.qualitative.over),
        ];
        for (name, pool) in checks {
            if pool.len() < MIN_TEMPLATES {
                return Err(PerceptionError::BadTemplatePool(name.to_string()));
            }
        }
        for template in &self.quantitative {
            if !template.contains("{value}") {
                return Err(PerceptionError::MissingPlaceholder(template.clone()));
            }
        }
        Ok(())
    }

    fn class_pool(&self, class: QualitativeClass) -> &[String] {
        match class {
            QualitativeClass::UnderExtrusion => &self.qualitative.under,
            QualitativeClass::GoodExtrusion => &self.qualitative.good,
            QualitativeClass::OverExtrusion => &self.qualitative.over,
        }
    }
}

/// Render the caption for a flow value using the builtin template pools.
/// The same `(value, seed)` pair always yields the same caption.
pub fn synthesize_caption(
    value: f64,
    class_override: Option<QualitativeClass>,
    rng_seed: u64,
) -> Result<Caption, PerceptionError> {
    synthesize_caption_with(TemplatePools::builtin(), value, class_override, rng_seed)
}

pub fn synthesize_caption_with(
    pools: &TemplatePools,
    value: f64,
    class_override: Option<QualitativeClass>,
    rng_seed: u64,
) -> Result<Caption, PerceptionError> {
    let class = match class_override {
        Some(class) => {
            if !(value > 0.0) {
                return Err(PerceptionError::NonPositiveValue(value));
            }
            class
        }
        None => classify_flow(value)?,
    };
    let class_pool = pools.class_pool(class);
    if pools.general.is_empty() || pools.quantitative.is_empty() || class_pool.is_empty() {
        return Err(PerceptionError::BadTemplatePool("empty pool".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let general = pools.general[rng.gen_range(0..pools.general.len())].clone();
    let quantitative = pools.quantitative[rng.gen_range(0..pools.quantitative.len())]
        .replace("{value}", &format!("{value}"));
    let qualitative = class_pool[rng.gen_range(0..class_pool.len())].clone();
    Ok(Caption {
        general,
        quantitative,
        qualitative,
    })
}

// ---------------------------------------------------------------------------
// Extraction

fn percent_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(?:%|percent)").expect("valid regex")
    })
}

fn flow_keyword_regex() -> &'static regex::Regex {
    static RE: OnceLock<regex::Regex> = OnceLock::new();
    RE.get_or_init(|| {
        regex::Regex::new(r"(?i)flow[^\d.;]*(\d+(?:\.\d+)?)").expect("valid regex")
    })
}

/// Pull the flow percentage out of free text: the first number adjacent to a
/// percent marker or following a flow keyword.
pub fn extract_flow_value(text: &str) -> Result<f64, PerceptionError> {
    let mut best: Option<(usize, f64)> = None;
    for re in [percent_regex(), flow_keyword_regex()] {
        if let Some(caps) = re.captures(text) {
            let group = caps.get(1).expect("regex has one group");
            if let Ok(value) = group.as_str().parse::<f64>() {
                let start = group.start();
                if best.map_or(true, |(pos, _)| start < pos) {
                    best = Some((start, value));
                }
            }
        }
    }
    best.map(|(_, v)| v).ok_or(PerceptionError::NoExtractableValue)
}

const UNDER_SYNONYMS: [&str; 6] = [
    "under extrusion",
    "under extruding",
    "under extruded",
    "underextrusion",
    "underextruding",
    "underextruded",
];
const GOOD_SYNONYMS: [&str; 4] = [
    "good extrusion",
    "nominal extrusion",
    "extrusion is good",
    "extrusion looks good",
];
const OVER_SYNONYMS: [&str; 6] = [
    "over extrusion",
    "over extruding",
    "over extruded",
    "overextrusion",
    "overextruding",
    "overextruded",
];

/// Find the single extrusion-quality class named in the text.
///
/// Hyphenated and fused spellings are accepted. Zero or multiple distinct
/// classes are errors.
pub fn extract_qualitative_class(text: &str) -> Result<QualitativeClass, PerceptionError> {
    let normalized: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c == '-' { ' ' } else { c })
        .collect();
    let mut found = Vec::new();
    let table = [
        (QualitativeClass::UnderExtrusion, &UNDER_SYNONYMS[..]),
        (QualitativeClass::GoodExtrusion, &GOOD_SYNONYMS[..]),
        (QualitativeClass::OverExtrusion, &OVER_SYNONYMS[..]),
    ];
    for (class, synonyms) in table {
        if synonyms.iter().any(|s| normalized.contains(s)) {
            found.push(class);
        }
    }
    match found.as_slice() {
        [single] => Ok(*single),
        [] => Err(PerceptionError::NoClassMention),
        _ => Err(PerceptionError::AmbiguousClassMention),
    }
}

/// True iff the class named in the text matches the class of the numeric
/// value under the banded rule.
pub fn alignment_check(value: f64, text: &str) -> Result<bool, PerceptionError> {
    alignment_check_with(value, text, AlignmentRule::Banded)
}

pub fn alignment_check_with(
    value: f64,
    text: &str,
    rule: AlignmentRule,
) -> Result<bool, PerceptionError> {
    let described = extract_qualitative_class(text)?;
    let actual = match rule {
        AlignmentRule::Banded => classify_flow(value)?,
        AlignmentRule::Strict100 => classify_flow_strict(value)?,
    };
    Ok(described == actual)
}

// ---------------------------------------------------------------------------
// Log-space codec

/// Map a flow percent into the regressor's output space:
/// `y = 2*log10(v/30) - 1`, anchoring 30 to -1 and 300 to +1.
pub fn encode_log(value: f64) -> Result<f64, PerceptionError> {
    if !(value > 0.0) {
        return Err(PerceptionError::NonPositiveValue(value));
    }
    Ok(2.0 * (value / 30.0).log10() - 1.0)
}

/// Exact inverse of [`encode_log`].
pub fn decode_log(y: f64) -> f64 {
    30.0 * 10f64.powf((y + 1.0) / 2.0)
}

// ---------------------------------------------------------------------------
// Synthetic estimator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    /// Error magnitude follows a folded Gaussian scaled to the target MAE.
    #[default]
    GaussianFolded,
    /// Error uniform on [-2*MAE, 2*MAE].
    Uniform,
}

/// Error model reproducing the process expert's reported accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorNoiseModel {
    pub distribution: NoiseDistribution,
    /// Mean absolute error the estimates converge to over many draws.
    pub target_mae: f64,
    /// Spread of the reported error, used to bound belief synthesis.
    pub dispersion: f64,
}

impl Default for EstimatorNoiseModel {
    fn default() -> Self {
        Self {
            distribution: NoiseDistribution::GaussianFolded,
            target_mae: 17.52,
            dispersion: 28.89,
        }
    }
}

impl EstimatorNoiseModel {
    pub fn zero() -> Self {
        Self {
            distribution: NoiseDistribution::GaussianFolded,
            target_mae: 0.0,
            dispersion: 0.0,
        }
    }

    pub fn with_mae(mut self, mae: f64) -> Self {
        self.target_mae = mae;
        self
    }

    /// Half-width of the empirical error band, MAE + dispersion.
    pub fn error_bound(&self) -> f64 {
        self.target_mae + self.dispersion
    }
}

/// Clamp range for estimates, in flow percent.
const ESTIMATE_MIN: f64 = 1.0;
const ESTIMATE_MAX: f64 = 1000.0;

fn draw_error(noise: &EstimatorNoiseModel, rng: &mut ChaCha8Rng) -> f64 {
    if noise.target_mae <= 0.0 {
        return 0.0;
    }
    match noise.distribution {
        NoiseDistribution::GaussianFolded => {
            // E|N(0, sigma)| = sigma * sqrt(2/pi), so sigma = MAE * sqrt(pi/2).
            let sigma = noise.target_mae * (std::f64::consts::PI / 2.0).sqrt();
            let normal = Normal::new(0.0, sigma).expect("sigma > 0");
            normal.sample(rng)
        }
        NoiseDistribution::Uniform => {
            // E|U(-w, w)| = w/2, so w = 2 * MAE.
            let w = 2.0 * noise.target_mae;
            rng.gen_range(-w..=w)
        }
    }
}

/// Draw one noisy estimate of the true flow. Estimates are clamped to
/// [1, 1000] percent; the same seed always yields the same estimate.
pub fn synthetic_estimate(truth: f64, noise: &EstimatorNoiseModel, rng_seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let eps = draw_error(noise, &mut rng);
    (truth + eps).clamp(ESTIMATE_MIN, ESTIMATE_MAX)
}

/// Empirical MAE of `n` estimator draws at a fixed truth, one independent
/// RNG stream per draw.
pub fn empirical_mae(truth: f64, noise: &EstimatorNoiseModel, n: usize, rng_seed: u64) -> f64 {
    #[cfg(feature = "parallel")]
    {
        let total: f64 = (0..n)
            .into_par_iter()
            .map(|i| (synthetic_estimate(truth, noise, stream_seed(rng_seed, i)) - truth).abs())
            .sum();
        total / n as f64
    }
    #[cfg(not(feature = "parallel"))]
    {
        empirical_mae_sequential(truth, noise, n, rng_seed)
    }
}

/// Sequential twin of [`empirical_mae`]; same seeds, same result.
pub fn empirical_mae_sequential(
    truth: f64,
    noise: &EstimatorNoiseModel,
    n: usize,
    rng_seed: u64,
) -> f64 {
    let total: f64 = (0..n)
        .map(|i| (synthetic_estimate(truth, noise, stream_seed(rng_seed, i)) - truth).abs())
        .sum();
    total / n as f64
}

/// Derive a per-index seed from a base seed (splitmix64 step).
pub fn stream_seed(base: u64, index: usize) -> u64 {
    let mut z = base
        .wrapping_add((index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Paired estimate/firmware/truth record for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowObservation {
    /// Physically observed flow percent (the plant's output).
    pub truth: f64,
    /// Process-expert estimate of the truth.
    pub estimate: f64,
    /// The printer's internally stored multiplier (its belief).
    pub firmware: f64,
}

impl FlowObservation {
    pub fn new(truth: f64, estimate: f64, firmware: f64) -> Result<Self, PerceptionError> {
        for v in [truth, estimate, firmware] {
            if !(v > 0.0) {
                return Err(PerceptionError::NonPositiveValue(v));
            }
        }
        Ok(Self {
            truth,
            estimate,
            firmware,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn classify_thresholds() {
        assert_eq!(classify_flow(85.0).unwrap(), QualitativeClass::UnderExtrusion);
        assert_eq!(classify_flow(100.0).unwrap(), QualitativeClass::GoodExtrusion);
        assert_eq!(classify_flow(115.0).unwrap(), QualitativeClass::OverExtrusion);
        // Boundary values are good by the closed-interval decision.
        assert_eq!(classify_flow(90.0).unwrap(), QualitativeClass::GoodExtrusion);
        assert_eq!(classify_flow(110.0).unwrap(), QualitativeClass::GoodExtrusion);
        assert!(classify_flow(0.0).is_err());
        assert!(classify_flow(-5.0).is_err());
    }

    #[test]
    fn classify_monotone() {
        let mut prev = classify_flow(1.0).unwrap();
        for i in 1..=3000 {
            let class = classify_flow(i as f64 * 0.1).unwrap();
            assert!(class >= prev);
            prev = class;
        }
    }

    #[test]
    fn strict_rule() {
        assert_eq!(classify_flow_strict(99.9).unwrap(), QualitativeClass::UnderExtrusion);
        assert_eq!(classify_flow_strict(100.0).unwrap(), QualitativeClass::GoodExtrusion);
        assert_eq!(classify_flow_strict(100.1).unwrap(), QualitativeClass::OverExtrusion);
    }

    #[test]
    fn caption_over_extrusion_at_300() {
        let caption = synthesize_caption(300.0, None, 7).unwrap();
        assert_eq!(
            extract_qualitative_class(&caption.qualitative).unwrap(),
            QualitativeClass::OverExtrusion
        );
        assert_eq!(extract_flow_value(&caption.quantitative).unwrap(), 300.0);
    }

    #[test]
    fn caption_deterministic() {
        let a = synthesize_caption(95.5, None, 42).unwrap();
        let b = synthesize_caption(95.5, None, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn caption_inverse_over_seeds_and_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..250 {
            let value = rng.gen_range(30.0..=300.0);
            let seed = rng.gen::<u64>();
            let caption = synthesize_caption(value, None, seed).unwrap();
            let text = caption.full_text();
            assert_eq!(extract_flow_value(&text).unwrap(), value, "text: {text}");
            assert_eq!(
                extract_qualitative_class(&text).unwrap(),
                classify_flow(value).unwrap(),
                "text: {text}"
            );
            assert!(alignment_check(value, &text).unwrap());
        }
    }

    #[test]
    fn class_override_controls_qualitative_sentence() {
        let caption =
            synthesize_caption(100.0, Some(QualitativeClass::OverExtrusion), 3).unwrap();
        assert_eq!(
            extract_qualitative_class(&caption.qualitative).unwrap(),
            QualitativeClass::OverExtrusion
        );
        assert_eq!(alignment_check(100.0, &caption.full_text()).unwrap(), false);
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(
            extract_flow_value("The flow rate is currently set at 300%.").unwrap(),
            300.0
        );
        assert_eq!(extract_flow_value("flow rate of 92.5 percent").unwrap(), 92.5);
        assert_eq!(
            extract_flow_value("no numbers here").unwrap_err(),
            PerceptionError::NoExtractableValue
        );
    }

    #[test]
    fn class_extraction_examples() {
        assert_eq!(
            extract_qualitative_class("material is over-extruding").unwrap(),
            QualitativeClass::OverExtrusion
        );
        assert_eq!(
            extract_qualitative_class("under-extrusion detected").unwrap(),
            QualitativeClass::UnderExtrusion
        );
        assert_eq!(
            extract_qualitative_class("both under-extrusion and over-extrusion").unwrap_err(),
            PerceptionError::AmbiguousClassMention
        );
        assert_eq!(
            extract_qualitative_class("nothing at all").unwrap_err(),
            PerceptionError::NoClassMention
        );
    }

    #[test]
    fn alignment_examples() {
        assert!(alignment_check(80.0, "clear under-extrusion here").unwrap());
        assert!(!alignment_check(80.0, "clear over-extrusion here").unwrap());
    }

    #[test]
    fn codec_anchors() {
        assert_relative_eq!(encode_log(30.0).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(encode_log(300.0).unwrap(), 1.0, epsilon = 1e-12);
        // Geometric mean of the anchors maps to 0.
        assert!(encode_log(94.8683).unwrap().abs() < 1e-4);
        assert!(encode_log(0.0).is_err());
    }

    #[test]
    fn codec_bijective() {
        for i in 0..=1000 {
            let v = 30.0 + (300.0 - 30.0) * i as f64 / 1000.0;
            let round = decode_log(encode_log(v).unwrap());
            assert!(((round - v) / v).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_noise_estimate_is_truth() {
        assert_eq!(synthetic_estimate(137.5, &EstimatorNoiseModel::zero(), 5), 137.5);
    }

    #[test]
    fn estimate_deterministic_per_seed() {
        let noise = EstimatorNoiseModel::default();
        assert_eq!(
            synthetic_estimate(100.0, &noise, 11),
            synthetic_estimate(100.0, &noise, 11)
        );
        assert_ne!(
            synthetic_estimate(100.0, &noise, 11),
            synthetic_estimate(100.0, &noise, 12)
        );
    }

    #[test]
    fn estimate_clamped() {
        let noise = EstimatorNoiseModel::default().with_mae(500.0);
        for seed in 0..200 {
            let estimate = synthetic_estimate(30.0, &noise, seed);
            assert!((ESTIMATE_MIN..=ESTIMATE_MAX).contains(&estimate));
        }
    }

    #[test]
    fn calibration_ten_thousand_draws() {
        let noise = EstimatorNoiseModel::default();
        let mae = empirical_mae(100.0, &noise, 10_000, 1234);
        assert!(
            (mae - 17.52).abs() / 17.52 < 0.05,
            "empirical MAE {mae} not within 5% of 17.52"
        );
    }

    #[test]
    fn calibration_uniform_distribution() {
        let noise = EstimatorNoiseModel {
            distribution: NoiseDistribution::Uniform,
            target_mae: 17.52,
            dispersion: 28.89,
        };
        let mae = empirical_mae(100.0, &noise, 20_000, 77);
        assert!((mae - 17.52).abs() / 17.52 < 0.05);
    }

    #[test]
    fn parallel_and_sequential_mae_agree() {
        let noise = EstimatorNoiseModel::default();
        let par = empirical_mae(100.0, &noise, 5_000, 42);
        let seq = empirical_mae_sequential(100.0, &noise, 5_000, 42);
        assert_relative_eq!(par, seq, epsilon = 1e-9);
    }

    #[test]
    fn observation_requires_positive_fields() {
        assert!(FlowObservation::new(100.0, 90.0, 105.0).is_ok());
        assert!(FlowObservation::new(0.0, 90.0, 105.0).is_err());
    }

    #[test]
    fn builtin_templates_validate() {
        TemplatePools::builtin().validate().unwrap();
    }

    #[test]
    fn short_template_pool_rejected() {
        let pools = TemplatePools {
            general: vec!["a".into()],
            quantitative: vec!["{value}%".into(); 5],
            qualitative: QualitativePools {
                under: vec!["under-extrusion".into(); 5],
                good: vec!["good extrusion".into(); 5],
                over: vec!["over-extrusion".into(); 5],
            },
        };
        assert!(matches!(
            pools.validate(),
            Err(PerceptionError::BadTemplatePool(_))
        ));
    }
}
