//! Deterministic firmware state machine standing in for the physical
//! printer.
//!
//! The plant model is a single multiplicative gain: the flow an outside
//! observer (camera, estimator) would measure is
//! `flow_multiplier * plant_gain`. The gain is hidden state; firmware-facing
//! snapshots never expose it.

use crate::gcode::{CommandLetter, GcodeCommand, GcodeProgram, ParamLetter};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrinterError {
    #[error("invalid printer config: {0}")]
    InvalidConfig(String),
    #[error("{0} requires S > 0, got {1}")]
    NonPositiveMultiplier(String, f64),
    #[error("move to ({0:.3}, {1:.3}, {2:.3}) leaves the build volume")]
    OutsideBuildVolume(f64, f64, f64),
    #[error("command '{0}' is not in the supported dialect")]
    UnsupportedCommand(String),
    #[error("command '{0}' is missing required parameter {1}")]
    MissingParameter(String, char),
    #[error("no extruding move since the last flow change; observation undefined")]
    NoObservation,
    #[error("command {index}: {source}")]
    AtCommand {
        index: usize,
        #[source]
        source: Box<PrinterError>,
    },
}

/// Static machine description plus the hidden plant parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrinterConfig {
    /// Printable extents in mm; moves outside `[0, max]` on any axis fail.
    pub build_volume: [f64; 3],
    /// Initial flow multiplier percent (M221 value).
    pub initial_flow: f64,
    /// Hidden material efficiency; observed flow = multiplier * gain.
    pub plant_gain: f64,
    /// Hotend approach rate toward its target, in degC per applied command.
    pub thermal_rate: f64,
}

impl Default for PrinterConfig {
    fn default() -> Self {
        Self {
            build_volume: [220.0, 220.0, 250.0],
            initial_flow: 100.0,
            plant_gain: 1.0,
            thermal_rate: 5.0,
        }
    }
}

impl PrinterConfig {
    pub fn with_gain(mut self, gain: f64) -> Self {
        self.plant_gain = gain;
        self
    }

    pub fn with_initial_flow(mut self, flow: f64) -> Self {
        self.initial_flow = flow;
        self
    }

    fn validate(&self) -> Result<(), PrinterError> {
        if self.build_volume.iter().any(|&v| v <= 0.0) {
            return Err(PrinterError::InvalidConfig(
                "build volume components must be > 0".into(),
            ));
        }
        if self.initial_flow <= 0.0 {
            return Err(PrinterError::InvalidConfig("initial_flow must be > 0".into()));
        }
        if self.plant_gain <= 0.0 || !self.plant_gain.is_finite() {
            return Err(PrinterError::InvalidConfig("plant_gain must be finite and > 0".into()));
        }
        Ok(())
    }
}

const AMBIENT_C: f64 = 25.0;

/// Firmware-facing view of the printer; everything except the hidden gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub position: [f64; 3],
    pub flow_multiplier: f64,
    pub feed_multiplier: f64,
    pub hotend_target: f64,
    pub hotend_actual: f64,
    pub fan_pwm: u8,
    pub commanded_e: f64,
    pub effective_e: f64,
}

/// The virtual printer: firmware state plus the hidden plant.
#[derive(Debug, Clone)]
pub struct Printer {
    config: PrinterConfig,
    position: [f64; 3],
    flow_multiplier: f64,
    feed_multiplier: f64,
    hotend_target: f64,
    hotend_actual: f64,
    fan_pwm: u8,
    commanded_e: f64,
    effective_e: f64,
    /// Logical E-axis coordinate (absolute extrusion mode, rebased by G92).
    e_axis: f64,
    extruded_since_flow_change: bool,
}

impl Printer {
    pub fn new(config: PrinterConfig) -> Result<Self, PrinterError> {
        config.validate()?;
        Ok(Self {
            position: [0.0; 3],
            flow_multiplier: config.initial_flow,
            feed_multiplier: 100.0,
            hotend_target: 0.0,
            hotend_actual: AMBIENT_C,
            fan_pwm: 0,
            commanded_e: 0.0,
            effective_e: 0.0,
            e_axis: 0.0,
            extruded_since_flow_change: false,
            config,
        })
    }

    pub fn config(&self) -> &PrinterConfig {
        &self.config
    }

    /// The hidden material efficiency. Experiment hook; firmware-facing
    /// snapshots never carry it.
    pub fn plant_gain(&self) -> f64 {
        self.config.plant_gain
    }

    /// Replace the hidden gain mid-run, e.g. to model material drift
    /// between a correction and the next observation.
    pub fn set_plant_gain(&mut self, gain: f64) -> Result<(), PrinterError> {
        if gain <= 0.0 || !gain.is_finite() {
            return Err(PrinterError::InvalidConfig("plant_gain must be finite and > 0".into()));
        }
        self.config.plant_gain = gain;
        Ok(())
    }

    /// Firmware-facing record; excludes the hidden plant gain.
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            position: self.position,
            flow_multiplier: self.flow_multiplier,
            feed_multiplier: self.feed_multiplier,
            hotend_target: self.hotend_target,
            hotend_actual: self.hotend_actual,
            fan_pwm: self.fan_pwm,
            commanded_e: self.commanded_e,
            effective_e: self.effective_e,
        }
    }

    /// The true effective flow percentage an outside estimator perceives.
    ///
    /// Defined only after an extruding move under the current multiplier.
    pub fn observed_flow(&self) -> Result<f64, PrinterError> {
        if !self.extruded_since_flow_change {
            return Err(PrinterError::NoObservation);
        }
        Ok(self.flow_multiplier * self.config.plant_gain)
    }

    fn require_s(cmd: &GcodeCommand) -> Result<f64, PrinterError> {
        cmd.param(ParamLetter::S)
            .ok_or_else(|| PrinterError::MissingParameter(cmd.name(), 'S'))
    }

    fn thermal_step(&mut self) {
        let goal = if self.hotend_target > 0.0 {
            self.hotend_target
        } else {
            AMBIENT_C
        };
        let delta = goal - self.hotend_actual;
        let step = delta.clamp(-self.config.thermal_rate, self.config.thermal_rate);
        self.hotend_actual += step;
    }

    fn linear_move(&mut self, cmd: &GcodeCommand) -> Result<(), PrinterError> {
        let [x, y, z] = self.position;
        let nx = cmd.param(ParamLetter::X).unwrap_or(x);
        let ny = cmd.param(ParamLetter::Y).unwrap_or(y);
        let nz = cmd.param(ParamLetter::Z).unwrap_or(z);
        let [bx, by, bz] = self.config.build_volume;
        if !(0.0..=bx).contains(&nx) || !(0.0..=by).contains(&ny) || !(0.0..=bz).contains(&nz) {
            return Err(PrinterError::OutsideBuildVolume(nx, ny, nz));
        }
        self.position = [nx, ny, nz];
        if let Some(e_target) = cmd.param(ParamLetter::E) {
            let delta = e_target - self.e_axis;
            self.e_axis = e_target;
            self.commanded_e += delta;
            self.effective_e += delta * self.flow_multiplier / 100.0 * self.config.plant_gain;
            if delta > 0.0 {
                self.extruded_since_flow_change = true;
            }
        }
        Ok(())
    }

    /// Apply one dialect command to the state.
    pub fn apply_command(&mut self, cmd: &GcodeCommand) -> Result<(), PrinterError> {
        self.thermal_step();
        match (cmd.letter, cmd.number) {
            (CommandLetter::G, 0 | 1) => self.linear_move(cmd)?,
            (CommandLetter::G, 28) => self.position = [0.0; 3],
            (CommandLetter::G, 92) => {
                if let Some(x) = cmd.param(ParamLetter::X) {
                    self.position[0] = x;
                }
                if let Some(y) = cmd.param(ParamLetter::Y) {
                    self.position[1] = y;
                }
                if let Some(z) = cmd.param(ParamLetter::Z) {
                    self.position[2] = z;
                }
                if let Some(e) = cmd.param(ParamLetter::E) {
                    self.e_axis = e;
                }
            }
            (CommandLetter::M, 104) => self.hotend_target = Self::require_s(cmd)?,
            (CommandLetter::M, 109) => {
                // Blocking heat-and-wait, settled instantaneously.
                self.hotend_target = Self::require_s(cmd)?;
                self.hotend_actual = self.hotend_target;
            }
            (CommandLetter::M, 106) => {
                let s = cmd.param(ParamLetter::S).unwrap_or(255.0);
                self.fan_pwm = s.round().clamp(0.0, 255.0) as u8;
            }
            (CommandLetter::M, 220) => {
                let s = Self::require_s(cmd)?;
                if s <= 0.0 {
                    return Err(PrinterError::NonPositiveMultiplier("M220".into(), s));
                }
                self.feed_multiplier = s;
            }
            (CommandLetter::M, 221) => {
                let s = Self::require_s(cmd)?;
                if s <= 0.0 {
                    return Err(PrinterError::NonPositiveMultiplier("M221".into(), s));
                }
                self.flow_multiplier = s;
                self.extruded_since_flow_change = false;
            }
            _ => return Err(PrinterError::UnsupportedCommand(cmd.name())),
        }
        Ok(())
    }

    /// Apply a whole program, returning one snapshot per command. A failure
    /// aborts with the index of the offending command.
    pub fn run_program(&mut self, program: &GcodeProgram) -> Result<Vec<Snapshot>, PrinterError> {
        let mut trace = Vec::with_capacity(program.len());
        for (index, cmd) in program.commands.iter().enumerate() {
            self.apply_command(cmd).map_err(|source| PrinterError::AtCommand {
                index,
                source: Box::new(source),
            })?;
            trace.push(self.snapshot());
        }
        Ok(trace)
    }
}
