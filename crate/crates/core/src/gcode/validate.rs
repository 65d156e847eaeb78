//! Native static validation of programs against the dialect and a codebook:
//! unknown commands, out-of-dialect parameters, missing required parameters,
//! non-finite values, and non-monotone layer Z.

use super::{Codebook, CommandLetter, GcodeCommand, GcodeProgram, ParamLetter};
use serde::Serialize;

/// Per-command parameter contract for the supported dialect.
pub(crate) struct DialectEntry {
    pub name: &'static str,
    pub allowed: &'static [ParamLetter],
    pub required: &'static [ParamLetter],
}

use ParamLetter::{E, F, S, X, Y, Z};

pub(crate) const DIALECT: [DialectEntry; 9] = [
    DialectEntry { name: "G0", allowed: &[X, Y, Z, E, F], required: &[] },
    DialectEntry { name: "G1", allowed: &[X, Y, Z, E, F], required: &[] },
    DialectEntry { name: "G28", allowed: &[], required: &[] },
    DialectEntry { name: "G92", allowed: &[X, Y, Z, E], required: &[] },
    DialectEntry { name: "M104", allowed: &[S], required: &[S] },
    DialectEntry { name: "M106", allowed: &[S], required: &[] },
    DialectEntry { name: "M109", allowed: &[S], required: &[S] },
    DialectEntry { name: "M220", allowed: &[S], required: &[S] },
    DialectEntry { name: "M221", allowed: &[S], required: &[S] },
];

pub(crate) fn dialect_entry(name: &str) -> Option<&'static DialectEntry> {
    DIALECT.iter().find(|entry| entry.name == name)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IssueKind {
    UnknownCommand,
    OutOfDialectParameter(char),
    MissingRequiredParameter(char),
    NonFiniteValue(char),
    NonMonotonicZ { z: f64, prev: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    /// 0-based index into the program's command sequence.
    pub index: usize,
    pub command: String,
    pub kind: IssueKind,
}

/// Outcome of static validation. `ok()` iff no issues of any kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn unknown_commands(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues
            .iter()
            .filter(|i| matches!(i.kind, IssueKind::UnknownCommand))
    }

    pub fn parameter_issues(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| {
            matches!(
                i.kind,
                IssueKind::OutOfDialectParameter(_) | IssueKind::MissingRequiredParameter(_)
            )
        })
    }

    pub fn value_issues(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues
            .iter()
            .filter(|i| matches!(i.kind, IssueKind::NonFiniteValue(_)))
    }

    pub fn motion_issues(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues
            .iter()
            .filter(|i| matches!(i.kind, IssueKind::NonMonotonicZ { .. }))
    }
}

fn check_params(index: usize, cmd: &GcodeCommand, entry: &DialectEntry, report: &mut ValidationReport) {
    for (letter, _) in cmd.params() {
        if !entry.allowed.contains(&letter) {
            report.issues.push(ValidationIssue {
                index,
                command: cmd.name(),
                kind: IssueKind::OutOfDialectParameter(letter.as_char()),
            });
        }
    }
    for letter in entry.required {
        if cmd.param(*letter).is_none() {
            report.issues.push(ValidationIssue {
                index,
                command: cmd.name(),
                kind: IssueKind::MissingRequiredParameter(letter.as_char()),
            });
        }
    }
}

/// Statically validate a program: every command must be in the dialect or in
/// the codebook, dialect commands must respect their parameter contracts,
/// all values must be finite, and explicit Z moves must be nonnegative and
/// non-decreasing (G28/G92 rebase the tracker).
pub fn validate_program(program: &GcodeProgram, codebook: &Codebook) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut last_z: f64 = 0.0;

    for (index, cmd) in program.commands.iter().enumerate() {
        let name = cmd.name();

        for (letter, value) in cmd.params() {
            if !value.is_finite() {
                report.issues.push(ValidationIssue {
                    index,
                    command: name.clone(),
                    kind: IssueKind::NonFiniteValue(letter.as_char()),
                });
            }
        }

        match dialect_entry(&name) {
            Some(entry) => check_params(index, cmd, entry, &mut report),
            None => {
                if !codebook.contains(&name) {
                    report.issues.push(ValidationIssue {
                        index,
                        command: name.clone(),
                        kind: IssueKind::UnknownCommand,
                    });
                }
            }
        }

        match (cmd.letter, cmd.number) {
            (CommandLetter::G, 28) => last_z = 0.0,
            (CommandLetter::G, 92) => {
                if let Some(z) = cmd.param(ParamLetter::Z) {
                    last_z = z;
                }
            }
            (CommandLetter::G, 0 | 1) => {
                if let Some(z) = cmd.param(ParamLetter::Z) {
                    if z.is_finite() && (z < 0.0 || z < last_z) {
                        report.issues.push(ValidationIssue {
                            index,
                            command: name.clone(),
                            kind: IssueKind::NonMonotonicZ { z, prev: last_z },
                        });
                    }
                    if z.is_finite() {
                        last_z = z;
                    }
                }
            }
            _ => {}
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::{parse_codebook, parse_program};

    fn codebook_without_m999() -> Codebook {
        parse_codebook(r#"{"M221": {"brief": "Set flow percentage"}}"#)
            .unwrap()
            .0
    }

    #[test]
    fn known_program_is_ok() {
        let prog = parse_program("G28\nM104 S210\nG1 X10 Y10 Z0.2 E0.5\nM221 S100\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        assert!(report.ok(), "unexpected issues: {:?}", report.issues);
    }

    #[test]
    fn unknown_command_reported() {
        let prog = parse_program("M999\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        assert_eq!(report.unknown_commands().count(), 1);
        assert!(!report.ok());
    }

    #[test]
    fn codebook_vouches_for_non_dialect_command() {
        let cb = parse_codebook(r#"{"M500": {"brief": "Save settings"}}"#).unwrap().0;
        let prog = parse_program("M500\n", "t").unwrap();
        assert!(validate_program(&prog, &cb).ok());
    }

    #[test]
    fn missing_required_parameter_reported() {
        let prog = parse_program("M221\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        let issue = report.parameter_issues().next().expect("issue expected");
        assert_eq!(issue.kind, IssueKind::MissingRequiredParameter('S'));
    }

    #[test]
    fn out_of_dialect_parameter_reported() {
        let prog = parse_program("G28 X5\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        let issue = report.parameter_issues().next().expect("issue expected");
        assert_eq!(issue.kind, IssueKind::OutOfDialectParameter('X'));
    }

    #[test]
    fn decreasing_z_reported() {
        let prog = parse_program("G1 Z1.0\nG1 Z0.5\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        assert_eq!(report.motion_issues().count(), 1);
    }

    #[test]
    fn g92_rebases_z_tracker() {
        let prog = parse_program("G1 Z5.0\nG92 Z0\nG1 Z0.2\n", "t").unwrap();
        let report = validate_program(&prog, &codebook_without_m999());
        assert!(report.ok(), "unexpected issues: {:?}", report.issues);
    }

    #[test]
    fn non_finite_value_reported() {
        use crate::gcode::{CommandLetter, GcodeCommand, GcodeProgram, ParamLetter};
        let mut prog = GcodeProgram::new("t");
        prog.commands
            .push(GcodeCommand::new(CommandLetter::G, 1).with_param(ParamLetter::X, f64::NAN));
        let report = validate_program(&prog, &codebook_without_m999());
        assert_eq!(report.value_issues().count(), 1);
    }

    #[test]
    fn determinism() {
        let prog = parse_program("M999\nG1 Z1\nG1 Z0.5\n", "t").unwrap();
        let cb = codebook_without_m999();
        assert_eq!(validate_program(&prog, &cb), validate_program(&prog, &cb));
    }
}
