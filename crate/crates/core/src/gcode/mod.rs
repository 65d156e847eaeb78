//! Marlin-subset G-code front end: parsing, canonical serialization, static
//! validation, and the command codebook loaded from firmware documentation.
//!
//! The supported dialect is fixed to the commands a flow-control agent
//! actually emits: `G0`, `G1`, `G28`, `G92`, `M104`, `M106`, `M109`, `M220`,
//! `M221`. Anything else is accepted by the parser but flagged by
//! [`validate_program`] unless a [`Codebook`] entry vouches for it.

mod codebook;
mod parse;
mod validate;

pub use codebook::{load_codebook, parse_codebook, Codebook, CodebookError, CommandDescriptor};
pub use parse::{parse_line, parse_program, ParseError, ParsedLine};
pub use validate::{validate_program, IssueKind, ValidationIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Command letter of a G-code word. Only motion (`G`) and machine (`M`)
/// words are in the dialect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandLetter {
    G,
    M,
}

impl fmt::Display for CommandLetter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandLetter::G => write!(f, "G"),
            CommandLetter::M => write!(f, "M"),
        }
    }
}

/// Parameter letters admitted by the dialect, in canonical serialization
/// order.
pub const PARAM_ORDER: [ParamLetter; 8] = [
    ParamLetter::X,
    ParamLetter::Y,
    ParamLetter::Z,
    ParamLetter::E,
    ParamLetter::F,
    ParamLetter::S,
    ParamLetter::T,
    ParamLetter::P,
];

/// A parameter letter. Serialization always orders parameters X, Y, Z, E,
/// F, S, T, P so that emitted programs diff deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamLetter {
    X,
    Y,
    Z,
    E,
    F,
    S,
    T,
    P,
}

impl ParamLetter {
    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'X' => Some(Self::X),
            'Y' => Some(Self::Y),
            'Z' => Some(Self::Z),
            'E' => Some(Self::E),
            'F' => Some(Self::F),
            'S' => Some(Self::S),
            'T' => Some(Self::T),
            'P' => Some(Self::P),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Self::X => 'X',
            Self::Y => 'Y',
            Self::Z => 'Z',
            Self::E => 'E',
            Self::F => 'F',
            Self::S => 'S',
            Self::T => 'T',
            Self::P => 'P',
        }
    }

    fn canonical_rank(self) -> usize {
        PARAM_ORDER.iter().position(|&l| l == self).unwrap()
    }
}

/// One parsed machine instruction: letter, code number, parameters, and an
/// optional trailing comment.
///
/// Parameters are stored in canonical order regardless of source order, so
/// two commands compare equal whenever they mean the same thing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcodeCommand {
    pub letter: CommandLetter,
    pub number: u32,
    params: Vec<(ParamLetter, f64)>,
    pub comment: Option<String>,
}

impl GcodeCommand {
    pub fn new(letter: CommandLetter, number: u32) -> Self {
        Self {
            letter,
            number,
            params: Vec::new(),
            comment: None,
        }
    }

    /// Builder-style parameter insertion; replaces an existing letter.
    pub fn with_param(mut self, letter: ParamLetter, value: f64) -> Self {
        self.set_param(letter, value);
        self
    }

    pub fn with_comment(mut self, text: impl Into<String>) -> Self {
        self.comment = Some(text.into());
        self
    }

    pub fn set_param(&mut self, letter: ParamLetter, value: f64) {
        match self.params.iter_mut().find(|(l, _)| *l == letter) {
            Some(slot) => slot.1 = value,
            None => {
                self.params.push((letter, value));
                self.params
                    .sort_by_key(|(l, _)| l.canonical_rank());
            }
        }
    }

    pub fn param(&self, letter: ParamLetter) -> Option<f64> {
        self.params
            .iter()
            .find(|(l, _)| *l == letter)
            .map(|(_, v)| *v)
    }

    /// Parameters in canonical order.
    pub fn params(&self) -> impl Iterator<Item = (ParamLetter, f64)> + '_ {
        self.params.iter().copied()
    }

    /// Command name as it appears in documentation, e.g. `"M221"`.
    pub fn name(&self) -> String {
        format!("{}{}", self.letter, self.number)
    }

    /// Canonical single-line form, without any comment.
    pub fn serialize_bare(&self) -> String {
        let mut out = self.name();
        for (letter, value) in &self.params {
            out.push(' ');
            out.push(letter.as_char());
            out.push_str(&format_value(*value));
        }
        out
    }
}

impl fmt::Display for GcodeCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serialize_command(self))
    }
}

/// Canonical text form of a command: `L<number> <P><value>...` with
/// parameters in canonical order and reals printed with minimal digits.
pub fn serialize_command(cmd: &GcodeCommand) -> String {
    let mut out = cmd.serialize_bare();
    if let Some(comment) = &cmd.comment {
        out.push_str(" ; ");
        out.push_str(comment);
    }
    out
}

/// Shortest decimal form that parses back to the identical f64.
fn format_value(v: f64) -> String {
    // Rust's Display for f64 is shortest-round-trip, which is exactly the
    // "minimal digits" canonical form.
    format!("{v}")
}

/// An ordered sequence of commands parsed from one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcodeProgram {
    pub commands: Vec<GcodeCommand>,
    pub source_name: String,
}

impl GcodeProgram {
    pub fn new(source_name: impl Into<String>) -> Self {
        Self {
            commands: Vec::new(),
            source_name: source_name.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    /// Canonical text of the whole program, one command per line.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for cmd in &self.commands {
            out.push_str(&serialize_command(cmd));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_store_in_canonical_order() {
        let cmd = GcodeCommand::new(CommandLetter::G, 1)
            .with_param(ParamLetter::E, 1.0)
            .with_param(ParamLetter::X, 2.0);
        let letters: Vec<char> = cmd.params().map(|(l, _)| l.as_char()).collect();
        assert_eq!(letters, vec!['X', 'E']);
    }

    #[test]
    fn serialize_minimal_digits() {
        let cmd = GcodeCommand::new(CommandLetter::M, 221).with_param(ParamLetter::S, 50.0);
        assert_eq!(serialize_command(&cmd), "M221 S50");
    }

    #[test]
    fn serialize_no_params() {
        let cmd = GcodeCommand::new(CommandLetter::G, 1);
        assert_eq!(serialize_command(&cmd), "G1");
    }

    #[test]
    fn set_param_replaces() {
        let mut cmd = GcodeCommand::new(CommandLetter::M, 221).with_param(ParamLetter::S, 50.0);
        cmd.set_param(ParamLetter::S, 80.0);
        assert_eq!(cmd.param(ParamLetter::S), Some(80.0));
        assert_eq!(cmd.params().count(), 1);
    }
}
