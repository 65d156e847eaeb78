//! Line-oriented parser for the Marlin-subset dialect.
//!
//! One physical line is one of: a command, a blank line, or a comment-only
//! line. Text after `;` is captured as a comment. Checksummed wire-protocol
//! lines (`N.. *..`) are out of scope.

use super::{CommandLetter, GcodeCommand, GcodeProgram, ParamLetter};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown leading letter '{0}'")]
    UnknownLeadingLetter(char),
    #[error("missing or malformed command number in '{0}'")]
    MalformedCommandNumber(String),
    #[error("malformed parameter '{0}' (non-numeric value)")]
    MalformedParameter(String),
    #[error("unknown parameter letter '{0}'")]
    UnknownParameterLetter(char),
    #[error("duplicate parameter letter '{0}'")]
    DuplicateParameter(char),
    #[error("non-finite value for parameter '{0}'")]
    NonFiniteValue(char),
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ParseError>,
    },
}

/// Classification of one physical source line.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedLine {
    Command(GcodeCommand),
    Blank,
    /// Comment-only line; the text after `;`, trimmed.
    Comment(String),
}

/// Parse one physical line.
///
/// Letters are case-insensitive and normalized to upper case. The comment
/// text (everything after the first `;`) is trimmed.
pub fn parse_line(line: &str) -> Result<ParsedLine, ParseError> {
    let (code, comment) = match line.find(';') {
        Some(pos) => (&line[..pos], Some(line[pos + 1..].trim().to_string())),
        None => (line, None),
    };
    let code = code.trim();
    if code.is_empty() {
        return Ok(match comment {
            Some(text) => ParsedLine::Comment(text),
            None => ParsedLine::Blank,
        });
    }

    let mut words = code.split_whitespace();
    let head = words.next().expect("non-empty code segment");
    let mut head_chars = head.chars();
    let lead = head_chars.next().expect("non-empty word");
    let letter = match lead.to_ascii_uppercase() {
        'G' => CommandLetter::G,
        'M' => CommandLetter::M,
        other => return Err(ParseError::UnknownLeadingLetter(other)),
    };
    let digits = head_chars.as_str();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseError::MalformedCommandNumber(head.to_string()));
    }
    let number: u32 = digits
        .parse()
        .map_err(|_| ParseError::MalformedCommandNumber(head.to_string()))?;

    let mut cmd = GcodeCommand::new(letter, number);
    for word in words {
        let mut chars = word.chars();
        let raw_letter = chars.next().expect("split_whitespace yields non-empty");
        let letter = ParamLetter::from_char(raw_letter)
            .ok_or(ParseError::UnknownParameterLetter(raw_letter.to_ascii_uppercase()))?;
        let value_text = chars.as_str();
        if value_text.is_empty() {
            return Err(ParseError::MalformedParameter(word.to_string()));
        }
        let value: f64 = value_text
            .parse()
            .map_err(|_| ParseError::MalformedParameter(word.to_string()))?;
        if !value.is_finite() {
            return Err(ParseError::NonFiniteValue(letter.as_char()));
        }
        if cmd.param(letter).is_some() {
            return Err(ParseError::DuplicateParameter(letter.as_char()));
        }
        cmd.set_param(letter, value);
    }
    cmd.comment = comment.filter(|c| !c.is_empty());
    Ok(ParsedLine::Command(cmd))
}

/// Parse a newline-delimited program. Blank and comment-only lines are
/// dropped from the command sequence; the first failure is reported with
/// its 1-based line number.
pub fn parse_program(text: &str, source_name: &str) -> Result<GcodeProgram, ParseError> {
    let mut program = GcodeProgram::new(source_name);
    for (idx, line) in text.lines().enumerate() {
        match parse_line(line) {
            Ok(ParsedLine::Command(cmd)) => program.commands.push(cmd),
            Ok(_) => {}
            Err(source) => {
                return Err(ParseError::AtLine {
                    line: idx + 1,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::serialize_command;

    #[test]
    fn parses_flow_command() {
        let parsed = parse_line("M221 S50").unwrap();
        match parsed {
            ParsedLine::Command(cmd) => {
                assert_eq!(cmd.letter, CommandLetter::M);
                assert_eq!(cmd.number, 221);
                assert_eq!(cmd.param(ParamLetter::S), Some(50.0));
                assert!(cmd.comment.is_none());
            }
            other => panic!("expected command, got {other:?}"),
        }
    }

    #[test]
    fn empty_line_is_blank() {
        assert_eq!(parse_line("").unwrap(), ParsedLine::Blank);
        assert_eq!(parse_line("   ").unwrap(), ParsedLine::Blank);
    }

    #[test]
    fn comment_only_line() {
        assert_eq!(
            parse_line("; layer 3").unwrap(),
            ParsedLine::Comment("layer 3".to_string())
        );
    }

    #[test]
    fn move_with_comment_round_trips() {
        let parsed = parse_line("G1 X10.0 E0.3326 ; wall").unwrap();
        let cmd = match parsed {
            ParsedLine::Command(cmd) => cmd,
            other => panic!("expected command, got {other:?}"),
        };
        assert_eq!(cmd.param(ParamLetter::X), Some(10.0));
        assert_eq!(cmd.param(ParamLetter::E), Some(0.3326));
        assert_eq!(cmd.comment.as_deref(), Some("wall"));

        let text = serialize_command(&cmd);
        let reparsed = match parse_line(&text).unwrap() {
            ParsedLine::Command(cmd) => cmd,
            other => panic!("expected command, got {other:?}"),
        };
        assert_eq!(reparsed, cmd);
    }

    #[test]
    fn lowercase_normalizes() {
        let parsed = parse_line("g1 x5 e0.2").unwrap();
        match parsed {
            ParsedLine::Command(cmd) => {
                assert_eq!(cmd.name(), "G1");
                assert_eq!(cmd.param(ParamLetter::X), Some(5.0));
            }
            other => panic!("expected command, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_leading_letter() {
        assert_eq!(
            parse_line("T0").unwrap_err(),
            ParseError::UnknownLeadingLetter('T')
        );
    }

    #[test]
    fn rejects_duplicate_parameter() {
        assert_eq!(
            parse_line("G1 X1 X2").unwrap_err(),
            ParseError::DuplicateParameter('X')
        );
    }

    #[test]
    fn rejects_non_numeric_parameter() {
        assert_eq!(
            parse_line("M221 Sfifty").unwrap_err(),
            ParseError::MalformedParameter("Sfifty".to_string())
        );
    }

    #[test]
    fn rejects_non_finite_parameter() {
        assert_eq!(
            parse_line("G1 X1e999").unwrap_err(),
            ParseError::NonFiniteValue('X')
        );
    }

    #[test]
    fn program_counts_commands_and_drops_blanks() {
        let prog = parse_program("M221 S100\n\n; preamble\nG1 E10\n", "test").unwrap();
        assert_eq!(prog.len(), 2);
        assert_eq!(prog.commands[0].name(), "M221");
        assert_eq!(prog.commands[1].name(), "G1");
    }

    #[test]
    fn program_error_cites_line() {
        let err = parse_program("M221 S100\nG1 E10\nQ5 nope\n", "test").unwrap_err();
        match err {
            ParseError::AtLine { line, .. } => assert_eq!(line, 3),
            other => panic!("expected line error, got {other:?}"),
        }
    }
}
