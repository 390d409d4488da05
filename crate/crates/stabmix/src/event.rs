//! Trajectory event logs: the ordered record of every channel application,
//! serialized as line-delimited text so a trajectory can be replayed against
//! the dense oracle or stored as a test fixture.
//!
//! ```text
//! GATE 0 1 +XI -ZY +IX +IZ
//! MEASURE 3 0
//! RESET 2
//! ```
//!
//! A `GATE` line carries the four conjugation images (of X0, Z0, X1, Z1) as
//! signed two-letter Pauli words, first letter = first gate site.

use std::fmt::Write as _;

use thiserror::Error;

use crate::gate::{CliffordGate, TwoQubitPauli};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Gate { i: usize, j: usize, gate: CliffordGate },
    Measure { site: usize, outcome: bool },
    Reset { site: usize },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventParseError {
    #[error("line {line}: unknown record {word:?}")]
    UnknownRecord { line: usize, word: String },
    #[error("line {line}: expected {want} fields, got {got}")]
    FieldCount { line: usize, want: usize, got: usize },
    #[error("line {line}: bad integer field {field:?}")]
    BadInt { line: usize, field: String },
    #[error("line {line}: bad outcome {field:?} (want 0 or 1)")]
    BadOutcome { line: usize, field: String },
    #[error("line {line}: bad pauli image {field:?}: {why}")]
    BadImage { line: usize, field: String, why: String },
    #[error("line {line}: images are not a valid Clifford gate")]
    BadGate { line: usize },
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match e {
                Event::Gate { i, j, gate } => {
                    write!(out, "GATE {i} {j}").unwrap();
                    for img in gate.images() {
                        write!(out, " {}", img.to_pauli_string()).unwrap();
                    }
                    out.push('\n');
                }
                Event::Measure { site, outcome } => {
                    writeln!(out, "MEASURE {site} {}", *outcome as u8).unwrap();
                }
                Event::Reset { site } => {
                    writeln!(out, "RESET {site}").unwrap();
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, EventParseError> {
        let mut log = EventLog::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            let int = |field: &str| -> Result<usize, EventParseError> {
                field
                    .parse()
                    .map_err(|_| EventParseError::BadInt { line, field: field.into() })
            };
            match fields[0] {
                "GATE" => {
                    if fields.len() != 7 {
                        return Err(EventParseError::FieldCount {
                            line,
                            want: 7,
                            got: fields.len(),
                        });
                    }
                    let i = int(fields[1])?;
                    let j = int(fields[2])?;
                    let mut images = [TwoQubitPauli::identity(); 4];
                    for (k, field) in fields[3..7].iter().enumerate() {
                        let p = field.parse::<crate::pauli::PauliString>().map_err(|e| {
                            EventParseError::BadImage {
                                line,
                                field: field.to_string(),
                                why: e.to_string(),
                            }
                        })?;
                        if p.n_sites() != 2 {
                            return Err(EventParseError::BadImage {
                                line,
                                field: field.to_string(),
                                why: "image must act on exactly two sites".into(),
                            });
                        }
                        images[k] = TwoQubitPauli::from_pauli_string(&p);
                    }
                    let gate = CliffordGate::from_images(images)
                        .map_err(|_| EventParseError::BadGate { line })?;
                    log.push(Event::Gate { i, j, gate });
                }
                "MEASURE" => {
                    if fields.len() != 3 {
                        return Err(EventParseError::FieldCount {
                            line,
                            want: 3,
                            got: fields.len(),
                        });
                    }
                    let outcome = match fields[2] {
                        "0" => false,
                        "1" => true,
                        other => {
                            return Err(EventParseError::BadOutcome {
                                line,
                                field: other.into(),
                            })
                        }
                    };
                    log.push(Event::Measure { site: int(fields[1])?, outcome });
                }
                "RESET" => {
                    if fields.len() != 2 {
                        return Err(EventParseError::FieldCount {
                            line,
                            want: 2,
                            got: fields.len(),
                        });
                    }
                    log.push(Event::Reset { site: int(fields[1])? });
                }
                other => {
                    return Err(EventParseError::UnknownRecord { line, word: other.into() })
                }
            }
        }
        Ok(log)
    }
}
