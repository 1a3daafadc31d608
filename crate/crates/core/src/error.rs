use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::scenario::Violation;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// The scenario breaks one or more model assumptions.
    Invalid(Vec<Violation>),
    /// The operation needs a different uncertainty set or utility kind.
    WrongVariant(&'static str),
    /// Optimal consumption is zero where the utility of zero is minus infinity.
    UnboundedBelow,
    /// A closed form was evaluated outside its domain; this is a bug.
    BranchSelection(String),
    /// A root finder was handed an interval without a sign change.
    NoBracket { lo: f64, hi: f64 },
    /// The compact-exhaustion loop of the grid oracle did not settle.
    ExhaustionDiverged,
    /// The non-monotonicity demonstration needs parameters it was not given.
    Precondition(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(v) => {
                f.write_str("invalid scenario: ")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str("; ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            Error::WrongVariant(what) => write!(f, "operation requires {what}"),
            Error::UnboundedBelow => {
                f.write_str("optimal consumption is 0 where utility of 0 is -inf; raise c_lo")
            }
            Error::BranchSelection(msg) => write!(f, "closed form left its domain: {msg}"),
            Error::NoBracket { lo, hi } => write!(f, "no sign change on [{lo}, {hi}]"),
            Error::ExhaustionDiverged => {
                f.write_str("grid argmax did not settle within the node budget")
            }
            Error::Precondition(msg) => write!(f, "precondition unmet: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
