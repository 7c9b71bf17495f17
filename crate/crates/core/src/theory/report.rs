use std::fmt;

use crate::error::{Error, Result};

/// Additive slack credited to bound claims for floating-point noise.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimKind {
    /// `lhs ≤ rhs` must hold (with [`BOUND_TOLERANCE`]).
    Bound,
    /// `lhs > rhs` strictly; no tolerance credit.
    Violation,
    /// Informational comparison; `holds` records `lhs ≤ rhs` but nothing is asserted.
    Diagnostic,
}

/// One evaluated claim.
///
/// Serialized as one tab-separated line:
/// `claim  inputs_digest  lhs  rhs  holds  margin`. Floats use Rust's shortest
/// round-trip formatting, `holds` is `true`/`false`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub claim: String,
    pub inputs_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `rhs − lhs` for bounds and diagnostics, `lhs − rhs` for violations.
    pub margin: f64,
    pub kind: ClaimKind,
}

pub const RECORD_HEADER: &str = "# claim\tinputs_digest\tlhs\trhs\tholds\tmargin";

impl TheoryReport {
    pub fn bound(claim: impl Into<String>, digest: String, lhs: f64, rhs: f64) -> Self {
        TheoryReport {
            claim: claim.into(),
            inputs_digest: digest,
            lhs,
            rhs,
            holds: lhs <= rhs + BOUND_TOLERANCE,
            margin: rhs - lhs,
            kind: ClaimKind::Bound,
        }
    }

    pub fn violation(claim: impl Into<String>, digest: String, lhs: f64, rhs: f64) -> Self {
        TheoryReport {
            claim: claim.into(),
            inputs_digest: digest,
            lhs,
            rhs,
            holds: lhs > rhs,
            margin: lhs - rhs,
            kind: ClaimKind::Violation,
        }
    }

    pub fn diagnostic(claim: impl Into<String>, digest: String, lhs: f64, rhs: f64) -> Self {
        TheoryReport {
            claim: claim.into(),
            inputs_digest: digest,
            lhs,
            rhs,
            holds: lhs <= rhs,
            margin: rhs - lhs,
            kind: ClaimKind::Diagnostic,
        }
    }

    pub fn to_record(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.claim, self.inputs_digest, self.lhs, self.rhs, self.holds, self.margin
        )
    }

    /// Parses a record line. The kind is not stored on the line; it is inferred
    /// from the sign convention of `margin`, so diagnostics come back as bounds.
    pub fn parse_record(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                0,
                format!("expected 6 tab-separated fields, got {}", fields.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| Error::parse(0, format!("field {i} '{}': {e}", fields[i])))
        };
        let (lhs, rhs, margin) = (num(2)?, num(3)?, num(5)?);
        let holds = match fields[4] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::parse(
                    0,
                    format!("holds must be true/false, got '{other}'"),
                ))
            }
        };
        let kind = if margin.to_bits() == (lhs - rhs).to_bits() && margin != 0.0 {
            ClaimKind::Violation
        } else {
            ClaimKind::Bound
        };
        Ok(TheoryReport {
            claim: fields[0].to_string(),
            inputs_digest: fields[1].to_string(),
            lhs,
            rhs,
            holds,
            margin,
            kind,
        })
    }
}

impl fmt::Display for TheoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match (self.kind, self.holds) {
            (ClaimKind::Diagnostic, _) => "INFO",
            (_, true) => "PASS",
            (_, false) => "FAIL",
        };
        write!(
            f,
            "{verdict} {} lhs={:.6e} rhs={:.6e} margin={:.3e}",
            self.claim, self.lhs, self.rhs, self.margin
        )
    }
}
