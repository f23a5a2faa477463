//! Claimed-versus-measured bookkeeping shared by all certificates.

use serde::{Deserialize, Serialize};

/// Absolute slack granted to every `measured <= claimed` comparison.
pub const LEDGER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub claimed: f64,
    pub measured: f64,
    pub pass: bool,
}

impl Claim {
    /// `measured <= claimed + LEDGER_SLACK`.
    pub fn at_most(name: impl Into<String>, claimed: f64, measured: f64) -> Self {
        Self::with_slack(name, claimed, measured, LEDGER_SLACK)
    }

    pub fn with_slack(name: impl Into<String>, claimed: f64, measured: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            claimed,
            measured,
            pass: measured.is_finite() && measured <= claimed + slack,
        }
    }

    /// `measured < claimed` with no slack.
    pub fn strictly_below(name: impl Into<String>, claimed: f64, measured: f64) -> Self {
        Self {
            name: name.into(),
            claimed,
            measured,
            pass: measured.is_finite() && measured < claimed,
        }
    }
}

/// A reported quantity that carries no pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub claims: Vec<Claim>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measurements: Vec<Measurement>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, claim: Claim) {
        self.claims.push(claim);
    }

    pub fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.measurements.push(Measurement {
            name: name.into(),
            value,
        });
    }

    pub fn extend(&mut self, other: &Ledger) {
        self.claims.extend(other.claims.iter().cloned());
        self.measurements.extend(other.measurements.iter().cloned());
    }

    /// Same as [`Ledger::extend`] with every name prefixed.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &Ledger) {
        self.claims.extend(other.claims.iter().map(|c| Claim {
            name: format!("{prefix}{}", c.name),
            ..c.clone()
        }));
        self.measurements.extend(other.measurements.iter().map(|m| Measurement {
            name: format!("{prefix}{}", m.name),
            value: m.value,
        }));
    }

    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.pass)
    }

    pub fn claim(&self, name: &str) -> Option<&Claim> {
        self.claims.iter().find(|c| c.name == name)
    }

    pub fn measurement(&self, name: &str) -> Option<f64> {
        self.measurements.iter().find(|m| m.name == name).map(|m| m.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_and_nan() {
        assert!(Claim::at_most("a", 1.0, 1.0 + 5e-10).pass);
        assert!(!Claim::at_most("a", 1.0, 1.0 + 2e-9).pass);
        assert!(!Claim::at_most("a", 1.0, f64::NAN).pass);
        assert!(!Claim::strictly_below("a", 1.0, 1.0).pass);
    }

    #[test]
    fn ledger_verdict() {
        let mut l = Ledger::new();
        l.push(Claim::at_most("ok", 1.0, 0.5));
        assert!(l.all_pass());
        l.push(Claim::at_most("bad", 1.0, 2.0));
        assert!(!l.all_pass());
        assert_eq!(l.failures().count(), 1);
    }
}
