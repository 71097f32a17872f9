//! Estimates, verdicts and their JSON/CSV forms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::accumulator::{EnsembleAccumulator, Estimate};
use crate::error::{Error, Result};

pub const DEFAULT_Z: f64 = 4.0;

/// A pass/fail rule that depends only on `(value, se)` and declared constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// `|value - target| <= z se`.
    Near { target: f64, z: f64 },
    /// `value <= bound + z se`.
    AtMost { bound: f64, z: f64 },
    /// `value >= bound - z se`.
    AtLeast { bound: f64, z: f64 },
    /// `value > bound + z se`.
    Above { bound: f64, z: f64 },
    /// `value < bound - z se`.
    Below { bound: f64, z: f64 },
    /// `lo <= value <= hi + z se`.
    Between { lo: f64, hi: f64, z: f64 },
}

/// Relative roundoff floor added to every tolerance, so exact identities
/// survive a zero error bar.
pub const ROUNDOFF: f64 = 1e-12;

impl Rule {
    pub fn verdict(&self, est: &Estimate) -> bool {
        let Some(se) = est.se else { return false };
        let v = est.value;
        if !v.is_finite() {
            return false;
        }
        let floor = ROUNDOFF * self.reference().abs().max(1.0);
        match *self {
            Rule::Near { target, z } => (v - target).abs() <= z * se + floor,
            Rule::AtMost { bound, z } => v <= bound + z * se + floor,
            Rule::AtLeast { bound, z } => v >= bound - z * se - floor,
            Rule::Above { bound, z } => v > bound + z * se,
            Rule::Below { bound, z } => v < bound - z * se,
            Rule::Between { lo, hi, z } => v >= lo - floor && v <= hi + z * se + floor,
        }
    }

    pub fn reference(&self) -> f64 {
        match *self {
            Rule::Near { target, .. } => target,
            Rule::AtMost { bound, .. }
            | Rule::AtLeast { bound, .. }
            | Rule::Above { bound, .. }
            | Rule::Below { bound, .. } => bound,
            Rule::Between { hi, .. } => hi,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Rule::Near { .. } => "near",
            Rule::AtMost { .. } => "at_most",
            Rule::AtLeast { .. } => "at_least",
            Rule::Above { .. } => "above",
            Rule::Below { .. } => "below",
            Rule::Between { .. } => "between",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub estimate: Estimate,
    pub rule: Rule,
    /// z-score against the rule's reference value.
    pub z: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, estimate: Estimate, rule: Rule) -> Self {
        Self { name: name.into(), estimate, rule, z: estimate.z(rule.reference()), pass: rule.verdict(&estimate) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedMoment {
    pub order: usize,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSummary {
    pub name: String,
    pub mean: Estimate,
    pub variance: Estimate,
    pub standardized: Vec<StandardizedMoment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub first: String,
    pub second: String,
    pub covariance: Estimate,
    pub correlation: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub label: String,
    pub replicas: u64,
    pub z_threshold: f64,
    pub observables: Vec<ObservableSummary>,
    pub pairs: Vec<PairSummary>,
    pub checks: Vec<Check>,
}

impl MomentReport {
    pub fn summarize(label: impl Into<String>, acc: &EnsembleAccumulator, z_threshold: f64) -> Self {
        let names = acc.names();
        let observables = (0..names.len())
            .map(|i| ObservableSummary {
                name: names[i].clone(),
                mean: acc.estimate(|m| m.mean(i)),
                variance: acc.estimate(|m| m.variance(i)),
                standardized: (3..=8)
                    .map(|k| StandardizedMoment { order: k, estimate: acc.estimate(|m| m.standardized(i, k)) })
                    .collect(),
            })
            .collect();
        let pairs = acc
            .pairs()
            .iter()
            .map(|&(i, j)| PairSummary {
                first: names[i].clone(),
                second: names[j].clone(),
                covariance: acc.estimate(|m| m.covariance(i, j)),
                correlation: acc.estimate(|m| m.correlation(i, j)),
            })
            .collect();
        Self { label: label.into(), replicas: acc.count(), z_threshold, observables, pairs, checks: Vec::new() }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

pub const CHECK_CSV_HEADER: &str = "name,value,se,rule,reference,lo,z_threshold,pass";

/// One row per check, enough to recompute every verdict.
pub fn checks_to_csv(checks: &[Check]) -> String {
    let mut out = String::from(CHECK_CSV_HEADER);
    out.push('\n');
    for c in checks {
        let (lo, z) = match c.rule {
            Rule::Between { lo, z, .. } => (lo, z),
            Rule::Near { z, .. }
            | Rule::AtMost { z, .. }
            | Rule::AtLeast { z, .. }
            | Rule::Above { z, .. }
            | Rule::Below { z, .. } => (f64::NAN, z),
        };
        let se = c.estimate.se.map_or(String::new(), |s| s.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.name,
            c.estimate.value,
            se,
            c.rule.kind(),
            c.rule.reference(),
            lo,
            z,
            c.pass
        );
    }
    out
}

/// Parses [`checks_to_csv`] output and recomputes the verdicts from the numbers.
pub fn checks_from_csv(text: &str) -> Result<Vec<Check>> {
    let mut lines = text.lines();
    if lines.next() != Some(CHECK_CSV_HEADER) {
        return Err(Error::Format("unexpected check table header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")));
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("expected 8 columns in `{line}`")));
            }
            let se = if f[2].is_empty() { None } else { Some(num(f[2])?) };
            let (reference, lo, z) = (num(f[4])?, num(f[5])?, num(f[6])?);
            let rule = match f[3] {
                "near" => Rule::Near { target: reference, z },
                "at_most" => Rule::AtMost { bound: reference, z },
                "at_least" => Rule::AtLeast { bound: reference, z },
                "above" => Rule::Above { bound: reference, z },
                "below" => Rule::Below { bound: reference, z },
                "between" => Rule::Between { lo, hi: reference, z },
                other => return Err(Error::Format(format!("unknown rule `{other}`"))),
            };
            Ok(Check::new(f[0], Estimate { value: num(f[1])?, se }, rule))
        })
        .collect()
}
