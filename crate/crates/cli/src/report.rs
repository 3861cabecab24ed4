use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `statistic <= tolerance`.
    Max,
    /// Passes when `statistic >= tolerance`.
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Mode,
    pub version: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, name: String, statistic: f64, tolerance: f64, bound: Bound) -> &mut Check {
        assert!(
            self.checks.iter().all(|c| c.name != name),
            "duplicate check name {name}"
        );
        let passed = statistic.is_finite()
            && match bound {
                Bound::Max => statistic <= tolerance,
                Bound::Min => statistic >= tolerance,
            };
        self.checks.push(Check {
            name,
            statistic,
            tolerance,
            bound,
            passed,
            metadata: BTreeMap::new(),
        });
        self.checks.last_mut().unwrap()
    }

    pub fn at_most(&mut self, name: impl Into<String>, statistic: f64, tolerance: f64) -> &mut Check {
        self.push(name.into(), statistic, tolerance, Bound::Max)
    }

    pub fn at_least(&mut self, name: impl Into<String>, statistic: f64, tolerance: f64) -> &mut Check {
        self.push(name.into(), statistic, tolerance, Bound::Min)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl Check {
    pub fn meta(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metadata.insert(key.to_string(), value);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flags_follow_bounds() {
        let mut r = Report::new(Mode::Verify, 0);
        r.at_most("small", 1e-12, 1e-9);
        r.at_least("ratio", 1.2, 1.5).meta("status", "non_convergent");
        r.at_most("nan", f64::NAN, 1.0);
        assert!(r.check("small").unwrap().passed);
        assert!(!r.check("ratio").unwrap().passed);
        assert!(!r.check("nan").unwrap().passed);
        assert!(!r.passed());
    }

    #[test]
    #[should_panic]
    fn names_are_unique() {
        let mut r = Report::new(Mode::Dde, 0);
        r.at_most("a", 0.0, 1.0);
        r.at_most("a", 0.0, 1.0);
    }
}
