use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

/// Where an expected value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// A value stated with the underlying theory.
    Paper,
    /// Holds by construction.
    Trivial,
    /// Computed by an independent method.
    Derived,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub measured: Option<f64>,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `|measured − expected| ≤ tolerance`.
    pub fn close(name: &str, measured: f64, expected: f64, tolerance: f64, provenance: Provenance) -> Self {
        let ok = (measured - expected).abs() <= tolerance;
        Self::with_status(name, ok, Some(measured), Some(expected), Some(tolerance), provenance)
    }

    /// Passes when `measured ≤ bound`; the bound is reported as the tolerance.
    pub fn at_most(name: &str, measured: f64, bound: f64, provenance: Provenance) -> Self {
        Self::with_status(name, measured <= bound, Some(measured), Some(0.0), Some(bound), provenance)
    }

    pub fn flag(name: &str, ok: bool, measured: Option<f64>, provenance: Provenance, note: impl Into<String>) -> Self {
        let mut c = Self::with_status(name, ok, measured, None, None, provenance);
        c.note = Some(note.into());
        c
    }

    pub fn failed(name: &str, provenance: Provenance, note: impl Into<String>) -> Self {
        Self::flag(name, false, None, provenance, note)
    }

    fn with_status(
        name: &str,
        ok: bool,
        measured: Option<f64>,
        expected: Option<f64>,
        tolerance: Option<f64>,
        provenance: Provenance,
    ) -> Self {
        Check {
            name: name.to_string(),
            status: if ok && measured.map_or(true, f64::is_finite) { Status::Pass } else { Status::Fail },
            measured,
            expected,
            tolerance,
            provenance,
            note: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub generated_at: u64,
    pub suite: String,
    pub config: serde_json::Value,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(suite: &str, config: serde_json::Value, checks: Vec<Check>) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            generated_at: timestamp(),
            suite: suite.to_string(),
            config,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    /// Pretty JSON; the timestamp sits on a line of its own.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# generated_at={}\nname,status,measured,expected,tolerance,provenance\n", self.generated_at);
        let num = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        for c in &self.checks {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                c.name,
                serde_json::to_value(c.status).unwrap().as_str().unwrap(),
                num(c.measured),
                num(c.expected),
                num(c.tolerance),
                serde_json::to_value(c.provenance).unwrap().as_str().unwrap(),
            ));
        }
        s
    }
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(v) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return v;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
