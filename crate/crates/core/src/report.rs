//! Structured records of measured constants against claimed bounds.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportEntry {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_point: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub name: String,
    pub entries: Vec<ReportEntry>,
    pub pass: bool,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>) -> Self {
        EstimateReport {
            name: name.into(),
            entries: Vec::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, entry: ReportEntry) {
        self.pass &= entry.pass;
        self.entries.push(entry);
    }

    /// Adds an entry that passes iff `measured <= bound`.
    pub fn check_le(&mut self, name: impl Into<String>, measured: f64, bound: f64, worst: Option<Vec<f64>>) {
        let pass = measured.is_finite() && measured <= bound;
        self.push(ReportEntry {
            name: name.into(),
            measured,
            bound,
            pass,
            worst_point: worst,
            note: None,
        });
    }

    /// Adds an entry that passes iff `measured >= bound`.
    pub fn check_ge(&mut self, name: impl Into<String>, measured: f64, bound: f64, worst: Option<Vec<f64>>) {
        let pass = measured.is_finite() && measured >= bound;
        self.push(ReportEntry {
            name: name.into(),
            measured,
            bound,
            pass,
            worst_point: worst,
            note: None,
        });
    }

    pub fn entry(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn measured(&self, name: &str) -> Option<f64> {
        self.entry(name).map(|e| e.measured)
    }
}
