//! Session and comparison reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use spotlight_core::wire::SpotlightMsg;
use spotlight_core::{Policy, SpotlightDecision};

/// Statistics for one run of one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub policy: Policy,
    pub seed: u64,
    pub decisions: usize,
    pub distinct_shown: usize,
    pub audience_size: usize,
    /// `distinct_shown / audience_size`.
    pub coverage: f64,
    /// Windows spotlighted per audience member, zero for members never shown.
    pub dwell: BTreeMap<String, u64>,
    /// Windows that ended without anyone in the spotlight.
    pub empty_windows: usize,
    pub dwell_entropy_bits: f64,
    pub log: Vec<SpotlightMsg>,
}

impl SessionReport {
    pub fn from_decisions<'a>(
        policy: Policy,
        seed: u64,
        audience: impl IntoIterator<Item = &'a str>,
        decisions: &[SpotlightDecision],
    ) -> Self {
        let mut dwell: BTreeMap<String, u64> = audience.into_iter().map(|id| (id.to_string(), 0)).collect();
        let audience_size = dwell.len();
        let mut shown = BTreeSet::new();
        let mut empty_windows = 0;
        for d in decisions {
            match &d.participant {
                Some(p) => {
                    *dwell.entry(p.clone()).or_insert(0) += 1;
                    shown.insert(p.clone());
                }
                None => empty_windows += 1,
            }
        }
        let coverage = if audience_size == 0 { 0.0 } else { shown.len() as f64 / audience_size as f64 };
        Self {
            policy,
            seed,
            decisions: decisions.len(),
            distinct_shown: shown.len(),
            audience_size,
            coverage,
            dwell_entropy_bits: entropy_bits(dwell.values().copied()),
            dwell,
            empty_windows,
            log: decisions.iter().map(SpotlightMsg::from_decision).collect(),
        }
    }

    pub fn summary(&self) -> SeedSummary {
        SeedSummary {
            seed: self.seed,
            decisions: self.decisions,
            distinct_shown: self.distinct_shown,
            coverage: self.coverage,
            dwell_entropy_bits: self.dwell_entropy_bits,
            dwell: self.dwell.clone(),
        }
    }
}

/// Shannon entropy in bits of the distribution of spotlighted windows.
pub fn entropy_bits(counts: impl IntoIterator<Item = u64>) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum();
    // single-member distributions give -0.0
    h.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub decisions: usize,
    pub distinct_shown: usize,
    pub coverage: f64,
    pub dwell_entropy_bits: f64,
    pub dwell: BTreeMap<String, u64>,
}

/// Median and quartiles (linear interpolation between order statistics).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        v.sort_by(f64::total_cmp);
        let q1 = quantile(&v, 0.25);
        let q3 = quantile(&v, 0.75);
        Self { median: quantile(&v, 0.5), q1, q3, iqr: q3 - q1 }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub coverage: Spread,
    pub dwell_entropy_bits: Spread,
    pub decisions: Spread,
    pub per_seed: Vec<SeedSummary>,
}

impl PolicySummary {
    pub fn from_runs(policy: Policy, runs: &[SessionReport]) -> Self {
        Self {
            policy,
            coverage: Spread::of(runs.iter().map(|r| r.coverage)),
            dwell_entropy_bits: Spread::of(runs.iter().map(|r| r.dwell_entropy_bits)),
            decisions: Spread::of(runs.iter().map(|r| r.decisions as f64)),
            per_seed: runs.iter().map(SessionReport::summary).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_seeds: usize,
    pub audience_size: usize,
    pub policies: Vec<PolicySummary>,
}

/// Either report kind, tagged for files written by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReportDoc {
    SessionReport(SessionReport),
    ComparisonReport(ComparisonReport),
}

impl ReportDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub policy: String,
    pub runs: usize,
    pub decisions: f64,
    pub coverage_median: f64,
    pub coverage_iqr: f64,
    pub entropy_median: f64,
    pub max_dwell_median: f64,
}

/// Fixed-column text table, one row per policy.
pub fn render_table(doc: &ReportDoc) -> String {
    let rows: Vec<TableRow> = match doc {
        ReportDoc::SessionReport(r) => vec![TableRow {
            policy: r.policy.to_string(),
            runs: 1,
            decisions: r.decisions as f64,
            coverage_median: r.coverage,
            coverage_iqr: 0.0,
            entropy_median: r.dwell_entropy_bits,
            max_dwell_median: r.dwell.values().copied().max().unwrap_or(0) as f64,
        }],
        ReportDoc::ComparisonReport(c) => c
            .policies
            .iter()
            .map(|p| TableRow {
                policy: p.policy.to_string(),
                runs: p.per_seed.len(),
                decisions: p.decisions.median,
                coverage_median: p.coverage.median,
                coverage_iqr: p.coverage.iqr,
                entropy_median: p.dwell_entropy_bits.median,
                max_dwell_median: Spread::of(
                    p.per_seed.iter().map(|s| s.dwell.values().copied().max().unwrap_or(0) as f64),
                )
                .median,
            })
            .collect(),
    };
    let mut out = format!(
        "{:<12} {:>6} {:>10} {:>10} {:>10} {:>12} {:>10}\n",
        "policy", "runs", "decisions", "coverage", "cov_iqr", "entropy_bits", "max_dwell"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>6} {:>10.1} {:>10.3} {:>10.3} {:>12.3} {:>10.1}\n",
            r.policy, r.runs, r.decisions, r.coverage_median, r.coverage_iqr, r.entropy_median, r.max_dwell_median
        ));
    }
    out
}
