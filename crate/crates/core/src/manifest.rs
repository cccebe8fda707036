//! Run manifests and CSV writers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, ResolvedConfig, SCHEMA_VERSION};
use crate::error::Result;
use crate::relativity::ExperimentClass;
use crate::simulation::{model_distribution, nominal_class, CountsTable, TrialRecord};
use crate::statistics::{clopper_pearson, estimate_correlation, marginal_plus_frequencies};

pub const RNG_DESCRIPTION: &str = "chacha8, seed_from_u64(seed), stream = trial index; draws per trial: normal(tau), normal(path), uniform(outcome)";

pub const RECORDS_HEADER: &str = "trial,t1,x1,t2,x2,class1,class2,sigma,omega";
pub const SWEEP_HEADER: &str = "input,value,feasible";
pub const SCAN_HEADER: &str = "alpha,beta,model,E_closed,E_hat,SE,N";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class1: String,
    pub class2: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub outcome: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: u64,
    pub counts: OutcomeCounts,
    pub e_hat: f64,
    pub se: f64,
    /// Model correlation for the zero-jitter class, when the model defines one.
    pub e_closed_nominal: Option<f64>,
    pub nominal_class: String,
    pub class_breakdown: Vec<ClassCount>,
    pub marginal_plus_side1: f64,
    pub marginal_plus_side2: f64,
    /// Clopper–Pearson 95% intervals on each outcome probability.
    pub outcome_intervals_95: Vec<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact: String,
    pub version: String,
    /// RFC 3339 creation time; `None` in canonical mode.
    pub timestamp: Option<String>,
    pub seed: u64,
    pub rng: String,
    pub config: ConfigFile,
    pub summary: RunSummary,
}

impl RunManifest {
    pub fn build(config: &ResolvedConfig, counts: &CountsTable, timestamp: Option<String>) -> Result<Self> {
        let sim = &config.simulation;
        let estimate = estimate_correlation(counts)?;
        let (m1, m2) = marginal_plus_frequencies(counts)?;
        let nominal = nominal_class(sim)?;
        let e_closed_nominal = model_distribution(sim.model, nominal, &sim.angles, sim.nonbefore_policy)
            .ok()
            .map(|d| d.correlation());
        let n = counts.total();
        let mut intervals = Vec::with_capacity(4);
        for (label, k) in ["++", "+-", "-+", "--"].iter().zip(counts.outcomes()) {
            let (lower, upper) = clopper_pearson(k, n, 0.95)?;
            intervals.push(Interval {
                outcome: label.to_string(),
                estimate: k as f64 / n as f64,
                lower,
                upper,
            });
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            seed: sim.seed,
            rng: RNG_DESCRIPTION.to_string(),
            config: config.to_file(),
            summary: RunSummary {
                trials: n,
                counts: OutcomeCounts {
                    pp: counts.n_pp,
                    pm: counts.n_pm,
                    mp: counts.n_mp,
                    mm: counts.n_mm,
                },
                e_hat: estimate.e_hat,
                se: estimate.se,
                e_closed_nominal,
                nominal_class: nominal.to_string(),
                class_breakdown: counts
                    .class_breakdown()
                    .into_iter()
                    .map(|(c, count)| class_count(c, count))
                    .collect(),
                marginal_plus_side1: m1,
                marginal_plus_side2: m2,
                outcome_intervals_95: intervals,
            },
        })
    }

    /// Copy with the timestamp cleared, for byte-level comparison of runs.
    pub fn canonical(&self) -> Self {
        Self {
            timestamp: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

fn class_count(class: ExperimentClass, count: u64) -> ClassCount {
    ClassCount {
        class1: class.first().to_string(),
        class2: class.second().to_string(),
        count,
    }
}

/// Writes one trial record as a CSV line (no header).
pub fn write_record_line<W: Write>(out: &mut W, r: &TrialRecord) -> std::io::Result<()> {
    writeln!(
        out,
        "{},{:e},{:e},{:e},{:e},{},{},{},{}",
        r.index,
        r.first.t,
        r.first.x,
        r.second.t,
        r.second.x,
        r.class.first(),
        r.class.second(),
        r.outcome.0,
        r.outcome.1
    )
}
