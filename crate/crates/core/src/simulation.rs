//! Per-trial Monte Carlo of the moving-splitter experiment.
//!
//! # Random streams
//!
//! Every trial owns an independent ChaCha8 stream: the generator is keyed by
//! `ChaCha8Rng::seed_from_u64(seed)` and the stream id is set to the trial
//! index. Each trial consumes, in this order, a standard normal for the
//! emission-delay jitter, a standard normal for the path jitter, and a
//! uniform `f64` in `[0, 1)` for the outcome. Because a trial's randomness is
//! a function of `(seed, index)` alone, counts do not depend on how trials
//! are split across workers.

use std::fmt;
use std::ops::Range;
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::correlations::{
    ad_joint_distribution, local_joint_distribution, qm_joint_distribution, AngleSettings, JointDistribution,
    NonBeforePolicy, Outcome,
};
use crate::error::{Error, Result};
use crate::relativity::{
    classify_experiment, Distinguishability, ExperimentClass, FrameVelocity, ImpactContext, SpacetimeEvent,
    SPEED_OF_LIGHT,
};

/// Trials processed between record flushes when streaming.
const RECORD_BATCH: u64 = 1 << 16;

/// Source-to-splitter layout of one experiment, in lab coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentGeometry {
    l1: f64,
    l2: f64,
    velocity: f64,
    tau: f64,
    tau_jitter_sd: f64,
    path_jitter_sd: f64,
}

impl ExperimentGeometry {
    /// `l1`, `l2`: optical paths to splitters 1 and 2 (m); `velocity`: splitter 2
    /// velocity at impact (m/s, positive away from the source); `tau`: emission
    /// delay of photon 2 (s).
    pub fn new(l1: f64, l2: f64, velocity: f64, tau: f64) -> Result<Self> {
        Self::with_jitter(l1, l2, velocity, tau, 0.0, 0.0)
    }

    pub fn with_jitter(
        l1: f64,
        l2: f64,
        velocity: f64,
        tau: f64,
        tau_jitter_sd: f64,
        path_jitter_sd: f64,
    ) -> Result<Self> {
        for (name, value) in [("L1", l1), ("L2", l2)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive and finite, got {value}")));
            }
        }
        FrameVelocity::new(velocity)?;
        if !tau.is_finite() {
            return Err(Error::InvalidInput(format!("tau must be finite, got {tau}")));
        }
        for (name, value) in [("tau_jitter_sd", tau_jitter_sd), ("path_jitter_sd", path_jitter_sd)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        Ok(Self {
            l1,
            l2,
            velocity,
            tau,
            tau_jitter_sd,
            path_jitter_sd,
        })
    }

    /// Geometry from the total separation `L = L1 + L2` and the path delay.
    pub fn from_total_length(total: f64, delta_t: f64, velocity: f64, tau: f64) -> Result<Self> {
        let extra = SPEED_OF_LIGHT * delta_t;
        Self::new((total - extra) / 2.0, (total + extra) / 2.0, velocity, tau)
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_jitter_sd(&self) -> f64 {
        self.tau_jitter_sd
    }

    pub fn path_jitter_sd(&self) -> f64 {
        self.path_jitter_sd
    }

    /// Path delay δt = (L2 − L1)/c.
    pub fn delta_t(&self) -> f64 {
        (self.l2 - self.l1) / SPEED_OF_LIGHT
    }

    pub fn total_length(&self) -> f64 {
        self.l1 + self.l2
    }

    pub fn has_jitter(&self) -> bool {
        self.tau_jitter_sd > 0.0 || self.path_jitter_sd > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Standard quantum prediction, insensitive to timing.
    #[default]
    Qm,
    /// Timing-dependent alternative description.
    Ad,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Qm => "qm",
            Model::Ad => "ad",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub geometry: ExperimentGeometry,
    pub angles: AngleSettings,
    pub model: Model,
    pub trials: u64,
    pub seed: u64,
    pub tie_tolerance: f64,
    pub nonbefore_policy: NonBeforePolicy,
    pub distinguishability: [Distinguishability; 2],
}

impl SimulationConfig {
    /// Config with every optional setting at its default.
    pub fn new(geometry: ExperimentGeometry, angles: AngleSettings, model: Model, trials: u64, seed: u64) -> Self {
        Self {
            geometry,
            angles,
            model,
            trials,
            seed,
            tie_tolerance: 0.0,
            nonbefore_policy: NonBeforePolicy::Error,
            distinguishability: [Distinguishability::U; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if !(self.tie_tolerance >= 0.0 && self.tie_tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tie_tolerance must be finite and >= 0, got {}",
                self.tie_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub first: SpacetimeEvent,
    pub second: SpacetimeEvent,
    pub class: ExperimentClass,
    pub outcome: (Outcome, Outcome),
}

/// Outcome counts plus how often each experiment class occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountsTable {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    by_class: [u64; ExperimentClass::COUNT],
}

impl CountsTable {
    /// Table with outcome counts only and an empty class breakdown.
    pub fn from_counts(n_pp: u64, n_pm: u64, n_mp: u64, n_mm: u64) -> Self {
        Self {
            n_pp,
            n_pm,
            n_mp,
            n_mm,
            by_class: [0; ExperimentClass::COUNT],
        }
    }

    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    pub fn outcomes(&self) -> [u64; 4] {
        [self.n_pp, self.n_pm, self.n_mp, self.n_mm]
    }

    pub fn class_count(&self, class: ExperimentClass) -> u64 {
        self.by_class[class.index()]
    }

    /// Classes that occurred at least once, in a fixed order.
    pub fn class_breakdown(&self) -> Vec<(ExperimentClass, u64)> {
        self.by_class
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(i, &n)| (ExperimentClass::from_index(i), n))
            .collect()
    }

    fn record(&mut self, class: ExperimentClass, outcome: (Outcome, Outcome)) {
        match outcome {
            (Outcome::Plus, Outcome::Plus) => self.n_pp += 1,
            (Outcome::Plus, Outcome::Minus) => self.n_pm += 1,
            (Outcome::Minus, Outcome::Plus) => self.n_mp += 1,
            (Outcome::Minus, Outcome::Minus) => self.n_mm += 1,
        }
        self.by_class[class.index()] += 1;
    }

    pub fn merge(&mut self, other: &CountsTable) {
        self.n_pp += other.n_pp;
        self.n_pm += other.n_pm;
        self.n_mp += other.n_mp;
        self.n_mm += other.n_mm;
        for (a, b) in self.by_class.iter_mut().zip(other.by_class.iter()) {
            *a += b;
        }
    }
}

/// Lab-frame impact contexts for one trial.
///
/// `jitter` holds the additive offsets `(Δτ in s, ΔL2 in m)` already scaled
/// by their standard deviations.
pub fn build_impact_contexts(
    geometry: &ExperimentGeometry,
    jitter: (f64, f64),
    distinguishability: [Distinguishability; 2],
) -> Result<(ImpactContext, ImpactContext)> {
    let tau = geometry.tau + jitter.0;
    let l2_path = geometry.l2 + jitter.1;
    if !(l2_path > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "jittered optical path to splitter 2 is {l2_path} m, must be positive"
        )));
    }
    let first = ImpactContext::new(
        SpacetimeEvent::new(geometry.l1 / SPEED_OF_LIGHT, -geometry.l1)?,
        FrameVelocity::REST,
        distinguishability[0],
    );
    let second = ImpactContext::new(
        SpacetimeEvent::new(tau + l2_path / SPEED_OF_LIGHT, geometry.l2)?,
        FrameVelocity::new(geometry.velocity)?,
        distinguishability[1],
    );
    Ok((first, second))
}

/// Zero-jitter classification of a configuration.
pub fn nominal_class(config: &SimulationConfig) -> Result<ExperimentClass> {
    let (first, second) = build_impact_contexts(&config.geometry, (0.0, 0.0), config.distinguishability)?;
    classify_experiment(&first, &second, config.tie_tolerance)
}

/// Distribution the chosen model assigns to an experiment class.
pub fn model_distribution(
    model: Model,
    class: ExperimentClass,
    angles: &AngleSettings,
    nonbefore_policy: NonBeforePolicy,
) -> Result<JointDistribution> {
    match model {
        Model::Qm => {
            if class.contains(crate::relativity::ImpactClass::Distinguishable) {
                Ok(local_joint_distribution(angles))
            } else {
                Ok(qm_joint_distribution(angles))
            }
        }
        Model::Ad => ad_joint_distribution(class, angles, nonbefore_policy),
    }
}

/// Per-trial random streams derived from one seed.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    base: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_trial(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng
    }
}

struct TrialRunner<'a> {
    config: &'a SimulationConfig,
    streams: TrialStreams,
}

impl<'a> TrialRunner<'a> {
    fn new(config: &'a SimulationConfig) -> Self {
        Self {
            config,
            streams: TrialStreams::new(config.seed),
        }
    }

    fn run_one(&self, index: u64) -> Result<TrialRecord> {
        let cfg = self.config;
        let geometry = &cfg.geometry;
        let mut rng = self.streams.for_trial(index);
        let z_tau: f64 = rng.sample(StandardNormal);
        let z_path: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();

        let jitter = (geometry.tau_jitter_sd * z_tau, geometry.path_jitter_sd * z_path);
        let (first, second) = build_impact_contexts(geometry, jitter, cfg.distinguishability)?;
        let class = classify_experiment(&first, &second, cfg.tie_tolerance)?;
        let dist = model_distribution(cfg.model, class, &cfg.angles, cfg.nonbefore_policy)?;
        Ok(TrialRecord {
            index,
            first: first.event,
            second: second.event,
            class,
            outcome: dist.sample(u),
        })
    }

    fn run_range(&self, range: Range<u64>, mut records: Option<&mut Vec<TrialRecord>>) -> Result<CountsTable> {
        let mut counts = CountsTable::default();
        for index in range {
            let record = self.run_one(index).map_err(|e| Error::Trial {
                index,
                source: Box::new(e),
            })?;
            counts.record(record.class, record.outcome);
            if let Some(out) = records.as_deref_mut() {
                out.push(record);
            }
        }
        Ok(counts)
    }

    /// Splits `range` into contiguous chunks, one per worker, and merges in order.
    fn run_parallel(&self, range: Range<u64>, workers: usize, keep_records: bool) -> Result<(CountsTable, Vec<TrialRecord>)> {
        let len = range.end - range.start;
        let workers = (workers.max(1) as u64).min(len.max(1));
        let chunk = len.div_ceil(workers);
        let chunks: Vec<Range<u64>> = (0..workers)
            .map(|w| {
                let start = range.start + w * chunk;
                start.min(range.end)..(start + chunk).min(range.end)
            })
            .collect();

        let results: Vec<Result<(CountsTable, Vec<TrialRecord>)>> = if workers == 1 {
            chunks.into_iter().map(|c| self.run_chunk(c, keep_records)).collect()
        } else {
            thread::scope(|scope| {
                let handles: Vec<_> = chunks
                    .into_iter()
                    .map(|c| scope.spawn(move || self.run_chunk(c, keep_records)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("simulation worker panicked"))
                    .collect()
            })
        };

        let mut counts = CountsTable::default();
        let mut records = Vec::new();
        // chunks are in index order, so the first error is the lowest failing trial
        for result in results {
            let (c, r) = result?;
            counts.merge(&c);
            records.extend(r);
        }
        Ok((counts, records))
    }

    fn run_chunk(&self, range: Range<u64>, keep_records: bool) -> Result<(CountsTable, Vec<TrialRecord>)> {
        if keep_records {
            let mut records = Vec::with_capacity((range.end - range.start) as usize);
            let counts = self.run_range(range, Some(&mut records))?;
            Ok((counts, records))
        } else {
            Ok((self.run_range(range, None)?, Vec::new()))
        }
    }
}

/// Runs all trials of `config` on `workers` threads.
pub fn run_trials(config: &SimulationConfig, workers: usize) -> Result<CountsTable> {
    config.validate()?;
    let runner = TrialRunner::new(config);
    Ok(runner.run_parallel(0..config.trials, workers, false)?.0)
}

/// Like [`run_trials`], also handing every trial record to `sink` in index order.
pub fn run_trials_with_records<F>(config: &SimulationConfig, workers: usize, mut sink: F) -> Result<CountsTable>
where
    F: FnMut(&TrialRecord) -> Result<()>,
{
    config.validate()?;
    let runner = TrialRunner::new(config);
    let mut counts = CountsTable::default();
    let mut start = 0;
    while start < config.trials {
        let end = (start + RECORD_BATCH).min(config.trials);
        let (c, records) = runner.run_parallel(start..end, workers, true)?;
        for record in &records {
            sink(record)?;
        }
        counts.merge(&c);
        start = end;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relativity::{ImpactClass, SPEED_OF_LIGHT};

    const C: f64 = SPEED_OF_LIGHT;

    fn reference_geometry(delta_t: f64, velocity: f64) -> ExperimentGeometry {
        ExperimentGeometry::new(2000.0, 2000.0 + C * delta_t, velocity, 0.0).unwrap()
    }

    fn config(geometry: ExperimentGeometry, model: Model, deg: (f64, f64), trials: u64) -> SimulationConfig {
        SimulationConfig::new(geometry, AngleSettings::from_degrees(deg.0, deg.1).unwrap(), model, trials, 7)
    }

    #[test]
    fn geometry_validation() {
        assert!(ExperimentGeometry::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(ExperimentGeometry::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(matches!(
            ExperimentGeometry::new(1.0, 1.0, 3e8, 0.0),
            Err(Error::InvalidVelocity { .. })
        ));
        assert!(ExperimentGeometry::with_jitter(1.0, 1.0, 0.0, 0.0, -1.0, 0.0).is_err());
        let g = reference_geometry(4e-12, 100.0);
        assert!((g.delta_t() - 4e-12).abs() < 1e-20);
        let h = ExperimentGeometry::from_total_length(4000.0, 4e-12, 100.0, 0.0).unwrap();
        assert!((h.total_length() - 4000.0).abs() < 1e-9);
        assert!((h.delta_t() - 4e-12).abs() < 1e-20);
    }

    #[test]
    fn symmetric_geometry_impacts() {
        let g = ExperimentGeometry::new(2000.0, 2000.0, 0.0, 0.0).unwrap();
        let (a, b) = build_impact_contexts(&g, (0.0, 0.0), [Distinguishability::U; 2]).unwrap();
        assert_eq!(a.event.t, 2000.0 / C);
        assert_eq!(b.event.t, 2000.0 / C);
        assert_eq!(a.event.x, -2000.0);
        assert_eq!(b.event.x, 2000.0);
        assert_eq!(b.frame.velocity(), 0.0);
    }

    #[test]
    fn path_delay_against_velocity_threshold() {
        let flags = [Distinguishability::U; 2];
        let bb = reference_geometry(4e-12, 100.0);
        let (a, b) = build_impact_contexts(&bb, (0.0, 0.0), flags).unwrap();
        assert_eq!(
            classify_experiment(&a, &b, 0.0).unwrap(),
            ExperimentClass(ImpactClass::Before, ImpactClass::Before)
        );
        let bn = reference_geometry(5e-12, 100.0);
        let (a, b) = build_impact_contexts(&bn, (0.0, 0.0), flags).unwrap();
        assert_eq!(
            classify_experiment(&a, &b, 0.0).unwrap(),
            ExperimentClass(ImpactClass::Before, ImpactClass::NonBefore)
        );
    }

    #[test]
    fn flags_are_copied() {
        let g = reference_geometry(4e-12, 100.0);
        let (a, b) = build_impact_contexts(&g, (0.0, 0.0), [Distinguishability::D, Distinguishability::U]).unwrap();
        assert_eq!(a.distinguishability, Distinguishability::D);
        assert_eq!(b.distinguishability, Distinguishability::U);
    }

    #[test]
    fn jitter_can_degenerate_path() {
        let g = reference_geometry(4e-12, 100.0);
        let err = build_impact_contexts(&g, (0.0, -3000.0), [Distinguishability::U; 2]).unwrap_err();
        assert!(matches!(err, Error::DegenerateGeometry(_)));
    }

    #[test]
    fn qm_perfect_correlation_has_no_anticorrelated_counts() {
        let cfg = config(reference_geometry(4e-12, 100.0), Model::Qm, (45.0, -45.0), 200_000);
        let counts = run_trials(&cfg, 4).unwrap();
        assert_eq!(counts.n_pm, 0);
        assert_eq!(counts.n_mp, 0);
        assert_eq!(counts.total(), 200_000);
    }

    #[test]
    fn ad_matches_qm_when_one_impact_leads() {
        for deg in [(45.0, -45.0), (10.0, 33.0), (70.0, 0.0)] {
            let qm = config(reference_geometry(5e-12, 100.0), Model::Qm, deg, 50_000);
            let ad = SimulationConfig { model: Model::Ad, ..qm };
            assert_eq!(run_trials(&qm, 2).unwrap(), run_trials(&ad, 3).unwrap());
        }
    }

    #[test]
    fn qm_uses_local_statistics_for_distinguishable_impacts() {
        let mut cfg = config(reference_geometry(4e-12, 100.0), Model::Qm, (45.0, -45.0), 1);
        cfg.distinguishability = [Distinguishability::U, Distinguishability::D];
        let class = nominal_class(&cfg).unwrap();
        assert_eq!(class, ExperimentClass(ImpactClass::Before, ImpactClass::Distinguishable));
        let d = model_distribution(Model::Qm, class, &cfg.angles, cfg.nonbefore_policy).unwrap();
        assert!(d.correlation().abs() < 1e-15);
    }

    #[test]
    fn zero_jitter_gives_one_class() {
        let cfg = config(reference_geometry(4e-12, 100.0), Model::Ad, (20.0, 10.0), 10_000);
        let counts = run_trials(&cfg, 3).unwrap();
        let breakdown = counts.class_breakdown();
        assert_eq!(breakdown, vec![(ExperimentClass(ImpactClass::Before, ImpactClass::Before), 10_000)]);
    }

    #[test]
    fn unsupported_class_reports_first_trial() {
        let g = ExperimentGeometry::new(2000.0, 2000.0, 0.0, 0.0).unwrap();
        let cfg = config(g, Model::Ad, (0.0, 0.0), 100);
        let err = run_trials(&cfg, 4).unwrap_err();
        match &err {
            Error::Trial { index, source } => {
                assert_eq!(*index, 0);
                assert!(matches!(**source, Error::UnsupportedConfiguration { .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(err.kind(), "unsupported-configuration");

        let ok = SimulationConfig {
            nonbefore_policy: NonBeforePolicy::TreatAsQm,
            ..cfg
        };
        assert_eq!(run_trials(&ok, 1).unwrap().total(), 100);
    }

    #[test]
    fn zero_trials_rejected() {
        let cfg = config(reference_geometry(4e-12, 100.0), Model::Qm, (0.0, 0.0), 0);
        assert!(run_trials(&cfg, 1).is_err());
    }

    #[test]
    fn records_arrive_in_index_order_and_match_counts() {
        let mut cfg = config(reference_geometry(4e-12, 100.0), Model::Ad, (30.0, 15.0), 150_000);
        cfg.geometry = ExperimentGeometry::with_jitter(2000.0, 2000.0 + C * 4e-12, 100.0, 0.0, 5e-13, 0.0).unwrap();
        let mut next = 0;
        let mut tally = CountsTable::default();
        let counts = run_trials_with_records(&cfg, 3, |r| {
            assert_eq!(r.index, next);
            next += 1;
            tally.record(r.class, r.outcome);
            Ok(())
        })
        .unwrap();
        assert_eq!(next, 150_000);
        assert_eq!(counts, tally);
        assert_eq!(counts, run_trials(&cfg, 5).unwrap());
    }

    #[test]
    fn streams_depend_only_on_seed_and_index() {
        let s = TrialStreams::new(99);
        let a: u64 = s.for_trial(12345).random();
        let _: u64 = s.for_trial(0).random();
        let b: u64 = TrialStreams::new(99).for_trial(12345).random();
        assert_eq!(a, b);
        let c: u64 = s.for_trial(12346).random();
        assert_ne!(a, c);
    }

    #[test]
    fn counts_independent_of_worker_count() {
        let cfg = config(reference_geometry(4e-12, 100.0), Model::Ad, (12.0, 61.0), 30_001);
        let one = run_trials(&cfg, 1).unwrap();
        for w in [2, 3, 7, 64] {
            assert_eq!(run_trials(&cfg, w).unwrap(), one);
        }
    }
}
