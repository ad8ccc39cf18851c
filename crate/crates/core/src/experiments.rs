//! Monte Carlo ensembles of independent urn trials.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::equilibria::{distance, OmegaDescriptor};
use crate::model::Model;
use crate::report::fmt17;
use crate::urn::{simulate, CheckpointSchedule, RngSpec, UrnError, UrnState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("an ensemble needs at least one trial")]
    NoTrials,
    #[error("target has dimension {found}, model has {expected} vertices")]
    TargetDimension { expected: usize, found: usize },
    #[error(transparent)]
    Urn(#[from] UrnError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// What a trial is measured against.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Target {
    /// Sup-norm distance to one point.
    Point(Vec<f64>),
    /// Euclidean distance to the two-valued segment.
    Omega(OmegaDescriptor),
    /// Sup-norm distance to the closest of several points.
    EquilibriaSet(Vec<Vec<f64>>),
    None,
}

impl Target {
    fn dimension(&self) -> Option<usize> {
        match self {
            Target::Point(p) => Some(p.len()),
            Target::Omega(o) => Some(o.vertex_count),
            Target::EquilibriaSet(s) => s.first().map(Vec::len),
            Target::None => None,
        }
    }

    pub fn distance(&self, x: &[f64]) -> Option<f64> {
        match self {
            Target::Point(p) => Some(sup_distance(x, p)),
            Target::Omega(o) => Some(distance_to_omega(x, o)),
            Target::EquilibriaSet(s) => s.iter().map(|p| sup_distance(x, p)).reduce(f64::min),
            Target::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub model: Model,
    /// `None` means one ball per bin.
    pub initial_counts: Option<Vec<u64>>,
    pub n_steps: u64,
    pub n_trials: u64,
    pub master_seed: u64,
    pub schedule: CheckpointSchedule,
    pub target: Target,
    /// Sup-norm radius for "converged to target" and for label hits.
    pub tolerance: f64,
    /// Candidate limit points for nearest-label bookkeeping.
    pub labels: Vec<Vec<f64>>,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(model: Model, n_steps: u64, n_trials: u64, master_seed: u64) -> Self {
        Self {
            model,
            initial_counts: None,
            n_steps,
            n_trials,
            master_seed,
            schedule: CheckpointSchedule::Geometric { first_exponent: 8 },
            target: Target::None,
            tolerance: 0.05,
            labels: Vec::new(),
            workers: None,
        }
    }

    /// Short SHA-256 digest of everything that determines the results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.canonical_text());
        h.update(format!(
            "{:?}|{}|{}|{}|{:?}|{}|{}",
            self.initial_counts,
            self.n_steps,
            self.n_trials,
            self.master_seed,
            self.schedule,
            serde_json::to_string(&self.target).unwrap_or_default(),
            fmt17(self.tolerance),
        ));
        for l in &self.labels {
            h.update(l.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(","));
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: u64,
    pub final_proportions: Vec<f64>,
    /// Scheduled checkpoints (step 0 excluded).
    pub checkpoints: Vec<u64>,
    /// Distance to target per checkpoint; empty without a target.
    pub distances: Vec<f64>,
    /// Index into the spec's labels of the label closest to the final point.
    pub nearest_label: Option<usize>,
    /// `sup_{k >= n} |M_k - M_n|` over later checkpoints, per checkpoint `n`.
    pub noise_tail: Vec<f64>,
    /// Nearest segment parameter `p` per checkpoint (segment targets only).
    pub omega_parameter: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl Quantiles {
    /// Linear-interpolation quantiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self {
            min: v[0],
            q10: q(0.1),
            median: q(0.5),
            q90: q(0.9),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointSummary {
    pub step: u64,
    pub distance: Option<Quantiles>,
    pub noise_tail: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub master_seed: u64,
    pub spec_hash: String,
    pub n_trials: u64,
    pub n_failed: u64,
    pub tolerance: f64,
    pub checkpoints: Vec<CheckpointSummary>,
    /// Share of finished trials whose final distance is within tolerance.
    pub fraction_within_tolerance: Option<f64>,
    /// Trials whose final point is closest to each label.
    pub label_hits: Vec<u64>,
    /// Trials whose final point is within tolerance (sup norm) of each label.
    pub label_within_tolerance: Vec<u64>,
    /// Spread (max - min) of the nearest segment parameter over the second half of the checkpoints.
    pub omega_parameter_oscillation: Option<Quantiles>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub summary: EnsembleSummary,
    pub trials: Vec<TrialResult>,
}

pub fn distance_to_omega(x: &[f64], omega: &OmegaDescriptor) -> f64 {
    omega.distance(x)
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Closest label by Euclidean distance; ties go to the lexicographically smaller point.
pub fn nearest_label(x: &[f64], labels: &[Vec<f64>]) -> Option<usize> {
    labels
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            distance(x, a)
                .total_cmp(&distance(x, b))
                .then_with(|| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        })
        .map(|(k, _)| k)
}

pub fn run_trial(spec: &ExperimentSpec, trial: u64) -> TrialResult {
    let mut result = TrialResult {
        trial,
        final_proportions: Vec::new(),
        checkpoints: Vec::new(),
        distances: Vec::new(),
        nearest_label: None,
        noise_tail: Vec::new(),
        omega_parameter: Vec::new(),
        error: None,
    };
    let initial = match &spec.initial_counts {
        Some(c) => UrnState::new(&spec.model, c.clone()),
        None => Ok(UrnState::ones(&spec.model)),
    };
    let mut rng = RngSpec::new(spec.master_seed, trial).rng();
    let out = match initial
        .and_then(|s| simulate(&spec.model, s, spec.n_steps, &mut rng, &spec.schedule))
    {
        Ok(out) => out,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let recorded = 1..out.steps.len();
    result.checkpoints = out.steps[recorded.clone()].to_vec();
    result.distances = out.trajectory[recorded.clone()]
        .iter()
        .filter_map(|x| spec.target.distance(x))
        .collect();
    if let Target::Omega(o) = &spec.target {
        result.omega_parameter = out.trajectory[recorded.clone()]
            .iter()
            .map(|x| o.nearest_parameter(x))
            .collect();
    }
    let sums = &out.noise_sums[recorded];
    result.noise_tail = (0..sums.len())
        .map(|n| {
            sums[n..]
                .iter()
                .map(|mk| distance(mk, &sums[n]))
                .fold(0.0, f64::max)
        })
        .collect();
    result.final_proportions = out.final_state.proportions();
    result.nearest_label = nearest_label(&result.final_proportions, &spec.labels);
    result
}

pub fn run_ensemble(spec: &ExperimentSpec) -> Result<Ensemble, ExperimentError> {
    if spec.n_trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let m = spec.model.vertex_count();
    if let Some(d) = spec.target.dimension() {
        if d != m {
            return Err(ExperimentError::TargetDimension { expected: m, found: d });
        }
    }
    if let Some(l) = spec.labels.iter().find(|l| l.len() != m) {
        return Err(ExperimentError::TargetDimension {
            expected: m,
            found: l.len(),
        });
    }
    let run = || -> Vec<TrialResult> {
        (0..spec.n_trials)
            .into_par_iter()
            .map(|t| run_trial(spec, t))
            .collect()
    };
    let trials = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?
            .install(run),
        None => run(),
    };
    Ok(Ensemble {
        summary: summarize(spec, &trials),
        trials,
    })
}

/// Reduces trial results; the output depends only on the multiset of trials.
pub fn summarize(spec: &ExperimentSpec, trials: &[TrialResult]) -> EnsembleSummary {
    let mut ok: Vec<&TrialResult> = trials.iter().filter(|t| t.error.is_none()).collect();
    ok.sort_by_key(|t| t.trial);
    let checkpoints = spec.schedule.steps(spec.n_steps);
    let per_checkpoint = |k: usize, pick: fn(&TrialResult) -> &Vec<f64>| -> Option<Quantiles> {
        let values: Vec<f64> = ok.iter().filter_map(|t| pick(t).get(k).copied()).collect();
        Quantiles::of(&values)
    };
    let checkpoint_rows = checkpoints
        .iter()
        .enumerate()
        .map(|(k, &step)| CheckpointSummary {
            step,
            distance: per_checkpoint(k, |t| &t.distances),
            noise_tail: per_checkpoint(k, |t| &t.noise_tail),
        })
        .collect();
    let finals: Vec<f64> = ok.iter().filter_map(|t| t.distances.last().copied()).collect();
    let fraction_within_tolerance = (!finals.is_empty()).then(|| {
        finals.iter().filter(|&&d| d <= spec.tolerance).count() as f64 / finals.len() as f64
    });
    let mut label_hits = vec![0u64; spec.labels.len()];
    let mut label_within_tolerance = vec![0u64; spec.labels.len()];
    for t in &ok {
        if let Some(k) = t.nearest_label {
            label_hits[k] += 1;
        }
        for (k, l) in spec.labels.iter().enumerate() {
            if sup_distance(&t.final_proportions, l) <= spec.tolerance {
                label_within_tolerance[k] += 1;
            }
        }
    }
    let oscillation: Vec<f64> = ok
        .iter()
        .filter(|t| !t.omega_parameter.is_empty())
        .map(|t| {
            let tail = &t.omega_parameter[t.omega_parameter.len() / 2..];
            let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .collect();
    EnsembleSummary {
        master_seed: spec.master_seed,
        spec_hash: spec.hash(),
        n_trials: spec.n_trials,
        n_failed: (trials.len() - ok.len()) as u64,
        tolerance: spec.tolerance,
        checkpoints: checkpoint_rows,
        fraction_within_tolerance,
        label_hits,
        label_within_tolerance,
        omega_parameter_oscillation: Quantiles::of(&oscillation),
    }
}

/// Rows `trial,checkpoint,dist_target,nearest_label,noise_tail`, preceded by
/// `#` lines carrying the seed and spec hash. Labels are 1-based; empty fields
/// mean "not applicable".
pub fn write_trials_csv<W: Write>(
    mut w: W,
    summary: &EnsembleSummary,
    trials: &[TrialResult],
) -> io::Result<()> {
    writeln!(w, "# master_seed={}", summary.master_seed)?;
    writeln!(w, "# spec_hash={}", summary.spec_hash)?;
    writeln!(w, "trial,checkpoint,dist_target,nearest_label,noise_tail")?;
    for t in trials {
        let label = t.nearest_label.map(|k| (k + 1).to_string()).unwrap_or_default();
        for (k, step) in t.checkpoints.iter().enumerate() {
            let dist = t.distances.get(k).map(|d| fmt17(*d)).unwrap_or_default();
            let tail = t.noise_tail.get(k).map(|d| fmt17(*d)).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", t.trial, step, dist, label, tail)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvoidanceEntry {
    pub point: Vec<f64>,
    pub trials_within: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AvoidanceReport {
    pub radius: f64,
    pub entries: Vec<AvoidanceEntry>,
    /// Zero-probability convergence to these points is only guaranteed for exponents <= 1.
    pub applies: bool,
    /// `applies` and some unstable point attracted a trial.
    pub failed: bool,
}

/// Counts finished trials ending within `radius` (sup norm) of each unstable point.
pub fn unstable_avoidance_report(
    model: &Model,
    unstable: &[Vec<f64>],
    trials: &[TrialResult],
    radius: f64,
) -> AvoidanceReport {
    let entries: Vec<AvoidanceEntry> = unstable
        .iter()
        .map(|p| AvoidanceEntry {
            point: p.clone(),
            trials_within: trials
                .iter()
                .filter(|t| t.error.is_none())
                .filter(|t| sup_distance(&t.final_proportions, p) <= radius)
                .count() as u64,
        })
        .collect();
    let applies = model.max_alpha() <= 1.0;
    let failed = applies && entries.iter().any(|e| e.trials_within > 0);
    AvoidanceReport {
        radius,
        entries,
        applies,
        failed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseReport {
    pub checkpoints: Vec<u64>,
    pub tail: Vec<f64>,
    /// Tail at the last checkpoint with a later one strictly below the tail at the first.
    pub decreasing: bool,
}

impl NoiseReport {
    pub fn tail_at(&self, step: u64) -> Option<f64> {
        let k = self.checkpoints.iter().position(|&s| s == step)?;
        self.tail.get(k).copied()
    }
}

pub fn noise_condition_check(trial: &TrialResult) -> NoiseReport {
    let n = trial.noise_tail.len();
    let decreasing = n >= 3 && trial.noise_tail[n - 2] < trial.noise_tail[0];
    NoiseReport {
        checkpoints: trial.checkpoints.clone(),
        tail: trial.noise_tail.clone(),
        decreasing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::omega_set;
    use crate::graph::{Family, Graph};

    fn model(f: Family, alpha: f64) -> Model {
        Model::uniform(Graph::generate(&f).unwrap(), alpha).unwrap()
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[3.0, 1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!(q.min, 1.0);
        assert_eq!(q.median, 3.0);
        assert!((q.q10 - 1.4).abs() < 1e-15);
        assert_eq!(q.max, 5.0);
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn nearest_label_breaks_ties_lexicographically() {
        let labels = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(nearest_label(&[0.5, 0.5], &labels), Some(1));
        assert_eq!(nearest_label(&[0.9, 0.1], &labels), Some(0));
        assert_eq!(nearest_label(&[0.5, 0.5], &[]), None);
    }

    #[test]
    fn omega_distance_zero_on_segment() {
        let o = omega_set(&Graph::generate(&Family::Cycle(4)).unwrap()).unwrap();
        assert_eq!(distance_to_omega(&[0.25; 4], &o), 0.0);
        assert!(distance_to_omega(&o.point(0.1), &o) < 1e-15);
        assert!(distance_to_omega(&[0.3, 0.2, 0.31, 0.19], &o) > 1e-3);
    }

    #[test]
    fn ensemble_is_reproducible_and_order_free() {
        let mut spec = ExperimentSpec::new(model(Family::Complete(3), 1.0), 2000, 8, 9);
        spec.target = Target::Point(vec![1.0 / 3.0; 3]);
        spec.labels = vec![vec![1.0 / 3.0; 3], vec![0.5, 0.5, 0.0]];
        let a = run_ensemble(&spec).unwrap();
        let b = run_ensemble(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a.summary).unwrap(),
            serde_json::to_string(&b.summary).unwrap()
        );
        let mut reversed = a.trials.clone();
        reversed.reverse();
        assert_eq!(summarize(&spec, &reversed), a.summary);
        assert_eq!(a.summary.label_hits.iter().sum::<u64>(), 8);
        for t in &a.trials {
            assert_eq!(t.checkpoints, vec![256, 512, 1024, 2000]);
            assert_eq!(t.distances.len(), 4);
            assert!(t.distances.iter().all(|d| d.is_finite() && *d >= 0.0));
            assert!(t.noise_tail.iter().all(|d| d.is_finite() && *d >= 0.0));
        }
    }

    #[test]
    fn failed_trials_are_excluded_but_counted() {
        let mut spec = ExperimentSpec::new(model(Family::Complete(3), 1.0), u64::MAX / 2, 2, 0);
        spec.initial_counts = Some(vec![u64::MAX / 4; 3]);
        let e = run_ensemble(&spec).unwrap();
        assert_eq!(e.summary.n_failed, 2);
        assert!(e.summary.fraction_within_tolerance.is_none());
    }

    #[test]
    fn validates_spec() {
        let mut spec = ExperimentSpec::new(model(Family::Complete(3), 1.0), 10, 0, 0);
        assert_eq!(run_ensemble(&spec).unwrap_err(), ExperimentError::NoTrials);
        spec.n_trials = 1;
        spec.target = Target::Point(vec![0.5, 0.5]);
        assert!(matches!(
            run_ensemble(&spec),
            Err(ExperimentError::TargetDimension { .. })
        ));
    }

    #[test]
    fn avoidance_applies_only_up_to_exponent_one() {
        let trial = TrialResult {
            trial: 0,
            final_proportions: vec![0.5, 0.5, 0.0],
            checkpoints: vec![],
            distances: vec![],
            nearest_label: None,
            noise_tail: vec![],
            omega_parameter: vec![],
            error: None,
        };
        let r = unstable_avoidance_report(
            &model(Family::Star(3), 2.0),
            &[vec![0.5, 0.5, 0.0]],
            &[trial.clone()],
            0.02,
        );
        assert_eq!(r.entries[0].trials_within, 1);
        assert!(!r.applies && !r.failed);
        let r = unstable_avoidance_report(
            &model(Family::Complete(3), 1.0),
            &[vec![0.5, 0.5, 0.0]],
            &[trial],
            0.02,
        );
        assert!(r.failed);
    }

    #[test]
    fn trials_csv_layout() {
        let mut spec = ExperimentSpec::new(model(Family::Complete(3), 1.0), 300, 2, 1);
        spec.target = Target::Point(vec![1.0 / 3.0; 3]);
        let e = run_ensemble(&spec).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &e.summary, &e.trials).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# master_seed=1");
        assert!(lines[1].starts_with("# spec_hash="));
        assert_eq!(lines[2], "trial,checkpoint,dist_target,nearest_label,noise_tail");
        assert_eq!(lines.len(), 3 + 2 * 2);
        assert!(lines[3].starts_with("0,256,"));
    }
}
