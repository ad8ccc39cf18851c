//! Exact simulation of the ball-adding process.
//!
//! Each step awards one ball per competition. The proportions then follow the
//! stochastic approximation recursion
//!
//! ```text
//! x(n+1) - x(n) = gamma_n (F(x(n)) + u_n),   gamma_n = 1 / (N0/N + n + 1)
//! ```
//!
//! where `xi(n) = C(n+1)/N` is the vector of balls won this step and
//! `u_n = xi(n) - E[xi(n) | past]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UrnError {
    #[error("expected {expected} initial counts, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("initial count at vertex {0} must be at least 1")]
    EmptyBin(usize),
    #[error("ball total would overflow 64 bits")]
    Overflow,
}

/// Reproducible per-trial random stream.
///
/// The generator is ChaCha8 keyed by `master_seed` (expanded through
/// `seed_from_u64`) with the stream id set to `trial_index`, so every trial
/// gets a distinct, non-overlapping stream under the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl RngSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index);
        rng
    }
}

/// Ball counts `B_i(n)` after `step` steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub counts: Vec<u64>,
    pub step: u64,
    pub initial_total: u64,
}

impl UrnState {
    pub fn new(model: &Model, counts: Vec<u64>) -> Result<Self, UrnError> {
        if counts.len() != model.vertex_count() {
            return Err(UrnError::Dimension {
                expected: model.vertex_count(),
                found: counts.len(),
            });
        }
        if let Some(i) = counts.iter().position(|&b| b == 0) {
            return Err(UrnError::EmptyBin(i + 1));
        }
        let initial_total = counts
            .iter()
            .try_fold(0u64, |a, &b| a.checked_add(b))
            .ok_or(UrnError::Overflow)?;
        Ok(Self {
            counts,
            step: 0,
            initial_total,
        })
    }

    /// One ball in every bin.
    pub fn ones(model: &Model) -> Self {
        Self::new(model, vec![1; model.vertex_count()]).expect("unit counts are valid")
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `x_i(n) = B_i(n) / (N0 + n N)`.
    pub fn proportions(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&b| b as f64 / total).collect()
    }
}

/// Everything one step contributes to the recursion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDecomposition {
    pub gamma: f64,
    /// `C(n+1) / N`.
    pub xi: Vec<f64>,
    /// `E[xi(n) | past]`, from the pre-step counts.
    pub expected_xi: Vec<f64>,
    /// `u_n = xi - expected_xi`.
    pub noise: Vec<f64>,
    /// Winning vertex of each competition.
    pub winners: Vec<usize>,
}

impl StepDecomposition {
    /// `delta_{i <- j}` for competition `k`: 1 when `vertex` won it.
    pub fn indicator(&self, competition: usize, vertex: usize) -> u8 {
        u8::from(self.winners[competition] == vertex)
    }
}

/// The process bound to its model, with scratch space reused across steps.
#[derive(Debug, Clone)]
pub struct Urn<'a> {
    model: &'a Model,
    state: UrnState,
    log_counts: Vec<f64>,
    probs: Vec<f64>,
}

impl<'a> Urn<'a> {
    pub fn new(model: &'a Model, state: UrnState) -> Result<Self, UrnError> {
        if state.counts.len() != model.vertex_count() {
            return Err(UrnError::Dimension {
                expected: model.vertex_count(),
                found: state.counts.len(),
            });
        }
        Ok(Self {
            model,
            log_counts: vec![0.0; state.counts.len()],
            probs: Vec::new(),
            state,
        })
    }

    pub fn state(&self) -> &UrnState {
        &self.state
    }

    pub fn into_state(self) -> UrnState {
        self.state
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.state.proportions()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<StepDecomposition, UrnError> {
        let mut out = StepDecomposition::default();
        self.step_into(rng, &mut out)?;
        Ok(out)
    }

    /// Advances one step, writing the decomposition into `out`.
    pub fn step_into<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        out: &mut StepDecomposition,
    ) -> Result<(), UrnError> {
        let m = self.state.counts.len();
        let n_comp = self.model.competition_count();
        let inv_n = 1.0 / n_comp as f64;
        let total = self.state.total();
        total
            .checked_add(n_comp as u64)
            .ok_or(UrnError::Overflow)?;

        out.gamma = 1.0 / (self.state.initial_total as f64 / n_comp as f64 + self.state.step as f64 + 1.0);
        out.xi.clear();
        out.xi.resize(m, 0.0);
        out.expected_xi.clear();
        out.expected_xi.resize(m, 0.0);
        out.winners.clear();

        if self.model.competitions().iter().any(|c| c.alpha != 1.0) {
            for (l, &b) in self.log_counts.iter_mut().zip(&self.state.counts) {
                *l = (b as f64).ln();
            }
        }
        let counts = &self.state.counts;
        for comp in self.model.competitions() {
            let members = &comp.members;
            let winner = if comp.alpha == 1.0 {
                let mass: u64 = members.iter().map(|&j| counts[j]).sum();
                let massf = mass as f64;
                for &j in members {
                    out.expected_xi[j] += inv_n * counts[j] as f64 / massf;
                }
                // exact: P(win) = B_j / mass
                let mut draw = rng.random_range(0..mass);
                let mut winner = members[members.len() - 1];
                for &j in members {
                    if draw < counts[j] {
                        winner = j;
                        break;
                    }
                    draw -= counts[j];
                }
                winner
            } else if members.len() == 2 {
                let (i, j) = (members[0], members[1]);
                let p_i = 1.0 / (1.0 + (comp.alpha * (self.log_counts[j] - self.log_counts[i])).exp());
                out.expected_xi[i] += inv_n * p_i;
                out.expected_xi[j] += inv_n * (1.0 - p_i);
                if rng.random::<f64>() < p_i {
                    i
                } else {
                    j
                }
            } else {
                let top = members
                    .iter()
                    .map(|&j| self.log_counts[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                self.probs.clear();
                self.probs.extend(
                    members
                        .iter()
                        .map(|&j| (comp.alpha * (self.log_counts[j] - top)).exp()),
                );
                let mass: f64 = self.probs.iter().sum();
                for (&j, p) in members.iter().zip(self.probs.iter_mut()) {
                    *p /= mass;
                    out.expected_xi[j] += inv_n * *p;
                }
                let mut draw = rng.random::<f64>();
                let mut winner = members[members.len() - 1];
                for (&j, &p) in members.iter().zip(&self.probs) {
                    if draw < p {
                        winner = j;
                        break;
                    }
                    draw -= p;
                }
                winner
            };
            out.winners.push(winner);
            out.xi[winner] += inv_n;
        }
        for &w in &out.winners {
            self.state.counts[w] += 1;
        }
        self.state.step += 1;
        out.noise.clear();
        out.noise
            .extend(out.xi.iter().zip(&out.expected_xi).map(|(a, b)| a - b));
        Ok(())
    }
}

/// Steps at which the trajectory is recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckpointSchedule {
    /// Powers of two from `2^first_exponent`, plus the final step.
    Geometric { first_exponent: u32 },
    Explicit(Vec<u64>),
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule::Geometric { first_exponent: 0 }
    }
}

impl CheckpointSchedule {
    /// Sorted, deduplicated checkpoints in `1..=n_steps`; always ends with `n_steps` when it is positive.
    pub fn steps(&self, n_steps: u64) -> Vec<u64> {
        let mut out: Vec<u64> = match self {
            CheckpointSchedule::Geometric { first_exponent } => (*first_exponent..64)
                .map(|e| 1u64 << e)
                .take_while(|&s| s <= n_steps)
                .collect(),
            CheckpointSchedule::Explicit(list) => list
                .iter()
                .copied()
                .filter(|&s| s >= 1 && s <= n_steps)
                .collect(),
        };
        if n_steps > 0 {
            out.push(n_steps);
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    /// Recorded steps, starting with 0.
    pub steps: Vec<u64>,
    /// `x(n)` at each recorded step.
    pub trajectory: Vec<Vec<f64>>,
    /// Martingale `M_n = sum_{i<n} gamma_i u_i` at each recorded step.
    pub noise_sums: Vec<Vec<f64>>,
    pub final_state: UrnState,
}

/// Runs `n_steps` steps, recording proportions and cumulative noise at the checkpoints.
pub fn simulate<R: Rng + ?Sized>(
    model: &Model,
    initial: UrnState,
    n_steps: u64,
    rng: &mut R,
    schedule: &CheckpointSchedule,
) -> Result<SimulationOutput, UrnError> {
    n_steps
        .checked_mul(model.competition_count() as u64)
        .and_then(|b| b.checked_add(initial.total()))
        .ok_or(UrnError::Overflow)?;
    let m = model.vertex_count();
    let checkpoints = schedule.steps(n_steps);
    let mut urn = Urn::new(model, initial)?;
    let mut out = SimulationOutput {
        steps: vec![urn.state().step],
        trajectory: vec![urn.proportions()],
        noise_sums: vec![vec![0.0; m]],
        final_state: urn.state().clone(),
    };
    let mut martingale = vec![0.0; m];
    let mut dec = StepDecomposition::default();
    let mut next = checkpoints.iter().peekable();
    for n in 1..=n_steps {
        urn.step_into(rng, &mut dec)?;
        for (acc, u) in martingale.iter_mut().zip(&dec.noise) {
            *acc += dec.gamma * u;
        }
        if next.peek() == Some(&&n) {
            next.next();
            out.steps.push(n);
            out.trajectory.push(urn.proportions());
            out.noise_sums.push(martingale.clone());
        }
    }
    out.final_state = urn.into_state();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::vector_field;
    use crate::graph::{Family, Graph};

    fn model(family: Family, alpha: f64) -> Model {
        Model::uniform(Graph::generate(&family).unwrap(), alpha).unwrap()
    }

    fn win_rate(md: &Model, counts: Vec<u64>, competition: usize, vertex: usize, reps: u32) -> f64 {
        let mut rng = RngSpec::new(11, 0).rng();
        let state = UrnState::new(md, counts).unwrap();
        let wins: u32 = (0..reps)
            .map(|_| {
                let mut urn = Urn::new(md, state.clone()).unwrap();
                urn.step(&mut rng).unwrap().indicator(competition, vertex) as u32
            })
            .sum();
        wins as f64 / reps as f64
    }

    #[test]
    fn k2_win_probabilities() {
        let k2 = model(Family::Complete(2), 1.0);
        let reps = 40_000;
        let tol = 4.0 * (0.25f64 / reps as f64).sqrt();
        assert!((win_rate(&k2, vec![1, 1], 0, 0, reps) - 0.5).abs() < tol);
        assert!((win_rate(&k2, vec![3, 1], 0, 0, reps) - 0.75).abs() < tol);
    }

    #[test]
    fn star_center_wins_with_squared_weight() {
        let s3 = model(Family::Star(3), 2.0);
        let reps = 40_000;
        let tol = 4.0 * (0.25f64 / reps as f64).sqrt();
        // weights 1 and 4
        assert!((win_rate(&s3, vec![1, 1, 2], 0, 2, reps) - 0.8).abs() < tol);
        assert!((win_rate(&s3, vec![1, 1, 2], 1, 2, reps) - 0.8).abs() < tol);
        let dec = Urn::new(&s3, UrnState::new(&s3, vec![1, 1, 2]).unwrap())
            .unwrap()
            .step(&mut RngSpec::new(1, 0).rng())
            .unwrap();
        assert!((dec.expected_xi[2] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn proportions_examples() {
        let k3 = model(Family::Complete(3), 1.0);
        assert_eq!(UrnState::ones(&k3).proportions(), vec![1.0 / 3.0; 3]);
        let after = UrnState {
            counts: vec![2, 2, 2],
            step: 1,
            initial_total: 3,
        };
        assert_eq!(after.proportions(), vec![1.0 / 3.0; 3]);

        let s3 = model(Family::Star(3), 1.0);
        let out = simulate(
            &s3,
            UrnState::ones(&s3),
            10,
            &mut RngSpec::new(5, 0).rng(),
            &CheckpointSchedule::default(),
        )
        .unwrap();
        assert_eq!(out.final_state.total(), 23);
        let x = out.trajectory.last().unwrap();
        for (xi, &b) in x.iter().zip(&out.final_state.counts) {
            assert_eq!(*xi, b as f64 / 23.0);
        }
    }

    #[test]
    fn conservation_and_identity_every_step() {
        let md = model(Family::Cycle(5), 0.7);
        let mut urn = Urn::new(&md, UrnState::new(&md, vec![1, 2, 3, 1, 1]).unwrap()).unwrap();
        let mut rng = RngSpec::new(3, 4).rng();
        for n in 1..=2000u64 {
            let x = urn.proportions();
            let f = vector_field(&md, &x).unwrap();
            let dec = urn.step(&mut rng).unwrap();
            assert_eq!(urn.state().total(), 8 + n * 5);
            let y = urn.proportions();
            for i in 0..5 {
                let err = y[i] - x[i] - dec.gamma * (f[i] + dec.noise[i]);
                assert!(err.abs() <= 1e-12, "step {n}: {err}");
                assert!(dec.xi[i] >= 0.0 && dec.xi[i] <= md.degree(i) as f64 / 5.0 + 1e-15);
            }
            let xi_sum: f64 = dec.xi.iter().sum();
            assert!((xi_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn k2_single_step_noise_outcomes() {
        let k2 = model(Family::Complete(2), 1.0);
        for seed in 0..20 {
            let mut urn = Urn::new(&k2, UrnState::ones(&k2)).unwrap();
            let dec = urn.step(&mut RngSpec::new(seed, 0).rng()).unwrap();
            let u = &dec.noise;
            assert!(u == &vec![0.5, -0.5] || u == &vec![-0.5, 0.5]);
            assert!(dec.gamma * u.iter().map(|v| v * v).sum::<f64>().sqrt() <= dec.gamma * 2.0);
        }
    }

    #[test]
    fn rejects_bad_states() {
        let k3 = model(Family::Complete(3), 1.0);
        assert_eq!(UrnState::new(&k3, vec![1, 0, 1]), Err(UrnError::EmptyBin(2)));
        assert_eq!(
            UrnState::new(&k3, vec![1, 1]),
            Err(UrnError::Dimension {
                expected: 3,
                found: 2
            })
        );
        let big = UrnState::new(&k3, vec![u64::MAX / 4; 3]).unwrap();
        assert_eq!(
            simulate(&k3, big, u64::MAX / 2, &mut RngSpec::new(0, 0).rng(), &CheckpointSchedule::default()),
            Err(UrnError::Overflow)
        );
    }

    #[test]
    fn zero_steps_records_initial_point() {
        let k3 = model(Family::Complete(3), 1.0);
        let out = simulate(
            &k3,
            UrnState::ones(&k3),
            0,
            &mut RngSpec::new(0, 0).rng(),
            &CheckpointSchedule::default(),
        )
        .unwrap();
        assert_eq!(out.steps, vec![0]);
        assert_eq!(out.trajectory, vec![vec![1.0 / 3.0; 3]]);
    }

    #[test]
    fn schedules() {
        assert_eq!(CheckpointSchedule::default().steps(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(
            CheckpointSchedule::Geometric { first_exponent: 8 }.steps(1000),
            vec![256, 512, 1000]
        );
        assert_eq!(CheckpointSchedule::Explicit(vec![5, 0, 3, 99]).steps(10), vec![3, 5, 10]);
        assert!(CheckpointSchedule::default().steps(0).is_empty());
    }

    #[test]
    fn deterministic_per_stream_and_distinct_across_streams() {
        let md = model(Family::Complete(3), 1.0);
        let run = |trial| {
            simulate(
                &md,
                UrnState::ones(&md),
                500,
                &mut RngSpec::new(42, trial).rng(),
                &CheckpointSchedule::default(),
            )
            .unwrap()
        };
        assert_eq!(run(0), run(0));
        assert_ne!(run(0).final_state, run(1).final_state);
    }
}
