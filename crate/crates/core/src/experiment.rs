//! Monte Carlo of the two-post spin experiment and its three-column logbook.
//!
//! Each trial picks one mark at each post, runs one of three outcome models
//! and records `(left mark, right mark, S|N)`. The right-hand particle is the
//! anti-parallel partner, so the models compare `a` with `−b`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::correlation::{sample_tetrahedral, Outcome, OutcomePair, SameFlag};
use crate::sphere::{uniform_unit_vector, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("{0:?} post has no marks")]
    EmptyPost(Post),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("mark '{id}' direction has norm {norm}, expected 1")]
    NotUnit { id: String, norm: f64 },
    #[error("mark '{0}' appears twice in one post")]
    DuplicateMark(String),
    #[error("logbook is empty")]
    EmptyLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Post {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mark {
    pub id: String,
    pub direction: Vec3,
}

/// The marks on one instrument mounting and their (ground-truth) directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PostConfig {
    pub post: Post,
    pub marks: Vec<Mark>,
}

pub const UNIT_NORM_TOL: f64 = 1e-12;

impl PostConfig {
    pub fn new(post: Post, marks: Vec<Mark>) -> Result<Self, ExperimentError> {
        if marks.is_empty() {
            return Err(ExperimentError::EmptyPost(post));
        }
        for (idx, m) in marks.iter().enumerate() {
            let norm = m.direction.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(ExperimentError::NotUnit { id: m.id.clone(), norm });
            }
            if marks[..idx].iter().any(|o| o.id == m.id) {
                return Err(ExperimentError::DuplicateMark(m.id.clone()));
            }
        }
        Ok(Self { post, marks })
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.marks.iter().position(|m| m.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Singlet prediction: `S` with probability `(1 − a·b)/2`.
    Qm,
    /// Shared random spin axis `n`; each side reports the sign of its
    /// projection (the right side sees `−n`).
    ClassicalSign,
    /// Hidden cosines drawn from the tetrahedral density at `Z_AB = −a·b`.
    Tetrahedral,
}

/// One logbook line. Mark fields index into the post configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutcomeRecord {
    pub left_mark: u32,
    pub right_mark: u32,
    pub outcomes: OutcomePair,
}

impl OutcomeRecord {
    pub fn result(&self) -> SameFlag {
        self.outcomes.same_flag()
    }
}

/// Chooses which marks are used in a trial.
pub trait MarkSchedule {
    fn pick<R: Rng + ?Sized>(
        &mut self,
        trial: u64,
        n_left: usize,
        n_right: usize,
        rng: &mut R,
    ) -> (usize, usize);
}

/// Independent uniform choice at both posts.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformMarks;

impl MarkSchedule for UniformMarks {
    fn pick<R: Rng + ?Sized>(
        &mut self,
        _trial: u64,
        n_left: usize,
        n_right: usize,
        rng: &mut R,
    ) -> (usize, usize) {
        (rng.random_range(0..n_left), rng.random_range(0..n_right))
    }
}

/// Outcome of one trial for the given instrument directions.
pub fn trial_outcome<R: Rng + ?Sized>(model: Model, a: &Vec3, b: &Vec3, rng: &mut R) -> OutcomePair {
    match model {
        Model::Qm => {
            let p_same = ((1.0 - a.dot(b)) / 2.0).clamp(0.0, 1.0);
            let left = if rng.random::<f64>() < 0.5 { Outcome::Up } else { Outcome::Down };
            let same = rng.random::<f64>() < p_same;
            let right = match (same, left) {
                (true, x) => x,
                (false, Outcome::Up) => Outcome::Down,
                (false, Outcome::Down) => Outcome::Up,
            };
            OutcomePair::new(left, right)
        }
        Model::ClassicalSign => {
            let n = uniform_unit_vector(rng);
            OutcomePair::new(Outcome::from_sign(a.dot(&n)), Outcome::from_sign(-b.dot(&n)))
        }
        Model::Tetrahedral => {
            let z_ab = (-a.dot(b)).clamp(-1.0, 1.0);
            let (z_a, z_b) = sample_tetrahedral(z_ab, rng).expect("z_ab clamped to [-1, 1]");
            OutcomePair::new(Outcome::from_sign(z_a), Outcome::from_sign(z_b))
        }
    }
}

/// Runs `n_trials` with independently, uniformly chosen marks.
pub fn run_experiment<R: Rng + ?Sized>(
    left: &PostConfig,
    right: &PostConfig,
    n_trials: u64,
    model: Model,
    rng: &mut R,
) -> Result<Vec<OutcomeRecord>, ExperimentError> {
    run_experiment_with(left, right, n_trials, model, &mut UniformMarks, rng)
}

/// Like [`run_experiment`] with a custom mark schedule.
pub fn run_experiment_with<S: MarkSchedule, R: Rng + ?Sized>(
    left: &PostConfig,
    right: &PostConfig,
    n_trials: u64,
    model: Model,
    schedule: &mut S,
    rng: &mut R,
) -> Result<Vec<OutcomeRecord>, ExperimentError> {
    if left.is_empty() {
        return Err(ExperimentError::EmptyPost(Post::Left));
    }
    if right.is_empty() {
        return Err(ExperimentError::EmptyPost(Post::Right));
    }
    if n_trials == 0 {
        return Err(ExperimentError::NoTrials);
    }
    let mut log = Vec::with_capacity(n_trials as usize);
    for trial in 0..n_trials {
        let (li, ri) = schedule.pick(trial, left.len(), right.len(), rng);
        let outcomes = trial_outcome(model, &left.marks[li].direction, &right.marks[ri].direction, rng);
        log.push(OutcomeRecord {
            left_mark: li as u32,
            right_mark: ri as u32,
            outcomes,
        });
    }
    Ok(log)
}

/// Counts for one `(left mark, right mark)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairStats {
    pub n_same: u64,
    pub n_total: u64,
    pub n_left_up: u64,
    pub n_right_up: u64,
}

impl PairStats {
    pub fn p_hat(&self) -> f64 {
        self.n_same as f64 / self.n_total as f64
    }

    /// Binomial standard error `√(p̂(1 − p̂)/n)`.
    pub fn std_err(&self) -> f64 {
        let p = self.p_hat();
        (p * (1.0 - p) / self.n_total as f64).sqrt()
    }
}

/// Pairwise statistics keyed by `(left mark, right mark)`. Pairs that never
/// occurred are absent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationTable {
    pub rows: BTreeMap<(u32, u32), PairStats>,
}

impl CorrelationTable {
    pub fn get(&self, left: u32, right: u32) -> Option<&PairStats> {
        self.rows.get(&(left, right))
    }

    pub fn total_trials(&self) -> u64 {
        self.rows.values().map(|s| s.n_total).sum()
    }

    /// Folds one record in. Only the `S`/`N` column is needed; per-side
    /// counts are kept when the outcomes are known.
    pub fn add(&mut self, left: u32, right: u32, result: SameFlag, outcomes: Option<OutcomePair>) {
        let row = self.rows.entry((left, right)).or_default();
        row.n_total += 1;
        if result == SameFlag::S {
            row.n_same += 1;
        }
        if let Some(o) = outcomes {
            row.n_left_up += (o.left == Outcome::Up) as u64;
            row.n_right_up += (o.right == Outcome::Up) as u64;
        }
    }
}

pub fn aggregate(log: &[OutcomeRecord]) -> Result<CorrelationTable, ExperimentError> {
    if log.is_empty() {
        return Err(ExperimentError::EmptyLog);
    }
    let mut table = CorrelationTable::default();
    for r in log {
        table.add(r.left_mark, r.right_mark, r.result(), Some(r.outcomes));
    }
    Ok(table)
}
