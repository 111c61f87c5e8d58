//! Recovering mark directions on a single sphere from the logbook alone.
//!
//! Pairwise same-outcome frequencies are turned into estimated dot products
//! through an assumed angle law, then a unit-vector embedding is fitted by
//! exact alternating per-vector least squares.
#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector6};
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::experiment::{CorrelationTable, PostConfig};
use crate::sphere::{angle_between, uniform_unit_vector, Vec3};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconstructError {
    #[error("cross gram has no present entries")]
    Empty,
    #[error("table refers to mark ({left}, {right}) outside a {n_left}x{n_right} gram")]
    OutOfRange { left: u32, right: u32, n_left: usize, n_right: usize },
    #[error("mark sets differ: embedding {embedded} vs truth {truth}")]
    MarkMismatch { embedded: usize, truth: usize },
    #[error("dimension must be at least 1")]
    ZeroSize,
}

/// Assumed relation between the same-outcome probability and the angle
/// between the two instrument orientations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Law {
    /// `p = sin²(∠/2)`, so the dot product is `1 − 2p`.
    SinSq,
    /// `p = ∠/π`.
    Linear,
    /// The complementary twin `p = cos²(∠/2)`, for logbooks that count
    /// agreement the other way round.
    CosSq,
}

impl Law {
    /// Dot product `a·b` implied by the probability `p`.
    pub fn entry(self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            Law::SinSq => 1.0 - 2.0 * p,
            Law::Linear => (PI * p).cos(),
            Law::CosSq => 2.0 * p - 1.0,
        }
    }

    /// Probability the law assigns to directions with dot product `dot`.
    pub fn probability(self, dot: f64) -> f64 {
        let d = dot.clamp(-1.0, 1.0);
        match self {
            Law::SinSq => (1.0 - d) / 2.0,
            Law::Linear => d.acos() / PI,
            Law::CosSq => (1.0 + d) / 2.0,
        }
    }
}

/// Estimated left·right dot products with per-entry weights. A weight of 0
/// marks an absent entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGram {
    n_left: usize,
    n_right: usize,
    entries: Vec<f64>,
    weights: Vec<f64>,
}

impl CrossGram {
    /// All entries absent.
    pub fn new(n_left: usize, n_right: usize) -> Result<Self, ReconstructError> {
        if n_left == 0 || n_right == 0 {
            return Err(ReconstructError::ZeroSize);
        }
        Ok(Self {
            n_left,
            n_right,
            entries: vec![0.0; n_left * n_right],
            weights: vec![0.0; n_left * n_right],
        })
    }

    /// Exact gram of known directions, unit weights.
    pub fn from_directions(left: &[Vec3], right: &[Vec3]) -> Result<Self, ReconstructError> {
        let mut g = Self::new(left.len(), right.len())?;
        for (i, a) in left.iter().enumerate() {
            for (j, b) in right.iter().enumerate() {
                g.set(i, j, a.dot(b), 1.0);
            }
        }
        Ok(g)
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    /// Stores an entry, clamped to `[-1, 1]`. Non-positive weights mark the
    /// entry absent.
    pub fn set(&mut self, i: usize, j: usize, value: f64, weight: f64) {
        let idx = i * self.n_right + j;
        if weight > 0.0 {
            self.entries[idx] = value.clamp(-1.0, 1.0);
            self.weights[idx] = weight;
        } else {
            self.entries[idx] = 0.0;
            self.weights[idx] = 0.0;
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.n_right + j;
        (self.weights[idx] > 0.0).then(|| self.entries[idx])
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_right + j]
    }

    pub fn present_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Entries as a matrix with absent entries zero-filled.
    pub fn zero_filled(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_left, self.n_right, |i, j| self.entry(i, j).unwrap_or(0.0))
    }
}

/// Builds the cross gram for `n_left × n_right` marks. Pairs missing from
/// the table stay absent; weights are the trial counts.
pub fn gram_from_table(
    table: &CorrelationTable,
    law: Law,
    n_left: usize,
    n_right: usize,
) -> Result<CrossGram, ReconstructError> {
    let mut g = CrossGram::new(n_left, n_right)?;
    for (&(l, r), stats) in &table.rows {
        if l as usize >= n_left || r as usize >= n_right {
            return Err(ReconstructError::OutOfRange { left: l, right: r, n_left, n_right });
        }
        if stats.n_total > 0 {
            g.set(l as usize, r as usize, law.entry(stats.p_hat()), stats.n_total as f64);
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub left: Vec<Vec3>,
    pub right: Vec<Vec3>,
    /// Weighted RMS of `â_i·b̂_j − c_ij` over present entries.
    pub stress: f64,
    pub iterations: usize,
    /// Gradient below tolerance, or a sweep that could not lower the
    /// stress; false only when the sweep budget ran out.
    pub converged: bool,
    /// Norm of the Riemannian gradient of the weighted squared residual.
    pub grad_norm: f64,
    /// Stress after each sweep of the winning start, initial value first.
    pub history: Vec<f64>,
    /// Which start won; 0 is the spectral start when enabled.
    pub start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedOptions {
    pub max_iters: usize,
    /// Gradient-norm threshold for convergence.
    pub tol: f64,
    /// Random starts in addition to the spectral one.
    pub random_starts: usize,
    pub spectral_init: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-12, random_starts: 4, spectral_init: true }
    }
}

/// Fits unit vectors with the default start set.
pub fn embed<R: Rng + ?Sized>(
    gram: &CrossGram,
    max_iters: usize,
    tol: f64,
    rng: &mut R,
) -> Result<Embedding, ReconstructError> {
    let opts = EmbedOptions { max_iters, tol, ..EmbedOptions::default() };
    embed_with(gram, &opts, rng)
}

/// Runs every start to completion and keeps the lowest stress; ties go to
/// the earliest start.
pub fn embed_with<R: Rng + ?Sized>(
    gram: &CrossGram,
    opts: &EmbedOptions,
    rng: &mut R,
) -> Result<Embedding, ReconstructError> {
    if gram.present_count() == 0 {
        return Err(ReconstructError::Empty);
    }
    let mut starts: Vec<(Vec<Vec3>, Vec<Vec3>)> = Vec::new();
    if opts.spectral_init {
        starts.push(spectral_start(gram));
    }
    for _ in 0..opts.random_starts {
        let l = (0..gram.n_left).map(|_| uniform_unit_vector(rng)).collect();
        let r = (0..gram.n_right).map(|_| uniform_unit_vector(rng)).collect();
        starts.push((l, r));
    }
    if starts.is_empty() {
        let l = (0..gram.n_left).map(|_| uniform_unit_vector(rng)).collect();
        let r = (0..gram.n_right).map(|_| uniform_unit_vector(rng)).collect();
        starts.push((l, r));
    }

    let mut best: Option<Embedding> = None;
    for (idx, (l, r)) in starts.into_iter().enumerate() {
        let e = refine(gram, l, r, opts, idx);
        if best.as_ref().is_none_or(|b| e.stress < b.stress) {
            best = Some(e);
        }
    }
    Ok(best.expect("at least one start"))
}

fn refine(gram: &CrossGram, mut left: Vec<Vec3>, mut right: Vec<Vec3>, opts: &EmbedOptions, start: usize) -> Embedding {
    let mut history = vec![stress(gram, &left, &right)];
    let mut grad = grad_norm(gram, &left, &right);
    let mut iterations = 0;
    let mut converged = grad <= opts.tol;
    while !converged && iterations < opts.max_iters {
        sweep(gram, &mut left, &mut right);
        iterations += 1;
        let s = stress(gram, &left, &right);
        grad = grad_norm(gram, &left, &right);
        let prev = *history.last().expect("non-empty");
        history.push(s);
        if grad <= opts.tol {
            converged = true;
        } else if s >= prev {
            // every block is already at its exact minimizer: a stationary point
            converged = true;
            break;
        }
    }
    Embedding {
        stress: *history.last().expect("non-empty"),
        left,
        right,
        iterations,
        converged,
        grad_norm: grad,
        history,
        start,
    }
}

/// One pass of exact block updates: every left vector, then every right one.
fn sweep(gram: &CrossGram, left: &mut [Vec3], right: &mut [Vec3]) {
    for i in 0..gram.n_left {
        let terms = || (0..gram.n_right).map(|j| (gram.weight(i, j), gram.entries[i * gram.n_right + j], right[j]));
        left[i] = update(terms, left[i]);
    }
    for j in 0..gram.n_right {
        let terms = || (0..gram.n_left).map(|i| (gram.weight(i, j), gram.entries[i * gram.n_right + j], left[i]));
        right[j] = update(terms, right[j]);
    }
}

/// Block minimizer for one vector, kept only if the residual it leaves is no
/// larger. The residual is summed directly: the expanded quadratic carries a
/// constant that swamps differences near an exact fit.
fn update<I: Iterator<Item = (f64, f64, Vec3)>>(terms: impl Fn() -> I, current: Vec3) -> Vec3 {
    let (m, v) = normal_equations(terms());
    let candidate = best_unit_vector(&m, &v, &current);
    let residual = |x: &Vec3| -> f64 { terms().map(|(w, c, b)| w * (x.dot(&b) - c).powi(2)).sum() };
    if residual(&candidate) <= residual(&current) {
        candidate
    } else {
        current
    }
}

fn normal_equations(terms: impl Iterator<Item = (f64, f64, Vec3)>) -> (Matrix3<f64>, Vec3) {
    let mut m = Matrix3::zeros();
    let mut v = Vec3::zeros();
    for (w, c, b) in terms {
        if w > 0.0 {
            m += w * b * b.transpose();
            v += w * c * b;
        }
    }
    (m, v)
}

/// Global minimizer of `xᵀMx − 2vᵀx` over the unit sphere.
///
/// The optimum is `x = (M − λI)⁻¹v` with `λ ≤ λ_min(M)` chosen so `|x| = 1`;
/// `λ` is found by bisection on `[λ_min − |v|, λ_min]`. When `v` has no
/// component along the bottom eigenvector the remaining length is put on
/// that eigenvector, on the side of `current`.
pub fn best_unit_vector(m: &Matrix3<f64>, v: &Vec3, current: &Vec3) -> Vec3 {
    let eig = SymmetricEigen::new(*m);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu: [f64; 3] = order.map(|k| eig.eigenvalues[k]);
    let q: [Vec3; 3] = order.map(|k| eig.eigenvectors.column(k).into_owned());
    let vt: [f64; 3] = [q[0].dot(v), q[1].dot(v), q[2].dot(v)];

    let norm_sq = |lam: f64| -> f64 {
        (0..3)
            .map(|k| {
                let d = mu[k] - lam;
                if d > 0.0 { vt[k] * vt[k] / (d * d) } else if vt[k] == 0.0 { 0.0 } else { f64::INFINITY }
            })
            .sum()
    };

    let mut hi = mu[0];
    let mut lo = mu[0] - v.norm();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_sq(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let lam = lo;
    let mut x = Vec3::zeros();
    for k in 0..3 {
        let d = mu[k] - lam;
        if d > 0.0 {
            x += (vt[k] / d) * q[k];
        }
    }
    let len_sq = x.norm_squared();
    if len_sq < 1.0 {
        let tau = (1.0 - len_sq).sqrt();
        let side = if current.dot(&q[0]) < 0.0 { -1.0 } else { 1.0 };
        x += side * tau * q[0];
    }
    let n = x.norm();
    if n > 0.0 { x / n } else { *current }
}

/// Weighted RMS residual over present entries.
pub fn stress(gram: &CrossGram, left: &[Vec3], right: &[Vec3]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..gram.n_left {
        for j in 0..gram.n_right {
            let w = gram.weight(i, j);
            if w > 0.0 {
                let d = left[i].dot(&right[j]) - gram.entries[i * gram.n_right + j];
                num += w * d * d;
                den += w;
            }
        }
    }
    if den > 0.0 { (num / den).sqrt() } else { 0.0 }
}

fn grad_norm(gram: &CrossGram, left: &[Vec3], right: &[Vec3]) -> f64 {
    let tangent = |x: &Vec3, g: Vec3| g - g.dot(x) * x;
    let mut total = 0.0;
    for i in 0..gram.n_left {
        let (m, v) = normal_equations((0..gram.n_right).map(|j| (gram.weight(i, j), gram.entries[i * gram.n_right + j], right[j])));
        total += tangent(&left[i], 2.0 * (m * left[i] - v)).norm_squared();
    }
    for j in 0..gram.n_right {
        let (m, v) = normal_equations((0..gram.n_left).map(|i| (gram.weight(i, j), gram.entries[i * gram.n_right + j], left[i])));
        total += tangent(&right[j], 2.0 * (m * right[j] - v)).norm_squared();
    }
    total.sqrt()
}

/// Start from the top-3 factorization of the zero-filled gram.
///
/// With `C ≈ L Rᵀ`, any `a_i = G l_i`, `b_j = G⁻ᵀ r_j` reproduces `C`; the
/// symmetric `M = GᵀG` is fitted by least squares to `l_iᵀ M l_i = 1`
/// (or the right-hand analogue when the left post is too small) and the
/// vectors are finally normalized.
pub fn spectral_start(gram: &CrossGram) -> (Vec<Vec3>, Vec<Vec3>) {
    let c = gram.zero_filled();
    let svd = c.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let rank = svd.singular_values.len().min(3);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let factor = |row: usize, basis: &dyn Fn(usize, usize) -> f64| -> Vec3 {
        let mut x = Vec3::zeros();
        for (d, &k) in idx.iter().take(rank).enumerate() {
            x[d] = basis(row, k) * svd.singular_values[k].sqrt();
        }
        x
    };
    let l: Vec<Vec3> = (0..gram.n_left).map(|i| factor(i, &|r, k| u[(r, k)])).collect();
    let r: Vec<Vec3> = (0..gram.n_right).map(|j| factor(j, &|r, k| vt[(k, r)])).collect();

    // fit on the larger post; a right-hand fit gives M⁻¹
    let (rows, inverse) = if l.len() >= r.len() { (&l, false) } else { (&r, true) };
    let fitted = fit_norm_form(rows);
    let m = if inverse { fitted.and_then(|n| n.try_inverse()) } else { fitted };
    let (g, g_inv_t) = match m.and_then(sqrt_pd) {
        Some((s, s_inv)) => (s, s_inv),
        None => (Matrix3::identity(), Matrix3::identity()),
    };
    let unit = |x: Vec3| {
        let n = x.norm();
        if n > 0.0 { x / n } else { Vec3::z() }
    };
    (
        l.into_iter().map(|x| unit(g * x)).collect(),
        r.into_iter().map(|x| unit(g_inv_t * x)).collect(),
    )
}

fn fit_norm_form(rows: &[Vec3]) -> Option<Matrix3<f64>> {
    if rows.is_empty() {
        return None;
    }
    let design = DMatrix::from_fn(rows.len(), 6, |i, c| {
        let x = rows[i];
        let f = Vector6::new(x[0] * x[0], x[1] * x[1], x[2] * x[2], 2.0 * x[0] * x[1], 2.0 * x[0] * x[2], 2.0 * x[1] * x[2]);
        f[c]
    });
    let rhs = DVector::from_element(rows.len(), 1.0);
    let sol = design.svd(true, true).solve(&rhs, 1e-12).ok()?;
    Some(Matrix3::new(sol[0], sol[3], sol[4], sol[3], sol[1], sol[5], sol[4], sol[5], sol[2]))
}

/// Symmetric square root and its inverse, eigenvalues floored to keep the
/// result positive definite.
fn sqrt_pd(m: Matrix3<f64>) -> Option<(Matrix3<f64>, Matrix3<f64>)> {
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.max();
    if !(top > 0.0) {
        return None;
    }
    let floor = top * 1e-6;
    let mut s = Matrix3::zeros();
    let mut s_inv = Matrix3::zeros();
    for k in 0..3 {
        let lam = eig.eigenvalues[k].max(floor);
        let q = eig.eigenvectors.column(k);
        s += lam.sqrt() * q * q.transpose();
        s_inv += (1.0 / lam.sqrt()) * q * q.transpose();
    }
    Some((s, s_inv))
}

/// Angles between marks of the same post, `(left, right)`.
pub fn intra_post_angles(e: &Embedding) -> (DMatrix<f64>, DMatrix<f64>) {
    let angles = |v: &[Vec3]| {
        DMatrix::from_fn(v.len(), v.len(), |i, k| if i == k { 0.0 } else { angle_between(&v[i], &v[k]) })
    };
    (angles(&e.left), angles(&e.right))
}

/// Singular values of the recovered cross matrix `[â_i·b̂_j]`, descending.
pub fn cross_singular_values(e: &Embedding) -> Vec<f64> {
    let c = DMatrix::from_fn(e.left.len(), e.right.len(), |i, j| e.left[i].dot(&e.right[j]));
    let mut s: Vec<f64> = c.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Best orthogonal map (rotation or rotoreflection) taking `from` onto `to`
/// in the least-squares sense.
pub fn procrustes(from: &[Vec3], to: &[Vec3]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (x, y) in from.iter().zip(to) {
        h += y * x.transpose();
    }
    let svd = h.svd(true, true);
    svd.u.expect("requested") * svd.v_t.expect("requested")
}

/// RMS angular error (radians) over all marks after Procrustes alignment of
/// the embedding to the ground-truth directions. Marks pair up by position.
pub fn align_to_truth(e: &Embedding, left: &PostConfig, right: &PostConfig) -> Result<f64, ReconstructError> {
    if e.left.len() != left.len() {
        return Err(ReconstructError::MarkMismatch { embedded: e.left.len(), truth: left.len() });
    }
    if e.right.len() != right.len() {
        return Err(ReconstructError::MarkMismatch { embedded: e.right.len(), truth: right.len() });
    }
    let from: Vec<Vec3> = e.left.iter().chain(&e.right).copied().collect();
    let to: Vec<Vec3> = left.marks.iter().chain(&right.marks).map(|m| m.direction).collect();
    let q = procrustes(&from, &to);
    let sum: f64 = from.iter().zip(&to).map(|(x, y)| angle_between(&(q * x), y).powi(2)).sum();
    Ok((sum / from.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Mark, PairStats, Post};
    use alloc::format;
    use nalgebra::Rotation3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(m: &Matrix3<f64>, v: &Vec3, x: &Vec3) -> f64 {
        x.dot(&(m * x)) - 2.0 * v.dot(x)
    }

    fn random_dirs(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n).map(|_| uniform_unit_vector(rng)).collect()
    }

    fn post(p: Post, dirs: &[Vec3]) -> PostConfig {
        let marks = dirs
            .iter()
            .enumerate()
            .map(|(i, d)| Mark { id: format!("m{i}"), direction: *d })
            .collect();
        PostConfig::new(p, marks).unwrap()
    }

    fn gram_under_law(left: &[Vec3], right: &[Vec3], truth: Law, assumed: Law) -> CrossGram {
        let mut g = CrossGram::new(left.len(), right.len()).unwrap();
        for (i, a) in left.iter().enumerate() {
            for (j, b) in right.iter().enumerate() {
                g.set(i, j, assumed.entry(truth.probability(a.dot(b))), 1.0);
            }
        }
        g
    }

    #[test]
    fn law_entries() {
        assert_eq!(Law::SinSq.entry(0.0), 1.0);
        assert_eq!(Law::SinSq.entry(1.0), -1.0);
        assert!((Law::SinSq.entry(0.73) + 0.46).abs() < 1e-15);
        // a 10% probability reads as 18 degrees under the linear law
        assert!((Law::Linear.entry(0.1) - (18.0f64).to_radians().cos()).abs() < 1e-15);
        assert_eq!(Law::Linear.entry(0.0), 1.0);
        assert!((Law::Linear.entry(1.0) + 1.0).abs() < 1e-15);
        for law in [Law::SinSq, Law::Linear, Law::CosSq] {
            for d in [-0.9, -0.2, 0.0, 0.4, 0.95] {
                assert!((law.entry(law.probability(d)) - d).abs() < 1e-12);
            }
        }
        // the complementary law agrees with sin² on the opposite column
        assert!((Law::CosSq.entry(0.3) - Law::SinSq.entry(0.7)).abs() < 1e-15);
    }

    #[test]
    fn gram_from_table_marks_missing_pairs_absent() {
        let mut t = CorrelationTable::default();
        t.rows.insert((0, 1), PairStats { n_same: 73, n_total: 100, n_left_up: 0, n_right_up: 0 });
        let g = gram_from_table(&t, Law::SinSq, 2, 2).unwrap();
        assert!((g.entry(0, 1).unwrap() + 0.46).abs() < 1e-12);
        assert_eq!(g.weight(0, 1), 100.0);
        assert_eq!(g.entry(0, 0), None);
        assert_eq!(g.present_count(), 1);
        assert!(matches!(gram_from_table(&t, Law::SinSq, 1, 1), Err(ReconstructError::OutOfRange { .. })));
        let empty = CrossGram::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(embed(&empty, 10, 1e-9, &mut rng), Err(ReconstructError::Empty));
    }

    #[test]
    fn single_entry() {
        let mut g = CrossGram::new(1, 1).unwrap();
        g.set(0, 0, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = embed(&g, 100, 1e-12, &mut rng).unwrap();
        assert!(e.stress < 1e-12);
        assert!((e.left[0] - e.right[0]).norm() < 1e-9);
    }

    #[test]
    fn best_unit_vector_beats_sampled_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let b = random_dirs(4, &mut rng);
            let (m, v) = normal_equations(b.iter().map(|x| (rng.random::<f64>() + 0.1, 2.0 * rng.random::<f64>() - 1.0, *x)));
            let x = best_unit_vector(&m, &v, &Vec3::x());
            assert!((x.norm() - 1.0).abs() < 1e-12);
            let fx = quadratic(&m, &v, &x);
            for _ in 0..2000 {
                let y = uniform_unit_vector(&mut rng);
                assert!(fx <= quadratic(&m, &v, &y) + 1e-12);
            }
        }
    }

    #[test]
    fn best_unit_vector_hard_case() {
        // v = 0: any bottom eigenvector is optimal
        let m = Matrix3::from_diagonal(&Vec3::new(3.0, 1.0, 2.0));
        let x = best_unit_vector(&m, &Vec3::zeros(), &Vec3::new(0.1, -1.0, 0.1).normalize());
        assert!((x - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn exact_gram_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (l, r) = (random_dirs(8, &mut rng), random_dirs(8, &mut rng));
        let g = CrossGram::from_directions(&l, &r).unwrap();
        let e = embed(&g, 2000, 1e-12, &mut rng).unwrap();
        assert!(e.stress <= 1e-9, "{}", e.stress);
        for v in e.left.iter().chain(&e.right) {
            assert!((v.norm() - 1.0).abs() < 1e-9);
        }
        let rms = align_to_truth(&e, &post(Post::Left, &l), &post(Post::Right, &r)).unwrap();
        assert!(rms <= 1e-9, "{rms}");

        let (al, ar) = intra_post_angles(&e);
        for i in 0..8 {
            assert_eq!(al[(i, i)], 0.0);
            for k in 0..8 {
                assert!((al[(i, k)] - angle_between(&l[i], &l[k])).abs() < 1e-6);
                assert!((ar[(i, k)] - angle_between(&r[i], &r[k])).abs() < 1e-6);
                assert_eq!(al[(i, k)], al[(k, i)]);
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                assert!((e.left[i].dot(&e.right[j]) - g.entry(i, j).unwrap()).abs() < 1e-9);
            }
        }
        let s = cross_singular_values(&e);
        assert!(s[3..].iter().all(|&x| x <= 1e-9 * s[0]), "{s:?}");
    }

    #[test]
    fn random_starts_alone_reach_the_exact_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (l, r) = (random_dirs(6, &mut rng), random_dirs(5, &mut rng));
        let g = CrossGram::from_directions(&l, &r).unwrap();
        let opts = EmbedOptions { max_iters: 20_000, tol: 1e-12, random_starts: 4, spectral_init: false };
        let e = embed_with(&g, &opts, &mut rng).unwrap();
        assert!(e.stress < 1e-6, "{}", e.stress);
    }

    #[test]
    fn sweeps_never_increase_stress() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (l, r) = (random_dirs(8, &mut rng), random_dirs(8, &mut rng));
        let g = gram_under_law(&l, &r, Law::SinSq, Law::Linear);
        let opts = EmbedOptions { max_iters: 500, tol: 1e-14, random_starts: 3, spectral_init: false };
        let e = embed_with(&g, &opts, &mut rng).unwrap();
        for w in e.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{w:?}");
        }
    }

    #[test]
    fn linear_law_cannot_be_embedded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (l, r) = (random_dirs(8, &mut rng), random_dirs(8, &mut rng));
        let g = gram_under_law(&l, &r, Law::SinSq, Law::Linear);
        let e = embed(&g, 2000, 1e-12, &mut rng).unwrap();
        assert!(e.stress >= 1e-2, "{}", e.stress);
    }

    #[test]
    fn missing_entries_get_no_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (l, r) = (random_dirs(8, &mut rng), random_dirs(8, &mut rng));
        let mut g = CrossGram::from_directions(&l, &r).unwrap();
        // poison then remove an entry: it must not influence the fit
        g.set(2, 5, -1.0, 0.0);
        g.set(4, 1, 0.0, 0.0);
        let e = embed(&g, 5000, 1e-12, &mut rng).unwrap();
        assert!(e.stress <= 1e-9, "{} {} {} {} {}", e.stress, e.iterations, e.grad_norm, e.start, e.converged);
    }

    #[test]
    fn stress_and_alignment_are_gauge_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (l, r) = (random_dirs(5, &mut rng), random_dirs(4, &mut rng));
        let g = gram_under_law(&l, &r, Law::SinSq, Law::Linear);
        let e = embed(&g, 500, 1e-12, &mut rng).unwrap();
        let truth = (post(Post::Left, &l), post(Post::Right, &r));
        let base = align_to_truth(&e, &truth.0, &truth.1).unwrap();

        let rot = Rotation3::from_scaled_axis(Vec3::new(0.3, -1.2, 0.7)).into_inner();
        let reflect = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        for q in [rot, rot * reflect] {
            let moved = Embedding {
                left: e.left.iter().map(|v| q * v).collect(),
                right: e.right.iter().map(|v| q * v).collect(),
                ..e.clone()
            };
            assert!((stress(&g, &moved.left, &moved.right) - e.stress).abs() < 1e-12);
            let again = align_to_truth(&moved, &truth.0, &truth.1).unwrap();
            assert!((again - base).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_aligns_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (l, r) = (random_dirs(4, &mut rng), random_dirs(3, &mut rng));
        let q = Rotation3::from_scaled_axis(Vec3::new(2.0, 0.1, -0.4)).into_inner() * Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        let mk = |m: Matrix3<f64>| Embedding {
            left: l.iter().map(|v| m * v).collect(),
            right: r.iter().map(|v| m * v).collect(),
            stress: 0.0,
            iterations: 0,
            converged: true,
            grad_norm: 0.0,
            history: vec![],
            start: 0,
        };
        let truth = (post(Post::Left, &l), post(Post::Right, &r));
        assert!(align_to_truth(&mk(Matrix3::identity()), &truth.0, &truth.1).unwrap() < 1e-12);
        assert!(align_to_truth(&mk(q), &truth.0, &truth.1).unwrap() < 1e-12);
        let short = post(Post::Left, &l[..3]);
        assert!(matches!(align_to_truth(&mk(q), &short, &truth.1), Err(ReconstructError::MarkMismatch { .. })));
    }

    #[test]
    fn chirality_is_not_recoverable() {
        // a chiral 4+4 frame and its mirror image produce the same gram
        let l = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 2.0, 3.0).normalize()];
        let r = [Vec3::new(1.0, 1.0, 0.0).normalize(), Vec3::new(0.0, 1.0, 1.0).normalize(), Vec3::new(-1.0, 0.0, 2.0).normalize(), Vec3::new(3.0, -1.0, 1.0).normalize()];
        let mirror = |v: &Vec3| Vec3::new(v[0], v[1], -v[2]);
        let lm: Vec<Vec3> = l.iter().map(mirror).collect();
        let rm: Vec<Vec3> = r.iter().map(mirror).collect();
        let g = CrossGram::from_directions(&l, &r).unwrap();
        assert_eq!(g, CrossGram::from_directions(&lm, &rm).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let e = embed(&g, 2000, 1e-12, &mut rng).unwrap();
        assert!(e.stress < 1e-9, "{} {} {} {} {}", e.stress, e.iterations, e.grad_norm, e.start, e.converged);
        // the fit matches both handednesses once reflections are allowed
        let a = align_to_truth(&e, &post(Post::Left, &l), &post(Post::Right, &r)).unwrap();
        let b = align_to_truth(&e, &post(Post::Left, &lm), &post(Post::Right, &rm)).unwrap();
        assert!(a < 1e-9 && b < 1e-9);
        // with rotations only, exactly one of the two frames is reachable
        let from: Vec<Vec3> = e.left.iter().chain(&e.right).copied().collect();
        let to: Vec<Vec3> = l.iter().chain(&r).copied().collect();
        let q = procrustes(&from, &to);
        let to_m: Vec<Vec3> = lm.iter().chain(&rm).copied().collect();
        let qm = procrustes(&from, &to_m);
        assert!((q.determinant() * qm.determinant() + 1.0).abs() < 1e-9);
    }
}
