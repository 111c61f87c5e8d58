//! Discrete search for joint densities `ρ(Z_A, Z_B, Z_AB)` that keep every
//! pairwise marginal uniform while reproducing the quantum conditional
//! `P(↑↑ | Z_AB) = (1 + Z_AB)/4`.
//!
//! The cube `[-1, 1]³` is cut into `n³` cells of width `2/n`; axis 0 is
//! `Z_A`, axis 1 is `Z_B` and axis 2 is `Z_AB`. The only edit ever applied
//! is the tetrahedron move: pick two coordinates per axis, add `δ` to the
//! four corners of the resulting box that span one inscribed tetrahedron and
//! subtract it from the other four. Every line through the box parallel to
//! an axis meets one corner of each tetrahedron, so all three 2-D marginals
//! are untouched.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use thiserror::Error;

use crate::correlation::TetraPlane;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("grid size {0} is too small (need n >= 2)")]
    GridTooSmall(usize),
    #[error("grid size {0} must be even so that cell edges align with zero")]
    OddGrid(usize),
    #[error("move indices are not distinct pairs inside [0, {n})")]
    BadMove { n: usize },
    #[error("move would drive a cell negative; largest feasible |delta| is {max_delta}")]
    Infeasible { max_delta: f64 },
    #[error("starting grid violates the marginal constraints (residual {residual:e})")]
    ConstraintsViolated { residual: f64 },
}

/// Piecewise-constant density on the `n³` cube.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    n: usize,
    cells: Vec<f64>,
}

impl DensityGrid {
    pub fn from_cells(n: usize, cells: Vec<f64>) -> Result<Self, SolverError> {
        if n < 2 {
            return Err(SolverError::GridTooSmall(n));
        }
        assert_eq!(cells.len(), n * n * n, "cell vector has wrong length");
        Ok(Self { n, cells })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cell_width(&self) -> f64 {
        2.0 / self.n as f64
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.cells[self.index(i, j, k)]
    }

    /// Centre coordinate of cell `i` along any axis.
    pub fn center(&self, i: usize) -> f64 {
        -1.0 + self.cell_width() * (i as f64 + 0.5)
    }

    /// `Σ cells × (2/n)³`.
    pub fn integral(&self) -> f64 {
        let h = self.cell_width();
        self.cells.iter().sum::<f64>() * h * h * h
    }

    /// Copy with the `Z_A` and `Z_B` axes exchanged.
    pub fn transposed(&self) -> Self {
        let n = self.n;
        let mut cells = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    cells[self.index(j, i, k)] = self.get(i, j, k);
                }
            }
        }
        Self { n, cells }
    }

    /// `Σ_{i,j} ρ_ijk` over one `Z_AB` slice, restricted to `i, j ∈ range`.
    ///
    /// The sum visits unordered pairs `{i, j}` and adds `ρ_ijk + ρ_jik`
    /// together, so the result is bitwise identical for a grid and its
    /// transpose.
    fn slice_sum(&self, k: usize, lo: usize, hi: usize) -> f64 {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += self.get(i, i, k);
            for j in (i + 1)..hi {
                acc += self.get(i, j, k) + self.get(j, i, k);
            }
        }
        acc
    }

    /// Probability mass in slice `k` (density units of the `Z_AB` marginal).
    fn slice_marginal(&self, k: usize) -> f64 {
        let h = self.cell_width();
        self.slice_sum(k, 0, self.n) * h * h
    }

    /// `P(Z_A > 0, Z_B > 0 | Z_AB in slice k)`.
    fn slice_conditional(&self, k: usize) -> f64 {
        let half = self.n / 2;
        self.slice_sum(k, half, self.n) / self.slice_sum(k, 0, self.n)
    }

    /// Quantum target for the slice conditional. The target is linear in
    /// `Z_AB`, so its slice average equals its value at the slice centre.
    fn slice_target(&self, k: usize) -> f64 {
        (1.0 + self.center(k)) / 4.0
    }
}

/// Grid with every cell at the separable density `1/8`.
pub fn uniform_grid(n: usize) -> Result<DensityGrid, SolverError> {
    if n < 2 {
        return Err(SolverError::GridTooSmall(n));
    }
    Ok(DensityGrid {
        n,
        cells: vec![1.0 / 8.0; n * n * n],
    })
}

/// Two distinct coordinates per axis plus the signed amount moved onto the
/// even-parity corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveSpec {
    pub i: (usize, usize),
    pub j: (usize, usize),
    pub k: (usize, usize),
    pub delta: f64,
}

impl MoveSpec {
    fn validate(&self, n: usize) -> Result<(), SolverError> {
        let ok = |(a, b): (usize, usize)| a != b && a < n && b < n;
        if ok(self.i) && ok(self.j) && ok(self.k) {
            Ok(())
        } else {
            Err(SolverError::BadMove { n })
        }
    }

    /// The eight corner cells with their parity: `true` for the corners that
    /// gain `delta` (an even number of second coordinates chosen).
    pub fn corners(&self) -> [((usize, usize, usize), bool); 8] {
        let pick = |(a, b): (usize, usize), second: bool| if second { b } else { a };
        core::array::from_fn(|m| {
            let (si, sj, sk) = (m & 4 != 0, m & 2 != 0, m & 1 != 0);
            let even = (si as u8 + sj as u8 + sk as u8).is_multiple_of(2);
            ((pick(self.i, si), pick(self.j, sj), pick(self.k, sk)), even)
        })
    }

    /// Largest `|delta|` in the direction of `sign` that keeps all cells
    /// nonnegative.
    pub fn max_delta(&self, grid: &DensityGrid, sign: f64) -> f64 {
        self.corners()
            .iter()
            .filter(|(_, even)| (sign > 0.0) != *even)
            .map(|&((i, j, k), _)| grid.get(i, j, k))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Applies a tetrahedron move in place.
pub fn apply_move_in_place(grid: &mut DensityGrid, mv: &MoveSpec) -> Result<(), SolverError> {
    mv.validate(grid.n)?;
    if mv.delta == 0.0 {
        return Ok(());
    }
    let limit = mv.max_delta(grid, mv.delta.signum());
    if mv.delta.abs() > limit {
        return Err(SolverError::Infeasible { max_delta: limit });
    }
    for ((i, j, k), even) in mv.corners() {
        let idx = grid.index(i, j, k);
        if even {
            grid.cells[idx] += mv.delta;
        } else {
            // exact zero when the cell is being emptied
            let v = grid.cells[idx] - mv.delta;
            grid.cells[idx] = if v.abs() <= f64::EPSILON * mv.delta.abs() { 0.0 } else { v };
        }
    }
    Ok(())
}

/// Returns a copy of `grid` with the move applied.
pub fn apply_move(grid: &DensityGrid, mv: &MoveSpec) -> Result<DensityGrid, SolverError> {
    let mut out = grid.clone();
    apply_move_in_place(&mut out, mv)?;
    Ok(out)
}

/// Deviations from the three constraints, all maxima over cells or slices.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualReport {
    /// `max_k |ρ(Z_AB) − 1/2|`
    pub r_c1: f64,
    /// `max_{i,k} |ρ(Z_A, Z_AB) − 1/4|`, together with the `Z_B` counterpart
    pub r_c2a: f64,
    /// `max_{i,j} |ρ(Z_A, Z_B) − 1/4|`
    pub r_c2b: f64,
    /// `max_k |P(↑↑ | Z_AB) − (1 + Z_AB)/4|`
    pub r_c3: f64,
}

impl ResidualReport {
    /// Largest of the marginal (constraint 1 and 2) residuals.
    pub fn marginal_max(&self) -> f64 {
        self.r_c1.max(self.r_c2a).max(self.r_c2b)
    }
}

pub fn residuals(grid: &DensityGrid) -> ResidualReport {
    let n = grid.n;
    let h = grid.cell_width();
    let mut rep = ResidualReport::default();
    for k in 0..n {
        rep.r_c1 = rep.r_c1.max((grid.slice_marginal(k) - 0.5).abs());
        let c = grid.slice_conditional(k);
        rep.r_c3 = rep.r_c3.max((c - grid.slice_target(k)).abs());
        for i in 0..n {
            let along_b: f64 = (0..n).map(|j| grid.get(i, j, k)).sum::<f64>() * h;
            let along_a: f64 = (0..n).map(|j| grid.get(j, i, k)).sum::<f64>() * h;
            rep.r_c2a = rep.r_c2a.max((along_b - 0.25).abs()).max((along_a - 0.25).abs());
        }
    }
    for i in 0..n {
        for j in 0..n {
            let along_ab: f64 = (0..n).map(|k| grid.get(i, j, k)).sum::<f64>() * h;
            rep.r_c2b = rep.r_c2b.max((along_ab - 0.25).abs());
        }
    }
    rep
}

/// Sum of squared slice residuals of the quantum conditional.
pub fn merit(grid: &DensityGrid) -> f64 {
    (0..grid.n)
        .map(|k| {
            let r = grid.slice_conditional(k) - grid.slice_target(k);
            r * r
        })
        .sum()
}

/// Area of `{(x, y) ∈ [x0, x0+w] × [y0, y0+w] : x + y ≤ c}`.
fn square_area_below(x0: f64, y0: f64, w: f64, c: f64) -> f64 {
    let d = c - x0 - y0;
    if d <= 0.0 {
        0.0
    } else if d <= w {
        d * d / 2.0
    } else if d < 2.0 * w {
        let e = 2.0 * w - d;
        w * w - e * e / 2.0
    } else {
        w * w
    }
}

/// Exact cell average of the tetrahedral delta density.
///
/// For plane `Z_A + s_b Z_B + s_ab Z_AB = c` the delta term contributes, in
/// cell `(i, j, k)`, `1/8` times the area of the `(Z_A, s_ab Z_AB)` square in
/// which the solved `Z_B` falls inside the cell's `Z_B` interval.
pub fn discretize_tetrahedral(n: usize) -> Result<DensityGrid, SolverError> {
    if n < 2 {
        return Err(SolverError::GridTooSmall(n));
    }
    let h = 2.0 / n as f64;
    let edge = |i: usize| -1.0 + h * i as f64;
    let mut cells = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut mass = 0.0;
                for plane in TetraPlane::ALL {
                    let (_, sb, sab, c) = plane.coefficients();
                    // y = s_ab · Z_AB over the cell, as a sorted interval start
                    let y0 = if sab > 0.0 { edge(k) } else { -edge(k + 1) };
                    // s_b · Z_B ∈ [b_lo, b_hi]
                    let (b_lo, b_hi) = if sb > 0.0 {
                        (edge(j), edge(j + 1))
                    } else {
                        (-edge(j + 1), -edge(j))
                    };
                    // Z_A + y = c − s_b Z_B ∈ [c − b_hi, c − b_lo]
                    let x0 = edge(i);
                    mass += square_area_below(x0, y0, h, c - b_lo)
                        - square_area_below(x0, y0, h, c - b_hi);
                }
                cells[(i * n + j) * n + k] = mass / 8.0 / (h * h * h);
            }
        }
    }
    Ok(DensityGrid { n, cells })
}

/// Fraction of the grid's mass in cells whose closed box lies within
/// Euclidean distance `2/n` (one cell width) of a support plane.
pub fn mass_near_planes(grid: &DensityGrid) -> f64 {
    let n = grid.n;
    let h = grid.cell_width();
    // box-to-plane distance for a plane with normal (±1, ±1, ±1)/√3
    let reach = 1.5 * h + 3.0.sqrt() * h;
    let mut near = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = grid.get(i, j, k);
                total += v;
                let (a, b, z) = (grid.center(i), grid.center(j), grid.center(k));
                let closest = TetraPlane::ALL
                    .iter()
                    .map(|p| p.offset(a, b, z).abs())
                    .fold(f64::INFINITY, f64::min);
                if closest <= reach * (1.0 + 1e-12) {
                    near += v;
                }
            }
        }
    }
    if total > 0.0 {
        near / total
    } else {
        0.0
    }
}

/// Policy choosing which eight cells the next move touches.
pub trait MoveSchedule {
    /// Returns `(i, j, k)` coordinate pairs, each pair distinct and `< n`.
    #[allow(clippy::type_complexity)]
    fn propose<R: Rng + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
    ) -> ((usize, usize), (usize, usize), (usize, usize));
}

fn distinct_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Coordinate pairs drawn uniformly at random, axes in order `Z_A, Z_B, Z_AB`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPairs;

impl MoveSchedule for UniformPairs {
    fn propose<R: Rng + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
    ) -> ((usize, usize), (usize, usize), (usize, usize)) {
        let i = distinct_pair(n, rng);
        let j = distinct_pair(n, rng);
        let k = distinct_pair(n, rng);
        (i, j, k)
    }
}

/// Wraps a schedule and swaps the roles of the `Z_A` and `Z_B` pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mirrored<S>(pub S);

impl<S: MoveSchedule> MoveSchedule for Mirrored<S> {
    fn propose<R: Rng + ?Sized>(
        &mut self,
        n: usize,
        rng: &mut R,
    ) -> ((usize, usize), (usize, usize), (usize, usize)) {
        let (i, j, k) = self.0.propose(n, rng);
        (j, i, k)
    }
}

/// How much of the tetrahedron move is taken once its direction is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Minimize the quadratic merit along the move, clamped to the emptying
    /// bound.
    #[default]
    Optimal,
    /// Always move the full emptying amount (one cell ends at zero) and keep
    /// the move only if the merit drops.
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Target for `r_c3`.
    pub tol: f64,
    /// Budget of accepted moves.
    pub max_moves: usize,
    /// Proposals per sweep; a sweep without an accepted move is a stall.
    /// `0` means `n³`.
    pub sweep_len: usize,
    pub step: StepRule,
    /// Recompute the marginal residuals after every accepted move (O(n³)).
    pub audit_constraints: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 5e-3,
            max_moves: 1_000_000,
            sweep_len: 0,
            step: StepRule::Optimal,
            audit_constraints: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    BudgetExhausted,
    Stalled,
}

/// Residuals at the end of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub moves: usize,
    pub merit: f64,
    pub report: ResidualReport,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub grid: DensityGrid,
    pub report: ResidualReport,
    pub move_count: usize,
    pub status: SolveStatus,
    pub trace: Vec<SweepRecord>,
    /// Largest marginal residual seen at any audit point.
    pub max_marginal_residual: f64,
}

/// Searches for a grid satisfying the quantum conditional by repeated
/// tetrahedron moves, accepting only moves that lower [`merit`].
pub fn solve<S, R>(
    grid: DensityGrid,
    schedule: &mut S,
    opts: &SolveOptions,
    rng: &mut R,
) -> Result<SolveOutcome, SolverError>
where
    S: MoveSchedule,
    R: Rng + ?Sized,
{
    let n = grid.n;
    if !n.is_multiple_of(2) {
        return Err(SolverError::OddGrid(n));
    }
    let start = residuals(&grid);
    if start.marginal_max() > 1e-12 {
        return Err(SolverError::ConstraintsViolated {
            residual: start.marginal_max(),
        });
    }

    let mut grid = grid;
    let half = n / 2;
    let sweep_len = if opts.sweep_len == 0 { n * n * n } else { opts.sweep_len };

    // Per-slice quadrant sums and totals, refreshed for touched slices only.
    let mut quad: Vec<f64> = (0..n).map(|k| grid.slice_sum(k, half, n)).collect();
    let mut total: Vec<f64> = (0..n).map(|k| grid.slice_sum(k, 0, n)).collect();
    let target: Vec<f64> = (0..n).map(|k| grid.slice_target(k)).collect();
    let r_c3 = |quad: &[f64], total: &[f64]| {
        (0..n)
            .map(|k| (quad[k] / total[k] - target[k]).abs())
            .fold(0.0, f64::max)
    };

    let mut moves = 0usize;
    let mut trace = Vec::new();
    let mut max_marginal = start.marginal_max();
    let mut status = if r_c3(&quad, &total) <= opts.tol {
        SolveStatus::Converged
    } else {
        SolveStatus::Stalled
    };

    let mut sweep = 0usize;
    while status != SolveStatus::Converged {
        let mut accepted_this_sweep = 0usize;
        for _ in 0..sweep_len {
            if moves >= opts.max_moves {
                status = SolveStatus::BudgetExhausted;
                break;
            }
            let (i, j, k) = schedule.propose(n, rng);
            let mut mv = MoveSpec { i, j, k, delta: 0.0 };
            // change of each touched slice's quadrant sum per unit delta
            let mut dq = [0.0f64; 2];
            for ((ci, cj, ck), even) in mv.corners() {
                if ci >= half && cj >= half {
                    let slot = if ck == k.0 { 0 } else { 1 };
                    dq[slot] += if even { 1.0 } else { -1.0 };
                }
            }
            if dq == [0.0, 0.0] {
                continue;
            }
            // merit change as a quadratic in delta: qa δ² + qb δ
            let mut qa = 0.0;
            let mut qb = 0.0;
            for (slot, kk) in [k.0, k.1].into_iter().enumerate() {
                let g = dq[slot] / total[kk];
                let r = quad[kk] / total[kk] - target[kk];
                qa += g * g;
                qb += 2.0 * r * g;
            }
            if qb == 0.0 {
                continue;
            }
            let optimal = -qb / (2.0 * qa);
            let sign = optimal.signum();
            let bound = mv.max_delta(&grid, sign);
            let step = match opts.step {
                StepRule::Optimal => optimal.abs().min(bound),
                StepRule::Empty => bound,
            };
            let delta = sign * step;
            if delta == 0.0 || qa * delta * delta + qb * delta >= 0.0 {
                continue;
            }
            mv.delta = delta;
            apply_move_in_place(&mut grid, &mv)?;
            for kk in [k.0, k.1] {
                quad[kk] = grid.slice_sum(kk, half, n);
                total[kk] = grid.slice_sum(kk, 0, n);
            }
            moves += 1;
            accepted_this_sweep += 1;
            if opts.audit_constraints {
                max_marginal = max_marginal.max(residuals(&grid).marginal_max());
            }
            if r_c3(&quad, &total) <= opts.tol {
                status = SolveStatus::Converged;
                break;
            }
        }
        let report = residuals(&grid);
        max_marginal = max_marginal.max(report.marginal_max());
        trace.push(SweepRecord {
            sweep,
            moves,
            merit: merit(&grid),
            report,
        });
        sweep += 1;
        if status == SolveStatus::BudgetExhausted {
            break;
        }
        if status != SolveStatus::Converged && accepted_this_sweep == 0 {
            status = SolveStatus::Stalled;
            break;
        }
    }

    let report = residuals(&grid);
    Ok(SolveOutcome {
        grid,
        report,
        move_count: moves,
        status,
        trace,
        max_marginal_residual: max_marginal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn marginals(g: &DensityGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = g.n();
        let mut ab = vec![0.0; n * n];
        let mut ak = vec![0.0; n * n];
        let mut bk = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = g.get(i, j, k);
                    ab[i * n + j] += v;
                    ak[i * n + k] += v;
                    bk[j * n + k] += v;
                }
            }
        }
        (ab, ak, bk)
    }

    #[test]
    fn uniform_grid_examples() {
        let g = uniform_grid(2).unwrap();
        assert_eq!(g.cells().len(), 8);
        assert!(g.cells().iter().all(|&c| c == 0.125));
        assert!((g.integral() - 1.0).abs() < 1e-15);
        assert!(uniform_grid(1).is_err());

        let r = residuals(&uniform_grid(16).unwrap());
        assert!(r.r_c1 < 1e-15 && r.r_c2a < 1e-15 && r.r_c2b < 1e-15);
    }

    #[test]
    fn uniform_grid_conditional_is_a_quarter() {
        // with n = 3 the middle slice straddles zero; the quadrant is i, j >= 1
        let g = uniform_grid(3).unwrap();
        let r = residuals(&g);
        assert!(r.r_c1 < 1e-15 && r.r_c2a < 1e-15 && r.r_c2b < 1e-15);
        assert!(r.r_c3 > 0.0);
        // uniform n = 4: P(↑↑|z) = 1/4 on every slice, worst at z = ±3/4
        let r4 = residuals(&uniform_grid(4).unwrap());
        assert!((r4.r_c3 - 0.75 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_move_is_identity() {
        let g = uniform_grid(4).unwrap();
        let mv = MoveSpec { i: (0, 1), j: (2, 3), k: (1, 0), delta: 0.0 };
        assert_eq!(apply_move(&g, &mv).unwrap(), g);
    }

    #[test]
    fn bad_moves_are_rejected() {
        let g = uniform_grid(4).unwrap();
        let same = MoveSpec { i: (1, 1), j: (0, 1), k: (0, 1), delta: 0.01 };
        assert!(matches!(apply_move(&g, &same), Err(SolverError::BadMove { .. })));
        let outside = MoveSpec { i: (0, 4), j: (0, 1), k: (0, 1), delta: 0.01 };
        assert!(apply_move(&g, &outside).is_err());
        let too_big = MoveSpec { i: (0, 1), j: (0, 1), k: (0, 1), delta: 0.2 };
        match apply_move(&g, &too_big) {
            Err(SolverError::Infeasible { max_delta }) => assert_eq!(max_delta, 0.125),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn emptying_move_zeroes_a_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = uniform_grid(4).unwrap();
        // randomize first
        for _ in 0..50 {
            let (i, j, k) = UniformPairs.propose(4, &mut rng);
            let mut mv = MoveSpec { i, j, k, delta: 0.0 };
            mv.delta = 0.5 * mv.max_delta(&g, 1.0);
            apply_move_in_place(&mut g, &mv).unwrap();
        }
        let mut mv = MoveSpec { i: (0, 3), j: (1, 2), k: (2, 0), delta: 0.0 };
        mv.delta = -mv.max_delta(&g, -1.0);
        let out = apply_move(&g, &mv).unwrap();
        let zeros = mv
            .corners()
            .iter()
            .filter(|((i, j, k), _)| out.get(*i, *j, *k) == 0.0)
            .count();
        assert!(zeros >= 1);
        assert!(out.cells().iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn corners_split_into_two_tetrahedra() {
        let mv = MoveSpec { i: (0, 1), j: (2, 3), k: (4, 5), delta: 1.0 };
        let c = mv.corners();
        assert_eq!(c.iter().filter(|(_, e)| *e).count(), 4);
        // along every axis-parallel edge the parity flips
        for a in 0..8 {
            for b in 0..8 {
                let ((i1, j1, k1), e1) = c[a];
                let ((i2, j2, k2), e2) = c[b];
                let diff = (i1 != i2) as u8 + (j1 != j2) as u8 + (k1 != k2) as u8;
                if diff == 1 {
                    assert_ne!(e1, e2);
                }
            }
        }
    }

    #[test]
    fn tetrahedral_small_grids() {
        let g2 = discretize_tetrahedral(2).unwrap();
        assert!((g2.integral() - 1.0).abs() < 1e-12);
        // octant masses are 1/16 or 3/16: the Z_A, Z_B sign agreement must
        // follow the sign of Z_AB
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mass = g2.get(i, j, k) * g2.cell_width().powi(3);
                    let expect = if (i == j) == (k == 1) { 3.0 / 16.0 } else { 1.0 / 16.0 };
                    assert!((mass - expect).abs() < 1e-12, "{i}{j}{k} {mass}");
                }
            }
        }

        for n in [4, 8, 16, 32] {
            let g = discretize_tetrahedral(n).unwrap();
            assert!((g.integral() - 1.0).abs() < 1e-12);
            let r = residuals(&g);
            assert!(r.r_c1 < 1e-12, "{n} {r:?}");
            assert!(r.r_c2a < 1e-12 && r.r_c2b < 1e-12, "{n} {r:?}");
            assert!(r.r_c3 < 1e-12, "{n} {r:?}");
        }
    }

    #[test]
    fn tetrahedral_matches_subsampling_oracle() {
        // midpoint sub-sampling of the smeared planes: each cell gets 1/8 of
        // the measure of Z_A–Z_AB sub-squares whose solved Z_B lands in the cell
        let n = 4;
        let g = discretize_tetrahedral(n).unwrap();
        let h = 2.0 / n as f64;
        let sub = 200;
        let mut oracle = vec![0.0; n * n * n];
        for ia in 0..n * sub {
            for iz in 0..n * sub {
                let a = -1.0 + (ia as f64 + 0.5) * h / sub as f64;
                let z = -1.0 + (iz as f64 + 0.5) * h / sub as f64;
                for plane in TetraPlane::ALL {
                    let b = plane.solve_z_b(a, z);
                    if !(-1.0..1.0).contains(&b) {
                        continue;
                    }
                    let j = ((b + 1.0) / h) as usize;
                    let cell = (ia / sub * n + j) * n + iz / sub;
                    oracle[cell] += (h / sub as f64).powi(2) / 8.0 / h.powi(3);
                }
            }
        }
        for (x, y) in g.cells().iter().zip(&oracle) {
            assert!((x - y).abs() < 2e-2, "{x} vs {y}");
        }
    }

    #[test]
    fn tetrahedral_center_cells_are_light() {
        let g = discretize_tetrahedral(8).unwrap();
        // the cell with corner (0,0,0) toward +++: (0,0,0) is off all planes
        let c = g.get(4, 4, 4);
        let max = g.cells().iter().cloned().fold(0.0, f64::max);
        assert!(c < 0.2 * max);
        assert!((mass_near_planes(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residuals_flag_concentrated_mass() {
        let n = 4;
        let mut cells = vec![0.0; n * n * n];
        cells[0] = 1.0 / (0.5f64).powi(3);
        let g = DensityGrid::from_cells(n, cells).unwrap();
        let r = residuals(&g);
        assert!(r.r_c1 > 0.0 && r.r_c2a > 0.0 && r.r_c2b > 0.0);
    }

    #[test]
    fn solve_from_tetrahedral_needs_no_moves() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = solve(discretize_tetrahedral(8).unwrap(), &mut UniformPairs, &SolveOptions::default(), &mut rng).unwrap();
        assert_eq!(out.move_count, 0);
        assert_eq!(out.status, SolveStatus::Converged);
    }

    #[test]
    fn solve_rejects_odd_or_unbalanced_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = SolveOptions::default();
        assert!(matches!(
            solve(uniform_grid(3).unwrap(), &mut UniformPairs, &opts, &mut rng),
            Err(SolverError::OddGrid(3))
        ));
        let mut cells = vec![0.125; 64];
        cells[0] = 0.2;
        let bad = DensityGrid::from_cells(4, cells).unwrap();
        assert!(matches!(
            solve(bad, &mut UniformPairs, &opts, &mut rng),
            Err(SolverError::ConstraintsViolated { .. })
        ));
    }

    #[test]
    fn solve_converges_from_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = SolveOptions { audit_constraints: true, ..SolveOptions::default() };
        let out = solve(uniform_grid(8).unwrap(), &mut UniformPairs, &opts, &mut rng).unwrap();
        assert_eq!(out.status, SolveStatus::Converged);
        assert!(out.report.r_c3 <= 5e-3);
        assert!(out.max_marginal_residual <= 1e-12);
        assert!(out.grid.cells().iter().all(|&c| c >= 0.0));
        // conditional per slice within tol + 2/n
        let g = &out.grid;
        for k in 0..8 {
            let c = g.slice_conditional(k);
            assert!((c - g.slice_target(k)).abs() <= 5e-3 + 2.0 / 8.0);
        }
        // merit never increases across sweeps
        for w in out.trace.windows(2) {
            assert!(w[1].merit <= w[0].merit);
        }
    }

    #[test]
    fn solve_with_zero_tolerance_terminates() {
        // cell-centre targets are linear per slice, so optimal steps can land
        // on an exact zero
        for n in [4, 8] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let opts = SolveOptions { tol: 0.0, max_moves: 3_000, ..SolveOptions::default() };
            let out = solve(uniform_grid(n).unwrap(), &mut UniformPairs, &opts, &mut rng).unwrap();
            assert!(out.move_count <= 3_000);
            if out.status == SolveStatus::Converged {
                assert_eq!(out.report.r_c3, 0.0);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let opts = SolveOptions { tol: 0.0, max_moves: 50, step: StepRule::Empty, ..SolveOptions::default() };
        let out = solve(uniform_grid(8).unwrap(), &mut UniformPairs, &opts, &mut rng).unwrap();
        assert!(matches!(out.status, SolveStatus::BudgetExhausted | SolveStatus::Stalled));
        assert!(out.report.r_c3 > 0.0);
    }

    #[test]
    fn solve_is_mirror_symmetric() {
        let opts = SolveOptions { max_moves: 400, ..SolveOptions::default() };
        // an asymmetric but balanced start
        let mut start = uniform_grid(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let (i, j, k) = UniformPairs.propose(6, &mut rng);
            let mut mv = MoveSpec { i, j, k, delta: 0.0 };
            mv.delta = 0.7 * mv.max_delta(&start, 1.0);
            apply_move_in_place(&mut start, &mv).unwrap();
        }
        let mirrored_start = start.transposed();
        let a = solve(start, &mut UniformPairs, &opts, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = solve(mirrored_start, &mut Mirrored(UniformPairs), &opts, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a.move_count, b.move_count);
        assert_eq!(a.grid.transposed(), b.grid);
    }

    proptest! {
        #[test]
        fn moves_preserve_marginals(seed in any::<u64>(), frac in -1.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 6;
            let cells: Vec<f64> = (0..n * n * n).map(|_| rng.random::<f64>()).collect();
            let g = DensityGrid::from_cells(n, cells).unwrap();
            let (i, j, k) = UniformPairs.propose(n, &mut rng);
            let mut mv = MoveSpec { i, j, k, delta: 0.0 };
            let sign = if frac >= 0.0 { 1.0 } else { -1.0 };
            mv.delta = frac * mv.max_delta(&g, sign);
            let out = apply_move(&g, &mv).unwrap();
            prop_assert!(out.cells().iter().all(|&c| c >= 0.0));
            let (ab0, ak0, bk0) = marginals(&g);
            let (ab1, ak1, bk1) = marginals(&out);
            for (x, y) in ab0.iter().chain(&ak0).chain(&bk0).zip(ab1.iter().chain(&ak1).chain(&bk1)) {
                prop_assert!((x - y).abs() <= 1e-13);
            }
        }
    }
}
