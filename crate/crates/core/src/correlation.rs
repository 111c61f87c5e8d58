//! Closed-form probability laws for the singlet-pair experiment.
//!
//! Three families live here:
//!
//! * the quantum predictions `P(S) = sin²(∠AB/2) = (1 + Z_AB)/2` and the
//!   per-outcome split `P(↑↑) = (1 + Z_AB)/4`;
//! * the joint density of the three pairwise inner products of independent,
//!   isotropic unit vectors (the "classical" triple density);
//! * the tetrahedral delta distribution over `(Z_A, Z_B, Z_AB)`, which puts
//!   all mass on four planes and reproduces the quantum law while keeping
//!   every pairwise marginal uniform.
//!
//! Sign convention: `Z_AB = -a·b` for the instrument directions `a`, `b`
//! (the partners' spins are anti-parallel). The classical density is written
//! in raw dot products `(s, t, u) = (a·c, b·c, a·b)`; [`to_classical`] is
//! the bridge between the two coordinate systems.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CorrelationError {
    #[error("{what} = {value} is outside its domain [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<f64, CorrelationError> {
    if value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(CorrelationError::Domain { what, value, lo, hi })
    }
}

fn check_cosine(what: &'static str, value: f64) -> Result<f64, CorrelationError> {
    check_range(what, value, -1.0, 1.0)
}

/// Result of a single Stern–Gerlach passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Up,
    Down,
}

impl Outcome {
    /// Outcome determined by the sign of a projection. Exact zero resolves to
    /// `Up`.
    pub fn from_sign(x: f64) -> Self {
        if x >= 0.0 {
            Outcome::Up
        } else {
            Outcome::Down
        }
    }
}

/// Logbook tag: `S` when both detectors agree, `N` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SameFlag {
    S,
    N,
}

impl SameFlag {
    pub fn as_char(self) -> char {
        match self {
            SameFlag::S => 'S',
            SameFlag::N => 'N',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OutcomePair {
    pub left: Outcome,
    pub right: Outcome,
}

impl OutcomePair {
    pub fn new(left: Outcome, right: Outcome) -> Self {
        Self { left, right }
    }

    pub fn same_flag(&self) -> SameFlag {
        if self.left == self.right {
            SameFlag::S
        } else {
            SameFlag::N
        }
    }
}

/// The three direction cosines `(Z_A, Z_B, Z_AB)` of one hidden-variable
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineTriple {
    pub z_a: f64,
    pub z_b: f64,
    pub z_ab: f64,
}

impl CosineTriple {
    pub fn new(z_a: f64, z_b: f64, z_ab: f64) -> Result<Self, CorrelationError> {
        Ok(Self {
            z_a: check_cosine("z_a", z_a)?,
            z_b: check_cosine("z_b", z_b)?,
            z_ab: check_cosine("z_ab", z_ab)?,
        })
    }
}

/// Quantum probability that both posts record the same result, given the
/// angle between the instruments.
pub fn p_same(angle_ab: f64) -> Result<f64, CorrelationError> {
    let angle = check_range("angle_ab", angle_ab, 0.0, PI)?;
    let half = (angle / 2.0).sin();
    Ok(half * half)
}

/// Quantum probability of one of the four joint outcomes.
pub fn joint_outcome_probability(pair: OutcomePair, z_ab: f64) -> Result<f64, CorrelationError> {
    let z = check_cosine("z_ab", z_ab)?;
    Ok(match pair.same_flag() {
        SameFlag::S => (1.0 + z) / 4.0,
        SameFlag::N => (1.0 - z) / 4.0,
    })
}

/// `1 + 2stu − s² − t² − u²`, the Gram determinant of three unit vectors
/// with pairwise cosines `s`, `t`, `u`.
pub fn classical_discriminant(s: f64, t: f64, u: f64) -> f64 {
    1.0 + 2.0 * s * t * u - s * s - t * t - u * u
}

/// Discriminants below this are reported as an infinite density.
pub const DENSITY_SINGULAR_BELOW: f64 = 1e-300;

/// Classical triple density `(8π √(1 + 2stu − s² − t² − u²))⁻¹` inside the
/// feasible region and `0` outside.
///
/// On the boundary layer (discriminant in `(0, 1e-300]`) the density is
/// reported as `+∞`.
pub fn classical_triple_density(s: f64, t: f64, u: f64) -> Result<f64, CorrelationError> {
    check_cosine("s", s)?;
    check_cosine("t", t)?;
    check_cosine("u", u)?;
    let d = classical_discriminant(s, t, u);
    Ok(if d <= 0.0 {
        0.0
    } else if d <= DENSITY_SINGULAR_BELOW {
        f64::INFINITY
    } else {
        1.0 / (8.0 * PI * d.sqrt())
    })
}

/// Whether three cosines can belong to three directions in space (the
/// angle triangle inequality `|α₁ − α₂| ≤ α₃ ≤ α₁ + α₂`).
pub fn feasible_triple(s: f64, t: f64, u: f64) -> bool {
    classical_discriminant(s, t, u) >= 0.0
}

/// Maps `(Z_A, Z_B, Z_AB)` to raw dot products `(s, t, u)`.
///
/// The right-hand partner carries the anti-parallel spin, so both `Z_B` and
/// `Z_AB` change sign. Two flips leave the discriminant unchanged.
pub fn to_classical(triple: CosineTriple) -> (f64, f64, f64) {
    (triple.z_a, -triple.z_b, -triple.z_ab)
}

/// The four support planes of the tetrahedral density, in the order of the
/// four delta terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TetraPlane {
    /// `Z_A + Z_B + Z_AB = −1`
    SumLow,
    /// `Z_A − Z_B − Z_AB = −1`
    DiffLow,
    /// `Z_A + Z_B − Z_AB = 1`
    SumHigh,
    /// `Z_A − Z_B + Z_AB = 1`
    DiffHigh,
}

impl TetraPlane {
    pub const ALL: [TetraPlane; 4] = [
        TetraPlane::SumLow,
        TetraPlane::DiffLow,
        TetraPlane::SumHigh,
        TetraPlane::DiffHigh,
    ];

    /// Coefficients `(c_a, c_b, c_ab, rhs)` of `c_a Z_A + c_b Z_B + c_ab Z_AB = rhs`.
    pub const fn coefficients(self) -> (f64, f64, f64, f64) {
        match self {
            TetraPlane::SumLow => (1.0, 1.0, 1.0, -1.0),
            TetraPlane::DiffLow => (1.0, -1.0, -1.0, -1.0),
            TetraPlane::SumHigh => (1.0, 1.0, -1.0, 1.0),
            TetraPlane::DiffHigh => (1.0, -1.0, 1.0, 1.0),
        }
    }

    /// Signed offset of the triple from the plane in units of the linear form.
    pub fn offset(self, z_a: f64, z_b: f64, z_ab: f64) -> f64 {
        let (ca, cb, cab, rhs) = self.coefficients();
        ca * z_a + cb * z_b + cab * z_ab - rhs
    }

    /// Solves the plane equation for `Z_B`.
    pub fn solve_z_b(self, z_a: f64, z_ab: f64) -> f64 {
        let (ca, cb, cab, rhs) = self.coefficients();
        (rhs - ca * z_a - cab * z_ab) / cb
    }

    /// Range of `Z_A` over which the plane stays inside the cube at fixed
    /// `Z_AB`.
    pub fn z_a_range(self, z_ab: f64) -> (f64, f64) {
        match self {
            TetraPlane::SumLow => (-1.0, -z_ab),
            TetraPlane::DiffLow => (-1.0, z_ab),
            TetraPlane::SumHigh => (z_ab, 1.0),
            TetraPlane::DiffHigh => (-z_ab, 1.0),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Set of support planes a triple lies on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlaneSet(u8);

impl PlaneSet {
    pub fn contains(&self, plane: TetraPlane) -> bool {
        self.0 & (1 << plane.index()) != 0
    }

    pub fn insert(&mut self, plane: TetraPlane) {
        self.0 |= 1 << plane.index();
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(&self) -> impl Iterator<Item = TetraPlane> + '_ {
        TetraPlane::ALL.into_iter().filter(|p| self.contains(*p))
    }
}

pub const DEFAULT_PLANE_TOL: f64 = 1e-12;

/// Which support planes of the tetrahedral density pass through `triple`.
/// The density is zero off these planes.
pub fn tetrahedral_density(triple: CosineTriple, tol: f64) -> PlaneSet {
    let mut set = PlaneSet::default();
    for plane in TetraPlane::ALL {
        if plane.offset(triple.z_a, triple.z_b, triple.z_ab).abs() <= tol {
            set.insert(plane);
        }
    }
    set
}

/// Conditional weights of the four plane segments at fixed `Z_AB`, in plane
/// order. Each equals the length of the segment's `Z_A` range.
pub fn segment_weights(z_ab: f64) -> [f64; 4] {
    TetraPlane::ALL.map(|p| {
        let (lo, hi) = p.z_a_range(z_ab);
        hi - lo
    })
}

/// Draws `(Z_A, Z_B)` from the tetrahedral density conditioned on `Z_AB`.
pub fn sample_tetrahedral<R: Rng + ?Sized>(
    z_ab: f64,
    rng: &mut R,
) -> Result<(f64, f64), CorrelationError> {
    let z_ab = check_cosine("z_ab", z_ab)?;
    let weights = segment_weights(z_ab);
    // the weights always sum to 4
    let mut pick = 4.0 * rng.random::<f64>();
    let mut plane = TetraPlane::DiffHigh;
    for (p, w) in TetraPlane::ALL.into_iter().zip(weights) {
        if pick < w {
            plane = p;
            break;
        }
        pick -= w;
    }
    let (lo, hi) = plane.z_a_range(z_ab);
    let z_a = lo + (hi - lo) * rng.random::<f64>();
    let z_b = plane.solve_z_b(z_a, z_ab).clamp(-1.0, 1.0);
    Ok((z_a, z_b))
}
