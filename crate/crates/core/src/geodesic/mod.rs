//! Geodesics of the rotating spin-model metric
//!
//! `ds² = cos²ϑ dt² − dr² − r² dϑ² − r² sin²ϑ dφ² + 2r sin²ϑ dφ dt`
//!
//! Coordinates are indexed `0 = t, 1 = r, 2 = ϑ, 3 = φ` throughout. The
//! second-order equations are integrated directly; the first integrals
//! `P, X, A, W` and their closed-form velocity relations serve as monitors.

pub mod dop853;
mod trajectory;

pub use trajectory::{
    integrate, DriftReport, Event, EventKind, IntegrateOptions, MonitorReport, NodeCrossing, OrbitObservation,
    Sample, Trajectory,
};

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::Matrix4;
#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::correlation::Outcome;

/// Steps are refused where `sin ϑ` drops below this.
pub const POLE_GUARD: f64 = 1e-8;

/// Relative tolerance used to decide degenerate cases in [`classify_orbit`].
pub const CLASSIFY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodesicError {
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("polar angle {0} is outside the open interval (0, pi)")]
    OffChart(f64),
    #[error("non-finite state component")]
    NonFinite,
    #[error("coefficient is singular at the pole (theta = {theta})")]
    PoleSingular { theta: f64 },
    #[error("pole guard tripped at s = {s}")]
    PoleGuard { s: f64, state: GeodesicState },
    #[error("step size underflow at s = {s}")]
    StepUnderflow { s: f64, state: GeodesicState },
    #[error("step budget exhausted at s = {s}")]
    TooManySteps { s: f64, state: GeodesicState },
    #[error("tolerances and step bounds must be positive")]
    InvalidControls,
    #[error("integration span must be positive, got {0}")]
    InvalidSpan(f64),
    #[error("constants violate A >= X^2 (A = {a}, X = {x})")]
    InvalidConstants { a: f64, x: f64 },
    #[error("tilt is undefined for A = 0")]
    UndefinedTilt,
    #[error("measurement sign is undefined for X = 0")]
    UndefinedSign,
    #[error("constants admit no motion at this point: {what} = {value}")]
    Infeasible { what: &'static str, value: f64 },
}

/// Position and coordinate 4-velocity `dx/ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicState {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub u_t: f64,
    pub u_r: f64,
    pub u_theta: f64,
    pub u_phi: f64,
}

impl GeodesicState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: f64,
        r: f64,
        theta: f64,
        phi: f64,
        u_t: f64,
        u_r: f64,
        u_theta: f64,
        u_phi: f64,
    ) -> Result<Self, GeodesicError> {
        let s = Self { t, r, theta, phi, u_t, u_r, u_theta, u_phi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GeodesicError> {
        if self.to_array().iter().any(|x| !x.is_finite()) {
            return Err(GeodesicError::NonFinite);
        }
        if self.r <= 0.0 {
            return Err(GeodesicError::NonPositiveRadius(self.r));
        }
        if !(self.theta > 0.0 && self.theta < core::f64::consts::PI) || self.theta.sin() == 0.0 {
            return Err(GeodesicError::OffChart(self.theta));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.t, self.r, self.theta, self.phi, self.u_t, self.u_r, self.u_theta, self.u_phi]
    }

    pub fn from_array(y: &[f64; 8]) -> Self {
        Self { t: y[0], r: y[1], theta: y[2], phi: y[3], u_t: y[4], u_r: y[5], u_theta: y[6], u_phi: y[7] }
    }

    pub fn velocity(&self) -> [f64; 4] {
        [self.u_t, self.u_r, self.u_theta, self.u_phi]
    }

    /// `sin ϑ (Uᵗ − r Uᵠ)`, the bracket shared by the equations of motion.
    pub fn bracket(&self) -> f64 {
        self.theta.sin() * (self.u_t - self.r * self.u_phi)
    }
}

/// Orientation of the cross term `±2r sin²ϑ dφ dt`. Flipping it gives the
/// model with the opposite spin direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SpinSense {
    #[default]
    Positive,
    Negative,
}

impl SpinSense {
    pub fn sign(self) -> f64 {
        match self {
            SpinSense::Positive => 1.0,
            SpinSense::Negative => -1.0,
        }
    }
}

/// Nonzero metric components at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric {
    pub g_tt: f64,
    pub g_rr: f64,
    pub g_thth: f64,
    pub g_phph: f64,
    pub g_tph: f64,
}

impl Metric {
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut g = Matrix4::zeros();
        g[(0, 0)] = self.g_tt;
        g[(1, 1)] = self.g_rr;
        g[(2, 2)] = self.g_thth;
        g[(3, 3)] = self.g_phph;
        g[(0, 3)] = self.g_tph;
        g[(3, 0)] = self.g_tph;
        g
    }

    /// `g_ij uⁱ uʲ`.
    pub fn norm_sq(&self, u: &[f64; 4]) -> f64 {
        self.g_tt * u[0] * u[0]
            + self.g_rr * u[1] * u[1]
            + self.g_thth * u[2] * u[2]
            + self.g_phph * u[3] * u[3]
            + 2.0 * self.g_tph * u[0] * u[3]
    }
}

pub fn metric_components(r: f64, theta: f64) -> Result<Metric, GeodesicError> {
    metric_components_in(SpinSense::Positive, r, theta)
}

pub fn metric_components_in(sense: SpinSense, r: f64, theta: f64) -> Result<Metric, GeodesicError> {
    if !(r > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(r));
    }
    let (s, c) = theta.sin_cos();
    Ok(Metric {
        g_tt: c * c,
        g_rr: -1.0,
        g_thth: -r * r,
        g_phph: -r * r * s * s,
        g_tph: sense.sign() * r * s * s,
    })
}

/// Christoffel symbols `Γⁱ_jk`, stored densely and symmetric in `j, k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    gamma: [[[f64; 4]; 4]; 4],
}

impl Connection {
    /// Index triples `(i, j, k)` with `j ≤ k` of the nonzero coefficients.
    pub const NONZERO: [(usize, usize, usize); 13] = [
        (0, 0, 1),
        (0, 1, 3),
        (1, 0, 3),
        (1, 2, 2),
        (1, 3, 3),
        (2, 0, 0),
        (2, 0, 3),
        (2, 1, 2),
        (2, 3, 3),
        (3, 0, 1),
        (3, 0, 2),
        (3, 1, 3),
        (3, 2, 3),
    ];

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[i][j][k]
    }

    /// `−Γⁱ_jk uʲ uᵏ`.
    pub fn acceleration(&self, u: &[f64; 4]) -> [f64; 4] {
        let mut a = [0.0; 4];
        for (i, ai) in a.iter_mut().enumerate() {
            let mut sum = 0.0;
            for j in 0..4 {
                for k in 0..4 {
                    sum += self.gamma[i][j][k] * u[j] * u[k];
                }
            }
            *ai = -sum;
        }
        a
    }

    fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        self.gamma[i][j][k] = v;
        self.gamma[i][k][j] = v;
    }
}

/// The affine connection of the metric. Besides the twelve coefficients
/// usually quoted, `Γᵠ_tϑ = −cot ϑ / r` is nonzero as well.
pub fn connection(r: f64, theta: f64) -> Result<Connection, GeodesicError> {
    if !(r > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(r));
    }
    let (s, c) = theta.sin_cos();
    if s.abs() < POLE_GUARD {
        return Err(GeodesicError::PoleSingular { theta });
    }
    let cot = c / s;
    let mut g = Connection { gamma: [[[0.0; 4]; 4]; 4] };
    g.set(0, 0, 1, s * s / (2.0 * r));
    g.set(0, 1, 3, -s * s / 2.0);
    g.set(1, 0, 3, s * s / 2.0);
    g.set(1, 2, 2, -r);
    g.set(1, 3, 3, -r * s * s);
    g.set(2, 0, 0, -s * c / (r * r));
    g.set(2, 0, 3, s * c / r);
    g.set(2, 1, 2, 1.0 / r);
    g.set(2, 3, 3, -s * c);
    g.set(3, 0, 1, -c * c / (2.0 * r * r));
    g.set(3, 0, 2, -cot / r);
    g.set(3, 1, 3, (1.0 + c * c) / (2.0 * r));
    g.set(3, 2, 3, cot);
    Ok(g)
}

/// Derivative of `(t, r, ϑ, φ, Uᵗ, Uʳ, Uᶿ, Uᵠ)` with respect to `s`.
pub fn rhs(state: &GeodesicState) -> Result<[f64; 8], GeodesicError> {
    let GeodesicState { r, theta, u_t, u_r, u_theta, u_phi, .. } = *state;
    if !(r > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(r));
    }
    let (s, c) = theta.sin_cos();
    let b = s * (u_t - r * u_phi);
    let ru_th = r * u_theta;

    let dut = -u_r * s * b / r;
    let dur = (ru_th * ru_th - (r * u_phi * s) * b) / r;
    let (duth, duph) = if s.abs() >= POLE_GUARD {
        let cot = c / s;
        let duth = (-2.0 * u_r * ru_th + cot * b * b) / (r * r);
        let duph = (-u_r * (r * u_phi * s) + u_r * c * c * b + 2.0 * cot * ru_th * b) / (r * r * s);
        (duth, duph)
    } else if b == 0.0 {
        (-2.0 * u_r * ru_th / (r * r), -u_r * u_phi / r)
    } else {
        return Err(GeodesicError::PoleSingular { theta });
    };
    Ok([u_t, u_r, u_theta, u_phi, dut, dur, duth, duph])
}

/// First integrals of a geodesic. `w` is the squared norm of the velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitConstants {
    pub p: f64,
    pub x: f64,
    pub a: f64,
    pub w: f64,
}

impl OrbitConstants {
    /// Tilt `S = X/√A`, or `None` when `A = 0`.
    pub fn s(&self) -> Option<f64> {
        tilt(self).ok()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p, self.x, self.a, self.w]
    }
}

pub fn constants_of_motion(state: &GeodesicState) -> OrbitConstants {
    let GeodesicState { r, theta, u_t, u_r, u_theta, u_phi, .. } = *state;
    let (s, c) = theta.sin_cos();
    let p = c * c * u_t + r * s * s * u_phi;
    let x = r * s * s * (u_t - r * u_phi);
    let a = (r * r * u_theta).powi(2) + (r * s * (u_t - r * u_phi)).powi(2);
    let w = (c * u_t).powi(2) - u_r * u_r - (r * u_theta).powi(2) - (r * s * u_phi).powi(2)
        + 2.0 * r * s * s * u_t * u_phi;
    OrbitConstants { p, x, a, w }
}

/// Constants in the model with the given cross-term sign, with `X` read in
/// the lab frame. The negative model is the positive one seen through
/// `φ → −φ`, whose orbits circulate the other way.
pub fn constants_of_motion_in(sense: SpinSense, state: &GeodesicState) -> OrbitConstants {
    match sense {
        SpinSense::Positive => constants_of_motion(state),
        SpinSense::Negative => {
            let mut c = constants_of_motion(&mirrored(state));
            c.x = -c.x;
            c
        }
    }
}

/// The state reflected through `φ → −φ`.
pub fn mirrored(state: &GeodesicState) -> GeodesicState {
    GeodesicState { phi: -state.phi, u_phi: -state.u_phi, ..*state }
}

/// `g_ij Uⁱ Uʲ` from the metric components.
pub fn norm_sq(state: &GeodesicState) -> Result<f64, GeodesicError> {
    Ok(metric_components(state.r, state.theta)?.norm_sq(&state.velocity()))
}

/// Rescales the velocity so that `W ∈ {−1, 0, 1}`. Null vectors are left
/// unchanged.
pub fn normalize(state: &GeodesicState) -> Result<GeodesicState, GeodesicError> {
    let w = norm_sq(state)?;
    if w == 0.0 {
        return Ok(*state);
    }
    let k = 1.0 / w.abs().sqrt();
    Ok(GeodesicState {
        u_t: state.u_t * k,
        u_r: state.u_r * k,
        u_theta: state.u_theta * k,
        u_phi: state.u_phi * k,
        ..*state
    })
}

/// Closed-form velocities `(Uᵗ, Uᵠ, (Uᶿ)², (Uʳ)²)` at `(r, ϑ)` implied by
/// the constants.
pub fn closed_form_velocity(c: &OrbitConstants, r: f64, theta: f64) -> (f64, f64, f64, f64) {
    let s = theta.sin();
    let cot = theta.cos() / s;
    let u_t = c.p + c.x / r;
    let u_phi = (c.p - c.x * cot * cot / r) / r;
    let u_th_sq = (c.a - c.x * c.x / (s * s)) / r.powi(4);
    let u_r_sq = -(c.a - c.x * c.x) / (r * r) + 2.0 * c.p * c.x / r + c.p * c.p - c.w;
    (u_t, u_phi, u_th_sq, u_r_sq)
}

/// Builds a state with the given constants. Tiny negative squares from
/// rounding are clamped to zero.
pub fn state_from_constants(
    c: &OrbitConstants,
    r0: f64,
    theta0: f64,
    phi0: f64,
    sign_ur: f64,
    sign_utheta: f64,
) -> Result<GeodesicState, GeodesicError> {
    if !(r0 > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(r0));
    }
    let s = theta0.sin();
    if !(theta0 > 0.0 && theta0 < core::f64::consts::PI) || s < POLE_GUARD {
        return Err(GeodesicError::OffChart(theta0));
    }
    let (u_t, u_phi, th_sq, r_sq) = closed_form_velocity(c, r0, theta0);
    let scale_th = (c.a.abs() + c.x * c.x / (s * s)) / r0.powi(4);
    let scale_r = (c.a.abs() + c.x * c.x) / (r0 * r0) + (2.0 * c.p * c.x / r0).abs() + c.p * c.p + c.w.abs();
    let root = |v: f64, scale: f64, what: &'static str| {
        if v >= 0.0 {
            Ok(v.sqrt())
        } else if v >= -1e-12 * scale.max(f64::MIN_POSITIVE) {
            Ok(0.0)
        } else {
            Err(GeodesicError::Infeasible { what, value: v })
        }
    };
    let u_theta = root(th_sq, scale_th, "(U^theta)^2")?;
    let u_r = root(r_sq, scale_r, "(U^r)^2")?;
    let sgn = |x: f64| if x < 0.0 { -1.0 } else { 1.0 };
    GeodesicState::new(0.0, r0, theta0, phi0, u_t, sgn(sign_ur) * u_r, sgn(sign_utheta) * u_theta, u_phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OrbitKind {
    /// One turning radius (closest approach) or none, escaping to infinity.
    Unbound,
    /// Escapes with vanishing radial velocity at infinity.
    BarelyUnbound,
    /// Confined between two turning radii.
    Bound,
    /// Radial velocity vanishes identically at the listed radius, or at
    /// every radius when none is listed.
    ConstantRadius,
    /// No radius where the radial velocity is real.
    Forbidden,
    /// Confined to `0 < r ≤ r_max`; arises only when `A = X²`.
    Plunging,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitClass {
    pub kind: OrbitKind,
    /// Turning radii in ascending order.
    pub turning_radii: Vec<f64>,
}

impl OrbitClass {
    fn new(kind: OrbitKind, mut radii: Vec<f64>) -> Self {
        radii.sort_by(f64::total_cmp);
        Self { kind, turning_radii: radii }
    }
}

/// Classifies the radial motion from the roots in `u = 1/r` of
/// `(Uʳ)² = −(A − X²)u² + 2PX u + P² − W`.
pub fn classify_orbit(c: &OrbitConstants) -> Result<OrbitClass, GeodesicError> {
    let OrbitConstants { p, x, a, w } = *c;
    let quad = a - x * x;
    if a < 0.0 || quad < -CLASSIFY_TOL * a.max(1.0) {
        return Err(GeodesicError::InvalidConstants { a, x });
    }
    let c0 = p * p - w;
    let c0_zero = c0.abs() <= CLASSIFY_TOL * (p * p).max(w.abs()).max(1.0);
    let px = p * x;
    use OrbitKind::*;

    if quad <= CLASSIFY_TOL * a.max(1.0) {
        // linear in u
        if px.abs() <= CLASSIFY_TOL * (p * p).max(x * x).max(w.abs()).max(1.0) {
            return Ok(if c0_zero {
                OrbitClass::new(ConstantRadius, vec![])
            } else if c0 > 0.0 {
                OrbitClass::new(Unbound, vec![])
            } else {
                OrbitClass::new(Forbidden, vec![])
            });
        }
        let u0 = if c0_zero { 0.0 } else { -c0 / (2.0 * px) };
        return Ok(if px > 0.0 {
            if u0 > 0.0 {
                OrbitClass::new(Plunging, vec![1.0 / u0])
            } else if u0 == 0.0 {
                OrbitClass::new(BarelyUnbound, vec![])
            } else {
                OrbitClass::new(Unbound, vec![])
            }
        } else if u0 > 0.0 {
            OrbitClass::new(Unbound, vec![1.0 / u0])
        } else {
            OrbitClass::new(Forbidden, vec![])
        });
    }

    let disc = a * p * p - a * w + x * x * w;
    let disc_scale = (a * p * p).max((a * w).abs()).max((x * x * w).abs()).max(f64::MIN_POSITIVE);
    if disc.abs() <= CLASSIFY_TOL * disc_scale {
        let u0 = px / quad;
        return Ok(if u0 > 0.0 {
            OrbitClass::new(ConstantRadius, vec![1.0 / u0])
        } else {
            OrbitClass::new(Forbidden, vec![])
        });
    }
    if disc < 0.0 {
        return Ok(OrbitClass::new(Forbidden, vec![]));
    }
    let sq = disc.sqrt();
    let u_hi = (px + sq) / quad;
    if u_hi <= 0.0 {
        return Ok(OrbitClass::new(Forbidden, vec![]));
    }
    // product of the roots is −c0 / quad
    Ok(if c0_zero {
        OrbitClass::new(BarelyUnbound, vec![1.0 / u_hi])
    } else if c0 < 0.0 {
        // the smaller root via the product avoids cancellation
        let u_lo = -c0 / (quad * u_hi);
        OrbitClass::new(Bound, vec![1.0 / u_hi, 1.0 / u_lo])
    } else {
        OrbitClass::new(Unbound, vec![1.0 / u_hi])
    })
}

/// `S = X/√A`; `sin ϑ ≥ |S|` along the geodesic.
pub fn tilt(c: &OrbitConstants) -> Result<f64, GeodesicError> {
    if !(c.a > 0.0) {
        return Err(GeodesicError::UndefinedTilt);
    }
    let s = c.x / c.a.sqrt();
    if s.abs() > 1.0 + 1e-12 {
        return Err(GeodesicError::InvalidConstants { a: c.a, x: c.x });
    }
    Ok(s.clamp(-1.0, 1.0))
}

/// Split of `(P² − W)/2` into kinetic and potential parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    /// `((Uʳ)² + (U⊥)²)/2` with `(U⊥)² = (rUᶿ)² + sin²ϑ (Uᵗ − rUᵠ)²`.
    pub kinetic: f64,
    /// `−XP/r`.
    pub coulomb_term: f64,
    /// `−X²/(2r²)`.
    pub inverse_square_term: f64,
    /// `(P² − W)/2`.
    pub total: f64,
}

pub fn energy_decomposition(state: &GeodesicState) -> EnergyParts {
    let c = constants_of_motion(state);
    let r = state.r;
    let s = state.theta.sin();
    let u_perp_sq = (r * state.u_theta).powi(2) + (s * (state.u_t - r * state.u_phi)).powi(2);
    EnergyParts {
        kinetic: (state.u_r * state.u_r + u_perp_sq) / 2.0,
        coulomb_term: -c.x * c.p / r,
        inverse_square_term: -c.x * c.x / (2.0 * r * r),
        total: (c.p * c.p - c.w) / 2.0,
    }
}

/// Rotation rate `dψ/dt = 1/r` of the line where the orbital plane meets
/// the equator.
pub fn node_precession_rate(r: f64) -> Result<f64, GeodesicError> {
    if !(r > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(r));
    }
    Ok(1.0 / r)
}

/// Spin-measurement outcome read from the sign of `X`.
pub fn measurement_sign(c: &OrbitConstants) -> Result<Outcome, GeodesicError> {
    if c.x > 0.0 {
        Ok(Outcome::Up)
    } else if c.x < 0.0 {
        Ok(Outcome::Down)
    } else {
        Err(GeodesicError::UndefinedSign)
    }
}

/// Equatorial plane, where ascending node crossings are detected.
pub const EQUATOR: f64 = FRAC_PI_2;
