//! Adaptive integration of geodesics with conservation monitoring.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use super::dop853::{self, Controller};
use super::{
    closed_form_velocity, constants_of_motion, norm_sq, rhs, GeodesicError, GeodesicState, OrbitConstants, EQUATOR,
    POLE_GUARD,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Spacing of emitted samples in `s`. Zero emits every accepted step.
    pub sample_interval: f64,
    /// Locate radial and polar turning points and ascending node crossings.
    pub detect_events: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: 1.0,
            max_steps: 1_000_000,
            sample_interval: 0.0,
            detect_events: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: f64,
    pub state: GeodesicState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// `Uʳ = 0`.
    RadialTurn,
    /// `Uᶿ = 0`.
    PolarTurn,
    /// `ϑ = π/2` crossed with `Uᶿ > 0`.
    AscendingNode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub kind: EventKind,
    pub s: f64,
    pub state: GeodesicState,
}

/// Largest changes of the first integrals, each divided by
/// `max(|initial|, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftReport {
    pub p: f64,
    pub x: f64,
    pub a: f64,
    pub w: f64,
    /// Largest gap between `W` from the first-integral formula and
    /// `g_ij Uⁱ Uʲ` from the metric, at the same state.
    pub w_consistency: f64,
}

impl DriftReport {
    pub fn max(&self) -> f64 {
        self.p.max(self.x).max(self.a).max(self.w)
    }
}

/// Largest absolute deviations of the state from the closed-form velocities
/// evaluated with the initial constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MonitorReport {
    pub u_t: f64,
    pub u_phi: f64,
    pub u_theta_sq: f64,
    pub u_r_sq: f64,
}

impl MonitorReport {
    pub fn max(&self) -> f64 {
        self.u_t.max(self.u_phi).max(self.u_theta_sq).max(self.u_r_sq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: OrbitConstants,
    pub samples: Vec<Sample>,
    /// Accepted step end points, starting with the initial state.
    pub steps: Vec<Sample>,
    pub events: Vec<Event>,
    pub drift: DriftReport,
    pub monitor: MonitorReport,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCrossing {
    pub s: f64,
    pub t: f64,
    pub phi: f64,
    /// Azimuth of the node line, continued across revolutions.
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitObservation {
    pub r_min: f64,
    pub r_max: f64,
    pub min_sin_theta: f64,
    pub nodes: Vec<NodeCrossing>,
    /// Least-squares slope of `ψ` against `t`; needs two crossings.
    pub node_rate: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> GeodesicState {
        self.steps.last().expect("trajectory holds the initial state").state
    }

    /// Extremes over steps, samples and located events, plus the node line.
    ///
    /// Between consecutive ascending crossings the orbit circles the axis
    /// once, so the node azimuth advances by `2π` in the direction set by
    /// the sign of `X` on top of the change in `φ`.
    pub fn observe(&self) -> OrbitObservation {
        let all = self
            .steps
            .iter()
            .chain(&self.samples)
            .map(|x| &x.state)
            .chain(self.events.iter().map(|e| &e.state));
        let mut r_min = f64::INFINITY;
        let mut r_max = f64::NEG_INFINITY;
        let mut min_sin = f64::INFINITY;
        for st in all {
            r_min = r_min.min(st.r);
            r_max = r_max.max(st.r);
            min_sin = min_sin.min(st.theta.sin());
        }
        let sense = if self.initial.x > 0.0 {
            1.0
        } else if self.initial.x < 0.0 {
            -1.0
        } else {
            0.0
        };
        let nodes: Vec<NodeCrossing> = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::AscendingNode)
            .enumerate()
            .map(|(k, e)| NodeCrossing {
                s: e.s,
                t: e.state.t,
                phi: e.state.phi,
                psi: e.state.phi + 2.0 * PI * k as f64 * sense,
            })
            .collect();
        let node_rate = slope(nodes.iter().map(|n| (n.t, n.psi)));
        OrbitObservation { r_min, r_max, min_sin_theta: min_sin, nodes, node_rate }
    }
}

fn slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> Option<f64> {
    let n = points.clone().count();
    if n < 2 {
        return None;
    }
    let (mx, my) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n as f64, my / n as f64);
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    (sxx > 0.0).then(|| sxy / sxx)
}

fn field(y: &[f64; 8]) -> Result<[f64; 8], GeodesicError> {
    let st = GeodesicState::from_array(y);
    if !(st.r > 0.0) {
        return Err(GeodesicError::NonPositiveRadius(st.r));
    }
    if st.theta.sin().abs() < POLE_GUARD {
        return Err(GeodesicError::PoleSingular { theta: st.theta });
    }
    rhs(&st)
}

/// State a distance `sigma` past `y` (with `k1 = f(y)`), by one step.
fn advance(y: &[f64; 8], k1: &[f64; 8], sigma: f64) -> Result<[f64; 8], GeodesicError> {
    if sigma == 0.0 {
        return Ok(*y);
    }
    Ok(dop853::step(&mut field, y, k1, sigma, 1.0, 1.0)?.y)
}

fn hermite(y0: f64, f0: f64, y1: f64, f1: f64, h: f64, sigma: f64) -> f64 {
    let x = sigma / h;
    let x2 = x * x;
    let x3 = x2 * x;
    (2.0 * x3 - 3.0 * x2 + 1.0) * y0 + (x3 - 2.0 * x2 + x) * h * f0 + (-2.0 * x3 + 3.0 * x2) * y1 + (x3 - x2) * h * f1
}

struct Span<'a> {
    y0: &'a [f64; 8],
    f0: &'a [f64; 8],
    y1: &'a [f64; 8],
    f1: &'a [f64; 8],
    h: f64,
}

/// Root of `y[comp] − offset` inside the step: bracketed on the Hermite
/// interpolant, then polished by Newton iterations on exact sub-steps.
fn locate(span: &Span, comp: usize, offset: f64) -> Option<(f64, [f64; 8])> {
    let g = |sigma: f64| hermite(span.y0[comp], span.f0[comp], span.y1[comp], span.f1[comp], span.h, sigma) - offset;
    let (mut a, mut b) = (0.0, span.h);
    let (mut ga, mut gb) = (span.y0[comp] - offset, span.y1[comp] - offset);
    let mut side = 0i8;
    let mut sigma = b;
    for _ in 0..100 {
        sigma = (a * gb - b * ga) / (gb - ga);
        if !(sigma > a && sigma < b) {
            sigma = 0.5 * (a + b);
        }
        let gs = g(sigma);
        if gs == 0.0 || (b - a) <= 1e-15 * span.h {
            break;
        }
        if (gs > 0.0) == (gb > 0.0) {
            b = sigma;
            gb = gs;
            if side == 1 {
                ga /= 2.0;
            }
            side = 1;
        } else {
            a = sigma;
            ga = gs;
            if side == -1 {
                gb /= 2.0;
            }
            side = -1;
        }
    }
    for _ in 0..4 {
        let y = advance(span.y0, span.f0, sigma).ok()?;
        let dg = field(&y).ok()?[comp];
        if dg == 0.0 {
            break;
        }
        let next = (sigma - (y[comp] - offset) / dg).clamp(0.0, span.h);
        let done = (next - sigma).abs() <= 1e-15 * span.h;
        sigma = next;
        if done {
            break;
        }
    }
    let y = advance(span.y0, span.f0, sigma).ok()?;
    Some((sigma, y))
}

struct Monitor {
    c0: OrbitConstants,
    drift: DriftReport,
    closed: MonitorReport,
}

impl Monitor {
    fn observe(&mut self, st: &GeodesicState) {
        let c = constants_of_motion(st);
        let rel = |now: f64, then: f64| (now - then).abs() / then.abs().max(1.0);
        let d = &mut self.drift;
        d.p = d.p.max(rel(c.p, self.c0.p));
        d.x = d.x.max(rel(c.x, self.c0.x));
        d.a = d.a.max(rel(c.a, self.c0.a));
        d.w = d.w.max(rel(c.w, self.c0.w));
        if let Ok(w) = norm_sq(st) {
            d.w_consistency = d.w_consistency.max((w - c.w).abs());
        }
        let (ut, uph, th2, r2) = closed_form_velocity(&self.c0, st.r, st.theta);
        let m = &mut self.closed;
        m.u_t = m.u_t.max((st.u_t - ut).abs());
        m.u_phi = m.u_phi.max((st.u_phi - uph).abs());
        m.u_theta_sq = m.u_theta_sq.max((st.u_theta * st.u_theta - th2).abs());
        m.u_r_sq = m.u_r_sq.max((st.u_r * st.u_r - r2).abs());
    }
}

/// Integrates the geodesic equations from `s = 0` to `s_end`.
pub fn integrate(state0: &GeodesicState, s_end: f64, opts: &IntegrateOptions) -> Result<Trajectory, GeodesicError> {
    state0.validate()?;
    if !(s_end > 0.0) || !s_end.is_finite() {
        return Err(GeodesicError::InvalidSpan(s_end));
    }
    if !(opts.abs_tol > 0.0 && opts.rel_tol > 0.0 && opts.max_step > 0.0) || opts.sample_interval < 0.0 {
        return Err(GeodesicError::InvalidControls);
    }
    let c0 = constants_of_motion(state0);
    let mut monitor = Monitor { c0, drift: DriftReport::default(), closed: MonitorReport::default() };
    monitor.observe(state0);
    // equatorial orbits have no polar motion to detect
    let polar = c0.a - c0.x * c0.x > 1e-12 * c0.a.max(1.0);

    let mut y = state0.to_array();
    let mut k1 = field(&y).map_err(|_| GeodesicError::PoleGuard { s: 0.0, state: *state0 })?;
    let mut h = dop853::initial_step(&mut field, &y, &k1, opts.abs_tol, opts.rel_tol, opts.max_step)
        .map_err(|_| GeodesicError::PoleGuard { s: 0.0, state: *state0 })?;
    let mut ctrl = Controller::default();
    let mut s = 0.0;
    let mut after_reject = false;
    let mut rejected = 0;
    let mut pole_failure = false;

    let first = Sample { s: 0.0, state: *state0 };
    let mut steps = alloc::vec![first];
    let mut samples = alloc::vec![first];
    let mut events = Vec::new();
    let mut next_sample = 1u64;

    while s < s_end {
        if steps.len() > opts.max_steps {
            return Err(GeodesicError::TooManySteps { s, state: GeodesicState::from_array(&y) });
        }
        if h.abs() < 1e-14 * s.abs().max(1.0) {
            let state = GeodesicState::from_array(&y);
            return Err(if pole_failure {
                GeodesicError::PoleGuard { s, state }
            } else {
                GeodesicError::StepUnderflow { s, state }
            });
        }
        h = h.min(opts.max_step);
        let last = s + h >= s_end;
        if last {
            h = s_end - s;
        }
        let trial = match dop853::step(&mut field, &y, &k1, h, opts.abs_tol, opts.rel_tol) {
            Ok(t) => t,
            Err(_) => {
                pole_failure = true;
                h *= 0.25;
                rejected += 1;
                after_reject = true;
                continue;
            }
        };
        if !(trial.err <= 1.0) {
            h = if trial.err.is_finite() { ctrl.reject(h, trial.err) } else { h * 0.25 };
            rejected += 1;
            after_reject = true;
            continue;
        }
        let f1 = match field(&trial.y) {
            Ok(f) => f,
            Err(_) => {
                pole_failure = true;
                h *= 0.25;
                rejected += 1;
                after_reject = true;
                continue;
            }
        };
        pole_failure = false;
        let s_new = if last { s_end } else { s + h };
        let span = Span { y0: &y, f0: &k1, y1: &trial.y, f1: &f1, h };

        if opts.detect_events {
            let mut found: Vec<Event> = Vec::new();
            let mut check = |kind: EventKind, comp: usize, offset: f64, ascending_only: bool| {
                let g0 = y[comp] - offset;
                let g1 = trial.y[comp] - offset;
                let up = g0 < 0.0 && g1 >= 0.0;
                let down = g0 > 0.0 && g1 <= 0.0;
                if !(up || (down && !ascending_only)) || g0.abs().max(g1.abs()) < 1e-10 {
                    return;
                }
                if let Some((sigma, ye)) = locate(&span, comp, offset) {
                    found.push(Event { kind, s: s + sigma, state: GeodesicState::from_array(&ye) });
                }
            };
            check(EventKind::RadialTurn, 5, 0.0, false);
            if polar {
                check(EventKind::PolarTurn, 6, 0.0, false);
                check(EventKind::AscendingNode, 2, EQUATOR, true);
            }
            found.sort_by(|a, b| a.s.total_cmp(&b.s));
            for e in &found {
                monitor.observe(&e.state);
            }
            events.extend(found);
        }

        if opts.sample_interval > 0.0 {
            loop {
                let target = next_sample as f64 * opts.sample_interval;
                if target > s_new || target > s_end {
                    break;
                }
                let state = if target == s_new {
                    GeodesicState::from_array(&trial.y)
                } else {
                    GeodesicState::from_array(&advance(&y, &k1, target - s).map_err(|_| {
                        GeodesicError::PoleGuard { s: target, state: GeodesicState::from_array(&y) }
                    })?)
                };
                monitor.observe(&state);
                samples.push(Sample { s: target, state });
                next_sample += 1;
            }
        }

        let state = GeodesicState::from_array(&trial.y);
        monitor.observe(&state);
        steps.push(Sample { s: s_new, state });
        if opts.sample_interval == 0.0 {
            samples.push(Sample { s: s_new, state });
        }

        h = ctrl.accept(h, trial.err, after_reject);
        after_reject = false;
        y = trial.y;
        k1 = f1;
        s = s_new;
    }

    if samples.last().is_some_and(|x| x.s < s_end) {
        samples.push(*steps.last().expect("non-empty"));
    }

    Ok(Trajectory {
        initial: c0,
        samples,
        steps,
        events,
        drift: monitor.drift,
        monitor: monitor.closed,
        rejected_steps: rejected,
    })
}
