use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spinlab_core::geodesic::{
    classify_orbit, constants_of_motion, integrate, measurement_sign, normalize, state_from_constants, tilt,
    DriftReport, EventKind, GeodesicState, IntegrateOptions, MonitorReport, OrbitConstants,
};
use spinlab_core::Outcome;

use super::Report;
use crate::error::CliError;
use crate::formats::{ensure_dir, read_json, trajectory_csv, write_json, write_text};
use crate::meta::Meta;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "geodesic.json";

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct GeodesicArgs {
    /// Initial state JSON with fields t, r, theta, phi, u_t, u_r, u_theta, u_phi.
    #[arg(long, required_unless_present = "from_constants", conflicts_with = "from_constants")]
    #[serde(skip)]
    pub init: Option<PathBuf>,
    /// Build the initial state from first integrals P X A W.
    #[arg(long, num_args = 4, value_names = ["P", "X", "A", "W"], allow_negative_numbers = true)]
    pub from_constants: Option<Vec<f64>>,
    /// Starting radius when building from constants.
    #[arg(long, default_value_t = 2.0)]
    pub r0: f64,
    /// Starting polar angle when building from constants.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi0: f64,
    /// Sign of the initial radial velocity, 1 or -1.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub sign_ur: i8,
    /// Sign of the initial polar velocity, 1 or -1.
    #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
    pub sign_utheta: i8,
    /// Rescale the initial velocity so that W is -1, 0 or 1.
    #[arg(long)]
    pub normalize: bool,
    /// Affine length to integrate.
    #[arg(long, default_value_t = 100.0)]
    pub s_end: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub max_step: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_steps: usize,
    /// Spacing of trajectory rows in s; 0 writes every accepted step.
    #[arg(long, default_value_t = 0.1)]
    pub sample_interval: f64,
    /// Output directory for `trajectory.csv` and `geodesic.json`.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateJson {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub u_t: f64,
    pub u_r: f64,
    pub u_theta: f64,
    pub u_phi: f64,
}

impl From<GeodesicState> for StateJson {
    fn from(s: GeodesicState) -> Self {
        Self { t: s.t, r: s.r, theta: s.theta, phi: s.phi, u_t: s.u_t, u_r: s.u_r, u_theta: s.u_theta, u_phi: s.u_phi }
    }
}

impl TryFrom<StateJson> for GeodesicState {
    type Error = CliError;
    fn try_from(s: StateJson) -> Result<Self, CliError> {
        Ok(GeodesicState::new(s.t, s.r, s.theta, s.phi, s.u_t, s.u_r, s.u_theta, s.u_phi)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsJson {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "W")]
    pub w: f64,
}

impl From<OrbitConstants> for ConstantsJson {
    fn from(c: OrbitConstants) -> Self {
        Self { p: c.p, x: c.x, a: c.a, w: c.w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftJson {
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "W")]
    pub w: f64,
    pub max: f64,
    pub w_consistency: f64,
}

impl From<DriftReport> for DriftJson {
    fn from(d: DriftReport) -> Self {
        Self { p: d.p, x: d.x, a: d.a, w: d.w, max: d.max(), w_consistency: d.w_consistency }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorJson {
    pub u_t: f64,
    pub u_phi: f64,
    pub u_theta_sq: f64,
    pub u_r_sq: f64,
    pub max: f64,
}

impl From<MonitorReport> for MonitorJson {
    fn from(m: MonitorReport) -> Self {
        Self { u_t: m.u_t, u_phi: m.u_phi, u_theta_sq: m.u_theta_sq, u_r_sq: m.u_r_sq, max: m.max() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub r_min: f64,
    pub r_max: f64,
    pub min_sin_theta: f64,
    pub ascending_nodes: usize,
    pub radial_turns: usize,
    pub polar_turns: usize,
    /// Fitted rotation rate of the node line; needs two ascending nodes.
    pub node_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicReport {
    pub meta: Meta,
    pub initial: StateJson,
    pub constants: ConstantsJson,
    pub class: String,
    pub turning_radii: Vec<f64>,
    /// `X/√A`; absent when `A = 0`.
    pub tilt: Option<f64>,
    /// Sign of `X` read as a spin outcome; absent when `X = 0`.
    pub outcome: Option<String>,
    pub s_end: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub drift: DriftJson,
    pub monitor: MonitorJson,
    pub observed: Observed,
}

fn initial_state(args: &GeodesicArgs) -> Result<GeodesicState, CliError> {
    let state = match (&args.init, &args.from_constants) {
        (Some(path), _) => read_json::<StateJson>(path)?.try_into()?,
        (None, Some(c)) => {
            let c = OrbitConstants { p: c[0], x: c[1], a: c[2], w: c[3] };
            let sign = |v: i8, name: &str| match v {
                1 => Ok(1.0),
                -1 => Ok(-1.0),
                _ => Err(CliError::Validation(format!("{name} must be 1 or -1, got {v}"))),
            };
            let (sr, st) = (sign(args.sign_ur, "sign-ur")?, sign(args.sign_utheta, "sign-utheta")?);
            state_from_constants(&c, args.r0, args.theta0, args.phi0, sr, st)?
        }
        (None, None) => return Err(CliError::Validation("need --init or --from-constants".into())),
    };
    if args.normalize {
        Ok(normalize(&state)?)
    } else {
        Ok(state)
    }
}

pub fn run(args: &GeodesicArgs, seed: u64) -> Result<Report, CliError> {
    let state = initial_state(args)?;
    let meta = Meta::new("geodesic", seed, &(args, StateJson::from(state)));
    let c = constants_of_motion(&state);
    let class = classify_orbit(&c)?;

    let opts = IntegrateOptions {
        abs_tol: args.abs_tol,
        rel_tol: args.rel_tol,
        max_step: args.max_step,
        max_steps: args.max_steps,
        sample_interval: args.sample_interval,
        detect_events: true,
    };
    if !(args.sample_interval >= 0.0 && args.sample_interval.is_finite()) {
        return Err(CliError::Validation(format!("sample interval {} must be >= 0", args.sample_interval)));
    }
    let traj = integrate(&state, args.s_end, &opts)?;
    let obs = traj.observe();
    let count = |k: EventKind| traj.events.iter().filter(|e| e.kind == k).count();

    let doc = GeodesicReport {
        meta: meta.clone(),
        initial: state.into(),
        constants: c.into(),
        class: format!("{:?}", class.kind),
        turning_radii: class.turning_radii.clone(),
        tilt: tilt(&c).ok(),
        outcome: measurement_sign(&c).ok().map(|o| match o {
            Outcome::Up => "up".into(),
            Outcome::Down => "down".into(),
        }),
        s_end: args.s_end,
        steps: traj.steps.len() - 1,
        rejected_steps: traj.rejected_steps,
        drift: traj.drift.into(),
        monitor: traj.monitor.into(),
        observed: Observed {
            r_min: obs.r_min,
            r_max: obs.r_max,
            min_sin_theta: obs.min_sin_theta,
            ascending_nodes: count(EventKind::AscendingNode),
            radial_turns: count(EventKind::RadialTurn),
            polar_turns: count(EventKind::PolarTurn),
            node_rate: obs.node_rate,
        },
    };

    let rows = if traj.samples.is_empty() { &traj.steps } else { &traj.samples };
    ensure_dir(&args.out)?;
    write_text(&args.out.join(TRAJECTORY_FILE), &trajectory_csv(&meta, rows))?;
    write_json(&args.out.join(REPORT_FILE), &doc)?;

    let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |x| format!("{x}"));
    let mut report = Report::new(format!(
        "geodesic: class={} turning_radii={:?} tilt={} min_sin_theta={} node_rate={} drift={:e}",
        doc.class,
        doc.turning_radii,
        opt(doc.tilt),
        obs.min_sin_theta,
        opt(obs.node_rate),
        doc.drift.max
    ));
    if doc.drift.max > 1e-8 {
        report.warnings.push(format!("first-integral drift {:e} exceeds 1e-8", doc.drift.max));
    }
    Ok(report)
}
