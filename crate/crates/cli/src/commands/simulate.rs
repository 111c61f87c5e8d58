use std::path::PathBuf;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spinlab_core::experiment::{aggregate, run_experiment, Model, PostConfig};
use spinlab_core::sphere::angle_between;

use super::{parse_count, Report};
use crate::error::CliError;
use crate::formats::{ensure_dir, write_json, write_logbook, MarksFile};
use crate::meta::Meta;

pub const LOGBOOK_FILE: &str = "logbook.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    /// Singlet statistics.
    Qm,
    /// Shared random spin axis, sign of each projection.
    Classical,
    /// Hidden cosines from the tetrahedral density.
    Tetrahedral,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Qm => Model::Qm,
            ModelArg::Classical => Model::ClassicalSign,
            ModelArg::Tetrahedral => Model::Tetrahedral,
        }
    }
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct SimulateArgs {
    /// Outcome model.
    #[arg(long, value_enum, default_value_t = ModelArg::Qm)]
    pub model: ModelArg,
    /// Number of trials (`1000000` or `1e6`).
    #[arg(long, value_parser = parse_count)]
    pub trials: u64,
    /// Mark configuration JSON with `left` and `right` mark lists.
    #[arg(long)]
    #[serde(skip)]
    pub pairs: PathBuf,
    /// Output directory for `logbook.csv` and `aggregate.json`.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub left: String,
    pub right: String,
    pub n_same: u64,
    pub n_total: u64,
    pub p_hat: f64,
    pub std_err: f64,
    pub n_left_up: u64,
    pub n_right_up: u64,
    /// Angle between the configured directions, radians.
    pub angle: f64,
    /// `sin²(angle/2)`.
    pub p_qm: f64,
    /// `angle/π`.
    pub p_classical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFile {
    pub meta: Meta,
    pub model: ModelArg,
    pub trials: u64,
    pub rows: Vec<AggregateRow>,
}

fn id(post: &PostConfig, i: u32) -> &str {
    post.marks[i as usize].id.as_str()
}

pub fn run(args: &SimulateArgs, seed: u64) -> Result<Report, CliError> {
    let marks = MarksFile::load(&args.pairs)?;
    let (left, right) = marks.posts()?;
    let meta = Meta::new("simulate", seed, &(args, &marks));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log = run_experiment(&left, &right, args.trials, args.model.into(), &mut rng)?;
    let table = aggregate(&log)?;

    ensure_dir(&args.out)?;
    write_logbook(
        &args.out.join(LOGBOOK_FILE),
        &meta,
        log.iter().map(|r| (id(&left, r.left_mark), id(&right, r.right_mark), r.result())),
    )?;

    let rows = table
        .rows
        .iter()
        .map(|(&(l, r), s)| {
            let (a, b) = (&left.marks[l as usize].direction, &right.marks[r as usize].direction);
            let angle = angle_between(a, b);
            AggregateRow {
                left: id(&left, l).to_owned(),
                right: id(&right, r).to_owned(),
                n_same: s.n_same,
                n_total: s.n_total,
                p_hat: s.p_hat(),
                std_err: s.std_err(),
                n_left_up: s.n_left_up,
                n_right_up: s.n_right_up,
                angle,
                p_qm: (angle / 2.0).sin().powi(2),
                p_classical: angle / std::f64::consts::PI,
            }
        })
        .collect();
    let doc = AggregateFile { meta, model: args.model, trials: args.trials, rows };
    write_json(&args.out.join(AGGREGATE_FILE), &doc)?;

    let model = args.model.to_possible_value().expect("no skipped variants");
    Ok(Report::new(format!(
        "simulate: model={} trials={} seed={seed} pairs={}\nwrote {} and {} in {}",
        model.get_name(),
        args.trials,
        doc.rows.len(),
        LOGBOOK_FILE,
        AGGREGATE_FILE,
        args.out.display()
    )))
}
