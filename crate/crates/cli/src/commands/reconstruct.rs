use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spinlab_core::experiment::CorrelationTable;
use spinlab_core::reconstruct::{align_to_truth, embed_with, gram_from_table, CrossGram, EmbedOptions, Law};

use super::Report;
use crate::error::CliError;
use crate::formats::{ensure_dir, read_json, read_logbook, write_json, MarksFile};
use crate::meta::Meta;

pub const EMBEDDING_FILE: &str = "embedding.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawArg {
    /// Same-outcome probability sin²(angle/2).
    Sinsq,
    /// Same-outcome probability angle/π.
    Linear,
    /// Same-outcome probability cos²(angle/2).
    Cossq,
}

impl From<LawArg> for Law {
    fn from(l: LawArg) -> Self {
        match l {
            LawArg::Sinsq => Law::SinSq,
            LawArg::Linear => Law::Linear,
            LawArg::Cossq => Law::CosSq,
        }
    }
}

#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct ReconstructArgs {
    /// Logbook CSV as written by `simulate`.
    #[arg(long, required_unless_present = "table", conflicts_with = "table")]
    #[serde(skip)]
    pub logbook: Option<PathBuf>,
    /// Pair table JSON with rows of `left`, `right`, `p_hat`, `n_total`.
    #[arg(long)]
    #[serde(skip)]
    pub table: Option<PathBuf>,
    /// Mark configuration; fixes the mark order and enables comparison
    /// with the configured directions.
    #[arg(long)]
    #[serde(skip)]
    pub pairs: Option<PathBuf>,
    /// Assumed probability-angle law.
    #[arg(long, value_enum, default_value_t = LawArg::Sinsq)]
    pub law: LawArg,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    /// Gradient-norm threshold for convergence.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Random starts besides the spectral one.
    #[arg(long, default_value_t = 4)]
    pub starts: usize,
    /// Pairs with fewer trials than this are reported as sparse.
    #[arg(long, default_value_t = 30)]
    pub min_count: u64,
    /// Output directory for `embedding.json`.
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub left: String,
    pub right: String,
    pub p_hat: f64,
    pub n_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableFile {
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub meta: Meta,
    pub law: LawArg,
    pub left: BTreeMap<String, [f64; 3]>,
    pub right: BTreeMap<String, [f64; 3]>,
    pub stress: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub pairs_present: usize,
    pub pairs_total: usize,
    pub trials: u64,
    /// RMS angle to the configured directions after the best rotation or
    /// reflection, radians.
    pub procrustes_rms: Option<f64>,
    pub warnings: Vec<String>,
}

/// Pair statistics by mark id, before indices are assigned.
struct Observations {
    /// `(left, right) → (p̂, n)`
    pairs: BTreeMap<(String, String), (f64, u64)>,
    /// Same-outcome counts, when read from a logbook.
    counts: Option<BTreeMap<(String, String), u64>>,
}

fn observations(args: &ReconstructArgs) -> Result<(Observations, serde_json::Value), CliError> {
    let mut pairs = BTreeMap::new();
    let mut same = None;
    if let Some(path) = &args.logbook {
        let (_, rows) = read_logbook(path)?;
        if rows.is_empty() {
            return Err(CliError::bad_input(path, "logbook has no rows"));
        }
        let mut counts: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
        for r in rows {
            let e = counts.entry((r.left, r.right)).or_default();
            e.1 += 1;
            e.0 += (r.result == spinlab_core::SameFlag::S) as u64;
        }
        for (k, &(s, n)) in &counts {
            pairs.insert(k.clone(), (s as f64 / n as f64, n));
        }
        same = Some(counts.into_iter().map(|(k, (s, _))| (k, s)).collect());
    } else if let Some(path) = &args.table {
        let t: TableFile = read_json(path)?;
        for r in t.rows {
            if !(0.0..=1.0).contains(&r.p_hat) || r.n_total == 0 {
                return Err(CliError::bad_input(path, format!("row ({}, {}) has no valid probability", r.left, r.right)));
            }
            if pairs.insert((r.left.clone(), r.right.clone()), (r.p_hat, r.n_total)).is_some() {
                return Err(CliError::bad_input(path, format!("pair ({}, {}) listed twice", r.left, r.right)));
            }
        }
    } else {
        return Err(CliError::Validation("need --logbook or --table".into()));
    }
    let digest = serde_json::to_value(pairs.iter().map(|((l, r), (p, n))| (l, r, p, n)).collect::<Vec<_>>())
        .expect("pair data serializes");
    Ok((Observations { pairs, counts: same }, digest))
}

pub fn run(args: &ReconstructArgs, seed: u64) -> Result<Report, CliError> {
    let (obs, digest) = observations(args)?;
    let marks = args.pairs.as_ref().map(|p| MarksFile::load(p)).transpose()?;
    let truth = marks.as_ref().map(|m| m.posts()).transpose()?;
    let meta = Meta::new("reconstruct", seed, &(args, &marks, digest));

    let (left_ids, right_ids): (Vec<String>, Vec<String>) = match &marks {
        Some(m) => (m.left.iter().map(|s| s.id.clone()).collect(), m.right.iter().map(|s| s.id.clone()).collect()),
        None => {
            let l: BTreeSet<&String> = obs.pairs.keys().map(|(l, _)| l).collect();
            let r: BTreeSet<&String> = obs.pairs.keys().map(|(_, r)| r).collect();
            (l.into_iter().cloned().collect(), r.into_iter().cloned().collect())
        }
    };
    let index = |ids: &[String], id: &str, post: &str| {
        ids.iter()
            .position(|x| x == id)
            .ok_or_else(|| CliError::Validation(format!("{post} mark {id:?} is not in the mark configuration")))
    };

    let law: Law = args.law.into();
    let (nl, nr) = (left_ids.len(), right_ids.len());
    let gram = match &obs.counts {
        Some(counts) => {
            let mut table = CorrelationTable::default();
            for ((l, r), &(_, n)) in &obs.pairs {
                let key = (index(&left_ids, l, "left")? as u32, index(&right_ids, r, "right")? as u32);
                let row = table.rows.entry(key).or_default();
                row.n_total = n;
                row.n_same = counts[&(l.clone(), r.clone())];
            }
            gram_from_table(&table, law, nl, nr)?
        }
        None => {
            let mut gram = CrossGram::new(nl, nr)?;
            for ((l, r), &(p, n)) in &obs.pairs {
                gram.set(index(&left_ids, l, "left")?, index(&right_ids, r, "right")?, law.entry(p), n as f64);
            }
            gram
        }
    };

    let mut warnings = Vec::new();
    let total = left_ids.len() * right_ids.len();
    if gram.present_count() < total {
        warnings.push(format!("{} of {total} mark pairs were never observed", total - gram.present_count()));
    }
    let sparse = obs.pairs.values().filter(|(_, n)| *n < args.min_count).count();
    if sparse > 0 {
        warnings.push(format!("{sparse} mark pairs have fewer than {} trials", args.min_count));
    }
    for (i, id) in left_ids.iter().enumerate() {
        if (0..right_ids.len()).all(|j| gram.weight(i, j) == 0.0) {
            warnings.push(format!("left mark {id} has no observations; its direction is arbitrary"));
        }
    }
    for (j, id) in right_ids.iter().enumerate() {
        if (0..left_ids.len()).all(|i| gram.weight(i, j) == 0.0) {
            warnings.push(format!("right mark {id} has no observations; its direction is arbitrary"));
        }
    }

    let opts = EmbedOptions {
        max_iters: args.max_iters,
        tol: args.tol,
        random_starts: args.starts,
        spectral_init: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = embed_with(&gram, &opts, &mut rng)?;
    if !e.stress.is_finite() {
        return Err(CliError::Numerical("embedding stress is not finite".into()));
    }
    if !e.converged {
        warnings.push(format!("embedding stopped after {} sweeps without converging", e.iterations));
    }
    let procrustes_rms = truth.as_ref().map(|(l, r)| align_to_truth(&e, l, r)).transpose()?;

    let to_map = |ids: &[String], v: &[spinlab_core::sphere::Vec3]| {
        ids.iter().cloned().zip(v.iter().map(|x| [x.x, x.y, x.z])).collect::<BTreeMap<_, _>>()
    };
    let doc = EmbeddingFile {
        meta,
        law: args.law,
        left: to_map(&left_ids, &e.left),
        right: to_map(&right_ids, &e.right),
        stress: e.stress,
        iterations: e.iterations,
        converged: e.converged,
        grad_norm: e.grad_norm,
        pairs_present: gram.present_count(),
        pairs_total: total,
        trials: obs.pairs.values().map(|(_, n)| n).sum(),
        procrustes_rms,
        warnings: warnings.clone(),
    };
    ensure_dir(&args.out)?;
    write_json(&args.out.join(EMBEDDING_FILE), &doc)?;

    let law_name = args.law.to_possible_value().expect("no skipped variants");
    let mut line = format!(
        "reconstruct: law={} marks={}+{} stress={:e} sweeps={}",
        law_name.get_name(),
        left_ids.len(),
        right_ids.len(),
        e.stress,
        e.iterations
    );
    if let Some(rms) = procrustes_rms {
        line.push_str(&format!(" procrustes_rms={rms:e}"));
    }
    Ok(Report { summary: line, warnings })
}
