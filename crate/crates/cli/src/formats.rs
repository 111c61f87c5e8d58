//! On-disk formats: mark configurations, logbooks, grid snapshots,
//! trajectories and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use spinlab_core::distsolver::DensityGrid;
use spinlab_core::experiment::{Mark, Post, PostConfig};
use spinlab_core::geodesic::{constants_of_motion, Sample};
use spinlab_core::sphere::Vec3;
use spinlab_core::SameFlag;

use crate::error::CliError;
use crate::meta::Meta;

pub const LOGBOOK_HEADER: [&str; 3] = ["left_mark", "right_mark", "result"];
pub const TRAJECTORY_HEADER: &str = "s,t,r,theta,phi,u_t,u_r,u_theta,u_phi,P,X,A,W";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::bad_input(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkSpec {
    pub id: String,
    pub direction: [f64; 3],
}

/// Mark directions for both posts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarksFile {
    pub left: Vec<MarkSpec>,
    pub right: Vec<MarkSpec>,
}

impl MarksFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }

    pub fn posts(&self) -> Result<(PostConfig, PostConfig), CliError> {
        let post = |p: Post, specs: &[MarkSpec]| {
            let marks = specs
                .iter()
                .map(|m| {
                    if m.id.is_empty() || m.id.contains([',', '"', '\n', '\r']) {
                        return Err(CliError::Validation(format!("mark id {:?} is not a plain token", m.id)));
                    }
                    Ok(Mark { id: m.id.clone(), direction: Vec3::from(m.direction) })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok::<_, CliError>(PostConfig::new(p, marks)?)
        };
        Ok((post(Post::Left, &self.left)?, post(Post::Right, &self.right)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRow {
    pub left: String,
    pub right: String,
    pub result: SameFlag,
}

pub fn write_logbook<'a, I>(path: &Path, meta: &Meta, rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (&'a str, &'a str, SameFlag)>,
{
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(meta.comment_block().as_bytes()).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CliError::io(path, e.into());
    w.write_record(LOGBOOK_HEADER).map_err(csv_err)?;
    let mut flag = [0u8; 4];
    for (l, r, s) in rows {
        w.write_record([l, r, s.as_char().encode_utf8(&mut flag)]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_logbook(path: &Path) -> Result<(Option<Meta>, Vec<LogRow>), CliError> {
    let text = read_text(path)?;
    let meta = Meta::from_comments(&text);
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::bad_input(path, e))?;
    if headers.iter().ne(LOGBOOK_HEADER) {
        return Err(CliError::bad_input(path, format!("expected header {}", LOGBOOK_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::bad_input(path, e))?;
        let result = match &rec[2] {
            "S" => SameFlag::S,
            "N" => SameFlag::N,
            other => {
                let line = rec.position().map_or(0, |p| p.line());
                return Err(CliError::bad_input(path, format!("line {line}: result {other:?} is not S or N")));
            }
        };
        rows.push(LogRow { left: rec[0].to_owned(), right: rec[1].to_owned(), result });
    }
    Ok((meta, rows))
}

/// Text snapshot: metadata comments, `n=<int>`, then `i j k density` rows.
pub fn grid_text(meta: &Meta, grid: &DensityGrid) -> String {
    let n = grid.n();
    let mut s = meta.comment_block();
    writeln!(s, "n={n}").unwrap();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                writeln!(s, "{i} {j} {k} {:e}", grid.get(i, j, k)).unwrap();
            }
        }
    }
    s
}

pub fn parse_grid(path: &Path, text: &str) -> Result<DensityGrid, CliError> {
    let bad = |m: String| CliError::bad_input(path, m);
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("n="))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("missing `n=<int>` header".into()))?;
    if n < 2 {
        return Err(bad(format!("grid size {n} is below 2")));
    }
    let mut cells = vec![f64::NAN; n * n * n];
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = match f.as_slice() {
            [i, j, k, d] => (|| Some((i.parse().ok()?, j.parse().ok()?, k.parse().ok()?, d.parse().ok()?)))(),
            _ => None,
        };
        let (i, j, k, d): (usize, usize, usize, f64) = parsed.ok_or_else(|| bad(format!("malformed row {line:?}")))?;
        if i >= n || j >= n || k >= n {
            return Err(bad(format!("row {line:?} is outside the grid")));
        }
        cells[(i * n + j) * n + k] = d;
    }
    if cells.iter().any(|c| c.is_nan()) {
        return Err(bad("grid has missing cells".into()));
    }
    Ok(DensityGrid::from_cells(n, cells)?)
}

/// One CSV row per sample, with the first integrals evaluated at that state.
pub fn trajectory_csv(meta: &Meta, samples: &[Sample]) -> String {
    let mut s = meta.comment_block();
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for smp in samples {
        let st = &smp.state;
        let c = constants_of_motion(st);
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            smp.s, st.t, st.r, st.theta, st.phi, st.u_t, st.u_r, st.u_theta, st.u_phi, c.p, c.x, c.a, c.w
        )
        .unwrap();
    }
    s
}
