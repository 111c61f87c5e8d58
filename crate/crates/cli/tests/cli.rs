//! End-to-end runs of the `spinlab` binary.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spinlab::commands::geodesic::{GeodesicReport, StateJson};
use spinlab::commands::reconstruct::{EmbeddingFile, TableFile, TableRow};
use spinlab::commands::simulate::AggregateFile;
use spinlab::commands::solve::ResidualsFile;
use spinlab::formats::{parse_grid, read_json, MarksFile};
use spinlab::meta::Meta;

const DEMO8: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo8.json");

fn spinlab<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_spinlab")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_writes_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed) in [(&a, "42"), (&b, "42"), (&c, "43")] {
        let args = ["simulate", "--model", "qm", "--trials", "1e5", "--pairs", DEMO8, "--seed", seed, "--out", p(out)];
        let stdout = ok(&spinlab(args));
        assert!(stdout.contains(&format!("seed={seed}")) && stdout.contains("model=qm"));
    }
    for f in ["logbook.csv", "aggregate.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        assert_ne!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(a.join("logbook.csv")).unwrap();
    let meta = Meta::from_comments(&log).unwrap();
    assert_eq!((meta.seed, meta.command.as_str()), (42, "simulate"));
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 100_001);
    let agg: AggregateFile = read_json(&a.join("aggregate.json")).unwrap();
    assert_eq!(agg.meta, meta);
    assert_eq!(agg.rows.iter().map(|r| r.n_total).sum::<u64>(), 100_000);
}

#[test]
fn simulate_classical_at_sixty_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--model", "classical", "--trials", "2e6", "--pairs", DEMO8, "--seed", "5", "--out", p(dir.path())];
    ok(&spinlab(args));
    let agg: AggregateFile = read_json(&dir.path().join("aggregate.json")).unwrap();
    let row = agg.rows.iter().find(|r| r.left == "L0" && r.right == "R0").unwrap();
    assert!((row.angle - PI / 3.0).abs() < 1e-12);
    assert!((row.p_classical - 1.0 / 3.0).abs() < 1e-12);
    assert!((row.p_hat - 1.0 / 3.0).abs() <= 4.0 * row.std_err, "{}", row.p_hat);
}

#[test]
fn simulate_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"left":[{"id":"a","direction":[0,0,2]}],"right":[{"id":"b","direction":[1,0,0]}]}"#).unwrap();
    assert_eq!(code(&spinlab(["simulate", "--trials", "10", "--pairs", p(&bad)])), 1);
    assert_eq!(code(&spinlab(["simulate", "--trials", "0", "--pairs", DEMO8])), 1);
    assert_eq!(code(&spinlab(["simulate", "--trials", "10", "--pairs", p(&dir.path().join("none.json"))])), 2);
    assert_eq!(code(&spinlab(["simulate", "--model", "magic", "--trials", "10", "--pairs", DEMO8])), 1);
}

#[test]
fn solve_dist_examples() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["solve-dist", "--seed", "3", "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&spinlab(&args));
        let res: ResidualsFile = read_json(&out.join("residuals.json")).unwrap();
        (out.clone(), res)
    };

    let (out, res) = run("n8", &["--n", "8", "--tol", "5e-3", "--audit"]);
    assert_eq!(res.status, "converged");
    assert!(res.r_c3 <= 5e-3);
    assert!(res.max_marginal_residual <= 1e-12);
    let initial = parse_grid(&out, &fs::read_to_string(out.join("grid_initial.txt")).unwrap()).unwrap();
    let last = parse_grid(&out, &fs::read_to_string(out.join("grid_final.txt")).unwrap()).unwrap();
    assert_eq!(initial.n(), 8);
    assert!(initial.cells().iter().all(|&c| c == initial.cells()[0]));
    let r = spinlab_core::distsolver::residuals(&last);
    assert!(r.r_c3 <= 5e-3 && r.marginal_max() <= 1e-12);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().any(|l| l == "sweep,moves,merit,r_c1,r_c2a,r_c2b,r_c3"));

    let (_, res) = run("eq11", &["--n", "8", "--init", "eq11"]);
    assert_eq!(res.move_count, 0);

    let (_, res) = run("n2", &["--n", "2"]);
    assert!(res.r_c3 <= 5e-3);
    assert!(res.move_count <= 1);

    assert_eq!(code(&spinlab(["solve-dist", "--n", "5", "--out", p(dir.path())])), 1);
}

#[test]
fn solve_dist_budget_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinlab(["solve-dist", "--n", "8", "--tol", "0", "--max-moves", "5", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let res: ResidualsFile = read_json(&dir.path().join("residuals.json")).unwrap();
    assert_eq!(res.status, "budget_exhausted");
    assert_eq!(res.move_count, 5);
}

fn geodesic(dir: &Path, args: &[&str]) -> GeodesicReport {
    let mut all = vec!["geodesic", "--out", p(dir)];
    all.extend_from_slice(args);
    ok(&spinlab(&all));
    read_json(&dir.join("geodesic.json")).unwrap()
}

#[test]
fn geodesic_constant_radius_orbits() {
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("init.json");
    let st = StateJson { t: 0.0, r: 2.0, theta: FRAC_PI_2, phi: 0.0, u_t: 1.0, u_r: 0.0, u_theta: 0.0, u_phi: 0.5 };
    fs::write(&init, serde_json::to_string(&st).unwrap()).unwrap();
    let rep = geodesic(dir.path(), &["--init", p(&init)]);
    assert_eq!(rep.class, "ConstantRadius");
    assert!((rep.observed.r_max - 2.0).abs() < 1e-8 && (rep.observed.r_min - 2.0).abs() < 1e-8);
    assert!(rep.drift.max <= 1e-8);

    // tilted circular orbit from the double root of the radial equation
    let p0 = 0.75f64.sqrt().to_string();
    let r0 = 3f64.sqrt().to_string();
    let rep = geodesic(dir.path(), &["--from-constants", &p0, "0.5", "1", "1", "--r0", &r0, "--s-end", "200"]);
    assert_eq!(rep.class, "ConstantRadius");
    let rate = rep.observed.node_rate.unwrap();
    assert!((rate * 3f64.sqrt() - 1.0).abs() < 0.01, "{rate}");
}

#[test]
fn geodesic_tilted_bound_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let rep = geodesic(dir.path(), &["--from-constants", "0.9", "0.5", "1", "1"]);
    assert_eq!(rep.class, "Bound");
    let s = rep.tilt.unwrap();
    assert!((rep.observed.min_sin_theta - s.abs()).abs() <= 1e-6);
    assert!((rep.observed.r_min - rep.turning_radii[0]).abs() <= 1e-6);
    assert!((rep.observed.r_max - rep.turning_radii[1]).abs() <= 1e-6);
    assert!(rep.drift.max <= 1e-8);
    assert_eq!(rep.outcome.as_deref(), Some("up"));
    let c = rep.constants;
    for (got, want) in [(c.p, 0.9), (c.x, 0.5), (c.a, 1.0), (c.w, 1.0)] {
        assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }

    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut body = csv.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(body.next(), Some("s,t,r,theta,phi,u_t,u_r,u_theta,u_phi,P,X,A,W"));
    assert_eq!(body.count(), 1001);
}

#[test]
fn geodesic_errors() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["geodesic", "--out", p(dir.path())];
    let infeasible = spinlab(base.iter().copied().chain(["--from-constants", "0.9", "0.5", "1", "1", "--theta0", "0.3"]));
    assert_eq!(code(&infeasible), 1);
    assert_eq!(code(&spinlab(base.iter().copied().chain(["--from-constants", "1", "2", "1", "1"]))), 1);
    assert_eq!(code(&spinlab(base.iter().copied().chain(["--init", p(&dir.path().join("none.json"))]))), 2);
    assert_eq!(code(&spinlab(base)), 1);

    // falls into r = 0: the integrator gives up with a numerical error
    let init = dir.path().join("plunge.json");
    let st = StateJson { t: 0.0, r: 1.0, theta: FRAC_PI_2, phi: 0.0, u_t: 1.0, u_r: -0.2, u_theta: 0.0, u_phi: 0.5 };
    fs::write(&init, serde_json::to_string(&st).unwrap()).unwrap();
    assert_eq!(code(&spinlab(base.iter().copied().chain(["--init", p(&init)]))), 3);
}

fn exact_table(dir: &Path) -> PathBuf {
    let marks = MarksFile::load(Path::new(DEMO8)).unwrap();
    let mut rows = Vec::new();
    for l in &marks.left {
        for r in &marks.right {
            let dot: f64 = l.direction.iter().zip(&r.direction).map(|(a, b)| a * b).sum();
            rows.push(TableRow { left: l.id.clone(), right: r.id.clone(), p_hat: (1.0 - dot) / 2.0, n_total: 1 });
        }
    }
    let path = dir.join("exact.json");
    fs::write(&path, serde_json::to_string(&TableFile { rows }).unwrap()).unwrap();
    path
}

#[test]
fn reconstruct_exact_table_and_linear_law() {
    let dir = tempfile::tempdir().unwrap();
    let table = exact_table(dir.path());
    let run = |law: &str| {
        let out = dir.path().join(law);
        let args = ["reconstruct", "--table", p(&table), "--pairs", DEMO8, "--law", law, "--out", p(&out)];
        ok(&spinlab(args));
        read_json::<EmbeddingFile>(&out.join("embedding.json")).unwrap()
    };
    let e = run("sinsq");
    assert!(e.stress <= 1e-9, "{}", e.stress);
    assert!(e.procrustes_rms.unwrap() <= 1e-9);
    assert_eq!((e.left.len(), e.right.len(), e.pairs_present), (8, 8, 64));
    for v in e.left.values().chain(e.right.values()) {
        assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let lin = run("linear");
    assert!(lin.stress >= 1e-2, "{}", lin.stress);
}

#[test]
fn simulate_output_feeds_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    ok(&spinlab(["simulate", "--trials", "1e6", "--pairs", DEMO8, "--seed", "11", "--out", p(&sim)]));
    let log = sim.join("logbook.csv");
    let agg = sim.join("aggregate.json");

    let a = dir.path().join("a");
    ok(&spinlab(["reconstruct", "--logbook", p(&log), "--pairs", DEMO8, "--out", p(&a)]));
    let from_log: EmbeddingFile = read_json(&a.join("embedding.json")).unwrap();
    assert!(from_log.procrustes_rms.unwrap() <= 2e-2);
    assert!(from_log.warnings.is_empty(), "{:?}", from_log.warnings);
    assert_eq!(from_log.trials, 1_000_000);

    // the pair table carries the same counts, so the fit is the same
    let b = dir.path().join("b");
    ok(&spinlab(["reconstruct", "--table", p(&agg), "--pairs", DEMO8, "--out", p(&b)]));
    let from_table: EmbeddingFile = read_json(&b.join("embedding.json")).unwrap();
    assert!((from_table.stress - from_log.stress).abs() < 1e-12);

    // without a mark configuration the ids come from the logbook
    let c = dir.path().join("c");
    ok(&spinlab(["reconstruct", "--logbook", p(&log), "--out", p(&c)]));
    let bare: EmbeddingFile = read_json(&c.join("embedding.json")).unwrap();
    assert_eq!(bare.procrustes_rms, None);
    assert!(bare.left.contains_key("L7") && bare.right.contains_key("R0"));
}

#[test]
fn reconstruct_warnings_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "left_mark,right_mark,result\nL0,R0,S\nL0,R1,N\nL1,R0,N\n").unwrap();
    let out = spinlab(["reconstruct", "--logbook", p(&log), "--out", p(dir.path())]);
    assert_eq!(code(&out), 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("1 of 4 mark pairs were never observed"), "{stderr}");
    assert!(stderr.contains("fewer than 30 trials"));

    assert_eq!(code(&spinlab(["reconstruct", "--logbook", p(&dir.path().join("missing.csv"))])), 2);
    let args = ["reconstruct", "--logbook", p(&log), "--pairs", DEMO8, "--out", p(dir.path())];
    fs::write(&log, "left_mark,right_mark,result\nQ9,R0,S\n").unwrap();
    assert_eq!(code(&spinlab(args)), 1);
    fs::write(&log, "left_mark,right_mark,result\n").unwrap();
    assert_eq!(code(&spinlab(args)), 1);
}
