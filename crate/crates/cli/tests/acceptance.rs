//! End-to-end acceptance run: every experiment through the `mgn` binary
//! with the shipped configs, checked at fixed tolerances. Prints one line
//! per criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use mgn::mgn::load_model;
use mgn::properties::circulation;
use mgn::rng::substream;
use mgn::transport::{entropy_bound, fit_gaussian, random_gaussian, run_whitening, whitening_map, CouplingConfig};
use mgn::DenseMatrix;
use tempfile::TempDir;

struct Run {
    dir: PathBuf,
    secs: f64,
    ok: bool,
    log: String,
}

struct Harness {
    root: TempDir,
    configs: PathBuf,
}

impl Harness {
    fn run(&self, cmd: &str, config: &str, tag: &str) -> Run {
        let dir = self.root.path().join(tag);
        let start = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_mgn"))
            .arg(cmd)
            .arg("--config")
            .arg(self.configs.join(config))
            .arg("--out")
            .arg(&dir)
            .output()
            .expect("spawn mgn");
        let secs = start.elapsed().as_secs_f64();
        let log = format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
        Run { dir, secs, ok: o.status.success(), log }
    }
}

type Verdict = Result<String, String>;

fn check(cond: bool, msg: String) -> Verdict {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn completed(run: &Run, limit: f64) -> Result<(), String> {
    if !run.ok {
        return Err(format!("run failed: {}", run.log.trim()));
    }
    if run.secs > limit {
        return Err(format!("took {:.0} s, limit {limit:.0} s", run.secs));
    }
    Ok(())
}

fn summary(dir: &Path) -> BTreeMap<String, f64> {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap_or_default();
    text.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .filter_map(|(k, v)| Some((k.to_string(), v.parse().ok()?)))
        .collect()
}

/// `method → [nll, cost, optimal_cost, entropy_bound]` from coupling.csv.
fn coupling_rows(dir: &Path) -> BTreeMap<String, [f64; 4]> {
    let text = fs::read_to_string(dir.join("coupling.csv")).unwrap_or_default();
    text.lines()
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| f.get(i).and_then(|s| s.parse::<f64>().ok());
            Some((f[0].to_string(), [num(2)?, num(3)?, num(4)?, num(5)?]))
        })
        .collect()
}

fn criterion_1(h: &Harness, runs: &mut Vec<(String, Run)>) -> Verdict {
    let run = h.run("verify", "verify.toml", "verify");
    completed(&run, 120.0)?;
    let suites: Vec<&str> = run.log.lines().filter(|l| l.contains(" passed")).collect();
    let msg = format!("{} in {:.0} s", suites.join("; "), run.secs);
    runs.push(("verify.toml".into(), run));
    Ok(msg)
}

fn criterion_2(h: &Harness, runs: &mut Vec<(String, Run)>) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (config, arch, limit_db, params) in [("gradfield_cmgn.toml", "cmgn", -30.0, 14.0), ("gradfield_mmgn.toml", "mmgn", -25.0, 22.0)] {
        let run = h.run("gradfield", config, &format!("gradfield_{arch}"));
        completed(&run, 900.0).map_err(|e| format!("{arch}: {e}"))?;
        let s = summary(&run.dir);
        let (db, p) = (s.get("mse_db").copied().unwrap_or(f64::NAN), s.get("params").copied().unwrap_or(0.0));
        let ok = db <= limit_db && p == params;
        pass &= ok;
        parts.push(format!("{arch} {db:.2} dB (≤ {limit_db}) params {p} in {:.0} s", run.secs));
        runs.push((config.into(), run));
    }
    check(pass, parts.join("; "))
}

fn coupling_check(run: &Run, nll_slack: f64, cost_ratio: f64, versus_whitening: bool) -> Verdict {
    let rows = coupling_rows(&run.dir);
    let mut parts = Vec::new();
    let mut pass = true;
    let wt_cost = rows.get("whitening").map(|r| r[1]);
    for m in ["cmgn", "mmgn"] {
        let Some(&[nll, cost, optimal, bound]) = rows.get(m) else {
            return Err(format!("no {m} row in coupling.csv"));
        };
        let mut ok = nll <= bound + nll_slack && cost <= cost_ratio * optimal;
        if versus_whitening {
            ok &= wt_cost.is_some_and(|w| cost < w);
        }
        pass &= ok;
        parts.push(format!("{m} nll {nll:.4} (bound {bound:.4}) cost {cost:.4} ({:.3}× optimal)", cost / optimal));
    }
    if let Some(w) = wt_cost {
        parts.push(format!("whitening cost {w:.4}"));
    }
    parts.push(format!("{:.0} s", run.secs));
    check(pass, parts.join("; "))
}

fn criterion_3(h: &Harness, runs: &mut Vec<(String, Run)>) -> Verdict {
    let run = h.run("coupling", "coupling_d2.toml", "coupling_d2");
    completed(&run, 600.0)?;
    let v = coupling_check(&run, 0.1, 1.15, true);
    runs.push(("coupling_d2.toml".into(), run));
    v
}

fn criterion_4(h: &Harness, runs: &mut Vec<(String, Run)>) -> Verdict {
    let run = h.run("coupling", "coupling_d16.toml", "coupling_d16");
    completed(&run, 2700.0)?;
    let v = coupling_check(&run, 0.3, 1.10, false);
    runs.push(("coupling_d16.toml".into(), run));
    v
}

fn criterion_5() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for d in [2, 16] {
        let data = random_gaussian(d, (0.25, 4.0), &mut substream(5, "gaussian"));
        let cfg = CouplingConfig { train_samples: 100_000, test_samples: 100_000, seed: 5, ..CouplingConfig::default() };
        let (report, fitted) = run_whitening(&data, &cfg).map_err(|e| e.to_string())?;
        let bound = entropy_bound(&data);
        let samples = mgn::transport::coupling_samples(&data, &cfg).0;
        let mapped: Vec<_> = samples.iter().map(|x| whitening_map(&fitted, x)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let cov = fit_gaussian(&mapped).map_err(|e| e.to_string())?;
        let frob = cov.covariance().sub(&DenseMatrix::identity(d)).frobenius();
        let gap = (report.nll - bound).abs();
        pass &= gap <= 0.05 && frob <= 0.02;
        parts.push(format!("d={d} |nll − bound| {gap:.2e} (≤ 0.05), ‖Σ − I‖_F {frob:.2e} (≤ 0.02)"));
    }
    check(pass, parts.join("; "))
}

fn criterion_6(h: &Harness, runs: &mut Vec<(String, Run)>) -> Verdict {
    let run = h.run("adapt", "adapt.toml", "adapt");
    completed(&run, 600.0)?;
    let text = fs::read_to_string(run.dir.join("adaptation.json")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let kl = doc["kl"].as_f64().unwrap_or(f64::NAN);
    let tests: Vec<(String, f64)> = doc["test_kl"]
        .as_object()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.as_f64().unwrap_or(f64::NAN))).collect())
        .unwrap_or_default();
    let pass = kl <= 0.05 && !tests.is_empty() && tests.iter().all(|(_, v)| *v <= 0.1);
    let held: Vec<String> = tests.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
    let msg = format!("train KL {kl:.4} (≤ 0.05), held-out KL {} (≤ 0.1) in {:.0} s", held.join(", "), run.secs);
    runs.push(("adapt.toml".into(), run));
    check(pass, msg)
}

fn criterion_7(runs: &[(String, Run)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for arch in ["cmgn", "mmgn"] {
        let Some((_, run)) = runs.iter().find(|(c, _)| c == &format!("gradfield_{arch}.toml")) else {
            return Err(format!("no trained {arch} gradient-field model"));
        };
        let model = load_model(run.dir.join("model.json")).map_err(|e| e.to_string())?;
        let (circ, mean_norm) = circulation(&model, 0, 1, 10_001);
        let rel = circ.abs() / mean_norm;
        pass &= rel <= 1e-6;
        parts.push(format!("{arch} |∮ g·dr| / mean‖g‖ = {rel:.2e}"));
    }
    check(pass, format!("{} (≤ 1e-6)", parts.join("; ")))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().into_owned();
            if name.ends_with(".csv") {
                out.insert(name, fs::read(e.path()).unwrap_or_default());
            }
        }
    }
    out
}

fn criterion_8(h: &Harness, runs: &[(String, Run)]) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (config, first) in runs {
        let cmd = match config.split('_').next().unwrap_or("").trim_end_matches(".toml") {
            "gradfield" => "gradfield",
            "coupling" => "coupling",
            "adapt" => "adapt",
            _ => "verify",
        };
        let again = h.run(cmd, config, &format!("repeat_{}", config.trim_end_matches(".toml")));
        let (a, b) = (csv_files(&first.dir), csv_files(&again.dir));
        let same = again.ok && !a.is_empty() && a == b;
        pass &= same;
        parts.push(format!("{config}: {} csv {}", a.len(), if same { "identical" } else { "DIFFER" }));
    }
    check(pass, parts.join("; "))
}

fn main() -> ExitCode {
    let h = Harness {
        root: TempDir::new().expect("temp dir"),
        configs: Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs"),
    };
    let mut runs = Vec::new();
    let mut failed = 0;
    let mut report = |n: usize, v: Verdict| {
        let (tag, msg) = match v {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {n}: {tag} {msg}");
    };
    report(1, criterion_1(&h, &mut runs));
    report(2, criterion_2(&h, &mut runs));
    report(3, criterion_3(&h, &mut runs));
    report(4, criterion_4(&h, &mut runs));
    report(5, criterion_5());
    report(6, criterion_6(&h, &mut runs));
    report(7, criterion_7(&runs));
    report(8, criterion_8(&h, &runs));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
