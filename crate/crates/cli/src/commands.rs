use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mgn::export::{Cell, Csv};
use mgn::gradfield::{run_gradfield, GradFieldConfig};
use mgn::imaging::{adapt_apply, adapt_train, load_image, mapped_kl, save_image, AdaptConfig, AdaptError};
use mgn::mgn::{init_params, load_model, model_to_string, random_model, Architecture, CmgnSpec, MmgnSpec};
use mgn::properties::{check_model, CheckConfig, Suite, SuiteTally, Tolerances};
use mgn::rng::substream;
use mgn::training::{LossKind, TrainConfig, TrainFailure, TrainReport};
use mgn::transport::{
    coupling_samples, random_gaussian, run_coupling, run_whitening, scatter_csv, whitening_map, CouplingConfig,
    CouplingError, CouplingReport,
};
use mgn::{Error, MgnModel, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::{Common, Failure};

fn config_err(e: Error) -> Failure {
    Failure::config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::runtime(e.to_string())
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))
    }

    fn csv(&self, name: &str, csv: &Csv) -> Result<(), Failure> {
        self.write(name, csv.render())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
        self.write(name, text + "\n")
    }

    fn model(&self, name: &str, model: &MgnModel) -> Result<(), Failure> {
        self.write(name, model_to_string(model).map_err(runtime_err)?)
    }

    fn report(&self, prefix: &str, report: &TrainReport) -> Result<(), Failure> {
        self.json(&format!("{prefix}train_report.json"), report)?;
        self.csv(&format!("{prefix}loss.csv"), &report.loss_csv())
    }

    /// Saves what a failed run completed and turns it into an exit status.
    fn failed(&self, prefix: &str, failure: &TrainFailure) -> Failure {
        if let Err(e) = self.report(prefix, &failure.report) {
            return e;
        }
        Failure::runtime(failure.to_string())
    }
}

fn train_config(mut train: TrainConfig, seed: u64) -> Result<TrainConfig, Failure> {
    train.seed = seed;
    train.validate().map_err(config_err)?;
    Ok(train)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradfieldFile {
    model: ModelSpec,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    experiment: GradfieldExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradfieldExperiment {
    samples: usize,
    lattice: usize,
}

impl Default for GradfieldExperiment {
    fn default() -> Self {
        let d = GradFieldConfig::default();
        Self { samples: d.samples, lattice: d.lattice }
    }
}

pub fn gradfield(c: &Common) -> Result<(), Failure> {
    let mut raw = RawConfig::load(c.config.as_deref(), &c.overrides)?;
    let seed = raw.seed(c.seed)?;
    let file: GradfieldFile = raw.parse()?;
    let spec = file.model.with_n(2).map_err(config_err)?;
    let model = init_params(&spec, seed).map_err(config_err)?;
    let mut train = train_config(file.train, seed)?;
    train.loss = LossKind::Mae;
    if file.experiment.samples == 0 || file.experiment.lattice < 2 {
        return Err(Failure::config("experiment needs samples ≥ 1 and lattice ≥ 2"));
    }
    let cfg = GradFieldConfig { samples: file.experiment.samples, lattice: file.experiment.lattice, seed, train };
    let out = Out::create(&c.out)?;
    let result = run_gradfield(&model, &cfg).map_err(|f| out.failed("", &f))?;
    out.model("model.json", &result.model)?;
    out.report("", &result.train)?;
    out.csv("error_grid.csv", &result.grid.csv())?;
    out.csv("quiver.csv", &result.grid.quiver_csv())?;
    out.write("error_map.pgm", result.grid.pgm())?;
    let summary = format!("mse_db={} params={}", result.mse_db, result.param_count);
    out.write("summary.txt", format!("{summary}\n"))?;
    println!("{summary}");
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Cmgn,
    Mmgn,
    Whitening,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Cmgn => "cmgn",
            Method::Mmgn => "mmgn",
            Method::Whitening => "whitening",
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingModels {
    cmgn: Option<CmgnSpec>,
    mmgn: Option<MmgnSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingFile {
    #[serde(default)]
    model: CouplingModels,
    #[serde(default)]
    train: TrainConfig,
    experiment: CouplingExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CouplingExperiment {
    d: usize,
    methods: Vec<Method>,
    #[serde(default = "default_samples")]
    train_samples: usize,
    #[serde(default = "default_samples")]
    test_samples: usize,
    #[serde(default = "default_scatter")]
    scatter_points: usize,
    /// Range of the data covariance eigenvalues.
    #[serde(default = "default_eigen_range")]
    eigenvalues: [f64; 2],
    /// Seed for drawing the data Gaussian; the run seed when absent.
    data_seed: Option<u64>,
}

fn default_samples() -> usize {
    10_000
}

fn default_scatter() -> usize {
    500
}

fn default_eigen_range() -> [f64; 2] {
    [0.25, 4.0]
}

#[derive(Serialize)]
struct GaussianDump<'a> {
    d: usize,
    data_seed: u64,
    mean: &'a [f64],
    covariance: &'a [f64],
}

pub fn coupling(c: &Common) -> Result<(), Failure> {
    let mut raw = RawConfig::load(c.config.as_deref(), &c.overrides)?;
    let seed = raw.seed(c.seed)?;
    let file: CouplingFile = raw.parse()?;
    let exp = &file.experiment;
    if exp.d == 0 {
        return Err(Failure::config("experiment.d must be at least 1"));
    }
    if exp.methods.is_empty() {
        return Err(Failure::config("experiment.methods is empty"));
    }
    let [lo, hi] = exp.eigenvalues;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Failure::config("experiment.eigenvalues must be 0 < lo ≤ hi"));
    }
    if exp.train_samples <= exp.d || exp.test_samples == 0 {
        return Err(Failure::config("experiment needs more than d training samples and at least one test sample"));
    }
    let mut train = train_config(file.train, seed)?;
    train.loss = LossKind::FlowNll;
    let cfg = CouplingConfig { train_samples: exp.train_samples, test_samples: exp.test_samples, seed, train };

    // Build every model before any training so config errors surface first.
    let mut models = Vec::new();
    for &m in &exp.methods {
        let spec = match m {
            Method::Whitening => None,
            Method::Cmgn => Some(ModelSpec::Cmgn(
                file.model.cmgn.clone().ok_or_else(|| Failure::config("method cmgn needs a [model.cmgn] section"))?,
            )),
            Method::Mmgn => Some(ModelSpec::Mmgn(
                file.model.mmgn.clone().ok_or_else(|| Failure::config("method mmgn needs a [model.mmgn] section"))?,
            )),
        };
        let model = match spec {
            Some(s) => {
                let s = s.with_n(exp.d).map_err(config_err)?;
                if s.gamma() <= 0.0 {
                    return Err(Failure::config(format!("method {} needs gamma > 0", m.name())));
                }
                Some(init_params(&s, seed).map_err(config_err)?)
            }
            None => None,
        };
        models.push((m, model));
    }

    let data_seed = exp.data_seed.unwrap_or(seed);
    let data = random_gaussian(exp.d, (lo, hi), &mut substream(data_seed, "gaussian"));
    let out = Out::create(&c.out)?;
    out.json(
        "data_gaussian.json",
        &GaussianDump { d: exp.d, data_seed, mean: data.mean().as_slice(), covariance: data.covariance().as_slice() },
    )?;
    let (_, test) = coupling_samples(&data, &cfg);
    let shown = &test[..exp.scatter_points.min(test.len())];

    let mut reports = Vec::new();
    for (m, model) in models {
        let name = m.name();
        let (report, mapped) = match model {
            None => {
                let (report, fitted) = run_whitening(&data, &cfg).map_err(runtime_err)?;
                let mapped = shown.iter().map(|x| whitening_map(&fitted, x)).collect::<Result<Vec<_>, _>>();
                (report, mapped.map_err(runtime_err)?)
            }
            Some(model) => {
                let run = run_coupling(name, &model, &data, &cfg).map_err(|e| match e {
                    CouplingError::Setup(e) => config_err(e),
                    CouplingError::Training(f) => out.failed(&format!("{name}_"), &f),
                })?;
                out.model(&format!("model_{name}.json"), &run.model)?;
                out.report(&format!("{name}_"), &run.train)?;
                (run.report, run.model.forward_batch(shown).map_err(runtime_err)?)
            }
        };
        out.csv(&format!("scatter_{name}.csv"), &scatter_csv(name, shown, &mapped))?;
        println!(
            "method={} d={} nll={} cost={} optimal_cost={} entropy_bound={}",
            report.method, report.d, report.nll, report.cost, report.optimal_cost, report.entropy_bound
        );
        reports.push(report);
    }
    CouplingReport::csv(&reports).append(&out.path("coupling.csv")).map_err(runtime_err)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptFile {
    model: ModelSpec,
    #[serde(default)]
    train: TrainConfig,
    experiment: AdaptExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptExperiment {
    source: PathBuf,
    target: PathBuf,
    #[serde(default)]
    test: Vec<PathBuf>,
    #[serde(default = "default_max_pixels")]
    max_pixels: usize,
}

fn default_max_pixels() -> usize {
    AdaptConfig::default().max_pixels
}

#[derive(Serialize)]
struct AdaptDump<'a> {
    #[serde(flatten)]
    summary: &'a mgn::imaging::AdaptationSummary,
    test_kl: BTreeMap<String, f64>,
}

pub fn adapt(c: &Common) -> Result<(), Failure> {
    let mut raw = RawConfig::load(c.config.as_deref(), &c.overrides)?;
    let seed = raw.seed(c.seed)?;
    let file: AdaptFile = raw.parse()?;
    let spec = file.model.with_n(3).map_err(config_err)?;
    if spec.gamma() <= 0.0 {
        return Err(Failure::config("the pixel map needs gamma > 0"));
    }
    let model = init_params(&spec, seed).map_err(config_err)?;
    let train = train_config(file.train, seed)?;
    let exp = &file.experiment;
    if exp.max_pixels == 0 {
        return Err(Failure::config("experiment.max_pixels must be at least 1"));
    }
    let load = |p: &Path| {
        let path = raw.resolve(p);
        load_image(&path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    };
    let source = load(&exp.source)?;
    let target = load(&exp.target)?;
    let tests = exp.test.iter().map(|p| Ok((p.clone(), load(p)?))).collect::<Result<Vec<_>, Failure>>()?;

    let cfg = AdaptConfig { max_pixels: exp.max_pixels, seed, train };
    let out = Out::create(&c.out)?;
    let result = adapt_train(&source, &target, &model, &cfg).map_err(|e| match e {
        AdaptError::Setup(e) => config_err(e),
        AdaptError::Training(f) => out.failed("", &f),
    })?;
    out.model("model.json", &result.model)?;
    out.report("", &result.train)?;
    let mut kl_csv = Csv::new(&["epoch", "kl"]);
    for (e, &kl) in result.summary.kl_per_epoch.iter().enumerate() {
        kl_csv.push(vec![Cell::from(e + 1), Cell::from(kl)]);
    }
    out.csv("kl.csv", &kl_csv)?;

    let mut test_csv = Csv::new(&["image", "kl"]);
    let mut test_kl = BTreeMap::new();
    println!("kl={}", result.summary.kl);
    for (path, image) in &tests {
        let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        let mapped = adapt_apply(&result.model, image).map_err(runtime_err)?;
        save_image(&mapped, &out.path(&format!("mapped_{stem}.png"))).map_err(runtime_err)?;
        let kl = mapped_kl(&result.model, &result.target, &image.flat()).map_err(runtime_err)?;
        test_csv.push(vec![Cell::from(stem.as_str()), Cell::from(kl)]);
        println!("test_kl[{stem}]={kl}");
        test_kl.insert(stem, kl);
    }
    out.csv("test_kl.csv", &test_csv)?;
    out.json("adaptation.json", &AdaptDump { summary: &result.summary, test_kl })?;
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyFile {
    #[serde(default)]
    experiment: VerifyExperiment,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifyExperiment {
    /// Random models per architecture and dimension.
    trials: usize,
    dims: Vec<usize>,
    architectures: Vec<Architecture>,
    /// Jacobian checks per model.
    points: usize,
    pairs: usize,
    quadrature: usize,
    lo: f64,
    hi: f64,
}

impl Default for VerifyExperiment {
    fn default() -> Self {
        let c = CheckConfig::default();
        Self {
            trials: 100,
            dims: vec![1, 2, 5, 16],
            architectures: vec![Architecture::Cmgn, Architecture::Mmgn],
            points: c.points,
            pairs: c.pairs,
            quadrature: c.quadrature,
            lo: c.lo,
            hi: c.hi,
        }
    }
}

#[derive(Serialize)]
struct ViolationDump {
    model_index: usize,
    architecture: String,
    n: usize,
    suite: &'static str,
    x: Vec<f64>,
    y: Option<Vec<f64>>,
    value: f64,
    detail: String,
    model: serde_json::Value,
}

pub fn verify(c: &Common, model_path: Option<&Path>) -> Result<(), Failure> {
    let mut raw = RawConfig::load(c.config.as_deref(), &c.overrides)?;
    let seed = raw.seed(c.seed)?;
    let file: VerifyFile = raw.parse()?;
    let exp = file.experiment;
    if !(exp.lo < exp.hi) || exp.quadrature < 2 {
        return Err(Failure::config("experiment needs lo < hi and quadrature ≥ 2"));
    }
    let check = CheckConfig {
        points: exp.points,
        pairs: exp.pairs,
        quadrature: exp.quadrature,
        lo: exp.lo,
        hi: exp.hi,
        tol: Tolerances::default(),
    };
    let mut rng = substream(seed, "verify");
    let mut models: Vec<MgnModel> = Vec::new();
    let mut tally = SuiteTally::new();
    match model_path {
        Some(p) => {
            let model = load_model(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            let file_check = CheckConfig { points: check.points.max(exp.trials), ..check };
            tally.record(0, check_model(&model, &mut rng, &file_check));
            models.push(model);
        }
        None => {
            for &arch in &exp.architectures {
                for &n in &exp.dims {
                    if n == 0 {
                        return Err(Failure::config("dims must be positive"));
                    }
                    for _ in 0..exp.trials {
                        let model = random_model(arch, n, &mut rng);
                        tally.record(models.len(), check_model(&model, &mut rng, &check));
                        models.push(model);
                    }
                }
            }
        }
    }

    let out = Out::create(&c.out)?;
    let mut csv = Csv::new(&["suite", "passed", "total", "worst"]);
    for (k, suite) in Suite::ALL.iter().enumerate() {
        println!("{}: {}/{} passed (worst {:e})", suite.name(), tally.passed[k], tally.total[k], tally.worst[k]);
        csv.push(vec![
            Cell::from(suite.name()),
            Cell::from(tally.passed[k]),
            Cell::from(tally.total[k]),
            Cell::from(tally.worst[k]),
        ]);
    }
    out.csv("verify.csv", &csv)?;
    if tally.all_passed() {
        return Ok(());
    }
    let mut dumps = Vec::new();
    for (index, v) in &tally.violations {
        let m = &models[*index];
        let text = model_to_string(m).map_err(runtime_err)?;
        dumps.push(ViolationDump {
            model_index: *index,
            architecture: m.architecture().to_string(),
            n: m.n(),
            suite: v.suite.name(),
            x: v.x.clone(),
            y: v.y.clone(),
            value: v.value,
            detail: v.detail.clone(),
            model: serde_json::from_str(&text).map_err(runtime_err)?,
        });
    }
    out.json("violations.json", &dumps)?;
    for d in &dumps {
        eprintln!("violation: model {} ({} n={}) {} at x={:?}: {}", d.model_index, d.architecture, d.n, d.suite, d.x, d.detail);
    }
    Err(Failure::Violation(format!(
        "{} property violations; details in {}",
        dumps.len(),
        out.path("violations.json").display()
    )))
}

pub fn info(path: &Path) -> Result<(), Failure> {
    let model = load_model(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    println!("architecture: {}", model.architecture());
    println!("n: {}", model.n());
    println!("parameters: {}", model.param_count());
    println!("gamma: {}", model.gamma());
    match &model {
        MgnModel::Cmgn(m) => {
            println!("hidden: {}", m.hidden());
            println!("layers: {}", m.layers());
            println!("rank: {}", m.rank());
            let acts: Vec<&str> = m.activations().iter().map(|a| a.name()).collect();
            println!("activations: {}", acts.join(", "));
            println!("diag_scales: {}", m.diag_scales().is_some());
        }
        MgnModel::Mmgn(m) => {
            println!("rank: {}", m.rank());
            let widths: Vec<String> = m.modules().iter().map(|k| k.width().to_string()).collect();
            println!("widths: [{}]", widths.join(", "));
            let acts: Vec<&str> = m.modules().iter().map(|k| k.activation().name()).collect();
            println!("activations: {}", acts.join(", "));
        }
    }
    Ok(())
}
