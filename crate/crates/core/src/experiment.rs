//! Batch experiments driven by TOML configuration files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clt::{
    empirical_char_fn, esseen_bound, komlos_quantities, run_clt_samples, verify_komlos_inequalities, CltExperiment,
    Standardization, DEFAULT_C_MAX,
};
use crate::coboundary::{coboundary_detect, CoboundarySource};
use crate::ergodic::{
    blocked_quantities, quenched_variance_curve, quenched_variance_curve_mc, variance_series, BlockScheme, WordAveraging,
};
use crate::error::{Error, Result};
use crate::functions::{fejer_approx, FejerSource, HolderFn, Observable, RegularSetIndicator, DEFAULT_MESH};
use crate::lattice::{check_separation, SeparationInstance, DEFAULT_SEPARATION_BUDGET};
use crate::linalg::{Alphabet, IntMatrix, JsonInt};
use crate::products::{
    empirical_block_norm_growth, empirical_small_norm, empirical_stationary_direction, growth_diagnostics,
    irreducibility_evidence, proximality_flag, sample_word, DirectionSamples, GrowthOptions, WordSource,
};
use crate::sl2::{dilation_constants, delta_from_d, spectral, DilationConstants};
use crate::stats::{linear_fit, normal_cdf};
use crate::torus::Modulus;
use crate::trig::TrigPoly;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Clt,
    Variance,
    Separation,
    Sl2Constants,
    Komlos,
    Diagnostics,
    Coboundary,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Clt => "clt",
            Task::Variance => "variance",
            Task::Separation => "separation",
            Task::Sl2Constants => "sl2-constants",
            Task::Komlos => "komlos",
            Task::Diagnostics => "diagnostics",
            Task::Coboundary => "coboundary",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LetterConfig {
    #[serde(default)]
    pub label: Option<String>,
    pub rows: Vec<Vec<JsonInt>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphabetConfig {
    /// `standard` (two positive letters) or `cat` (the single letter [[2,1],[1,1]]).
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub letters: Vec<LetterConfig>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Iid,
    Explicit,
    Rotation,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default)]
    pub kind: SourceKind,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub indices: Option<Vec<usize>>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    #[serde(default)]
    pub omega0: Option<f64>,
    #[serde(default)]
    pub letters: Option<[usize; 2]>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionKind {
    #[default]
    Cos,
    Trig,
    DistancePower,
    Box,
    Ball,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub freq: Vec<i64>,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionConfig {
    #[serde(default)]
    pub kind: FunctionKind,
    /// `cos`: frequency (default the first unit vector) and amplitude.
    #[serde(default)]
    pub freq: Option<Vec<i64>>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub lo: Option<Vec<f64>>,
    #[serde(default)]
    pub hi: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    /// Fejér order of the polynomial proxy used for non-polynomial functions.
    #[serde(default)]
    pub fejer_order: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StandardizationMode {
    #[default]
    ExactL2,
    Series,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub n_grid: Vec<usize>,
    pub samples: usize,
    pub beta: f64,
    pub delta_n: usize,
    pub komlos_n: usize,
    pub x: f64,
    pub c_probe: f64,
    pub d_bound: u64,
    pub gap: Option<usize>,
    pub s_max: usize,
    pub word_length: usize,
    pub separation_budget: u64,
    pub r_max: usize,
    pub horizon: usize,
    pub assume_condition: bool,
    pub trials: usize,
    pub sample_budget: usize,
    pub standardization: StandardizationMode,
    pub esseen_u: f64,
    pub char_fn_points: usize,
    pub small_norm_eps: f64,
    pub block_r_min: usize,
    pub zeta: Option<f64>,
    pub direction_bins: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            n_grid: vec![500, 5000],
            samples: 10_000,
            beta: 0.5,
            delta_n: 2,
            komlos_n: 64,
            x: 0.1,
            c_probe: 1.0,
            d_bound: 1,
            gap: None,
            s_max: 3,
            word_length: 12,
            separation_budget: DEFAULT_SEPARATION_BUDGET,
            r_max: 8,
            horizon: crate::coboundary::DEFAULT_HORIZON,
            assume_condition: false,
            trials: 1000,
            sample_budget: crate::sl2::DEFAULT_SAMPLE_BUDGET,
            standardization: StandardizationMode::ExactL2,
            esseen_u: 10.0,
            char_fn_points: 401,
            small_norm_eps: 1e-3,
            block_r_min: 10,
            zeta: None,
            direction_bins: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    /// Modulus of the exact torus; defaults to `2^61 − 1`.
    #[serde(default)]
    pub modulus: Option<u64>,
    #[serde(default)]
    pub alphabet: AlphabetConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub function: FunctionConfig,
    #[serde(default)]
    pub params: Params,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| config_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    pub fn modulus(&self) -> Result<Modulus> {
        match self.modulus {
            Some(q) => Modulus::new(q).map_err(|e| config_err(e.to_string())),
            None => Ok(Modulus::default()),
        }
    }

    pub fn build_alphabet(&self) -> Result<Arc<Alphabet>> {
        let a = &self.alphabet;
        let alphabet = match (&a.preset, a.letters.is_empty()) {
            (Some(_), false) => return Err(config_err("alphabet takes either a preset or letters, not both")),
            (None, true) => Alphabet::standard_positive(),
            (Some(p), true) => match p.as_str() {
                "standard" => Alphabet::standard_positive(),
                "cat" => Alphabet::from_matrices(vec![IntMatrix::m2(2, 1, 1, 1)])?,
                other => return Err(config_err(format!("unknown alphabet preset `{other}`"))),
            },
            (None, false) => Alphabet::from_specs(
                a.letters
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.label.clone().unwrap_or_else(|| letter_label(i)), l.rows.clone()))
                    .collect(),
            )
            .map_err(|e| config_err(e.to_string()))?,
        };
        Ok(Arc::new(alphabet))
    }

    pub fn build_source(&self, alphabet: &Arc<Alphabet>) -> Result<WordSource> {
        let s = &self.source;
        let src = match s.kind {
            SourceKind::Iid => match &s.weights {
                Some(w) => WordSource::iid(alphabet.clone(), w.clone(), self.seed),
                None => Ok(WordSource::uniform(alphabet.clone(), self.seed)),
            },
            SourceKind::Explicit => {
                let idx = s.indices.clone().ok_or_else(|| config_err("explicit source needs `indices`"))?;
                crate::linalg::Word::new(alphabet.clone(), idx).map(WordSource::Explicit)
            }
            SourceKind::Rotation => {
                let need = |v: Option<f64>, name: &str| v.ok_or_else(|| config_err(format!("rotation source needs `{name}`")));
                let letters = s.letters.unwrap_or([0, 1]);
                WordSource::rotation(
                    alphabet.clone(),
                    (letters[0], letters[1]),
                    need(s.alpha, "alpha")?,
                    need(s.lo, "lo")?,
                    need(s.hi, "hi")?,
                    s.omega0.unwrap_or(0.0),
                )
            }
        };
        src.map_err(|e| config_err(e.to_string()))
    }

    pub fn build_function(&self, dim: usize) -> Result<PreparedFunction> {
        let f = &self.function;
        let order = f.fejer_order.unwrap_or(8);
        let trig = |t: TrigPoly| -> Result<PreparedFunction> {
            if t.dim() != dim {
                return Err(config_err(format!("function dimension {} differs from alphabet dimension {dim}", t.dim())));
            }
            let mean = t.coeff(&vec![0; dim]).re;
            let centered = t.center();
            Ok(PreparedFunction { observable: Box::new(centered.clone()), proxy: centered, mean, is_polynomial: true })
        };
        match f.kind {
            FunctionKind::Cos => {
                let mut e1 = vec![0; dim];
                e1[0] = 1;
                let p = f.freq.clone().unwrap_or(e1);
                if p.len() != dim || p.iter().all(|&x| x == 0) {
                    return Err(config_err("`freq` must be a nonzero vector of the alphabet dimension"));
                }
                trig(TrigPoly::cosine(&p, f.amplitude.unwrap_or(1.0)))
            }
            FunctionKind::Trig => {
                if f.terms.is_empty() {
                    return Err(config_err("trig function needs `terms`"));
                }
                let t = TrigPoly::from_terms(dim, f.terms.iter().map(|t| (t.freq.clone(), Complex64::new(t.re, t.im))))
                    .map_err(|e| config_err(e.to_string()))?;
                trig(t)
            }
            FunctionKind::DistancePower => {
                let center = f.center.clone().unwrap_or_else(|| vec![0.0; dim]);
                if center.len() != dim {
                    return Err(config_err("`center` has the wrong dimension"));
                }
                let h = HolderFn::distance_power(center, f.exponent.unwrap_or(0.5)).map_err(|e| config_err(e.to_string()))?;
                let proxy = fejer_approx(FejerSource::Holder { f: &h, mesh: DEFAULT_MESH }, order)?;
                let mean = proxy.coeff(&vec![0; dim]).re;
                Ok(PreparedFunction { observable: Box::new(Centered { inner: h, mean }), proxy: proxy.center(), mean, is_polynomial: false })
            }
            FunctionKind::Box | FunctionKind::Ball => {
                let set = if f.kind == FunctionKind::Box {
                    let lo = f.lo.clone().ok_or_else(|| config_err("box needs `lo`"))?;
                    let hi = f.hi.clone().ok_or_else(|| config_err("box needs `hi`"))?;
                    RegularSetIndicator::new_box(lo, hi)
                } else {
                    let c = f.center.clone().ok_or_else(|| config_err("ball needs `center`"))?;
                    RegularSetIndicator::new_ball(c, f.radius.ok_or_else(|| config_err("ball needs `radius`"))?)
                }
                .map_err(|e| config_err(e.to_string()))?;
                if set.dim() != dim {
                    return Err(config_err("set dimension differs from alphabet dimension"));
                }
                let mean = set.measure();
                let proxy = fejer_approx(FejerSource::Set(&set), order)?.center();
                Ok(PreparedFunction { observable: Box::new(Centered { inner: set, mean }), proxy, mean, is_polynomial: false })
            }
        }
    }

    /// Checks everything that can be checked without running the task.
    pub fn validate(&self) -> Result<()> {
        let alphabet = self.build_alphabet()?;
        self.modulus()?;
        self.build_source(&alphabet)?;
        let p = &self.params;
        if p.n_grid.is_empty() || p.n_grid.contains(&0) {
            return Err(config_err("`n_grid` must be nonempty and positive"));
        }
        if !(p.beta > 0.0 && p.beta < 1.0) {
            return Err(config_err("`beta` must lie in (0, 1)"));
        }
        if p.samples < 2 {
            return Err(config_err("`samples` must be at least 2"));
        }
        match self.task {
            Task::Clt | Task::Variance | Task::Komlos | Task::Coboundary => {
                let needs_poly = matches!(self.task, Task::Komlos | Task::Coboundary);
                let kind_is_poly = matches!(self.function.kind, FunctionKind::Cos | FunctionKind::Trig);
                if needs_poly && !kind_is_poly {
                    return Err(config_err(format!("task {} needs a trigonometric polynomial", self.task.name())));
                }
                if !kind_is_poly && self.function.fejer_order.unwrap_or(8) > 64 {
                    return Err(config_err("`fejer_order` above 64 is not supported"));
                }
                if kind_is_poly {
                    self.build_function(alphabet.dim())?;
                }
            }
            Task::Sl2Constants => {
                if alphabet.dim() != 2 || !alphabet.is_positive() {
                    return Err(config_err("sl2-constants needs a positive 2x2 alphabet"));
                }
            }
            Task::Separation => {
                if p.gap.is_none() && (alphabet.dim() != 2 || !alphabet.is_positive()) {
                    return Err(config_err("without `gap`, separation needs a positive 2x2 alphabet"));
                }
            }
            Task::Diagnostics => {}
        }
        if self.task == Task::Komlos {
            BlockScheme::new(p.komlos_n, p.beta, p.delta_n).map_err(|e| config_err(e.to_string()))?;
        }
        Ok(())
    }
}

fn letter_label(i: usize) -> String {
    if i < 26 {
        ((b'A' + i as u8) as char).to_string()
    } else {
        format!("L{i}")
    }
}

/// `f − mean`.
struct Centered<T> {
    inner: T,
    mean: f64,
}

impl<T: Observable> Observable for Centered<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluator(&self, q: Modulus) -> Box<dyn Fn(&[u64]) -> f64 + Send + Sync + '_> {
        let e = self.inner.evaluator(q);
        let m = self.mean;
        Box::new(move |x| e(x) - m)
    }
}

/// Zero-mean observable together with a polynomial proxy used for exact
/// standardization.
pub struct PreparedFunction {
    pub observable: Box<dyn Observable>,
    pub proxy: TrigPoly,
    pub mean: f64,
    pub is_polynomial: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    pub seed: u64,
    pub config_hash: String,
    pub artifact_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    pub fitted_constants: Option<DilationConstants>,
    pub task_log: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    log: Vec<String>,
    constants: Option<DilationConstants>,
}

impl Outputs {
    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)?)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, msg: impl Into<String>) {
        self.log.push(msg.into());
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

/// Runs the configured task, writing CSV/JSON outputs and `manifest.json`
/// into `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: Vec::new(), log: Vec::new(), constants: None };
    out.json("config.json", config)?;
    match config.task {
        Task::Clt => run_clt_task(config, &mut out)?,
        Task::Variance => run_variance_task(config, &mut out)?,
        Task::Separation => run_separation_task(config, &mut out)?,
        Task::Sl2Constants => run_sl2_task(config, &mut out)?,
        Task::Komlos => run_komlos_task(config, &mut out)?,
        Task::Diagnostics => run_diagnostics_task(config, &mut out)?,
        Task::Coboundary => run_coboundary_task(config, &mut out)?,
    }
    let mut outputs = out.files.clone();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        task: config.task.name().into(),
        seed: config.seed,
        config_hash: config.hash()?,
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs,
        fitted_constants: out.constants.clone(),
        task_log: out.log.clone(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn run_clt_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let source = config.build_source(&alphabet)?;
    let f = config.build_function(alphabet.dim())?;
    let standardization = match p.standardization {
        StandardizationMode::ExactL2 => Standardization::ExactL2,
        StandardizationMode::Series => {
            let r_max = p.r_max;
            let exhaustive = (alphabet.len() as f64).powi(r_max as i32) <= 5e6;
            let averaging = if exhaustive {
                WordAveraging::Exhaustive
            } else {
                WordAveraging::Sampled { words: p.samples, seed: config.seed }
            };
            Standardization::SeriesSigma { r_max, averaging }
        }
    };
    let exp = CltExperiment {
        source,
        f: f.observable.as_ref(),
        proxy: Some(&f.proxy),
        n_grid: p.n_grid.clone(),
        samples: p.samples,
        seed: config.seed,
        q: config.modulus()?,
        standardization,
    };
    if !f.is_polynomial {
        out.note(format!("standardized with a Fejér proxy of order {}", config.function.fejer_order.unwrap_or(8)));
    }
    let res = run_clt_samples(&exp)?;
    let r = &res.report;
    out.note(format!("clt: {} samples, n grid {:?}", r.samples, r.n_grid));
    out.csv(
        "clt.csv",
        &["n", "sigma_hat", "ks"],
        r.n_grid
            .iter()
            .zip(&r.sigma_hat)
            .zip(&r.ks_distance)
            .map(|((n, s), k)| vec![n.to_string(), fmt(*s), fmt(*k)])
            .collect(),
    )?;
    let zs: Vec<f64> = (0..=160).map(|i| -4.0 + 0.05 * i as f64).collect();
    let mut ecdf_rows = Vec::new();
    for (n, v) in r.n_grid.iter().zip(&res.values) {
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        for &z in &zs {
            let below = sorted.partition_point(|&x| x <= z) as f64 / sorted.len() as f64;
            ecdf_rows.push(vec![n.to_string(), fmt(z), fmt(below), fmt(normal_cdf(z))]);
        }
    }
    out.csv("ecdf.csv", &["n", "z", "ecdf", "normal_cdf"], ecdf_rows)?;
    let u = p.esseen_u;
    let m = p.char_fn_points.max(3) | 1;
    let grid: Vec<f64> = (0..m).map(|i| -u + 2.0 * u * i as f64 / (m - 1) as f64).collect();
    let mut cf_rows = Vec::new();
    let mut es_rows = Vec::new();
    for ((n, v), ks) in r.n_grid.iter().zip(&res.values).zip(&r.ks_distance) {
        let cf = empirical_char_fn(v, &grid);
        for (x, c) in grid.iter().zip(&cf) {
            cf_rows.push(vec![n.to_string(), fmt(*x), fmt(c.re), fmt(c.im)]);
        }
        let b = esseen_bound(&grid, &cf, 1.0, u)?;
        es_rows.push(vec![n.to_string(), fmt(b.u), fmt(b.integral), fmt(b.tail), fmt(b.total), fmt(*ks)]);
    }
    out.csv("char_fn.csv", &["n", "x", "re", "im"], cf_rows)?;
    out.csv("esseen.csv", &["n", "u", "integral", "tail", "total", "ks"], es_rows)?;
    let slope = if r.n_grid.len() >= 2 && r.ks_distance.iter().all(|&k| k > 0.0) {
        let xs: Vec<f64> = r.n_grid.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = r.ks_distance.iter().map(|k| k.ln()).collect();
        linear_fit(&xs, &ys).map(|f| f.slope)
    } else {
        None
    };
    out.json("clt_report.json", &serde_json::json!({ "report": r, "ks_loglog_slope": slope }))
}

fn run_variance_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let source = config.build_source(&alphabet)?;
    let f = config.build_function(alphabet.dim())?;
    let n_max = *p.n_grid.iter().max().expect("validated");
    let word = sample_word(&source, n_max)?;
    let rows: Vec<Vec<String>> = if f.is_polynomial {
        let curve = quenched_variance_curve(&word, &f.proxy, &p.n_grid)?;
        p.n_grid.iter().zip(curve).map(|(n, v)| vec![n.to_string(), fmt(v), fmt(0.0), "exact".into()]).collect()
    } else {
        let curve =
            quenched_variance_curve_mc(&word, f.observable.as_ref(), config.modulus()?, &p.n_grid, p.samples, config.seed)?;
        p.n_grid.iter().zip(curve).map(|(n, (m, se))| vec![n.to_string(), fmt(m), fmt(se), "monte-carlo".into()]).collect()
    };
    out.csv("variance_curve.csv", &["n", "value", "stderr", "method"], rows)?;
    if let WordSource::Iid { weights, .. } = &source {
        let exhaustive = (alphabet.len() as f64).powi(p.r_max as i32) <= 5e6;
        let averaging =
            if exhaustive { WordAveraging::Exhaustive } else { WordAveraging::Sampled { words: p.samples, seed: config.seed } };
        let s = variance_series(&alphabet, weights, &f.proxy, p.r_max, averaging)?;
        out.json("series.json", &s)?;
    }
    if f.is_polynomial {
        match BlockScheme::new(n_max, p.beta, p.delta_n) {
            Ok(scheme) => {
                let b = blocked_quantities(&word, &f.proxy, &scheme)?;
                out.json("blocked.json", &b)?;
            }
            Err(e) => out.note(format!("blocked quantities skipped: {e}")),
        }
    }
    Ok(())
}

fn run_separation_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let source = config.build_source(&alphabet)?;
    let word = sample_word(&source, p.word_length)?;
    let gap = match p.gap {
        Some(g) => g,
        None => {
            let consts = dilation_constants(&alphabet, p.sample_budget, config.seed)?;
            let g = delta_from_d(p.d_bound as f64, &consts)?;
            out.note(format!("gap {} from the dilation constants (rho1 = {})", g.delta, g.rho1));
            out.constants = Some(consts);
            g.delta as usize
        }
    };
    let mut inst = SeparationInstance::new(word, p.d_bound, gap, p.s_max);
    inst.budget = p.separation_budget;
    let report = check_separation(&inst)?;
    let verdict = serde_json::to_value(report.verdict)?.as_str().unwrap_or_default().to_string();
    let st = &report.search_stats;
    out.csv(
        "separation.csv",
        &["verdict", "d_bound", "gap", "s_max", "word_length", "candidate_sums", "final_blocks_pruned", "s_cap", "s_feasible"],
        vec![vec![
            verdict,
            p.d_bound.to_string(),
            gap.to_string(),
            p.s_max.to_string(),
            p.word_length.to_string(),
            st.candidate_sums.to_string(),
            st.final_blocks_pruned.to_string(),
            st.s_cap.to_string(),
            st.s_feasible.to_string(),
        ]],
    )?;
    out.json("separation.json", &report)
}

fn run_sl2_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let mut rows = Vec::new();
    for l in alphabet.letters() {
        match spectral(&l.matrix) {
            Ok(s) => rows.push(vec![l.label.clone(), fmt(s.r), fmt(s.s), fmt(s.u), fmt(s.v), fmt(s.w), fmt(s.lambda)]),
            Err(e) => out.note(format!("letter {}: {e}", l.label)),
        }
    }
    out.csv("spectral.csv", &["label", "r", "s", "u", "v", "w", "lambda"], rows)?;
    let k = dilation_constants(&alphabet, p.sample_budget, config.seed)?;
    out.note(format!("dilation constants validated after {} refits", k.rounds));
    out.csv(
        "constants.csv",
        &["name", "value"],
        [
            ("c1", k.c1),
            ("gamma", k.gamma),
            ("c", k.c),
            ("c2", k.c2),
            ("slope_lo", k.slope_lo),
            ("slope_hi", k.slope_hi),
            ("delta", k.delta),
            ("cone_fit_slope", k.cone_fit.slope),
            ("cone_fit_offset", k.cone_fit.offset),
            ("cone_analytic_slope", k.cone_analytic.slope),
            ("cone_analytic_offset", k.cone_analytic.offset),
        ]
        .iter()
        .map(|(n, v)| vec![n.to_string(), fmt(*v)])
        .collect(),
    )?;
    let mut gaps = Vec::new();
    for d in 1..=p.d_bound.max(1) {
        let g = delta_from_d(d as f64, &k)?;
        gaps.push(vec![d.to_string(), g.rho1.to_string(), fmt(g.d_prime), g.delta.to_string()]);
    }
    out.csv("gaps.csv", &["d", "rho1", "d_prime", "delta"], gaps)?;
    out.json("dilation.json", &k)?;
    out.constants = Some(k);
    Ok(())
}

fn run_komlos_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let source = config.build_source(&alphabet)?;
    let f = config.build_function(alphabet.dim())?;
    let word = sample_word(&source, p.komlos_n)?;
    let scheme = BlockScheme::new(p.komlos_n, p.beta, p.delta_n)?;
    let k = komlos_quantities(&word, &f.proxy, &scheme, p.x, p.samples, config.seed, config.modulus()?)?;
    if !k.x_delta_ok {
        out.note(format!("|x| delta = {} exceeds 1: inequalities skipped", p.x.abs() * k.delta));
    }
    let r = verify_komlos_inequalities(&k, p.c_probe, DEFAULT_C_MAX);
    out.csv(
        "komlos.csv",
        &[
            "inequality",
            "hypotheses_hold",
            "lhs",
            "lhs_stderr",
            "rest",
            "cubic",
            "rhs_at_probe",
            "minimal_c",
            "cubic_only_c",
            "holds_at_probe",
            "fail",
        ],
        r.checks
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    c.hypotheses_hold.to_string(),
                    fmt(c.lhs),
                    fmt(c.lhs_stderr),
                    fmt(c.rest),
                    fmt(c.cubic),
                    fmt(c.rhs_at_probe),
                    opt(c.minimal_c),
                    opt(c.cubic_only_c),
                    c.holds_at_probe.to_string(),
                    c.fail.to_string(),
                ]
            })
            .collect(),
    )?;
    out.json("komlos.json", &serde_json::json!({ "quantities": k, "report": r }))
}

fn run_diagnostics_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let source = config.build_source(&alphabet)?;
    let g = growth_diagnostics(&source, &p.n_grid, p.trials, &GrowthOptions::default())?;
    out.csv(
        "growth.csv",
        &["n", "statistic", "estimate", "stderr"],
        g.rows.iter().map(|r| vec![r.n.to_string(), r.statistic.clone(), fmt(r.estimate), fmt(r.stderr)]).collect(),
    )?;
    let n_max = *p.n_grid.iter().max().expect("validated");
    let d = alphabet.dim();
    let mut x = vec![0.0; d];
    x[0] = 1.0;
    let small = empirical_small_norm(&source, n_max, p.small_norm_eps, p.trials, &x)?;
    let zeta = p.zeta.or(g.zeta_hat).unwrap_or(1.0);
    let block = empirical_block_norm_growth(&source, n_max.min(200), p.block_r_min, zeta)?;
    let dirs = empirical_stationary_direction(&source, n_max, p.trials, p.direction_bins)?;
    if let DirectionSamples::Histogram { bins, .. } = &dirs {
        out.csv(
            "direction.csv",
            &["bin", "frequency"],
            bins.iter().enumerate().map(|(i, f)| vec![i.to_string(), fmt(*f)]).collect(),
        )?;
    }
    out.json(
        "diagnostics.json",
        &serde_json::json!({
            "growth": g,
            "small_norm": small,
            "block_growth": block,
            "proximality": proximality_flag(&alphabet)?,
            "irreducibility": irreducibility_evidence(&alphabet)?,
            "directions": dirs,
        }),
    )
}

fn run_coboundary_task(config: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let p = &config.params;
    let alphabet = config.build_alphabet()?;
    let f = config.build_function(alphabet.dim())?;
    let report = if alphabet.len() == 1 {
        coboundary_detect(CoboundarySource::Letter(alphabet.matrix(0)), &f.proxy, p.horizon, p.assume_condition)?
    } else {
        let source = config.build_source(&alphabet)?;
        let word = sample_word(&source, p.horizon.max(1))?;
        coboundary_detect(CoboundarySource::Word(&word), &f.proxy, p.horizon, p.assume_condition)?
    };
    out.csv(
        "partial_sums.csv",
        &["k", "partial_sum"],
        report.partial_sums.iter().enumerate().map(|(k, v)| vec![k.to_string(), fmt(*v)]).collect(),
    )?;
    out.json("coboundary.json", &report)
}

/// Human-readable description of the configuration file and output columns.
pub const SCHEMA: &str = r#"# Experiment configuration (TOML)
task = "clt"            # clt | variance | separation | sl2-constants | komlos | diagnostics | coboundary
seed = 0                # every random stream derives from this
modulus = 2305843009213693951   # optional, torus modulus q >= 2

[alphabet]
preset = "standard"     # standard | cat ; or give letters instead:
# letters = [{ label = "A", rows = [[2, 1], [1, 1]] }, { rows = [[1, 1], [1, 2]] }]

[source]
kind = "iid"            # iid | explicit | rotation
# weights = [0.5, 0.5]  # iid, defaults to uniform
# indices = [0, 1, 1]   # explicit, 0-based letter indices
# alpha = 0.618, lo = 0.0, hi = 0.5, omega0 = 0.0, letters = [0, 1]   # rotation

[function]
kind = "cos"            # cos | trig | distance-power | box | ball
# freq = [1, 0], amplitude = 1.0                       # cos
# terms = [{ freq = [1, 0], re = 0.5, im = 0.0 }]      # trig
# center = [0.5, 0.5], exponent = 0.5                  # distance-power
# lo = [0.1, 0.2], hi = [0.4, 0.7]                     # box
# center = [0.5, 0.5], radius = 0.2                    # ball
# fejer_order = 8        # proxy order for non-polynomial functions

[params]
n_grid = [500, 5000]
samples = 10000
beta = 0.5
delta_n = 2
komlos_n = 64
x = 0.1
c_probe = 1.0
d_bound = 1
# gap = 3               # separation; derived from dilation constants when absent
s_max = 3
word_length = 12
separation_budget = 100000000
r_max = 8
horizon = 200
assume_condition = false
trials = 1000
sample_budget = 10000
standardization = "exact-l2"   # exact-l2 | series
esseen_u = 10.0
char_fn_points = 401
small_norm_eps = 0.001
block_r_min = 10
# zeta = 1.5
direction_bins = 64

# Outputs (CSV columns)
# clt.csv             n, sigma_hat, ks
# ecdf.csv            n, z, ecdf, normal_cdf
# char_fn.csv         n, x, re, im
# esseen.csv          n, u, integral, tail, total, ks
# variance_curve.csv  n, value, stderr, method
# separation.csv      verdict, d_bound, gap, s_max, word_length, candidate_sums, final_blocks_pruned, s_cap, s_feasible
# spectral.csv        label, r, s, u, v, w, lambda
# constants.csv       name, value
# gaps.csv            d, rho1, d_prime, delta
# komlos.csv          inequality, hypotheses_hold, lhs, lhs_stderr, rest, cubic, rhs_at_probe, minimal_c, cubic_only_c, holds_at_probe, fail
# growth.csv          n, statistic, estimate, stderr
# direction.csv       bin, frequency
# partial_sums.csv    k, partial_sum
# manifest.json       task, seed, config_hash, artifact_version, wall_clock_seconds, outputs, fitted_constants, task_log
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml("task = \"clt\"\n").unwrap();
        assert_eq!(c.task, Task::Clt);
        assert_eq!(c.params.n_grid, vec![500, 5000]);
        assert_eq!(c.build_alphabet().unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(ExperimentConfig::from_toml("task = \"nope\""), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("task = \"clt\"\nbogus = 1"), Err(Error::Config(_))));
        let bad_beta = "task = \"variance\"\n[params]\nbeta = 1.5\n";
        assert!(matches!(ExperimentConfig::from_toml(bad_beta), Err(Error::Config(_))));
        let bad_alpha = "task = \"clt\"\n[alphabet]\nletters = [{ rows = [[2, 0], [0, 1]] }]\n";
        assert!(matches!(ExperimentConfig::from_toml(bad_alpha), Err(Error::Config(_))));
        let komlos_set = "task = \"komlos\"\n[function]\nkind = \"box\"\nlo = [0.1, 0.1]\nhi = [0.3, 0.3]\n";
        assert!(matches!(ExperimentConfig::from_toml(komlos_set), Err(Error::Config(_))));
    }

    #[test]
    fn schema_example_parses() {
        let c = ExperimentConfig::from_toml(SCHEMA).unwrap();
        assert_eq!(c.params.char_fn_points, 401);
    }

    #[test]
    fn separation_run_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = "task = \"separation\"\nseed = 3\n[params]\nd_bound = 1\ngap = 2\nword_length = 12\n";
        let c = ExperimentConfig::from_toml(cfg).unwrap();
        let m = run(&c, dir.path()).unwrap();
        assert!(m.outputs.contains(&"separation.json".to_string()));
        let csv = fs::read_to_string(dir.path().join("separation.csv")).unwrap();
        let verdict = csv.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
        assert!(["HOLDS_EXHAUSTIVE", "HOLDS_CERTIFIED", "VIOLATED"].contains(&verdict.as_str()));
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("separation.json")).unwrap()).unwrap();
        assert_eq!(json["verdict"], verdict.as_str());
    }

    #[test]
    fn centered_set_function_has_zero_mean_proxy() {
        let cfg = "task = \"variance\"\n[function]\nkind = \"box\"\nlo = [0.1, 0.2]\nhi = [0.4, 0.7]\n";
        let c = ExperimentConfig::from_toml(cfg).unwrap();
        let f = c.build_function(2).unwrap();
        assert!((f.mean - 0.15).abs() < 1e-12);
        assert!(f.proxy.is_zero_mean() && !f.is_polynomial);
    }
}
