//! Run configuration in a flat `section.key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown or repeated keys are errors. [`RunConfig::to_text`] emits
//! every key in a fixed order, and parsing that output reproduces the config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datasets::{DatasetKind, DatasetSpec};
use crate::error::{Error, Result};
use crate::forward_oracle::GaussianMixtureSpec;
use crate::kinetics::{KineticParams, Schedule};
use crate::metrics::SlicedW2Config;
use crate::sampling::{Integrator, SamplerConfig, ScoreForm};
use crate::training::{LambdaMode, Parameterization, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Funnel,
    Mg25,
    Diamond,
    Gaussian,
}

/// How `(a, σ)` are chosen for a given `(ε, a)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KineticsMode {
    /// `σ` taken from the config.
    Explicit,
    /// `σ = 2/√a`.
    Critical,
    /// `a = 1 − ε²/2`, `σ = √(4 + ε²)`; the configured `a` is ignored.
    Controlled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Network,
    Analytic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_kind: DataKind,
    pub data_d: usize,
    pub data_n_train: usize,
    pub data_n_test: usize,
    pub data_seed: u64,
    pub funnel_base_var: f64,
    pub diamond_std: f64,
    pub diamond_scale: f64,
    pub gaussian_var: f64,

    pub kinetics_mode: KineticsMode,
    pub a: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub v: f64,
    pub schedule: Schedule,
    pub horizon: f64,

    pub net_mid: usize,
    pub net_depth: usize,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub t_cutoff_fraction: f64,
    pub lambda_mode: LambdaMode,
    pub parameterization: Parameterization,
    pub train_seed: u64,

    pub steps: usize,
    pub integrator: Integrator,
    pub score_source: SourceKind,
    pub score_form: ScoreForm,
    pub sampler_seed: u64,
    pub n_samples: usize,

    pub metric: SlicedW2Config,

    pub repetitions: usize,
    pub out_dir: PathBuf,

    pub sweep_epsilons: Vec<f64>,
    pub sweep_a: Vec<f64>,

    /// Strong log-concavity and smoothness of the data, `α₀ ≤ L₀`.
    pub theory_alpha0: f64,
    pub theory_l0: f64,
    /// Assumed score-approximation error `M`.
    pub theory_score_error: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_kind: DataKind::Funnel,
            data_d: 10,
            data_n_train: 10_000,
            data_n_test: 10_000,
            data_seed: 0,
            funnel_base_var: 9.0,
            diamond_std: 0.05,
            diamond_scale: 2.0,
            gaussian_var: 1.0,
            kinetics_mode: KineticsMode::Critical,
            a: 1.0,
            sigma: 2.0,
            epsilon: 0.0,
            v: 1.0,
            schedule: Schedule::Identity,
            horizon: 8.0,
            net_mid: 128,
            net_depth: 3,
            epochs: 2000,
            batch_size: 512,
            lr: 1e-4,
            t_cutoff_fraction: 1e-5,
            lambda_mode: LambdaMode::DetSq,
            parameterization: Parameterization::InverseCov,
            train_seed: 0,
            steps: 1000,
            integrator: Integrator::Euler,
            score_source: SourceKind::Network,
            score_form: ScoreForm::Modified,
            sampler_seed: 0,
            n_samples: 10_000,
            metric: SlicedW2Config::default(),
            repetitions: 5,
            out_dir: PathBuf::from("runs"),
            sweep_epsilons: vec![0.0, 0.1, 0.25, 0.5, 1.0],
            sweep_a: vec![1.0],
            theory_alpha0: 1.0,
            theory_l0: 1.0,
            theory_score_error: 0.0,
        }
    }
}

fn enum_text<T: Copy + PartialEq>(table: &[(&'static str, T)], value: T) -> &'static str {
    table.iter().find(|(_, v)| *v == value).map(|(s, _)| *s).unwrap()
}

fn enum_parse<T: Copy>(table: &[(&'static str, T)], key: &str, s: &str) -> Result<T> {
    table.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
        let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("{key}: unknown value {s:?}, expected one of {}", names.join(", ")))
    })
}

const DATA_KINDS: &[(&str, DataKind)] =
    &[("funnel", DataKind::Funnel), ("mg25", DataKind::Mg25), ("diamond", DataKind::Diamond), ("gaussian", DataKind::Gaussian)];
const KIN_MODES: &[(&str, KineticsMode)] =
    &[("explicit", KineticsMode::Explicit), ("critical", KineticsMode::Critical), ("controlled", KineticsMode::Controlled)];
const LAMBDAS: &[(&str, LambdaMode)] = &[("det_sq", LambdaMode::DetSq), ("uniform", LambdaMode::Uniform)];
const PARAMS: &[(&str, Parameterization)] =
    &[("inverse_cov", Parameterization::InverseCov), ("direct", Parameterization::Direct)];
const INTEGRATORS: &[(&str, Integrator)] = &[("euler", Integrator::Euler), ("splitting", Integrator::Splitting)];
const SOURCES: &[(&str, SourceKind)] = &[("network", SourceKind::Network), ("analytic", SourceKind::Analytic)];
const FORMS: &[(&str, ScoreForm)] = &[("plain", ScoreForm::Plain), ("modified", ScoreForm::Modified)];

fn num<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
}

fn float(key: &str, s: &str) -> Result<f64> {
    let x: f64 = num(key, s)?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: value must be finite")));
    }
    Ok(x)
}

fn float_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let v = s.split(',').map(|p| float(key, p.trim())).collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(v)
}

fn list_text(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", ln + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", ln + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {k}", ln + 1)));
            }
        }
        let mut c = Self::default();
        for (k, v) in &kv {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, k: &str, v: &str) -> Result<()> {
        match k {
            "dataset.kind" => self.data_kind = enum_parse(DATA_KINDS, k, v)?,
            "dataset.d" => self.data_d = num(k, v)?,
            "dataset.n_train" => self.data_n_train = num(k, v)?,
            "dataset.n_test" => self.data_n_test = num(k, v)?,
            "dataset.seed" => self.data_seed = num(k, v)?,
            "dataset.funnel_base_var" => self.funnel_base_var = float(k, v)?,
            "dataset.diamond_std" => self.diamond_std = float(k, v)?,
            "dataset.diamond_scale" => self.diamond_scale = float(k, v)?,
            "dataset.gaussian_var" => self.gaussian_var = float(k, v)?,
            "kinetics.mode" => self.kinetics_mode = enum_parse(KIN_MODES, k, v)?,
            "kinetics.a" => self.a = float(k, v)?,
            "kinetics.sigma" => self.sigma = float(k, v)?,
            "kinetics.epsilon" => self.epsilon = float(k, v)?,
            "kinetics.v" => self.v = float(k, v)?,
            "kinetics.schedule" => {
                self.schedule = match v {
                    "identity" => Schedule::Identity,
                    "affine" => match self.schedule {
                        Schedule::Affine { .. } => self.schedule,
                        Schedule::Identity => Schedule::Affine { beta0: 0.1, beta1: 19.9 },
                    },
                    _ => return Err(Error::Config(format!("{k}: expected identity or affine, got {v:?}"))),
                }
            }
            "kinetics.beta0" | "kinetics.beta1" => {
                let x = float(k, v)?;
                let (mut b0, mut b1) = match self.schedule {
                    Schedule::Affine { beta0, beta1 } => (beta0, beta1),
                    Schedule::Identity => (0.1, 19.9),
                };
                if k.ends_with('0') {
                    b0 = x;
                } else {
                    b1 = x;
                }
                self.schedule = Schedule::Affine { beta0: b0, beta1: b1 };
            }
            "kinetics.horizon" => self.horizon = float(k, v)?,
            "net.mid" => self.net_mid = num(k, v)?,
            "net.depth" => self.net_depth = num(k, v)?,
            "train.epochs" => self.epochs = num(k, v)?,
            "train.batch_size" => self.batch_size = num(k, v)?,
            "train.lr" => self.lr = float(k, v)?,
            "train.t_cutoff_fraction" => self.t_cutoff_fraction = float(k, v)?,
            "train.lambda" => self.lambda_mode = enum_parse(LAMBDAS, k, v)?,
            "train.parameterization" => self.parameterization = enum_parse(PARAMS, k, v)?,
            "train.seed" => self.train_seed = num(k, v)?,
            "sampler.steps" => self.steps = num(k, v)?,
            "sampler.integrator" => self.integrator = enum_parse(INTEGRATORS, k, v)?,
            "sampler.score_source" => self.score_source = enum_parse(SOURCES, k, v)?,
            "sampler.score_form" => self.score_form = enum_parse(FORMS, k, v)?,
            "sampler.seed" => self.sampler_seed = num(k, v)?,
            "sampler.n_samples" => self.n_samples = num(k, v)?,
            "metric.projections" => self.metric.n_projections = num(k, v)?,
            "metric.seed" => self.metric.seed = num(k, v)?,
            "run.repetitions" => self.repetitions = num(k, v)?,
            "run.out_dir" => {
                if v.is_empty() {
                    return Err(Error::Config(format!("{k}: empty path")));
                }
                self.out_dir = PathBuf::from(v)
            }
            "sweep.epsilons" => self.sweep_epsilons = float_list(k, v)?,
            "sweep.a" => self.sweep_a = float_list(k, v)?,
            "theory.alpha0" => self.theory_alpha0 = float(k, v)?,
            "theory.l0" => self.theory_l0 = float(k, v)?,
            "theory.score_error" => self.theory_score_error = float(k, v)?,
            _ => return Err(Error::Config(format!("unknown key {k}"))),
        }
        Ok(())
    }

    /// Canonical text: every key, fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("dataset.kind", enum_text(DATA_KINDS, self.data_kind).into());
        put("dataset.d", self.data_d.to_string());
        put("dataset.n_train", self.data_n_train.to_string());
        put("dataset.n_test", self.data_n_test.to_string());
        put("dataset.seed", self.data_seed.to_string());
        put("dataset.funnel_base_var", format!("{:?}", self.funnel_base_var));
        put("dataset.diamond_std", format!("{:?}", self.diamond_std));
        put("dataset.diamond_scale", format!("{:?}", self.diamond_scale));
        put("dataset.gaussian_var", format!("{:?}", self.gaussian_var));
        put("kinetics.mode", enum_text(KIN_MODES, self.kinetics_mode).into());
        put("kinetics.a", format!("{:?}", self.a));
        put("kinetics.sigma", format!("{:?}", self.sigma));
        put("kinetics.epsilon", format!("{:?}", self.epsilon));
        put("kinetics.v", format!("{:?}", self.v));
        match self.schedule {
            Schedule::Identity => put("kinetics.schedule", "identity".into()),
            Schedule::Affine { beta0, beta1 } => {
                put("kinetics.schedule", "affine".into());
                put("kinetics.beta0", format!("{beta0:?}"));
                put("kinetics.beta1", format!("{beta1:?}"));
            }
        }
        put("kinetics.horizon", format!("{:?}", self.horizon));
        put("net.mid", self.net_mid.to_string());
        put("net.depth", self.net_depth.to_string());
        put("train.epochs", self.epochs.to_string());
        put("train.batch_size", self.batch_size.to_string());
        put("train.lr", format!("{:?}", self.lr));
        put("train.t_cutoff_fraction", format!("{:?}", self.t_cutoff_fraction));
        put("train.lambda", enum_text(LAMBDAS, self.lambda_mode).into());
        put("train.parameterization", enum_text(PARAMS, self.parameterization).into());
        put("train.seed", self.train_seed.to_string());
        put("sampler.steps", self.steps.to_string());
        put("sampler.integrator", enum_text(INTEGRATORS, self.integrator).into());
        put("sampler.score_source", enum_text(SOURCES, self.score_source).into());
        put("sampler.score_form", enum_text(FORMS, self.score_form).into());
        put("sampler.seed", self.sampler_seed.to_string());
        put("sampler.n_samples", self.n_samples.to_string());
        put("metric.projections", self.metric.n_projections.to_string());
        put("metric.seed", self.metric.seed.to_string());
        put("run.repetitions", self.repetitions.to_string());
        put("run.out_dir", self.out_dir.display().to_string());
        put("sweep.epsilons", list_text(&self.sweep_epsilons));
        put("sweep.a", list_text(&self.sweep_a));
        put("theory.alpha0", format!("{:?}", self.theory_alpha0));
        put("theory.l0", format!("{:?}", self.theory_l0));
        put("theory.score_error", format!("{:?}", self.theory_score_error));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("run.repetitions must be at least 1".into()));
        }
        if self.net_mid == 0 || self.net_depth == 0 {
            return Err(Error::Config("net.mid and net.depth must be at least 1".into()));
        }
        if self.n_samples == 0 || self.data_n_test == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.t_cutoff_fraction) {
            return Err(Error::Config("train.t_cutoff_fraction must lie in [0, 1)".into()));
        }
        self.dataset_spec(self.data_n_train, self.data_seed)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.kinetic_params(self.epsilon, self.a).map_err(|e| Error::Config(e.to_string()))?;
        self.train_config(self.train_seed).validate()?;
        self.sampler_config(self.sampler_seed).validate()?;
        if !(self.theory_alpha0 > 0.0 && self.theory_alpha0 <= self.theory_l0) {
            return Err(Error::Config("need 0 < theory.alpha0 <= theory.l0".into()));
        }
        if self.theory_score_error < 0.0 {
            return Err(Error::Config("theory.score_error must be nonnegative".into()));
        }
        if self.metric.n_projections == 0 {
            return Err(Error::Config("metric.projections must be at least 1".into()));
        }
        Ok(())
    }

    /// Kinetic parameters for one `(ε, a)` cell.
    pub fn kinetic_params(&self, epsilon: f64, a: f64) -> Result<KineticParams> {
        let (a, sigma) = match self.kinetics_mode {
            KineticsMode::Explicit => (a, self.sigma),
            KineticsMode::Critical => {
                if !(a > 0.0) {
                    return Err(Error::Config(format!("kinetics.a must be positive, got {a}")));
                }
                (a, 2.0 / a.sqrt())
            }
            KineticsMode::Controlled => {
                let p = KineticParams::controlled(epsilon, self.v)?;
                (p.a, p.sigma)
            }
        };
        KineticParams::with_schedule(a, sigma, epsilon, self.v, self.schedule)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            horizon: self.horizon,
            t_cutoff: self.t_cutoff_fraction * self.horizon,
            lambda_mode: self.lambda_mode,
            parameterization: self.parameterization,
            seed,
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            steps: self.steps,
            horizon: self.horizon,
            integrator: self.integrator,
            score_form: self.score_form,
            seed,
        }
    }

    pub fn dataset_spec(&self, n: usize, seed: u64) -> DatasetSpec {
        let d = self.data_d;
        let kind = match self.data_kind {
            DataKind::Funnel => DatasetKind::Funnel { base_var: self.funnel_base_var },
            DataKind::Mg25 => DatasetKind::Mg25,
            DataKind::Diamond => DatasetKind::Diamond { std: self.diamond_std, scale: self.diamond_scale },
            DataKind::Gaussian => DatasetKind::Gaussian(GaussianMixtureSpec {
                weights: vec![1.0],
                means: vec![vec![0.0; d]],
                diag_covs: vec![vec![self.gaussian_var; d]],
            }),
        };
        DatasetSpec { kind, d, n, seed }
    }
}
