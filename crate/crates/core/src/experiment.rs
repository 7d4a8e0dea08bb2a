//! One sweep cell: train (or use the exact score), sample, evaluate.

use std::time::Instant;

use crate::config::{RunConfig, SourceKind};
use crate::datasets::{generate, Dataset};
use crate::error::{Error, Result};
use crate::metrics::sliced_w2;
use crate::sampling::{sample, AnalyticScore, NetworkScore, ScoreSource};
use crate::training::{arch_for, train, TrainOutput};

/// Offset separating the test-set seed from the training-set seed.
const TEST_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn train_set(cfg: &RunConfig) -> Result<Dataset> {
    generate(&cfg.dataset_spec(cfg.data_n_train, cfg.data_seed))
}

pub fn test_set(cfg: &RunConfig) -> Result<Dataset> {
    generate(&cfg.dataset_spec(cfg.data_n_test, cfg.data_seed.wrapping_add(TEST_SEED_OFFSET)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub epsilon: f64,
    pub a: f64,
    pub rep: usize,
    pub seed: u64,
    pub n: usize,
    pub sw2: f64,
    pub final_loss: Option<f64>,
    pub wall_seconds: f64,
}

/// Runs repetition `rep` of the `(ε, a)` cell. Training and sampling seeds are
/// offset by `rep`; data and projection seeds are shared by all cells.
pub fn run_cell(
    cfg: &RunConfig,
    epsilon: f64,
    a: f64,
    rep: usize,
    train_data: &Dataset,
    test_data: &Dataset,
) -> Result<(CellResult, Option<TrainOutput>)> {
    let start = Instant::now();
    let p = cfg.kinetic_params(epsilon, a)?;
    let seed = cfg.sampler_seed.wrapping_add(rep as u64);
    let (source, trained): (Box<dyn ScoreSource>, Option<TrainOutput>) = match cfg.score_source {
        SourceKind::Network => {
            let arch = arch_for(&p, train_data.d, cfg.net_mid, cfg.net_depth)?;
            let out = train(&p, arch, &train_data.data, &cfg.train_config(cfg.train_seed.wrapping_add(rep as u64)))?;
            let net = NetworkScore::new(out.params.clone(), p, cfg.horizon, cfg.parameterization)?;
            (Box::new(net), Some(out))
        }
        SourceKind::Analytic => {
            let spec = cfg
                .dataset_spec(1, 0)
                .mixture()
                .ok_or_else(|| Error::Config("analytic score needs a Gaussian-mixture dataset".into()))?;
            (Box::new(AnalyticScore { spec, params: p }), None)
        }
    };
    let samples = sample(&p, &cfg.sampler_config(seed), source.as_ref(), cfg.n_samples)?;
    let sw2 = sliced_w2(&samples, &test_data.data, test_data.d, &cfg.metric)?;
    let result = CellResult {
        epsilon,
        a,
        rep,
        seed,
        n: cfg.n_samples,
        sw2,
        final_loss: trained.as_ref().and_then(|t| t.trace.last().map(|e| e.mean_loss)),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((result, trained))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub epsilon: f64,
    pub a: f64,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single repetition.
    pub std: f64,
}

/// Mean ± std of `sw2` per `(ε, a)`, in order of first appearance.
pub fn aggregate(results: &[CellResult]) -> Vec<CellSummary> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in results {
        if !keys.iter().any(|k| k.0 == r.epsilon && k.1 == r.a) {
            keys.push((r.epsilon, r.a));
        }
    }
    keys.into_iter()
        .map(|(e, a)| {
            let xs: Vec<f64> = results.iter().filter(|r| r.epsilon == e && r.a == a).map(|r| r.sw2).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            CellSummary { epsilon: e, a, count: xs.len(), mean, std }
        })
        .collect()
}
