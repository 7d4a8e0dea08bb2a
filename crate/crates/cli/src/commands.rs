//! Single-run subcommands.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Context as _;
use cld_core::config::{DataKind, RunConfig, SourceKind};
use cld_core::datasets::{load_dataset, save_csv, save_dataset, Dataset};
use cld_core::experiment::{test_set, train_set, CellResult};
use cld_core::metrics::sliced_w2_datasets;
use cld_core::sampling::{sample as draw, AnalyticScore, NetworkScore, ScoreSource};
use cld_core::score_net::{load_checkpoint, save_checkpoint, Checkpoint};
use cld_core::theory::{evaluate_point, RegularityParams, TheoryPoint};
use cld_core::training::{arch_for, train as fit, write_loss_trace};
use cld_core::Error;

use crate::io::{eval_row, write_atomic, EVAL_HEADER};
use crate::VerificationFailed;

pub fn dataset_name(cfg: &RunConfig) -> &'static str {
    match cfg.data_kind {
        DataKind::Funnel => "funnel",
        DataKind::Mg25 => "mg25",
        DataKind::Diamond => "diamond",
        DataKind::Gaussian => "gaussian",
    }
}

fn save_config(cfg: &RunConfig) -> anyhow::Result<()> {
    write_atomic(&cfg.out_dir.join("config.txt"), cfg.to_text().as_bytes())?;
    Ok(())
}

fn load_or(path: Option<&Path>, make: impl FnOnce() -> cld_core::Result<Dataset>) -> anyhow::Result<Dataset> {
    Ok(match path {
        Some(p) => load_dataset(p).with_context(|| format!("loading {}", p.display()))?,
        None => make()?,
    })
}

pub fn dataset(cfg: &RunConfig) -> anyhow::Result<()> {
    let out = &cfg.out_dir;
    for (name, ds) in [("train", train_set(cfg)?), ("test", test_set(cfg)?)] {
        save_dataset(&out.join(format!("{name}.clds")), &ds)?;
        save_csv(&out.join(format!("{name}.csv")), &ds)?;
        println!("{name}: {} × {} -> {}", ds.n, ds.d, out.join(format!("{name}.clds")).display());
    }
    save_config(cfg)
}

pub fn train(cfg: &RunConfig, data: Option<&Path>) -> anyhow::Result<()> {
    let ds = load_or(data, || train_set(cfg))?;
    if ds.d != cfg.data_d {
        return Err(Error::DimensionMismatch { left: ds.d, right: cfg.data_d }.into());
    }
    let p = cfg.kinetic_params(cfg.epsilon, cfg.a)?;
    let arch = arch_for(&p, ds.d, cfg.net_mid, cfg.net_depth)?;
    let out = fit(&p, arch, &ds.data, &cfg.train_config(cfg.train_seed))?;
    let ck = Checkpoint { params: out.params, epsilon_mode: p.epsilon > 0.0, adam: Some(out.adam) };
    save_checkpoint(&cfg.out_dir.join("checkpoint.cldn"), &ck)?;
    write_loss_trace(&cfg.out_dir.join("loss.csv"), &out.trace)?;
    if let Some(last) = out.trace.last() {
        println!("trained {} epochs, final loss {:.6e}", out.trace.len(), last.mean_loss);
    }
    save_config(cfg)
}

pub fn score_source(cfg: &RunConfig, checkpoint: Option<&Path>) -> anyhow::Result<Box<dyn ScoreSource>> {
    let p = cfg.kinetic_params(cfg.epsilon, cfg.a)?;
    Ok(match cfg.score_source {
        SourceKind::Analytic => {
            let spec = cfg
                .dataset_spec(1, 0)
                .mixture()
                .ok_or_else(|| Error::Config("sampler.score_source = analytic needs a Gaussian-mixture dataset".into()))?;
            Box::new(AnalyticScore { spec, params: p })
        }
        SourceKind::Network => {
            let default = cfg.out_dir.join("checkpoint.cldn");
            let path = checkpoint.unwrap_or(&default);
            let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if ck.epsilon_mode != (p.epsilon > 0.0) || ck.params.arch.d != cfg.data_d {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint (d = {}, position noise {}) does not match the config (d = {}, epsilon = {})",
                    ck.params.arch.d, ck.epsilon_mode, cfg.data_d, p.epsilon
                ))
                .into());
            }
            Box::new(NetworkScore::new(ck.params, p, cfg.horizon, cfg.parameterization)?)
        }
    })
}

pub fn sample(cfg: &RunConfig, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let source = score_source(cfg, checkpoint)?;
    let p = cfg.kinetic_params(cfg.epsilon, cfg.a)?;
    let xs = draw(&p, &cfg.sampler_config(cfg.sampler_seed), source.as_ref(), cfg.n_samples)?;
    let ds = Dataset::new(cfg.n_samples, source.dim(), xs)?;
    save_dataset(&cfg.out_dir.join("samples.clds"), &ds)?;
    save_csv(&cfg.out_dir.join("samples.csv"), &ds)?;
    println!("{} samples -> {}", ds.n, cfg.out_dir.join("samples.clds").display());
    save_config(cfg)
}

pub fn eval(cfg: &RunConfig, samples: &Path, test: Option<&Path>) -> anyhow::Result<()> {
    let start = Instant::now();
    let gen = load_dataset(samples).with_context(|| format!("loading {}", samples.display()))?;
    let reference = load_or(test, || test_set(cfg))?;
    let sw2 = sliced_w2_datasets(&gen, &reference, &cfg.metric)?;
    let row = CellResult {
        epsilon: cfg.epsilon,
        a: cfg.a,
        rep: 0,
        seed: cfg.sampler_seed,
        n: gen.n,
        sw2,
        final_loss: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let text = format!("{EVAL_HEADER}\n{}\n", eval_row(dataset_name(cfg), &row));
    write_atomic(&cfg.out_dir.join("eval.csv"), text.as_bytes())?;
    println!("sw2 = {sw2:.6}");
    Ok(())
}

pub const THEORY_HEADER: &str = "a,sigma,epsilon,v,alpha0,l0,horizon,steps,admissible_h,k_t,mixing,approx,\
discretization,c_a,b_eps,lambda_star,sup_l,sigma_bounds_ok,sigma_bound_violations";

fn theory_row(t: &TheoryPoint) -> String {
    let b = &t.terms;
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
        t.a,
        t.sigma,
        t.epsilon,
        t.v,
        t.alpha0,
        t.l0,
        t.horizon,
        t.steps,
        t.admissible_h,
        t.k_t,
        b.mixing,
        b.approx,
        b.discretization,
        b.c_a,
        b.b_eps,
        b.lambda_star,
        b.sup_l,
        t.sigma_bounds_ok,
        t.sigma_bound_violations
    )
}

pub fn theory(cfg: &RunConfig) -> anyhow::Result<()> {
    let m2 = cfg.dataset_spec(1, 0).second_moment();
    let mut text = format!("{THEORY_HEADER}\n");
    let mut violations = 0;
    for &a in &cfg.sweep_a {
        for &eps in &cfg.sweep_epsilons {
            let p = cfg.kinetic_params(eps, a)?;
            let rp = RegularityParams::new(p, cfg.theory_alpha0, cfg.theory_l0)?;
            let horizon = p.schedule.tau(cfg.horizon);
            let pt = evaluate_point(&rp, horizon, cfg.steps, cfg.theory_score_error, cfg.data_d, m2);
            violations += pt.sigma_bound_violations;
            let _ = writeln!(text, "{}", theory_row(&pt));
        }
    }
    write_atomic(&cfg.out_dir.join("theory.csv"), text.as_bytes())?;
    save_config(cfg)?;
    if violations > 0 {
        return Err(VerificationFailed(format!("{violations} covariance eigenvalue bounds violated, see theory.csv")).into());
    }
    Ok(())
}
