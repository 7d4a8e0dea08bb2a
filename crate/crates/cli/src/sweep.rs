//! Resumable (ε, a) sweeps.
//!
//! Output layout under `out_dir`:
//!
//! * `manifest.csv`: one row per finished cell, successful or failed.
//! * `results.csv`: eval rows for successful cells, in grid order.
//! * `aggregate.csv`: mean ± std of SW2 with ε rows and a columns.
//! * `cells/`: checkpoint and loss trace of every trained cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use cld_core::config::{KineticsMode, RunConfig};
use cld_core::experiment::{aggregate, run_cell, test_set, train_set, CellResult};
use cld_core::score_net::{save_checkpoint, Checkpoint};
use cld_core::training::write_loss_trace;
use cld_core::{Error, KineticParams};
use rayon::prelude::*;

use crate::commands::dataset_name;
use crate::io::{eval_row, manifest_text, read_manifest, write_atomic, ManifestRow, EVAL_HEADER};

#[derive(Debug, Clone, Copy)]
struct Cell {
    epsilon: f64,
    a: f64,
    rep: usize,
}

fn cell_stem(c: &Cell) -> String {
    format!("eps{:?}_a{:?}_rep{}", c.epsilon, c.a, c.rep)
}

fn grid(cfg: &RunConfig, a_values: &[f64]) -> Vec<Cell> {
    let mut out = Vec::new();
    for &a in a_values {
        for &epsilon in &cfg.sweep_epsilons {
            for rep in 0..cfg.repetitions {
                out.push(Cell { epsilon, a, rep });
            }
        }
    }
    out
}

pub fn experiment(cfg: &RunConfig) -> anyhow::Result<()> {
    for &a in &cfg.sweep_a {
        for &e in &cfg.sweep_epsilons {
            cfg.kinetic_params(e, a)?;
        }
    }
    run_sweep(cfg, grid(cfg, &cfg.sweep_a))
}

/// Sweeps ε with `a(ε) = 1 − ε²/2`, `σ(ε) = √(4 + ε²)`; the `a` column holds `a(ε)`.
pub fn controlled(cfg: &RunConfig) -> anyhow::Result<()> {
    let mut cfg = cfg.clone();
    cfg.kinetics_mode = KineticsMode::Controlled;
    let mut cells = Vec::new();
    for &e in &cfg.sweep_epsilons {
        let p = KineticParams::controlled(e, cfg.v)?;
        for rep in 0..cfg.repetitions {
            cells.push(Cell { epsilon: e, a: p.a, rep });
        }
    }
    run_sweep(&cfg, cells)
}

struct State {
    rows: Vec<ManifestRow>,
}

fn run_sweep(cfg: &RunConfig, cells: Vec<Cell>) -> anyhow::Result<()> {
    let out = &cfg.out_dir;
    let manifest_path = out.join("manifest.csv");
    let done = read_manifest(&manifest_path)?;
    let pending: Vec<Cell> =
        cells.iter().copied().filter(|c| !done.iter().any(|r| r.same_cell(c.epsilon, c.a, c.rep))).collect();
    println!("{} cells, {} already in the manifest", cells.len(), cells.len() - pending.len());
    std::fs::create_dir_all(out.join("cells")).map_err(Error::from)?;
    write_atomic(&out.join("config.txt"), cfg.to_text().as_bytes())?;

    let train = train_set(cfg)?;
    let test = test_set(cfg)?;
    let state = Mutex::new(State { rows: done });

    pending.par_iter().try_for_each(|c| -> anyhow::Result<()> {
        let started = std::time::Instant::now();
        let row = match run_cell(cfg, c.epsilon, c.a, c.rep, &train, &test) {
            Ok((res, trained)) => {
                if let Some(t) = &trained {
                    let stem = cell_stem(c);
                    let cells_dir = out.join("cells");
                    let ck = Checkpoint { params: t.params.clone(), epsilon_mode: c.epsilon > 0.0, adam: None };
                    save_checkpoint(&cells_dir.join(format!("{stem}.cldn")), &ck)?;
                    write_loss_trace(&cells_dir.join(format!("{stem}.loss.csv")), &t.trace)?;
                }
                ManifestRow {
                    epsilon: c.epsilon,
                    a: c.a,
                    rep: c.rep,
                    seed: res.seed,
                    ok: true,
                    sw2: res.sw2,
                    final_loss: res.final_loss,
                    wall_seconds: res.wall_seconds,
                    message: String::new(),
                }
            }
            Err(e) => {
                eprintln!("cell {} failed: {e}", cell_stem(c));
                ManifestRow {
                    epsilon: c.epsilon,
                    a: c.a,
                    rep: c.rep,
                    seed: cfg.sampler_seed.wrapping_add(c.rep as u64),
                    ok: false,
                    sw2: f64::NAN,
                    final_loss: None,
                    wall_seconds: started.elapsed().as_secs_f64(),
                    message: e.to_string(),
                }
            }
        };
        let mut st = state.lock().expect("sweep state poisoned");
        st.rows.push(row);
        write_atomic(&manifest_path, manifest_text(&ordered(&st.rows, &cells)).as_bytes())?;
        Ok(())
    })?;

    let rows = ordered(&state.into_inner().expect("sweep state poisoned").rows, &cells);
    write_atomic(&manifest_path, manifest_text(&rows).as_bytes())?;
    let results: Vec<CellResult> = rows
        .iter()
        .filter(|r| r.ok)
        .map(|r| CellResult { n: cfg.n_samples, ..r.to_result() })
        .collect();
    let mut text = format!("{EVAL_HEADER}\n");
    for r in &results {
        let _ = writeln!(text, "{}", eval_row(dataset_name(cfg), r));
    }
    write_atomic(&out.join("results.csv"), text.as_bytes())?;
    write_atomic(&out.join("aggregate.csv"), aggregate_table(&results).as_bytes())?;
    let failed = rows.iter().filter(|r| !r.ok).count();
    println!("{} cells ok, {failed} failed", rows.len() - failed);
    print!("{}", aggregate_table(&results));
    Ok(())
}

/// Manifest rows in grid order; rows for cells outside the grid go last.
fn ordered(rows: &[ManifestRow], cells: &[Cell]) -> Vec<ManifestRow> {
    let pos = |r: &ManifestRow| cells.iter().position(|c| r.same_cell(c.epsilon, c.a, c.rep)).unwrap_or(usize::MAX);
    let mut v = rows.to_vec();
    v.sort_by_key(pos);
    v
}

/// ε rows, a columns, cells `mean ± std`.
pub fn aggregate_table(results: &[CellResult]) -> String {
    let summary = aggregate(results);
    let mut a_cols: Vec<f64> = Vec::new();
    let mut eps_rows: Vec<f64> = Vec::new();
    let mut cells = BTreeMap::new();
    for s in &summary {
        if !a_cols.contains(&s.a) {
            a_cols.push(s.a);
        }
        if !eps_rows.contains(&s.epsilon) {
            eps_rows.push(s.epsilon);
        }
        cells.insert((s.epsilon.to_bits(), s.a.to_bits()), format!("{:.4} ± {:.4}", s.mean, s.std));
    }
    let mut text = String::from("epsilon");
    for a in &a_cols {
        let _ = write!(text, ",a={a:?}");
    }
    text.push('\n');
    for e in &eps_rows {
        let _ = write!(text, "{e:?}");
        for a in &a_cols {
            let cell = cells.get(&(e.to_bits(), a.to_bits())).map_or("", String::as_str);
            let _ = write!(text, ",{cell}");
        }
        text.push('\n');
    }
    text
}
