//! Atomic file output, CSV rows and the sweep manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cld_core::experiment::CellResult;
use cld_core::Error;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> cld_core::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub const EVAL_HEADER: &str = "dataset,epsilon,a,seed,n,sw2,wall_seconds";

pub fn eval_row(dataset: &str, r: &CellResult) -> String {
    format!("{dataset},{:?},{:?},{},{},{:?},{:.3}", r.epsilon, r.a, r.seed, r.n, r.sw2, r.wall_seconds)
}

pub const MANIFEST_HEADER: &str = "epsilon,a,rep,seed,status,sw2,final_loss,wall_seconds,message";

/// One finished cell of a sweep, successful or not.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub epsilon: f64,
    pub a: f64,
    pub rep: usize,
    pub seed: u64,
    pub ok: bool,
    pub sw2: f64,
    pub final_loss: Option<f64>,
    pub wall_seconds: f64,
    pub message: String,
}

impl ManifestRow {
    pub fn same_cell(&self, epsilon: f64, a: f64, rep: usize) -> bool {
        self.epsilon == epsilon && self.a == a && self.rep == rep
    }

    pub fn to_result(&self) -> CellResult {
        CellResult {
            epsilon: self.epsilon,
            a: self.a,
            rep: self.rep,
            seed: self.seed,
            n: 0,
            sw2: self.sw2,
            final_loss: self.final_loss,
            wall_seconds: self.wall_seconds,
        }
    }
}

fn clean(msg: &str) -> String {
    msg.chars().map(|c| if c == ',' || c.is_control() { ' ' } else { c }).collect()
}

pub fn manifest_text(rows: &[ManifestRow]) -> String {
    let mut s = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        let loss = r.final_loss.map_or(String::new(), |l| format!("{l:?}"));
        let _ = writeln!(
            s,
            "{:?},{:?},{},{},{},{:?},{},{:.3},{}",
            r.epsilon,
            r.a,
            r.rep,
            r.seed,
            if r.ok { "ok" } else { "failed" },
            r.sw2,
            loss,
            r.wall_seconds,
            clean(&r.message)
        );
    }
    s
}

fn field<T: std::str::FromStr>(line: usize, name: &str, s: &str) -> cld_core::Result<T> {
    s.parse().map_err(|_| Error::Config(format!("manifest line {line}: bad {name} {s:?}")))
}

/// Reads a manifest; a missing file is an empty sweep.
pub fn read_manifest(path: &Path) -> cld_core::Result<Vec<ManifestRow>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        _ => return Err(Error::Config(format!("{}: missing manifest header", path.display()))),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let ln = i + 1;
            let f: Vec<&str> = l.splitn(9, ',').collect();
            if f.len() != 9 {
                return Err(Error::Config(format!("manifest line {ln}: expected 9 fields")));
            }
            let ok = match f[4] {
                "ok" => true,
                "failed" => false,
                s => return Err(Error::Config(format!("manifest line {ln}: bad status {s:?}"))),
            };
            Ok(ManifestRow {
                epsilon: field(ln, "epsilon", f[0])?,
                a: field(ln, "a", f[1])?,
                rep: field(ln, "rep", f[2])?,
                seed: field(ln, "seed", f[3])?,
                ok,
                sw2: field(ln, "sw2", f[5])?,
                final_loss: if f[6].is_empty() { None } else { Some(field(ln, "final_loss", f[6])?) },
                wall_seconds: field(ln, "wall_seconds", f[7])?,
                message: f[8].to_string(),
            })
        })
        .collect()
}
