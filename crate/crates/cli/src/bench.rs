//! Batch runs against a manifest of instances with expected values.
//!
//! Manifest lines are `file, kind, k, expected, rel_tol[, field]` where
//! `kind` is `bisect` or `equipart` and `field` selects the compared value:
//! `obj` (`<L, X>`, the default) or `f` (`<L, X> / 2`). `#` starts a comment.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use gepsdp::{laplacian, load_graph, GraphFormat, Laplacian, SolveReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::solve::{run_solver, InputArgs, SolveArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Obj,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub file: String,
    pub k: usize,
    pub expected: f64,
    pub rel_tol: f64,
    pub field: Field,
}

pub fn parse_manifest(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let ctx = || format!("manifest line {}", no + 1);
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 && cols.len() != 6 {
            bail!("{}: expected 5 or 6 comma-separated fields", ctx());
        }
        let k: usize = cols[2].parse().with_context(ctx)?;
        match (cols[1], k) {
            ("bisect", 2) => {}
            ("equipart", k) if k >= 3 => {}
            (kind @ ("bisect" | "equipart"), k) => bail!("{}: k = {k} is invalid for {kind}", ctx()),
            (kind, _) => bail!("{}: unknown kind {kind:?}", ctx()),
        }
        let field = match cols.get(5).copied().unwrap_or("obj") {
            "obj" => Field::Obj,
            "f" => Field::F,
            other => bail!("{}: unknown field {other:?}", ctx()),
        };
        out.push(Entry {
            file: cols[0].to_string(),
            k,
            expected: cols[3].parse().with_context(ctx)?,
            rel_tol: cols[4].parse().with_context(ctx)?,
            field,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchResult {
    pub entry: Entry,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub reason: Option<String>,
    pub report: Option<SolveReport>,
}

fn run_entry(entry: &Entry, dir: &Path, template: &SolveArgs, residue_tol: f64) -> BenchResult {
    let path = dir.join(&entry.file);
    let mut result = BenchResult { entry: entry.clone(), verdict: Verdict::Skip, value: None, reason: None, report: None };
    if !path.exists() {
        result.reason = Some(format!("{} not found", path.display()));
        return result;
    }
    let graph = match load_graph(&path, GraphFormat::from_path(&path)) {
        Ok(g) => g,
        Err(e) => {
            result.verdict = Verdict::Fail;
            result.reason = Some(e.to_string());
            return result;
        }
    };
    let lap: Laplacian = laplacian(&graph);
    let args = SolveArgs { input: InputArgs { input: path.clone(), format: None }, ..template.clone() };
    let clock = Instant::now();
    match run_solver(&lap, entry.k, &args) {
        Ok(mut report) => {
            report.wall_time_secs = clock.elapsed().as_secs_f64();
            let value = match entry.field {
                Field::Obj => report.obj,
                Field::F => report.f,
            };
            let rel = (value - entry.expected).abs() / entry.expected.abs().max(1.0);
            let mut reasons = Vec::new();
            if rel > entry.rel_tol {
                reasons.push(format!("relative error {rel:.2e}"));
            }
            if !report.residues_within(residue_tol) {
                reasons.push(format!("residues above {residue_tol:e}"));
            }
            if !report.termination.is_success() {
                reasons.push(format!("{:?}", report.termination));
            }
            result.verdict = if reasons.is_empty() { Verdict::Pass } else { Verdict::Fail };
            result.reason = (!reasons.is_empty()).then(|| reasons.join(", "));
            result.value = Some(value);
            result.report = Some(report);
        }
        Err(e) => {
            result.verdict = Verdict::Fail;
            result.reason = Some(e.to_string());
        }
    }
    result
}

pub fn run(entries: &[Entry], dir: &Path, template: &SolveArgs, residue_tol: f64, jobs: usize) -> Result<Vec<BenchResult>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(|| entries.par_iter().map(|e| run_entry(e, dir, template, residue_tol)).collect()))
}

pub fn line(r: &BenchResult) -> String {
    let verdict = match r.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let mut s = format!("{verdict} {:<24} k={}", r.entry.file, r.entry.k);
    if let (Some(v), Some(rep)) = (r.value, &r.report) {
        s.push_str(&format!(
            " value={v:.10e} expected={:.10e} Rp={:.1e} Rd={:.1e} Rc={:.1e} time={:.2}s",
            r.entry.expected,
            rep.rp.unwrap_or(f64::NAN),
            rep.rd.unwrap_or(f64::NAN),
            rep.rc.unwrap_or(f64::NAN),
            rep.wall_time_secs
        ));
    }
    if let Some(why) = &r.reason {
        s.push_str(&format!(" ({why})"));
    }
    s
}

/// Data directory: explicit flag, else the manifest's own directory.
pub fn data_dir(flag: Option<PathBuf>, manifest: &Path) -> PathBuf {
    flag.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}
