use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use gepsdp::{
    laplacian, load_graph, solve_bisection, solve_equipartition, AlmConfig, BbVariant, BisectConfig, Graph,
    GraphFormat, Laplacian, SolveReport,
};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::json as pretty;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Bb1,
    Bb2,
}

impl From<Variant> for BbVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Bb1 => BbVariant::Bb1,
            Variant::Bb2 => BbVariant::Bb2,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Graph file (edge list, or Matrix Market for .mtx/.mm).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Override the format guessed from the extension: edgelist | mtx.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Factor width r (default k - 1 + ceil(sqrt(2(n+1)))).
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Gradient iterations for bisect, outer iterations for equipart.
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "bb1")]
    pub variant: Variant,
    #[arg(long, value_enum, default_value = "table")]
    pub output: Output,
    /// Also write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub struct Loaded {
    pub graph: Graph,
    pub format: GraphFormat,
    pub sha256: String,
}

pub fn load(args: &InputArgs) -> Result<Loaded> {
    let format = match &args.format {
        Some(f) => f.parse()?,
        None => GraphFormat::from_path(&args.input),
    };
    let bytes = std::fs::read(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let sha256 = format!("{:x}", Sha256::digest(&bytes));
    let graph = load_graph(&args.input, format).with_context(|| format!("cannot load {}", args.input.display()))?;
    Ok(Loaded { graph, format, sha256 })
}

fn format_name(f: GraphFormat) -> &'static str {
    match f {
        GraphFormat::EdgeList => "edgelist",
        GraphFormat::MatrixMarket => "mtx",
    }
}

pub fn validate(args: &SolveArgs) -> Result<()> {
    if !(args.tol > 0.0 && args.tol <= 1e-2) {
        bail!("--tol must lie in (0, 1e-2]");
    }
    if args.r.is_some_and(|r| r < 2) {
        bail!("--r must be at least 2");
    }
    Ok(())
}

/// Runs one solve; `k = 2` is bisection.
pub fn run_solver(lap: &Laplacian, k: usize, args: &SolveArgs) -> Result<SolveReport> {
    let variant: BbVariant = args.variant.into();
    let sol = if k == 2 {
        let mut cfg = BisectConfig { rank: args.r, ..Default::default() };
        cfg.bb.tol = args.tol;
        cfg.bb.seed = args.seed;
        cfg.bb.variant = variant;
        if let Some(m) = args.max_iter {
            cfg.bb.max_iter = m;
        }
        solve_bisection(lap, &cfg)?
    } else {
        let mut cfg = AlmConfig { rank: args.r, tol: args.tol, inner_tol: args.tol, seed: args.seed, ..Default::default() };
        cfg.bb.variant = variant;
        if let Some(m) = args.max_iter {
            cfg.max_outer = m;
        }
        solve_equipartition(lap, k, &cfg)?
    };
    Ok(sol.report)
}

/// Exit status: 0 when the run converged and every residue is within
/// `10 * tol`, 2 otherwise.
pub fn status(report: &SolveReport, tol: f64) -> i32 {
    if report.termination.is_success() && report.eig_converged && report.residues_within(10.0 * tol) {
        0
    } else {
        2
    }
}

pub fn report_json(command: &str, path: &Path, loaded: &Loaded, args: &SolveArgs, k: usize, report: &SolveReport) -> Value {
    json!({
        "schema": 1,
        "command": command,
        "input": {
            "path": path.display().to_string(),
            "format": format_name(loaded.format),
            "sha256": loaded.sha256,
            "n": loaded.graph.n(),
            "edges": loaded.graph.edge_count(),
        },
        "config": {
            "k": k,
            "r": args.r,
            "tol": args.tol,
            "seed": args.seed,
            "max_iter": args.max_iter,
            "variant": args.variant,
        },
        "status": if status(report, args.tol) == 0 { "ok" } else { "flagged" },
        "report": serde_json::to_value(report).expect("report serializes"),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.2e}"))
}

pub fn table(name: &str, r: &SolveReport) -> String {
    let mut s = format!(
        "{:<20} {:>6} {:>3} {:>4} {:>18} {:>9} {:>9} {:>9} {:>8} {:>9}  {}\n",
        "instance", "n", "k", "r", "<L,X>/2", "Rp", "Rd", "Rc", "iters", "time[s]", "termination"
    );
    s.push_str(&format!(
        "{:<20} {:>6} {:>3} {:>4} {:>18.10e} {:>9} {:>9} {:>9} {:>8} {:>9.3}  {:?}\n",
        name,
        r.n,
        r.k,
        format!("{}", r.r_final),
        r.f,
        opt(r.rp),
        opt(r.rd),
        opt(r.rc),
        r.inner_iterations,
        r.wall_time_secs,
        r.termination
    ));
    if r.singular_events > 0 || !r.rank_drops.is_empty() {
        s.push_str(&format!(
            "singular events {}, escapes {}, rank {} -> {}\n",
            r.singular_events, r.escapes, r.r_initial, r.r_final
        ));
    }
    s
}

/// `bisect` and `equipart`.
pub fn command(command: &str, args: &SolveArgs, k: usize) -> Result<i32> {
    validate(args)?;
    let loaded = load(&args.input)?;
    if k >= 3 && loaded.graph.n() % k != 0 {
        eprintln!("warning: k = {k} does not divide n = {}; solving the relaxation anyway", loaded.graph.n());
    }
    let lap: Laplacian = laplacian(&loaded.graph);
    let report = run_solver(&lap, k, args)?;
    let value = report_json(command, &args.input.input, &loaded, args, k, &report);
    let text = pretty::to_string(&value);
    if let Some(p) = &args.report {
        std::fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    match args.output {
        Output::Json => print!("{text}"),
        Output::Table => {
            let name = args.input.input.file_stem().and_then(|s| s.to_str()).unwrap_or("graph");
            print!("{}", table(name, &report));
        }
    }
    Ok(status(&report, args.tol))
}
