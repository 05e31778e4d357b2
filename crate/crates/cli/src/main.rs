mod bench;
mod instances;
mod json;
mod solve;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gepsdp::{laplacian, Laplacian};
use serde_json::json;

use solve::{InputArgs, Output, SolveArgs};

#[derive(Parser)]
#[command(name = "gepsdp", version, about = "Certified low-rank SDP bounds for graph bisection and equipartition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimum-bisection SDP.
    Bisect(SolveArgs),
    /// k-equipartition SDP (k >= 3).
    Equipart {
        #[arg(long, short)]
        k: usize,
        #[command(flatten)]
        args: SolveArgs,
    },
    /// Validate a graph file and print basic statistics.
    Check(InputArgs),
    /// Solve every instance in a manifest and compare with expected values.
    Bench {
        manifest: PathBuf,
        /// Directory holding the instance files (defaults to the manifest's directory).
        #[arg(long, env = "GEPSDP_DATA")]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Bound on Rp, Rd and Rc for a PASS.
        #[arg(long, default_value_t = 1e-5)]
        residue_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "table")]
        output: Output,
    },
    /// Write a generated graph (family spec such as hamming:6:1 or a reference name).
    Generate {
        spec: String,
        #[arg(long, short)]
        out: PathBuf,
        /// edgelist | mtx (default from the extension).
        #[arg(long)]
        format: Option<String>,
    },
    /// List the reference instances, optionally writing them as NAME.txt into a directory.
    Reference {
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn check(args: &InputArgs) -> Result<i32> {
    let loaded = solve::load(args)?;
    let g = &loaded.graph;
    let lap: Laplacian = laplacian(g);
    let n = g.n();
    let mut degree = vec![0.0f64; n];
    for e in g.edges() {
        degree[e.i] += e.w;
        degree[e.j] += e.w;
    }
    let ones = nalgebra::DVector::from_element(n, 1.0);
    let row_sum = lap.apply_vec(&ones).map_err(|e| anyhow::anyhow!(e))?.amax();
    let trace: f64 = lap.diag().iter().sum();
    let weight: f64 = g.edges().iter().map(|e| e.w).sum();
    println!("vertices        {n}");
    println!("edges           {}", g.edge_count());
    println!("weighted        {}", !g.is_unweighted());
    println!("degree min/max  {} / {}", degree.iter().cloned().fold(f64::INFINITY, f64::min), degree.iter().cloned().fold(0.0, f64::max));
    println!("max |L e|       {row_sum:e}");
    println!("tr L - 2 w(E)   {:e}", trace - 2.0 * weight);
    println!("sha256          {}", loaded.sha256);
    if n % 2 == 1 {
        println!("note: odd vertex count; bisection rounding never applies");
    }
    Ok(if row_sum <= 1e-9 * (1.0 + trace) && (trace - 2.0 * weight).abs() <= 1e-9 * (1.0 + trace) { 0 } else { 2 })
}

fn generate(spec: &str, out: &PathBuf, format: &Option<String>) -> Result<i32> {
    let g = instances::build(spec)?;
    let format = match format {
        Some(f) => f.parse()?,
        None => gepsdp::GraphFormat::from_path(out),
    };
    let text = match format {
        gepsdp::GraphFormat::EdgeList => g.to_edge_list(),
        gepsdp::GraphFormat::MatrixMarket => g.to_matrix_market(),
    };
    std::fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    eprintln!("wrote {} ({} vertices, {} edges)", out.display(), g.n(), g.edge_count());
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Bisect(args) => solve::command("bisect", &args, 2),
        Command::Equipart { k, args } => {
            if k < 3 {
                bail!("equipart needs --k >= 3; use bisect for k = 2");
            }
            solve::command("equipart", &args, k)
        }
        Command::Check(args) => check(&args),
        Command::Bench { manifest, data_dir, jobs, residue_tol, tol, seed, output } => {
            let text = std::fs::read_to_string(&manifest).with_context(|| format!("cannot read {}", manifest.display()))?;
            let entries = bench::parse_manifest(&text)?;
            let dir = bench::data_dir(data_dir, &manifest);
            let template = SolveArgs {
                input: InputArgs { input: PathBuf::new(), format: None },
                r: None,
                tol,
                seed,
                max_iter: None,
                variant: solve::Variant::Bb1,
                output,
                report: None,
            };
            solve::validate(&template)?;
            let results = bench::run(&entries, &dir, &template, residue_tol, jobs.max(1))?;
            let failed = results.iter().filter(|r| r.verdict == bench::Verdict::Fail).count();
            let skipped = results.iter().filter(|r| r.verdict == bench::Verdict::Skip).count();
            match output {
                Output::Table => {
                    for r in &results {
                        println!("{}", bench::line(r));
                    }
                    println!("bench: {} passed, {failed} failed, {skipped} skipped", results.len() - failed - skipped);
                }
                Output::Json => {
                    let v = json!({ "schema": 1, "command": "bench", "results": results });
                    print!("{}", json::to_string(&v));
                }
            }
            Ok(if failed == 0 { 0 } else { 2 })
        }
        Command::Generate { spec, out, format } => generate(&spec, &out, &format),
        Command::Reference { write } => {
            if let Some(dir) = &write {
                std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            }
            for (name, family, f) in instances::REFERENCE {
                println!("{name:<16} {family:<18} f = {f}");
                if let Some(dir) = &write {
                    generate(name, &dir.join(format!("{name}.txt")), &None)?;
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
