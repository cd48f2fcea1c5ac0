use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde_json::json;

use symtensor::bench::{self, Op};
use symtensor::gamma::GammaCache;
use symtensor::models::{blocked_chain_gate, exact_diag, exact_diag_dense, mera_solve, sector_minima, with_multiplicities, EdConfig, MeraConfig};
use symtensor::verify::run_suite;
use symtensor::{Error, FORMAT_VERSION};

#[derive(Parser)]
#[command(name = "symtensor", version, about = "SU(2)-symmetric tensor toolkit")]
struct Cli {
    /// Directory holding the persistent Γ cache.
    #[arg(long, global = true, env = "SYMTENSOR_CACHE_DIR")]
    gamma_cache: Option<PathBuf>,
    /// Worker threads for blockwise linear algebra.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suites and print a JSON report.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Random instances per property.
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Emit benchmark rows as CSV.
    Bench {
        #[arg(long)]
        op: String,
        #[arg(long, default_value_t = 3)]
        charges: usize,
        #[arg(long, default_value_t = 8)]
        deg: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        dense: bool,
        #[arg(long)]
        sym: bool,
    },
    /// Run exact diagonalization or the MERA optimizer from a JSON config.
    Solve {
        kind: SolveKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Kernels,
    Gamma,
    Tensors,
    Linalg,
    Models,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveKind {
    Ed,
    Mera,
}

enum Failure {
    Failed(String),
    Schema(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Config { .. } | Error::TooLarge(_) => Failure::Schema(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Failure::Schema(format!("{}: invalid config at `{at}`: {}", path.display(), e.inner()))
    })
}

fn write_json(v: &serde_json::Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Failed(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Failure::Failed(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cache_for(dir: Option<&Path>) -> GammaCache {
    let cache = dir.map(GammaCache::with_dir).unwrap_or_default();
    if let Some(w) = cache.load_warning() {
        eprintln!("warning: {w}");
    }
    cache
}

fn solve_ed(cfg: &EdConfig) -> Result<serde_json::Value, Failure> {
    let spectra = exact_diag(cfg.spins, cfg.periodic, cfg.sectors.as_deref())?;
    let sectors: Vec<_> = spectra
        .iter()
        .map(|s| {
            let n = cfg.levels.unwrap_or(s.energies.len()).min(s.energies.len());
            json!({ "twice_j": s.twice_j, "multiplicity": s.twice_j + 1, "states": s.energies.len(), "energies": &s.energies[..n] })
        })
        .collect();
    let minima = sector_minima(&spectra);
    let ground = minima.iter().min_by(|a, b| a.1.total_cmp(b.1)).map(|(&j, &e)| json!({ "twice_j": j, "energy": e }));
    let mut out = json!({
        "format_version": FORMAT_VERSION,
        "solver": "ed",
        "spins": cfg.spins,
        "periodic": cfg.periodic,
        "ground": ground,
        "sectors": sectors,
    });
    if cfg.dense_check {
        if cfg.sectors.is_some() {
            return Err(Failure::Schema("dense_check needs every sector".into()));
        }
        let blocked = with_multiplicities(&spectra);
        let dense = exact_diag_dense(cfg.spins, cfg.periodic)?;
        let diff = blocked.iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        out["dense_check"] = json!({ "states": dense.len(), "max_difference": diff });
    }
    Ok(out)
}

fn solve_mera(cfg: &MeraConfig, cache: &GammaCache) -> Result<serde_json::Value, Failure> {
    let gate = blocked_chain_gate()?;
    let (_, result, starts) = mera_solve(cfg, &gate, cache)?;
    let spins = 4 * 3usize.pow(cfg.q as u32);
    let reference = if spins <= 14 {
        let spectra = exact_diag(spins, true, Some(&[cfg.twice_j]))?;
        spectra.first().and_then(|s| s.energies.first().copied())
    } else {
        None
    };
    Ok(json!({
        "format_version": FORMAT_VERSION,
        "solver": "mera",
        "config": cfg,
        "spins": spins,
        "energy": result.energy,
        "top_energies": result.top_energies,
        "ed_energy": reference,
        "relative_error": reference.map(|r| (result.energy - r) / r.abs()),
        "starts": starts,
        "trace": result.trace,
        "warnings": result.warnings,
        "cache": cache.stats(),
    }))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Failed(e.to_string()))?;
    }
    match cli.command {
        Command::Verify { suite, instances, seed } => {
            let cache = cache_for(cli.gamma_cache.as_deref());
            let name = suite.to_possible_value().unwrap().get_name().to_string();
            let report = run_suite(&name, instances, seed, &cache)?;
            cache.save()?;
            write_json(&serde_json::to_value(&report).unwrap(), None)?;
            if !report.passed {
                return Err(Failure::Failed("some properties failed".into()));
            }
        }
        Command::Bench { op, charges, deg, reps, dense, sym } => {
            let op: Op = op.parse()?;
            let (sym, dense) = if sym || dense { (sym, dense) } else { (true, true) };
            let cache = cache_for(cli.gamma_cache.as_deref());
            let rows = bench::run(op, charges, deg, reps, sym, dense, &cache)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["format_version", "op", "mode", "q", "d", "seconds", "flops"]).map_err(|e| Failure::Failed(e.to_string()))?;
            for r in rows {
                w.write_record([FORMAT_VERSION.to_string(), r.op, r.mode, r.q.to_string(), r.d.to_string(), format!("{:.6e}", r.seconds), r.flops.to_string()])
                    .map_err(|e| Failure::Failed(e.to_string()))?;
            }
            w.flush().map_err(|e| Failure::Failed(e.to_string()))?;
        }
        Command::Solve { kind, config, out } => {
            let result = match kind {
                SolveKind::Ed => solve_ed(&read_config(&config)?)?,
                SolveKind::Mera => {
                    let cfg: MeraConfig = read_config(&config)?;
                    let dir = cli.gamma_cache.clone().or(cfg.cache_dir.as_ref().map(PathBuf::from));
                    let cache = cache_for(dir.as_deref());
                    let r = solve_mera(&cfg, &cache)?;
                    cache.save()?;
                    r
                }
            };
            write_json(&result, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Schema(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
