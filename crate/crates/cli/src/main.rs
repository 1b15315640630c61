use clap::{Args, Parser, Subcommand, ValueEnum};
use gietlab::{Acceleration, Decomposer, InductionChain, Observable, Towers};
use gietlab_cli::{run_scenario, write_outputs, CliError, Scenario, ScenarioConfig};
use serde_json::json;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gietlab", version, about = "Numerical experiments on generalized interval exchange transformations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario configuration (TOML). Defaults to the golden rotation.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    precision_bits: Option<u32>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for `run`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker budget. The current runners are sequential, so values above 1
    /// have no effect.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the configuration and build the map.
    Validate,
    /// Run the induction and print one record per level.
    Induce {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_parser = parse_acceleration)]
        acceleration: Option<Acceleration>,
    },
    /// Print the dynamical partition of one level.
    Towers {
        #[arg(long)]
        level: usize,
    },
    /// Birkhoff sum of log DT from a point, directly and by tower decomposition.
    Birkhoff {
        #[arg(long)]
        x: String,
        #[arg(long)]
        n: u64,
    },
    /// Hölder fit of the conjugacy (the `holder` scenario, printed).
    Regularity,
    /// Typical positive growth probe (the `tpg` scenario, printed).
    Tpg {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the configured scenario and write its artifacts.
    Run,
}

fn parse_acceleration(s: &str) -> Result<Acceleration, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown acceleration {s:?} (rauzy, zorich, positive)"))
}

fn load(g: &Global, fallback: Scenario) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::new(fallback),
    };
    if let Some(p) = g.precision_bits {
        cfg.precision_bits = p;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_output(out: &gietlab_cli::ScenarioOutput, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(&out.summary).unwrap() + "\n",
        Format::Csv => out.series.first().map(|s| s.1.clone()).unwrap_or_default(),
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Validate => {
            let cfg = load(g, Scenario::RotationSanity)?;
            let t = cfg.build_giet()?;
            Ok(serde_json::to_string_pretty(&json!({
                "ok": true,
                "scenario": cfg.scenario.name(),
                "d": t.d(),
                "precision_bits": cfg.precision_bits,
                "config_sha256": cfg.hash(),
                "giet": t.to_document(),
            }))
            .unwrap()
                + "\n")
        }
        Command::Induce { steps, acceleration } => {
            let cfg = load(g, Scenario::RotationSanity)?;
            let acc = acceleration.unwrap_or(cfg.budget.acceleration);
            let mut chain = InductionChain::with_config(cfg.build_giet()?, acc, cfg.induction());
            chain.extend_to(steps.unwrap_or(cfg.budget.depth))?;
            Ok(match g.format {
                Format::Json => chain.to_jsonl(),
                Format::Csv => {
                    let mut s = String::from("k,rv_steps,n_k,norm,heights\n");
                    for (k, r) in chain.records().iter().enumerate() {
                        let h: Vec<String> = chain.heights(k + 1).iter().map(|x| x.to_string()).collect();
                        let _ = writeln!(s, "{},{},{},{},{}", r.k, r.rv_steps, r.n_k, r.matrix.norm(), h.join(" "));
                    }
                    s
                }
            })
        }
        Command::Towers { level } => {
            let cfg = load(g, Scenario::RotationSanity)?;
            let chain = InductionChain::with_config(cfg.build_giet()?, cfg.budget.acceleration, cfg.induction());
            let towers = Towers::build(chain, level, cfg.budget.floor_cap)?;
            let p = towers.partition(level);
            Ok(match g.format {
                Format::Csv => p.to_csv(),
                Format::Json => {
                    serde_json::to_string_pretty(&json!({
                        "level": level,
                        "floors": p.len(),
                        "heights": p.heights(),
                        "mesh": p.mesh().to_f64(),
                        "min_floor": p.min_floor().to_f64(),
                    }))
                    .unwrap()
                        + "\n"
                }
            })
        }
        Command::Birkhoff { x, n } => {
            let cfg = load(g, Scenario::RotationSanity)?;
            let t = cfg.build_giet()?;
            let x = gietlab::real::parse_decimal(cfg.precision_bits, &x).ok_or_else(|| CliError::Config(format!("not a decimal: {x:?}")))?;
            let f = Observable::LogDerivative;
            let direct = gietlab::birkhoff::birkhoff_sum(&t, &f, &x, n as i64)?;
            let mut dz = Decomposer::new(InductionChain::with_config(t, Acceleration::Rauzy, cfg.induction()), f, 100_000);
            let d = dz.decompose(&x, n)?;
            Ok(serde_json::to_string_pretty(&json!({
                "n": n,
                "direct": gietlab::real::to_decimal(&direct),
                "reconstruction": gietlab::real::to_decimal(&d.reconstruction),
                "bound": d.bound.to_f64(),
                "deepest_level": d.deepest,
                "split_time": d.split_time,
                "terms": d.backward.len() + d.forward.len(),
            }))
            .unwrap()
                + "\n")
        }
        Command::Regularity => {
            let mut cfg = load(g, Scenario::Holder)?;
            cfg.scenario = Scenario::Holder;
            Ok(emit_output(&run_scenario(&cfg)?, g.format))
        }
        Command::Tpg { steps } => {
            let mut cfg = load(g, Scenario::Tpg)?;
            cfg.scenario = Scenario::Tpg;
            if let Some(k) = steps {
                cfg.budget.depth = k;
            }
            Ok(emit_output(&run_scenario(&cfg)?, g.format))
        }
        Command::Run => {
            let cfg = load(g, Scenario::RotationSanity)?;
            let out = run_scenario(&cfg)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
            let manifest = write_outputs(&dir, &cfg, &out)?;
            Ok(serde_json::to_string_pretty(&json!({ "out": dir, "manifest": manifest })).unwrap() + "\n")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(s) => {
            print!("{s}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
