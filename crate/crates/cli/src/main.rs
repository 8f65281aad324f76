//! `stochmatch`: reproducible experiments for online matching with
//! stochastic rewards.
//!
//! Exit codes: 0 success, 1 validation or I/O error, 2 a verification
//! check failed beyond its margin.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use stochmatch_core::bench::{self, Algorithm};
use stochmatch_core::dualcheck::{self, DualAlg};
use stochmatch_core::gainfn::{self, GainDomain, GainFunction, StepFn};
use stochmatch_core::instance::{sample_draw, DrawMode, Instance};
use stochmatch_core::simul;

#[derive(Parser)]
#[command(name = "stochmatch", version, about)]
struct Cli {
    /// Worker threads (default: logical cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write it as JSON
    Gen {
        #[command(flatten)]
        source: GenArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run an online algorithm and report its Monte Carlo value
    Run {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long, value_enum)]
        alg: AlgArg,
        #[arg(long)]
        trials: u64,
        /// Required: all stochastic commands take an explicit seed
        #[arg(long)]
        seed: u64,
        /// Also write the event trace of the first realization (CSV)
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Offline benchmarks (LP relaxations, S-OPT, exact and Monte Carlo
    /// algorithm values) on one instance
    Bench {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Estimate dual variables and check approximate dual feasibility
    Duals {
        #[command(flatten)]
        source: InstanceArgs,
        #[arg(long, value_enum)]
        alg: DualAlgArg,
        #[arg(long, value_enum)]
        gain: GainArg,
        /// Target competitive ratio
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_enum)]
        check: CheckArg,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gain-function solvers and certificate verification
    #[command(subcommand)]
    Gain(GainCommand),
    /// Re-derive headline constants and compare against their targets
    #[command(subcommand)]
    Reproduce(ReproduceCommand),
}

#[derive(Subcommand)]
enum GainCommand {
    /// Solve for the Ranking constant c and the ratio 1 - c/e
    SolveRanking,
    /// Closed-form equal-probability Balance constant 2(1 - ln 2)
    BalanceEqual,
    /// Alternating LP optimization of the general Balance gain function
    BalanceGeneral {
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        #[arg(long, default_value_t = 6.0)]
        lmax: f64,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        /// Write the (g, h) certificate JSON here; a slack CSV is written
        /// alongside with extension .csv
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-check a previously written certificate
    Verify {
        #[arg(long)]
        certificate: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReproduceCommand {
    /// The four headline competitive ratios
    Table1Constants {
        #[arg(long, default_value_t = 0.005)]
        step: f64,
        #[arg(long, default_value_t = 6.0)]
        lmax: f64,
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Output path (stdout if omitted); a manifest JSON is written
    /// alongside as <out>.manifest.json
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Args)]
struct GenArgs {
    /// Generator family
    #[arg(long = "gen", value_enum)]
    family: GenFamily,
    /// upper-triangular: number of offline (= online) vertices
    #[arg(long)]
    k: Option<usize>,
    /// upper-triangular: common edge probability
    #[arg(long)]
    p: Option<f64>,
    /// random: offline side size
    #[arg(long)]
    m: Option<usize>,
    /// random: online side size
    #[arg(long)]
    n: Option<usize>,
    /// random: edge density
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    /// random: generator seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InstanceArgs {
    /// Read the instance from a JSON file
    #[arg(long, conflicts_with = "family")]
    instance: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgsOptional,
}

#[derive(Args)]
struct GenArgsOptional {
    #[arg(long = "gen", value_enum)]
    family: Option<GenFamily>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    gen_seed: Option<u64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum GenFamily {
    UpperTriangular,
    Random,
}

#[derive(Copy, Clone, ValueEnum)]
enum AlgArg {
    Ranking,
    BalanceEqual,
    Greedy,
}

impl From<AlgArg> for Algorithm {
    fn from(a: AlgArg) -> Algorithm {
        match a {
            AlgArg::Ranking => Algorithm::Ranking,
            AlgArg::BalanceEqual => Algorithm::BalanceEqual,
            AlgArg::Greedy => Algorithm::Greedy,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum DualAlgArg {
    Ranking,
    BalanceEqual,
    BalanceFractional,
}

#[derive(Copy, Clone, ValueEnum)]
enum GainArg {
    /// Ranking closed form with the solved constant c
    RankingC,
    /// e^{x-1}, for the comparison against the stochastic benchmark
    RankingStar,
    /// Equal-probability Balance closed form
    BalanceEqual,
}

#[derive(Copy, Clone, ValueEnum)]
enum CheckArg {
    Config,
    Reduced,
}

#[derive(Copy, Clone, ValueEnum, PartialEq)]
enum FormatArg {
    Json,
    Csv,
}

/// Plain decimal with 12 significant digits.
fn fmt12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (11 - exp).clamp(0, 17) as usize;
    format!("{:.*}", decimals, x)
}

fn build_instance_from_gen(
    family: GenFamily,
    k: Option<usize>,
    p: Option<f64>,
    m: Option<usize>,
    n: Option<usize>,
    density: Option<f64>,
    p_min: Option<f64>,
    p_max: Option<f64>,
    seed: Option<u64>,
) -> Result<Instance, String> {
    match family {
        GenFamily::UpperTriangular => {
            let k = k.ok_or("upper-triangular needs --k")?;
            let p = p.ok_or("upper-triangular needs --p")?;
            Instance::upper_triangular(k, p).map_err(|e| e.to_string())
        }
        GenFamily::Random => Instance::random(
            m.ok_or("random needs --m")?,
            n.ok_or("random needs --n")?,
            density.ok_or("random needs --density")?,
            p_min.ok_or("random needs --p-min")?,
            p_max.ok_or("random needs --p-max")?,
            seed.ok_or("random generation needs an explicit seed")?,
        )
        .map_err(|e| e.to_string()),
    }
}

fn load_instance(src: &InstanceArgs) -> Result<Instance, String> {
    if let Some(path) = &src.instance {
        return Instance::read_json(path).map_err(|e| e.to_string());
    }
    let g = &src.gen;
    let family = g
        .family
        .ok_or("provide either --instance FILE or --gen FAMILY")?;
    build_instance_from_gen(
        family, g.k, g.p, g.m, g.n, g.density, g.p_min, g.p_max, g.gen_seed,
    )
}

fn write_manifest(out: &Path) -> Result<(), String> {
    let argv: Vec<String> = std::env::args().collect();
    let manifest = json!({
        "tool": "stochmatch",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
    });
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    std::fs::write(
        PathBuf::from(path),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| e.to_string())
}

fn emit(out: &OutArgs, rendered: &str) -> Result<(), String> {
    match &out.out {
        Some(path) => {
            std::fs::write(path, rendered).map_err(|e| e.to_string())?;
            write_manifest(path)?;
            log::info!("wrote {}", path.display());
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

fn gain_for(arg: GainArg) -> Result<GainFunction, String> {
    Ok(match arg {
        GainArg::RankingC => {
            let c = gainfn::solve_ranking_constant().map_err(|e| e.to_string())?.c;
            GainFunction::ranking_closed_form(c)
        }
        GainArg::RankingStar => GainFunction::ranking_stochastic(),
        GainArg::BalanceEqual => GainFunction::balance_equal_closed_form(),
    })
}

fn run() -> Result<u8, String> {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("STOCHMATCH_LOG", "warn"),
    )
    .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => return Err(e.to_string()),
        Err(e) => {
            print!("{e}");
            return Ok(0);
        }
    };
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| e.to_string())?;
    }

    match cli.command {
        Command::Gen { source, out } => {
            let inst = build_instance_from_gen(
                source.family,
                source.k,
                source.p,
                source.m,
                source.n,
                source.density,
                source.p_min,
                source.p_max,
                source.seed,
            )?;
            match &out.out {
                Some(path) => {
                    inst.write_json(path).map_err(|e| e.to_string())?;
                    write_manifest(path)?;
                }
                None => {
                    let tmp = tempfile_path()?;
                    inst.write_json(&tmp).map_err(|e| e.to_string())?;
                    let body = std::fs::read_to_string(&tmp).map_err(|e| e.to_string())?;
                    let _ = std::fs::remove_file(&tmp);
                    println!("{body}");
                }
            }
            Ok(0)
        }
        Command::Run {
            source,
            alg,
            trials,
            seed,
            trace,
            out,
        } => {
            let inst = load_instance(&source)?;
            let algorithm: Algorithm = alg.into();
            let (mean, stderr) = bench::mc_alg_value(&inst, algorithm, trials as usize, seed)
                .map_err(|e| e.to_string())?;
            if let Some(path) = trace {
                let draw = sample_draw(&inst, bench::derive_seed(seed, 0), DrawMode::All);
                let t = match algorithm {
                    Algorithm::Ranking => simul::run_ranking(&inst, &draw),
                    Algorithm::BalanceEqual => simul::run_balance_equal(&inst, &draw),
                    Algorithm::Greedy => simul::run_greedy(&inst, &draw),
                }
                .map_err(|e| e.to_string())?;
                std::fs::write(&path, t.to_csv(inst.n())).map_err(|e| e.to_string())?;
            }
            let rendered = match out.format {
                FormatArg::Json => serde_json::to_string_pretty(&json!({
                    "algorithm": algorithm.name(),
                    "trials": trials,
                    "seed": seed,
                    "mean": mean,
                    "stderr": stderr,
                }))
                .unwrap(),
                FormatArg::Csv => format!(
                    "algorithm,trials,seed,mean,stderr\n{},{},{},{},{}\n",
                    algorithm.name(),
                    trials,
                    seed,
                    fmt12(mean),
                    fmt12(stderr)
                ),
            };
            emit(&out, &rendered)?;
            if out.out.is_some() {
                println!("{} mean {} stderr {}", algorithm.name(), fmt12(mean), fmt12(stderr));
            }
            Ok(0)
        }
        Command::Bench {
            source,
            trials,
            seed,
            out,
        } => {
            let inst = load_instance(&source)?;
            let report =
                bench::bench_report(&inst, trials as usize, seed).map_err(|e| e.to_string())?;
            let rendered = match out.format {
                FormatArg::Json => serde_json::to_string_pretty(&report.to_json()).unwrap(),
                FormatArg::Csv => report.to_csv(),
            };
            emit(&out, &rendered)?;
            Ok(0)
        }
        Command::Duals {
            source,
            alg,
            gain,
            gamma,
            check,
            trials,
            seed,
            out,
        } => {
            let inst = load_instance(&source)?;
            let g = gain_for(gain)?;
            let dual_alg = match alg {
                DualAlgArg::Ranking => DualAlg::Ranking,
                DualAlgArg::BalanceEqual => DualAlg::BalanceEqual,
                DualAlgArg::BalanceFractional => DualAlg::BalanceFractional,
            };
            let est = dualcheck::estimate_duals(&inst, dual_alg, &g, trials as usize, seed)
                .map_err(|e| e.to_string())?;
            let report = match check {
                CheckArg::Config => dualcheck::check_config_feasibility(&inst, &est, gamma),
                CheckArg::Reduced => dualcheck::check_reduced_feasibility(&inst, &est, gamma),
            }
            .map_err(|e| e.to_string())?;
            let rendered = match out.format {
                FormatArg::Json => serde_json::to_string_pretty(&report.to_json()).unwrap(),
                FormatArg::Csv => report.to_csv(),
            };
            emit(&out, &rendered)?;
            println!(
                "pairs {} violations {} inconclusive {} worst_ratio {}",
                report.entries.len(),
                report.violations,
                report.inconclusive,
                fmt12(report.worst_ratio)
            );
            Ok(if report.violations > 0 { 2 } else { 0 })
        }
        Command::Gain(cmd) => run_gain(cmd),
        Command::Reproduce(cmd) => run_reproduce(cmd),
    }
}

fn tempfile_path() -> Result<PathBuf, String> {
    let mut p = std::env::temp_dir();
    p.push(format!("stochmatch-{}.json", std::process::id()));
    Ok(p)
}

fn run_gain(cmd: GainCommand) -> Result<u8, String> {
    match cmd {
        GainCommand::SolveRanking => {
            let c = gainfn::solve_ranking_constant().map_err(|e| e.to_string())?;
            println!("c         {}", fmt12(c.c));
            println!("gamma     {}", fmt12(c.gamma));
            println!("mu_lower  {}", fmt12(c.mu_lower));
            Ok(0)
        }
        GainCommand::BalanceEqual => {
            let gamma = gainfn::balance_equal_gamma();
            let residual = gainfn::verify_balance_equal_ode(1000).map_err(|e| e.to_string())?;
            println!("gamma         {}", fmt12(gamma));
            println!("ode_residual  {}", fmt12(residual));
            Ok(0)
        }
        GainCommand::BalanceGeneral {
            step,
            lmax,
            rounds,
            out,
        } => {
            let state =
                gainfn::alternate_optimize(step, lmax, rounds).map_err(|e| e.to_string())?;
            println!("gamma           {}", fmt12(state.gamma));
            println!("min_slack       {}", fmt12(state.min_slack));
            println!("tail_min_slack  {}", fmt12(state.tail_min_slack));
            if let Some(path) = &out.out {
                std::fs::write(
                    path,
                    serde_json::to_string_pretty(&state.certificate_json()).unwrap(),
                )
                .map_err(|e| e.to_string())?;
                let csv_path = path.with_extension("csv");
                std::fs::write(&csv_path, state.slack_csv()).map_err(|e| e.to_string())?;
                write_manifest(path)?;
            }
            Ok(0)
        }
        GainCommand::Verify { certificate } => {
            let text = std::fs::read_to_string(&certificate).map_err(|e| e.to_string())?;
            let cert: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| e.to_string())?;
            if cert["kind"] != "step" {
                return Err("certificate kind must be \"step\"".into());
            }
            let floats = |key: &str| -> Result<Vec<f64>, String> {
                cert[key]
                    .as_array()
                    .ok_or(format!("certificate missing {key}"))?
                    .iter()
                    .map(|v| v.as_f64().ok_or(format!("non-numeric entry in {key}")))
                    .collect()
            };
            let grid = floats("grid")?;
            let values = floats("values")?;
            let h = floats("h_values")?;
            let gamma = cert["gamma"].as_f64().ok_or("certificate missing gamma")?;
            let g = GainFunction::step(
                StepFn::new(grid.clone(), values).map_err(|e| e.to_string())?,
                GainDomain::Load,
            )
            .map_err(|e| e.to_string())?;
            // h_values cover the optimization grid, which may be a prefix
            // of the certificate knots (the tail extension carries no h)
            let mut min_slack = f64::INFINITY;
            for (j, &hj) in h.iter().enumerate() {
                let lhs =
                    gainfn::balance_general_lhs(grid[j], &g, hj).map_err(|e| e.to_string())?;
                min_slack = min_slack.min(lhs - gamma);
            }
            let l_end = grid[h.len() - 1];
            let mut tail_min = f64::INFINITY;
            for k in 1..=20 {
                let l = l_end + 0.5 * k as f64;
                let hl = gainfn::update_h(&g, &[l])[0];
                let lhs = gainfn::balance_general_lhs(l, &g, hl).map_err(|e| e.to_string())?;
                tail_min = tail_min.min(lhs - gamma);
            }
            println!("gamma           {}", fmt12(gamma));
            println!("min_slack       {}", fmt12(min_slack));
            println!("tail_min_slack  {}", fmt12(tail_min));
            Ok(if min_slack < -1e-8 || tail_min < -1e-8 {
                2
            } else {
                0
            })
        }
    }
}

fn run_reproduce(cmd: ReproduceCommand) -> Result<u8, String> {
    let ReproduceCommand::Table1Constants {
        step,
        lmax,
        rounds,
        out,
    } = cmd;
    let ranking = gainfn::solve_ranking_constant().map_err(|e| e.to_string())?;
    let balance_eq = gainfn::balance_equal_gamma();
    let general = gainfn::alternate_optimize(step, lmax, rounds).map_err(|e| e.to_string())?;
    let star = gainfn::star_constant(0.5);
    let rows = [
        ("ranking_vs_opt", ranking.gamma, 0.572),
        ("balance_equal", balance_eq, 0.613),
        ("balance_general", general.gamma, 0.610),
        ("ranking_vs_stochastic_opt", star, 0.632),
    ];
    let mut ok = true;
    println!("{:<28} {:>16} {:>8}  status", "ratio", "computed", "target");
    for (name, value, target) in rows {
        let pass = value >= target - 5e-4;
        ok &= pass;
        println!(
            "{:<28} {:>16} {:>8}  {}",
            name,
            fmt12(value),
            target,
            if pass { "ok" } else { "BELOW" }
        );
    }
    if let Some(path) = &out.out {
        let body = json!({
            "ranking_vs_opt": ranking.gamma,
            "balance_equal": balance_eq,
            "balance_general": general.gamma,
            "ranking_vs_stochastic_opt": star,
            "general_min_slack": general.min_slack,
            "general_tail_min_slack": general.tail_min_slack,
        });
        std::fs::write(path, serde_json::to_string_pretty(&body).unwrap())
            .map_err(|e| e.to_string())?;
        write_manifest(path)?;
    }
    Ok(if ok { 0 } else { 2 })
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
