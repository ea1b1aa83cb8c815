use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pamdp::aggregation::{default_perturbations, diffusion_report, GaussianDiffusionSpec, ScheduleEntry};
use pamdp::harness::{
    emit_csv, emit_svg, mean_series, regret_sweep, rolling_average, run_experiment, write_summary,
    build_agent, build_environment, EpisodeRecord, ExperimentConfig, ExperimentResult, Phase, PlotKind,
    RegretLedger, Scenario, SvgSeries,
};
use pamdp::mdp::optimal_welfare;
use pamdp::mechanism::{implementability_check, minimal_transfers, phase1_estimate, TargetMode, TargetStatus};
use pamdp::{Error, ErrorCategory, Execution};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "pamdp", version, about = "Principal-agent MDP simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured scenarios and write ledgers.
    Run(Common),
    /// Estimate minimal transfers by batched binary search.
    EstimateTransfers {
        #[command(flatten)]
        common: Common,
        /// Estimate one payment per (s, a) shared across steps.
        #[arg(long)]
        stationary: bool,
    },
    /// Two-phase runs over a grid of totals, with an exponent fit.
    RegretSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated totals; overrides `t_grid` in the config.
        #[arg(long, value_delimiter = ',')]
        t_grid: Vec<usize>,
    },
    /// Gaussian denoiser checks.
    DiffusionCheck(DiffusionArgs),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write SVG charts next to the CSVs.
    #[arg(long)]
    plot: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct DiffusionArgs {
    /// JSON spec {mu0, var0, dim, schedule: [{t, alpha, sigma}]}; replaces the inline flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    var0: f64,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    /// Points on the variance-preserving schedule.
    #[arg(long, default_value_t = 5)]
    points: usize,
    /// Extra schedule point as t,alpha,sigma.
    #[arg(long, value_delimiter = ',')]
    point: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Budget => 3,
        ErrorCategory::Io => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => cmd_run(&c),
        Command::EstimateTransfers { common, stationary } => cmd_estimate(&common, stationary),
        Command::RegretSweep { common, t_grid } => cmd_sweep(&common, t_grid),
        Command::DiffusionCheck(d) => cmd_diffusion(&d),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Loads the config and applies flag overrides.
fn load(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::from_path(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(n) = c.episodes {
        cfg.episodes = n;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        println!("{}", msg.as_ref());
    }
}

fn scenario_series(
    res: &ExperimentResult,
    scenarios: &[Scenario],
    window: usize,
    pick: impl Fn(&RegretLedger) -> Option<Vec<f64>>,
) -> Option<Vec<SvgSeries>> {
    scenarios
        .iter()
        .map(|&sc| {
            let per: Option<Vec<Vec<f64>>> = res.ledgers(sc).map(|l| pick(l).map(|v| rolling_average(&v, window))).collect();
            Some(SvgSeries {
                label: sc.name().to_string(),
                values: mean_series(&per?),
            })
        })
        .collect()
}

fn cmd_run(c: &Common) -> Result<bool, Error> {
    let cfg = load(c)?;
    let res = run_experiment(&cfg, Execution::Parallel)?;
    let out = &cfg.out_dir;
    for run in &res.runs {
        let path = out.join(format!("{}_seed{}.csv", run.scenario.name(), run.seed));
        emit_csv(&run.ledger, &path)?;
        if let Some(tau) = &run.tau_hat {
            write_text(&out.join(format!("{}_seed{}_tau.json", run.scenario.name(), run.seed)), &tau.to_json())?;
        }
    }
    if c.plot {
        let w = cfg.rolling_window;
        if let Some(s) = scenario_series(&res, &cfg.scenario, w, |l| Some(l.welfare_series())) {
            emit_svg(&s, &out.join("welfare.svg"), PlotKind::Welfare)?;
        }
        if let Some(s) = scenario_series(&res, &cfg.scenario, w, |l| l.pollution_series()) {
            emit_svg(&s, &out.join("pollution.svg"), PlotKind::Pollution)?;
        }
        let regret = scenario_series(&res, &cfg.scenario, 1, |l| Some(l.cumulative_regret.clone()));
        if let Some(s) = regret {
            emit_svg(&s, &out.join("regret.svg"), PlotKind::Regret)?;
        }
    }
    let tail = 500.min(cfg.episodes);
    let scenarios: Vec<_> = cfg
        .scenario
        .iter()
        .map(|&sc| {
            let ledgers: Vec<&RegretLedger> = res.ledgers(sc).collect();
            json!({
                "scenario": sc.name(),
                "replicates": ledgers.len(),
                "w_star": ledgers.first().map(|l| l.w_star),
                "tail_episodes": tail,
                "tail_mean_welfare": res.tail_welfare(sc, tail),
                "tail_mean_pollution": res.tail_pollution(sc, tail),
                "total_regret": ledgers.iter().map(|l| l.total_regret()).collect::<Vec<_>>(),
                "regret_exponent": ledgers.iter().map(|l| l.fit.as_ref().map(|f| f.exponent)).collect::<Vec<_>>(),
                "decomposition": ledgers.iter().map(|l| l.decomposition).collect::<Vec<_>>(),
            })
        })
        .collect();
    for s in &scenarios {
        say(
            c.quiet,
            format!(
                "{}: tail welfare {} tail pollution {}",
                s["scenario"].as_str().unwrap_or("?"),
                s["tail_mean_welfare"],
                s["tail_mean_pollution"]
            ),
        );
    }
    write_summary(&json!({ "episodes": cfg.episodes, "scenarios": scenarios }), &out.join("summary.json"))?;
    say(c.quiet, format!("wrote {}", out.display()));
    Ok(true)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn cmd_estimate(c: &Common, stationary: bool) -> Result<bool, Error> {
    let mut cfg = load(c)?;
    if let Some(n) = c.episodes {
        cfg.phase1.episodes = n;
    }
    if stationary {
        cfg.phase1.targets = TargetMode::Stationary;
    }
    let seed = cfg.resolved_seeds()[0];
    let mut env = build_environment(&cfg, seed)?;
    let mdp = env.shared_mdp();
    let mut agent = build_agent(&cfg, &mdp, seed)?;
    let outcome = phase1_estimate(&mut env, &mut agent, &cfg.phase1)?;

    let truth = minimal_transfers(&mdp);
    let reference = match cfg.phase1.targets {
        TargetMode::StepIndexed => truth.tau_star.clone(),
        TargetMode::Stationary => truth.stationary_policy(),
    };
    let implementable = implementability_check(&mdp, &outcome.tau_hat)?;
    let errors: Vec<f64> = outcome
        .estimates
        .iter()
        .filter(|e| e.status != TargetStatus::Starved)
        .map(|e| e.hi - reference.get(e.target.step.unwrap_or(0), e.target.state, e.target.action))
        .collect();
    let out = &cfg.out_dir;
    write_text(&out.join("tau_hat.json"), &outcome.tau_hat.to_json())?;
    let w_star = optimal_welfare(&mdp).w_star;
    let records: Vec<EpisodeRecord> = outcome
        .episodes
        .iter()
        .enumerate()
        .map(|(i, o)| EpisodeRecord::from_outcome(i + 1, Phase::Phase1, o, seed))
        .collect();
    emit_csv(&RegretLedger::new(w_star, records), &out.join("phase1.csv"))?;
    let report = json!({
        "seed": seed,
        "episodes_used": outcome.episodes_used,
        "partial": outcome.partial,
        "batch_len": cfg.phase1.batch_len(),
        "batches": cfg.phase1.num_batches(mdp.horizon()),
        "estimates": outcome.estimates.iter().map(|e| json!({
            "step": e.target.step,
            "state": e.target.state,
            "action": e.target.action,
            "lo": e.lo,
            "hi": e.hi,
            "status": format!("{:?}", e.status),
        })).collect::<Vec<_>>(),
        "starved": outcome.starved().count(),
        "implementable": implementable.all(),
        "implementability_failures": implementable.count_failures(),
        "min_error": errors.iter().copied().fold(f64::INFINITY, f64::min),
        "max_error": errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    write_summary(&report, &out.join("phase1_report.json"))?;
    say(
        c.quiet,
        format!(
            "phase 1 used {} episodes; {} starved targets; implementable: {}",
            outcome.episodes_used,
            report["starved"],
            implementable.all()
        ),
    );
    Ok(true)
}

fn cmd_sweep(c: &Common, t_grid: Vec<usize>) -> Result<bool, Error> {
    let cfg = load(c)?;
    let grid = if t_grid.is_empty() { cfg.t_grid.clone() } else { t_grid };
    let sweep = regret_sweep(&cfg, &grid, Execution::Parallel)?;
    let out = &cfg.out_dir;
    let mut rows = String::from("T,seed,regret\n");
    for (t, regrets) in sweep.t_grid.iter().zip(&sweep.regret) {
        for (seed, r) in sweep.seeds.iter().zip(regrets) {
            rows.push_str(&format!("{t},{seed},{r}\n"));
        }
    }
    write_text(&out.join("sweep.csv"), &rows)?;
    write_summary(&sweep, &out.join("sweep.json"))?;
    for (t, r) in sweep.t_grid.iter().zip(&sweep.mean_regret) {
        say(c.quiet, format!("T={t}: mean R_sw={r:.3} per episode {:.5}", r / *t as f64));
    }
    say(
        c.quiet,
        format!(
            "regret exponent {:.3} (band {:.3}..{:.3})",
            sweep.fit.exponent, sweep.fit.band.0, sweep.fit.band.1
        ),
    );
    Ok(true)
}

fn cmd_diffusion(d: &DiffusionArgs) -> Result<bool, Error> {
    let mut spec = match &d.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let spec: GaussianDiffusionSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            GaussianDiffusionSpec::new(spec.mu0, spec.var0, spec.dim, spec.schedule)?
        }
        None => GaussianDiffusionSpec::variance_preserving(d.mu0, d.var0, d.dim, d.points)?,
    };
    if !d.point.len().is_multiple_of(3) {
        return Err(Error::Config("--point takes t,alpha,sigma triples".into()));
    }
    for p in d.point.chunks(3) {
        spec = spec.with_entry(ScheduleEntry { t: p[0], alpha: p[1], sigma: p[2] })?;
    }
    let reports = diffusion_report(&spec, &default_perturbations(), d.samples, d.seed, Execution::Parallel)?;
    let passed = reports.iter().all(|r| r.passed);
    for r in &reports {
        say(
            d.quiet,
            format!(
                "t={:.3} alpha={:.4} sigma={:.4} welfare(bayes)={:.5} identity err={} {}",
                r.t,
                r.alpha,
                r.sigma,
                r.welfare_bayes.mean,
                r.identity_max_err.map_or("skipped".to_string(), |e| format!("{e:.2e}")),
                if r.passed { "ok" } else { "FAIL" }
            ),
        );
    }
    if let Some(out) = &d.out {
        write_summary(&reports, &out.join("diffusion.json"))?;
    }
    Ok(passed)
}
