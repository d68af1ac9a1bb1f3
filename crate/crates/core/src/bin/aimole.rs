//! Command-line front end for reference generation, repeatability runs and
//! learning campaigns.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 plant divergence,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aimole::harness::{
    compare_variants, load_campaign, resolve_plant, run_learning, run_repeatability, run_suite, write_plotdata, CampaignConfig, ReferenceSource, SuiteConfig,
};
use aimole::ilc::Variant;
use aimole::plant::PlantId;
use aimole::signal::{generate_reference, load_reference, save_reference, sidecar_path};
use aimole::{Error, Result};

#[derive(Parser)]
#[command(name = "aimole", version, about = "GP-model based iterative motion learning on simulated plants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reference by running a filtered random input through a plant.
    Refgen(RefgenArgs),
    /// Replay a reference's realizing input and report the repetitive error.
    Repeat(RepeatArgs),
    /// Run one learning campaign.
    Learn(LearnArgs),
    /// Run the IO and IS variants on the same task.
    Compare(LearnArgs),
    /// Run the task suite (3 plants x 3 references, several seeds).
    Suite(SuiteArgs),
    /// Turn campaign directories into tidy CSV series for plotting.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct RefgenArgs {
    #[arg(long, default_value = "cube")]
    plant: PlantId,
    /// Plant parameter file (JSON); built-in parameters when absent.
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    cutoff: f64,
    #[arg(long, default_value_t = 0.01)]
    variance: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Reference CSV path; the sidecar JSON is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RepeatArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value = "cube")]
    plant: PlantId,
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LearnArgs {
    /// Campaign config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    plant: Option<PlantId>,
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference CSV to track instead of a generated one.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite config (JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    trials: Option<usize>,
    /// Number of master seeds (0..n).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Campaign directories.
    #[arg(required = true)]
    campaigns: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn campaign_config(args: &LearnArgs) -> Result<CampaignConfig> {
    let mut cfg = match &args.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(p) = args.plant {
        cfg.plant = p;
    }
    if let Some(p) = &args.plants {
        cfg.plant_file = Some(p.clone());
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = &args.reference {
        cfg.reference = ReferenceSource::File { path: r.clone() };
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plant_for(plant: PlantId, plants: &Option<PathBuf>) -> Result<aimole::plant::PlantSpec> {
    resolve_plant(&CampaignConfig {
        plant,
        plant_file: plants.clone(),
        ..CampaignConfig::default()
    })
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn refgen(args: &RefgenArgs) -> Result<()> {
    let spec = plant_for(args.plant, &args.plants)?;
    let reference = generate_reference(&spec, args.seed, args.cutoff, args.variance, args.samples)?;
    save_reference(&reference, &args.out)?;
    println!(
        "wrote {} and {} (|r| = {:.6}, N = {})",
        args.out.display(),
        sidecar_path(&args.out).display(),
        reference.norm(),
        reference.len()
    );
    Ok(())
}

fn repeat(args: &RepeatArgs) -> Result<()> {
    let spec = plant_for(args.plant, &args.plants)?;
    let reference = load_reference(&args.reference)?;
    let result = run_repeatability(&spec, &reference, args.runs, args.seed)?;
    println!("e_R = {:.6e} over {} runs", result.repetitive_error, args.runs);
    Ok(())
}

fn learn(args: &LearnArgs) -> Result<()> {
    let cfg = campaign_config(args)?;
    let log = run_learning(&cfg)?;
    println!("j,err_norm,eps");
    for e in &log.entries {
        println!("{},{:.6e},{:.6e}", e.j, e.err_norm, e.eps);
    }
    println!(
        "e_R = {:.4e}, trials to 50%: {}, to 80%: {}",
        log.repetitive_floor,
        fmt_opt(log.trials_to(0.5)),
        fmt_opt(log.trials_to(0.8))
    );
    if let Some(dir) = &cfg.out {
        println!("campaign written to {}", dir.display());
    }
    Ok(())
}

fn compare(args: &LearnArgs) -> Result<()> {
    let cfg = campaign_config(args)?;
    let cmp = compare_variants(&cfg)?;
    println!("variant,trials_to_50,trials_to_80,final_eps");
    for s in [&cmp.io, &cmp.is] {
        println!(
            "{},{},{},{:.6e}",
            s.variant,
            fmt_opt(s.trials_to_50),
            fmt_opt(s.trials_to_80),
            s.eps.last().copied().unwrap_or(f64::NAN)
        );
    }
    if let Some(dir) = &cfg.out {
        let json = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("compare.json"), json + "\n")?;
    }
    Ok(())
}

fn suite(args: &SuiteArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::NotFound(path.clone()),
                _ => Error::Io(e),
            })?;
            serde_json::from_str::<SuiteConfig>(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                line: e.line() as u64,
                message: e.to_string(),
            })?
        }
        None => SuiteConfig::default(),
    };
    if let Some(v) = args.variant {
        cfg.variants = vec![v];
    }
    if let Some(t) = args.trials {
        cfg.base.trials = t;
    }
    if let Some(n) = args.seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(p) = &args.plants {
        cfg.base.plant_file = Some(p.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    cfg.base.validate()?;
    let report = run_suite(&cfg)?;
    println!("variant,campaigns,mean_t50,median_t50,mean_t80,median_t80");
    for s in &report.stats {
        println!(
            "{},{},{:.2},{:.1},{:.2},{:.1}",
            s.variant, s.campaigns, s.mean_trials_to_50, s.median_trials_to_50, s.mean_trials_to_80, s.median_trials_to_80
        );
    }
    Ok(())
}

fn label(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn plotdata(args: &PlotArgs) -> Result<()> {
    let campaigns = args
        .campaigns
        .iter()
        .map(|d| load_campaign(d).map(|log| (label(d), log)))
        .collect::<Result<Vec<_>>>()?;
    for path in write_plotdata(&campaigns, &args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Refgen(a) => refgen(a),
        Command::Repeat(a) => repeat(a),
        Command::Learn(a) => learn(a),
        Command::Compare(a) => compare(a),
        Command::Suite(a) => suite(a),
        Command::Plotdata(a) => plotdata(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

