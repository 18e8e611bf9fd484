use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use dmcfuse::bounds::{crb_report, ParamVector};
use dmcfuse::channel::{write_realization_csv, ChannelModel};
use dmcfuse::estimator::{BandEstimator, EstimatorConfig};
use dmcfuse::exec::Execution;
use dmcfuse::experiments::{run_pdp, run_sweep, trial_rng, write_pdp_csv, Scale, SweepKind, SweepSpec};
use dmcfuse::fusion::run_multiband;
use dmcfuse::scenario::{ConfigFile, Scenario, Thresholds};
use dmcfuse::Result;

#[derive(Parser)]
#[command(name = "dmcfuse", version, about = "Multi-band bistatic sensing under dense multipath")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML file with `[scenario]` and optional `[thresholds]` tables.
    /// Without it the built-in two-band preset is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Use full-scale trial counts and grids.
    #[arg(long)]
    full_scale: bool,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// DMC profile, specular sticks and a delay periodogram per band.
    Pdp(Common),
    /// Scatterer-delay RMSE and bound versus transmit power.
    RmseSweep(Common),
    /// Scatterer-delay bound versus the upper band's decay rate.
    CrbBeta(Common),
    /// Scatterer-delay bound along a straight trajectory.
    CrbTrajectory(Common),
    /// Bounds and ESNR of the configured scenario.
    Crb(Common),
    /// Estimate and fuse paths from a single realization.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Also write the sampled channel to this CSV.
        #[arg(long)]
        dump_realization: Option<PathBuf>,
    },
}

struct Loaded {
    scenario: Scenario,
    thresholds: Thresholds,
    from_file: bool,
}

fn load(common: &Common) -> Result<Loaded> {
    match &common.config {
        Some(path) => {
            let cfg = ConfigFile::load(path)?;
            Ok(Loaded { scenario: cfg.scenario, thresholds: cfg.thresholds, from_file: true })
        }
        None => Ok(Loaded { scenario: Scenario::table1(), thresholds: Thresholds::default(), from_file: false }),
    }
}

fn output(common: &Common) -> Result<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn sweep_spec(kind: SweepKind, common: &Common) -> Result<SweepSpec> {
    let loaded = load(common)?;
    let scale = if common.full_scale { Scale::Full } else { Scale::Desk };
    let mut spec = SweepSpec::preset(kind, loaded.scenario.clone(), scale);
    // a config file overrides the preset's figure parameters
    if loaded.from_file {
        spec.scenario = loaded.scenario;
    }
    spec.thresholds = loaded.thresholds;
    spec.seed = common.seed.unwrap_or(spec.scenario.seed);
    if let Some(t) = common.trials {
        spec.trials = t;
    }
    if common.sequential {
        spec.execution = Execution::Sequential;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pdp(common) => {
            let spec = sweep_spec(SweepKind::Pdp, &common)?;
            let delays: Vec<f64> = spec.values.iter().map(|ns| ns * 1e-9).collect();
            let rows = run_pdp(&spec.scenario, &delays, spec.seed)?;
            write_pdp_csv(output(&common)?, &rows)
        }
        Command::RmseSweep(common) => sweep(SweepKind::RmseVsPt, &common),
        Command::CrbBeta(common) => sweep(SweepKind::CrbVsBeta2, &common),
        Command::CrbTrajectory(common) => sweep(SweepKind::CrbTrajectory, &common),
        Command::Crb(common) => {
            let loaded = load(&common)?;
            let model = ChannelModel::new(&loaded.scenario)?;
            let params = ParamVector::from_geometry(&model.geometry, &model.gains.g);
            let report = crb_report(&params, &model.bands)?;
            info!("joint FIM condition number {:.3e}", report.bounds.condition);
            report.write_csv(output(&common)?)
        }
        Command::Estimate { common, dump_realization } => {
            let loaded = load(&common)?;
            let seed = common.seed.unwrap_or(loaded.scenario.seed);
            let model = ChannelModel::new(&loaded.scenario)?;
            let mut rng = trial_rng(seed, 0, 0);
            let real = model.sample_with(&mut rng, false);
            if let Some(path) = dump_realization {
                write_realization_csv(File::create(path)?, &real, &loaded.scenario.arrays)?;
            }
            let th = loaded.thresholds;
            let cfg = EstimatorConfig { k_max: th.k_max, eps_esnr_db: th.eps_esnr_db, ..EstimatorConfig::default() };
            let estimators =
                model.bands.iter().map(|b| BandEstimator::new(b, cfg)).collect::<Result<Vec<_>>>()?;
            let out = run_multiband(&real.h, &estimators, &th)?;
            for (m, est) in out.per_band.iter().enumerate() {
                for e in est {
                    eprintln!(
                        "band {m}: tau {:.4} ns  aod {:.2} deg  aoa {:.2} deg  esnr {:.1} dB",
                        e.tau_hat * 1e9,
                        e.phi_hat.to_degrees(),
                        e.theta_hat.to_degrees(),
                        e.esnr_hat_db
                    );
                }
            }
            let mut w = csv::Writer::from_writer(output(&common)?);
            w.write_record(["group", "tau_ns", "aod_deg", "aoa_deg", "sqrt_var_tau_ns", "bands"])?;
            for f in &out.fused {
                let bands: Vec<String> = f.bands.iter().map(|b| b.to_string()).collect();
                w.write_record([
                    f.group_id.to_string(),
                    format!("{:.6}", f.params.tau * 1e9),
                    format!("{:.4}", f.params.phi.to_degrees()),
                    format!("{:.4}", f.params.theta.to_degrees()),
                    format!("{:.6e}", f.params.var_tau.sqrt() * 1e9),
                    bands.join("+"),
                ])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

fn sweep(kind: SweepKind, common: &Common) -> Result<()> {
    let spec = sweep_spec(kind, common)?;
    let result = run_sweep(&spec)?;
    result.write_csv(output(common)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
