use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use bloch_control::analysis::{
    distance_matrix, distance_matrix_csv, evaluate_landscape, pearson, protocol_gradient, reevaluate_landscape,
    DistanceIndex, GridSpec, LandscapeGrid, LandscapeSummary,
};
use bloch_control::baseline::grid_baseline;
use bloch_control::config::{EnvKind, RunConfig};
use bloch_control::nv::NvMode;
use bloch_control::persist::{read_json, write_json, write_with_meta, Checkpoint, Metadata};
use bloch_control::rl::{Environment, Trainer};
use bloch_control::{verify, Error};

#[derive(Parser)]
#[command(name = "bloch-control", version, about = "Learned state-preparation protocols for NV centers and a spin toy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy; writes checkpoints and the training curve.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<u64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from a checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a trained policy on a target grid.
    Landscape {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid size as THETAxPHI, e.g. 21x21.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat φ as periodic when differentiating protocols.
        #[arg(long)]
        periodic_phi: bool,
        /// Also replay the protocols under open (Lindblad) dynamics.
        #[arg(long)]
        open: bool,
    },
    /// Nelder-Mead optimization of every grid target.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two landscape files (CSV or JSON).
    Analyze {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical checks.
    Verify,
}

fn parse_grid(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Config(format!("grid must look like 21x21, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let nt: usize = a.trim().parse().map_err(|_| bad())?;
    let np: usize = b.trim().parse().map_err(|_| bad())?;
    if nt == 0 || np == 0 {
        return Err(bad());
    }
    Ok((nt, np))
}

fn grid_spec(cfg: &RunConfig, grid: Option<&str>) -> Result<GridSpec, Error> {
    let mut spec = GridSpec::from_config(&cfg.grid);
    if let Some(g) = grid {
        (spec.n_theta, spec.n_phi) = parse_grid(g)?;
    }
    if cfg.env.is_toy() && spec.n_theta == 1 {
        let h = std::f64::consts::FRAC_PI_2;
        spec.theta = (h, h);
    }
    Ok(spec)
}

fn load_landscape(path: &Path) -> Result<LandscapeGrid<f64>, Error> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json(path),
        _ => {
            let text = std::fs::read_to_string(path)?;
            LandscapeGrid::from_csv(&text, &path.display().to_string())
        }
    }
}

fn write_landscape(dir: &Path, stem: &str, grid: &LandscapeGrid<f64>, meta: &Metadata) -> Result<(), Error> {
    write_with_meta(&dir.join(format!("{stem}.csv")), &grid.to_csv(), meta)?;
    write_json(&dir.join(format!("{stem}.json")), grid)
}

fn train(
    config: &Path,
    seed: Option<u64>,
    episodes: Option<u64>,
    workers: usize,
    out: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> Result<(), Error> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.rl.seed = s;
    }
    if let Some(e) = episodes {
        cfg.rl.episodes = e;
    }
    cfg.validate()?;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let env = cfg.build_env::<f64>()?;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(&path)?;
            Trainer::from_state(env, cfg.rl.clone(), ckpt.state)?
        }
        None => Trainer::new(env, cfg.rl.clone())?,
    };
    trainer.set_workers(workers)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml_string())?;

    let every = cfg.rl.checkpoint_every;
    let mut next_ckpt = if every > 0 { (trainer.state().episode / every + 1) * every } else { u64::MAX };
    let mut next_log = 0;
    trainer.train(|t, report| {
        if report.episode >= next_log {
            eprintln!(
                "episode {:>8}  batch mean F {:.4}  sigma {:.4?}",
                report.episode,
                report.mean_fidelity,
                t.policy().sigma()
            );
            next_log = report.episode + (cfg.rl.episodes / 50).max(1);
        }
        if report.episode >= next_ckpt {
            Checkpoint::new(cfg.clone(), t.state().clone()).save(&dir.join(format!("checkpoint_{}.json", report.episode)))?;
            next_ckpt = (report.episode / every + 1) * every;
        }
        Ok(())
    })?;

    let state = trainer.state();
    Checkpoint::new(cfg.clone(), state.clone()).save(&dir.join("checkpoint.json"))?;
    let meta = Metadata::new("training_curve", &cfg, cfg.rl.seed).with_extra(json!({
        "episodes": state.episode,
        "updates": state.updates,
        "faults": state.faults,
        "bin_size": state.curve.bin_size,
    }));
    write_with_meta(&dir.join("training_curve.csv"), &state.curve.to_csv(), &meta)?;
    eprintln!("trained {} episodes ({} updates); outputs in {}", state.episode, state.updates, dir.display());
    Ok(())
}

fn landscape(
    checkpoint: &Path,
    grid: Option<&str>,
    workers: usize,
    out: Option<PathBuf>,
    periodic_phi: bool,
    open: bool,
) -> Result<(), Error> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cfg = ckpt.config;
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let spec = grid_spec(&cfg, grid)?;
    let env = cfg.build_env::<f64>()?;
    let policy = &ckpt.state.ac.policy;
    if policy.mean_net.input_dim() != env.obs_dim() {
        return Err(Error::Config("checkpoint network does not match its configured environment".into()));
    }
    let land = evaluate_landscape(&env, policy, &spec, workers)?;
    let seed = cfg.rl.seed;
    let spacing = json!({ "theta_step": spec.theta_step(), "phi_step": spec.phi_step(), "periodic_phi": periodic_phi });

    write_landscape(&dir, "landscape", &land, &Metadata::new("landscape", &cfg, seed).with_extra(json!({ "grid": spec })))?;

    let g = protocol_gradient(&land, periodic_phi)?;
    let mut csv = String::from("theta,phi,G\n");
    for (c, g) in land.cells.iter().zip(&g) {
        csv.push_str(&format!("{},{},{}\n", c.theta, c.phi, g));
    }
    write_with_meta(&dir.join("gradient.csv"), &csv, &Metadata::new("protocol_gradient", &cfg, seed).with_extra(spacing))?;

    let m = distance_matrix(&land)?;
    write_with_meta(&dir.join("distance_matrix.csv"), &distance_matrix_csv(&m), &Metadata::new("distance_matrix", &cfg, seed))?;
    write_json(&dir.join("distance_matrix.json"), &DistanceIndex::new(&land))?;

    let mut summary = json!({ "landscape": LandscapeSummary::new(&land) });
    if open {
        if cfg.env != EnvKind::NvClosed {
            return Err(Error::Config("--open needs a checkpoint trained on nv_closed".into()));
        }
        let mut params = cfg.nv_params();
        params.mode = NvMode::Open;
        let open_land = reevaluate_landscape(&land, params, workers)?;
        write_landscape(&dir, "landscape_open", &open_land, &Metadata::new("landscape_open", &cfg, seed))?;
        let drop: Vec<f64> = land.fidelities().iter().zip(open_land.fidelities()).map(|(a, b)| a - b).collect();
        summary["open"] = json!({
            "landscape": LandscapeSummary::new(&open_land),
            "mean_drop": drop.iter().sum::<f64>() / drop.len() as f64,
            "drop_time_pearson": pearson(&drop, &land.times()),
        });
    }
    write_json(&dir.join("landscape_summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn baseline(config: &Path, grid: Option<&str>, workers: usize, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.baseline.seed = s;
    }
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let spec = grid_spec(&cfg, grid)?;
    let env = cfg.build_env::<f64>()?;
    let (land, report) = grid_baseline(&env, &spec, &cfg.baseline, workers)?;
    let meta = Metadata::new("baseline_landscape", &cfg, cfg.baseline.seed).with_extra(json!({ "grid": spec }));
    write_landscape(&dir, "baseline", &land, &meta)?;
    let summary = json!({
        "landscape": LandscapeSummary::new(&land),
        "total_evaluations": report.total_evaluations,
        "total_iterations": report.total_iterations,
        "total_runs": report.total_runs,
    });
    write_json(&dir.join("baseline_report.json"), &json!({ "summary": summary, "per_cell_evaluations": report.evaluations }))?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn analyze(first: &Path, second: &Path, out: Option<PathBuf>) -> Result<(), Error> {
    let a = load_landscape(first)?;
    let b = load_landscape(second)?;
    let (sa, sb) = (LandscapeSummary::new(&a), LandscapeSummary::new(&b));
    let mut report = json!({
        "first": sa,
        "second": sb,
        "mean_fidelity_difference": sa.mean_fidelity - sb.mean_fidelity,
        "time_scatter_ratio": sb.time_scatter / sa.time_scatter,
    });
    let same_grid = a.len() == b.len() && a.cells.iter().zip(&b.cells).all(|(x, y)| x.theta == y.theta && x.phi == y.phi);
    if same_grid {
        let drop: Vec<f64> = a.fidelities().iter().zip(b.fidelities()).map(|(x, y)| x - y).collect();
        report["per_cell"] = json!({
            "mean_drop": drop.iter().sum::<f64>() / drop.len() as f64,
            "drop_time_pearson": pearson(&drop, &a.times()),
        });
    }
    let text = serde_json::to_string_pretty(&report).expect("json");
    if let Some(path) = out {
        bloch_control::persist::write_atomic(&path, text.as_bytes())?;
    }
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Train {
            config,
            seed,
            episodes,
            workers,
            out,
            resume,
        } => train(&config, seed, episodes, workers, out, resume).map(|_| true),
        Command::Landscape {
            checkpoint,
            grid,
            workers,
            out,
            periodic_phi,
            open,
        } => landscape(&checkpoint, grid.as_deref(), workers, out, periodic_phi, open).map(|_| true),
        Command::Baseline {
            config,
            grid,
            workers,
            seed,
            out,
        } => baseline(&config, grid.as_deref(), workers, seed, out).map(|_| true),
        Command::Analyze { first, second, out } => analyze(&first, &second, out).map(|_| true),
        Command::Verify => {
            let checks = verify::run_checks();
            for c in &checks {
                println!("{c}");
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Parse(_)
        | Error::VersionMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::NotHermitian { .. } => 1,
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
