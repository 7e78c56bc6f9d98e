use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::Parser;
use sff_lab::commands::log;
use sff_lab::{config, execute, Command, RunOptions};

static CANCEL: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    CANCEL.store(true, Ordering::SeqCst);
}

#[derive(Debug, Parser)]
#[command(name = "sff-lab", version, about = "Spectral form factor experiments: exact curves, simulated QND measurements, RMT baselines, Rydberg couplings")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    /// Override plan.master_seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    // SAFETY: the handler only stores to an atomic.
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as *const () as libc::sighandler_t);
    }
    if args.workers == Some(0) {
        log("--workers must be at least 1");
        return ExitCode::from(2);
    }
    let run = || {
        let cfg = config::load(&args.config)?;
        let opts = RunOptions { out_dir: args.out_dir.clone(), workers: args.workers, seed: args.seed, cancel: Some(&CANCEL) };
        execute(args.command, cfg, &opts)
    };
    match run() {
        Ok(m) => {
            log(&format!("wrote {} files to {}", m.files.len() + 1, args.out_dir.display()));
            ExitCode::SUCCESS
        }
        Err(e) => {
            log(&e.to_string());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
