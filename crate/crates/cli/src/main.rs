//! Experiment runner: `defectlab run <config.toml>`, `defectlab validate
//! <config.toml>`, `defectlab plot <manifest.json> [names...]`.
//!
//! Exit codes: 0 success, 2 validation/parse error, 3 stage failure.

mod config;
mod defect_io;
mod outputs;
mod plot;
mod runner;

use std::path::Path;
use std::process::ExitCode;

fn usage() -> ExitCode {
    eprintln!(
        "usage:\n  defectlab validate <config.toml>\n  defectlab run <config.toml>\n  defectlab plot <manifest.json> [plot names...]"
    );
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        return usage();
    }
    match args[0].as_str() {
        "validate" => {
            let path = Path::new(&args[1]);
            match config::load_config(path) {
                Ok(_) => {
                    println!("ok: {}", path.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("validation error: {e:#}");
                    ExitCode::from(2)
                }
            }
        }
        "run" => {
            let path = Path::new(&args[1]);
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("validation error: cannot read {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            };
            let cfg = match config::load_config(path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("validation error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let dir = Path::new(&cfg.output_dir).to_path_buf();
            match runner::run_experiment(&cfg, &text, &dir) {
                Ok(manifest) => {
                    for st in &manifest.stages {
                        println!(
                            "stage {}: {} ({:.1}s)",
                            st.name,
                            if st.passed { "ok" } else { "FAILED" },
                            st.wall_seconds
                        );
                    }
                    println!("manifest: {}", dir.join("manifest.json").display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("stage failure: {e:#}");
                    ExitCode::from(3)
                }
            }
        }
        "plot" => {
            let path = Path::new(&args[1]);
            let which: Vec<String> = args[2..].to_vec();
            match plot::emit_plots(path, &which) {
                Ok(files) => {
                    for f in files {
                        println!("wrote {f}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("plot error: {e:#}");
                    ExitCode::from(3)
                }
            }
        }
        _ => usage(),
    }
}
