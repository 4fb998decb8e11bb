// Drives the command-line interface in-process: writes a run config,
// trains with an override, checks the prox, and reports on the checkpoint.

use std::error::Error;

use sparseprox::cli::{run, CHECKPOINT_FILE, REPORT_FILE, TRACE_FILE};

const CONFIG: &str = r#"{
  "train": {
    "lambda": 1e-3,
    "learning_rate": 0.05,
    "batch_size": 8,
    "max_iterations": 600,
    "regularizer_mode": "integrated_tl1",
    "seed": 4
  },
  "architecture": {
    "input": {"features": 12},
    "layers": [{"type": "dense", "units": 16}]
  },
  "dataset": {"kind": "synthetic", "n": 300, "informative": 4, "noise": 8, "classes": 3, "seed": 9},
  "split": 0.8,
  "output_dir": "run"
}"#;

fn sparseprox(args: &[&str]) -> Result<String, Box<dyn Error>> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("sparseprox").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)).into());
    }
    Ok(String::from_utf8(out)?)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let dir = std::env::temp_dir().join(format!("sparseprox-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("run.json");
    std::fs::write(&config, CONFIG)?;
    let config = config.to_str().ok_or("non-UTF-8 temp path")?;

    print!("{}", sparseprox(&["train", config])?);
    print!("{}", sparseprox(&["train", config, "--override", "lambda=1e-2"])?);
    let swept = dir.join("run_lambda_1e-2");
    for file in [CHECKPOINT_FILE, TRACE_FILE, REPORT_FILE] {
        if !swept.join(file).is_file() {
            return Err(format!("missing {file} in {}", swept.display()).into());
        }
    }

    print!("{}", sparseprox(&["prox-check", "--samples", "100"])?);
    let checkpoint = swept.join(CHECKPOINT_FILE);
    print!(
        "{}",
        sparseprox(&[
            "report",
            checkpoint.to_str().ok_or("non-UTF-8 temp path")?,
            "--config",
            config
        ])?
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("cli_workflow: {e}");
        std::process::exit(1);
    }
}
