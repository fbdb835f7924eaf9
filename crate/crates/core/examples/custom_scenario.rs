//! Runs the effective and germ stages on a scenario given as JSON and writes
//! the report files to a temporary directory.

use homog::pipeline::{run_pipeline, RunOptions, Stage};
use homog::report::{summary_markdown, write_outputs};
use homog::scenario::Scenario;

const CONFIG: &str = r#"{
    "name": "layered",
    "lattice": [[6.283185307179586, 0.0], [0.0, 6.283185307179586]],
    "symbol": "gradient",
    "g": {"fourier": [
        {"index": [0, 0], "re": [[2.0, 0.0], [0.0, 1.5]]},
        {"index": [1, 0], "re": [[0.5, 0.0], [0.0, 0.25]]},
        {"index": [-1, 0], "re": [[0.5, 0.0], [0.0, 0.25]]}
    ]},
    "cutoff": 6,
    "theta_count": 24
}"#;

fn main() -> homog::Result<()> {
    let sc = Scenario::from_json(CONFIG)?;
    let report = run_pipeline(Some(&sc), &RunOptions::for_stage(Stage::Germ))?;
    let dir = std::env::temp_dir().join("homog-custom-scenario");
    write_outputs(&report, &dir)?;
    print!("{}", summary_markdown(&report));
    println!("wrote {}", dir.display());
    Ok(())
}
