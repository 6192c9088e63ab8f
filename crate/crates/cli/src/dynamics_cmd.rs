use std::path::Path;

use hardmax::export::{
    self, attention_json, pairs_csv, parse_trajectory_csv, rebuild_trajectory, scatter_svg, trajectory_csv,
    AttentionEntry, RunManifest,
};
use hardmax::{analyze as analyze_run, run, Error};

use crate::config::SimulationConfigFile;
use crate::error::{read_text, write_file, CliError, CliResult};

pub fn simulate(config: &Path, out: &Path) -> CliResult {
    let sim = SimulationConfigFile::parse(&read_text(config)?)?.resolve()?;
    let traj = run(&sim.tokens, &sim.spec, &sim.run)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::input(out.display(), e))?;

    write_file(&out.join(export::TRAJECTORY_CSV), trajectory_csv(&traj))?;
    write_file(&out.join(export::ATTENTION_JSON), attention_json(&traj)?)?;
    let manifest = RunManifest::new(&traj, sim.run, sim.seed);
    let manifest = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::input("run manifest", e))?;
    write_file(&out.join(export::RUN_JSON), manifest)?;
    if traj.initial.dim() == 2 {
        write_file(&out.join(export::SCATTER_SVG), scatter_svg(&traj)?)?;
    } else {
        write_file(&out.join(export::PAIRS_CSV), pairs_csv(&traj))?;
    }
    println!(
        "{} tokens, {} steps, {}",
        traj.initial.len(),
        traj.steps_taken,
        if traj.converged { "converged" } else { "not converged" }
    );
    Ok(())
}

pub fn analyze(dir: &Path, radius: f64) -> CliResult {
    let manifest: RunManifest = serde_json::from_str(&read_text(&dir.join(export::RUN_JSON))?)
        .map_err(|e| CliError::input(export::RUN_JSON, e))?;
    let configs = parse_trajectory_csv(&read_text(&dir.join(export::TRAJECTORY_CSV))?)?;
    let attention: Vec<AttentionEntry> = serde_json::from_str(&read_text(&dir.join(export::ATTENTION_JSON))?)
        .map_err(|e| CliError::input(export::ATTENTION_JSON, e))?;
    let traj = rebuild_trajectory(&manifest, &configs, &attention)?;
    if !traj.converged {
        return Err(Error::NotConverged.into());
    }
    let report = analyze_run(&traj, radius)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::input("report", e))?;
    write_file(&dir.join("report.json"), json)?;

    for l in &report.leaders {
        println!("leader {} detected at step {} -> {:?}", l.token_index, l.detected_at_step, l.limit_point.coords());
    }
    println!("{} clusters, verdicts {:?}", report.clusters.len(), report.verdicts);
    if report.verdicts.all() {
        Ok(())
    } else {
        Err(CliError::Verdict)
    }
}
