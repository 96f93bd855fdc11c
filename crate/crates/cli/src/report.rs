//! `report.json` and `report.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::pipeline::PipelineReport;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Report document. Object keys are sorted, and nothing depends on wall
/// time, so equal inputs give byte-identical output.
pub fn report_json(config: &RunConfig, report: &PipelineReport) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": { "name": "hypogeo", "version": env!("CARGO_PKG_VERSION") },
        "config": config,
        "verbs": report.verbs,
        "sections": report.sections,
        "files": report.files,
        "error": report.error,
        "pass": report.pass,
        "exit_code": report.exit_code(),
    })
}

pub fn report_markdown(config: &RunConfig, report: &PipelineReport) -> String {
    let mut md = String::new();
    writeln!(md, "# hypogeo report\n").unwrap();
    writeln!(md, "- frame: `{}`", config.frame).unwrap();
    writeln!(md, "- system: `{}`", config.system.file.as_ref().map_or(config.system.preset.clone(), |p| p.display().to_string())).unwrap();
    writeln!(md, "- seed: {}", config.seed).unwrap();
    writeln!(md, "- overall: **{}**\n", if report.pass { "PASS" } else { "FAIL" }).unwrap();
    writeln!(md, "| verb | result | summary |").unwrap();
    writeln!(md, "|---|---|---|").unwrap();
    for verb in &report.verbs {
        match report.sections.get(verb.name()) {
            Some(s) => writeln!(md, "| {} | {} | {} |", verb.name(), if s.pass { "PASS" } else { "FAIL" }, s.summary).unwrap(),
            None => writeln!(md, "| {} | not run | |", verb.name()).unwrap(),
        }
    }
    if let Some(e) = &report.error {
        writeln!(md, "\nSolver failure: {e}").unwrap();
    }
    if !report.files.is_empty() {
        writeln!(md, "\nFiles: {}", report.files.join(", ")).unwrap();
    }
    md
}

pub fn write_reports(dir: &Path, config: &RunConfig, report: &PipelineReport) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Config(format!("cannot write report: {e}"));
    let mut text = serde_json::to_string_pretty(&report_json(config, report)).expect("report serializes");
    text.push('\n');
    fs::write(dir.join("report.json"), text).map_err(io)?;
    fs::write(dir.join("report.md"), report_markdown(config, report)).map_err(io)?;
    Ok(())
}
