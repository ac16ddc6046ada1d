use std::path::Path;

use fastquery::costmodel::{method_report_with, Dims, Presets};
use fastquery::io::write_json;

use super::write_text;
use crate::config::CostParams;
use crate::error::CliError;

pub fn run(p: &CostParams, out: &Path) -> Result<(), CliError> {
    let presets = match &p.presets {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Presets::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => Presets::shipped(),
    };
    let report = method_report_with(&presets, Dims { m: p.m, n: p.n }, p.accounting.unwrap_or(presets.accounting));
    write_json(&out.join("cost.json"), &report)?;
    write_text(&out.join("cost.csv"), &report.to_csv())?;
    log::info!("final method is {:.1}x below the baseline", report.final_over_baseline);
    Ok(())
}
