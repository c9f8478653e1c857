use std::fs;
use std::path::Path;

use serde::Serialize;

use super::evaluate::Evaluation;
use crate::error::{Error, Result};
use crate::metrics::{coref_table, linking_table};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `metrics.json`, `consistency.json`, one prediction file per
/// document under `predictions/`, and the two markdown tables.
pub fn write_evaluation(dir: &Path, model_name: &str, eval: &Evaluation) -> Result<()> {
    let pred_dir = dir.join("predictions");
    fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    write_json(&dir.join("metrics.json"), &eval.report)?;
    write_json(&dir.join("consistency.json"), &eval.consistency)?;
    for p in &eval.predictions {
        write_json(&pred_dir.join(format!("{}.json", p.scene_id)), p)?;
    }
    let rows = [(model_name, &eval.report)];
    if eval.report.has_coref() {
        write_text(&dir.join("coref.md"), &coref_table(&rows))?;
    }
    if eval.report.has_linking() {
        let chars: Vec<String> = eval.report.per_character.iter().map(|c| c.label.clone()).collect();
        write_text(&dir.join("linking.md"), &linking_table(&rows, &chars))?;
    }
    Ok(())
}
