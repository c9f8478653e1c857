use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::train::train_and_evaluate;
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, MetricsReport};
use crate::model::TaskMode;

/// Per-seed reports and their aggregate for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRuns {
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    pub aggregate: MetricsReport,
}

/// Trains one model per seed in `config.seeds` and scores each on `split`.
pub fn run_seeds(config: &ExperimentConfig, corpus: &Corpus, split: Split) -> Result<SeedRuns> {
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let mut cfg = config.clone();
        cfg.seed = seed;
        log::info!("training seed {seed}");
        runs.push(train_and_evaluate(&cfg, corpus, split)?.0);
    }
    Ok(SeedRuns {
        seeds: config.seeds.clone(),
        aggregate: aggregate_runs(&runs)?,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub task: TaskMode,
    pub layers: usize,
    pub result: SeedRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split: Split,
    pub rows: Vec<AblationRow>,
}

/// Published full-scale reference values: coreference B³, CEAF φ4 and
/// BLANC F1, linking micro and macro F1, and the coreference average.
pub const REFERENCE_FULL_MODEL: [f64; 5] = [85.54, 77.48, 92.17, 87.05, 81.09];
pub const REFERENCE_COREF_AVG_F1: f64 = 85.06;

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Coreference F1 triple and linking micro/macro F1 per variant, with
    /// "-" for a task the variant does not train.
    pub fn to_markdown(&self) -> String {
        let r = REFERENCE_FULL_MODEL;
        let mut s = format!(
            "Reference targets for the full model at full scale (not reproducible at desk scale): \
             B3 {:.2}, CEAF {:.2}, BLANC {:.2}, coref avg F1 {REFERENCE_COREF_AVG_F1:.2}, micro {:.2}, macro {:.2}.\n\n",
            r[0], r[1], r[2], r[3], r[4]
        );
        let _ = writeln!(s, "Split: {}, seeds: {:?}\n", self.split, self.rows.first().map(|r| &r.result.seeds));
        s.push_str("| Model | B3 | CEAF | BLANC | Micro | Macro |\n|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let a = &row.result.aggregate;
            let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", v * 100.0));
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                row.name,
                cell(a.b3.map(|p| p.f1)),
                cell(a.ceaf_phi4.map(|p| p.f1)),
                cell(a.blanc.map(|p| p.f1)),
                cell(a.micro_f1),
                cell(a.macro_f1),
            );
        }
        s
    }
}

/// Full model, without mention self-attention, without linking and
/// without coreference, all on the same seeds and data.
pub fn run_ablations(config: &ExperimentConfig, corpus: &Corpus, split: Split) -> Result<AblationReport> {
    let variants: [(&str, TaskMode, Option<usize>); 4] = [
        ("full", TaskMode::Joint, None),
        ("-MLSA", TaskMode::Joint, Some(0)),
        ("-Linking", TaskMode::CorefOnly, None),
        ("-Coref", TaskMode::LinkOnly, None),
    ];
    let mut rows = Vec::new();
    for (name, task, layers) in variants {
        let mut cfg = config.clone();
        cfg.task = task;
        if let Some(n) = layers {
            cfg.mlsa.layers = n;
        }
        log::info!("ablation variant {name}");
        rows.push(AblationRow {
            name: name.to_string(),
            task,
            layers: cfg.mlsa.layers,
            result: run_seeds(&cfg, corpus, split)?,
        });
    }
    Ok(AblationReport { split, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub layers: usize,
    pub result: SeedRuns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub split: Split,
    pub rows: Vec<SweepRow>,
}

const SWEEP_SERIES: [&str; 5] = ["B3", "CEAF", "BLANC", "Micro", "Macro"];

impl SweepReport {
    fn series(row: &SweepRow) -> [Option<f64>; 5] {
        let a = &row.result.aggregate;
        [
            a.b3.map(|p| p.f1),
            a.ceaf_phi4.map(|p| p.f1),
            a.blanc.map(|p| p.f1),
            a.micro_f1,
            a.macro_f1,
        ]
    }

    /// One line per layer count with mean F1 (percent) of every metric.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layers,b3_f1,ceaf_phi4_f1,blanc_f1,micro_f1,macro_f1\n");
        for row in &self.rows {
            let cells: Vec<String> = Self::series(row)
                .iter()
                .map(|v| v.map_or(String::new(), |v| format!("{:.4}", v * 100.0)))
                .collect();
            let _ = writeln!(s, "{},{}", row.layers, cells.join(","));
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Layers | B3 | CEAF | BLANC | Micro | Macro |\n|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let cells: Vec<String> = Self::series(row)
                .iter()
                .map(|v| v.map_or("-".into(), |v| format!("{:.2}", v * 100.0)))
                .collect();
            let _ = writeln!(s, "| {} | {} |", row.layers, cells.join(" | "));
        }
        s
    }

    /// Line chart of every metric against the layer count.
    pub fn to_svg(&self) -> String {
        let (w, h, pad) = (640.0, 400.0, 50.0);
        let colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];
        let values: Vec<f64> = self.rows.iter().flat_map(|r| Self::series(r).into_iter().flatten()).collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0) * 100.0;
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0) * 100.0;
        let (lo, hi) = if hi - lo < 1e-9 { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
        let max_layer = self.rows.iter().map(|r| r.layers).max().unwrap_or(0).max(1) as f64;
        let x = |l: usize| pad + (w - 2.0 * pad) * l as f64 / max_layer;
        let y = |v: f64| h - pad - (h - 2.0 * pad) * (v * 100.0 - lo) / (hi - lo);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <text x=\"{cx}\" y=\"{ty}\" text-anchor=\"middle\">MLSA layers</text>\n\
             <text x=\"{pad}\" y=\"{lab}\" text-anchor=\"end\">{hi:.1}</text>\n\
             <text x=\"{pad}\" y=\"{b}\" text-anchor=\"end\">{lo:.1}</text>\n",
            b = h - pad,
            r = w - pad,
            cx = w / 2.0,
            ty = h - 10.0,
            lab = pad - 5.0,
        );
        for row in &self.rows {
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                x(row.layers),
                h - pad + 15.0,
                row.layers
            );
        }
        for (k, name) in SWEEP_SERIES.iter().enumerate() {
            let pts: Vec<String> = self
                .rows
                .iter()
                .filter_map(|r| Self::series(r)[k].map(|v| format!("{:.1},{:.1}", x(r.layers), y(v))))
                .collect();
            if pts.is_empty() {
                continue;
            }
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
                colors[k],
                pts.join(" ")
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{name}</text>",
                w - pad + 5.0,
                pad + 15.0 * k as f64,
                colors[k]
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// One multi-seed run per requested MLSA depth.
pub fn run_layer_sweep(config: &ExperimentConfig, corpus: &Corpus, layers: &[usize], split: Split) -> Result<SweepReport> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("no layer counts given".into()));
    }
    let mut rows = Vec::new();
    for &n in layers {
        let mut cfg = config.clone();
        cfg.mlsa.layers = n;
        log::info!("sweep: {n} MLSA layers");
        rows.push(SweepRow {
            layers: n,
            result: run_seeds(&cfg, corpus, split)?,
        });
    }
    Ok(SweepReport { split, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthSpec};

    fn tiny() -> (ExperimentConfig, Corpus) {
        let mut cfg = ExperimentConfig::toy();
        cfg.encoder.dim = 8;
        cfg.encoder.heads = 2;
        cfg.mlsa.heads = 2;
        cfg.heads.hidden_width = 8;
        cfg.training.max_epochs = 2;
        cfg.seeds = vec![0, 1];
        let spec = SynthSpec {
            scenes: 6,
            utterances_per_scene: 4,
            ..SynthSpec::default()
        };
        (cfg, generate_synthetic_corpus(&spec, 0).unwrap())
    }

    #[test]
    fn ablation_rows_and_dashes() {
        let (cfg, corpus) = tiny();
        let rep = run_ablations(&cfg, &corpus, Split::Dev).unwrap();
        assert_eq!(rep.rows.len(), 4);
        let no_link = &rep.row("-Linking").unwrap().result.aggregate;
        assert!(no_link.micro_f1.is_none() && no_link.b3.is_some());
        let no_coref = &rep.row("-Coref").unwrap().result.aggregate;
        assert!(no_coref.b3.is_none() && no_coref.micro_f1.is_some());
        let md = rep.to_markdown();
        assert!(md.contains("85.06"));
        assert!(md.lines().any(|l| l.starts_with("| -Linking |") && l.ends_with("| - | - |")));
    }

    #[test]
    fn sweep_zero_row_equals_no_mlsa_ablation() {
        let (cfg, corpus) = tiny();
        let sweep = run_layer_sweep(&cfg, &corpus, &[0, 1], Split::Dev).unwrap();
        assert_eq!(sweep.rows.len(), 2);
        let abl = run_ablations(&cfg, &corpus, Split::Dev).unwrap();
        assert_eq!(sweep.rows[0].result, abl.row("-MLSA").unwrap().result);
        assert_eq!(sweep.to_csv().lines().count(), 3);
        assert!(sweep.to_svg().contains("<polyline"));
        assert!(run_layer_sweep(&cfg, &corpus, &[], Split::Dev).is_err());
    }
}
