//! Serialisable metrics report, run aggregation and markdown tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CorefScores, LinkingScores, PRF};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterScore {
    pub label: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Spread of each metric across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpread {
    pub runs: usize,
    /// Set when only one run was given; every std is then reported as 0.
    pub single_run: bool,
    pub values: BTreeMap<String, f64>,
}

/// Scores in [0, 1]. A task that was not run has `None` for its fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub b3: Option<PRF>,
    pub ceaf_phi4: Option<PRF>,
    pub blanc: Option<PRF>,
    pub coref_avg_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub per_character: Vec<CharacterScore>,
    pub mean: Option<BTreeMap<String, f64>>,
    pub std: Option<RunSpread>,
}

impl MetricsReport {
    pub fn new(coref: Option<&CorefScores>, linking: Option<(&LinkingScores, &[String])>) -> Self {
        let per_character = linking
            .map(|(s, labels)| {
                s.per_class
                    .iter()
                    .zip(&s.support)
                    .enumerate()
                    .filter(|(_, (_, &support))| support > 0)
                    .map(|(i, (prf, &support))| CharacterScore {
                        label: labels.get(i).cloned().unwrap_or_else(|| i.to_string()),
                        support,
                        precision: prf.precision,
                        recall: prf.recall,
                        f1: prf.f1,
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            b3: coref.map(|c| c.b3),
            ceaf_phi4: coref.map(|c| c.ceaf),
            blanc: coref.map(|c| c.blanc),
            coref_avg_f1: coref.map(|c| c.avg_f1),
            micro_f1: linking.map(|(s, _)| s.micro_f1),
            macro_f1: linking.map(|(s, _)| s.macro_f1),
            per_character,
            mean: None,
            std: None,
        }
    }

    pub fn has_coref(&self) -> bool {
        self.coref_avg_f1.is_some()
    }

    pub fn has_linking(&self) -> bool {
        self.micro_f1.is_some()
    }

    /// Model-selection metric: mean of the coreference average F1 and the
    /// linking micro F1 over whichever tasks are present.
    pub fn selection_score(&self) -> f64 {
        let vals: Vec<f64> = [self.coref_avg_f1, self.micro_f1].into_iter().flatten().collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Every scalar metric under a dotted key.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, prf) in [("b3", self.b3), ("ceaf_phi4", self.ceaf_phi4), ("blanc", self.blanc)] {
            if let Some(p) = prf {
                out.insert(format!("{name}.precision"), p.precision);
                out.insert(format!("{name}.recall"), p.recall);
                out.insert(format!("{name}.f1"), p.f1);
            }
        }
        for (name, v) in [
            ("coref_avg_f1", self.coref_avg_f1),
            ("micro_f1", self.micro_f1),
            ("macro_f1", self.macro_f1),
        ] {
            if let Some(v) = v {
                out.insert(name.to_string(), v);
            }
        }
        for c in &self.per_character {
            out.insert(format!("per_character.{}.precision", c.label), c.precision);
            out.insert(format!("per_character.{}.recall", c.label), c.recall);
            out.insert(format!("per_character.{}.f1", c.label), c.f1);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    // identical runs must aggregate to themselves, free of rounding
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation of every metric. Precision, recall
/// and F1 are averaged independently; the coreference average F1 is
/// recomputed from the mean F1s.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    let flats: Vec<BTreeMap<String, f64>> = reports.iter().map(MetricsReport::flat).collect();
    let keys: Vec<&String> = flats[0].keys().collect();
    for (i, f) in flats.iter().enumerate().skip(1) {
        if f.keys().collect::<Vec<_>>() != keys {
            return Err(Error::InvalidArgument(format!(
                "report {i} has different metric keys from report 0"
            )));
        }
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for k in keys {
        let vals: Vec<f64> = flats.iter().map(|f| f[k]).collect();
        let (m, s) = mean_std(&vals);
        mean.insert(k.clone(), m);
        std.insert(k.clone(), s);
    }
    let prf = |name: &str, present: bool| {
        present.then(|| PRF {
            precision: mean[&format!("{name}.precision")],
            recall: mean[&format!("{name}.recall")],
            f1: mean[&format!("{name}.f1")],
        })
    };
    let b3 = prf("b3", first.b3.is_some());
    let ceaf = prf("ceaf_phi4", first.ceaf_phi4.is_some());
    let blanc = prf("blanc", first.blanc.is_some());
    let coref_avg_f1 = match (b3, ceaf, blanc) {
        (Some(a), Some(b), Some(c)) => Some((a.f1 + b.f1 + c.f1) / 3.0),
        _ => None,
    };
    if let Some(avg) = coref_avg_f1 {
        mean.insert("coref_avg_f1".into(), avg);
        // spread of the per-run averages
        let runs: Vec<f64> = reports.iter().filter_map(|r| r.coref_avg_f1).collect();
        std.insert("coref_avg_f1".into(), mean_std(&runs).1);
    }
    let per_character = first
        .per_character
        .iter()
        .map(|c| {
            let key = |f: &str| format!("per_character.{}.{f}", c.label);
            CharacterScore {
                label: c.label.clone(),
                support: c.support,
                precision: mean[&key("precision")],
                recall: mean[&key("recall")],
                f1: mean[&key("f1")],
            }
        })
        .collect();
    Ok(MetricsReport {
        b3,
        ceaf_phi4: ceaf,
        blanc,
        coref_avg_f1,
        micro_f1: mean.get("micro_f1").copied(),
        macro_f1: mean.get("macro_f1").copied(),
        per_character,
        std: Some(RunSpread {
            runs: reports.len(),
            single_run: reports.len() == 1,
            values: std,
        }),
        mean: Some(mean),
    })
}

fn pct(v: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, v * 100.0)
}

fn with_std(report: &MetricsReport, key: &str, value: f64, decimals: usize) -> String {
    match report.std.as_ref().and_then(|s| s.values.get(key)) {
        Some(s) => format!("{} ({})", pct(value, decimals), pct(*s, decimals)),
        None => pct(value, decimals),
    }
}

/// Coreference table: B³, CEAF φ4 and BLANC precision/recall/F1 plus the
/// average F1, two decimals.
pub fn coref_table(rows: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::new();
    s.push_str("| Model | B3 Prec. | B3 Rec. | B3 F1 | CEAF Prec. | CEAF Rec. | CEAF F1 | BLANC Prec. | BLANC Rec. | BLANC F1 | Ave.F1 |\n");
    s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for (name, r) in rows {
        let _ = write!(s, "| {name} ");
        for prf in [r.b3, r.ceaf_phi4, r.blanc] {
            match prf {
                Some(p) => {
                    let _ = write!(s, "| {} | {} | {} ", pct(p.precision, 2), pct(p.recall, 2), pct(p.f1, 2));
                }
                None => s.push_str("| - | - | - "),
            }
        }
        match r.coref_avg_f1 {
            Some(v) => {
                let _ = writeln!(s, "| {} |", with_std(r, "coref_avg_f1", v, 2));
            }
            None => s.push_str("| - |\n"),
        }
    }
    s
}

/// Linking table: per-character F1 for the given labels, then micro and
/// macro F1, one decimal.
pub fn linking_table(rows: &[(&str, &MetricsReport)], characters: &[String]) -> String {
    let mut s = String::from("| Model |");
    for c in characters {
        let _ = write!(s, " {c} |");
    }
    s.push_str(" Micro | Macro |\n|---|");
    s.push_str(&"---|".repeat(characters.len() + 2));
    s.push('\n');
    for (name, r) in rows {
        let _ = write!(s, "| {name} |");
        for c in characters {
            match r.per_character.iter().find(|p| &p.label == c) {
                Some(p) => {
                    let _ = write!(s, " {} |", pct(p.f1, 1));
                }
                None => s.push_str(" - |"),
            }
        }
        for key in ["micro_f1", "macro_f1"] {
            let v = if key == "micro_f1" { r.micro_f1 } else { r.macro_f1 };
            match v {
                Some(v) => {
                    let _ = write!(s, " {} |", with_std(r, key, v, 1));
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{linking_f1, CorefCounts};
    use crate::corpus::Clustering;

    fn report() -> MetricsReport {
        let mut c = CorefCounts::default();
        let g = Clustering::new(4, vec![vec![0, 1, 2], vec![3]]).unwrap();
        let p = Clustering::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        c.add_document(&g, &p).unwrap();
        let l = linking_f1(&[0, 0, 1, 1], &[0, 1, 1, 1], 3).unwrap();
        let labels = vec!["Ann".to_string(), "Bo".to_string(), "#OTHER#".to_string()];
        MetricsReport::new(Some(&c.scores()), Some((&l, &labels)))
    }

    #[test]
    fn json_has_exact_keys() {
        let v: serde_json::Value = serde_json::from_str(&report().to_json().unwrap()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec![
            "b3", "ceaf_phi4", "blanc", "coref_avg_f1", "micro_f1", "macro_f1", "per_character", "mean", "std",
        ];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn average_is_mean_of_three() {
        let r = report();
        let avg = (r.b3.unwrap().f1 + r.ceaf_phi4.unwrap().f1 + r.blanc.unwrap().f1) / 3.0;
        assert_eq!(r.coref_avg_f1, Some(avg));
        assert_eq!(r.per_character.len(), 2);
    }

    #[test]
    fn aggregation() {
        let r = report();
        let agg = aggregate_runs(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert!(agg.std.as_ref().unwrap().values.values().all(|&s| s == 0.0));
        assert_eq!(agg.micro_f1, r.micro_f1);

        let mut runs = vec![r.clone(), r.clone(), r.clone()];
        for (run, v) in runs.iter_mut().zip([0.80, 0.82, 0.84]) {
            run.micro_f1 = Some(v);
        }
        let agg = aggregate_runs(&runs).unwrap();
        assert!((agg.micro_f1.unwrap() - 0.82).abs() < 1e-12);
        assert!((agg.std.as_ref().unwrap().values["micro_f1"] - 0.02).abs() < 1e-12);

        let single = aggregate_runs(std::slice::from_ref(&r)).unwrap();
        let spread = single.std.unwrap();
        assert!(spread.single_run);
        assert!(spread.values.values().all(|&s| s == 0.0));

        let mut missing = r.clone();
        missing.micro_f1 = None;
        assert!(aggregate_runs(&[r, missing]).is_err());
        assert!(aggregate_runs(&[]).is_err());
    }

    #[test]
    fn tables_render() {
        let r = report();
        let t = coref_table(&[("joint", &r)]);
        assert!(t.contains("| joint | 75.00 | 66.67 | 70.59 "));
        let mut coref_only = r.clone();
        coref_only.micro_f1 = None;
        coref_only.macro_f1 = None;
        let l = linking_table(&[("x", &r), ("y", &coref_only)], &["Ann".into(), "Bo".into()]);
        assert!(l.contains("| x | 66.7 | 80.0 | 75.0 | 73.3 |"));
        assert!(l.contains("| y | 66.7 | 80.0 | - | - |"));
    }
}
