use serde::{Deserialize, Serialize};

use crate::corpus::{derive_gold_clusters, SceneDocument};
use crate::decode::{ConsistencyReport, PredictionDump};
use crate::error::Result;
use crate::metrics::{CorefCounts, LinkingCounts, MetricsReport};
use crate::model::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub predictions: Vec<PredictionDump>,
    pub consistency: ConsistencyReport,
}

/// Decodes every document and scores the tasks the predictor handles.
pub fn evaluate(predictor: &dyn Predictor, docs: &[SceneDocument]) -> Result<Evaluation> {
    let task = predictor.task();
    let chars = predictor.characters();
    let mut coref = CorefCounts::default();
    let mut linking = LinkingCounts::new(chars.len());
    let mut predictions = Vec::with_capacity(docs.len());
    for doc in docs {
        let bundle = predictor.predict(doc)?;
        if task.coref() {
            coref.add_document(&derive_gold_clusters(doc)?, &bundle.clusters)?;
        }
        if task.linking() {
            linking.add_document(&chars.gold_classes(doc)?, &bundle.labels)?;
        }
        predictions.push(PredictionDump::new(&bundle, chars.labels()));
    }
    let coref_scores = task.coref().then(|| coref.scores());
    let link_scores = task.linking().then(|| linking.scores());
    let report = MetricsReport::new(
        coref_scores.as_ref(),
        link_scores.as_ref().map(|s| (s, chars.labels())),
    );
    let consistency = ConsistencyReport::merge(predictions.iter().map(|p| &p.consistency));
    Ok(Evaluation {
        report,
        predictions,
        consistency,
    })
}

/// Fraction of mentions whose gold class is 0, the training-majority class.
pub fn majority_class_rate(predictor: &dyn Predictor, docs: &[SceneDocument]) -> Result<f64> {
    let mut total = 0usize;
    let mut zero = 0usize;
    for doc in docs {
        let classes = predictor.characters().gold_classes(doc)?;
        total += classes.len();
        zero += classes.iter().filter(|&&c| c == 0).count();
    }
    Ok(if total == 0 { 0.0 } else { zero as f64 / total as f64 })
}
