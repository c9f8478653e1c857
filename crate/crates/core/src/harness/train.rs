use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::evaluate::evaluate;
use super::optim::{learning_rate, Adam};
use crate::autograd::{Gradients, Tape};
use crate::corpus::{Corpus, SceneDocument, Split};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::JointModel;
use crate::nn::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub learning_rate: f64,
    /// Summed training loss over the epoch under the task mode.
    pub loss: f64,
    pub coref_loss: Option<f64>,
    pub linking_loss: Option<f64>,
    pub selection_score: f64,
    pub coref_avg_f1: Option<f64>,
    pub micro_f1: Option<f64>,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub step: usize,
    pub total_steps: usize,
    pub best_score: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_since_best: usize,
    pub stopped: bool,
    pub rng: ChaCha8Rng,
    pub log: Vec<EpochLog>,
}

/// Everything needed to resume training exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub model: JointModel,
    pub optimizer: Adam,
    pub state: TrainState,
    /// Parameters at the best selection score so far.
    pub best_params: Option<ParamStore>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
            file: path.display().to_string(),
            record: format!("line {}", e.line()),
            message: e.to_string(),
        })?;
        ck.model.after_load()?;
        Ok(ck)
    }

    /// The model with its best-selection parameters installed.
    pub fn best_model(&self) -> JointModel {
        let mut model = self.model.clone();
        if let Some(best) = &self.best_params {
            model.store = best.clone();
        }
        model
    }
}

pub struct Trainer {
    pub config: ExperimentConfig,
    pub model: JointModel,
    pub optimizer: Adam,
    pub state: TrainState,
    pub best_params: Option<ParamStore>,
    train_docs: Vec<SceneDocument>,
    selection_docs: Vec<SceneDocument>,
    base_lr: f64,
}

fn split_docs(corpus: &Corpus, split: Split) -> Result<Vec<SceneDocument>> {
    corpus
        .get(&split)
        .cloned()
        .ok_or_else(|| Error::MissingSplit(split.to_string()))
}

impl Trainer {
    pub fn new(config: ExperimentConfig, corpus: &Corpus) -> Result<Self> {
        config.validate()?;
        let train_docs = split_docs(corpus, Split::Train)?;
        if train_docs.iter().all(|d| d.num_mentions() == 0) {
            return Err(Error::EmptyTraining);
        }
        let selection_docs = split_docs(corpus, config.training.selection_split)?;
        let model = JointModel::new(
            &config.encoder,
            &config.mlsa,
            &config.heads,
            config.task,
            &train_docs,
            config.inventory.min_mentions,
            config.seed,
            config.training.zero_init,
        )?;
        let optimizer = Adam::new(&model.store, &config.optimizer);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let state = TrainState {
            epoch: 0,
            step: 0,
            total_steps: config.training.max_epochs * train_docs.len(),
            best_score: None,
            best_epoch: None,
            epochs_since_best: 0,
            stopped: false,
            rng,
            log: Vec::new(),
        };
        let base_lr = config.optimizer.effective_learning_rate(config.encoder.kind);
        Ok(Self {
            config,
            model,
            optimizer,
            state,
            best_params: None,
            train_docs,
            selection_docs,
            base_lr,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, corpus: &Corpus) -> Result<Self> {
        let train_docs = split_docs(corpus, Split::Train)?;
        let selection_docs = split_docs(corpus, ck.config.training.selection_split)?;
        let base_lr = ck.config.optimizer.effective_learning_rate(ck.config.encoder.kind);
        Ok(Self {
            config: ck.config,
            model: ck.model,
            optimizer: ck.optimizer,
            state: ck.state,
            best_params: ck.best_params,
            train_docs,
            selection_docs,
            base_lr,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            model: self.model.clone(),
            optimizer: self.optimizer.clone(),
            state: self.state.clone(),
            best_params: self.best_params.clone(),
        }
    }

    pub fn finished(&self) -> bool {
        self.state.stopped || self.state.epoch >= self.config.training.max_epochs
    }

    /// One pass over the shuffled training documents, one optimiser step per
    /// document, followed by scoring the selection split.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let epoch = self.state.epoch;
        let mut order: Vec<usize> = (0..self.train_docs.len()).collect();
        order.shuffle(&mut self.state.rng);
        let normalize = self.config.loss.normalize;
        let (mut loss_sum, mut coref_sum, mut link_sum) = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        let mut steps = 0;
        for &i in &order {
            let doc = &self.train_docs[i];
            if doc.num_mentions() == 0 {
                continue;
            }
            let mut grads = Gradients::zeros_like(&self.model.store);
            let (value, coref, linking) = {
                let mut t = Tape::new(&self.model.store);
                let loss = self.model.loss(&mut t, doc, normalize)?;
                let value = t.scalar(loss.total);
                t.backward_into(loss.total, &mut grads);
                (value, loss.coref, loss.linking)
            };
            let grad_norm = grads.max_abs();
            if !value.is_finite() || !grad_norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: self.state.step,
                    scene: doc.scene_id.clone(),
                    value: if value.is_finite() { grad_norm } else { value },
                });
            }
            lr = learning_rate(self.base_lr, self.state.step, self.state.total_steps, &self.config.optimizer);
            self.optimizer.update(&mut self.model.store, &grads, lr);
            self.state.step += 1;
            steps += 1;
            loss_sum += value;
            coref_sum += coref.unwrap_or(0.0);
            link_sum += linking.unwrap_or(0.0);
        }

        let report = evaluate(&self.model, &self.selection_docs)?.report;
        let score = report.selection_score();
        let improved = self.state.best_score.is_none_or(|b| score > b);
        if improved {
            self.state.best_score = Some(score);
            self.state.best_epoch = Some(epoch);
            self.state.epochs_since_best = 0;
            self.best_params = Some(self.model.store.clone());
        } else {
            self.state.epochs_since_best += 1;
            if self.state.epochs_since_best >= self.config.training.patience {
                self.state.stopped = true;
            }
        }
        if let Some(target) = self.config.training.target_score {
            let reached = [report.coref_avg_f1, report.micro_f1].into_iter().flatten().all(|v| v >= target);
            if reached {
                self.state.stopped = true;
            }
        }
        self.state.epoch += 1;
        let task = self.config.task;
        let entry = EpochLog {
            epoch,
            steps,
            learning_rate: lr,
            loss: loss_sum,
            coref_loss: task.coref().then_some(coref_sum),
            linking_loss: task.linking().then_some(link_sum),
            selection_score: score,
            coref_avg_f1: report.coref_avg_f1,
            micro_f1: report.micro_f1,
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {loss_sum:.4} selection {score:.4}{}",
            if improved { " *" } else { "" }
        );
        self.state.log.push(entry.clone());
        Ok(entry)
    }

    /// Trains until the epoch budget, patience or target is exhausted.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.finished() {
            self.run_epoch()?;
        }
        let checkpoint = self.checkpoint();
        Ok(TrainOutcome {
            best: checkpoint.best_model(),
            log: checkpoint.state.log.clone(),
            checkpoint,
        })
    }
}

pub struct TrainOutcome {
    /// Model at the best selection score.
    pub best: JointModel,
    pub log: Vec<EpochLog>,
    /// Final training state, resumable.
    pub checkpoint: Checkpoint,
}

/// Trains one model from `config` on `corpus`.
pub fn train(config: &ExperimentConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    Trainer::new(config.clone(), corpus)?.run()
}

/// Trains and then scores the best model on `split`.
pub fn train_and_evaluate(config: &ExperimentConfig, corpus: &Corpus, split: Split) -> Result<(MetricsReport, TrainOutcome)> {
    let outcome = train(config, corpus)?;
    let docs = split_docs(corpus, split)?;
    let report = evaluate(&outcome.best, &docs)?.report;
    Ok((report, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SynthSpec};
    use crate::model::TaskMode;

    fn tiny() -> (ExperimentConfig, Corpus) {
        let mut cfg = ExperimentConfig::toy();
        cfg.encoder.dim = 8;
        cfg.encoder.heads = 2;
        cfg.mlsa.heads = 2;
        cfg.heads.hidden_width = 8;
        cfg.training.max_epochs = 3;
        let spec = SynthSpec {
            scenes: 6,
            utterances_per_scene: 4,
            ..SynthSpec::default()
        };
        (cfg, generate_synthetic_corpus(&spec, 0).unwrap())
    }

    #[test]
    fn identical_runs_give_identical_logs() {
        let (cfg, corpus) = tiny();
        let a = train(&cfg, &corpus).unwrap();
        let b = train(&cfg, &corpus).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best.store, b.best.store);
        assert_eq!(a.log.len(), 3);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let (cfg, corpus) = tiny();
        let mut trainer = Trainer::new(cfg, &corpus).unwrap();
        trainer.run_epoch().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        trainer.checkpoint().save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.model.store, trainer.model.store);
        assert_eq!(loaded.optimizer, trainer.optimizer);
        assert_eq!(loaded.state, trainer.state);
        let mut resumed = Trainer::from_checkpoint(loaded, &corpus).unwrap();
        let a = trainer.run_epoch().unwrap();
        let b = resumed.run_epoch().unwrap();
        assert_eq!(a, b);
        assert_eq!(trainer.model.store, resumed.model.store);
    }

    #[test]
    fn best_checkpoint_is_dev_best() {
        let (mut cfg, corpus) = tiny();
        cfg.training.max_epochs = 5;
        let out = train(&cfg, &corpus).unwrap();
        let best = out.log.iter().map(|l| l.selection_score).fold(f64::NEG_INFINITY, f64::max);
        let dev = &corpus[&Split::Dev];
        let rescored = evaluate(&out.best, dev).unwrap().report.selection_score();
        assert_eq!(rescored, best);
    }

    #[test]
    fn patience_stops_early() {
        let (mut cfg, corpus) = tiny();
        cfg.training.max_epochs = 50;
        cfg.training.patience = 1;
        cfg.optimizer.learning_rate = Some(0.0);
        let out = train(&cfg, &corpus).unwrap();
        assert_eq!(out.log.len(), 2);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut cfg, corpus) = tiny();
        cfg.optimizer.learning_rate = Some(f64::NAN);
        let mut trainer = Trainer::new(cfg, &corpus).unwrap();
        let err = trainer.run_epoch().and_then(|_| trainer.run_epoch());
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn empty_training_split_is_error() {
        let (cfg, mut corpus) = tiny();
        corpus.insert(Split::Train, Vec::new());
        assert!(matches!(Trainer::new(cfg, &corpus), Err(Error::EmptyTraining)));
    }

    #[test]
    fn link_only_leaves_coref_head_untouched() {
        let (mut cfg, corpus) = tiny();
        cfg.task = TaskMode::LinkOnly;
        let mut trainer = Trainer::new(cfg, &corpus).unwrap();
        let before: Vec<_> = trainer.model.store.with_prefix("coref.").map(|id| trainer.model.store.get(id).clone()).collect();
        trainer.run_epoch().unwrap();
        let after: Vec<_> = trainer.model.store.with_prefix("coref.").map(|id| trainer.model.store.get(id).clone()).collect();
        assert_eq!(before, after);
    }
}
