//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corelink::autograd::Tape;
use corelink::corpus::{
    build_inventories, corpus_stats, derive_gold_clusters, generate_synthetic_corpus, load_corpus, Clustering,
    Corpus, Mention, SceneDocument, Split, SynthSpec, Utterance,
};
use corelink::harness::{
    evaluate, majority_class_rate, run_ablations, run_layer_sweep, train, train_and_evaluate, ExperimentConfig,
    REFERENCE_COREF_AVG_F1, REFERENCE_FULL_MODEL,
};
use corelink::heads::{
    antecedent_distribution, coref_loss, gold_antecedents, joint_loss, linking_distribution, linking_loss,
    AntecedentScores, HeadsConfig,
};
use corelink::metrics::{b_cubed, blanc, ceaf_phi4, linking_f1, PRF};
use corelink::mlsa::MlsaConfig;
use corelink::model::{EncoderConfig, JointModel, PerfectOracle, TaskMode};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- oracles

/// Every set partition of 0..n, as restricted growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, n: usize, max: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=max + 1 {
            prefix.push(b);
            go(prefix, n, max.max(b), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut prefix = vec![0];
    go(&mut prefix, n, 0, &mut out);
    out
}

fn blocks(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![BTreeSet::new(); k];
    for (i, &b) in labels.iter().enumerate() {
        out[b].insert(i);
    }
    out
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn oracle_b3(gold: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let n = gold.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..gold.len() {
        let k: Vec<usize> = (0..gold.len()).filter(|&j| gold[j] == gold[i]).collect();
        let rr: Vec<usize> = (0..pred.len()).filter(|&j| pred[j] == pred[i]).collect();
        let both = k.iter().filter(|j| rr.contains(j)).count() as f64;
        p += both / rr.len() as f64;
        r += both / k.len() as f64;
    }
    (p / n, r / n, f1(p / n, r / n))
}

/// Best total φ4 over all injective matchings of gold to predicted clusters.
fn best_matching(gold: &[BTreeSet<usize>], pred: &[BTreeSet<usize>], gi: usize, used: &mut Vec<bool>) -> f64 {
    if gi == gold.len() {
        return 0.0;
    }
    let mut best = best_matching(gold, pred, gi + 1, used);
    for j in 0..pred.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        let inter = gold[gi].intersection(&pred[j]).count() as f64;
        let phi = 2.0 * inter / (gold[gi].len() + pred[j].len()) as f64;
        best = best.max(phi + best_matching(gold, pred, gi + 1, used));
        used[j] = false;
    }
    best
}

fn oracle_ceaf(gold: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let (g, p) = (blocks(gold), blocks(pred));
    let phi = best_matching(&g, &p, 0, &mut vec![false; p.len()]);
    let prec = phi / p.len() as f64;
    let rec = phi / g.len() as f64;
    (prec, rec, f1(prec, rec))
}

/// BLANC by link enumeration. A link class with no gold and no predicted
/// links is dropped; with neither class present the score is 1.
fn oracle_blanc(gold: &[usize], pred: &[usize]) -> (f64, f64, f64) {
    let (mut rc, mut wc, mut wn, mut rn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..gold.len() {
        for j in i + 1..gold.len() {
            match (gold[i] == gold[j], pred[i] == pred[j]) {
                (true, true) => rc += 1.0,
                (false, true) => wc += 1.0,
                (true, false) => wn += 1.0,
                (false, false) => rn += 1.0,
            }
        }
    }
    let div = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let coref = (div(rc, rc + wc), div(rc, rc + wn));
    let non = (div(rn, rn + wn), div(rn, rn + wc));
    let coref_present = rc + wc + wn > 0.0;
    let non_present = rn + wn + wc > 0.0;
    let score = |c: (f64, f64)| (c.0, c.1, f1(c.0, c.1));
    match (coref_present, non_present) {
        (false, false) => (1.0, 1.0, 1.0),
        (true, false) => score(coref),
        (false, true) => score(non),
        (true, true) => {
            let (a, b) = (score(coref), score(non));
            ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0, (a.2 + b.2) / 2.0)
        }
    }
}

fn clustering(labels: &[usize]) -> Clustering {
    let clusters = blocks(labels).into_iter().map(|b| b.into_iter().collect()).collect();
    Clustering::new(labels.len(), clusters).unwrap()
}

fn close(prf: &PRF, o: (f64, f64, f64), tol: f64) -> bool {
    (prf.precision - o.0).abs() <= tol && (prf.recall - o.1).abs() <= tol && (prf.f1 - o.2).abs() <= tol
}

// --------------------------------------------------------------- criteria

fn reference_targets() -> Outcome {
    ensure(REFERENCE_FULL_MODEL == [85.54, 77.48, 92.17, 87.05, 81.09], "full-model reference row changed")?;
    ensure(REFERENCE_COREF_AVG_F1 == 85.06, "coreference reference average changed")?;
    Ok(format!(
        "recorded only: coref avg F1 {REFERENCE_COREF_AVG_F1}, linking micro F1 {}; not reproducible at desk scale",
        REFERENCE_FULL_MODEL[3]
    ))
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut pairs = 0usize;
    for n in 1..=6 {
        let parts = partitions(n);
        let cl: Vec<Clustering> = parts.iter().map(|p| clustering(p)).collect();
        for (gi, g) in parts.iter().enumerate() {
            for (pi, p) in parts.iter().enumerate() {
                let (gc, pc) = (&cl[gi], &cl[pi]);
                let b3 = b_cubed(gc, pc).map_err(err)?;
                ensure(close(&b3, oracle_b3(g, p), 1e-9), format!("B3 mismatch on {g:?} vs {p:?}"))?;
                let ceaf = ceaf_phi4(gc, pc).map_err(err)?;
                ensure(close(&ceaf, oracle_ceaf(g, p), 1e-9), format!("CEAF mismatch on {g:?} vs {p:?}"))?;
                if n >= 2 {
                    let bl = blanc(gc, pc).map_err(err)?;
                    ensure(close(&bl, oracle_blanc(g, p), 1e-9), format!("BLANC mismatch on {g:?} vs {p:?}"))?;
                }
                pairs += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} partition pairs up to 6 mentions, {elapsed:.2?}"))
}

fn worked_instance() -> Outcome {
    // a b c d: gold {a,b,c},{d}; pred {a,b},{c,d}
    let gold = clustering(&[0, 0, 0, 1]);
    let pred = clustering(&[0, 0, 1, 1]);
    let b3 = b_cubed(&gold, &pred).map_err(err)?.f1;
    let ceaf = ceaf_phi4(&gold, &pred).map_err(err)?.f1;
    let bl = blanc(&gold, &pred).map_err(err)?.f1;
    ensure((b3 - 12.0 / 17.0).abs() < 1e-12, format!("B3 F1 {b3}"))?;
    ensure((ceaf - 11.0 / 15.0).abs() < 1e-12, format!("CEAF F1 {ceaf}"))?;
    ensure((bl - 0.4857).abs() < 1e-4, format!("BLANC F {bl}"))?;
    // the oracles agree on the same instance
    ensure((oracle_b3(&[0, 0, 0, 1], &[0, 0, 1, 1]).2 - 12.0 / 17.0).abs() < 1e-12, "B3 oracle")?;
    ensure((oracle_ceaf(&[0, 0, 0, 1], &[0, 0, 1, 1]).2 - 11.0 / 15.0).abs() < 1e-12, "CEAF oracle")?;
    ensure((oracle_blanc(&[0, 0, 0, 1], &[0, 0, 1, 1]).2 - 0.4857).abs() < 1e-4, "BLANC oracle")?;
    Ok(format!("B3 {b3:.6}, CEAF {ceaf:.6}, BLANC {bl:.6}"))
}

fn perfect_prediction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in 0..100 {
        let n = rng.random_range(1..40usize);
        let k = rng.random_range(1..=n);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let gold = Clustering::from_keys(&labels);
        for (name, prf) in [
            ("B3", b_cubed(&gold, &gold).map_err(err)?),
            ("CEAF", ceaf_phi4(&gold, &gold).map_err(err)?),
            ("BLANC", blanc(&gold, &gold).map_err(err)?),
        ] {
            ensure(prf == PRF::perfect(), format!("{name} {prf:?} on document {d}"))?;
        }
        let classes = k + 1;
        let link = linking_f1(&labels, &labels, classes).map_err(err)?;
        ensure(link.micro_f1 == 1.0 && link.macro_f1 == 1.0, format!("linking on document {d}"))?;
    }
    // the same identity through the evaluation pipeline
    let spec = SynthSpec {
        scenes: 100,
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, 3).map_err(err)?;
    let (characters, _) = build_inventories(&corpus[&Split::Train], 1).map_err(err)?;
    let oracle = PerfectOracle {
        characters,
        task: TaskMode::Joint,
    };
    let docs: Vec<SceneDocument> = corpus.values().flatten().cloned().collect();
    let r = evaluate(&oracle, &docs).map_err(err)?.report;
    for (name, v) in r.flat() {
        ensure(v == 1.0, format!("{name} = {v} under the perfect oracle"))?;
    }
    Ok(format!("100 random documents plus {} synthetic scenes all score 1.0", docs.len()))
}

fn utterance(index: usize, speaker: &str, text: &str) -> Utterance {
    Utterance {
        speaker_ids: vec![speaker.to_string()],
        sentences: vec![text.split(' ').map(String::from).collect()],
        utterance_index: index,
    }
}

fn mention(utt: usize, token: usize, speaker: &str, label: &str) -> Mention {
    Mention {
        mention_index: 0,
        utterance_index: utt,
        sentence_index: 0,
        token_start: token,
        token_end: token,
        speaker_id: speaker.to_string(),
        gold_character: Some(label.to_string()),
        labels: vec![label.to_string()],
        is_singular: true,
    }
}

fn gradient_check() -> Outcome {
    let doc = SceneDocument::new(
        "grad",
        None,
        vec![
            utterance(0, "Alice", "I think Bob is late"),
            utterance(1, "Bob", "I am here , you know"),
        ],
        vec![
            mention(0, 0, "Alice", "Alice"),
            mention(0, 2, "Alice", "Bob"),
            mention(1, 0, "Bob", "Bob"),
            mention(1, 4, "Bob", "Alice"),
            mention(1, 2, "Bob", "Bob"),
        ],
    )
    .map_err(err)?;
    ensure(doc.num_mentions() == 5, "expected five mentions")?;
    let enc = EncoderConfig {
        dim: 8,
        heads: 2,
        max_positions: 16,
        ..EncoderConfig::default()
    };
    let mlsa = MlsaConfig {
        layers: 2,
        heads: 2,
        ..MlsaConfig::default()
    };
    let heads = HeadsConfig {
        hidden_width: 6,
        use_mention_score: true,
    };
    let docs = vec![doc];
    let mut model =
        JointModel::new(&enc, &mlsa, &heads, TaskMode::Joint, &docs, 1, 5, false).map_err(err)?;
    let doc = &docs[0];

    let analytic = {
        let mut t = Tape::new(&model.store);
        let loss = model.loss(&mut t, doc, false).map_err(err)?;
        t.backward(loss.total)
    };
    let eval = |m: &JointModel| {
        let mut t = Tape::new(&m.store);
        let loss = m.loss(&mut t, doc, false).unwrap();
        t.scalar(loss.total)
    };
    // central differences with h = 1e-6 resolve about 1e-10 |L|; absolute
    // disagreements under 1e-8 are below that noise
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut worst_large: f64 = 0.0;
    let mut large = 0usize;
    let mut checked = 0usize;
    for id in model.store.ids().collect::<Vec<_>>() {
        let (rows, cols) = model.store.get(id).value.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = model.store.get(id).value[[r, c]];
                model.store.get_mut(id).value[[r, c]] = orig + h;
                let up = eval(&model);
                model.store.get_mut(id).value[[r, c]] = orig - h;
                let down = eval(&model);
                model.store.get_mut(id).value[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic.get(id)[[r, c]];
                let diff = (a - numeric).abs();
                if diff >= 1e-8 {
                    worst = worst.max(diff / a.abs().max(numeric.abs()));
                }
                if a.abs() > 1e-3 {
                    large += 1;
                    worst_large = worst_large.max(diff / a.abs());
                }
                checked += 1;
            }
        }
    }
    ensure(large > 0, "no gradient entry above 1e-3")?;
    ensure(worst < 1e-4, format!("max relative error {worst:e}"))?;
    Ok(format!(
        "{checked} parameters, max relative error {worst:.2e}; {large} entries with |grad| > 1e-3, worst {worst_large:.2e}"
    ))
}

fn identity_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let n = rng.random_range(1..12usize);
        let column: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random_range(-30.0..30.0)).collect();
        let scores = AntecedentScores::from_column(n, &column);
        for row in &scores.rows {
            ensure(row[0] == 0.0, "dummy antecedent score is not 0")?;
        }
        for row in antecedent_distribution(&scores) {
            let s: f64 = row.iter().sum();
            ensure((s - 1.0).abs() <= 1e-12, format!("antecedent softmax sums to {s}"))?;
        }
        let logits = ndarray::Array2::from_shape_fn((n, 5), |_| rng.random_range(-30.0..30.0));
        for row in linking_distribution(&logits) {
            let s: f64 = row.iter().sum();
            ensure((s - 1.0).abs() <= 1e-12, format!("class softmax sums to {s}"))?;
        }

        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let gold = Clustering::from_keys(&labels);
        let ants = gold_antecedents(&gold);
        for cluster in gold.clusters() {
            ensure(ants[cluster[0]].is_empty(), "first mention must have only the dummy antecedent")?;
        }
        let lc = coref_loss(&antecedent_distribution(&scores), &gold).map_err(err)?;
        let ll = linking_loss(&linking_distribution(&logits), &labels).map_err(err)?;
        ensure(joint_loss(lc, ll) == (lc + ll) / 2.0, "joint loss is not the mean")?;
    }
    // the same identity on the model's tape
    let corpus = generate_synthetic_corpus(&SynthSpec::default(), 0).map_err(err)?;
    let cfg = ExperimentConfig::toy();
    let train_docs = &corpus[&Split::Train];
    let model = JointModel::new(&cfg.encoder, &cfg.mlsa, &cfg.heads, TaskMode::Joint, train_docs, 1, 0, false)
        .map_err(err)?;
    for doc in train_docs.iter().take(5) {
        let mut t = Tape::new(&model.store);
        let loss = model.loss(&mut t, doc, false).map_err(err)?;
        let (c, l) = (loss.coref.unwrap(), loss.linking.unwrap());
        ensure(t.scalar(loss.total) == (c + l) / 2.0, "tape joint loss is not the mean")?;
        let fwd = model.forward(&mut Tape::new(&model.store), doc).map_err(err)?;
        ensure(fwd.scores.is_some() && fwd.logits.is_some(), "joint forward skipped a head")?;
        let gold = derive_gold_clusters(doc).map_err(err)?;
        ensure(gold_antecedents(&gold)[0].is_empty(), "document's first mention has a gold antecedent")?;
    }
    Ok("softmax sums, s(i,eps) = 0, L = (Lc + Ll)/2, first-mention gold = {eps}".into())
}

fn synthetic(scenes: usize) -> Result<Corpus, String> {
    let spec = SynthSpec {
        scenes,
        ..SynthSpec::default()
    };
    generate_synthetic_corpus(&spec, 0).map_err(err)
}

fn overfit() -> Outcome {
    let start = Instant::now();
    let corpus = synthetic(20)?;
    let mut cfg = ExperimentConfig::toy();
    cfg.training.max_epochs = 200;
    cfg.training.patience = 200;
    cfg.training.selection_split = Split::Train;
    cfg.training.target_score = Some(0.95);
    let (report, outcome) = train_and_evaluate(&cfg, &corpus, Split::Train).map_err(err)?;
    let elapsed = start.elapsed();
    let coref = report.coref_avg_f1.unwrap_or(0.0);
    let micro = report.micro_f1.unwrap_or(0.0);
    let detail = format!(
        "train coref avg F1 {coref:.4}, micro F1 {micro:.4} after {} epochs, {elapsed:.1?}",
        outcome.log.len()
    );
    ensure(coref >= 0.95 && micro >= 0.95, detail.clone())?;
    ensure(outcome.log.len() <= 200, detail.clone())?;
    ensure(elapsed < Duration::from_secs(300), detail.clone())?;
    Ok(detail)
}

fn ablation_direction() -> Outcome {
    let corpus = synthetic(100)?;
    let mut cfg = ExperimentConfig::toy();
    cfg.seeds = vec![0, 1, 2];
    let ablations = run_ablations(&cfg, &corpus, Split::Dev).map_err(err)?;
    let sweep = run_layer_sweep(&cfg, &corpus, &[0, 2], Split::Dev).map_err(err)?;
    let full = ablations.row("full").ok_or("no full row")?;
    let no_mlsa = ablations.row("-MLSA").ok_or("no -MLSA row")?;
    let full_micro = full.result.aggregate.micro_f1.ok_or("full row has no linking score")?;
    let flat_micro = no_mlsa.result.aggregate.micro_f1.ok_or("-MLSA row has no linking score")?;
    let detail = format!("dev micro F1 over seeds 0-2: n=2 {full_micro:.4}, n=0 {flat_micro:.4}");
    ensure(full_micro >= flat_micro, detail.clone())?;
    let row = |n: usize| sweep.rows.iter().find(|r| r.layers == n).ok_or(format!("sweep lacks n={n}"));
    ensure(row(0)?.result == no_mlsa.result, "sweep n=0 differs from the -MLSA ablation")?;
    ensure(row(2)?.result == full.result, "sweep n=2 differs from the full model")?;
    Ok(detail + "; sweep rows match the ablations")
}

fn corpus_fidelity() -> Outcome {
    let Some(dir) = std::env::var_os("CORELINK_DATA_DIR").map(PathBuf::from) else {
        return Ok("SKIP: set CORELINK_DATA_DIR to the released dataset to check the published corpus counts".into());
    };
    let corpus = load_corpus(&dir, false).map_err(err)?;
    let stats = corpus_stats(&corpus);
    let t = &stats.total;
    let dev = stats.split(Split::Dev).ok_or("no dev split")?;
    let got = (t.mentions, t.scenes, t.utterances, t.episodes, dev.mentions);
    ensure(got == (47_367, 1_301, 24_528, 97, 3_932), format!("counts {got:?}"))?;
    Ok(format!("counts {got:?}"))
}

fn determinism() -> Outcome {
    let corpus = synthetic(20)?;
    let mut cfg = ExperimentConfig::toy();
    cfg.training.max_epochs = 4;
    cfg.seed = 9;
    let run = || -> Result<String, String> {
        let (report, _) = train_and_evaluate(&cfg, &corpus, Split::Dev).map_err(err)?;
        report.to_json().map_err(err)
    };
    let (a, b) = (run()?, run()?);
    ensure(a == b, "metrics JSON differs between identical runs")?;
    Ok(format!("{} identical bytes", a.len()))
}

fn zero_init_baseline() -> Outcome {
    let corpus = synthetic(20)?;
    let mut cfg = ExperimentConfig::toy();
    cfg.training.zero_init = true;
    cfg.training.max_epochs = 1;
    cfg.optimizer.learning_rate = Some(0.0);
    let outcome = train(&cfg, &corpus).map_err(err)?;
    // the training-majority character is absent from the small dev split,
    // so score on train where the rate is non-trivial
    let docs = &corpus[&Split::Train];
    let micro = evaluate(&outcome.best, docs).map_err(err)?.report.micro_f1.ok_or("no linking score")?;
    let majority = majority_class_rate(&outcome.best, docs).map_err(err)?;
    ensure(majority > 0.0, "class 0 never occurs")?;
    ensure(micro == majority, format!("micro F1 {micro} vs majority rate {majority}"))?;
    Ok(format!("untrained zero-init micro F1 equals the class-0 rate {majority:.4}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("reference targets recorded", reference_targets),
        ("metric oracle equivalence", metric_oracles),
        ("worked metric instance", worked_instance),
        ("perfect-prediction identity", perfect_prediction),
        ("gradient check", gradient_check),
        ("loss and scoring identities", identity_checks),
        ("overfit toy corpus", overfit),
        ("ablation direction", ablation_direction),
        ("corpus fidelity", corpus_fidelity),
        ("determinism", determinism),
    ];
    let extra: [Criterion; 1] = [("zero-init baseline", zero_init_baseline)];
    let mut failed = 0;
    for (name, f) in criteria.iter().chain(extra.iter()) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) if detail.starts_with("SKIP") => println!("SKIP {name} ({secs:.1}s): {detail}"),
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
