//! Downstream comparison of embeddings: sentences become the average of
//! their in-vocabulary word vectors, and a multinomial logistic regression
//! is trained on top.
//!
//! Features are centered with the training mean and divided by one global
//! RMS scale, so replacing `E` by `QE` for an orthogonal `Q` changes nothing
//! but rounding. Training is mini-batch gradient descent from zero with a
//! seeded shuffle. After every epoch the full training objective is
//! checked; an epoch that would increase it (or the cross-entropy) is undone
//! and retried with half the learning rate.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{JiveError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    records: Vec<(usize, String)>,
    class_count: usize,
    split: Split,
}

impl LabeledCorpus {
    /// Class ids must be exactly `0..C` for some `C ≥ 1`.
    pub fn new(records: Vec<(usize, String)>, split: Split) -> Result<Self> {
        if records.is_empty() {
            return Err(JiveError::Invalid(
                format!("empty {split:?} corpus").to_lowercase(),
            ));
        }
        let labels: BTreeSet<usize> = records.iter().map(|(l, _)| *l).collect();
        let class_count = labels.len();
        if labels.iter().copied().ne(0..class_count) {
            return Err(JiveError::Invalid(format!(
                "class ids must be contiguous from 0, got {labels:?}"
            )));
        }
        Ok(LabeledCorpus {
            records,
            class_count,
            split,
        })
    }

    pub fn records(&self) -> &[(usize, String)] {
        &self.records
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Reads `label<TAB>text` records, one per line. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R, split: Split) -> Result<LabeledCorpus> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| JiveError::Format {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line.split_once('\t').ok_or_else(|| JiveError::Format {
            line: lineno,
            message: "expected \"label<TAB>text\"".into(),
        })?;
        let label = label.trim().parse().map_err(|_| JiveError::Format {
            line: lineno,
            message: format!("cannot parse {label:?} as a class id"),
        })?;
        records.push((label, text.to_string()));
    }
    LabeledCorpus::new(records, split)
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| JiveError::io(path, e))?;
    read_corpus(BufReader::new(file), split)
}

/// Lowercases, turns every character that is neither alphanumeric nor
/// whitespace into a space, and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Word lookup for repeated featurization.
pub struct Featurizer<'a> {
    embedding: &'a EmbeddingMatrix,
    index: HashMap<&'a str, usize>,
}

impl<'a> Featurizer<'a> {
    pub fn new(embedding: &'a EmbeddingMatrix) -> Self {
        let index = embedding
            .vocab()
            .iter()
            .enumerate()
            .map(|(i, w)| (w.as_str(), i))
            .collect();
        Featurizer { embedding, index }
    }

    /// Mean of the in-vocabulary token vectors, and whether any token was
    /// found.
    pub fn featurize(&self, text: &str) -> (DVector<f64>, bool) {
        let data = self.embedding.data();
        let mut sum = DVector::zeros(data.nrows());
        let mut hits = 0usize;
        for token in tokenize(text) {
            if let Some(&j) = self.index.get(token.as_str()) {
                sum += data.column(j);
                hits += 1;
            }
        }
        if hits > 0 {
            sum /= hits as f64;
        }
        (sum, hits > 0)
    }

    /// Features of a whole corpus as columns of a `p×N` matrix.
    pub fn featurize_corpus(&self, corpus: &LabeledCorpus) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.embedding.dim(), corpus.len());
        let mut missing = 0;
        for (k, (_, text)) in corpus.records().iter().enumerate() {
            let (f, found) = self.featurize(text);
            missing += usize::from(!found);
            out.set_column(k, &f);
        }
        if missing > 0 {
            log::warn!(
                "{}: {missing} of {} texts have no in-vocabulary token",
                self.embedding.name(),
                corpus.len()
            );
        }
        out
    }
}

/// Bag-of-embeddings representation of `text`. Texts without any known
/// token map to the zero vector.
pub fn featurize(text: &str, embedding: &EmbeddingMatrix) -> DVector<f64> {
    Featurizer::new(embedding).featurize(text).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 0.1,
            l2: 1e-4,
            batch: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(JiveError::arg("epochs must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(JiveError::arg(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(JiveError::arg(format!(
                "l2 must be non-negative, got {}",
                self.l2
            )));
        }
        if self.batch == 0 {
            return Err(JiveError::arg("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// `C×p` class weights on standardized features.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub feature_mean: DVector<f64>,
    pub feature_scale: f64,
    /// Training cross-entropy after each epoch (index 0 is the initial model).
    pub loss_history: Vec<f64>,
    /// Full objective (cross-entropy plus penalty) after each epoch.
    pub objective_history: Vec<f64>,
}

impl LinearClassifier {
    pub fn class_count(&self) -> usize {
        self.weights.nrows()
    }

    fn standardize(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = features.clone();
        for mut col in z.column_iter_mut() {
            col -= &self.feature_mean;
            col /= self.feature_scale;
        }
        z
    }

    /// `C×N` class scores of raw (unstandardized) feature columns.
    pub fn decision(&self, features: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scores = &self.weights * self.standardize(features);
        for mut col in scores.column_iter_mut() {
            col += &self.bias;
        }
        scores
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Vec<usize> {
        argmax_columns(&self.decision(features))
    }
}

fn argmax_columns(scores: &DMatrix<f64>) -> Vec<usize> {
    scores.column_iter().map(|c| c.argmax().0).collect()
}

/// Softmax probabilities (in place) and the mean cross-entropy.
fn softmax_cross_entropy(scores: &mut DMatrix<f64>, labels: &[usize]) -> f64 {
    let mut loss = 0.0;
    for (mut col, &y) in scores.column_iter_mut().zip(labels) {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let sum = col.sum();
        col /= sum;
        loss -= col[y].max(f64::MIN_POSITIVE).ln();
    }
    loss / labels.len() as f64
}

struct Objective<'a> {
    z: &'a DMatrix<f64>,
    labels: &'a [usize],
    l2: f64,
}

impl Objective<'_> {
    fn scores(&self, w: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize]) -> DMatrix<f64> {
        let x = self.z.select_columns(cols);
        let mut s = w * x;
        for mut col in s.column_iter_mut() {
            col += b;
        }
        s
    }

    fn eval(&self, w: &DMatrix<f64>, b: &DVector<f64>) -> (f64, f64) {
        let all: Vec<usize> = (0..self.labels.len()).collect();
        let mut s = self.scores(w, b, &all);
        let ce = softmax_cross_entropy(&mut s, self.labels);
        (ce, ce + 0.5 * self.l2 * w.norm_squared())
    }

    fn step(&self, w: &mut DMatrix<f64>, b: &mut DVector<f64>, cols: &[usize], lr: f64) {
        let labels: Vec<usize> = cols.iter().map(|&k| self.labels[k]).collect();
        let mut probs = self.scores(w, b, cols);
        softmax_cross_entropy(&mut probs, &labels);
        for (mut col, &y) in probs.column_iter_mut().zip(&labels) {
            col[y] -= 1.0;
        }
        let m = cols.len() as f64;
        let grad_w = &probs * self.z.select_columns(cols).transpose() / m + &*w * self.l2;
        let grad_b = probs.column_sum() / m;
        *w -= grad_w * lr;
        *b -= grad_b * lr;
    }
}

const MAX_HALVINGS: usize = 40;

/// Trains a multinomial logistic regression on the bag-of-embeddings
/// features of `train`.
pub fn train_linear(
    train: &LabeledCorpus,
    embedding: &EmbeddingMatrix,
    cfg: &TrainConfig,
) -> Result<LinearClassifier> {
    cfg.validate()?;
    if train.class_count() < 2 {
        return Err(JiveError::Invalid(
            "training corpus has a single class".into(),
        ));
    }
    let raw = Featurizer::new(embedding).featurize_corpus(train);
    let (p, n) = raw.shape();
    let feature_mean = raw.column_mean();
    let mut z = raw;
    for mut col in z.column_iter_mut() {
        col -= &feature_mean;
    }
    let rms = (z.norm_squared() / (p * n) as f64).sqrt();
    let feature_scale = if rms > 0.0 { rms } else { 1.0 };
    z /= feature_scale;

    let labels: Vec<usize> = train.records().iter().map(|(l, _)| *l).collect();
    let objective = Objective {
        z: &z,
        labels: &labels,
        l2: cfg.l2,
    };
    let c = train.class_count();
    let mut w = DMatrix::zeros(c, p);
    let mut b = DVector::zeros(c);
    let (mut ce, mut obj) = objective.eval(&w, &b);
    let mut loss_history = vec![ce];
    let mut objective_history = vec![obj];

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr = cfg.lr;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let (mut w_try, mut b_try) = (w.clone(), b.clone());
            for batch in order.chunks(cfg.batch) {
                objective.step(&mut w_try, &mut b_try, batch, lr);
            }
            let (ce_try, obj_try) = objective.eval(&w_try, &b_try);
            if obj_try.is_finite() && obj_try <= obj && ce_try <= ce {
                (w, b, ce, obj) = (w_try, b_try, ce_try, obj_try);
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if !accepted {
            log::debug!("epoch {epoch}: no decrease at lr={lr:e}, weights kept");
        }
        loss_history.push(ce);
        objective_history.push(obj);
    }
    Ok(LinearClassifier {
        weights: w,
        bias: b,
        feature_mean,
        feature_scale,
        loss_history,
        objective_history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub embedding: String,
    pub accuracy: f64,
    pub n_test: usize,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub config: TrainConfig,
}

impl EvalResult {
    /// Single-line JSON, for appending to a results table.
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Accuracy and per-class precision and recall of `classifier` on `test`.
/// Classes never predicted (or absent from `test`) get precision (recall) 0.
pub fn evaluate(
    test: &LabeledCorpus,
    embedding: &EmbeddingMatrix,
    classifier: &LinearClassifier,
) -> Result<EvalResult> {
    let c = classifier.class_count();
    if test.class_count() > c {
        return Err(JiveError::Invalid(format!(
            "test corpus has {} classes, the classifier {c}",
            test.class_count()
        )));
    }
    if classifier.feature_mean.len() != embedding.dim() {
        return Err(JiveError::arg(format!(
            "classifier expects {}-dimensional features, {:?} has {}",
            classifier.feature_mean.len(),
            embedding.name(),
            embedding.dim()
        )));
    }
    let features = Featurizer::new(embedding).featurize_corpus(test);
    let predicted = classifier.predict(&features);
    let mut confusion = vec![vec![0usize; c]; c];
    for ((truth, _), &guess) in test.records().iter().zip(&predicted) {
        confusion[*truth][guess] += 1;
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = (0..c)
        .map(|k| ratio(confusion[k][k], (0..c).map(|t| confusion[t][k]).sum()))
        .collect();
    let recall = (0..c)
        .map(|k| ratio(confusion[k][k], confusion[k].iter().sum()))
        .collect();
    Ok(EvalResult {
        embedding: embedding.name().to_string(),
        accuracy: ratio(correct, test.len()),
        n_test: test.len(),
        precision,
        recall,
        confusion,
        config: TrainConfig::default(),
    })
}

/// Trains on `train`, evaluates on `test`, and echoes `cfg` in the result.
pub fn train_and_evaluate(
    train: &LabeledCorpus,
    test: &LabeledCorpus,
    embedding: &EmbeddingMatrix,
    cfg: &TrainConfig,
) -> Result<EvalResult> {
    let classifier = train_linear(train, embedding, cfg)?;
    let mut result = evaluate(test, embedding, &classifier)?;
    result.config = cfg.clone();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_matrix, separable_suite, LabelSuite};

    fn tiny() -> EmbeddingMatrix {
        EmbeddingMatrix::new("e", vec!["a".into(), "b".into()], DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn featurize_examples() {
        let e = tiny();
        assert_eq!(featurize("a b", &e), DVector::from_vec(vec![0.5, 0.5]));
        assert_eq!(featurize("zzz", &e), DVector::zeros(2));
        assert_eq!(featurize("A, b!", &e), featurize("a b", &e));
    }

    #[test]
    fn corpus_parsing() {
        let c = read_corpus("0\tgood film\n1\tbad, bad\n\n".as_bytes(), Split::Train).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.class_count(), 2);
        let err = read_corpus("0 no tab".as_bytes(), Split::Train).unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected \"label<TAB>text\"");
        let err = read_corpus("x\ttext".as_bytes(), Split::Train).unwrap_err();
        assert!(err.to_string().starts_with("line 1: cannot parse"));
        assert!(read_corpus("0\ta\n2\tb".as_bytes(), Split::Train).is_err());
        assert!(read_corpus("".as_bytes(), Split::Test).is_err());
    }

    #[test]
    fn argument_guards() {
        let c = LabeledCorpus::new(vec![(0, "a".into()), (1, "b".into())], Split::Train).unwrap();
        let e = tiny();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_linear(&c, &e, &cfg),
            Err(JiveError::Argument(_))
        ));
        let single = LabeledCorpus::new(vec![(0, "a".into())], Split::Train).unwrap();
        assert!(train_linear(&single, &e, &TrainConfig::default()).is_err());
    }

    #[test]
    fn separable_data_is_learned_and_loss_is_monotone() {
        let LabelSuite {
            embedding,
            train,
            test,
        } = separable_suite(3);
        let clf = train_linear(&train, &embedding, &TrainConfig::default()).unwrap();
        for pair in clf.loss_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6);
        }
        assert_eq!(evaluate(&train, &embedding, &clf).unwrap().accuracy, 1.0);
        assert_eq!(evaluate(&test, &embedding, &clf).unwrap().accuracy, 1.0);
    }

    #[test]
    fn l2_shrinks_weights() {
        let LabelSuite {
            embedding, train, ..
        } = separable_suite(4);
        let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
            .iter()
            .map(|&l2| {
                let cfg = TrainConfig {
                    l2,
                    ..TrainConfig::default()
                };
                train_linear(&train, &embedding, &cfg)
                    .unwrap()
                    .weights
                    .norm()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let LabelSuite {
            embedding, train, ..
        } = separable_suite(5);
        let clf = train_linear(&train, &embedding, &TrainConfig::default()).unwrap();
        let r = evaluate(&train, &embedding, &clf).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.precision.iter().chain(&r.recall).all(|&v| v == 1.0));
    }

    #[test]
    fn random_weights_on_random_labels_are_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n_words = 300;
        let vocab: Vec<String> = (0..n_words).map(|i| format!("t{i}")).collect();
        let embedding =
            EmbeddingMatrix::new("r", vocab, gaussian_matrix(&mut rng, 6, n_words)).unwrap();
        let labels: Vec<usize> = (0..2000).map(|k| k % 2).collect();
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        let records = shuffled
            .iter()
            .enumerate()
            .map(|(k, &l)| {
                (
                    l,
                    format!("t{} t{}", (7 * k) % n_words, (13 * k + 5) % n_words),
                )
            })
            .collect();
        let test = LabeledCorpus::new(records, Split::Test).unwrap();
        let clf = LinearClassifier {
            weights: gaussian_matrix(&mut rng, 2, 6),
            bias: DVector::zeros(2),
            feature_mean: DVector::zeros(6),
            feature_scale: 1.0,
            loss_history: Vec::new(),
            objective_history: Vec::new(),
        };
        let r = evaluate(&test, &embedding, &clf).unwrap();
        assert!((r.accuracy - 0.5).abs() <= 0.05, "{}", r.accuracy);

        // recompute per-class recall from explicit predictions
        let predicted = clf.predict(&Featurizer::new(&embedding).featurize_corpus(&test));
        for k in 0..2 {
            let (hit, total) = test
                .records()
                .iter()
                .zip(&predicted)
                .filter(|((t, _), _)| *t == k)
                .fold((0, 0), |(h, n), (_, &p)| (h + usize::from(p == k), n + 1));
            assert_eq!(r.recall[k], hit as f64 / total as f64);
        }
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, 2000);
    }

    #[test]
    fn deterministic_and_rotation_invariant() {
        let LabelSuite {
            embedding,
            train,
            test,
        } = crate::synthetic::planted_label_suite(6, 300, 500, 0.1);
        let cfg = TrainConfig::default();
        let a = train_and_evaluate(&train, &test, &embedding, &cfg).unwrap();
        assert_eq!(
            a,
            train_and_evaluate(&train, &test, &embedding, &cfg).unwrap()
        );

        let p = embedding.dim();
        let q = gaussian_matrix(&mut ChaCha8Rng::seed_from_u64(1), p, p)
            .qr()
            .q();
        let rotated =
            EmbeddingMatrix::new("q", embedding.vocab().to_vec(), q * embedding.data()).unwrap();
        let b = train_and_evaluate(&train, &test, &rotated, &cfg).unwrap();
        assert!(
            (a.accuracy - b.accuracy).abs() <= 0.01,
            "{} vs {}",
            a.accuracy,
            b.accuracy
        );
    }

    #[test]
    fn json_row_is_one_line() {
        let LabelSuite {
            embedding,
            train,
            test,
        } = separable_suite(7);
        let r = train_and_evaluate(&train, &test, &embedding, &TrainConfig::default()).unwrap();
        let line = r.to_json_line().unwrap();
        assert!(!line.contains('\n'));
        let back: EvalResult = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }
}
