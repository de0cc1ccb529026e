use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierError, LabeledImage};
use crate::imaging::Label;

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub label: Label,
    pub p_anomaly: f64,
}

/// Counts at threshold 0.5; `p_anomaly >= 0.5` predicts an anomaly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Score counts per true class over equal-width bins of `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistograms {
    pub bins: usize,
    pub normal: Vec<usize>,
    pub anomaly: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub histograms: ScoreHistograms,
    pub scores: Vec<ScoreRow>,
}

/// Probability that a random anomaly outscores a random normal, ties
/// counting one half. `None` unless both classes are present.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l == Label::Anomaly).count() as u128;
    let n_neg = scores.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Twice the rank sum of anomalies, with tied groups sharing the mean rank.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mean_rank = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == Label::Anomaly).count() as u128;
        twice_rank_sum += twice_mean_rank * pos_in_group;
        i = j + 1;
    }
    // 2U = 2·R − n_pos(n_pos + 1); AUC = U / (n_pos n_neg).
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Some(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

pub(crate) fn summarize(rows: Vec<ScoreRow>) -> EvalMetrics {
    let mut confusion = Confusion::default();
    let mut hist = ScoreHistograms {
        bins: HISTOGRAM_BINS,
        normal: vec![0; HISTOGRAM_BINS],
        anomaly: vec![0; HISTOGRAM_BINS],
    };
    for r in &rows {
        let predicted = r.p_anomaly >= 0.5;
        let bin = ((r.p_anomaly * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        match (r.label, predicted) {
            (Label::Anomaly, true) => confusion.tp += 1,
            (Label::Anomaly, false) => confusion.fn_ += 1,
            (Label::Normal, true) => confusion.fp += 1,
            (Label::Normal, false) => confusion.tn += 1,
        }
        match r.label {
            Label::Anomaly => hist.anomaly[bin] += 1,
            Label::Normal => hist.normal[bin] += 1,
        }
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.p_anomaly).collect();
    let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
    EvalMetrics {
        n: rows.len(),
        auc: roc_auc(&scores, &labels),
        confusion,
        histograms: hist,
        scores: rows,
    }
}

pub fn evaluate(model: &Classifier, samples: &[LabeledImage]) -> Result<EvalMetrics, ClassifierError> {
    if samples.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let images: Vec<_> = samples.iter().map(|s| (s.image_id.as_str(), &s.image)).collect();
    let scores = model.predict_batch(&images)?;
    let rows = samples
        .iter()
        .zip(scores)
        .map(|(s, sc)| ScoreRow {
            image_id: s.image_id.clone(),
            label: s.label,
            p_anomaly: sc.p_anomaly,
        })
        .collect();
    Ok(summarize(rows))
}
