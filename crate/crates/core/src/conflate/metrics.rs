use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::map::Id;

use super::matching::PolylineMatch;
use super::polyline::ReferencePolyline;
use super::similarity::Similarity;
use super::ConflateError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
}

/// Manual labels for unmatched reference polylines.
pub type Labels = BTreeMap<usize, Label>;

pub fn read_labels(bytes: &[u8]) -> Result<Labels, ConflateError> {
    let raw: BTreeMap<String, Label> =
        serde_json::from_slice(bytes).map_err(|e| ConflateError::Argument(format!("labels: {e}")))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<usize>()
                .map(|id| (id, v))
                .map_err(|_| ConflateError::Argument(format!("labels: '{k}' is not a reference polyline id")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
    Unlabeled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedChain {
    pub ways: Vec<Id>,
    pub nodes: Vec<Id>,
    pub geometry: Vec<[f64; 2]>,
}

/// Reported outcome for one reference polyline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub reference: usize,
    pub length: f64,
    pub lanelets: Vec<Id>,
    pub matched: Option<MatchedChain>,
    /// Best candidate's similarity, present even if it fell below the
    /// acceptance threshold.
    pub similarity: Option<Similarity>,
    pub searches: u32,
    pub buffer_width: f64,
    pub candidates: usize,
    pub classification: Classification,
}

/// Accepted matches split into TP/FP by score; the rest take their manual
/// label, if any.
pub fn classify_score(
    reference: usize,
    accepted_score: Option<f64>,
    labels: Option<&Labels>,
    tp_threshold: f64,
) -> Classification {
    match accepted_score {
        Some(s) if s >= tp_threshold => Classification::TruePositive,
        Some(_) => Classification::FalsePositive,
        None => match labels.and_then(|l| l.get(&reference)) {
            Some(Label::TrueNegative) => Classification::TrueNegative,
            Some(Label::FalseNegative) => Classification::FalseNegative,
            None => Classification::Unlabeled,
        },
    }
}

pub fn classify(m: &PolylineMatch, labels: Option<&Labels>, tp_threshold: f64) -> Classification {
    let accepted = m.best.as_ref().filter(|_| m.accepted).map(|b| b.similarity.score);
    classify_score(m.reference, accepted, labels, tp_threshold)
}

/// Recompute classifications of stored results, e.g. with a new label file.
pub fn reclassify(results: &mut [MatchResult], labels: Option<&Labels>, tp_threshold: f64) {
    for r in results {
        let accepted = r.matched.as_ref().and(r.similarity.as_ref()).map(|s| s.score);
        r.classification = classify_score(r.reference, accepted, labels, tp_threshold);
    }
}

pub fn match_results(
    refs: &[ReferencePolyline],
    matches: &[PolylineMatch],
    labels: Option<&Labels>,
    tp_threshold: f64,
) -> Vec<MatchResult> {
    refs.iter()
        .zip(matches)
        .map(|(r, m)| {
            debug_assert_eq!(r.id, m.reference);
            let matched = m.best.as_ref().filter(|_| m.accepted).map(|b| MatchedChain {
                ways: b.chain.ways.clone(),
                nodes: b.chain.nodes.clone(),
                geometry: b.chain.geometry.clone(),
            });
            MatchResult {
                reference: r.id,
                length: r.length,
                lanelets: r.lanelets.clone(),
                matched,
                similarity: m.best.as_ref().map(|b| b.similarity),
                searches: m.searches,
                buffer_width: m.buffer_width,
                candidates: m.candidate_count,
                classification: classify(m, labels, tp_threshold),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MatchMetrics {
    pub length_threshold: f64,
    /// Reference polylines longer than the threshold.
    pub considered: usize,
    pub matched: usize,
    pub match_rate: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub unlabeled: usize,
    pub labels_available: bool,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts and rates over polylines strictly longer than `length_threshold`.
/// Zero denominators give `None`; without labels recall is `None` as well.
pub fn precision_recall(results: &[MatchResult], length_threshold: f64, labels_available: bool) -> MatchMetrics {
    let mut m = MatchMetrics { length_threshold, labels_available, ..Default::default() };
    for r in results.iter().filter(|r| r.length > length_threshold) {
        m.considered += 1;
        if r.matched.is_some() {
            m.matched += 1;
        }
        match r.classification {
            Classification::TruePositive => m.true_positives += 1,
            Classification::FalsePositive => m.false_positives += 1,
            Classification::TrueNegative => m.true_negatives += 1,
            Classification::FalseNegative => m.false_negatives += 1,
            Classification::Unlabeled => m.unlabeled += 1,
        }
    }
    m.match_rate = ratio(m.matched, m.considered);
    m.precision = ratio(m.true_positives, m.true_positives + m.false_positives);
    m.recall = if labels_available { ratio(m.true_positives, m.true_positives + m.false_negatives) } else { None };
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(length: f64, c: Classification) -> MatchResult {
        let matched = matches!(c, Classification::TruePositive | Classification::FalsePositive)
            .then(|| MatchedChain { ways: vec![1], nodes: vec![1, 2], geometry: vec![[0.0, 0.0], [1.0, 0.0]] });
        MatchResult {
            reference: 0,
            length,
            lanelets: vec![],
            matched,
            similarity: None,
            searches: 1,
            buffer_width: 5.0,
            candidates: 0,
            classification: c,
        }
    }

    use Classification::*;

    #[test]
    fn all_true_positives() {
        let r: Vec<_> = (0..4).map(|_| result(10.0, TruePositive)).collect();
        let m = precision_recall(&r, 1.5, true);
        assert_eq!((m.precision, m.recall, m.match_rate), (Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn mixed_counts() {
        let r = [result(10.0, TruePositive), result(10.0, TruePositive), result(10.0, FalsePositive), result(10.0, FalseNegative)];
        let m = precision_recall(&r, 1.5, true);
        assert!((m.precision.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.match_rate, Some(0.75));
    }

    #[test]
    fn threshold_length_is_excluded() {
        let r = [result(1.5, FalsePositive), result(1.5000001, TruePositive)];
        let m = precision_recall(&r, 1.5, true);
        assert_eq!((m.considered, m.precision), (1, Some(1.0)));
    }

    #[test]
    fn zero_denominators_are_undefined() {
        let m = precision_recall(&[result(10.0, TrueNegative)], 1.5, true);
        assert_eq!((m.precision, m.recall), (None, None));
        assert_eq!(precision_recall(&[], 1.5, true).match_rate, None);
    }

    #[test]
    fn recall_needs_labels() {
        let m = precision_recall(&[result(10.0, TruePositive), result(10.0, Unlabeled)], 1.5, false);
        assert_eq!((m.precision, m.recall, m.unlabeled), (Some(1.0), None, 1));
    }

    #[test]
    fn reclassify_applies_labels() {
        let mut r = vec![result(10.0, Unlabeled), result(10.0, Unlabeled)];
        r[1].reference = 1;
        let labels: Labels = [(0, Label::FalseNegative)].into_iter().collect();
        reclassify(&mut r, Some(&labels), 0.8);
        assert_eq!((r[0].classification, r[1].classification), (FalseNegative, Unlabeled));
    }

    #[test]
    fn label_file() {
        let l = read_labels(br#"{"3": "TN", "12": "FN"}"#).unwrap();
        assert_eq!(l[&3], Label::TrueNegative);
        assert_eq!(l[&12], Label::FalseNegative);
        assert!(read_labels(br#"{"a": "TN"}"#).is_err());
        assert!(read_labels(br#"{"1": "TP"}"#).is_err());
    }
}
