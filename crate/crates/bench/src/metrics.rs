use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub returned: usize,
    pub relevant: usize,
}

/// Precision, recall and F1 of `returned` against `truth`. Duplicates in
/// `returned` count once. An undefined ratio is 0, except that returning
/// nothing when nothing is relevant scores 1 across the board.
pub fn metrics<'a, I, S>(returned: I, truth: &BTreeSet<String>) -> Metrics
where
    I: IntoIterator<Item = &'a S>,
    S: AsRef<str> + ?Sized + 'a,
{
    let returned: BTreeSet<&str> = returned.into_iter().map(AsRef::as_ref).collect();
    let tp = returned.iter().filter(|id| truth.contains(**id)).count();
    if returned.is_empty() && truth.is_empty() {
        return Metrics { precision: 1.0, recall: 1.0, f1: 1.0, true_positives: 0, returned: 0, relevant: 0 };
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, returned.len());
    let recall = ratio(tp, truth.len());
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Metrics { precision, recall, f1, true_positives: tp, returned: returned.len(), relevant: truth.len() }
}
