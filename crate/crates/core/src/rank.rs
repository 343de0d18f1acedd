//! Bounded top-k selection shared by the record index and the context store.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Higher score is better; equal scores prefer the smaller key.
#[derive(Debug)]
struct Ranked<K> {
    score: f64,
    key: K,
}

impl<K: Ord> PartialEq for Ranked<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K: Ord> Eq for Ranked<K> {}

impl<K: Ord> PartialOrd for Ranked<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K: Ord> Ord for Ranked<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.key.cmp(&self.key))
    }
}

/// Returns the best `k` items, best first, in O(n log k).
pub(crate) fn top_k<K: Ord>(items: impl IntoIterator<Item = (f64, K)>, k: usize) -> Vec<(f64, K)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ranked<K>>> = BinaryHeap::with_capacity(k + 1);
    for (score, key) in items {
        heap.push(Reverse(Ranked { score, key }));
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut out: Vec<_> = heap.into_iter().map(|Reverse(r)| r).collect();
    out.sort_by(|a, b| b.cmp(a));
    out.into_iter().map(|r| (r.score, r.key)).collect()
}
