//! CART decision trees for regression (variance reduction) and
//! classification (Gini impurity decrease).
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values. Among equally good splits the lowest feature index wins, then the
//! lowest threshold. Each feature column is presorted once and partitioned
//! stably as the tree grows, so a level costs O(n·d).

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{check_dim, Matrix};

/// Relative slack under which two split gains count as tied.
const TIE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Real-valued targets indexed by row.
    Values(&'a [f64]),
    /// Class indices in `0..n_classes`, indexed by row.
    Classes { labels: &'a [usize], n_classes: usize },
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Values(v) => v.len(),
            Targets::Classes { labels, .. } => labels.len(),
        }
    }
}

/// Which features a split may consider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSampling {
    All,
    /// Draw this many features without replacement at every split.
    PerSplit(usize),
    /// Restrict every split to a fixed feature set.
    Subset(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease, weighted by sample count.
        gain: f64,
    },
    /// Mean target for regression trees, class index for classification.
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<Node>,
}

/// Feature columns of a row multiset, each sorted by value then row id.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    order: Vec<Vec<usize>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix, rows: &[usize]) -> SortedColumns {
        let order = (0..x.cols())
            .map(|f| {
                let mut col = rows.to_vec();
                col.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
                col
            })
            .collect();
        SortedColumns { order }
    }

    fn len(&self) -> usize {
        self.order.first().map_or(0, Vec::len)
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'a, 'r> {
    x: &'a Matrix,
    targets: Targets<'a>,
    params: &'a TreeParams,
    sampling: &'a FeatureSampling,
    rng: Option<&'r mut ChaCha8Rng>,
    order: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    nodes: Vec<Node>,
    class_buf: Vec<f64>,
}

impl Builder<'_, '_> {
    fn rows(&self, start: usize, end: usize) -> &[usize] {
        &self.order[0][start..end]
    }

    /// Leaf value, or `None` when the node still has impurity.
    fn leaf_value(&mut self, start: usize, end: usize) -> (f64, bool) {
        let n = end - start;
        match self.targets {
            Targets::Values(y) => {
                let rows = &self.order[0][start..end];
                let sum: f64 = rows.iter().map(|&r| y[r]).sum();
                let first = y[rows[0]];
                let pure = rows.iter().all(|&r| y[r] == first);
                (sum / n as f64, pure)
            }
            Targets::Classes { labels, n_classes } => {
                self.class_buf.clear();
                self.class_buf.resize(n_classes, 0.0);
                for &r in &self.order[0][start..end] {
                    self.class_buf[labels[r]] += 1.0;
                }
                let mut best = 0;
                for k in 1..n_classes {
                    if self.class_buf[k] > self.class_buf[best] {
                        best = k;
                    }
                }
                (best as f64, self.class_buf[best] == n as f64)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.cols();
        match self.sampling {
            FeatureSampling::All => (0..d).collect(),
            FeatureSampling::Subset(s) => s.clone(),
            FeatureSampling::PerSplit(m) if *m >= d => (0..d).collect(),
            FeatureSampling::PerSplit(m) => {
                let rng = self
                    .rng
                    .as_deref_mut()
                    .expect("per-split feature sampling requires an rng");
                let mut f = index::sample(rng, d, *m).into_vec();
                f.sort_unstable();
                f
            }
        }
    }

    fn best_split(&mut self, start: usize, end: usize) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.params.min_samples_leaf.max(1);
        let features = self.candidate_features();
        let mut best: Option<Candidate> = None;
        let x = self.x;

        match self.targets {
            Targets::Values(y) => {
                let rows = self.rows(start, end);
                let sum: f64 = rows.iter().map(|&r| y[r]).sum();
                let mean = sum / n as f64;
                let sse: f64 = rows.iter().map(|&r| (y[r] - mean).powi(2)).sum();
                let eps = TIE_EPS * sse;
                let base = sum * sum / n as f64;
                for &f in &features {
                    let col = &self.order[f][start..end];
                    let mut left_sum = 0.0;
                    for i in 0..n - 1 {
                        left_sum += y[col[i]];
                        let nl = i + 1;
                        let nr = n - nl;
                        if nl < min_leaf {
                            continue;
                        }
                        if nr < min_leaf {
                            break;
                        }
                        let (v, v_next) = (x.get(col[i], f), x.get(col[i + 1], f));
                        if v_next <= v {
                            continue;
                        }
                        let right_sum = sum - left_sum;
                        let gain = left_sum * left_sum / nl as f64
                            + right_sum * right_sum / nr as f64
                            - base;
                        consider(&mut best, f, v, v_next, gain, eps);
                    }
                }
                best.filter(|c| c.gain > eps)
            }
            Targets::Classes { labels, n_classes } => {
                let mut total = vec![0.0f64; n_classes];
                for &r in self.rows(start, end) {
                    total[labels[r]] += 1.0;
                }
                let total_sq: f64 = total.iter().map(|c| c * c).sum();
                let base = total_sq / n as f64;
                let eps = TIE_EPS * n as f64;
                let mut left = vec![0.0f64; n_classes];
                for &f in &features {
                    let col = &self.order[f][start..end];
                    left.iter_mut().for_each(|c| *c = 0.0);
                    let (mut left_sq, mut right_sq) = (0.0, total_sq);
                    for i in 0..n - 1 {
                        let k = labels[col[i]];
                        let right_k = total[k] - left[k];
                        left_sq += 2.0 * left[k] + 1.0;
                        right_sq -= 2.0 * right_k - 1.0;
                        left[k] += 1.0;
                        let nl = i + 1;
                        let nr = n - nl;
                        if nl < min_leaf {
                            continue;
                        }
                        if nr < min_leaf {
                            break;
                        }
                        let (v, v_next) = (x.get(col[i], f), x.get(col[i + 1], f));
                        if v_next <= v {
                            continue;
                        }
                        let gain = left_sq / nl as f64 + right_sq / nr as f64 - base;
                        consider(&mut best, f, v, v_next, gain, eps);
                    }
                }
                best.filter(|c| c.gain > eps)
            }
        }
    }

    /// Stable partition of every feature column in `start..end`.
    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        for &r in &self.order[0][start..end] {
            self.goes_left[r] = self.x.get(r, feature) <= threshold;
        }
        let mut n_left = 0;
        for col in &mut self.order {
            self.scratch.clear();
            let mut w = start;
            for i in start..end {
                let r = col[i];
                if self.goes_left[r] {
                    col[w] = r;
                    w += 1;
                } else {
                    self.scratch.push(r);
                }
            }
            col[w..end].copy_from_slice(&self.scratch);
            n_left = w - start;
        }
        n_left
    }

    fn build(mut self) -> Vec<Node> {
        let n = self.order[0].len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let mut stack = vec![(0usize, 0usize, n, 0usize)];
        while let Some((idx, start, end, depth)) = stack.pop() {
            let (value, pure) = self.leaf_value(start, end);
            let min_leaf = self.params.min_samples_leaf.max(1);
            let can_split = !pure
                && end - start >= 2 * min_leaf
                && self.params.max_depth.is_none_or(|m| depth < m);
            let split = if can_split {
                self.best_split(start, end)
            } else {
                None
            };
            let Some(c) = split else {
                self.nodes[idx] = Node::Leaf { value };
                continue;
            };
            let n_left = self.partition(start, end, c.feature, c.threshold);
            let left = self.nodes.len();
            let right = left + 1;
            self.nodes.push(Node::Leaf { value: 0.0 });
            self.nodes.push(Node::Leaf { value: 0.0 });
            self.nodes[idx] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
                gain: c.gain,
            };
            stack.push((right, start + n_left, end, depth + 1));
            stack.push((left, start, start + n_left, depth + 1));
        }
        self.nodes
    }
}

fn consider(best: &mut Option<Candidate>, feature: usize, v: f64, v_next: f64, gain: f64, eps: f64) {
    if best.as_ref().is_some_and(|b| gain <= b.gain + eps) {
        return;
    }
    let mut threshold = 0.5 * (v + v_next);
    if threshold >= v_next {
        threshold = v;
    }
    *best = Some(Candidate {
        feature,
        threshold,
        gain,
    });
}

impl DecisionTree {
    /// Grows a tree on every row of `x`.
    pub fn fit(
        x: &Matrix,
        targets: Targets<'_>,
        params: &TreeParams,
        sampling: &FeatureSampling,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecisionTree> {
        let rows: Vec<usize> = (0..x.rows()).collect();
        Self::fit_rows(x, targets, &rows, params, sampling, rng)
    }

    /// Grows a tree on a multiset of rows (duplicates allowed, as in a
    /// bootstrap resample).
    pub fn fit_rows(
        x: &Matrix,
        targets: Targets<'_>,
        rows: &[usize],
        params: &TreeParams,
        sampling: &FeatureSampling,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecisionTree> {
        check_dim(x.rows(), targets.len())?;
        let sorted = SortedColumns::new(x, rows);
        Self::fit_presorted(x, targets, &sorted, params, sampling, rng)
    }

    pub fn fit_presorted(
        x: &Matrix,
        targets: Targets<'_>,
        sorted: &SortedColumns,
        params: &TreeParams,
        sampling: &FeatureSampling,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecisionTree> {
        if sorted.len() == 0 || x.cols() == 0 {
            return Err(Error::InsufficientData("cannot fit a tree on empty input".into()));
        }
        check_dim(x.rows(), targets.len())?;
        if let Targets::Classes { labels, n_classes } = targets {
            if labels.iter().any(|&l| l >= n_classes) {
                return Err(Error::InvalidConfig("class label out of range".into()));
            }
        }
        match sampling {
            FeatureSampling::PerSplit(0) => {
                return Err(Error::InvalidConfig("features per split must be at least 1".into()))
            }
            FeatureSampling::PerSplit(m) if *m < x.cols() && rng.is_none() => {
                return Err(Error::InvalidConfig(
                    "per-split feature sampling requires an rng".into(),
                ))
            }
            FeatureSampling::Subset(s) if s.is_empty() || s.iter().any(|&f| f >= x.cols()) => {
                return Err(Error::InvalidConfig("invalid feature subset".into()))
            }
            _ => {}
        }
        let builder = Builder {
            x,
            targets,
            params,
            sampling,
            rng,
            order: sorted.order.clone(),
            goes_left: vec![false; x.rows()],
            scratch: Vec::new(),
            nodes: Vec::new(),
            class_buf: Vec::new(),
        };
        Ok(DecisionTree {
            n_features: x.cols(),
            nodes: builder.build(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Leaf value reached by `row`; the caller checks the dimension.
    #[inline]
    pub fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        check_dim(self.n_features, row.len())?;
        Ok(self.predict_unchecked(row))
    }

    /// Total gain credited to each feature.
    pub fn feature_gains(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                g[*feature] += gain;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_is_single_leaf() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let t = DecisionTree::fit(&x, Targets::Values(&[4.0; 3]), &TreeParams::default(), &FeatureSampling::All, None).unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { value: 4.0 }]);
    }

    #[test]
    fn two_point_split() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let p = TreeParams {
            max_depth: Some(1),
            min_samples_leaf: 1,
        };
        let t = DecisionTree::fit(&x, Targets::Values(&[0.0, 10.0]), &p, &FeatureSampling::All, None).unwrap();
        match t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict(&[0.0]).unwrap(), 0.0);
        assert_eq!(t.predict(&[1.0]).unwrap(), 10.0);
        assert!(t.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_features_give_leaf() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        let t = DecisionTree::fit(&x, Targets::Values(&[0.0, 1.0, 2.0]), &TreeParams::default(), &FeatureSampling::All, None).unwrap();
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn empty_input_rejected() {
        let x = Matrix::zeros(0, 2);
        assert!(DecisionTree::fit(&x, Targets::Values(&[]), &TreeParams::default(), &FeatureSampling::All, None).is_err());
    }

    #[test]
    fn gini_split_separates_classes() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
        let labels = [0, 0, 1, 1];
        let t = DecisionTree::fit(
            &x,
            Targets::Classes { labels: &labels, n_classes: 2 },
            &TreeParams::default(),
            &FeatureSampling::All,
            None,
        )
        .unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[0.5, 5.0]).unwrap(), 0.0);
        assert_eq!(t.predict(&[2.5, 5.0]).unwrap(), 1.0);
        // n·gini(parent) = 4·0.5 = 2, children pure
        assert!((t.feature_gains()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn depth_and_leaf_limits_hold() {
        let rows: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let p = TreeParams {
            max_depth: Some(3),
            min_samples_leaf: 4,
        };
        let t = DecisionTree::fit(&x, Targets::Values(&y), &p, &FeatureSampling::All, None).unwrap();
        assert!(t.depth() <= 3);
        // every leaf holds at least 4 samples
        let mut counts = std::collections::HashMap::new();
        for r in &rows {
            let leaf = t.predict_unchecked(r).to_bits();
            *counts.entry(leaf).or_insert(0) += 1;
        }
        assert!(counts.values().all(|&c| c >= 4));
    }
}
