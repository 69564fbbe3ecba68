//! Hierarchical risk parity.
//!
//! 1. Correlations become distances `d = sqrt(0.5 * (1 - rho))`.
//! 2. Ward agglomerative clustering on those distances (Lance-Williams update).
//! 3. The dendrogram's left-to-right leaf order seriates the covariance matrix.
//! 4. Top-down bisection of the seriated list splits capital between the two
//!    halves in inverse proportion to their inverse-variance cluster variances.

use std::fmt::Write as _;

use thiserror::Error;

use crate::market_data::{CorrelationMatrix, CovarianceMatrix};
use crate::matrix::Matrix;
use crate::portfolio::{Method, Portfolio, PortfolioError};

#[derive(Debug, Error, PartialEq)]
pub enum HrpError {
    #[error("need at least {need} stocks, got {got}")]
    TooFewStocks { got: usize, need: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error("malformed linkage tree: {0}")]
    MalformedTree(String),
    #[error("zero variance for member {0}")]
    ZeroVariance(usize),
    #[error("empty cluster")]
    EmptyCluster,
    #[error("seriation order does not match covariance: {0}")]
    BadOrder(String),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
}

/// Symmetric, non-negative, zero-diagonal stock-to-stock distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    tickers: Vec<String>,
    matrix: Matrix,
}

impl DistanceMatrix {
    pub fn new(tickers: Vec<String>, matrix: Matrix) -> Result<Self, HrpError> {
        let n = tickers.len();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(HrpError::InvalidDistance(format!(
                "{n} tickers but matrix is {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for i in 0..n {
            if matrix[(i, i)] != 0.0 {
                return Err(HrpError::InvalidDistance(format!("d[{i}][{i}] != 0")));
            }
            for j in 0..n {
                let v = matrix[(i, j)];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(HrpError::InvalidDistance(format!("d[{i}][{j}] = {v}")));
                }
                if v != matrix[(j, i)] {
                    return Err(HrpError::InvalidDistance(format!("d[{i}][{j}] != d[{j}][{i}]")));
                }
            }
        }
        Ok(Self { tickers, matrix })
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.tickers.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

pub fn correlation_distance(corr: &CorrelationMatrix) -> DistanceMatrix {
    let n = corr.n();
    let m = corr.matrix();
    let d = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        // symmetrize on the upper triangle so d is exactly symmetric
        let rho = m[(i.min(j), i.max(j))];
        (0.5 * (1.0 - rho)).clamp(0.0, 1.0).sqrt()
    });
    DistanceMatrix {
        tickers: corr.tickers().to_vec(),
        matrix: d,
    }
}

/// One agglomeration step. Node ids below `N` are leaves; merge `k` creates node `N + k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkageTree {
    n_leaves: usize,
    merges: Vec<Merge>,
}

impl LinkageTree {
    /// Validates ids, counts, and height monotonicity.
    pub fn new(n_leaves: usize, merges: Vec<Merge>) -> Result<Self, HrpError> {
        if n_leaves == 0 {
            return Err(HrpError::MalformedTree("no leaves".into()));
        }
        if merges.len() + 1 != n_leaves {
            return Err(HrpError::MalformedTree(format!(
                "{} merges for {n_leaves} leaves",
                merges.len()
            )));
        }
        let mut counts = vec![1usize; n_leaves];
        let mut used = vec![false; 2 * n_leaves - 1];
        let mut prev_height = f64::NEG_INFINITY;
        for (k, m) in merges.iter().enumerate() {
            let node = n_leaves + k;
            for child in [m.left, m.right] {
                if child >= node {
                    return Err(HrpError::MalformedTree(format!(
                        "merge {k} references node {child} before it exists"
                    )));
                }
                if used[child] {
                    return Err(HrpError::MalformedTree(format!("node {child} merged twice")));
                }
                used[child] = true;
            }
            if m.left == m.right {
                return Err(HrpError::MalformedTree(format!("merge {k} joins a node with itself")));
            }
            let expected = counts[m.left] + counts[m.right];
            if m.count != expected {
                return Err(HrpError::MalformedTree(format!(
                    "merge {k} count {} != {expected}",
                    m.count
                )));
            }
            if !m.height.is_finite() || m.height < prev_height - 1e-12 {
                return Err(HrpError::MalformedTree(format!("merge {k} height not monotone")));
            }
            prev_height = m.height;
            counts.push(expected);
        }
        Ok(Self { n_leaves, merges })
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.n_leaves - 2
    }

    /// Children of an internal node, `None` for a leaf.
    pub fn children(&self, node: usize) -> Option<(usize, usize)> {
        node.checked_sub(self.n_leaves)
            .and_then(|k| self.merges.get(k))
            .map(|m| (m.left, m.right))
    }

    /// `left,right,height,count` CSV, one merge per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("left,right,height,count\n");
        for m in &self.merges {
            writeln!(out, "{},{},{},{}", m.left, m.right, m.height, m.count).unwrap();
        }
        out
    }

    /// Indented text rendering, root first, left subtree before right.
    pub fn dendrogram_text(&self, labels: &[String]) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root(), 0usize)];
        while let Some((node, depth)) = stack.pop() {
            let pad = "  ".repeat(depth);
            match self.children(node) {
                Some((l, r)) => {
                    let m = &self.merges[node - self.n_leaves];
                    writeln!(out, "{pad}+ [{}] height={:.6} count={}", node, m.height, m.count).unwrap();
                    stack.push((r, depth + 1));
                    stack.push((l, depth + 1));
                }
                None => {
                    let label = labels.get(node).map(String::as_str).unwrap_or("?");
                    writeln!(out, "{pad}- {label}").unwrap();
                }
            }
        }
        out
    }
}

/// Ward linkage over a distance matrix.
///
/// Cluster distances are updated with the Lance-Williams recurrence
/// `d(k, i∪j)² = ((n_i+n_k) d(k,i)² + (n_j+n_k) d(k,j)² - n_k d(i,j)²) / (n_i+n_j+n_k)`.
/// The closest pair merges at each step; exact ties go to the smallest
/// `(left, right)` node-id pair. The merged node's `left` is the smaller id.
pub fn ward_linkage(dist: &DistanceMatrix) -> Result<LinkageTree, HrpError> {
    let n = dist.n();
    if n < 2 {
        return Err(HrpError::TooFewStocks { got: n, need: 2 });
    }
    let total = 2 * n - 1;
    // squared distances between node ids; rows for dead nodes are ignored
    let mut d2 = Matrix::zeros(total, total);
    for i in 0..n {
        for j in 0..n {
            d2[(i, j)] = dist.get(i, j).powi(2);
        }
    }
    let mut size = vec![0usize; total];
    size[..n].fill(1);
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        // `active` is sorted, so pairs are visited in lexicographic id order
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                let v = d2[(i, j)];
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let (v, i, j) = best.expect("at least two active clusters");
        let new = n + step;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nk = size[k] as f64;
            let updated = (((ni + nk) * d2[(k, i)] + (nj + nk) * d2[(k, j)] - nk * v) / (ni + nj + nk)).max(0.0);
            d2[(k, new)] = updated;
            d2[(new, k)] = updated;
        }
        size[new] = size[i] + size[j];
        merges.push(Merge {
            left: i,
            right: j,
            height: v.sqrt(),
            count: size[new],
        });
        active.retain(|&k| k != i && k != j);
        active.push(new);
    }
    LinkageTree::new(n, merges)
}

/// Leaf sequence from a depth-first walk from the root, left child first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriationOrder(Vec<usize>);

impl SeriationOrder {
    /// Checks that `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self, HrpError> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(HrpError::BadOrder(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Self(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn quasi_diagonalize(tree: &LinkageTree) -> SeriationOrder {
    let mut order = Vec::with_capacity(tree.n_leaves());
    let mut stack = vec![tree.root()];
    while let Some(node) = stack.pop() {
        match tree.children(node) {
            Some((l, r)) => {
                stack.push(r);
                stack.push(l);
            }
            None => order.push(node),
        }
    }
    SeriationOrder(order)
}

/// Inverse-variance weights over `members`, in member order.
pub fn inverse_variance_weights(cov: &CovarianceMatrix, members: &[usize]) -> Result<Vec<f64>, HrpError> {
    if members.is_empty() {
        return Err(HrpError::EmptyCluster);
    }
    let inv = members
        .iter()
        .map(|&i| {
            let v = cov.variance(i);
            if v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(HrpError::ZeroVariance(i))
            }
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|x| x / total).collect())
}

/// Variance `wᵀ Σ w` of the inverse-variance portfolio on `members`.
pub fn cluster_variance(cov: &CovarianceMatrix, members: &[usize]) -> Result<f64, HrpError> {
    let w = inverse_variance_weights(cov, members)?;
    Ok(cov.matrix().select(members).quadratic_form(&w))
}

/// Top-down allocation over a seriation order. Each list splits into a left
/// half of `ceil(k/2)` items and a right half; the left half's weights are
/// scaled by `1 - V_L / (V_L + V_R)` and the right half's by the remainder.
pub fn recursive_bisection(cov: &CovarianceMatrix, order: &SeriationOrder) -> Result<Portfolio, HrpError> {
    let n = cov.n();
    if order.len() != n {
        return Err(HrpError::BadOrder(format!("{} entries for {n} stocks", order.len())));
    }
    if n == 0 {
        return Err(HrpError::TooFewStocks { got: 0, need: 1 });
    }
    let mut weights = vec![1.0; n];
    let mut pending: Vec<&[usize]> = vec![order.as_slice()];
    while let Some(items) = pending.pop() {
        if items.len() < 2 {
            continue;
        }
        let (left, right) = items.split_at(items.len().div_ceil(2));
        let vl = cluster_variance(cov, left)?;
        let vr = cluster_variance(cov, right)?;
        let alpha = 1.0 - vl / (vl + vr);
        for &i in left {
            weights[i] *= alpha;
        }
        for &i in right {
            weights[i] *= 1.0 - alpha;
        }
        pending.push(right);
        pending.push(left);
    }
    Ok(Portfolio::new(cov.tickers().to_vec(), weights, Method::Hrp)?)
}

/// Everything an HRP fit produces.
#[derive(Debug, Clone)]
pub struct HrpFit {
    pub portfolio: Portfolio,
    pub tree: LinkageTree,
    pub order: SeriationOrder,
}

pub fn hrp_portfolio(cov: &CovarianceMatrix, corr: &CorrelationMatrix) -> Result<HrpFit, HrpError> {
    let tree = ward_linkage(&correlation_distance(corr))?;
    let order = quasi_diagonalize(&tree);
    let portfolio = recursive_bisection(cov, &order)?;
    Ok(HrpFit { portfolio, tree, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    fn cov_from(m: Matrix) -> CovarianceMatrix {
        CovarianceMatrix::new(names(m.rows()), m).unwrap()
    }

    fn dist_from(m: Matrix) -> DistanceMatrix {
        DistanceMatrix::new(names(m.rows()), m).unwrap()
    }

    fn corr_with(rho: f64) -> CorrelationMatrix {
        CorrelationMatrix::new(names(2), Matrix::from_rows(&[[1.0, rho], [rho, 1.0]])).unwrap()
    }

    #[test]
    fn distance_endpoints() {
        assert_eq!(correlation_distance(&corr_with(1.0)).get(0, 1), 0.0);
        assert_eq!(correlation_distance(&corr_with(-1.0)).get(0, 1), 1.0);
        assert!((correlation_distance(&corr_with(0.5)).get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(correlation_distance(&corr_with(0.5)).get(1, 1), 0.0);
    }

    #[test]
    fn two_leaves_merge_once() {
        let t = ward_linkage(&dist_from(Matrix::from_rows(&[[0.0, 0.3], [0.3, 0.0]]))).unwrap();
        assert_eq!(
            t.merges(),
            &[Merge {
                left: 0,
                right: 1,
                height: 0.3,
                count: 2
            }]
        );
        assert_eq!(quasi_diagonalize(&t).as_slice(), &[0, 1]);
    }

    #[test]
    fn closest_pair_merges_first() {
        let d = dist_from(Matrix::from_rows(&[[0.0, 0.1, 0.9], [0.1, 0.0, 0.9], [0.9, 0.9, 0.0]]));
        let t = ward_linkage(&d).unwrap();
        assert_eq!((t.merges()[0].left, t.merges()[0].right), (0, 1));
        // d(2, {0,1})^2 = (2*0.81 + 2*0.81 - 0.01) / 3
        let h = ((2.0 * 0.81 + 2.0 * 0.81 - 0.01) / 3.0f64).sqrt();
        assert_eq!(
            t.merges()[1],
            Merge {
                left: 2,
                right: 3,
                height: h,
                count: 3
            }
        );
        assert_eq!(quasi_diagonalize(&t).as_slice(), &[2, 0, 1]);
    }

    #[test]
    fn ties_break_on_smallest_pair() {
        let d = dist_from(Matrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.5 }));
        let t = ward_linkage(&d).unwrap();
        assert_eq!((t.merges()[0].left, t.merges()[0].right), (0, 1));
    }

    #[test]
    fn needs_two_stocks() {
        let d = dist_from(Matrix::zeros(1, 1));
        assert_eq!(
            ward_linkage(&d).unwrap_err(),
            HrpError::TooFewStocks { got: 1, need: 2 }
        );
    }

    #[test]
    fn hand_built_tree_expands_in_order() {
        // (0,1)->4, (2,3)->5, (4,5)->6
        let tree = LinkageTree::new(
            4,
            vec![
                Merge {
                    left: 0,
                    right: 1,
                    height: 0.1,
                    count: 2,
                },
                Merge {
                    left: 2,
                    right: 3,
                    height: 0.2,
                    count: 2,
                },
                Merge {
                    left: 4,
                    right: 5,
                    height: 0.5,
                    count: 4,
                },
            ],
        )
        .unwrap();
        assert_eq!(quasi_diagonalize(&tree).as_slice(), &[0, 1, 2, 3]);
        let csv = tree.to_csv();
        assert_eq!(csv.lines().next(), Some("left,right,height,count"));
        assert_eq!(csv.lines().nth(3), Some("4,5,0.5,4"));
        let text = tree.dendrogram_text(&names(4));
        assert!(text.starts_with("+ [6]"));
        assert_eq!(text.lines().filter(|l| l.trim_start().starts_with('-')).count(), 4);
    }

    #[test]
    fn malformed_trees_rejected() {
        let m = |l, r, h, c| Merge {
            left: l,
            right: r,
            height: h,
            count: c,
        };
        assert!(LinkageTree::new(3, vec![m(0, 1, 0.1, 2)]).is_err());
        assert!(LinkageTree::new(3, vec![m(0, 1, 0.1, 2), m(0, 2, 0.2, 2)]).is_err());
        assert!(LinkageTree::new(3, vec![m(0, 1, 0.1, 2), m(2, 3, 0.2, 2)]).is_err());
        assert!(LinkageTree::new(3, vec![m(0, 1, 0.3, 2), m(2, 3, 0.2, 3)]).is_err());
        assert!(LinkageTree::new(3, vec![m(0, 4, 0.3, 2), m(2, 3, 0.4, 3)]).is_err());
    }

    #[test]
    fn ivp_cases() {
        let c = cov_from(Matrix::diagonal(&[1.0, 3.0, 1.0]));
        assert_eq!(inverse_variance_weights(&c, &[1]).unwrap(), vec![1.0]);
        assert_eq!(inverse_variance_weights(&c, &[0, 2]).unwrap(), vec![0.5, 0.5]);
        let w = inverse_variance_weights(&c, &[0, 1]).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        let z = cov_from(Matrix::diagonal(&[1.0, 0.0]));
        assert_eq!(
            inverse_variance_weights(&z, &[0, 1]).unwrap_err(),
            HrpError::ZeroVariance(1)
        );
    }

    #[test]
    fn cluster_variance_cases() {
        let c = cov_from(Matrix::from_rows(&[[1.0, 0.5, 0.0], [0.5, 3.0, 0.0], [0.0, 0.0, 1.0]]));
        assert_eq!(cluster_variance(&c, &[1]).unwrap(), 3.0);
        assert!((cluster_variance(&c, &[0, 2]).unwrap() - 0.5).abs() < 1e-15);
        assert!((cluster_variance(&c, &[0, 1]).unwrap() - 0.9375).abs() < 1e-15);
        assert_eq!(cluster_variance(&c, &[]).unwrap_err(), HrpError::EmptyCluster);
    }

    #[test]
    fn bisection_cases() {
        let one = cov_from(Matrix::diagonal(&[0.04]));
        let p = recursive_bisection(&one, &SeriationOrder::new(vec![0]).unwrap()).unwrap();
        assert_eq!(p.weights(), &[1.0]);

        let two = cov_from(Matrix::diagonal(&[1.0, 3.0]));
        let p = recursive_bisection(&two, &SeriationOrder::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(p.weights(), &[0.75, 0.25]);

        let four = cov_from(Matrix::diagonal(&[1.0; 4]));
        let p = recursive_bisection(&four, &SeriationOrder::new(vec![2, 0, 3, 1]).unwrap()).unwrap();
        assert_eq!(p.weights(), &[0.25; 4]);
        assert_eq!(p.method(), Method::Hrp);
    }

    #[test]
    fn odd_lists_put_extra_item_left() {
        // order [0,1,2] splits as [0,1] | [2]; V_L = 0.5, V_R = 1 -> alpha = 2/3
        let c = cov_from(Matrix::diagonal(&[1.0, 1.0, 1.0]));
        let p = recursive_bisection(&c, &SeriationOrder::new(vec![0, 1, 2]).unwrap()).unwrap();
        let w = p.weights();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / 3.0).abs() < 1e-15);
        let c = cov_from(Matrix::diagonal(&[1.0, 2.0, 4.0]));
        let p = recursive_bisection(&c, &SeriationOrder::new(vec![0, 1, 2]).unwrap()).unwrap();
        // V_L = ivp var of {1,2} = 2/3, V_R = 4 -> alpha = 6/7
        let w = p.weights();
        assert!((w[2] - 1.0 / 7.0).abs() < 1e-15);
        assert!((w[0] - 6.0 / 7.0 * 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bad_order_rejected() {
        assert!(SeriationOrder::new(vec![0, 0]).is_err());
        assert!(SeriationOrder::new(vec![1, 2]).is_err());
        let c = cov_from(Matrix::diagonal(&[1.0, 1.0]));
        assert!(matches!(
            recursive_bisection(&c, &SeriationOrder::new(vec![0]).unwrap()),
            Err(HrpError::BadOrder(_))
        ));
    }

    /// Random correlation matrix from a random factor loading, plus variances.
    fn random_cov() -> impl Strategy<Value = Matrix> {
        (2usize..=8).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), n),
                prop::collection::vec(0.5f64..3.0, n),
            )
                .prop_map(move |(load, vol)| {
                    let raw = Matrix::from_fn(n, n, |i, j| {
                        let d: f64 = load[i].iter().zip(&load[j]).map(|(a, b)| a * b).sum();
                        d + if i == j { 0.3 } else { 0.0 }
                    });
                    Matrix::from_fn(n, n, |i, j| {
                        let rho = raw[(i, j)] / (raw[(i, i)] * raw[(j, j)]).sqrt();
                        rho * vol[i] * vol[j] * 1e-4
                    })
                })
        })
    }

    fn corr_of(c: &CovarianceMatrix) -> CorrelationMatrix {
        crate::market_data::correlation_matrix(c).unwrap()
    }

    proptest! {
        #[test]
        fn hrp_weights_on_simplex(m in random_cov()) {
            let c = cov_from(m);
            let fit = hrp_portfolio(&c, &corr_of(&c)).unwrap();
            let w = fit.portfolio.weights();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn order_is_permutation_and_heights_monotone(m in random_cov()) {
            let c = cov_from(m);
            let fit = hrp_portfolio(&c, &corr_of(&c)).unwrap();
            prop_assert!(SeriationOrder::new(fit.order.as_slice().to_vec()).is_ok());
            for w in fit.tree.merges().windows(2) {
                prop_assert!(w[1].height >= w[0].height - 1e-12);
            }
            prop_assert_eq!(fit.tree.merges().last().unwrap().count, c.n());
            // first merge's two leaves are adjacent in the order
            let first = fit.tree.merges()[0];
            let pos = |x: usize| fit.order.as_slice().iter().position(|&v| v == x).unwrap();
            prop_assert_eq!(pos(first.left).abs_diff(pos(first.right)), 1);
        }

        #[test]
        fn scale_free(m in random_cov(), k in 0.01f64..100.0) {
            let c = cov_from(m);
            let a = hrp_portfolio(&c, &corr_of(&c)).unwrap();
            let scaled = c.scaled(k);
            let b = hrp_portfolio(&scaled, &corr_of(&scaled)).unwrap();
            prop_assert_eq!(&a.tree.merges().iter().map(|m| (m.left, m.right)).collect::<Vec<_>>(),
                            &b.tree.merges().iter().map(|m| (m.left, m.right)).collect::<Vec<_>>());
            for (x, y) in a.portfolio.weights().iter().zip(b.portfolio.weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn bisection_equivariant_under_relabeling(m in random_cov(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let c = cov_from(m);
            let n = c.n();
            let fit = hrp_portfolio(&c, &corr_of(&c)).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut crate::seed::rng(seed));
            // stock i of the original is stock perm[i] of the relabeled problem
            let mut inv = vec![0; n];
            for (i, &p) in perm.iter().enumerate() { inv[p] = i; }
            let relabeled = cov_from(Matrix::from_fn(n, n, |a, b| c.matrix()[(inv[a], inv[b])]));
            let mapped = SeriationOrder::new(fit.order.as_slice().iter().map(|&i| perm[i]).collect()).unwrap();
            let p = recursive_bisection(&relabeled, &mapped).unwrap();
            for i in 0..n {
                prop_assert!((p.weights()[perm[i]] - fit.portfolio.weights()[i]).abs() < 1e-12);
            }
            // the clustering itself is relabeling-equivariant as a set partition
            let t2 = ward_linkage(&correlation_distance(&corr_of(&relabeled))).unwrap();
            let clusters = |t: &LinkageTree, map: &dyn Fn(usize) -> usize| {
                let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![map(i)]).collect();
                let mut out = Vec::new();
                for mg in t.merges() {
                    let mut s = [members[mg.left].clone(), members[mg.right].clone()].concat();
                    s.sort();
                    members.push(s.clone());
                    out.push(s);
                }
                out
            };
            prop_assert_eq!(clusters(&fit.tree, &|i| perm[i]), clusters(&t2, &|i| i));
        }
    }
}
