//! Region-correlation adjacency built from training-set label statistics.
//!
//! For every pair of regions and every label, we count the images where
//! both regions carry the label (intersection) and where at least one does
//! (union). The per-pair score is the mean over labels of
//! intersection/union; a label with an empty union contributes 0. The raw
//! score matrix is thresholded to a binary graph and then normalized for
//! propagation as D^{-1/2} (B + I) D^{-1/2}.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-(region, region, label) intersection/union counts over a training
/// sequence. Counts are additive, so shards may be merged.
#[derive(Clone, Debug, PartialEq)]
pub struct CooccurrenceStats {
    regions: usize,
    labels: usize,
    image_count: u64,
    intersection: Vec<u64>,
    union: Vec<u64>,
}

impl CooccurrenceStats {
    pub fn new(regions: usize, labels: usize) -> Self {
        let n = regions * regions * labels;
        Self {
            regions,
            labels,
            image_count: 0,
            intersection: vec![0; n],
            union: vec![0; n],
        }
    }

    pub fn regions(&self) -> usize {
        self.regions
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn image_count(&self) -> u64 {
        self.image_count
    }

    fn idx(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.regions + j) * self.labels + m
    }

    pub fn intersection(&self, i: usize, j: usize, m: usize) -> u64 {
        self.intersection[self.idx(i, j, m)]
    }

    pub fn union(&self, i: usize, j: usize, m: usize) -> u64 {
        self.union[self.idx(i, j, m)]
    }

    /// Fold one image's k x M binary label matrix into the counts.
    pub fn add_image(&mut self, labels: &Matrix) -> Result<()> {
        if labels.shape() != (self.regions, self.labels) {
            return Err(Error::Shape {
                op: "accumulate_stats",
                left_rows: self.regions,
                left_cols: self.labels,
                right_rows: labels.rows(),
                right_cols: labels.cols(),
            });
        }
        if labels.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data("label tensor entries must be exactly 0 or 1".into()));
        }
        for m in 0..self.labels {
            for i in 0..self.regions {
                let yi = labels[(i, m)] == 1.0;
                for j in 0..self.regions {
                    let yj = labels[(j, m)] == 1.0;
                    let at = self.idx(i, j, m);
                    if yi && yj {
                        self.intersection[at] += 1;
                    }
                    if yi || yj {
                        self.union[at] += 1;
                    }
                }
            }
        }
        self.image_count += 1;
        Ok(())
    }

    /// Merge counts from another shard over a disjoint set of images.
    pub fn merge(&mut self, other: &CooccurrenceStats) -> Result<()> {
        if self.regions != other.regions || self.labels != other.labels {
            return Err(Error::Contract(format!(
                "cannot merge stats over {}x{} with {}x{}",
                self.regions, self.labels, other.regions, other.labels
            )));
        }
        for (a, b) in self.intersection.iter_mut().zip(&other.intersection) {
            *a += b;
        }
        for (a, b) in self.union.iter_mut().zip(&other.union) {
            *a += b;
        }
        self.image_count += other.image_count;
        Ok(())
    }
}

/// Exact co-occurrence counts over a full training sequence, in one pass.
/// The result is independent of image order.
pub fn accumulate_stats<'a, I>(regions: usize, labels: usize, images: I) -> Result<CooccurrenceStats>
where
    I: IntoIterator<Item = &'a Matrix>,
{
    let mut stats = CooccurrenceStats::new(regions, labels);
    for image in images {
        stats.add_image(image)?;
    }
    Ok(stats)
}

/// Raw k x k correlation matrix: mean over labels of intersection/union,
/// with empty-union label terms contributing 0.
pub fn jaccard_matrix(stats: &CooccurrenceStats) -> Matrix {
    let k = stats.regions;
    let m_count = stats.labels;
    Matrix::from_fn(k, k, |i, j| {
        if m_count == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for m in 0..m_count {
            let union = stats.union(i, j, m);
            if union > 0 {
                acc += stats.intersection(i, j, m) as f64 / union as f64;
            }
        }
        acc / m_count as f64
    })
}

/// Binary adjacency: 1 where `raw >= tau`, else 0. The boundary is
/// inclusive.
pub fn threshold(raw: &Matrix, tau: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(raw.map(|v| if v >= tau { 1.0 } else { 0.0 }))
}

/// Symmetric propagation normalization with self-loops:
/// D^{-1/2} (B + I) D^{-1/2}, where D holds the row sums of B + I.
///
/// An isolated region keeps self-weight exactly 1.
pub fn normalize(binary: &Matrix) -> Matrix {
    let k = binary.rows();
    let mut with_loops = binary.clone();
    for i in 0..k {
        with_loops[(i, i)] += 1.0;
    }
    let degrees: Vec<f64> = (0..k).map(|i| with_loops.row(i).iter().sum()).collect();
    Matrix::from_fn(k, k, |i, j| with_loops[(i, j)] / (degrees[i] * degrees[j]).sqrt())
}

/// Raw, thresholded, and normalized views of the region graph.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyMatrix {
    pub raw: Matrix,
    pub binary: Matrix,
    pub normalized: Matrix,
    pub tau: f64,
}

impl AdjacencyMatrix {
    /// The full pipeline: Jaccard scores, threshold at `tau`, normalize.
    pub fn from_stats(stats: &CooccurrenceStats, tau: f64) -> Result<Self> {
        let raw = jaccard_matrix(stats);
        let binary = threshold(&raw, tau)?;
        let normalized = normalize(&binary);
        Ok(Self { raw, binary, normalized, tau })
    }

    pub fn regions(&self) -> usize {
        self.raw.rows()
    }

    /// Off-diagonal edges (i < j) of the binary graph.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let k = self.regions();
        let mut out = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                if self.binary[(i, j)] == 1.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label_image(k: usize, m: usize, positives: &[(usize, usize)]) -> Matrix {
        let mut out = Matrix::zeros(k, m);
        for &(r, l) in positives {
            out[(r, l)] = 1.0;
        }
        out
    }

    #[test]
    fn empty_sequence_has_zero_counts() {
        let stats = accumulate_stats(3, 2, []).unwrap();
        assert_eq!(stats.image_count(), 0);
        for i in 0..3 {
            for j in 0..3 {
                for m in 0..2 {
                    assert_eq!(stats.intersection(i, j, m), 0);
                    assert_eq!(stats.union(i, j, m), 0);
                }
            }
        }
        // jaccard over no evidence is all zeros
        assert_eq!(jaccard_matrix(&stats), Matrix::zeros(3, 3));
    }

    #[test]
    fn single_image_single_pair() {
        let img = label_image(2, 1, &[(0, 0), (1, 0)]);
        let stats = accumulate_stats(2, 1, [&img]).unwrap();
        assert_eq!(stats.intersection(0, 1, 0), 1);
        assert_eq!(stats.union(0, 1, 0), 1);
    }

    #[test]
    fn three_image_set_enumeration() {
        // region A positive in {img1, img2}, region B positive in {img2, img3}
        let imgs = [
            label_image(2, 1, &[(0, 0)]),
            label_image(2, 1, &[(0, 0), (1, 0)]),
            label_image(2, 1, &[(1, 0)]),
        ];
        let stats = accumulate_stats(2, 1, imgs.iter()).unwrap();
        assert_eq!(stats.intersection(0, 1, 0), 1);
        assert_eq!(stats.union(0, 1, 0), 3);
        let j = jaccard_matrix(&stats);
        assert!((j[(0, 1)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(j[(0, 1)], j[(1, 0)]);
    }

    #[test]
    fn self_similarity_is_one_when_every_label_occurs() {
        let imgs = [label_image(2, 2, &[(0, 0), (0, 1)])];
        let j = jaccard_matrix(&accumulate_stats(2, 2, imgs.iter()).unwrap());
        assert_eq!(j[(0, 0)], 1.0);
        // region 1 never has any label: diagonal term stays 0
        assert_eq!(j[(1, 1)], 0.0);
    }

    #[test]
    fn disjoint_regions_score_zero() {
        let imgs = [
            label_image(2, 2, &[(0, 0), (0, 1)]),
            label_image(2, 2, &[(1, 0), (1, 1)]),
        ];
        let j = jaccard_matrix(&accumulate_stats(2, 2, imgs.iter()).unwrap());
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn shape_mismatch_across_images() {
        let a = label_image(2, 1, &[]);
        let b = label_image(3, 1, &[]);
        let err = accumulate_stats(2, 1, [&a, &b]).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn threshold_boundary_inclusive() {
        let raw = Matrix::from_rows(&[&[0.5, 0.4999]]);
        let b = threshold(&raw, 0.5).unwrap();
        assert_eq!(b, Matrix::from_rows(&[&[1.0, 0.0]]));
    }

    #[test]
    fn threshold_zero_keeps_everything() {
        let raw = Matrix::from_rows(&[&[0.0, 0.3], &[0.9, 1.0]]);
        assert_eq!(threshold(&raw, 0.0).unwrap(), Matrix::from_fn(2, 2, |_, _| 1.0));
    }

    #[test]
    fn threshold_rejects_out_of_range_tau() {
        let raw = Matrix::zeros(1, 1);
        assert!(matches!(threshold(&raw, 1.1), Err(Error::Config(_))));
        assert!(matches!(threshold(&raw, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn normalize_isolated_node() {
        let out = normalize(&Matrix::zeros(1, 1));
        assert_eq!(out, Matrix::from_rows(&[&[1.0]]));
    }

    #[test]
    fn normalize_two_node_clique() {
        let b = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let out = normalize(&b);
        assert_eq!(out, Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]));
    }

    #[test]
    fn normalize_edgeless_graph_is_identity() {
        assert_eq!(normalize(&Matrix::zeros(3, 3)), Matrix::identity(3));
    }

    #[test]
    fn stats_merge_matches_single_pass() {
        let imgs: Vec<Matrix> = (0..6)
            .map(|i| label_image(3, 2, &[(i % 3, 0), ((i + 1) % 3, i % 2)]))
            .collect();
        let whole = accumulate_stats(3, 2, imgs.iter()).unwrap();
        let mut left = accumulate_stats(3, 2, imgs[..3].iter()).unwrap();
        let right = accumulate_stats(3, 2, imgs[3..].iter()).unwrap();
        left.merge(&right).unwrap();
        assert_eq!(left, whole);
    }

    // -- brute-force oracle against the streaming counts --------------------

    /// Independent recomputation from explicit per-(region, label) image
    /// sets, the definition read off directly.
    fn brute_force_jaccard(images: &[Matrix], k: usize, m_count: usize) -> Matrix {
        use std::collections::HashSet;
        let mut sets: Vec<Vec<HashSet<usize>>> = vec![vec![HashSet::new(); m_count]; k];
        for (n, img) in images.iter().enumerate() {
            for r in 0..k {
                for m in 0..m_count {
                    if img[(r, m)] == 1.0 {
                        sets[r][m].insert(n);
                    }
                }
            }
        }
        Matrix::from_fn(k, k, |i, j| {
            let mut acc = 0.0;
            for m in 0..m_count {
                let inter = sets[i][m].intersection(&sets[j][m]).count();
                let union = sets[i][m].union(&sets[j][m]).count();
                if union > 0 {
                    acc += inter as f64 / union as f64;
                }
            }
            acc / m_count as f64
        })
    }

    fn random_dataset() -> impl Strategy<Value = (usize, usize, Vec<Matrix>)> {
        (1usize..=6, 1usize..=4, 0usize..=50).prop_flat_map(|(k, m, n)| {
            proptest::collection::vec(proptest::collection::vec(0u8..=1, k * m), n).prop_map(
                move |imgs| {
                    let matrices = imgs
                        .into_iter()
                        .map(|bits| {
                            Matrix::new(k, m, bits.into_iter().map(f64::from).collect()).unwrap()
                        })
                        .collect();
                    (k, m, matrices)
                },
            )
        })
    }

    proptest! {
        #[test]
        fn jaccard_equals_brute_force((k, m, imgs) in random_dataset()) {
            let stats = accumulate_stats(k, m, imgs.iter()).unwrap();
            let fast = jaccard_matrix(&stats);
            let oracle = brute_force_jaccard(&imgs, k, m);
            prop_assert_eq!(fast, oracle);
        }

        #[test]
        fn image_order_is_irrelevant((k, m, imgs) in random_dataset()) {
            let forward = accumulate_stats(k, m, imgs.iter()).unwrap();
            let reversed = accumulate_stats(k, m, imgs.iter().rev()).unwrap();
            prop_assert_eq!(&jaccard_matrix(&forward), &jaccard_matrix(&reversed));
            prop_assert_eq!(forward, reversed);
        }

        #[test]
        fn region_relabeling_permutes_outputs((k, m, imgs) in random_dataset(), salt in 0u64..1000) {
            // build a permutation of 0..k from the salt
            let mut perm: Vec<usize> = (0..k).collect();
            let mut state = salt.wrapping_add(0x9e3779b97f4a7c15);
            for i in (1..k).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                let j = (state >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }

            let permuted: Vec<Matrix> = imgs
                .iter()
                .map(|img| Matrix::from_fn(k, m, |r, c| img[(perm[r], c)]))
                .collect();

            let base = AdjacencyMatrix::from_stats(
                &accumulate_stats(k, m, imgs.iter()).unwrap(), 0.5).unwrap();
            let moved = AdjacencyMatrix::from_stats(
                &accumulate_stats(k, m, permuted.iter()).unwrap(), 0.5).unwrap();

            for (orig, new) in [
                (&base.raw, &moved.raw),
                (&base.binary, &moved.binary),
                (&base.normalized, &moved.normalized),
            ] {
                let expect = Matrix::from_fn(k, k, |i, j| orig[(perm[i], perm[j])]);
                prop_assert_eq!(&expect, new);
            }
        }

        #[test]
        fn normalized_eigenvalues_in_unit_interval(k in 1usize..=18, bits in proptest::collection::vec(0u8..=1, 18 * 18)) {
            let mut b = Matrix::zeros(k, k);
            for i in 0..k {
                for j in (i + 1)..k {
                    let v = f64::from(bits[i * 18 + j]);
                    b[(i, j)] = v;
                    b[(j, i)] = v;
                }
            }
            let a = normalize(&b);
            for lambda in symmetric_eigenvalues(&a) {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&lambda), "eigenvalue {lambda}");
            }
        }
    }

    /// Jacobi eigenvalue iteration, test-only, fine for k <= 18.
    fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
        let n = m.rows();
        let mut a = m.clone();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a[(i, j)].abs());
                }
            }
            if off < 1e-12 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-15 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for i in 0..n {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(i, q)] = s * aip + c * aiq;
                    }
                    for i in 0..n {
                        let api = a[(p, i)];
                        let aqi = a[(q, i)];
                        a[(p, i)] = c * api - s * aqi;
                        a[(q, i)] = s * api + c * aqi;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }
}
