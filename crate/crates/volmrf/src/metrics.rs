//! Segmentation quality metrics: per-structure Dice coefficient, Hausdorff
//! distance, and contour mean (average symmetric surface) distance, all in
//! millimeters under anisotropic voxel spacing.
//!
//! Distances use voxel-center coordinates scaled by the spacing; boundaries
//! are voxels of the structure that touch a different label or the volume
//! border. Nearest-neighbor queries go through a small exact k-d tree; the
//! O(|a|*|b|) double loop lives in the test suite as the oracle.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Boundary voxels of one structure, with the spacing needed to measure
/// physical distances. May be empty when the structure is absent.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    points: Vec<[u32; 3]>,
    spacing_mm: [f64; 3],
}

impl BoundarySet {
    pub fn points(&self) -> &[[u32; 3]] {
        &self.points
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Voxel-center coordinates scaled to millimeters.
    fn scaled(&self) -> Vec<[f64; 3]> {
        let [sx, sy, sz] = self.spacing_mm;
        self.points
            .iter()
            .map(|&[x, y, z]| [f64::from(x) * sx, f64::from(y) * sy, f64::from(z) * sz])
            .collect()
    }
}

/// Metrics for one structure label. Distances are `None` when either
/// boundary is empty; the CSV writer renders that as `NA`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureScore {
    pub label: u16,
    pub dice: f64,
    pub hausdorff_mm: Option<f64>,
    pub contour_mean_mm: Option<f64>,
}

/// Dice coefficient `2|A n B| / (|A| + |B|)` of one label between two
/// labelings; 1 when the label is absent from both.
pub fn dice(pred: &LabelVolume, gt: &LabelVolume, label: u16) -> Result<f64> {
    if !pred.dims().same_extent(gt.dims()) {
        return Err(Error::Shape(format!(
            "prediction extent {:?} does not match ground truth extent {:?}",
            pred.dims().extent(),
            gt.dims().extent()
        )));
    }
    let mut in_pred = 0u64;
    let mut in_gt = 0u64;
    let mut in_both = 0u64;
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let a = p == label;
        let b = g == label;
        in_pred += u64::from(a);
        in_gt += u64::from(b);
        in_both += u64::from(a && b);
    }
    if in_pred + in_gt == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * in_both as f64 / (in_pred + in_gt) as f64)
}

/// Voxels with the given label that either touch the volume border or have a
/// 6-neighbor with a different label, in linear-index order.
pub fn extract_boundary(vol: &LabelVolume, label: u16, spacing_mm: [f64; 3]) -> BoundarySet {
    let dims = vol.dims();
    let data = vol.data();
    let mut points = Vec::new();
    for (idx, &l) in data.iter().enumerate() {
        if l != label {
            continue;
        }
        let c = dims.coord_of(idx);
        let interior_neighbors = dims.neighbors6(c).count() == 6;
        let on_border = !interior_neighbors;
        if on_border
            || dims
                .neighbors6(c)
                .any(|n| data[dims.linear_index(n)] != label)
        {
            points.push([c[0] as u32, c[1] as u32, c[2] as u32]);
        }
    }
    BoundarySet { points, spacing_mm }
}

fn check_spacing(a: &BoundarySet, b: &BoundarySet) -> Result<()> {
    if a.spacing_mm != b.spacing_mm {
        return Err(Error::Parameter(format!(
            "boundary sets have different spacings: {:?} vs {:?}",
            a.spacing_mm, b.spacing_mm
        )));
    }
    Ok(())
}

/// Hausdorff distance in millimeters: the larger of the two directed
/// farthest-nearest-neighbor distances. `None` when either set is empty.
pub fn hausdorff(a: &BoundarySet, b: &BoundarySet) -> Result<Option<f64>> {
    check_spacing(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let (da, db) = directed_distances(a, b);
    let max = da.into_iter().chain(db).fold(0.0_f64, f64::max);
    Ok(Some(max))
}

/// Average symmetric surface distance in millimeters:
/// `(sum_a min_b d + sum_b min_a d) / (|a| + |b|)`. `None` when either set
/// is empty.
pub fn contour_mean_distance(a: &BoundarySet, b: &BoundarySet) -> Result<Option<f64>> {
    check_spacing(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Ok(None);
    }
    let (da, db) = directed_distances(a, b);
    let sum: f64 = da.iter().sum::<f64>() + db.iter().sum::<f64>();
    Ok(Some(sum / (da.len() + db.len()) as f64))
}

/// Per-point nearest-neighbor distances in both directions. The k-d tree
/// queries may run on the rayon pool; results are collected in point order
/// and reduced sequentially, so the outcome is bit-identical either way.
fn directed_distances(a: &BoundarySet, b: &BoundarySet) -> (Vec<f64>, Vec<f64>) {
    let pa = a.scaled();
    let pb = b.scaled();
    let tree_a = KdTree::build(pa.clone());
    let tree_b = KdTree::build(pb.clone());
    (nearest_all(&pa, &tree_b), nearest_all(&pb, &tree_a))
}

fn nearest_all(queries: &[[f64; 3]], tree: &KdTree) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        queries
            .par_iter()
            .map(|q| tree.nearest_sq(q).sqrt())
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        queries.iter().map(|q| tree.nearest_sq(q).sqrt()).collect()
    }
}

/// Dice, Hausdorff, and contour mean distance for each requested label.
pub fn score_all(
    pred: &LabelVolume,
    gt: &LabelVolume,
    labels: &[u16],
    spacing_mm: [f64; 3],
) -> Result<Vec<StructureScore>> {
    if !pred.dims().same_extent(gt.dims()) {
        return Err(Error::Shape(format!(
            "prediction extent {:?} does not match ground truth extent {:?}",
            pred.dims().extent(),
            gt.dims().extent()
        )));
    }
    labels
        .iter()
        .map(|&label| {
            let d = dice(pred, gt, label)?;
            let bp = extract_boundary(pred, label, spacing_mm);
            let bg = extract_boundary(gt, label, spacing_mm);
            Ok(StructureScore {
                label,
                dice: d,
                hausdorff_mm: hausdorff(&bp, &bg)?,
                contour_mean_mm: contour_mean_distance(&bp, &bg)?,
            })
        })
        .collect()
}

/// Exact nearest-neighbor search over a fixed point set. Median-split
/// construction with in-place partitioning; queries prune subtrees by the
/// splitting-plane distance, so the returned minimum is exact.
struct KdTree {
    pts: Vec<[f64; 3]>,
}

impl KdTree {
    fn build(mut pts: Vec<[f64; 3]>) -> Self {
        fn split(pts: &mut [[f64; 3]], axis: usize) {
            if pts.len() <= 1 {
                return;
            }
            let mid = pts.len() / 2;
            pts.select_nth_unstable_by(mid, |p, q| p[axis].total_cmp(&q[axis]));
            let next = (axis + 1) % 3;
            let (lo, rest) = pts.split_at_mut(mid);
            split(lo, next);
            split(&mut rest[1..], next);
        }
        split(&mut pts, 0);
        Self { pts }
    }

    /// Squared distance to the nearest stored point; the set is non-empty.
    fn nearest_sq(&self, query: &[f64; 3]) -> f64 {
        fn descend(pts: &[[f64; 3]], axis: usize, query: &[f64; 3], best: &mut f64) {
            if pts.is_empty() {
                return;
            }
            let mid = pts.len() / 2;
            let p = &pts[mid];
            let d2 =
                (p[0] - query[0]).powi(2) + (p[1] - query[1]).powi(2) + (p[2] - query[2]).powi(2);
            if d2 < *best {
                *best = d2;
            }
            let diff = query[axis] - p[axis];
            let next = (axis + 1) % 3;
            let (near, far) = if diff <= 0.0 {
                (&pts[..mid], &pts[mid + 1..])
            } else {
                (&pts[mid + 1..], &pts[..mid])
            };
            descend(near, next, query, best);
            if diff * diff < *best {
                descend(far, next, query, best);
            }
        }
        let mut best = f64::INFINITY;
        descend(&self.pts, 0, query, &mut best);
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn labels(dims: Dims, data: Vec<u16>) -> LabelVolume {
        LabelVolume::new(dims, data).unwrap()
    }

    fn boundary(points: Vec<[u32; 3]>, spacing: [f64; 3]) -> BoundarySet {
        BoundarySet {
            points,
            spacing_mm: spacing,
        }
    }

    /// O(|a| * |b|) reference for the directed distance computations.
    fn brute_force_metrics(a: &BoundarySet, b: &BoundarySet) -> Option<(f64, f64)> {
        if a.is_empty() || b.is_empty() {
            return None;
        }
        let pa = a.scaled();
        let pb = b.scaled();
        let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> Vec<f64> {
            from.iter()
                .map(|p| {
                    to.iter()
                        .map(|q| {
                            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
                                .sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        };
        let da = directed(&pa, &pb);
        let db = directed(&pb, &pa);
        let hd = da.iter().chain(&db).fold(0.0_f64, |m, &d| m.max(d));
        let mean = (da.iter().sum::<f64>() + db.iter().sum::<f64>()) / (da.len() + db.len()) as f64;
        Some((hd, mean))
    }

    #[test]
    fn dice_examples() {
        let dims = Dims::isotropic(2, 2, 2).unwrap();
        let a = labels(dims, vec![1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);

        let b = labels(dims, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.0);

        // |A| = 4, |B| = 4, overlap 2 -> 0.5.
        let c = labels(dims, vec![0, 0, 1, 1, 1, 1, 0, 0]);
        assert_eq!(dice(&a, &c, 1).unwrap(), 0.5);

        // Label absent from both sides: perfect agreement on absence.
        assert_eq!(dice(&a, &b, 7).unwrap(), 1.0);
    }

    #[test]
    fn dice_requires_matching_shapes() {
        let a = labels(Dims::isotropic(2, 2, 2).unwrap(), vec![0; 8]);
        let b = labels(Dims::isotropic(2, 2, 1).unwrap(), vec![0; 4]);
        assert!(matches!(dice(&a, &b, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn boundary_examples() {
        let single = Dims::isotropic(1, 1, 1).unwrap();
        let v = labels(single, vec![3]);
        assert_eq!(extract_boundary(&v, 3, [1.0; 3]).points(), &[[0, 0, 0]]);
        assert!(extract_boundary(&v, 1, [1.0; 3]).is_empty());

        // 3x3x3 solid cube centered in 5x5x5: all 27 voxels minus the one
        // interior voxel.
        let dims = Dims::isotropic(5, 5, 5).unwrap();
        let mut data = vec![0u16; dims.voxel_count()];
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    data[dims.linear_index([x, y, z])] = 1;
                }
            }
        }
        let v = labels(dims, data);
        let b = extract_boundary(&v, 1, [1.0; 3]);
        assert_eq!(b.len(), 26);
        assert!(!b.points().contains(&[2, 2, 2]));
    }

    #[test]
    fn hausdorff_examples() {
        let a = boundary(vec![[0, 0, 0]], [1.0; 3]);
        assert_eq!(hausdorff(&a, &a).unwrap(), Some(0.0));

        let b = boundary(vec![[0, 0, 3]], [1.0; 3]);
        assert_eq!(hausdorff(&a, &b).unwrap(), Some(3.0));

        let sa = boundary(vec![[0, 0, 0]], [1.0, 1.0, 1.3]);
        let sb = boundary(vec![[0, 0, 1]], [1.0, 1.0, 1.3]);
        assert_abs_diff_eq!(hausdorff(&sa, &sb).unwrap().unwrap(), 1.3, epsilon = 1e-12);

        let empty = boundary(vec![], [1.0; 3]);
        assert_eq!(hausdorff(&a, &empty).unwrap(), None);
        assert!(matches!(hausdorff(&a, &sa), Err(Error::Parameter(_))));
    }

    #[test]
    fn contour_mean_examples() {
        let a = boundary(vec![[0, 0, 0]], [1.0; 3]);
        assert_eq!(contour_mean_distance(&a, &a).unwrap(), Some(0.0));

        let b = boundary(vec![[0, 0, 2]], [1.0; 3]);
        assert_eq!(contour_mean_distance(&a, &b).unwrap(), Some(2.0));

        // a = {(0,0,0), (1,0,0)}, b = {(0,0,0)}: (0 + 1 + 0) / 3.
        let a2 = boundary(vec![[0, 0, 0], [1, 0, 0]], [1.0; 3]);
        assert_abs_diff_eq!(
            contour_mean_distance(&a2, &a).unwrap().unwrap(),
            1.0 / 3.0,
            epsilon = 1e-12
        );

        let empty = boundary(vec![], [1.0; 3]);
        assert_eq!(contour_mean_distance(&empty, &a).unwrap(), None);
    }

    #[test]
    fn score_all_composes_the_metrics() {
        let dims = Dims::isotropic(4, 4, 1).unwrap();
        let mut gt_data = vec![0u16; 16];
        let mut pred_data = vec![0u16; 16];
        for y in 0..2 {
            for x in 0..2 {
                gt_data[dims.linear_index([x, y, 0])] = 1;
                pred_data[dims.linear_index([x + 1, y, 0])] = 1;
            }
        }
        gt_data[dims.linear_index([3, 3, 0])] = 2;
        pred_data[dims.linear_index([3, 3, 0])] = 2;
        let gt = labels(dims, gt_data);
        let pred = labels(dims, pred_data);

        let scores = score_all(&pred, &gt, &[1, 2], [1.0; 3]).unwrap();
        assert_eq!(scores.len(), 2);
        assert_eq!(scores[0].label, 1);
        assert_eq!(scores[0].dice, dice(&pred, &gt, 1).unwrap());
        let bp = extract_boundary(&pred, 1, [1.0; 3]);
        let bg = extract_boundary(&gt, 1, [1.0; 3]);
        assert_eq!(scores[0].hausdorff_mm, hausdorff(&bp, &bg).unwrap());
        assert_eq!(
            scores[0].contour_mean_mm,
            contour_mean_distance(&bp, &bg).unwrap()
        );
        assert_eq!(scores[1].dice, 1.0);
        assert_eq!(scores[1].hausdorff_mm, Some(0.0));
        assert_eq!(scores[1].contour_mean_mm, Some(0.0));
    }

    #[test]
    fn identical_prediction_scores_perfectly() {
        let dims = Dims::isotropic(3, 3, 3).unwrap();
        let mut data = vec![0u16; 27];
        data[13] = 1;
        data[0] = 2;
        let v = labels(dims, data);
        for s in score_all(&v, &v, &[1, 2], [1.0, 1.0, 1.3]).unwrap() {
            assert_eq!(s.dice, 1.0);
            assert_eq!(s.hausdorff_mm, Some(0.0));
            assert_eq!(s.contour_mean_mm, Some(0.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tree_distances_match_double_loop(
            seed in 0u64..10_000, nx in 1usize..=6, ny in 1usize..=6, nz in 1usize..=6
        ) {
            let mut r = crate::testutil::rng(seed);
            let dims = Dims::isotropic(nx, ny, nz).unwrap();
            let spacing = [1.0, 0.7, 1.3];
            let data: Vec<u16> = (0..dims.voxel_count())
                .map(|_| r.gen_range(0..3u16))
                .collect();
            let gt_data: Vec<u16> = (0..dims.voxel_count())
                .map(|_| r.gen_range(0..3u16))
                .collect();
            let pred = labels(dims, data);
            let gt = labels(dims, gt_data);
            for label in 0..3u16 {
                let ba = extract_boundary(&pred, label, spacing);
                let bb = extract_boundary(&gt, label, spacing);
                let hd = hausdorff(&ba, &bb).unwrap();
                let cm = contour_mean_distance(&ba, &bb).unwrap();
                match brute_force_metrics(&ba, &bb) {
                    None => {
                        prop_assert_eq!(hd, None);
                        prop_assert_eq!(cm, None);
                    }
                    Some((bhd, bcm)) => {
                        prop_assert!((hd.unwrap() - bhd).abs() < 1e-9);
                        prop_assert!((cm.unwrap() - bcm).abs() < 1e-9);
                        // Mean of nearest distances never exceeds the max.
                        prop_assert!(cm.unwrap() <= hd.unwrap() + 1e-12);
                    }
                }
                // Symmetry of both distances.
                prop_assert_eq!(hd, hausdorff(&bb, &ba).unwrap());
                prop_assert_eq!(cm, contour_mean_distance(&bb, &ba).unwrap());
            }
        }

        #[test]
        fn dice_is_symmetric(
            seed in 0u64..10_000, n in 1usize..=5
        ) {
            let mut r = crate::testutil::rng(seed);
            let dims = Dims::isotropic(n, n, n).unwrap();
            let a = labels(dims, (0..dims.voxel_count()).map(|_| r.gen_range(0..3u16)).collect());
            let b = labels(dims, (0..dims.voxel_count()).map(|_| r.gen_range(0..3u16)).collect());
            for label in 0..3u16 {
                prop_assert_eq!(dice(&a, &b, label).unwrap(), dice(&b, &a, label).unwrap());
            }
        }

        #[test]
        fn metrics_invariant_under_axis_permutation(
            seed in 0u64..10_000, nx in 1usize..=4, ny in 1usize..=4, nz in 1usize..=4
        ) {
            let mut r = crate::testutil::rng(seed);
            let dims = Dims::isotropic(nx, ny, nz).unwrap();
            let spacing = [1.0, 0.5, 2.0];
            let pred: Vec<u16> = (0..dims.voxel_count()).map(|_| r.gen_range(0..2u16)).collect();
            let gt: Vec<u16> = (0..dims.voxel_count()).map(|_| r.gen_range(0..2u16)).collect();

            // Swap the x and z axes of everything, spacing included.
            let swapped_dims = Dims::isotropic(nz, ny, nx).unwrap();
            let swap = |src: &[u16]| -> Vec<u16> {
                let mut out = vec![0u16; src.len()];
                for (idx, &v) in src.iter().enumerate() {
                    let [x, y, z] = dims.coord_of(idx);
                    out[swapped_dims.linear_index([z, y, x])] = v;
                }
                out
            };
            let swapped_spacing = [spacing[2], spacing[1], spacing[0]];

            let pv = labels(dims, pred.clone());
            let gv = labels(dims, gt.clone());
            let spv = labels(swapped_dims, swap(&pred));
            let sgv = labels(swapped_dims, swap(&gt));

            let base = score_all(&pv, &gv, &[1], spacing).unwrap();
            let swapped = score_all(&spv, &sgv, &[1], swapped_spacing).unwrap();
            prop_assert!((base[0].dice - swapped[0].dice).abs() < 1e-12);
            match (base[0].hausdorff_mm, swapped[0].hausdorff_mm) {
                (None, None) => {}
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                other => prop_assert!(false, "mismatch {:?}", other),
            }
            match (base[0].contour_mean_mm, swapped[0].contour_mean_mm) {
                (None, None) => {}
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }
    }
}
