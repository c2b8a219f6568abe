//! Post-hoc statistics over recorded trials.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::orchestrator::TrialMatrixConfig;
use crate::sweep::{par_map, Execution};
use crate::types::{angle_diff_deg, GraspType, PerturbAxis, Pose2D, TrialRecord};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 completed resets, have {0}")]
    InsufficientData(usize),
    #[error("trial {0} matches no cell of the trial matrix")]
    UnmappedRecord(u32),
}

/// Sample standard deviation (n - 1 denominator). `None` below two samples.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    // shifting by the first sample keeps identical inputs at exactly zero
    let shift = xs[0];
    let mean = xs.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - shift - mean) * (x - shift - mean)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub n: usize,
    pub std_x: f64,
    pub std_y: f64,
    pub mean_std_xy: f64,
    pub std_theta: f64,
    /// Approximate standard error of `mean_std_xy` itself, for information.
    pub std_xy_se: f64,
    /// Aborted or unsuccessful trials among the input.
    pub failures: usize,
}

/// Spread of reset poses around their targets, in mm and degrees.
pub fn repeatability_stats(poses: &[(Pose2D, f64)]) -> Result<RepeatabilityReport, AnalysisError> {
    let n = poses.len();
    let xs: Vec<f64> = poses.iter().map(|(p, _)| p.x).collect();
    let ys: Vec<f64> = poses.iter().map(|(p, _)| p.y).collect();
    // deviations on the circle so 359 deg and 1 deg are 2 deg apart
    let ts: Vec<f64> = poses.iter().map(|(p, target)| angle_diff_deg(p.theta, *target)).collect();
    let (Some(std_x), Some(std_y), Some(std_theta)) = (sample_std(&xs), sample_std(&ys), sample_std(&ts)) else {
        return Err(AnalysisError::InsufficientData(n));
    };
    let mean_std_xy = (std_x + std_y) / 2.0;
    Ok(RepeatabilityReport {
        n,
        std_x,
        std_y,
        mean_std_xy,
        std_theta,
        std_xy_se: mean_std_xy / (2.0 * (n - 1) as f64).sqrt(),
        failures: 0,
    })
}

/// [`repeatability_stats`] over the completed records; the rest count as failures.
pub fn repeatability_from_records(records: &[TrialRecord]) -> Result<RepeatabilityReport, AnalysisError> {
    let done: Vec<(Pose2D, f64)> =
        records.iter().filter(|r| !r.status.is_aborted()).map(|r| (r.reset_pose, r.spec.object_angle)).collect();
    let mut report = repeatability_stats(&done)?;
    report.failures = records.iter().filter(|r| r.status.is_aborted() || !r.success).count();
    Ok(report)
}

/// `round(100 * successes / n)` with halves rounded up; 0 when `n` is 0.
pub fn rate_percent(successes: usize, n: usize) -> u32 {
    if n == 0 {
        return 0;
    }
    ((200 * successes + n) / (2 * n)) as u32
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableCell {
    pub angles: Vec<f64>,
    pub n: usize,
    pub successes: usize,
    pub success_rate: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub perturb_axis: PerturbAxis,
    pub grasp_type: GraspType,
    pub range: (f64, f64),
    /// Parallel to [`SuccessTable::objects`].
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessTable {
    pub objects: Vec<String>,
    pub rows: Vec<TableRow>,
    pub n: usize,
    pub successes: usize,
    pub overall_rate: u32,
}

/// Success rates per matrix row and object. Aborted records count as failures.
pub fn success_table(records: &[TrialRecord], cfg: &TrialMatrixConfig) -> Result<SuccessTable, AnalysisError> {
    let mut rows: Vec<TableRow> = cfg
        .rows
        .iter()
        .map(|r| TableRow {
            perturb_axis: r.perturb_axis,
            grasp_type: r.grasp_type,
            range: (r.range_lo, r.range_hi),
            cells: r
                .angles
                .iter()
                .map(|a| TableCell { angles: a.clone(), n: 0, successes: 0, success_rate: 0 })
                .collect(),
        })
        .collect();
    for rec in records {
        let (r, o) = cfg.cell_of(&rec.spec).ok_or(AnalysisError::UnmappedRecord(rec.spec.trial_id))?;
        let cell = &mut rows[r].cells[o];
        cell.n += 1;
        cell.successes += rec.success as usize;
    }
    for cell in rows.iter_mut().flat_map(|r| r.cells.iter_mut()) {
        cell.success_rate = rate_percent(cell.successes, cell.n);
    }
    let successes = records.iter().filter(|r| r.success).count();
    Ok(SuccessTable {
        objects: cfg.objects.clone(),
        rows,
        n: records.len(),
        successes,
        overall_rate: rate_percent(successes, records.len()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum EdgeOutcome {
    /// Midpoint between the last success and the first failure.
    Boundary { value: f64, low: f64, high: f64 },
    /// All successes or all failures.
    NoTransition,
    /// Indices where the outcome flips, when it is not successes followed by failures.
    NonMonotone(Vec<usize>),
}

/// Locates the success-to-failure transition in `(value, success)` points
/// ordered by increasing value.
pub fn edge_boundary(points: &[(f64, bool)]) -> EdgeOutcome {
    let flips: Vec<usize> = (1..points.len()).filter(|&i| points[i].1 != points[i - 1].1).collect();
    match flips.as_slice() {
        [] => EdgeOutcome::NoTransition,
        [i] if points[*i - 1].1 => {
            let (low, high) = (points[*i - 1].0, points[*i].0);
            EdgeOutcome::Boundary { value: (low + high) / 2.0, low, high }
        }
        _ => EdgeOutcome::NonMonotone(flips),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReport {
    pub object_id: String,
    pub object_angle: f64,
    pub grasp_type: GraspType,
    pub perturb_axis: PerturbAxis,
    pub n: usize,
    pub outcome: EdgeOutcome,
}

/// Edge outcome of every (grasp, axis, object, angle) cell present in `records`.
/// Aborted records are left out.
pub fn edges(records: &[TrialRecord], exec: Execution) -> Vec<EdgeReport> {
    type Key = (GraspType, PerturbAxis, String, i64);
    let mut cells: BTreeMap<Key, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.status.is_aborted()) {
        let s = &r.spec;
        let angle_key = (s.object_angle * 1e6).round() as i64;
        cells.entry((s.grasp_type, s.perturb_axis, s.object_id.clone(), angle_key)).or_default().push(r);
    }
    let cells: Vec<Vec<&TrialRecord>> = cells.into_values().collect();
    par_map(&cells, exec, |cell| {
        let mut pts: Vec<(f64, bool)> = cell.iter().map(|r| (r.spec.perturb_value, r.success)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let s = &cell[0].spec;
        EdgeReport {
            object_id: s.object_id.clone(),
            object_angle: s.object_angle,
            grasp_type: s.grasp_type,
            perturb_axis: s.perturb_axis,
            n: pts.len(),
            outcome: edge_boundary(&pts),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn at(x: f64, y: f64, theta: f64) -> (Pose2D, f64) {
        (Pose2D::new(x, y, theta), 0.0)
    }

    #[test]
    fn two_point_std() {
        let r = repeatability_stats(&[at(-1.0, 0.0, 0.0), at(1.0, 0.0, 0.0)]).unwrap();
        assert!((r.std_x - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.std_y, 0.0);
        assert!((r.mean_std_xy - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_poses_have_zero_spread() {
        let r = repeatability_stats(&vec![at(0.3, -0.2, 45.0); 10]).unwrap();
        assert_eq!((r.std_x, r.std_y, r.std_theta), (0.0, 0.0, 0.0));
    }

    #[test]
    fn theta_spread_ignores_wraparound() {
        let r = repeatability_stats(&[at(0.0, 0.0, 359.0), at(0.0, 0.0, 1.0)]).unwrap();
        assert!((r.std_theta - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn too_few_poses() {
        assert_eq!(repeatability_stats(&[at(0.0, 0.0, 0.0)]), Err(AnalysisError::InsufficientData(1)));
    }

    #[test]
    fn twenty_noisy_resets() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let nx = Normal::new(0.0, 0.05).unwrap();
        let nt = Normal::new(0.0, 2.0).unwrap();
        let poses: Vec<_> =
            (0..20).map(|_| at(nx.sample(&mut rng), nx.sample(&mut rng), nt.sample(&mut rng))).collect();
        let r = repeatability_stats(&poses).unwrap();
        assert!((0.03..=0.07).contains(&r.mean_std_xy), "{r:?}");
    }

    #[test]
    fn rates_round_half_up() {
        assert_eq!(rate_percent(715, 1020), 70);
        assert_eq!(rate_percent(1, 8), 13);
        assert_eq!(rate_percent(1, 200), 1);
        assert_eq!(rate_percent(0, 15), 0);
        assert_eq!(rate_percent(15, 15), 100);
        assert_eq!(rate_percent(0, 0), 0);
    }

    #[test]
    fn edge_examples() {
        let grid: Vec<f64> = (0..15).map(|k| k as f64 * 90.0 / 14.0).collect();
        let pts: Vec<_> = grid.iter().map(|&v| (v, v < 33.02)).collect();
        match edge_boundary(&pts) {
            EdgeOutcome::Boundary { value, low, high } => {
                assert!(low < 33.02 && high > 33.02);
                assert!((value - 35.357142857142854).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
        let all: Vec<_> = grid.iter().map(|&v| (v, true)).collect();
        assert_eq!(edge_boundary(&all), EdgeOutcome::NoTransition);
        assert_eq!(edge_boundary(&[(0.0, true), (1.0, false), (2.0, true)]), EdgeOutcome::NonMonotone(vec![1, 2]));
        assert_eq!(edge_boundary(&[(0.0, false), (1.0, true)]), EdgeOutcome::NonMonotone(vec![1]));
    }

    proptest! {
        #[test]
        fn translation_does_not_change_spread(
            xs in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -10.0..10.0f64), 2..30),
            dx in -500.0..500.0f64,
            dy in -500.0..500.0f64,
        ) {
            let a: Vec<_> = xs.iter().map(|&(x, y, t)| at(x, y, t)).collect();
            let b: Vec<_> = xs.iter().map(|&(x, y, t)| at(x + dx, y + dy, t)).collect();
            let (ra, rb) = (repeatability_stats(&a).unwrap(), repeatability_stats(&b).unwrap());
            prop_assert!((ra.std_x - rb.std_x).abs() < 1e-9);
            prop_assert!((ra.std_y - rb.std_y).abs() < 1e-9);
            prop_assert!((ra.std_theta - rb.std_theta).abs() < 1e-9);
        }

        #[test]
        fn boundary_brackets_the_flip(k in 1usize..15, n in 2usize..30) {
            let k = k.min(n - 1);
            let pts: Vec<_> = (0..n).map(|i| (i as f64, i < k)).collect();
            match edge_boundary(&pts) {
                EdgeOutcome::Boundary { low, high, .. } => {
                    prop_assert!(pts[low as usize].1 && !pts[high as usize].1);
                    prop_assert_eq!(high - low, 1.0);
                }
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn rate_matches_float_rounding(n in 1usize..2000, s in 0usize..2000) {
            let s = s.min(n);
            let exact = 100.0 * s as f64 / n as f64;
            let r = rate_percent(s, n) as f64;
            prop_assert!(r - exact <= 0.5 + 1e-9 && exact - r < 0.5 + 1e-9);
        }
    }
}
