//! Run diagnostics: cross-scenario stability of generalization performance,
//! post-convergence loss spread, gradient-conflict statistics, and a kernel
//! maximum-mean-discrepancy estimate for comparing domain samples.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::mat::Mat;
use crate::mlp::MlpModel;

/// How the spread of per-scenario performances is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GsVariant {
    /// √Σ(GP_i − mean)², no normalization.
    RootSumSquares,
    /// Sample standard deviation, √(Σ(GP_i − mean)²/(M−1)). The default:
    /// it is the convention published result tables actually follow.
    #[default]
    SampleStd,
}

impl GsVariant {
    pub fn tag(self) -> &'static str {
        match self {
            GsVariant::RootSumSquares => "root_sum_squares",
            GsVariant::SampleStd => "sample_std",
        }
    }
}

/// Stability of generalization performance across held-out scenarios:
/// low means the method generalizes about equally well no matter which
/// domain is held out.
pub fn gs(performances: &[f64], variant: GsVariant) -> Result<f64> {
    if performances.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "stability needs at least two scenarios".into(),
        ));
    }
    let mean = performances.iter().sum::<f64>() / performances.len() as f64;
    let ss: f64 = performances.iter().map(|p| (p - mean) * (p - mean)).sum();
    Ok(match variant {
        GsVariant::RootSumSquares => libm::sqrt(ss),
        GsVariant::SampleStd => libm::sqrt(ss / (performances.len() - 1) as f64),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub per_scenario: Vec<f64>,
    pub mean: f64,
    pub gs: f64,
    pub variant: GsVariant,
}

pub fn stability_report(performances: &[f64], variant: GsVariant) -> Result<StabilityReport> {
    let gs = gs(performances, variant)?;
    let mean = performances.iter().sum::<f64>() / performances.len() as f64;
    Ok(StabilityReport { per_scenario: performances.to_vec(), mean, gs, variant })
}

/// Sample standard deviations of loss sequences restricted to iterations at
/// or beyond a convergence point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergedStd {
    pub per_domain: Vec<f64>,
    pub total: f64,
    /// First iteration index included.
    pub start: usize,
}

pub fn converged_loss_std(
    per_domain: &[Vec<f64>],
    total: &[f64],
    start: usize,
) -> Result<ConvergedStd> {
    if total.len() < start + 2 {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "need at least 2 iterations beyond {start}, trace has {}",
            total.len()
        )));
    }
    for series in per_domain {
        if series.len() != total.len() {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "domain series length {} against total length {}",
                series.len(),
                total.len()
            )));
        }
    }
    let per_domain =
        per_domain.iter().map(|series| sample_std(&series[start..])).collect::<Vec<_>>();
    Ok(ConvergedStd { per_domain, total: sample_std(&total[start..]), start })
}

fn sample_std(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

/// Pairwise geometry of per-domain gradients at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictStats {
    /// Symmetric with unit diagonal; a pair with a zero-norm member gets 0.
    pub cosines: Vec<Vec<f64>>,
    /// Fraction of components with equal sign per pair; a zero component
    /// agrees with anything.
    pub sign_agreement: Vec<Vec<f64>>,
    /// Fraction of pairs i < j with negative cosine.
    pub negative_fraction: f64,
    /// Which gradients had zero norm (their cosines are the 0 convention).
    pub zero_norm: Vec<bool>,
    pub iteration: usize,
}

pub fn conflict_stats(grads: &[Vec<f64>], iteration: usize) -> Result<ConflictStats> {
    if grads.is_empty() {
        return Err(CoreError::Empty("no gradients".into()));
    }
    let len = grads[0].len();
    if grads.iter().any(|g| g.len() != len) {
        return Err(CoreError::ShapeMismatch("gradient lengths differ".into()));
    }
    let m = grads.len();
    let norms: Vec<f64> =
        grads.iter().map(|g| libm::sqrt(g.iter().map(|v| v * v).sum())).collect();
    let zero_norm: Vec<bool> = norms.iter().map(|&n| n == 0.0).collect();
    let mut cosines = vec![vec![0.0; m]; m];
    let mut sign_agreement = vec![vec![0.0; m]; m];
    let mut negative = 0usize;
    let mut pairs = 0usize;
    for i in 0..m {
        cosines[i][i] = 1.0;
        sign_agreement[i][i] = 1.0;
        for j in i + 1..m {
            let cos = if zero_norm[i] || zero_norm[j] {
                0.0
            } else {
                let dot: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                dot / (norms[i] * norms[j])
            };
            cosines[i][j] = cos;
            cosines[j][i] = cos;
            let agreeing = grads[i]
                .iter()
                .zip(&grads[j])
                .filter(|(&a, &b)| a == 0.0 || b == 0.0 || ((a > 0.0) == (b > 0.0)))
                .count();
            let frac = if len == 0 { 1.0 } else { agreeing as f64 / len as f64 };
            sign_agreement[i][j] = frac;
            sign_agreement[j][i] = frac;
            pairs += 1;
            if cos < 0.0 {
                negative += 1;
            }
        }
    }
    let negative_fraction = if pairs == 0 { 0.0 } else { negative as f64 / pairs as f64 };
    Ok(ConflictStats { cosines, sign_agreement, negative_fraction, zero_norm, iteration })
}

/// Squared maximum mean discrepancy between two sample sets under the RBF
/// kernel k(x,y) = exp(−γ‖x−y‖²), as the biased V-statistic (self-pairs
/// included), clamped at zero.
pub fn mmd_squared(p: &Mat, q: &Mat, gamma: f64) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(CoreError::Empty("empty sample set".into()));
    }
    if p.cols() != q.cols() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "sample dimensions {} and {}",
            p.cols(),
            q.cols()
        )));
    }
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidArgument("kernel bandwidth must be positive".into()));
    }
    let within = |s: &Mat| -> f64 {
        let n = s.rows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += libm::exp(-gamma * sq_dist(s.row(i), s.row(j)));
            }
        }
        acc / (n * n) as f64
    };
    let mut cross = 0.0;
    for i in 0..p.rows() {
        for j in 0..q.rows() {
            cross += libm::exp(-gamma * sq_dist(p.row(i), q.row(j)));
        }
    }
    cross /= (p.rows() * q.rows()) as f64;
    Ok((within(p) + within(q) - 2.0 * cross).max(0.0))
}

/// Median-heuristic bandwidth: γ = 1 / median of pooled pairwise squared
/// distances (even count → mean of the central two), floored away from 0.
pub fn median_heuristic_gamma(p: &Mat, q: &Mat) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(CoreError::Empty("empty sample set".into()));
    }
    if p.cols() != q.cols() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "sample dimensions {} and {}",
            p.cols(),
            q.cols()
        )));
    }
    let mut rows: Vec<&[f64]> = (0..p.rows()).map(|i| p.row(i)).collect();
    rows.extend((0..q.rows()).map(|i| q.row(i)));
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            dists.push(sq_dist(rows[i], rows[j]));
        }
    }
    if dists.is_empty() {
        return Err(CoreError::InvalidArgument(
            "bandwidth heuristic needs at least two pooled samples".into(),
        ));
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    Ok(1.0 / median.max(1e-12))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Classification accuracy; argmax ties break toward the lowest class index.
pub fn evaluate(model: &MlpModel, xs: &Mat, ys: &[usize]) -> Result<f64> {
    if ys.is_empty() {
        return Err(CoreError::Empty("empty evaluation split".into()));
    }
    if xs.rows() != ys.len() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "{} rows against {} labels",
            xs.rows(),
            ys.len()
        )));
    }
    let logits = model.apply(xs)?;
    let mut correct = 0usize;
    for (row, &y) in ys.iter().enumerate() {
        let r = logits.row(row);
        let mut best = 0usize;
        for (c, &v) in r.iter().enumerate() {
            if v > r[best] {
                best = c;
            }
        }
        if best == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / ys.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gs_matches_published_rows() {
        let me = [81.15, 78.92, 93.95, 81.73];
        assert!((gs(&me, GsVariant::SampleStd).unwrap() - 6.78).abs() < 0.01);
        assert!((gs(&me, GsVariant::RootSumSquares).unwrap() - 11.75).abs() < 0.01);
        let swad = [83.28, 74.63, 96.56, 77.96];
        assert!((gs(&swad, GsVariant::SampleStd).unwrap() - 9.65).abs() < 0.01);
        assert_eq!(gs(&[80.0, 80.0, 80.0], GsVariant::SampleStd).unwrap(), 0.0);
        assert_eq!(gs(&[80.0, 80.0], GsVariant::RootSumSquares).unwrap(), 0.0);
        assert!(gs(&[80.0], GsVariant::SampleStd).is_err());
    }

    #[test]
    fn gs_report_shift_invariance() {
        let rows: [&[f64]; 3] = [
            &[81.15, 78.92, 93.95, 81.73],
            &[83.28, 74.63, 96.56, 77.96],
            &[85.0, 85.0, 85.1, 85.2],
        ];
        let argmin = |shift: f64| {
            let mut best = 0;
            let mut best_gs = f64::INFINITY;
            for (i, row) in rows.iter().enumerate() {
                let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
                let g = gs(&shifted, GsVariant::SampleStd).unwrap();
                if g < best_gs {
                    best_gs = g;
                    best = i;
                }
            }
            best
        };
        assert_eq!(argmin(0.0), argmin(5.0));
        assert_eq!(argmin(0.0), 2);
        let report = stability_report(rows[0], GsVariant::SampleStd).unwrap();
        assert!((report.mean - 83.9375).abs() < 1e-12);
        assert_eq!(report.per_scenario.len(), 4);
    }

    #[test]
    fn converged_std_by_direct_formula() {
        let total = vec![1.0, 1.0, 0.5, 0.7, 0.9];
        let per = vec![vec![2.0, 0.0, 0.3, 0.3, 0.3], vec![0.0, 2.0, 0.7, 1.1, 1.5]];
        let out = converged_loss_std(&per, &total, 2).unwrap();
        assert!((out.total - 0.2).abs() < 1e-12);
        assert!(out.per_domain[0].abs() < 1e-12);
        assert!((out.per_domain[1] - 0.4).abs() < 1e-12);
        assert!(converged_loss_std(&per, &total, 4).is_err());
        // pure function of values, not of how iterations were indexed
        let shifted = converged_loss_std(&per, &total, 2).unwrap();
        assert_eq!(shifted.total, out.total);
    }

    #[test]
    fn conflict_geometry() {
        let g = vec![vec![1.0, 2.0, -1.0], vec![1.0, 2.0, -1.0]];
        let s = conflict_stats(&g, 3).unwrap();
        assert!((s.cosines[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(s.sign_agreement[0][1], 1.0);
        assert_eq!(s.negative_fraction, 0.0);
        assert_eq!(s.iteration, 3);

        let g = vec![vec![1.0, 2.0], vec![-1.0, -2.0]];
        let s = conflict_stats(&g, 0).unwrap();
        assert!((s.cosines[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(s.negative_fraction, 1.0);
        assert_eq!(s.sign_agreement[0][1], 0.0);

        // orthogonal with zeros: cosine 0, zero components agree with anything
        let g = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = conflict_stats(&g, 0).unwrap();
        assert_eq!(s.cosines[0][1], 0.0);
        assert_eq!(s.sign_agreement[0][1], 1.0);

        // zero-norm flag and 0-cosine convention
        let g = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let s = conflict_stats(&g, 0).unwrap();
        assert!(s.zero_norm[0] && !s.zero_norm[1]);
        assert_eq!(s.cosines[0][1], 0.0);

        assert!(conflict_stats(&[vec![1.0], vec![1.0, 2.0]], 0).is_err());
    }

    #[test]
    fn cosines_invariant_to_positive_rescaling() {
        let g = vec![vec![0.3, -0.7, 2.0], vec![1.0, 0.4, -0.2]];
        let s1 = conflict_stats(&g, 0).unwrap();
        let g2 = vec![g[0].iter().map(|v| 17.0 * v).collect(), g[1].clone()];
        let s2 = conflict_stats(&g2, 0).unwrap();
        assert!((s1.cosines[0][1] - s2.cosines[0][1]).abs() < 1e-12);
    }

    #[test]
    fn mmd_closed_forms_and_symmetry() {
        let x = Mat::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let y = Mat::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let gamma = 0.5;
        let expect = 2.0 - 2.0 * libm::exp(-gamma * 2.0);
        assert!((mmd_squared(&x, &y, gamma).unwrap() - expect).abs() < 1e-12);
        assert_eq!(mmd_squared(&x, &x, gamma).unwrap(), 0.0);
        // symmetry on larger sets
        let p = Mat::from_vec(3, 2, vec![0.0, 0.1, 0.4, -0.3, 1.0, 0.2]).unwrap();
        let q = Mat::from_vec(2, 2, vec![0.5, 0.5, -1.0, 0.3]).unwrap();
        let a = mmd_squared(&p, &q, 0.7).unwrap();
        let b = mmd_squared(&q, &p, 0.7).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(mmd_squared(&p, &Mat::zeros(2, 3), 0.7).is_err());
        assert!(mmd_squared(&p, &q, 0.0).is_err());
    }

    #[test]
    fn mmd_matches_brute_force() {
        let p = Mat::from_vec(5, 2, vec![0.0, 0.0, 1.0, 0.5, -0.5, 2.0, 0.3, 0.3, 2.0, -1.0])
            .unwrap();
        let q = Mat::from_vec(5, 2, vec![0.1, 0.0, 0.9, 0.4, -0.6, 2.2, 0.2, 0.5, 1.7, -0.9])
            .unwrap();
        let gamma = median_heuristic_gamma(&p, &q).unwrap();
        let k = |a: &[f64], b: &[f64]| libm::exp(-gamma * sq_dist(a, b));
        let mut pp = 0.0;
        let mut qq = 0.0;
        let mut pq = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                pp += k(p.row(i), p.row(j));
                qq += k(q.row(i), q.row(j));
                pq += k(p.row(i), q.row(j));
            }
        }
        let brute = (pp / 25.0 + qq / 25.0 - 2.0 * pq / 25.0).max(0.0);
        assert!((mmd_squared(&p, &q, gamma).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn median_heuristic_even_and_odd() {
        // 3 pooled points → 3 pairwise distances (odd): median is the middle
        let p = Mat::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let q = Mat::from_vec(1, 1, vec![3.0]).unwrap();
        // distances²: 1, 9, 4 → sorted 1, 4, 9 → median 4
        assert!((median_heuristic_gamma(&p, &q).unwrap() - 0.25).abs() < 1e-12);
        // 4 pooled points → 6 distances (even): mean of central two
        let p = Mat::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let q = Mat::from_vec(2, 1, vec![2.0, 4.0]).unwrap();
        // d²: (0,1)=1 (0,2)=4 (0,4)=16 (1,2)=1 (1,4)=9 (2,4)=4 → 1,1,4,4,9,16 → 4
        assert!((median_heuristic_gamma(&p, &q).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn accuracy_counts_and_tie_rule() {
        // single affine map with fixed params: logits = x·W, pick W = I so
        // the prediction is argmax of the input row itself
        let mut model = MlpModel::zeroed(&[3, 3]).unwrap();
        let flat: Vec<f64> =
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        model.set_from_flat(&flat).unwrap();
        let xs = Mat::from_vec(
            4,
            3,
            vec![
                5.0, 0.0, 0.0, // class 0
                0.0, 5.0, 0.0, // class 1
                0.0, 0.0, 5.0, // class 2
                0.0, 0.0, 5.0, // class 2 but labeled 1 → wrong
            ],
        )
        .unwrap();
        assert_eq!(evaluate(&model, &xs, &[0, 1, 2, 1]).unwrap(), 0.75);
        // perfect ties everywhere → always class 0
        let ties = Mat::zeros(2, 3);
        assert_eq!(evaluate(&model, &ties, &[0, 0]).unwrap(), 1.0);
        assert_eq!(evaluate(&model, &ties, &[1, 2]).unwrap(), 0.0);
        assert!(evaluate(&model, &Mat::zeros(0, 3), &[]).is_err());
    }
}
