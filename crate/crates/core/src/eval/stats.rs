use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// Mean with a two-sided 95% Student t interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub half_width: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn students_t(df: usize) -> StudentsT {
    StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1")
}

/// `t_{0.975, n-1}`.
pub fn t_critical(n: usize) -> f64 {
    students_t(n - 1).inverse_cdf(0.975)
}

pub fn mean_ci(values: &[f64]) -> Result<MetricSummary, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewGames(values.len()));
    }
    let n = values.len();
    let (mean, sd) = mean_sd(values);
    let half_width = if sd == 0.0 { 0.0 } else { t_critical(n) * sd / (n as f64).sqrt() };
    Ok(MetricSummary { mean, half_width, ci_lo: mean - half_width, ci_hi: mean + half_width, n })
}

/// Two-sided paired t-test on `a - b`. All-zero differences give 1.0 and
/// constant nonzero differences give 0.0.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewGames(a.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&d);
    if sd == 0.0 {
        return Ok(if mean == 0.0 { 1.0 } else { 0.0 });
    }
    let t = mean / (sd / (d.len() as f64).sqrt());
    Ok((2.0 * students_t(d.len() - 1).sf(t.abs())).min(1.0))
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` when undefined (fewer than two points
/// or a constant series).
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_interval() {
        let s = mean_ci(&[0.2, 0.3]).unwrap();
        assert!((s.mean - 0.25).abs() < 1e-15);
        // t_{0.975,1} = tan(0.475 pi); s = 0.1/sqrt(2); half = t * s / sqrt(2) = t * 0.05.
        let t1 = (0.475 * std::f64::consts::PI).tan();
        assert!((t_critical(2) - t1).abs() < 1e-6, "{}", t_critical(2));
        assert!((s.half_width - t1 * 0.05).abs() < 1e-6);
        assert!((s.half_width - 0.6353).abs() < 1e-4);
    }

    #[test]
    fn zero_variance_interval() {
        let s = mean_ci(&[0.25; 7]).unwrap();
        assert_eq!((s.mean, s.half_width), (0.25, 0.0));
        assert!(matches!(mean_ci(&[1.0]), Err(EvalError::TooFewGames(1))));
    }

    #[test]
    fn paired_t_conventions() {
        assert_eq!(paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap() < 1e-12);
        assert!(matches!(paired_t_test(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch(1, 2))));
        // diffs [0,0,-1]: t = -1 with 2 df; two-sided p = 1 - 1/sqrt(3).
        let p = paired_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((p - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-9, "{p}");
        assert!((p - 0.4226).abs() < 1e-4);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    proptest! {
        // Half-width shrinks with n at a fixed spread: repeat a base sample.
        #[test]
        fn interval_shrinks_with_n(base in prop::collection::vec(0.0f64..1.0, 2..8), k in 1usize..6) {
            prop_assume!(base.iter().any(|&x| x != base[0]));
            let small = mean_ci(&base).unwrap();
            let big: Vec<f64> = base.iter().cycle().take(base.len() * (k + 1)).copied().collect();
            let large = mean_ci(&big).unwrap();
            prop_assert!(large.half_width < small.half_width);
        }

        #[test]
        fn mean_inside_range(xs in prop::collection::vec(-5.0f64..5.0, 2..30)) {
            let s = mean_ci(&xs).unwrap();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.mean >= lo - 1e-12 && s.mean <= hi + 1e-12);
            prop_assert!(s.half_width >= 0.0);
        }
    }
}
