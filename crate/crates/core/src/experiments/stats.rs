//! Small statistics toolkit for replication experiments.

use serde::{Deserialize, Serialize};

/// 99% two-sided normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Median of the finite values; `NaN` if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    let n = values.len() as f64;
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    pub points: usize,
}

impl LineFit {
    /// Upper end of the two-sided interval at normal quantile `z`.
    pub fn slope_upper(&self, z: f64) -> f64 {
        self.slope + z * self.slope_se
    }
}

/// Ordinary least squares of `y` on `x`. Needs at least three points.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let sigma2 = rss / (nf - 2.0);
    Some(LineFit {
        slope,
        intercept,
        slope_se: (sigma2 / sxx).sqrt(),
        points: n,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Empirical tail `P(Q >= x)` over a threshold grid with Wilson bands and a
/// fitted slope of `ln P` against the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub thresholds: Vec<f64>,
    pub hits: Vec<u64>,
    pub trials: u64,
    pub p_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub fit: Option<LineFit>,
}

impl TailEstimate {
    /// Build from hit counts; the slope is fitted over points with at least
    /// `min_hits` hits.
    pub fn from_hits(thresholds: Vec<f64>, hits: Vec<u64>, trials: u64, min_hits: u64) -> Self {
        let p_hat: Vec<f64> = hits.iter().map(|&k| k as f64 / trials.max(1) as f64).collect();
        let bands: Vec<(f64, f64)> = hits.iter().map(|&k| wilson(k, trials, Z99)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = thresholds
            .iter()
            .zip(&hits)
            .filter(|(_, &k)| k >= min_hits.max(1))
            .map(|(&x, &k)| (x, (k as f64 / trials as f64).ln()))
            .unzip();
        TailEstimate {
            fit: fit_line(&xs, &ys),
            lower: bands.iter().map(|b| b.0).collect(),
            upper: bands.iter().map(|b| b.1).collect(),
            thresholds,
            hits,
            trials,
            p_hat,
        }
    }

    /// Tail of `samples` over sorted `thresholds`.
    pub fn from_samples(samples: &[f64], thresholds: Vec<f64>, min_hits: u64) -> Self {
        let hits = thresholds
            .iter()
            .map(|&x| samples.iter().filter(|&&q| q >= x).count() as u64)
            .collect();
        Self::from_hits(thresholds, hits, samples.len() as u64, min_hits)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.p_hat.windows(2).all(|w| w[1] <= w[0])
    }

    /// Each consecutive pair is nonincreasing or has overlapping bands.
    pub fn nonincreasing_up_to_overlap(&self) -> bool {
        (1..self.p_hat.len()).all(|i| self.p_hat[i] <= self.p_hat[i - 1] || self.lower[i] <= self.upper[i - 1])
    }

    pub fn bands_contain_estimate(&self) -> bool {
        (0..self.p_hat.len()).all(|i| self.lower[i] <= self.p_hat[i] && self.p_hat[i] <= self.upper[i])
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> crate::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["threshold", "hits", "trials", "p_hat", "lower", "upper"])?;
        for i in 0..self.thresholds.len() {
            out.write_record([
                self.thresholds[i].to_string(),
                self.hits[i].to_string(),
                self.trials.to_string(),
                self.p_hat[i].to_string(),
                self.lower[i].to_string(),
                self.upper[i].to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 5 of 10 at z = 1.96: 0.5 ± 0.2634 around center 0.5
        let (lo, hi) = wilson(5, 10, 1.959_963_984_540_054);
        assert!((lo - 0.236_593).abs() < 1e-6, "{lo}");
        assert!((hi - 0.763_407).abs() < 1e-6, "{hi}");
        let (lo, hi) = wilson(0, 20, Z99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.3);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[f64::NAN]).is_nan());
    }

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[10.0, 11.0]), 1.0);
        // alpha = 0.05, n = m = 100: 1.358 * sqrt(2/100)
        assert!((ks_critical(0.05, 100, 100) - 0.192_06).abs() < 1e-4);
    }

    #[test]
    fn tail_from_samples() {
        let t = TailEstimate::from_samples(&[0.0, 1.0, 2.0, 3.0], vec![0.0, 1.5, 5.0], 1);
        assert_eq!(t.hits, vec![4, 2, 0]);
        assert!(t.is_nonincreasing());
        assert!(t.bands_contain_estimate());
    }
}
