//! Estimators and hypothesis tests used by the verification suite.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided standard normal quantile `z` with `P(|Z| <= z) = level`.
pub fn two_sided_z(level: f64) -> f64 {
    normal_quantile(0.5 + 0.5 * level)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Sample mean with a normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub std_err: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn mean_ci(samples: &[f64], level: f64) -> Result<MeanCi> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 samples, got {n}")));
    }
    let (mean, var) = mean_var(samples);
    let std_err = (var / n as f64).sqrt();
    let z = two_sided_z(level);
    Ok(MeanCi {
        n,
        mean,
        std_err,
        lo: mean - z * std_err,
        hi: mean + z * std_err,
    })
}

/// Mean and unbiased variance (Welford).
pub fn mean_var(samples: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let n = samples.len();
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var)
}

/// Exact binomial (Clopper-Pearson) interval for `successes / trials`.
pub fn clopper_pearson(successes: usize, trials: usize, level: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::InvalidParameter(format!(
            "bad binomial counts {successes}/{trials}"
        )));
    }
    let alpha = 1.0 - level;
    let (k, n) = (successes as f64, trials as f64);
    let lo = if successes == 0 {
        0.0
    } else {
        beta_quantile(k, n - k + 1.0, 0.5 * alpha)?
    };
    let hi = if successes == trials {
        1.0
    } else {
        beta_quantile(k + 1.0, n - k, 1.0 - 0.5 * alpha)?
    };
    Ok((lo, hi))
}

fn beta_quantile(a: f64, b: f64, p: f64) -> Result<f64> {
    let dist = Beta::new(a, b).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(dist.inverse_cdf(p))
}

/// Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        // series below converges slowly here and the value is 1 to machine precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

fn sorted_finite(x: &[f64]) -> Result<Vec<f64>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in sample".into()));
    }
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("empty sample in KS test".into()));
    }
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, na * nb / (na + nb)),
    })
}

pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty sample in KS test".into()));
    }
    let s = sorted_finite(samples)?;
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_p_value(d, n),
    })
}

/// Least-squares line `y = intercept + slope x` with coefficient of
/// determination `r2` (1 for a perfect fit, also when `y` is constant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need matching samples of length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let r2 = if syy <= f64::EPSILON * my.abs().max(1.0) * n {
        1.0
    } else {
        1.0 - ss_res / syy
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_ci_of_constant_sample_has_zero_width() {
        let ci = mean_ci(&[1.0; 40], 0.95).unwrap();
        assert_eq!(ci.mean, 1.0);
        assert_eq!(ci.lo, ci.hi);
        assert!(mean_ci(&[1.0], 0.95).is_err());
    }

    #[test]
    fn z_quantile() {
        assert!((two_sided_z(0.95) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // scipy.stats.binomtest(7, 20).proportion_ci(method="exact")
        let (lo, hi) = clopper_pearson(7, 20, 0.95).unwrap();
        assert!((lo - 0.153_909_204_8).abs() < 1e-7, "{lo}");
        assert!((hi - 0.592_188_534_5).abs() < 1e-7, "{hi}");
        assert_eq!(clopper_pearson(0, 10, 0.95).unwrap().0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.95).unwrap().1, 1.0);
        assert!(clopper_pearson(3, 2, 0.95).is_err());
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.627_6) - 0.01).abs() < 1e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_two_sample_identical_and_shifted() {
        let a: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.statistic - 0.5).abs() <= 0.005 + 1e-12);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_one_sample_uniform_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let r = ks_one_sample(&s, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.statistic - 0.005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn linear_fit_exact_and_constant() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|k| -0.5 * k + 2.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let f = linear_fit(&x, &[3.0; 4]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
