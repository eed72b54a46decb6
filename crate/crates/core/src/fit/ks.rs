use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Two-sided one-sample KS statistic of `z` against N(0, 1).
pub fn ks_statistic(z: &[f64]) -> Result<f64> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in KS sample".into()));
    }
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let cdf = std_normal_cdf(v);
            let above = (i + 1) as f64 / n - cdf;
            let below = cdf - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max);
    Ok(d)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small lambda.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        if y == 0.0 {
            return 1.0;
        }
        let mut sum = 0.0;
        for k in 1..=20u32 {
            let odd = (2 * k - 1) as f64;
            let term = y.powf(odd * odd);
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100u32 {
            let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-17 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// KS p-value against N(0, 1), using the asymptotic Kolmogorov law with the
/// finite-sample scaling `lambda = (sqrt(N) + 0.12 + 0.11 / sqrt(N)) D`.
pub fn ks_pvalue(z: &[f64]) -> Result<f64> {
    if z.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "KS test needs at least 3 residuals, got {}",
            z.len()
        )));
    }
    let d = ks_statistic(z)?;
    let root_n = (z.len() as f64).sqrt();
    Ok(kolmogorov_survival((root_n + 0.12 + 0.11 / root_n) * d))
}
