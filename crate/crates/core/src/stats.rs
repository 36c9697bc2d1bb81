//! Correlation and t-test kernel with two-sided p-values.
//!
//! p-values come from the Student t distribution through the regularized
//! incomplete beta function: for `t` with `ν` degrees of freedom,
//! `P(|T| ≥ |t|) = I_{ν/(ν+t²)}(ν/2, 1/2)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Significance level used when counting significant comparisons.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    /// Zero variance in one input; `r` is reported as 0 and `p` as 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p_value: f64,
    pub df: f64,
    pub degenerate: bool,
}

/// Two-sided tail probability of Student's t.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "correlation inputs differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("correlation inputs must be finite".into()));
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (`n - 1` denominator).
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Sum of squared deviations indistinguishable from rounding noise.
fn negligible(ss: f64, x: &[f64]) -> bool {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ss <= x.len() as f64 * (1e-12 * scale).powi(2)
}

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrResult> {
    check_pair(x, y)?;
    let n = x.len();
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if negligible(sxx, x) || negligible(syy, y) {
        return Ok(CorrResult {
            r: 0.0,
            p_value: 1.0,
            n,
            degenerate: true,
        });
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let one_minus = 1.0 - r * r;
    let p_value = if one_minus <= 16.0 * f64::EPSILON {
        0.0
    } else {
        t_two_sided_p(r * (df / one_minus).sqrt(), df)
    };
    Ok(CorrResult {
        r,
        p_value,
        n,
        degenerate: false,
    })
}

/// Average ranks, 1-based, with ties sharing their mid-rank.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson on mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrResult> {
    check_pair(x, y)?;
    pearson(&midranks(x), &midranks(y))
}

/// Welch's unequal-variance t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "t-test needs at least 2 observations per group".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("t-test inputs must be finite".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let degenerate = true;
        return Ok(if ma == mb {
            TTest {
                t: 0.0,
                p_value: 1.0,
                df: na + nb - 2.0,
                degenerate,
            }
        } else {
            TTest {
                t: (ma - mb).signum() * f64::INFINITY,
                p_value: 0.0,
                df: na + nb - 2.0,
                degenerate,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest {
        t,
        p_value: t_two_sided_p(t, df),
        df,
        degenerate: false,
    })
}

/// "m/n significant" tally over a set of p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCount {
    pub significant: usize,
    pub total: usize,
    pub alpha: f64,
}

impl SignificanceCount {
    pub fn proportion(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.significant as f64 / self.total as f64
        }
    }
}

impl fmt::Display for SignificanceCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} significant (α={}) ({:.1}%)",
            self.significant,
            self.total,
            self.alpha,
            100.0 * self.proportion()
        )
    }
}

pub fn count_significant(p_values: impl IntoIterator<Item = f64>, alpha: f64) -> SignificanceCount {
    let mut significant = 0;
    let mut total = 0;
    for p in p_values {
        total += 1;
        if p < alpha {
            significant += 1;
        }
    }
    SignificanceCount {
        significant,
        total,
        alpha,
    }
}
