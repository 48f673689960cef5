use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Least-squares fit of `ln kl = intercept − ν·ln param`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub nu: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Two-sided t-test of a zero slope, n − 2 degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

impl fmt::Display for PowerLawFit {
    /// The plain-text report: one `key=value` line per statistic.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nu={}", self.nu)?;
        writeln!(f, "intercept={}", self.intercept)?;
        writeln!(f, "r2={}", self.r2)?;
        writeln!(f, "p_value={:e}", self.p_value)
    }
}

pub fn fit_power_law(rows: &[(f64, f64)]) -> Result<PowerLawFit> {
    if rows.len() < 3 {
        return Err(Error::InsufficientPoints { needed: 3, got: rows.len() });
    }
    for (i, &(p, k)) in rows.iter().enumerate() {
        for v in [p, k] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveValue { row: i, value: v });
            }
        }
    }
    // Sorting makes the sums independent of row order.
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|&(p, k)| (p.ln(), k.ln())).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all parameter values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    let dof = n - 2.0;
    let p_value = if dof == 0.0 {
        1.0
    } else {
        let se = (sse / dof / sxx).sqrt();
        if se == 0.0 {
            if slope == 0.0 { 1.0 } else { 0.0 }
        } else {
            let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
            2.0 * t.sf((slope / se).abs())
        }
    };
    Ok(PowerLawFit {
        nu: -slope,
        intercept,
        r2,
        p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
        n: rows.len(),
    })
}
