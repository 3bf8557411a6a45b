use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EvalError, Result};

/// Smallest p-value reported.
pub const P_FLOOR: f64 = 1e-12;

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

fn t_dist(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("df > 0")
}

/// `(mean, lower, upper)` of the Student-t interval with sample standard
/// deviation.
pub fn mean_ci(values: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvalError::InvalidConfig(format!("confidence level {level}")));
    }
    let (m, s) = mean_sd(values);
    if s == 0.0 {
        return Ok((m, m, m));
    }
    let n = values.len() as f64;
    let t = t_dist(n - 1.0).inverse_cdf((1.0 + level) / 2.0);
    let h = t * s / n.sqrt();
    Ok((m, m - h, m + h))
}

/// One-tailed paired t-test that `best` exceeds `other`:
/// `p = 1 - F(t; n-1)` on the differences, floored at [`P_FLOOR`].
pub fn one_tailed_paired_ttest(best: &[f64], other: &[f64]) -> Result<f64> {
    if best.len() != other.len() {
        return Err(EvalError::LengthMismatch(best.len(), other.len()));
    }
    if best.len() < 2 {
        return Err(EvalError::TooFewValues(best.len()));
    }
    let d: Vec<f64> = best.iter().zip(other).map(|(a, b)| a - b).collect();
    let (m, s) = mean_sd(&d);
    let p = if s == 0.0 {
        match m.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        }
    } else {
        let t = m / (s / (d.len() as f64).sqrt());
        if t == 0.0 {
            0.5
        } else {
            1.0 - t_dist(d.len() as f64 - 1.0).cdf(t)
        }
    };
    Ok(p.max(P_FLOOR))
}

/// `p<.001` below a thousandth, otherwise `p=.012` style.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p<.001".into()
    } else {
        let s = format!("{p:.3}");
        format!("p={}", s.strip_prefix('0').unwrap_or(&s))
    }
}
