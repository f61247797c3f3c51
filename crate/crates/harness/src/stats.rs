//! Replication summaries. Standard deviations use divisor `R`, so that
//! `rmse^2 = bias^2 + std^2` holds exactly.

pub const STD_CONVENTION: &str = "population standard deviation (divisor R); rmse^2 = bias^2 + std^2";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub count: usize,
    pub bias: f64,
    /// `None` for a single replication.
    pub std: Option<f64>,
    pub rmse: f64,
    pub bias_se: Option<f64>,
    pub std_se: Option<f64>,
    pub rmse_se: Option<f64>,
}

/// Summary of signed errors; `None` for an empty slice.
pub fn summarize_errors(e: &[f64]) -> Option<ErrorSummary> {
    if e.is_empty() {
        return None;
    }
    let r = e.len() as f64;
    let bias = e.iter().sum::<f64>() / r;
    let var = e.iter().map(|x| (x - bias).powi(2)).sum::<f64>() / r;
    let ms = e.iter().map(|x| x * x).sum::<f64>() / r;
    let rmse = ms.sqrt();
    let multi = e.len() > 1;
    let std = var.sqrt();
    Some(ErrorSummary {
        count: e.len(),
        bias,
        std: multi.then_some(std),
        rmse,
        bias_se: multi.then(|| std / r.sqrt()),
        std_se: multi.then(|| std / (2.0 * r).sqrt()),
        rmse_se: multi.then(|| root_mean_se(&e.iter().map(|x| x * x).collect::<Vec<_>>(), rmse)),
    })
}

/// `sqrt(mean(v))` and its delta-method standard error, for nonnegative `v`.
pub fn root_mean(v: &[f64]) -> Option<(f64, Option<f64>)> {
    if v.is_empty() {
        return None;
    }
    let m = (v.iter().sum::<f64>() / v.len() as f64).sqrt();
    Some((m, (v.len() > 1).then(|| root_mean_se(v, m))))
}

fn root_mean_se(sq: &[f64], root: f64) -> f64 {
    let r = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / r;
    let sd = (sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r).sqrt();
    if root > 0.0 {
        sd / (2.0 * root * r.sqrt())
    } else {
        0.0
    }
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_value_has_no_spread() {
        let s = summarize_errors(&[-0.4]).unwrap();
        assert_eq!(s.bias, -0.4);
        assert_eq!(s.rmse, 0.4);
        assert!(s.std.is_none() && s.bias_se.is_none());
    }

    #[test]
    fn known_values() {
        let s = summarize_errors(&[1.0, 3.0]).unwrap();
        assert_eq!(s.bias, 2.0);
        assert_eq!(s.std, Some(1.0));
        assert_eq!(s.rmse, 5f64.sqrt());
        assert_eq!(sample_std(&[1.0, 3.0]), Some(2f64.sqrt()));
    }

    proptest! {
        #[test]
        fn rmse_decomposes(e in proptest::collection::vec(-50.0f64..50.0, 2..200)) {
            let s = summarize_errors(&e).unwrap();
            let std = s.std.unwrap();
            prop_assert!((s.rmse.powi(2) - (s.bias.powi(2) + std.powi(2))).abs() <= 1e-9 * (1.0 + s.rmse.powi(2)));
        }
    }
}
