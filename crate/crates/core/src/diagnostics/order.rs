use crate::error::{Error, Result};

use super::regret::RegretRecord;

/// `R_N / ln^i N` for several orders `i` at one step `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderRatio {
    pub n: usize,
    pub regret: f64,
    /// Same order as the requested `orders`.
    pub ratios: Vec<f64>,
}

/// Ratios at the given sample points (typically epoch ends).
pub fn regret_order_ratio(record: &RegretRecord, points: &[usize], orders: &[u32]) -> Result<Vec<OrderRatio>> {
    points
        .iter()
        .map(|&n| {
            if (n as f64) <= std::f64::consts::E {
                return Err(Error::Parameter(format!("N = {n} must exceed e")));
            }
            let regret = record
                .regret_at(n)
                .ok_or_else(|| Error::Parameter(format!("no regret recorded at step {n}")))?;
            let ln = (n as f64).ln();
            let ratios = orders.iter().map(|&i| regret / ln.powi(i as i32)).collect();
            Ok(OrderRatio { n, regret, ratios })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_log_squared() {
        let first = 3;
        let cum_regret: Vec<f64> = (first..200).map(|k| (k as f64).ln().powi(2)).collect();
        let rec = RegretRecord { first_step: first, cum_regret, ..Default::default() };
        let out = regret_order_ratio(&rec, &[10, 50, 199], &[1, 2, 3]).unwrap();
        for r in &out {
            assert!((r.ratios[1] - 1.0).abs() < 1e-12);
        }
        assert!(out[0].ratios[0] < out[2].ratios[0]);
    }

    #[test]
    fn zero_regret_gives_zero() {
        let rec = RegretRecord { first_step: 0, cum_regret: vec![0.0; 10], ..Default::default() };
        let out = regret_order_ratio(&rec, &[5, 9], &[1, 2]).unwrap();
        assert!(out.iter().all(|r| r.ratios.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn small_n_rejected() {
        let rec = RegretRecord { first_step: 0, cum_regret: vec![0.0; 10], ..Default::default() };
        assert!(regret_order_ratio(&rec, &[2], &[1]).is_err());
        assert!(regret_order_ratio(&rec, &[20], &[1]).is_err());
    }
}
