//! Order statistics shared by the retrieval and evaluation code.

use serde::{Deserialize, Serialize};

/// Linear-interpolated quantile of ascending-sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> f64 {
    quantile_sorted(&sorted(values), 0.5)
}

/// Tukey box-plot summary: quartiles and 1.5·IQR whiskers at the furthest
/// datum inside the fences, never inside the box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub n: usize,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        let q1 = quantile_sorted(&s, 0.25);
        let q3 = quantile_sorted(&s, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        // interpolated quartiles can lie beyond every datum inside the fence
        let whisker_lo = s.iter().copied().find(|&v| v >= lo_fence).map_or(q1, |v| v.min(q1));
        let whisker_hi = s.iter().rev().copied().find(|&v| v <= hi_fence).map_or(q3, |v| v.max(q3));
        Some(Self {
            median: quantile_sorted(&s, 0.5),
            q1,
            q3,
            whisker_lo,
            whisker_hi,
            n: s.len(),
        })
    }
}
