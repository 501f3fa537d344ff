use serde::{Deserialize, Serialize};

use super::record::SimRecord;

/// Time for one output to enter and stay inside the settling band after a
/// step in either reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlingEntry {
    /// 1-based output index.
    pub output: usize,
    pub step_time: f64,
    /// Seconds after the step; `None` if the output never settled before the next step.
    pub settling_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    /// RMSE of `h_i − y_{r,i}` over the whole run.
    pub tracking_rmse: Option<[f64; 2]>,
    pub settling: Vec<SettlingEntry>,
    /// RMSE of `x̂ − h` over samples with `t ≥ burn_in`.
    pub estimation_rmse: Option<[f64; 3]>,
    /// RMSE of `y − h` over samples with `t ≥ burn_in`.
    pub measurement_rmse: [f64; 3],
    pub burn_in: f64,
    pub settle_band: f64,
    pub saturated_samples: usize,
}

fn rmse<I: Iterator<Item = f64>>(errs: I) -> f64 {
    let (sum, n) = errs.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

fn settling(records: &[SimRecord], band: f64) -> Vec<SettlingEntry> {
    // A step in either reference opens a new window for both outputs, since
    // coupling lets one channel's step disturb the other.
    let starts: Vec<usize> = (1..records.len()).filter(|&k| records[k].y_r != records[k - 1].y_r).collect();
    let mut out = Vec::new();
    for i in 0..2 {
        for (n, &start) in starts.iter().enumerate() {
            let end = starts.get(n + 1).copied().unwrap_or(records.len());
            let window = &records[start..end];
            let last_out = window.iter().rposition(|r| (r.h[i] - r.y_r.map_or(f64::NAN, |y| y[i])).abs() > band);
            let settling_time = match last_out {
                None => Some(0.0),
                Some(k) if k + 1 < window.len() => Some(window[k + 1].t - window[0].t),
                Some(_) => None,
            };
            out.push(SettlingEntry { output: i + 1, step_time: window[0].t, settling_time });
        }
    }
    out
}

/// Metrics over a finished run.
pub fn compute_metrics(records: &[SimRecord], burn_in: f64, settle_band: f64) -> MetricsReport {
    let has_ref = records.iter().all(|r| r.y_r.is_some()) && !records.is_empty();
    let tracking_rmse = has_ref.then(|| {
        let e = |i: usize| rmse(records.iter().map(|r| r.h[i] - r.y_r.unwrap()[i]));
        [e(0), e(1)]
    });
    let late: Vec<&SimRecord> = records.iter().filter(|r| r.t >= burn_in).collect();
    let has_est = !late.is_empty() && late.iter().all(|r| r.x_hat.is_some());
    let estimation_rmse = has_est.then(|| {
        let e = |i: usize| rmse(late.iter().map(|r| r.x_hat.unwrap()[i] - r.h[i]));
        [e(0), e(1), e(2)]
    });
    let m = |i: usize| rmse(late.iter().map(|r| r.y[i] - r.h[i]));
    MetricsReport {
        samples: records.len(),
        tracking_rmse,
        settling: if has_ref { settling(records, settle_band) } else { Vec::new() },
        estimation_rmse,
        measurement_rmse: [m(0), m(1), m(2)],
        burn_in,
        settle_band,
        saturated_samples: records.iter().filter(|r| r.saturated[0] || r.saturated[1]).count(),
    }
}
