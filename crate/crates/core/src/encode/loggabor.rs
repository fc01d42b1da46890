use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{filled_rows, fnv1a, near_zero_threshold, IrisCode};
use crate::normalize::NormalizedIris;

pub const ENCODER_ID: &str = "loggabor1d";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogGaborParams {
    /// Centre wavelength in angular samples.
    pub wavelength: f64,
    /// Ratio of the Gaussian width to the centre frequency on a log axis.
    pub sigma_on_f: f64,
}

impl Default for LogGaborParams {
    fn default() -> Self {
        Self {
            wavelength: 18.0,
            sigma_on_f: 0.5,
        }
    }
}

impl LogGaborParams {
    pub fn params_hash(&self) -> u64 {
        let mut b = ENCODER_ID.as_bytes().to_vec();
        b.extend(self.wavelength.to_le_bytes());
        b.extend(self.sigma_on_f.to_le_bytes());
        fnv1a(&b)
    }

    /// One-sided frequency response for an `n`-point row; zero at DC and on
    /// negative frequencies, so the output is the analytic signal.
    fn transfer(&self, n: usize) -> Vec<f64> {
        let f0 = 1.0 / self.wavelength;
        let denom = 2.0 * self.sigma_on_f.ln().powi(2);
        (0..n)
            .map(|k| {
                if k == 0 || 2 * k > n {
                    return 0.0;
                }
                let f = k as f64 / n as f64;
                (-(f / f0).ln().powi(2) / denom).exp()
            })
            .collect()
    }
}

/// Two bits per texture sample: signs of the real and imaginary parts of the
/// row-wise log-Gabor response. Real bits occupy code rows `0..rows`,
/// imaginary bits rows `rows..2·rows`.
pub fn encode_loggabor1d(n: &NormalizedIris, params: &LogGaborParams) -> IrisCode {
    let (rows, cols) = (n.rows(), n.cols());
    let mut code = IrisCode::new(2 * rows, cols, ENCODER_ID, params.params_hash());
    let transfer = params.transfer(cols);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(cols);
    let inv = planner.plan_fft_inverse(cols);
    let mut buf = vec![Complex::new(0.0, 0.0); cols];
    for (i, row) in filled_rows(n).into_iter().enumerate() {
        let Some(row) = row else { continue };
        for (b, &v) in buf.iter_mut().zip(&row) {
            *b = Complex::new(v, 0.0);
        }
        fwd.process(&mut buf);
        for (b, &g) in buf.iter_mut().zip(&transfer) {
            *b *= g / cols as f64;
        }
        inv.process(&mut buf);
        let thresh = near_zero_threshold(buf.iter().map(|c| c.norm()));
        for (j, c) in buf.iter().enumerate() {
            let ok = n.valid.get(j, i) && c.norm() >= thresh;
            code.set(i, j, c.re > 0.0, ok);
            code.set(rows + i, j, c.im > 0.0, ok);
        }
    }
    code
}
