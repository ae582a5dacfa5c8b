use num_complex::Complex64;

use crate::error::{Error, Result};

/// Neville extrapolation of samples `D(h_i)` to `h = 0`. With the usual
/// halving ladder and three samples this is the quadratic Richardson table.
pub fn richardson(hs: &[f64], values: &[Complex64]) -> Result<Complex64> {
    if hs.is_empty() || hs.len() != values.len() {
        return Err(Error::invalid("extrapolation needs matching, non-empty ladders"));
    }
    if hs.iter().any(|h| !(*h > 0.0)) || hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("step ladder must be positive and strictly decreasing"));
    }
    let mut p = values.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            let (hi, hj) = (hs[i], hs[i + m]);
            p[i] = (p[i + 1] * hi - p[i] * hj) / (hi - hj);
        }
    }
    Ok(p[0])
}
