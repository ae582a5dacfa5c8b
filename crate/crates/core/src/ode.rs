//! Dormand–Prince 5(4) integrator for autonomous complex systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// First trial step; chosen heuristically when absent.
    pub h_init: Option<f64>,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol, max_steps: 1_000_000, h_init: None }
    }
}

fn axpy<const N: usize>(y: &[Complex64; N], terms: &[(f64, &[Complex64; N])], h: f64) -> [Complex64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += k[i] * (h * c);
        }
    }
    out
}

fn norm_inf<const N: usize>(y: &[Complex64; N]) -> f64 {
    y.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Integrates `y' = f(y)` from `y0` over `[0, t_end]`.
///
/// `escaped` is consulted on every accepted state and aborts with
/// [`Error::Escape`] when it returns `Some(modulus)`. `on_step` sees every
/// accepted `(t, y)` including the initial state.
pub(crate) fn integrate<const N: usize, F, G, S>(
    f: F,
    y0: [Complex64; N],
    t_end: f64,
    opts: OdeOptions,
    escaped: G,
    mut on_step: S,
) -> Result<[Complex64; N]>
where
    F: Fn(&[Complex64; N]) -> Result<[Complex64; N]>,
    G: Fn(&[Complex64; N]) -> Option<f64>,
    S: FnMut(f64, &[Complex64; N]),
{
    on_step(0.0, &y0);
    if t_end == 0.0 {
        return Ok(y0);
    }
    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(&y)?;

    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            let d0 = norm_inf(&y).max(1e-5);
            let d1 = norm_inf(&k1).max(1e-10);
            (0.01 * d0 / d1).min(0.1)
        }
    }
    .min(t_end);

    let mut steps = 0;
    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepBudget { t, max_steps: opts.max_steps });
        }
        steps += 1;
        let last = t + h >= t_end * (1.0 - 4.0 * f64::EPSILON);
        if last {
            h = t_end - t;
        }

        let k2 = f(&axpy(&y, &[(A21, &k1)], h))?;
        let k3 = f(&axpy(&y, &[(A31, &k1), (A32, &k2)], h))?;
        let k4 = f(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h))?;
        let k5 = f(&axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h))?;
        let k6 = f(&axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h))?;
        let y_new = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = f(&y_new)?;

        let mut err = 0.0;
        for i in 0..N {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err += (e.norm() / sc).powi(2);
        }
        let err = (err / N as f64).sqrt();

        if err <= 1.0 && y_new.iter().all(|v| v.is_finite()) {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            if let Some(modulus) = escaped(&y) {
                return Err(Error::Escape { t, modulus });
            }
            on_step(t, &y);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= fac;
            if h < 1e-15 * t_end.max(1.0) {
                return Err(Error::StepBudget { t, max_steps: steps });
            }
        }
    }
    Ok(y)
}
