//! Cocycles `m_t(z)` over a semiflow and the weighted composition semigroup
//! `W_t f = m_t · (f ∘ φ_t)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{bloch_seminorm_with, taylor_with, AnalyticFn, GridSpec, Guard};
use crate::error::{Error, Result};
use crate::extrapolate::richardson;
use crate::flow::{ConformalMap, FlowModel, TrajectorySample};
use crate::quadrature::GaussLegendre;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Per-panel quadrature tolerance.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Maximum bisection depth of a quadrature panel.
pub const QUADRATURE_MAX_DEPTH: usize = 12;
pub const DEFAULT_QUADRATURE_ORDER: usize = 16;
/// Residuals at or below this floor count as identically zero in a
/// consistency ladder: integrator noise of order `tol / t` at the default
/// tolerance and ladder.
pub const CONSISTENCY_ZERO_FLOOR: f64 = 1e-9;
pub const CONSISTENCY_RATIO_RANGE: (f64, f64) = (0.3, 0.7);

fn default_order() -> usize {
    DEFAULT_QUADRATURE_ORDER
}

/// How the cocycle is specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `m_t(z) = exp ∫₀ᵗ g(φ_s(z)) ds`.
    Weight { g: AnalyticFn },
    /// `m_t(z) = α(φ_t(z)) / α(z)`; `α` may vanish at `fixed_point` only.
    Coboundary {
        alpha: AnalyticFn,
        #[serde(default)]
        fixed_point: Option<Complex64>,
    },
}

impl WeightSpec {
    pub fn weight(g: AnalyticFn) -> Self {
        WeightSpec::Weight { g }
    }

    pub fn coboundary(alpha: AnalyticFn, fixed_point: Option<Complex64>) -> Self {
        WeightSpec::Coboundary { alpha, fixed_point }
    }

    fn validate(&self) -> Result<()> {
        match self {
            WeightSpec::Weight { g } => g.validate(),
            WeightSpec::Coboundary { alpha, fixed_point } => {
                if let Some(p) = fixed_point {
                    if !(p.norm() <= 1.0) {
                        return Err(Error::invalid(format!("fixed point {p} outside the closed disc")));
                    }
                }
                alpha.validate()
            }
        }
    }
}

/// Values of the weighted semigroup machinery at one `(z, t)`, all taken from
/// the same flow run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedState {
    pub phi: Complex64,
    pub dphi: Complex64,
    pub m: Complex64,
    pub dm: Complex64,
}

/// A semiflow together with a cocycle over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WeightedRepr", into = "WeightedRepr")]
pub struct WeightedSemigroup {
    flow: FlowModel,
    weight: WeightSpec,
    quadrature_order: usize,
    weight_prime: AnalyticFn,
    rule: GaussLegendre,
}

#[derive(Serialize, Deserialize)]
struct WeightedRepr {
    flow: FlowModel,
    weight: WeightSpec,
    #[serde(default = "default_order")]
    quadrature_order: usize,
}

impl TryFrom<WeightedRepr> for WeightedSemigroup {
    type Error = Error;
    fn try_from(r: WeightedRepr) -> Result<Self> {
        WeightedSemigroup::with_order(r.flow, r.weight, r.quadrature_order)
    }
}

impl From<WeightedSemigroup> for WeightedRepr {
    fn from(w: WeightedSemigroup) -> Self {
        WeightedRepr { flow: w.flow, weight: w.weight, quadrature_order: w.quadrature_order }
    }
}

impl WeightedSemigroup {
    pub fn new(flow: FlowModel, weight: WeightSpec) -> Self {
        WeightedSemigroup::with_order(flow, weight, DEFAULT_QUADRATURE_ORDER)
            .expect("default quadrature order is valid")
    }

    pub fn with_order(flow: FlowModel, weight: WeightSpec, quadrature_order: usize) -> Result<Self> {
        if !(1..=64).contains(&quadrature_order) {
            return Err(Error::invalid(format!("quadrature order {quadrature_order} not in 1..=64")));
        }
        weight.validate()?;
        let weight_prime = match &weight {
            WeightSpec::Weight { g } => g.derivative(),
            WeightSpec::Coboundary { alpha, .. } => alpha.derivative(),
        };
        Ok(WeightedSemigroup {
            flow,
            weight,
            quadrature_order,
            weight_prime,
            rule: GaussLegendre::new(quadrature_order),
        })
    }

    /// Unweighted composition semigroup.
    pub fn unweighted(flow: FlowModel) -> Self {
        WeightedSemigroup::new(flow, WeightSpec::weight(AnalyticFn::zero()))
    }

    pub fn flow(&self) -> &FlowModel {
        &self.flow
    }

    pub fn weight(&self) -> &WeightSpec {
        &self.weight
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// The infinitesimal weight `g = ∂_t m_t |_{t=0}`; for a coboundary this
    /// is `G α'/α`.
    pub fn weight_generator(&self) -> AnalyticFn {
        match &self.weight {
            WeightSpec::Weight { g } => g.clone(),
            WeightSpec::Coboundary { alpha, fixed_point } => AnalyticFn::quotient(
                AnalyticFn::product(vec![self.flow.generator(), self.weight_prime.clone()]),
                alpha.clone(),
                fixed_point.iter().map(|p| Guard::point(*p)).collect(),
            ),
        }
    }

    /// `Af = G f' + g f` for this semigroup.
    pub fn generator_applied(&self, f: &AnalyticFn) -> AnalyticFn {
        apply_generator(&self.flow.generator(), &self.weight_generator(), f)
    }

    /// `m_t(z)`.
    pub fn cocycle(&self, z: Complex64, t: f64) -> Result<Complex64> {
        match &self.weight {
            WeightSpec::Weight { g } => {
                if t == 0.0 || g.is_zero() {
                    check_args(z, t)?;
                    return Ok(ONE);
                }
                let traj = self.flow.trajectory(z, t)?;
                let [log_m, _] = self.integrate_along(z, &traj.samples, false)?;
                nonvanishing(log_m.exp(), z)
            }
            WeightSpec::Coboundary { .. } => Ok(self.evaluate(z, t)?.m),
        }
    }

    /// `φ_t(z)`, `∂_zφ_t(z)`, `m_t(z)` and `∂_z m_t(z)` in one pass.
    pub fn evaluate(&self, z: Complex64, t: f64) -> Result<WeightedState> {
        check_args(z, t)?;
        if t == 0.0 {
            return Ok(WeightedState { phi: z, dphi: ONE, m: ONE, dm: ZERO });
        }
        match &self.weight {
            WeightSpec::Weight { g } => {
                let traj = self.flow.trajectory(z, t)?;
                let end = *traj.end();
                if g.is_zero() {
                    return Ok(WeightedState { phi: end.value, dphi: end.dz, m: ONE, dm: ZERO });
                }
                let [log_m, log_dm] = self.integrate_along(z, &traj.samples, true)?;
                let m = nonvanishing(log_m.exp(), z)?;
                Ok(WeightedState { phi: end.value, dphi: end.dz, m, dm: m * log_dm })
            }
            WeightSpec::Coboundary { alpha, fixed_point } => {
                let (phi, dphi) = self.flow.advance_with_derivative(z, t)?;
                let (m, dm) = coboundary_parts(alpha, &self.weight_prime, *fixed_point, z, phi, dphi)?;
                Ok(WeightedState { phi, dphi, m, dm })
            }
        }
    }

    /// `∫₀ᵗ g(φ_s) ds` and, if asked, `∫₀ᵗ g'(φ_s) ∂_zφ_s ds`, panel by panel
    /// along the trajectory samples.
    fn integrate_along(
        &self,
        z: Complex64,
        samples: &[TrajectorySample],
        with_derivative: bool,
    ) -> Result<[Complex64; 2]> {
        let WeightSpec::Weight { g } = &self.weight else {
            unreachable!("quadrature only runs for the weight variant")
        };
        let integrand = |start: &TrajectorySample, s: f64| -> Result<[Complex64; 2]> {
            let (w, v) = if s == start.t {
                (start.value, start.dz)
            } else {
                self.flow.state_within_panel(z, start, s)?
            };
            let gw = g.eval(w)?;
            let dw = if with_derivative { self.weight_prime.eval(w)? * v } else { ZERO };
            Ok([gw, dw])
        };
        let parts = samples
            .par_windows(2)
            .map(|pair| self.adaptive_panel(&integrand, &pair[0], pair[0].t, pair[1].t, 0))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.iter().fold([ZERO, ZERO], |acc, p| [acc[0] + p[0], acc[1] + p[1]]))
    }

    fn gauss<F>(&self, f: &F, start: &TrajectorySample, a: f64, b: f64) -> Result<[Complex64; 2]>
    where
        F: Fn(&TrajectorySample, f64) -> Result<[Complex64; 2]>,
    {
        let mut acc = [ZERO, ZERO];
        for (s, w) in self.rule.on(a, b) {
            let v = f(start, s)?;
            acc[0] += v[0] * w;
            acc[1] += v[1] * w;
        }
        Ok(acc)
    }

    fn adaptive_panel<F>(
        &self,
        f: &F,
        start: &TrajectorySample,
        a: f64,
        b: f64,
        depth: usize,
    ) -> Result<[Complex64; 2]>
    where
        F: Fn(&TrajectorySample, f64) -> Result<[Complex64; 2]> + Sync,
    {
        let mid = 0.5 * (a + b);
        let whole = self.gauss(f, start, a, b)?;
        let left = self.gauss(f, start, a, mid)?;
        let right = self.gauss(f, start, mid, b)?;
        let halves = [left[0] + right[0], left[1] + right[1]];
        let err = (0..2).map(|i| (whole[i] - halves[i]).norm()).fold(0.0, f64::max);
        let scale = (0..2).map(|i| halves[i].norm()).fold(1.0, f64::max);
        if err <= QUADRATURE_TOL * scale {
            return Ok(halves);
        }
        if depth >= QUADRATURE_MAX_DEPTH {
            return Err(Error::Quadrature { a, b });
        }
        let l = self.adaptive_panel(f, start, a, mid, depth + 1)?;
        let r = self.adaptive_panel(f, start, mid, b, depth + 1)?;
        Ok([l[0] + r[0], l[1] + r[1]])
    }

    /// `|m_{s+t}(z) - m_s(z) m_t(φ_s(z))|`.
    pub fn check_cocycle_identity(&self, z: Complex64, s: f64, t: f64) -> Result<f64> {
        let whole = self.cocycle(z, s + t)?;
        let first = self.cocycle(z, s)?;
        let second = self.cocycle(self.flow.advance(z, s)?, t)?;
        Ok((whole - first * second).norm())
    }

    /// Richardson-extrapolated `lim_{h→0} (m_h(z) - 1)/h`.
    pub fn weight_generator_fd(&self, z: Complex64, h_ladder: &[f64]) -> Result<Complex64> {
        let values = h_ladder
            .iter()
            .map(|&h| Ok((self.cocycle(z, h)? - ONE) / h))
            .collect::<Result<Vec<_>>>()?;
        richardson(h_ladder, &values)
    }

    /// `W_t f(z) = m_t(z) f(φ_t(z))`.
    pub fn apply_weighted(&self, f: &AnalyticFn, z: Complex64, t: f64) -> Result<Complex64> {
        if t == 0.0 {
            check_args(z, t)?;
            return f.eval(z);
        }
        let s = self.evaluate(z, t)?;
        Ok(s.m * f.eval(s.phi)?)
    }

    /// `d/dz W_t f(z) = m_t' f(φ_t) + m_t f'(φ_t) φ_t'`.
    pub fn weighted_z_derivative(&self, f: &AnalyticFn, z: Complex64, t: f64) -> Result<Complex64> {
        self.weighted_z_derivative_with(f, &f.derivative(), z, t)
    }

    pub(crate) fn weighted_z_derivative_with(
        &self,
        f: &AnalyticFn,
        df: &AnalyticFn,
        z: Complex64,
        t: f64,
    ) -> Result<Complex64> {
        if t == 0.0 {
            check_args(z, t)?;
            return df.eval(z);
        }
        let s = self.evaluate(z, t)?;
        Ok(s.dm * f.eval(s.phi)? + s.m * df.eval(s.phi)? * s.dphi)
    }

    /// Residual table of `(W_t f - f)/t - Af` along `t_ladder`.
    pub fn generator_consistency(
        &self,
        f: &AnalyticFn,
        norm: &ConsistencyNorm,
        t_ladder: &[f64],
    ) -> Result<ConsistencyTable> {
        if t_ladder.is_empty()
            || t_ladder.iter().any(|t| !(*t > 0.0 && t.is_finite()))
            || t_ladder.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::invalid("t ladder must be positive and strictly decreasing"));
        }
        let af = self.generator_applied(f);
        let df = f.derivative();
        let daf = af.derivative();
        let mut rows: Vec<ConsistencyRow> = Vec::with_capacity(t_ladder.len());
        for &t in t_ladder {
            let residual_at = |z: Complex64| -> Result<Complex64> {
                Ok((self.apply_weighted(f, z, t)? - f.eval(z)?) / t - af.eval(z)?)
            };
            let residual = match norm {
                ConsistencyNorm::H2 { n, r } => taylor_with(residual_at, *n, *r)?.h2_norm(),
                ConsistencyNorm::BlochGrid { grid } => {
                    let derivative_at = |z: Complex64| -> Result<Complex64> {
                        let dw = self.weighted_z_derivative_with(f, &df, z, t)?;
                        Ok((dw - df.eval(z)?) / t - daf.eval(z)?)
                    };
                    residual_at(ZERO)?.norm() + bloch_seminorm_with(grid, derivative_at)?
                }
            };
            let ratio = rows.last().and_then(|p| (p.residual > 0.0).then(|| residual / p.residual));
            rows.push(ConsistencyRow { t, residual, ratio });
        }
        Ok(ConsistencyTable { rows })
    }
}

fn check_args(z: Complex64, t: f64) -> Result<()> {
    if !(z.norm() < 1.0) {
        return Err(Error::Domain { z });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
    }
    Ok(())
}

fn nonvanishing(m: Complex64, z: Complex64) -> Result<Complex64> {
    if m == ZERO || !m.is_finite() {
        return Err(Error::Hypothesis(format!("cocycle vanishes or overflows at {z}")));
    }
    Ok(m)
}

fn coboundary_parts(
    alpha: &AnalyticFn,
    alpha_prime: &AnalyticFn,
    fixed_point: Option<Complex64>,
    z: Complex64,
    phi: Complex64,
    dphi: Complex64,
) -> Result<(Complex64, Complex64)> {
    if fixed_point.is_some_and(|p| (p - z).norm() <= 1e-14) {
        return Err(Error::Singularity { z });
    }
    let az = alpha.eval(z)?;
    if az == ZERO {
        return Err(Error::Singularity { z });
    }
    let aphi = alpha.eval(phi)?;
    let m = aphi / az;
    let dm = alpha_prime.eval(phi)? * dphi / az - aphi * alpha_prime.eval(z)? / (az * az);
    Ok((nonvanishing(m, z)?, dm))
}

/// `α(φ_t(z)) / α(z)`.
pub fn coboundary_eval(alpha: &AnalyticFn, flow: &FlowModel, z: Complex64, t: f64) -> Result<Complex64> {
    check_args(z, t)?;
    let az = alpha.eval(z)?;
    if az == ZERO {
        return Err(Error::Singularity { z });
    }
    if t == 0.0 {
        return Ok(ONE);
    }
    nonvanishing(alpha.eval(flow.advance(z, t)?)? / az, z)
}

/// `|m_t(z) f(φ_t(z)) - (αf)(φ_t(z)) / α(z)|` for the coboundary of `α`.
pub fn coboundary_similarity_check(
    alpha: &AnalyticFn,
    flow: &FlowModel,
    f: &AnalyticFn,
    z: Complex64,
    t: f64,
) -> Result<f64> {
    let m = coboundary_eval(alpha, flow, z, t)?;
    let phi = flow.advance(z, t)?;
    let lhs = m * f.eval(phi)?;
    let rhs = alpha.eval(phi)? * f.eval(phi)? / alpha.eval(z)?;
    Ok((lhs - rhs).norm())
}

/// `Af = G f' + g f` as an expression tree.
pub fn apply_generator(g_flow: &AnalyticFn, g_weight: &AnalyticFn, f: &AnalyticFn) -> AnalyticFn {
    AnalyticFn::sum(vec![
        AnalyticFn::product(vec![g_flow.clone(), f.derivative()]),
        AnalyticFn::product(vec![g_weight.clone(), f.clone()]),
    ])
}

/// Pulls a generator pair on `h(𝔻)` back to the disc:
/// `G₁ = (G ∘ h)/h'`, `g₁ = g ∘ h`.
pub fn transfer_generator(h: &ConformalMap, g_flow: &AnalyticFn, g_weight: &AnalyticFn) -> (AnalyticFn, AnalyticFn) {
    if h.is_identity() {
        return (g_flow.clone(), g_weight.clone());
    }
    let g1 = AnalyticFn::quotient(
        AnalyticFn::compose(g_flow.clone(), h.forward_fn().clone()),
        h.derivative_fn().clone(),
        vec![],
    );
    let w1 = if matches!(g_weight, AnalyticFn::Constant { .. }) {
        g_weight.clone()
    } else {
        AnalyticFn::compose(g_weight.clone(), h.forward_fn().clone())
    };
    (g1, w1)
}

/// Compares `W_t f(z)` on the disc with the same operator conjugated through
/// `h`: the semigroup `μ_t (F ∘ ψ_t)` on `h(𝔻)`, `ψ_t = h φ_t h⁻¹`,
/// `μ_t = m_t ∘ h⁻¹`, applied to `F = f ∘ h⁻¹` and read at `h(z)`.
pub fn transfer_conjugation_check(
    h: &ConformalMap,
    wsg: &WeightedSemigroup,
    f: &AnalyticFn,
    z: Complex64,
    t: f64,
) -> Result<f64> {
    let direct = wsg.apply_weighted(f, z, t)?;
    let w = h.forward(z)?;
    let pre = h.inverse(w, z)?;
    let psi = h.forward(wsg.flow.advance(pre, t)?)?;
    let mu = wsg.cocycle(pre, t)?;
    let big_f = f.eval(h.inverse(psi, pre)?)?;
    Ok((direct - mu * big_f).norm())
}

/// Norm used for consistency residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsistencyNorm {
    /// Hardy norm from `n + 1` Taylor coefficients sampled on `|z| = r`.
    H2 { n: usize, r: f64 },
    BlochGrid { grid: GridSpec },
}

impl Default for ConsistencyNorm {
    fn default() -> Self {
        ConsistencyNorm::H2 { n: 64, r: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub t: f64,
    pub residual: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyTable {
    /// First-order decay: every consecutive ratio in `[0.3, 0.7]`, or the
    /// residual vanishes to the zero floor on every row.
    pub fn passes(&self) -> bool {
        if self.rows.iter().all(|r| r.residual <= CONSISTENCY_ZERO_FLOOR) {
            return true;
        }
        let (lo, hi) = CONSISTENCY_RATIO_RANGE;
        self.rows.len() >= 2
            && self.rows[1..].iter().all(|r| r.ratio.is_some_and(|q| (lo..=hi).contains(&q)))
    }

    /// CSV with columns `t,residual,ratio` (empty ratio on the first row).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,residual,ratio\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|q| q.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.t, r.residual, ratio));
        }
        out
    }
}

/// `0.1 · 2^{-k}` for `k = 0..n`.
pub fn default_t_ladder(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.1 * 0.5f64.powi(k as i32)).collect()
}
