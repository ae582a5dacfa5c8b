//! Finite (and truncated infinite) Blaschke products, pseudohyperbolic
//! geometry and the interpolation / derivative lower-bound diagnostics.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticFn;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Unimodular normalisation `|a| / a` of a Blaschke factor, `-1` at `a = 0`.
fn unimodular(a: Complex64) -> Complex64 {
    if a == ZERO {
        -ONE
    } else {
        a.norm() / a
    }
}

/// Blaschke factor `(|a|/a) (a - z) / (1 - ā z)`, equal to `z` when `a = 0`.
pub fn b_factor(a: Complex64, z: Complex64) -> Complex64 {
    if a == ZERO {
        return z;
    }
    unimodular(a) * (a - z) / (1.0 - a.conj() * z)
}

/// Derivative of [`b_factor`] in `z`.
pub fn b_factor_derivative(a: Complex64, z: Complex64) -> Complex64 {
    if a == ZERO {
        return ONE;
    }
    let den = 1.0 - a.conj() * z;
    -unimodular(a) * (1.0 - a.norm_sqr()) / (den * den)
}

/// Pseudohyperbolic distance `|(w - z) / (1 - w̄ z)|`.
pub fn pseudo_distance(z: Complex64, w: Complex64) -> f64 {
    (z - w).norm() / (1.0 - z.conj() * w).norm()
}

/// Pseudohyperbolic disc `Δ(a, r) = { z : ρ(z, a) < r }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoDisc {
    pub center: Complex64,
    pub radius: f64,
}

impl PseudoDisc {
    pub fn new(center: Complex64, radius: f64) -> Result<Self> {
        if !(center.norm() < 1.0) {
            return Err(Error::Domain { z: center });
        }
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::invalid(format!("pseudo-disc radius {radius} outside (0, 1)")));
        }
        Ok(PseudoDisc { center, radius })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        pseudo_distance(z, self.center) < self.radius
    }

    /// Samples on concentric pseudohyperbolic circles (plus the centre),
    /// pushed through `ζ ↦ (a - ζ)/(1 - ā ζ)` so that `ρ(z, a) = |ζ|`.
    pub fn samples(&self, n_radii: usize, n_angles: usize) -> Vec<Complex64> {
        let a = self.center;
        let mut out = vec![a];
        for i in 1..=n_radii {
            let s = self.radius * i as f64 / n_radii as f64;
            for j in 0..n_angles {
                let zeta = Complex64::from_polar(s, std::f64::consts::TAU * j as f64 / n_angles as f64);
                out.push((a - zeta) / (1.0 - a.conj() * zeta));
            }
        }
        out
    }

    /// Closures of two pseudo-discs of equal radius `α` are disjoint iff the
    /// centres are more than `2α / (1 + α²)` apart.
    pub fn disjoint_from(&self, other: &PseudoDisc) -> bool {
        let (r1, r2) = (self.radius, other.radius);
        // hyperbolic radii add; tanh(artanh r1 + artanh r2)
        let sep = (r1 + r2) / (1.0 + r1 * r2);
        pseudo_distance(self.center, other.center) > sep
    }
}

/// `e^{iθ} Π b_{z_k}(z)` over a finite zero list. `tail_mass` records
/// `Σ_{k>N} (1 - |z_k|)` when the list truncates an infinite sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlaschkeRepr", into = "BlaschkeRepr")]
pub struct BlaschkeProduct {
    zeros: Vec<Complex64>,
    theta: f64,
    tail_mass: f64,
}

#[derive(Serialize, Deserialize)]
struct BlaschkeRepr {
    zeros: Vec<Complex64>,
    #[serde(default)]
    theta: f64,
    #[serde(default, skip_serializing_if = "is_zero_f64")]
    tail_mass: f64,
}

fn is_zero_f64(x: &f64) -> bool {
    *x == 0.0
}

impl TryFrom<BlaschkeRepr> for BlaschkeProduct {
    type Error = Error;
    fn try_from(r: BlaschkeRepr) -> Result<Self> {
        BlaschkeProduct::new(r.zeros, r.theta).map(|b| b.with_tail_mass(r.tail_mass))
    }
}

impl From<BlaschkeProduct> for BlaschkeRepr {
    fn from(b: BlaschkeProduct) -> Self {
        BlaschkeRepr { zeros: b.zeros, theta: b.theta, tail_mass: b.tail_mass }
    }
}

impl BlaschkeProduct {
    pub fn new(zeros: Vec<Complex64>, theta: f64) -> Result<Self> {
        let b = BlaschkeProduct { zeros, theta, tail_mass: 0.0 };
        b.validate()?;
        Ok(b)
    }

    /// Zeros `1 - 2^{-n}`, `n = 1..=n_max`, with tail mass `2^{-n_max}`.
    pub fn geometric_truncation(n_max: usize) -> Self {
        let zeros = (1..=n_max).map(|n| Complex64::new(1.0 - 0.5f64.powi(n as i32), 0.0)).collect();
        BlaschkeProduct { zeros, theta: 0.0, tail_mass: 0.5f64.powi(n_max as i32) }
    }

    pub fn with_tail_mass(mut self, tail_mass: f64) -> Self {
        self.tail_mass = tail_mass;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(z) = self.zeros.iter().find(|z| !(z.norm() < 1.0)) {
            return Err(Error::Domain { z: *z });
        }
        if !self.theta.is_finite() || !(self.tail_mass >= 0.0) {
            return Err(Error::invalid("phase and tail mass must be finite, tail mass >= 0"));
        }
        Ok(())
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Bound on `|B_N(z) - B(z)|` for the infinite product this truncates.
    pub fn truncation_error_bound(&self, z: Complex64) -> f64 {
        2.0 * self.tail_mass / (1.0 - z.norm())
    }

    /// The product `B(e^{-it} z)`, i.e. zeros rotated by `e^{it}`.
    pub fn rotated(&self, t: f64) -> Self {
        let u = Complex64::from_polar(1.0, t);
        let zeros = self.zeros.iter().map(|z| u * z).collect();
        // b_a(ū z) = b_{ua}(z) for a ≠ 0, while b_0(ū z) = ū z
        let at_origin = self.zeros.iter().filter(|z| **z == ZERO).count() as f64;
        BlaschkeProduct { zeros, theta: self.theta - at_origin * t, tail_mass: self.tail_mass }
    }

    fn phase(&self) -> Complex64 {
        Complex64::from_polar(1.0, self.theta)
    }

    /// `B(z)` for `|z| <= 1`; interior values are checked against `|B| < 1`.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() > 1.0 {
            return Err(Error::Domain { z });
        }
        let v = self.eval_plane(z);
        debug_assert!(z.norm() >= 1.0 || v.norm() <= 1.0 + 1e-12, "|B({z})| = {}", v.norm());
        Ok(v)
    }

    pub(crate) fn eval_plane(&self, z: Complex64) -> Complex64 {
        self.zeros.iter().fold(self.phase(), |acc, a| acc * b_factor(*a, z))
    }

    /// `B'(z) = e^{iθ} Σ_k b'_k(z) Π_{j≠k} b_j(z)` via prefix/suffix products,
    /// so it stays accurate at the zeros themselves.
    pub fn derivative(&self, z: Complex64) -> Result<Complex64> {
        if !(z.norm() < 1.0) {
            return Err(Error::Domain { z });
        }
        Ok(self.derivative_plane(z))
    }

    pub(crate) fn derivative_plane(&self, z: Complex64) -> Complex64 {
        let factors: Vec<Complex64> = self.zeros.iter().map(|a| b_factor(*a, z)).collect();
        let n = factors.len();
        let mut suffix = vec![ONE; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] * factors[k];
        }
        let mut prefix = ONE;
        let mut acc = ZERO;
        for k in 0..n {
            acc += prefix * b_factor_derivative(self.zeros[k], z) * suffix[k + 1];
            prefix *= factors[k];
        }
        self.phase() * acc
    }

    /// `(B / b_{z_k})(z)`.
    pub fn deflated(&self, k: usize, z: Complex64) -> Complex64 {
        self.zeros
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .fold(self.phase(), |acc, (_, a)| acc * b_factor(*a, z))
    }

    /// The product as a tree of Möbius factors (used for higher derivatives).
    pub fn as_tree(&self) -> AnalyticFn {
        let mut factors = vec![AnalyticFn::constant(self.phase())];
        for &a in &self.zeros {
            if a == ZERO {
                factors.push(AnalyticFn::identity());
            } else {
                let u = unimodular(a);
                factors.push(AnalyticFn::Mobius { a: -u, b: u * a, c: -a.conj(), d: ONE });
            }
        }
        AnalyticFn::product(factors)
    }
}

/// Result of [`interpolation_delta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    /// `min_n |(B / b_{z_n})(z_n)|`.
    pub delta: f64,
    pub per_zero: Vec<f64>,
    /// `max_n (1 - |z_{n+1}|) / (1 - |z_n|)`, absent for fewer than two zeros.
    pub geometric_ratio: Option<f64>,
    pub interpolating: bool,
}

fn check_simple_zeros(zeros: &[Complex64]) -> Result<()> {
    for (i, a) in zeros.iter().enumerate() {
        if zeros[..i].iter().any(|b| b == a) {
            return Err(Error::Multiplicity { z: *a });
        }
    }
    Ok(())
}

pub fn interpolation_delta(b: &BlaschkeProduct) -> Result<InterpolationReport> {
    check_simple_zeros(&b.zeros)?;
    let per_zero: Vec<f64> =
        (0..b.zeros.len()).map(|k| b.deflated(k, b.zeros[k]).norm()).collect();
    let delta = per_zero.iter().copied().fold(1.0, f64::min);
    let geometric_ratio = b
        .zeros
        .windows(2)
        .map(|w| (1.0 - w[1].norm()) / (1.0 - w[0].norm()))
        .reduce(f64::max);
    Ok(InterpolationReport { delta, per_zero, geometric_ratio, interpolating: delta > 0.0 })
}

/// `Σ (1 - |z_k|)`.
pub fn blaschke_condition_sum(zeros: &[Complex64]) -> f64 {
    zeros.iter().map(|z| 1.0 - z.norm()).sum()
}

/// Per-zero row of a [`GpvReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpvRow {
    pub index: usize,
    pub zero: Complex64,
    pub deflated: f64,
    /// `min_{z ∈ Δ(a_n, α)} |B'(z)| (1 - |a_n|)` over the samples.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpvReport {
    pub delta: f64,
    pub alpha: f64,
    pub disjoint: bool,
    pub min_separation: Option<f64>,
    pub beta_hat: f64,
    pub per_zero: Vec<GpvRow>,
    pub truncation_tail: f64,
}

impl GpvReport {
    pub fn success(&self) -> bool {
        self.disjoint && self.beta_hat > 0.0
    }
}

/// Number of pseudohyperbolic circles sampled per disc.
pub const GPV_SAMPLE_RADII: usize = 5;

/// Empirical version of the derivative lower bound on pseudo-discs around
/// the marked zeros: disjointness of `Δ(a_n, α)` and `β̂ = min |B'|(1-|a_n|)`.
pub fn gpv_bound_check(
    b: &BlaschkeProduct,
    marked: &[usize],
    alpha: f64,
    samples_per_disc: usize,
) -> Result<GpvReport> {
    if let Some(&k) = marked.iter().find(|&&k| k >= b.zeros.len()) {
        return Err(Error::invalid(format!("marked index {k} out of range")));
    }
    check_simple_zeros(&marked.iter().map(|&k| b.zeros[k]).collect::<Vec<_>>())?;
    let deflated: Vec<f64> = marked.iter().map(|&k| b.deflated(k, b.zeros[k]).norm()).collect();
    let delta = deflated.iter().copied().fold(1.0, f64::min);
    if !(delta > 0.0) {
        return Err(Error::Hypothesis(format!("marked zeros have delta = {delta}")));
    }
    let discs = marked
        .iter()
        .map(|&k| PseudoDisc::new(b.zeros[k], alpha))
        .collect::<Result<Vec<_>>>()?;

    let mut disjoint = true;
    let mut min_separation: Option<f64> = None;
    for i in 0..discs.len() {
        for j in i + 1..discs.len() {
            disjoint &= discs[i].disjoint_from(&discs[j]);
            let rho = pseudo_distance(discs[i].center, discs[j].center);
            min_separation = Some(min_separation.map_or(rho, |m| m.min(rho)));
        }
    }

    let mut per_zero = Vec::with_capacity(marked.len());
    for ((&k, disc), &dfl) in marked.iter().zip(&discs).zip(&deflated) {
        let a = b.zeros[k];
        let mut beta = f64::INFINITY;
        for z in disc.samples(GPV_SAMPLE_RADII, samples_per_disc) {
            beta = beta.min(b.derivative(z)?.norm() * (1.0 - a.norm()));
        }
        per_zero.push(GpvRow { index: k, zero: a, deflated: dfl, beta });
    }
    let beta_hat = per_zero.iter().map(|r| r.beta).fold(f64::INFINITY, f64::min);

    Ok(GpvReport {
        delta,
        alpha,
        disjoint,
        min_separation,
        beta_hat,
        per_zero,
        truncation_tail: b.tail_mass,
    })
}
