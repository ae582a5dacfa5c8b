//! Expression trees for functions analytic on the unit disc, together with
//! exact differentiation, Taylor coefficient extraction and the three norm
//! functionals used throughout the crate (H², H^p integral means, Bloch).

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::blaschke::BlaschkeProduct;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A closed disc `|z - center| <= radius` excluded from the domain of a
/// `Quotient` or `Log` node. A radius of zero excludes a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub center: Complex64,
    #[serde(default)]
    pub radius: f64,
}

impl Guard {
    pub fn point(center: Complex64) -> Self {
        Guard { center, radius: 0.0 }
    }

    pub fn disc(center: Complex64, radius: f64) -> Self {
        Guard { center, radius }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() <= self.radius
    }
}

/// Function analytic on (a neighbourhood of) the unit disc, built from a
/// small closed algebra of nodes.
///
/// Nodes are evaluated at arbitrary complex points so that compositions
/// such as `G ∘ h` with `h` mapping into a half-plane work; only the
/// top-level [`AnalyticFn::eval`] insists on `|z| < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AnalyticFn {
    Constant {
        c: Complex64,
    },
    Identity,
    #[serde(rename = "poly")]
    Polynomial {
        coeffs: Vec<Complex64>,
    },
    Mobius {
        a: Complex64,
        b: Complex64,
        c: Complex64,
        d: Complex64,
    },
    Exp {
        arg: Box<AnalyticFn>,
    },
    /// Logarithm whose branch is the principal one rotated to be centred
    /// on `base`: `log(w) = log(base) + Log(w / base)`.
    Log {
        arg: Box<AnalyticFn>,
        base: Complex64,
        #[serde(default)]
        guards: Vec<Guard>,
    },
    Sum {
        terms: Vec<AnalyticFn>,
    },
    Product {
        factors: Vec<AnalyticFn>,
    },
    Quotient {
        num: Box<AnalyticFn>,
        den: Box<AnalyticFn>,
        #[serde(default)]
        guards: Vec<Guard>,
    },
    Compose {
        outer: Box<AnalyticFn>,
        inner: Box<AnalyticFn>,
    },
    Power {
        arg: Box<AnalyticFn>,
        k: i32,
    },
    Blaschke {
        product: BlaschkeProduct,
    },
    BlaschkeDerivative {
        product: BlaschkeProduct,
    },
}

impl AnalyticFn {
    pub fn constant(c: Complex64) -> Self {
        AnalyticFn::Constant { c }
    }

    pub fn real(x: f64) -> Self {
        AnalyticFn::Constant { c: Complex64::new(x, 0.0) }
    }

    pub fn zero() -> Self {
        AnalyticFn::real(0.0)
    }

    pub fn identity() -> Self {
        AnalyticFn::Identity
    }

    pub fn poly(coeffs: Vec<Complex64>) -> Self {
        AnalyticFn::Polynomial { coeffs }
    }

    /// Polynomial with real coefficients, lowest degree first.
    pub fn poly_real(coeffs: &[f64]) -> Self {
        AnalyticFn::poly(coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Monomial `z^k`.
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![ZERO; k + 1];
        coeffs[k] = ONE;
        AnalyticFn::poly(coeffs)
    }

    /// `(az + b) / (cz + d)`; rejects `ad - bc = 0`.
    pub fn mobius(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        if (a * d - b * c).norm() == 0.0 {
            return Err(Error::DegenerateMobius);
        }
        Ok(AnalyticFn::Mobius { a, b, c, d })
    }

    /// Cayley map `(1 + z) / (1 - z)` of the disc onto the right half-plane.
    pub fn cayley() -> Self {
        AnalyticFn::Mobius { a: ONE, b: ONE, c: -ONE, d: ONE }
    }

    /// Inverse Cayley map `(w - 1) / (w + 1)`.
    pub fn cayley_inverse() -> Self {
        AnalyticFn::Mobius { a: ONE, b: -ONE, c: ONE, d: ONE }
    }

    pub fn exp(arg: AnalyticFn) -> Self {
        AnalyticFn::Exp { arg: Box::new(arg) }
    }

    pub fn log(arg: AnalyticFn, base: Complex64, guards: Vec<Guard>) -> Self {
        AnalyticFn::Log { arg: Box::new(arg), base, guards }
    }

    pub fn sum(terms: Vec<AnalyticFn>) -> Self {
        AnalyticFn::Sum { terms }
    }

    pub fn product(factors: Vec<AnalyticFn>) -> Self {
        AnalyticFn::Product { factors }
    }

    pub fn quotient(num: AnalyticFn, den: AnalyticFn, guards: Vec<Guard>) -> Self {
        AnalyticFn::Quotient { num: Box::new(num), den: Box::new(den), guards }
    }

    pub fn compose(outer: AnalyticFn, inner: AnalyticFn) -> Self {
        AnalyticFn::Compose { outer: Box::new(outer), inner: Box::new(inner) }
    }

    pub fn power(arg: AnalyticFn, k: i32) -> Self {
        AnalyticFn::Power { arg: Box::new(arg), k }
    }

    pub fn blaschke(product: BlaschkeProduct) -> Self {
        AnalyticFn::Blaschke { product }
    }

    /// Truncated exponential series `Σ_{k≤n} z^k / k!`.
    pub fn exp_truncation(n: usize) -> Self {
        let mut coeffs = Vec::with_capacity(n + 1);
        let mut c = 1.0;
        for k in 0..=n {
            if k > 0 {
                c /= k as f64;
            }
            coeffs.push(Complex64::new(c, 0.0));
        }
        AnalyticFn::poly(coeffs)
    }

    /// Parses the JSON expression-tree format and validates the result.
    pub fn from_json(s: &str) -> Result<Self> {
        let f: AnalyticFn =
            serde_json::from_str(s).map_err(|e| Error::invalid(format!("analytic fn: {e}")))?;
        f.validate()?;
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("expression trees always serialize")
    }

    /// Checks structural invariants that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        use AnalyticFn::*;
        match self {
            Constant { c } if !c.is_finite() => Err(Error::invalid("non-finite constant")),
            Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                Err(Error::invalid("non-finite polynomial coefficient"))
            }
            Mobius { a, b, c, d } => {
                if (a * d - b * c).norm() == 0.0 {
                    Err(Error::DegenerateMobius)
                } else {
                    Ok(())
                }
            }
            Log { arg, base, .. } => {
                if base.norm() == 0.0 {
                    return Err(Error::invalid("log base point must be non-zero"));
                }
                arg.validate()
            }
            Exp { arg } | Power { arg, .. } => arg.validate(),
            Sum { terms: fs } | Product { factors: fs } => fs.iter().try_for_each(|f| f.validate()),
            Quotient { num, den, .. } => {
                num.validate()?;
                den.validate()
            }
            Compose { outer, inner } => {
                outer.validate()?;
                inner.validate()
            }
            Blaschke { product } | BlaschkeDerivative { product } => product.validate(),
            _ => Ok(()),
        }
    }

    /// True for trees that are syntactically the zero function.
    pub fn is_zero(&self) -> bool {
        match self {
            AnalyticFn::Constant { c } => *c == ZERO,
            AnalyticFn::Polynomial { coeffs } => coeffs.iter().all(|c| *c == ZERO),
            AnalyticFn::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            AnalyticFn::Product { factors } => factors.iter().any(|f| f.is_zero()),
            _ => false,
        }
    }

    /// Evaluates at a point of the open unit disc.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if !(z.norm() < 1.0) {
            return Err(Error::Domain { z });
        }
        self.eval_plane(z)
    }

    /// Evaluates anywhere in the plane where the tree is finite. Used for
    /// maps whose natural domain is not the disc (half-plane generators,
    /// conformal inverses) and for boundary checks.
    pub fn eval_plane(&self, z: Complex64) -> Result<Complex64> {
        let v = self.eval_raw(z)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Singularity { z })
        }
    }

    fn eval_raw(&self, z: Complex64) -> Result<Complex64> {
        use AnalyticFn::*;
        Ok(match self {
            Constant { c } => *c,
            Identity => z,
            Polynomial { coeffs } => horner(coeffs, z),
            Mobius { a, b, c, d } => {
                let den = c * z + d;
                if den == ZERO {
                    return Err(Error::Singularity { z });
                }
                (a * z + b) / den
            }
            Exp { arg } => arg.eval_raw(z)?.exp(),
            Log { arg, base, guards } => {
                if guards.iter().any(|g| g.contains(z)) {
                    return Err(Error::Singularity { z });
                }
                let w = arg.eval_raw(z)?;
                if w == ZERO {
                    return Err(Error::Singularity { z });
                }
                base.ln() + (w / base).ln()
            }
            Sum { terms } => {
                let mut acc = ZERO;
                for t in terms {
                    acc += t.eval_raw(z)?;
                }
                acc
            }
            Product { factors } => {
                let mut acc = ONE;
                for f in factors {
                    acc *= f.eval_raw(z)?;
                }
                acc
            }
            Quotient { num, den, guards } => {
                if guards.iter().any(|g| g.contains(z)) {
                    return Err(Error::Singularity { z });
                }
                let d = den.eval_raw(z)?;
                if d == ZERO {
                    return Err(Error::Singularity { z });
                }
                num.eval_raw(z)? / d
            }
            Compose { outer, inner } => {
                let w = inner.eval_raw(z)?;
                if !w.is_finite() {
                    return Err(Error::Singularity { z });
                }
                outer.eval_raw(w)?
            }
            Power { arg, k } => {
                let w = arg.eval_raw(z)?;
                if *k < 0 && w == ZERO {
                    return Err(Error::Singularity { z });
                }
                w.powi(*k)
            }
            Blaschke { product } => product.eval_plane(z),
            BlaschkeDerivative { product } => product.derivative_plane(z),
        })
    }

    /// Exact derivative tree (chain, product and quotient rules).
    pub fn derivative(&self) -> AnalyticFn {
        use AnalyticFn::*;
        match self {
            Constant { .. } => AnalyticFn::zero(),
            Identity => AnalyticFn::real(1.0),
            Polynomial { coeffs } => AnalyticFn::poly(
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, c)| c * k as f64)
                    .collect(),
            ),
            Mobius { a, b, c, d } => {
                let guards = if *c == ZERO { vec![] } else { vec![Guard::point(-d / c)] };
                AnalyticFn::quotient(
                    AnalyticFn::constant(a * d - b * c),
                    AnalyticFn::power(AnalyticFn::poly(vec![*d, *c]), 2),
                    guards,
                )
            }
            Exp { arg } => AnalyticFn::product(vec![self.clone(), arg.derivative()]),
            Log { arg, guards, .. } => {
                AnalyticFn::quotient(arg.derivative(), (**arg).clone(), guards.clone())
            }
            Sum { terms } => AnalyticFn::sum(terms.iter().map(|t| t.derivative()).collect()),
            Product { factors } => {
                let terms = (0..factors.len())
                    .map(|k| {
                        let mut fs = factors.clone();
                        fs[k] = factors[k].derivative();
                        AnalyticFn::product(fs)
                    })
                    .collect();
                AnalyticFn::sum(terms)
            }
            Quotient { num, den, guards } => {
                let n = (**num).clone();
                let d = (**den).clone();
                let top = AnalyticFn::sum(vec![
                    AnalyticFn::product(vec![num.derivative(), d.clone()]),
                    AnalyticFn::product(vec![AnalyticFn::real(-1.0), n, den.derivative()]),
                ]);
                AnalyticFn::quotient(top, AnalyticFn::power(d, 2), guards.clone())
            }
            Compose { outer, inner } => AnalyticFn::product(vec![
                AnalyticFn::compose(outer.derivative(), (**inner).clone()),
                inner.derivative(),
            ]),
            Power { arg, k } => {
                if *k == 0 {
                    AnalyticFn::zero()
                } else {
                    AnalyticFn::product(vec![
                        AnalyticFn::real(*k as f64),
                        AnalyticFn::power((**arg).clone(), k - 1),
                        arg.derivative(),
                    ])
                }
            }
            Blaschke { product } => BlaschkeDerivative { product: product.clone() },
            // second derivative: fall back to the factor tree
            BlaschkeDerivative { product } => product.as_tree().derivative().derivative(),
        }
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(ZERO, |acc, c| acc * z + c)
}

impl Add for AnalyticFn {
    type Output = AnalyticFn;
    fn add(self, rhs: AnalyticFn) -> AnalyticFn {
        AnalyticFn::sum(vec![self, rhs])
    }
}

impl Sub for AnalyticFn {
    type Output = AnalyticFn;
    fn sub(self, rhs: AnalyticFn) -> AnalyticFn {
        AnalyticFn::sum(vec![self, -rhs])
    }
}

impl Mul for AnalyticFn {
    type Output = AnalyticFn;
    fn mul(self, rhs: AnalyticFn) -> AnalyticFn {
        AnalyticFn::product(vec![self, rhs])
    }
}

impl Neg for AnalyticFn {
    type Output = AnalyticFn;
    fn neg(self) -> AnalyticFn {
        AnalyticFn::product(vec![AnalyticFn::real(-1.0), self])
    }
}

/// Truncated Taylor expansion `a_0 + a_1 z + ... + a_N z^N` about 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSeries {
    pub coeffs: Vec<Complex64>,
}

impl TaylorSeries {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite Taylor coefficient"));
        }
        Ok(TaylorSeries { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.coeffs, z)
    }

    /// `sqrt(Σ |a_k|²)`.
    pub fn h2_norm(&self) -> f64 {
        h2_norm(self)
    }
}

pub fn h2_norm(s: &TaylorSeries) -> f64 {
    s.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Number of circle samples used for coefficient extraction of order `n`.
pub fn taylor_sample_count(n: usize) -> usize {
    (4 * n).max(128)
}

/// Taylor coefficients `a_0..a_n` of `f` from `M = max(4n, 128)` samples on
/// the circle `|z| = r`.
pub fn taylor(f: &AnalyticFn, n: usize, r: f64) -> Result<TaylorSeries> {
    taylor_with(|z| f.eval(z), n, r)
}

/// Same as [`taylor`] for any analytic callable; samples are evaluated in
/// parallel.
pub fn taylor_with<F>(f: F, n: usize, r: f64) -> Result<TaylorSeries>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain { z: Complex64::new(r, 0.0) });
    }
    let m = taylor_sample_count(n);
    let mut samples = (0..m)
        .into_par_iter()
        .map(|j| f(Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / m as f64)))
        .collect::<Result<Vec<_>>>()?;
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut samples);
    let mut scale = m as f64;
    let coeffs = samples
        .into_iter()
        .take(n + 1)
        .map(|x| {
            let a = x / scale;
            scale *= r;
            a
        })
        .collect();
    TaylorSeries::new(coeffs)
}

/// Riemann-sum integral mean `((1/M) Σ |f(r e^{2πij/M})|^p)^{1/p}`.
pub fn hp_norm_boundary(f: &AnalyticFn, p: f64, r: f64, m: usize) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain { z: Complex64::new(r, 0.0) });
    }
    if p < 1.0 || !p.is_finite() {
        return Err(Error::invalid(format!("exponent p = {p} must be >= 1")));
    }
    if m < 64 {
        return Err(Error::invalid(format!("need at least 64 samples, got {m}")));
    }
    let mut acc = 0.0;
    for j in 0..m {
        let z = Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / m as f64);
        acc += f.eval(z)?.norm().powf(p);
    }
    Ok((acc / m as f64).powf(1.0 / p))
}

/// Deterministic sample set for suprema over the disc: uniform angular
/// samples on each listed circle plus explicitly included points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub radii: Vec<f64>,
    pub angular: Vec<usize>,
    #[serde(default)]
    pub points: Vec<Complex64>,
}

impl GridSpec {
    pub fn new(radii: Vec<f64>, angular: Vec<usize>, points: Vec<Complex64>) -> Result<Self> {
        let g = GridSpec { radii, angular, points };
        g.validate()?;
        Ok(g)
    }

    /// `n_radii` circles equally spaced on `[0, r_max]` with `n_angles`
    /// samples each (the centre is a single point).
    pub fn uniform(n_radii: usize, n_angles: usize, r_max: f64) -> Result<Self> {
        let radii: Vec<f64> = (0..n_radii)
            .map(|i| if n_radii == 1 { r_max } else { r_max * i as f64 / (n_radii - 1) as f64 })
            .collect();
        GridSpec::new(radii, vec![n_angles; n_radii], vec![])
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.len() != self.angular.len() {
            return Err(Error::invalid("radii and angular counts differ in length"));
        }
        if self.radii.iter().any(|r| !(*r >= 0.0 && *r < 1.0)) {
            return Err(Error::invalid("grid radii must lie in [0, 1)"));
        }
        if self.radii.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid radii must be strictly increasing"));
        }
        if self.angular.iter().any(|&n| n == 0) {
            return Err(Error::invalid("angular counts must be positive"));
        }
        if let Some(z) = self.points.iter().find(|z| !(z.norm() < 1.0)) {
            return Err(Error::Domain { z: *z });
        }
        Ok(())
    }

    /// Adds explicit points (e.g. the zeros where a lower bound is attained).
    pub fn with_points(mut self, extra: impl IntoIterator<Item = Complex64>) -> Self {
        self.points.extend(extra);
        self
    }

    /// A superset grid: midpoints inserted between radii and angular counts
    /// doubled, so every old sample is kept.
    pub fn refined(&self) -> Self {
        let mut radii = Vec::with_capacity(2 * self.radii.len());
        let mut angular = Vec::with_capacity(2 * self.radii.len());
        for (i, (&r, &n)) in self.radii.iter().zip(&self.angular).enumerate() {
            if i > 0 {
                radii.push(0.5 * (self.radii[i - 1] + r));
                angular.push(2 * n.max(self.angular[i - 1]));
            }
            radii.push(r);
            angular.push(2 * n);
        }
        GridSpec { radii, angular, points: self.points.clone() }
    }

    pub fn sample_points(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for (&r, &n) in self.radii.iter().zip(&self.angular) {
            if r == 0.0 {
                out.push(ZERO);
                continue;
            }
            out.extend(
                (0..n).map(|j| Complex64::from_polar(r, std::f64::consts::TAU * j as f64 / n as f64)),
            );
        }
        out.extend(self.points.iter().copied());
        out
    }
}

/// `max_z |d(z)| (1 - |z|²)` over the grid, `d` a derivative callable.
pub fn bloch_seminorm_with<D>(grid: &GridSpec, d: D) -> Result<f64>
where
    D: Fn(Complex64) -> Result<Complex64> + Sync,
{
    grid.sample_points()
        .into_par_iter()
        .map(|z| Ok(d(z)?.norm() * (1.0 - z.norm_sqr())))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Grid lower bound for `|f(0)| + sup |f'(z)| (1 - |z|²)`.
pub fn bloch_norm_grid(f: &AnalyticFn, grid: &GridSpec) -> Result<f64> {
    let df = f.derivative();
    Ok(f.eval(ZERO)?.norm() + bloch_seminorm_with(grid, |z| df.eval(z))?)
}
