//! Holomorphic semiflows `φ_t` on the unit disc.
//!
//! Three constructions are supported: integration of `∂_t φ_t = G(φ_t)`,
//! Koenigs models `h⁻¹(e^{-ct} h)` / `h⁻¹(h + ct)` through a conformal map,
//! and one-parameter groups of disc automorphisms in closed form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticFn;
use crate::error::{Error, Result};
use crate::extrapolate::richardson;
use crate::ode::{integrate, OdeOptions};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default absolute/relative integrator tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Integration aborts once a state reaches `|w| >= 1 - ESCAPE_MARGIN`.
pub const ESCAPE_MARGIN: f64 = 1e-12;
/// Tolerance used when classifying automorphisms from a Möbius fit.
pub const CLASSIFY_TOL: f64 = 1e-9;

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_newton_iter() -> usize {
    50
}

fn default_newton_tol() -> f64 {
    1e-12
}

/// How `h⁻¹` is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum InverseStrategy {
    ClosedForm {
        map: AnalyticFn,
    },
    /// Newton's method, seeded with the previous point along a continuation
    /// path.
    Newton {
        #[serde(default = "default_newton_iter")]
        max_iter: usize,
        #[serde(default = "default_newton_tol")]
        tol: f64,
    },
}

/// Riemann map `h` of the disc onto a simply connected domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConformalMapRepr", into = "ConformalMapRepr")]
pub struct ConformalMap {
    forward: AnalyticFn,
    forward_prime: AnalyticFn,
    inverse: InverseStrategy,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ConformalMapRepr {
    Named(String),
    Explicit { forward: AnalyticFn, inverse: InverseStrategy },
}

impl TryFrom<ConformalMapRepr> for ConformalMap {
    type Error = Error;
    fn try_from(r: ConformalMapRepr) -> Result<Self> {
        match r {
            ConformalMapRepr::Named(name) => match name.as_str() {
                "identity" => Ok(ConformalMap::identity()),
                "cayley" => Ok(ConformalMap::cayley()),
                other => Err(Error::invalid(format!("unknown conformal map '{other}'"))),
            },
            ConformalMapRepr::Explicit { forward, inverse } => {
                forward.validate()?;
                if let InverseStrategy::ClosedForm { map } = &inverse {
                    map.validate()?;
                }
                Ok(ConformalMap::new(forward, inverse))
            }
        }
    }
}

impl From<ConformalMap> for ConformalMapRepr {
    fn from(h: ConformalMap) -> Self {
        ConformalMapRepr::Explicit { forward: h.forward, inverse: h.inverse }
    }
}

impl ConformalMap {
    pub fn new(forward: AnalyticFn, inverse: InverseStrategy) -> Self {
        let forward_prime = forward.derivative();
        ConformalMap { forward, forward_prime, inverse }
    }

    pub fn identity() -> Self {
        ConformalMap::new(
            AnalyticFn::identity(),
            InverseStrategy::ClosedForm { map: AnalyticFn::identity() },
        )
    }

    /// `h(z) = (1 + z)/(1 - z)` onto the right half-plane.
    pub fn cayley() -> Self {
        ConformalMap::new(
            AnalyticFn::cayley(),
            InverseStrategy::ClosedForm { map: AnalyticFn::cayley_inverse() },
        )
    }

    pub fn with_newton(forward: AnalyticFn) -> Self {
        ConformalMap::new(
            forward,
            InverseStrategy::Newton { max_iter: default_newton_iter(), tol: default_newton_tol() },
        )
    }

    pub fn forward_fn(&self) -> &AnalyticFn {
        &self.forward
    }

    pub fn derivative_fn(&self) -> &AnalyticFn {
        &self.forward_prime
    }

    pub fn inverse_strategy(&self) -> &InverseStrategy {
        &self.inverse
    }

    pub fn is_identity(&self) -> bool {
        self.forward == AnalyticFn::Identity
    }

    pub fn forward(&self, z: Complex64) -> Result<Complex64> {
        self.forward.eval_plane(z)
    }

    pub fn derivative(&self, z: Complex64) -> Result<Complex64> {
        self.forward_prime.eval_plane(z)
    }

    /// `h⁻¹(w)`; `seed` is only used by the Newton strategy.
    pub fn inverse(&self, w: Complex64, seed: Complex64) -> Result<Complex64> {
        let z = match &self.inverse {
            InverseStrategy::ClosedForm { map } => {
                map.eval_plane(w).map_err(|_| Error::Inverse { w })?
            }
            InverseStrategy::Newton { max_iter, tol } => self.newton(w, seed, *max_iter, *tol)?,
        };
        if z.norm() < 1.0 {
            Ok(z)
        } else {
            Err(Error::Inverse { w })
        }
    }

    fn newton(&self, w: Complex64, seed: Complex64, max_iter: usize, tol: f64) -> Result<Complex64> {
        let fail = || Error::Inverse { w };
        let mut z = seed;
        for _ in 0..max_iter {
            let r = self.forward.eval_plane(z).map_err(|_| fail())? - w;
            let d = self.forward_prime.eval_plane(z).map_err(|_| fail())?;
            if d == ZERO {
                return Err(fail());
            }
            let step = r / d;
            z -= step;
            if !z.is_finite() {
                return Err(fail());
            }
            if step.norm() <= tol * (1.0 + z.norm()) {
                return Ok(z);
            }
        }
        Err(fail())
    }

    /// Inverts `path(1)` by following `path` from `path(0) = h(z0)`, seeding
    /// each Newton solve with the previous point. Closed forms jump directly.
    fn invert_along<P: Fn(f64) -> Complex64>(&self, path: P, z0: Complex64) -> Result<Complex64> {
        if matches!(self.inverse, InverseStrategy::ClosedForm { .. }) {
            return self.inverse(path(1.0), z0);
        }
        let mut pieces = 1;
        loop {
            let attempt = (1..=pieces).try_fold(z0, |seed, k| {
                self.inverse(path(k as f64 / pieces as f64), seed)
            });
            match attempt {
                Ok(z) => return Ok(z),
                Err(e) if pieces >= 64 => return Err(e),
                Err(_) => pieces *= 2,
            }
        }
    }

    /// The map `h⁻¹` as a conformal map in its own right (closed forms only).
    pub fn inverse_map(&self) -> Result<ConformalMap> {
        match &self.inverse {
            InverseStrategy::ClosedForm { map } => Ok(ConformalMap::new(
                map.clone(),
                InverseStrategy::ClosedForm { map: self.forward.clone() },
            )),
            InverseStrategy::Newton { .. } => {
                Err(Error::Model("Newton-inverted maps have no inverse tree".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeFlow {
    generator: AnalyticFn,
    generator_prime: AnalyticFn,
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KoenigsMode {
    /// `φ_t = h⁻¹(e^{-ct} h)`.
    Spiral,
    /// `φ_t = h⁻¹(h + ct)`.
    Translate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoenigsFlow {
    h: ConformalMap,
    c: Complex64,
    mode: KoenigsMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutomorphismKind {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

/// One-parameter automorphism group with generator `a + iβz - ā z²`,
/// i.e. `φ_t` is the Möbius map of `exp(t [[iβ/2, a], [ā, -iβ/2]])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutomorphismFlow {
    a: Complex64,
    beta: f64,
    kind: AutomorphismKind,
}

impl AutomorphismFlow {
    /// `det` of the Lie-algebra element up to sign: `|a|² - β²/4`.
    fn discriminant(&self) -> f64 {
        self.a.norm_sqr() - 0.25 * self.beta * self.beta
    }

    fn kind_from_discriminant(a: Complex64, beta: f64) -> AutomorphismKind {
        let d = a.norm_sqr() - 0.25 * beta * beta;
        let scale = a.norm_sqr() + 0.25 * beta * beta;
        if d.abs() <= 1e-14 * scale {
            AutomorphismKind::Parabolic
        } else if d > 0.0 {
            AutomorphismKind::Hyperbolic
        } else {
            AutomorphismKind::Elliptic
        }
    }

    fn matrix(&self, t: f64) -> [Complex64; 4] {
        let q = t * t * self.discriminant();
        // cosh(tλ) and sinh(tλ)/λ with λ² = discriminant, real arithmetic
        let (ch, sh) = if q > 0.0 {
            let s = q.sqrt();
            let ratio = if s < 1e-4 { 1.0 + s * s / 6.0 + s.powi(4) / 120.0 } else { s.sinh() / s };
            (s.cosh(), t * ratio)
        } else if q < 0.0 {
            let s = (-q).sqrt();
            let ratio = if s < 1e-4 { 1.0 - s * s / 6.0 + s.powi(4) / 120.0 } else { s.sin() / s };
            (s.cos(), t * ratio)
        } else {
            (1.0, t)
        };
        let half = I * (0.5 * self.beta);
        [ch + sh * half, sh * self.a, sh * self.a.conj(), ch - sh * half]
    }

    fn apply(&self, z: Complex64, t: f64) -> (Complex64, Complex64) {
        let [m00, m01, m10, m11] = self.matrix(t);
        let den = m10 * z + m11;
        let det = m00 * m11 - m01 * m10;
        ((m00 * z + m01) / den, det / (den * den))
    }
}

/// Semiflow specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowRepr", into = "FlowRepr")]
pub enum FlowModel {
    Ode(OdeFlow),
    Koenigs(KoenigsFlow),
    Automorphism(AutomorphismFlow),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum FlowRepr {
    Ode {
        #[serde(rename = "G")]
        generator: AnalyticFn,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Koenigs {
        mode: KoenigsMode,
        h: ConformalMap,
        c: Complex64,
    },
    Automorphism {
        kind: AutomorphismKind,
        a: Complex64,
        beta: f64,
    },
}

impl TryFrom<FlowRepr> for FlowModel {
    type Error = Error;
    fn try_from(r: FlowRepr) -> Result<Self> {
        match r {
            FlowRepr::Ode { generator, tol } => {
                generator.validate()?;
                FlowModel::ode_with_tol(generator, tol)
            }
            FlowRepr::Koenigs { mode, h, c } => koenigs_flow(h, c, mode),
            FlowRepr::Automorphism { kind, a, beta } => {
                let flow = FlowModel::automorphism(a, beta)?;
                let found = flow.classify_automorphism()?.kind;
                if found != kind {
                    return Err(Error::Model(format!(
                        "declared {kind:?} automorphism classifies as {found:?}"
                    )));
                }
                Ok(flow)
            }
        }
    }
}

impl From<FlowModel> for FlowRepr {
    fn from(f: FlowModel) -> Self {
        match f {
            FlowModel::Ode(o) => FlowRepr::Ode { generator: o.generator, tol: o.tol },
            FlowModel::Koenigs(k) => FlowRepr::Koenigs { mode: k.mode, h: k.h, c: k.c },
            FlowModel::Automorphism(a) => FlowRepr::Automorphism { kind: a.kind, a: a.a, beta: a.beta },
        }
    }
}

/// One accepted point of an orbit together with `∂_z φ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub value: Complex64,
    pub dz: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn end(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories contain at least the initial point")
    }

    /// CSV with columns `t,re,im,dre,dim`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im,dre,dim\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{},{},{}\n", s.t, s.value.re, s.value.im, s.dz.re, s.dz.im));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrbitVerdict {
    /// `φ_t(γ₀)` lies inside the disc: the flow is not an automorphism
    /// family near `γ₀`.
    Inside,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryOrbit {
    pub limit: Complex64,
    pub converged: bool,
    pub last_increment: f64,
    pub verdict: OrbitVerdict,
}

/// Result of fitting a Möbius map to `φ_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobiusFit {
    pub kind: AutomorphismKind,
    /// Normalised coefficients `[A, B, C, D]` of `(Az + B)/(Cz + D)`.
    pub coefficients: [Complex64; 4],
    pub fixed_points: Vec<Complex64>,
    /// Attracting fixed point of `t ↦ φ_t`, `t → +∞`.
    pub forward_dw: Option<Complex64>,
    /// Attracting fixed point of `t ↦ φ_{-t}`.
    pub backward_dw: Option<Complex64>,
}

/// `1 - 2^{-j}` for `j = 1..=j_max`.
pub fn radial_ladder(j_max: usize) -> Vec<f64> {
    (1..=j_max).map(|j| 1.0 - 0.5f64.powi(j as i32)).collect()
}

/// Builds a Koenigs-model flow.
pub fn koenigs_flow(h: ConformalMap, c: Complex64, mode: KoenigsMode) -> Result<FlowModel> {
    if !c.is_finite() {
        return Err(Error::Model("non-finite Koenigs constant".into()));
    }
    if mode == KoenigsMode::Spiral {
        if h.forward(ZERO)?.norm() > 1e-12 {
            return Err(Error::Model("spiral Koenigs model needs h(0) = 0".into()));
        }
        if c.re < 0.0 {
            return Err(Error::Model("spiral Koenigs model needs Re c >= 0".into()));
        }
    }
    Ok(FlowModel::Koenigs(KoenigsFlow { h, c, mode }))
}

impl FlowModel {
    pub fn ode(generator: AnalyticFn) -> Self {
        FlowModel::ode_with_tol(generator, DEFAULT_TOL).expect("default tolerance is valid")
    }

    pub fn ode_with_tol(generator: AnalyticFn, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::invalid(format!("tolerance {tol} must be positive")));
        }
        let generator_prime = generator.derivative();
        Ok(FlowModel::Ode(OdeFlow { generator, generator_prime, tol }))
    }

    /// `φ_t = id`.
    pub fn trivial() -> Self {
        FlowModel::ode(AnalyticFn::zero())
    }

    pub fn automorphism(a: Complex64, beta: f64) -> Result<Self> {
        if !a.is_finite() || !beta.is_finite() {
            return Err(Error::Model("non-finite automorphism parameters".into()));
        }
        let kind = AutomorphismFlow::kind_from_discriminant(a, beta);
        Ok(FlowModel::Automorphism(AutomorphismFlow { a, beta, kind }))
    }

    /// Rotations `e^{iωt} z`.
    pub fn rotation(omega: f64) -> Self {
        FlowModel::automorphism(ZERO, omega).expect("finite parameters")
    }

    /// Cayley conjugate of the half-plane dilation `w ↦ e^{kt} w`.
    pub fn cayley_dilation(k: f64) -> Self {
        FlowModel::automorphism(Complex64::new(0.5 * k, 0.0), 0.0).expect("finite parameters")
    }

    /// Cayley conjugate of the vertical translation `w ↦ w + ist`.
    pub fn cayley_translation(s: f64) -> Self {
        FlowModel::automorphism(Complex64::new(0.0, 0.5 * s), -s).expect("finite parameters")
    }

    /// Same flow with a different integrator tolerance (no-op for closed forms).
    pub fn with_ode_tol(self, tol: f64) -> Result<Self> {
        match self {
            FlowModel::Ode(o) => FlowModel::ode_with_tol(o.generator, tol),
            other => Ok(other),
        }
    }

    pub fn tol(&self) -> f64 {
        match self {
            FlowModel::Ode(o) => o.tol,
            _ => DEFAULT_TOL,
        }
    }

    pub fn is_automorphism_family(&self) -> bool {
        matches!(self, FlowModel::Automorphism(_))
    }

    pub fn automorphism_kind(&self) -> Option<AutomorphismKind> {
        match self {
            FlowModel::Automorphism(a) => Some(a.kind),
            _ => None,
        }
    }

    /// Infinitesimal generator `G` as an expression tree.
    pub fn generator(&self) -> AnalyticFn {
        match self {
            FlowModel::Ode(o) => o.generator.clone(),
            FlowModel::Koenigs(k) => {
                let hp = k.h.forward_prime.clone();
                match k.mode {
                    KoenigsMode::Spiral => AnalyticFn::quotient(
                        AnalyticFn::product(vec![AnalyticFn::constant(-k.c), k.h.forward.clone()]),
                        hp,
                        vec![],
                    ),
                    KoenigsMode::Translate => {
                        AnalyticFn::quotient(AnalyticFn::constant(k.c), hp, vec![])
                    }
                }
            }
            FlowModel::Automorphism(a) => {
                AnalyticFn::poly(vec![a.a, I * a.beta, -a.a.conj()])
            }
        }
    }

    fn check_args(&self, z: Complex64, t: f64) -> Result<()> {
        if !(z.norm() < 1.0) {
            return Err(Error::Domain { z });
        }
        if !t.is_finite() || (t < 0.0 && !self.is_automorphism_family()) {
            return Err(Error::invalid(format!("time {t} must be finite and >= 0")));
        }
        Ok(())
    }

    /// `φ_t(z)`.
    pub fn advance(&self, z: Complex64, t: f64) -> Result<Complex64> {
        self.advance_with_derivative(z, t).map(|(w, _)| w)
    }

    /// `∂_z φ_t(z)`.
    pub fn flow_z_derivative(&self, z: Complex64, t: f64) -> Result<Complex64> {
        self.advance_with_derivative(z, t).map(|(_, v)| v)
    }

    /// `(φ_t(z), ∂_z φ_t(z))`. ODE flows integrate the variational equation
    /// `v' = G'(φ) v` alongside the orbit, so both values come from the same
    /// run as [`FlowModel::trajectory`].
    pub fn advance_with_derivative(&self, z: Complex64, t: f64) -> Result<(Complex64, Complex64)> {
        self.check_args(z, t)?;
        let (w, v) = match self {
            FlowModel::Ode(o) => ode_run(o, z, ONE, t, None, |_, _| {})?,
            _ => self.closed_form(z, t)?,
        };
        if !(w.norm() < 1.0) {
            return Err(Error::Escape { t, modulus: w.norm() });
        }
        Ok((w, v))
    }

    fn closed_form(&self, z: Complex64, t: f64) -> Result<(Complex64, Complex64)> {
        match self {
            FlowModel::Ode(_) => unreachable!("ODE flows have no closed form"),
            FlowModel::Automorphism(a) => Ok(a.apply(z, t)),
            FlowModel::Koenigs(k) => {
                if t == 0.0 {
                    return Ok((z, ONE));
                }
                let hz = k.h.forward(z)?;
                let hpz = k.h.derivative(z)?;
                let (w, scale) = match k.mode {
                    KoenigsMode::Spiral => {
                        let phi = k.h.invert_along(|s| (-k.c * (t * s)).exp() * hz, z)?;
                        (phi, (-k.c * t).exp())
                    }
                    KoenigsMode::Translate => {
                        let phi = k.h.invert_along(|s| hz + k.c * (t * s), z)?;
                        (phi, ONE)
                    }
                };
                let hpw = k.h.derivative(w)?;
                Ok((w, scale * hpz / hpw))
            }
        }
    }

    /// Orbit samples on `[0, t]`: the integrator's accepted steps for ODE
    /// flows, a uniform partition for closed forms.
    pub fn trajectory(&self, z: Complex64, t: f64) -> Result<Trajectory> {
        self.check_args(z, t)?;
        if t < 0.0 {
            return Err(Error::invalid("trajectories run forward in time"));
        }
        let mut samples = Vec::new();
        match self {
            FlowModel::Ode(o) => {
                ode_run(o, z, ONE, t, None, |s, y| {
                    samples.push(TrajectorySample { t: s, value: y[0], dz: y[1] })
                })?;
            }
            _ => {
                samples.push(TrajectorySample { t: 0.0, value: z, dz: ONE });
                if t > 0.0 {
                    let n = (t / 0.25).ceil().max(1.0) as usize;
                    for k in 1..=n {
                        let s = if k == n { t } else { t * k as f64 / n as f64 };
                        let (w, v) = self.closed_form(z, s)?;
                        samples.push(TrajectorySample { t: s, value: w, dz: v });
                    }
                }
            }
        }
        if let Some(bad) = samples.iter().find(|s| !(s.value.norm() < 1.0)) {
            return Err(Error::Escape { t: bad.t, modulus: bad.value.norm() });
        }
        Ok(Trajectory { samples })
    }

    /// `(φ_s(z), ∂_zφ_s(z))` for `s` inside a trajectory panel that starts at
    /// `start`. ODE flows integrate from the panel state; closed forms are
    /// evaluated directly.
    pub(crate) fn state_within_panel(
        &self,
        z: Complex64,
        start: &TrajectorySample,
        s: f64,
    ) -> Result<(Complex64, Complex64)> {
        match self {
            FlowModel::Ode(o) => {
                let dt = s - start.t;
                ode_run(o, start.value, start.dz, dt, Some(dt), |_, _| {})
            }
            _ => self.closed_form(z, s),
        }
    }

    /// `|φ_{s+t}(z) - φ_t(φ_s(z))|`.
    pub fn check_semigroup(&self, z: Complex64, s: f64, t: f64) -> Result<f64> {
        let direct = self.advance(z, s + t)?;
        let composed = self.advance(self.advance(z, s)?, t)?;
        Ok((direct - composed).norm())
    }

    /// Richardson-extrapolated `lim_{h→0} (φ_h(z) - z)/h`.
    pub fn generator_fd(&self, z: Complex64, h_ladder: &[f64]) -> Result<Complex64> {
        let values = h_ladder
            .iter()
            .map(|&h| Ok((self.advance(z, h)? - z) / h))
            .collect::<Result<Vec<_>>>()?;
        richardson(h_ladder, &values)
    }

    /// Radial limit `lim_{r→1} φ_t(r γ₀)` along `r_ladder`.
    pub fn boundary_orbit(&self, gamma0: Complex64, t: f64, r_ladder: &[f64]) -> Result<BoundaryOrbit> {
        if (gamma0.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("γ₀ = {gamma0} is not unimodular")));
        }
        if !(t > 0.0) {
            return Err(Error::invalid("boundary orbits need t > 0"));
        }
        if r_ladder.len() < 2
            || r_ladder.windows(2).any(|w| w[1] <= w[0])
            || r_ladder.iter().any(|r| !(*r > 0.0 && *r < 1.0))
        {
            return Err(Error::invalid("radial ladder must increase inside (0, 1)"));
        }
        let values = r_ladder
            .iter()
            .map(|&r| self.advance(gamma0 * r, t))
            .collect::<Result<Vec<_>>>()?;
        let increments: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
        let last_increment = *increments.last().expect("ladder has two points");
        let converged = last_increment < 1e-6;
        if !converged && increments.len() >= 2 && last_increment >= increments[increments.len() - 2] {
            return Err(Error::NoConvergence { last_increment });
        }
        // error is linear in (1 - r) for a flow that extends to the boundary
        let n = values.len();
        let hs = [1.0 - r_ladder[n - 2], 1.0 - r_ladder[n - 1]];
        let limit = richardson(&hs, &values[n - 2..])?;
        let verdict = if limit.norm() < 1.0 - 1e-6 { OrbitVerdict::Inside } else { OrbitVerdict::Boundary };
        Ok(BoundaryOrbit { limit, converged, last_increment, verdict })
    }

    /// Fits a Möbius map to `φ_1` from three samples and classifies it by its
    /// fixed points. Fails if `φ_1` is not a disc automorphism.
    pub fn classify_automorphism(&self) -> Result<MobiusFit> {
        let zs = [ZERO, Complex64::new(0.5, 0.0), Complex64::new(0.0, -0.5)];
        let ws = [self.advance(zs[0], 1.0)?, self.advance(zs[1], 1.0)?, self.advance(zs[2], 1.0)?];
        let m = fit_mobius(zs, ws).ok_or_else(|| Error::Model("degenerate Möbius fit".into()))?;
        let [a, b, c, d] = m;
        let apply = |z: Complex64| (a * z + b) / (c * z + d);

        let probe = Complex64::new(0.3, 0.2);
        if (apply(probe) - self.advance(probe, 1.0)?).norm() > CLASSIFY_TOL {
            return Err(Error::Model("φ_1 is not a Möbius map".into()));
        }
        for k in 0..8 {
            let u = Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / 8.0);
            if (apply(u).norm() - 1.0).abs() > CLASSIFY_TOL {
                return Err(Error::Model("φ_1 does not preserve the unit circle".into()));
            }
        }

        let derivative_at = |p: Complex64| {
            let den = c * p + d;
            (a * d - b * c) / (den * den)
        };
        let disc = (d - a) * (d - a) + 4.0 * b * c;
        let scale = (a * d - b * c).norm().max(1e-300);
        let mut fixed_points = Vec::new();
        let kind;
        if c.norm() <= 1e-12 {
            // affine: z ↦ (a/d) z + b/d; automorphisms of this form are rotations
            if (d - a).norm() > 1e-12 {
                fixed_points.push(b / (d - a));
            }
            kind = AutomorphismKind::Elliptic;
        } else if disc.norm() <= CLASSIFY_TOL * scale {
            fixed_points.push((a - d) / (2.0 * c));
            kind = AutomorphismKind::Parabolic;
        } else {
            let sq = disc.sqrt();
            let p1 = (a - d + sq) / (2.0 * c);
            let p2 = (a - d - sq) / (2.0 * c);
            fixed_points.push(p1);
            fixed_points.push(p2);
            let on_circle = |p: Complex64| (p.norm() - 1.0).abs() <= 1e-6;
            kind = if on_circle(p1) && on_circle(p2) {
                AutomorphismKind::Hyperbolic
            } else {
                AutomorphismKind::Elliptic
            };
        }

        let (forward_dw, backward_dw) = match kind {
            AutomorphismKind::Parabolic => (Some(fixed_points[0]), Some(fixed_points[0])),
            AutomorphismKind::Hyperbolic => {
                let (p1, p2) = (fixed_points[0], fixed_points[1]);
                if derivative_at(p1).norm() < 1.0 {
                    (Some(p1), Some(p2))
                } else {
                    (Some(p2), Some(p1))
                }
            }
            AutomorphismKind::Elliptic => {
                let inner = fixed_points.iter().copied().find(|p| p.norm() < 1.0).unwrap_or(ZERO);
                (Some(inner), Some(inner))
            }
        };
        Ok(MobiusFit { kind, coefficients: m, fixed_points, forward_dw, backward_dw })
    }
}

/// Runs the augmented system `(w, v)' = (G(w), G'(w) v)`.
fn ode_run<S: FnMut(f64, &[Complex64; 2])>(
    o: &OdeFlow,
    w: Complex64,
    v: Complex64,
    t: f64,
    h_init: Option<f64>,
    mut on_step: S,
) -> Result<(Complex64, Complex64)> {
    if o.generator.is_zero() {
        on_step(0.0, &[w, v]);
        if t > 0.0 {
            on_step(t, &[w, v]);
        }
        return Ok((w, v));
    }
    let rhs = |y: &[Complex64; 2]| {
        Ok([o.generator.eval_plane(y[0])?, o.generator_prime.eval_plane(y[0])? * y[1]])
    };
    let escaped = |y: &[Complex64; 2]| {
        let m = y[0].norm();
        (m >= 1.0 - ESCAPE_MARGIN).then_some(m)
    };
    let opts = OdeOptions { h_init, ..OdeOptions::with_tol(o.tol) };
    let [w, v] = integrate(rhs, [w, v], t, opts, escaped, on_step)?;
    Ok((w, v))
}

/// Möbius map through three point pairs, normalised to unit determinant.
fn fit_mobius(z: [Complex64; 3], w: [Complex64; 3]) -> Option<[Complex64; 4]> {
    // cross-ratio maps sending (p1, p2, p3) to (0, 1, ∞)
    let cross = |p: [Complex64; 3]| {
        [p[1] - p[2], -p[0] * (p[1] - p[2]), p[1] - p[0], -p[2] * (p[1] - p[0])]
    };
    let tz = cross(z);
    let tw = cross(w);
    let adj = [tw[3], -tw[1], -tw[2], tw[0]];
    let m = [
        adj[0] * tz[0] + adj[1] * tz[2],
        adj[0] * tz[1] + adj[1] * tz[3],
        adj[2] * tz[0] + adj[3] * tz[2],
        adj[2] * tz[1] + adj[3] * tz[3],
    ];
    let det = m[0] * m[3] - m[1] * m[2];
    if det.norm() == 0.0 || !det.is_finite() {
        return None;
    }
    let s = det.sqrt();
    Some([m[0] / s, m[1] / s, m[2] / s, m[3] / s])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn radial() -> FlowModel {
        FlowModel::ode(AnalyticFn::poly_real(&[0.0, -1.0]))
    }

    #[test]
    fn radial_ode_matches_closed_form() {
        let w = radial().advance(c(0.5, 0.0), 1.0).unwrap();
        assert!((w - c(0.5 * (-1.0f64).exp(), 0.0)).norm() < 1e-10);
        assert_relative_eq!(w.re, 0.183939721, epsilon = 1e-9);
    }

    #[test]
    fn time_zero_is_identity() {
        let z = c(0.3, -0.4);
        for f in [
            radial(),
            FlowModel::rotation(1.0),
            koenigs_flow(ConformalMap::cayley(), ONE, KoenigsMode::Translate).unwrap(),
        ] {
            assert_eq!(f.advance(z, 0.0).unwrap(), z);
            assert_eq!(f.flow_z_derivative(z, 0.0).unwrap(), ONE);
            assert_eq!(f.check_semigroup(z, 0.0, 0.7).unwrap(), 0.0);
        }
    }

    #[test]
    fn cayley_translation_by_one_from_the_origin() {
        let f = koenigs_flow(ConformalMap::cayley(), ONE, KoenigsMode::Translate).unwrap();
        let w = f.advance(ZERO, 1.0).unwrap();
        assert!((w - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn z_derivative_examples() {
        for z in [c(0.1, 0.2), c(-0.6, 0.0)] {
            let v = radial().flow_z_derivative(z, 0.8).unwrap();
            assert!((v - c((-0.8f64).exp(), 0.0)).norm() < 1e-10);
        }
        let rot = FlowModel::ode(AnalyticFn::poly(vec![ZERO, I]));
        let v = rot.flow_z_derivative(c(0.4, 0.0), std::f64::consts::PI).unwrap();
        assert!((v - c(-1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn semigroup_examples() {
        assert!(radial().check_semigroup(c(0.7, 0.0), 0.3, 0.9).unwrap() <= 1e-8);
        let spiral = koenigs_flow(ConformalMap::identity(), ONE, KoenigsMode::Spiral).unwrap();
        assert!(spiral.check_semigroup(c(0.0, 0.5), 1.0, 2.0).unwrap() <= 1e-16);
    }

    #[test]
    fn generator_fd_examples() {
        let ladder = [1e-2, 5e-3, 2.5e-3];
        let g = radial().generator_fd(c(0.5, 0.0), &ladder).unwrap();
        assert!((g - c(-0.5, 0.0)).norm() < 1e-6);
        assert_eq!(FlowModel::trivial().generator_fd(c(0.3, 0.3), &ladder).unwrap(), ZERO);
        let t = koenigs_flow(ConformalMap::cayley(), ONE, KoenigsMode::Translate).unwrap();
        assert!((t.generator_fd(ZERO, &ladder).unwrap() - c(0.5, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn koenigs_examples() {
        let f = koenigs_flow(ConformalMap::identity(), ONE, KoenigsMode::Spiral).unwrap();
        assert!((f.advance(c(0.4, 0.1), 2.0).unwrap() - c(0.4, 0.1) * (-2.0f64).exp()).norm() < 1e-15);
        let r = koenigs_flow(ConformalMap::identity(), I, KoenigsMode::Spiral).unwrap();
        let w = r.advance(c(0.4, 0.0), 1.0).unwrap();
        assert!((w - c(0.4, 0.0) * (-I).exp()).norm() < 1e-15);
        let p = koenigs_flow(ConformalMap::cayley(), I, KoenigsMode::Translate).unwrap();
        assert_eq!(p.classify_automorphism().unwrap().kind, AutomorphismKind::Parabolic);
        // spiral needs h(0) = 0
        assert!(matches!(
            koenigs_flow(ConformalMap::cayley(), ONE, KoenigsMode::Spiral),
            Err(Error::Model(_))
        ));
        assert!(koenigs_flow(ConformalMap::identity(), c(-1.0, 0.0), KoenigsMode::Spiral).is_err());
    }

    #[test]
    fn newton_inverse_agrees_with_closed_form() {
        let newton = ConformalMap::with_newton(AnalyticFn::cayley());
        let f_closed = koenigs_flow(ConformalMap::cayley(), ONE, KoenigsMode::Translate).unwrap();
        let f_newton = koenigs_flow(newton.clone(), ONE, KoenigsMode::Translate).unwrap();
        for z in [ZERO, c(0.5, 0.3), c(-0.8, 0.1)] {
            let a = f_closed.advance(z, 1.5).unwrap();
            let b = f_newton.advance(z, 1.5).unwrap();
            assert!((a - b).norm() < 1e-10);
            let w = newton.forward(z).unwrap();
            assert!((newton.inverse(w, z * 0.9).unwrap() - z).norm() < 1e-10);
        }
    }

    #[test]
    fn automorphism_generators_match_closed_forms() {
        let ladder = [1e-2, 5e-3, 2.5e-3];
        for f in [FlowModel::rotation(1.0), FlowModel::cayley_dilation(1.0), FlowModel::cayley_translation(1.0)] {
            let g = f.generator();
            for z in [c(0.2, 0.1), c(-0.5, 0.4)] {
                let fd = f.generator_fd(z, &ladder).unwrap();
                assert!((fd - g.eval(z).unwrap()).norm() < 1e-6);
            }
        }
        // Cayley translation generator is i(1-z)²/2
        let g = FlowModel::cayley_translation(1.0).generator();
        let z = c(0.3, -0.2);
        assert!((g.eval(z).unwrap() - I * (ONE - z) * (ONE - z) / 2.0).norm() < 1e-15);
    }

    #[test]
    fn classification_examples() {
        let rot = FlowModel::rotation(1.0).classify_automorphism().unwrap();
        assert_eq!(rot.kind, AutomorphismKind::Elliptic);
        let hyp = FlowModel::cayley_dilation(1.0).classify_automorphism().unwrap();
        assert_eq!(hyp.kind, AutomorphismKind::Hyperbolic);
        let mut fps = hyp.fixed_points.clone();
        fps.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((fps[0] - c(-1.0, 0.0)).norm() < 1e-9 && (fps[1] - ONE).norm() < 1e-9);
        assert!((hyp.forward_dw.unwrap() - ONE).norm() < 1e-9);
        let par = FlowModel::cayley_translation(1.0).classify_automorphism().unwrap();
        assert_eq!(par.kind, AutomorphismKind::Parabolic);
        assert!((par.fixed_points[0] - ONE).norm() < 1e-6);
        assert!(matches!(radial().classify_automorphism(), Err(Error::Model(_))));
    }

    #[test]
    fn boundary_orbit_examples() {
        let ladder = radial_ladder(24);
        let b = radial().boundary_orbit(ONE, 1.0, &ladder).unwrap();
        assert!(b.converged && b.verdict == OrbitVerdict::Inside);
        assert!((b.limit - c((-1.0f64).exp(), 0.0)).norm() < 1e-8);
        let r = FlowModel::rotation(1.0).boundary_orbit(ONE, 1.0, &ladder).unwrap();
        assert_eq!(r.verdict, OrbitVerdict::Boundary);
        assert!((r.limit - I.exp()).norm() < 1e-8);
        let t = FlowModel::trivial().boundary_orbit(ONE, 0.5, &ladder).unwrap();
        assert_eq!(t.verdict, OrbitVerdict::Boundary);
        assert!((t.limit - ONE).norm() < 1e-12);
    }

    #[test]
    fn domain_and_time_validation() {
        assert!(matches!(radial().advance(c(1.0, 0.0), 1.0), Err(Error::Domain { .. })));
        assert!(radial().advance(c(0.1, 0.0), -1.0).is_err());
        // automorphism groups run backwards too
        let back = FlowModel::rotation(1.0).advance(c(0.5, 0.0), -1.0).unwrap();
        assert!((back - c(0.5, 0.0) * (-I).exp()).norm() < 1e-15);
    }

    #[test]
    fn escape_is_reported() {
        // G = 1 is not a semiflow generator: orbits leave the disc
        let bad = FlowModel::ode(AnalyticFn::real(1.0));
        assert!(matches!(bad.advance(ZERO, 2.0), Err(Error::Escape { .. })));
    }

    #[test]
    fn json_schema() {
        let f: FlowModel = serde_json::from_str(
            r#"{"type":"ode","G":{"op":"poly","coeffs":[[0,0],[-1,0]]},"tol":1e-10}"#,
        )
        .unwrap();
        assert_eq!(f, radial());
        let k: FlowModel =
            serde_json::from_str(r#"{"type":"koenigs","mode":"translate","h":"cayley","c":[1,0]}"#)
                .unwrap();
        assert!((k.advance(ZERO, 1.0).unwrap() - c(1.0 / 3.0, 0.0)).norm() < 1e-15);
        let a: FlowModel = serde_json::from_str(
            r#"{"type":"automorphism","kind":"parabolic","a":[0,0.5],"beta":-1}"#,
        )
        .unwrap();
        assert_eq!(a, FlowModel::cayley_translation(1.0));
        let wrong = serde_json::from_str::<FlowModel>(
            r#"{"type":"automorphism","kind":"elliptic","a":[0,0.5],"beta":-1}"#,
        );
        assert!(wrong.is_err());
        let back: FlowModel = serde_json::from_str(&serde_json::to_string(&k).unwrap()).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn trajectory_csv_and_invariants() {
        let tr = radial().trajectory(c(0.5, 0.1), 2.0).unwrap();
        assert_eq!(tr.samples[0].t, 0.0);
        assert!(tr.samples.windows(2).all(|w| w[0].t < w[1].t));
        assert_eq!(tr.end().t, 2.0);
        assert_eq!(tr.end().value, radial().advance(c(0.5, 0.1), 2.0).unwrap());
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,re,im,dre,dim\n"));
        assert_eq!(csv.lines().count(), tr.samples.len() + 1);
    }
}
