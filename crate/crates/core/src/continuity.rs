//! Constructions witnessing that weighted composition semigroups are not
//! strongly continuous on the Bloch space, and that the space is not
//! separable.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{bloch_seminorm_with, AnalyticFn, GridSpec};
use crate::blaschke::{interpolation_delta, pseudo_distance, BlaschkeProduct};
use crate::cocycle::WeightedSemigroup;
use crate::error::{Error, Result};
use crate::flow::{radial_ladder, AutomorphismKind, FlowModel, OrbitVerdict};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Deepest level a construction may reach in double precision.
pub const MAX_LEVELS: usize = 24;
/// Relative margin the searches aim for in the two scale inequalities.
pub const SEARCH_MARGIN: f64 = 1e-2;
/// Relative margin every constructed pair is verified against.
pub const VERIFY_MARGIN: f64 = 1e-3;
/// Relative slack (times `1 + |f'(r_n)|`) allowed in Bloch-gap comparisons.
pub const GAP_SLACK: f64 = 1e-8;
/// Angle equation tolerance for the automorphism construction.
pub const ANGLE_TOL: f64 = 1e-9;

const T_SHRINK: f64 = 0.45;
const MAX_LADDER_J: usize = 50;

/// One level of a construction: radius, time and `w = φ_t(r γ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPair {
    pub n: usize,
    pub r: f64,
    pub t: f64,
    pub w: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapCase {
    /// `φ_t(γ₀)` lies inside the disc.
    Interior,
    /// Automorphism flows.
    Automorphism,
}

/// Diagnostics of one automorphism level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleRow {
    pub n: usize,
    /// `|arg(ψ_t(r_n) - 1) - target|` in rotated coordinates.
    pub angle_residual: f64,
    /// `(1 - Re ψ_t(r_n)) / 2^{-n}`.
    pub ratio: f64,
    /// `|1 - ψ| / (1 - |ψ|)`.
    pub stolz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    /// `+1` when the target angle is `3π/4`, `-1` for `-3π/4`.
    pub sign: i8,
    pub first_level: usize,
    pub rows: Vec<AngleRow>,
    pub min_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConstruction {
    pub flow: FlowModel,
    pub gamma0: Complex64,
    pub case: GapCase,
    pub pairs: Vec<GapPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<AngleReport>,
}

/// Relative margins of `1 - r < ½(1 - |w|)` and `½(1 - |w|) < ¼(1 - r_prev)`.
fn margins(r: f64, w: Complex64, r_prev: Option<f64>) -> (f64, Option<f64>) {
    let half_gap = 0.5 * (1.0 - w.norm());
    let first = (half_gap - (1.0 - r)) / half_gap;
    let second = r_prev.map(|p| {
        let quarter = 0.25 * (1.0 - p);
        (quarter - half_gap) / quarter
    });
    (first, second)
}

impl GapConstruction {
    /// Zero of the simple-zero factor at level `i`: `r_i γ₀`.
    pub fn zero_point(&self, i: usize) -> Complex64 {
        self.gamma0 * self.pairs[i].r
    }

    /// Relative margins of the scale inequalities, level by level; the second
    /// entry is absent on the first level.
    pub fn margins(&self) -> Vec<(f64, Option<f64>)> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| margins(p.r, p.w, (i > 0).then(|| self.pairs[i - 1].r)))
            .collect()
    }

    /// Structural invariants: `t_n < t_{n-1}/2`, `r_n` increasing, and for
    /// interior constructions the interleaving `|w_n| < r_n < |w_{n+1}|`
    /// together with the scale inequalities at `VERIFY_MARGIN`.
    pub fn verify(&self) -> bool {
        let times = self.pairs.iter().all(|p| p.t > 0.0)
            && self.pairs.windows(2).all(|p| p[1].t < 0.5 * p[0].t && p[1].r > p[0].r);
        if self.case == GapCase::Automorphism {
            return times;
        }
        let interleaved = self.pairs.iter().all(|p| p.w.norm() < p.r)
            && self.pairs.windows(2).all(|p| p[1].w.norm() > p[0].r);
        let scales = self
            .margins()
            .iter()
            .all(|(a, b)| *a >= VERIFY_MARGIN && b.is_none_or(|b| b >= VERIFY_MARGIN));
        times && interleaved && scales
    }

    /// All zero points `r_n γ₀` followed by all `w_n`.
    pub fn combined_points(&self) -> Vec<Complex64> {
        (0..self.pairs.len())
            .map(|i| self.zero_point(i))
            .chain(self.pairs.iter().map(|p| p.w))
            .collect()
    }
}

/// Builds `(r_n, t_n)` for a flow that moves `γ₀` into the disc.
pub fn construct_case1(flow: &FlowModel, gamma0: Complex64, n_levels: usize, t_start: f64) -> Result<GapConstruction> {
    if n_levels == 0 {
        return Err(Error::invalid("need at least one level"));
    }
    if n_levels > MAX_LEVELS {
        return Err(Error::DepthExceeded {
            level: n_levels,
            reason: format!("at most {MAX_LEVELS} levels fit in double precision"),
        });
    }
    if !(t_start > 0.0 && t_start.is_finite()) {
        return Err(Error::invalid("t_start must be positive"));
    }
    if flow.is_automorphism_family() {
        return Err(Error::CaseMismatch("automorphism flows keep the boundary invariant".into()));
    }
    let ladder = radial_ladder(30);
    let limit = |t: f64| -> Result<Complex64> {
        let orbit = flow.boundary_orbit(gamma0, t, &ladder)?;
        if orbit.verdict != OrbitVerdict::Inside {
            return Err(Error::CaseMismatch(format!("φ_{t}(γ₀) stays on the boundary")));
        }
        Ok(orbit.limit)
    };
    limit(t_start)?;

    let mut pairs: Vec<GapPair> = Vec::with_capacity(n_levels);
    for n in 1..=n_levels {
        let prev = pairs.last().copied();
        let t = match prev {
            None => t_start,
            Some(p) => {
                // shrink until the boundary image sits well inside the target annulus
                let target = 0.25 * (1.0 - p.r) * (1.0 - 10.0 * SEARCH_MARGIN);
                let mut t = T_SHRINK * p.t;
                let mut halvings = 0;
                while 0.5 * (1.0 - limit(t)?.norm()) >= target {
                    t *= 0.5;
                    halvings += 1;
                    if halvings > 200 {
                        return Err(Error::DepthExceeded { level: n, reason: "no admissible time".into() });
                    }
                }
                t
            }
        };
        let r_prev = prev.map(|p| p.r);
        let admissible = |r: f64| -> Result<(bool, Complex64)> {
            let w = flow.advance(gamma0 * r, t)?;
            let (a, b) = margins(r, w, r_prev);
            Ok((a >= SEARCH_MARGIN && b.is_none_or(|b| b >= SEARCH_MARGIN), w))
        };
        let floor = r_prev.unwrap_or(0.0);
        let mut lo = floor;
        let mut found = None;
        for j in 1..=MAX_LADDER_J {
            let r = 1.0 - 0.5f64.powi(j as i32);
            if r <= floor {
                continue;
            }
            if admissible(r)?.0 {
                found = Some(r);
                break;
            }
            lo = r;
        }
        let Some(mut hi) = found else {
            return Err(Error::DepthExceeded {
                level: n,
                reason: "radius ladder reached 1 - 2^-50".into(),
            });
        };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if admissible(mid)?.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let w = admissible(hi)?.1;
        pairs.push(GapPair { n, r: hi, t, w });
    }
    let gc = GapConstruction { flow: flow.clone(), gamma0, case: GapCase::Interior, pairs, angles: None };
    if !gc.verify() {
        return Err(Error::DepthExceeded {
            level: gc.pairs.len(),
            reason: "double precision cannot separate the levels".into(),
        });
    }
    Ok(gc)
}

/// Picks the candidate in `{1, i, -1, -i}` farthest from the given points.
fn farthest_candidate(avoid: &[Complex64]) -> Complex64 {
    let candidates = [ONE, Complex64::new(0.0, 1.0), -ONE, Complex64::new(0.0, -1.0)];
    let distance = |c: &Complex64| avoid.iter().map(|p| (p - c).norm()).fold(f64::INFINITY, f64::min);
    candidates
        .into_iter()
        .max_by(|a, b| distance(a).total_cmp(&distance(b)))
        .expect("candidate list is non-empty")
}

/// Builds `r_n = 1 - 2^{-n}` with `t_n` solving the angle equation, for
/// automorphism flows. Coordinates are rotated so that `γ₀` becomes 1; when
/// `gamma0` is `None` the boundary point is chosen away from the fixed points.
pub fn construct_case2(flow: &FlowModel, n_levels: usize, gamma0: Option<Complex64>) -> Result<GapConstruction> {
    let FlowModel::Automorphism(_) = flow else {
        return Err(Error::CaseMismatch("not an automorphism flow".into()));
    };
    if n_levels == 0 {
        return Err(Error::invalid("need at least one level"));
    }
    let fit = flow.classify_automorphism()?;
    let boundary_fixed: Vec<Complex64> =
        fit.fixed_points.iter().copied().filter(|p| (p.norm() - 1.0).abs() < 1e-6).collect();
    let gamma0 = match gamma0 {
        Some(g) => {
            if (g.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("γ₀ = {g} is not unimodular")));
            }
            if boundary_fixed.iter().any(|p| (p - g).norm() < 1e-6) {
                return Err(Error::CaseMismatch(format!("γ₀ = {g} is a Denjoy–Wolff point of the flow")));
            }
            g
        }
        None => farthest_candidate(&boundary_fixed),
    };
    if fit.kind == AutomorphismKind::Elliptic && fit.fixed_points.is_empty() {
        // identity map: every point is fixed
        return Err(Error::CaseMismatch("trivial flow".into()));
    }
    let rot = gamma0.conj();
    let psi = |z: Complex64, t: f64| -> Result<Complex64> { Ok(rot * flow.advance(gamma0 * z, t)?) };

    let probe = 1.0 - 0.5f64.powi(8);
    let sign: i8 = if (psi(Complex64::new(probe, 0.0), 0.5f64.powi(20))? - ONE).im >= 0.0 { 1 } else { -1 };
    // arg(w - 1) = ±3π/4  ⟺  arg(1 - w) = ∓π/4, and arg(1 - w) is continuous on the disc
    let target = -f64::from(sign) * std::f64::consts::FRAC_PI_4;
    let angle = |r: f64, t: f64| -> Result<f64> {
        Ok(f64::from(sign) * ((ONE - psi(Complex64::new(r, 0.0), t)?).arg() - target))
    };

    let mut pairs = Vec::with_capacity(n_levels);
    let mut rows = Vec::with_capacity(n_levels);
    let mut first_level = None;
    let mut t_max = 1.0;
    let mut n = 0;
    while pairs.len() < n_levels {
        n += 1;
        if n > 52 {
            return Err(Error::DepthExceeded { level: n, reason: "radius 1 - 2^-n underflows".into() });
        }
        let r = 1.0 - 0.5f64.powi(n as i32);
        // first sign change of the angle defect on a geometric scan of (0, t_max]
        let mut bracket = None;
        let mut lo = 0.0;
        for k in (0..=60).rev() {
            let t = t_max * 0.5f64.powi(k);
            if angle(r, t)? <= 0.0 {
                bracket = Some((lo, t));
                break;
            }
            lo = t;
        }
        let Some((mut lo, mut hi)) = bracket else {
            if first_level.is_none() {
                continue;
            }
            return Err(Error::Bisection { level: n });
        };
        first_level.get_or_insert(n);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if angle(r, mid)? <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let defect_lo = angle(r, lo)?.abs();
        let defect_hi = angle(r, hi)?.abs();
        let t = if defect_lo < defect_hi && lo > 0.0 { lo } else { hi };
        let wr = psi(Complex64::new(r, 0.0), t)?;
        let angle_residual = angle(r, t)?.abs();
        if angle_residual > ANGLE_TOL {
            return Err(Error::Bisection { level: n });
        }
        rows.push(AngleRow {
            n,
            angle_residual,
            ratio: (1.0 - wr.re) / 0.5f64.powi(n as i32),
            stolz: (ONE - wr).norm() / (1.0 - wr.norm()),
        });
        pairs.push(GapPair { n, r, t, w: gamma0 * wr });
        t_max = 0.5 * t;
    }

    let mut gc = GapConstruction {
        flow: flow.clone(),
        gamma0,
        case: GapCase::Automorphism,
        pairs,
        angles: None,
    };
    let points = gc.combined_points();
    let min_separation = min_pairwise_distance(&points);
    gc.angles = Some(AngleReport {
        sign,
        first_level: first_level.expect("at least one level was built"),
        rows,
        min_separation,
    });
    Ok(gc)
}

fn min_pairwise_distance(points: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(pseudo_distance(points[i], points[j]));
        }
    }
    best
}

/// `f = B̃ · B̂²` with `B̃` vanishing at the points `r_n γ₀` and `B̂` at the
/// `w_n`.
pub fn build_test_function(gc: &GapConstruction) -> Result<AnalyticFn> {
    let simple: Vec<Complex64> = (0..gc.pairs.len()).map(|i| gc.zero_point(i)).collect();
    let double: Vec<Complex64> = gc.pairs.iter().map(|p| p.w).collect();
    let combined = BlaschkeProduct::new(gc.combined_points(), 0.0)?;
    let report = interpolation_delta(&combined)?;
    if !(report.delta > 0.0) {
        return Err(Error::Interpolation { delta: report.delta });
    }
    Ok(AnalyticFn::product(vec![
        AnalyticFn::blaschke(BlaschkeProduct::new(simple, 0.0)?),
        AnalyticFn::power(AnalyticFn::blaschke(BlaschkeProduct::new(double, 0.0)?), 2),
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    pub t: f64,
    pub r: f64,
    pub w: Complex64,
    /// `|f'(r_n γ₀)| (1 - r_n)`, independent of the cocycle.
    pub lower_bound: f64,
    /// Grid value of the Bloch norm of `W_{t_n} f - f`.
    pub grid_gap: f64,
    /// `|m f'(w_n) φ' + m' f(w_n)|` at `r_n γ₀`.
    pub cancellation_residual: f64,
    /// `1 + |f'(r_n γ₀)|`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub delta_hat: f64,
}

impl GapReport {
    pub fn gap_dominates_bound(&self) -> bool {
        self.rows.iter().all(|r| r.grid_gap >= r.lower_bound - GAP_SLACK * r.scale)
    }

    pub fn cancellation_holds(&self) -> bool {
        self.rows.iter().all(|r| r.cancellation_residual <= GAP_SLACK * r.scale)
    }

    pub fn passes(&self) -> bool {
        self.delta_hat > 0.0 && self.gap_dominates_bound() && self.cancellation_holds()
    }

    /// CSV: `n,t_n,r_n,w_re,w_im,lower_bound,grid_gap,cancellation_residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,t_n,r_n,w_re,w_im,lower_bound,grid_gap,cancellation_residual\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.n, r.t, r.r, r.w.re, r.w.im, r.lower_bound, r.grid_gap, r.cancellation_residual
            ));
        }
        out
    }
}

/// Bloch-norm gap `‖W_{t_n} f - f‖` along a construction. The grid is
/// augmented with every zero point `r_n γ₀`.
pub fn bloch_gap(gc: &GapConstruction, wsg: &WeightedSemigroup, grid: &GridSpec) -> Result<GapReport> {
    if wsg.flow() != &gc.flow {
        return Err(Error::invalid("semigroup flow differs from the construction's flow"));
    }
    grid.validate()?;
    let f = build_test_function(gc)?;
    let df = f.derivative();
    let zero_points: Vec<Complex64> = (0..gc.pairs.len()).map(|i| gc.zero_point(i)).collect();
    let grid = grid.clone().with_points(zero_points.iter().copied());
    let f0 = f.eval(ZERO)?;

    let rows = gc
        .pairs
        .iter()
        .zip(&zero_points)
        .map(|(p, &z)| {
            let fprime = df.eval(z)?;
            let lower_bound = fprime.norm() * (1.0 - p.r);
            let state = wsg.evaluate(z, p.t)?;
            let cancellation_residual = (state.m * df.eval(state.phi)? * state.dphi + state.dm * f.eval(state.phi)?).norm();
            let at_origin = (wsg.apply_weighted(&f, ZERO, p.t)? - f0).norm();
            let sup = bloch_seminorm_with(&grid, |x| {
                Ok(wsg.weighted_z_derivative_with(&f, &df, x, p.t)? - df.eval(x)?)
            })?;
            Ok(GapRow {
                n: p.n,
                t: p.t,
                r: p.r,
                w: p.w,
                lower_bound,
                grid_gap: at_origin + sup,
                cancellation_residual,
                scale: 1.0 + fprime.norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let delta_hat = rows.iter().map(|r| r.lower_bound).fold(f64::INFINITY, f64::min);
    Ok(GapReport { rows, delta_hat })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub rotations: Vec<f64>,
    /// Symmetric matrix of grid Bloch norms `‖B_{t_i} - B_{t_j}‖`.
    pub matrix: Vec<Vec<f64>>,
    /// Smallest off-diagonal entry; `None` for a single rotation.
    pub epsilon_hat: Option<f64>,
}

impl SeparabilityReport {
    pub fn passes(&self) -> bool {
        self.epsilon_hat.is_none_or(|e| e > 0.0)
    }

    /// Matrix CSV with the rotation angles as row and column labels.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rotation");
        for t in &self.rotations {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (t, row) in self.rotations.iter().zip(&self.matrix) {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Bloch distances between rotations `B(e^{-it} z)` of an
/// interpolating Blaschke product. The grid is augmented with every rotated
/// zero.
pub fn separability_witness(b: &BlaschkeProduct, rotations: &[f64], grid: &GridSpec) -> Result<SeparabilityReport> {
    let tau = std::f64::consts::TAU;
    if rotations.iter().any(|t| !(*t >= 0.0 && *t < tau)) {
        return Err(Error::invalid("rotations must lie in [0, 2π)"));
    }
    for i in 0..rotations.len() {
        for j in i + 1..rotations.len() {
            if rotations[i] == rotations[j] {
                return Err(Error::invalid(format!("rotation {} listed twice", rotations[i])));
            }
        }
    }
    grid.validate()?;
    let report = interpolation_delta(b)?;
    if !(report.delta > 0.0) {
        return Err(Error::Interpolation { delta: report.delta });
    }
    let rotated: Vec<BlaschkeProduct> = rotations.iter().map(|t| b.rotated(*t)).collect();
    let grid = grid.clone().with_points(rotated.iter().flat_map(|r| r.zeros().to_vec()));
    let points = grid.sample_points();
    let weights: Vec<f64> = points.iter().map(|z| 1.0 - z.norm_sqr()).collect();
    let values = rotated
        .par_iter()
        .map(|r| {
            let at_origin = r.eval(ZERO)?;
            let derivs = points.iter().map(|z| r.derivative(*z)).collect::<Result<Vec<_>>>()?;
            Ok((at_origin, derivs))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = rotations.len();
    let mut matrix = vec![vec![0.0; k]; k];
    let mut epsilon_hat: Option<f64> = None;
    for i in 0..k {
        for j in i + 1..k {
            let sup = values[i]
                .1
                .iter()
                .zip(&values[j].1)
                .zip(&weights)
                .map(|((a, b), w)| (a - b).norm() * w)
                .fold(0.0, f64::max);
            let gap = (values[i].0 - values[j].0).norm() + sup;
            matrix[i][j] = gap;
            matrix[j][i] = gap;
            epsilon_hat = Some(epsilon_hat.map_or(gap, |e| e.min(gap)));
        }
    }
    Ok(SeparabilityReport { rotations: rotations.to_vec(), matrix, epsilon_hat })
}
