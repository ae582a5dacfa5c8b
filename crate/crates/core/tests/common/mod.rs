//! Test corpora and the property checks behind every module invariant.
//!
//! Each check returns `Err(description)` on the first violation so the same
//! functions serve the `invariants` test target and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::TAU;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestCaseResult, TestRng, TestRunner};
use semiflow_core::analytic::{bloch_norm_grid, bloch_seminorm_with, hp_norm_boundary, taylor};
use semiflow_core::blaschke::{gpv_bound_check, pseudo_distance};
use semiflow_core::cocycle::{
    apply_generator, coboundary_eval, default_t_ladder, transfer_generator, ConsistencyNorm,
};
use semiflow_core::continuity::{bloch_gap, construct_case1, construct_case2, GapConstruction, VERIFY_MARGIN};
use semiflow_core::flow::{koenigs_flow, InverseStrategy};
use semiflow_core::{
    AnalyticFn, BlaschkeProduct, Complex64, ConformalMap, FlowModel, GridSpec, KoenigsMode, WeightSpec,
    WeightedSemigroup,
};

pub type Check = Result<(), String>;

pub const FD_STEP: f64 = 1e-5;
pub const H_LADDER: [f64; 3] = [4e-3, 2e-3, 1e-3];

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------- corpora

pub fn functions() -> Vec<(&'static str, AnalyticFn)> {
    let z = AnalyticFn::identity;
    vec![
        ("poly", AnalyticFn::poly(vec![c(1.0, 0.0), c(-2.0, 1.0), c(0.5, 0.0), c(0.0, 0.25)])),
        ("exp", AnalyticFn::exp(z())),
        ("exp_truncation", AnalyticFn::exp_truncation(8)),
        ("mobius", AnalyticFn::mobius(c(1.0, 0.0), c(-0.3, 0.0), c(-0.3, 0.0), c(1.0, 0.0)).unwrap()),
        ("log", AnalyticFn::log(AnalyticFn::poly_real(&[1.0, 0.5]), c(1.0, 0.0), vec![])),
        ("product", AnalyticFn::product(vec![AnalyticFn::exp(z()), AnalyticFn::poly_real(&[0.5, -1.0, 0.3])])),
        ("quotient", AnalyticFn::quotient(AnalyticFn::real(1.0), AnalyticFn::poly_real(&[2.0, -1.0]), vec![])),
        ("compose", AnalyticFn::compose(AnalyticFn::exp(z()), AnalyticFn::poly(vec![c(0.0, 0.0), c(0.0, 0.5)]))),
        ("power", AnalyticFn::power(AnalyticFn::poly_real(&[1.0, 0.5]), -2)),
        ("sum", AnalyticFn::sum(vec![AnalyticFn::monomial(3), AnalyticFn::exp(AnalyticFn::poly_real(&[0.0, -1.0]))])),
        ("blaschke", AnalyticFn::blaschke(BlaschkeProduct::new(vec![c(0.5, 0.0), c(-0.3, 0.4), c(0.0, 0.0)], 0.3).unwrap())),
    ]
}

/// Generators of the ODE corpus flows.
pub fn generators() -> Vec<(&'static str, AnalyticFn)> {
    vec![
        ("-z", AnalyticFn::poly_real(&[0.0, -1.0])),
        ("iz", AnalyticFn::poly(vec![c(0.0, 0.0), c(0.0, 1.0)])),
        ("-z(1-z)", AnalyticFn::poly_real(&[0.0, -1.0, 1.0])),
        ("(1-z)^2", AnalyticFn::poly_real(&[1.0, -2.0, 1.0])),
    ]
}

/// Parabolic flow `h⁻¹(h + it)` through the Cayley map onto the right half-plane.
pub fn cayley_parabolic() -> FlowModel {
    koenigs_flow(ConformalMap::cayley(), c(0.0, 1.0), KoenigsMode::Translate).unwrap()
}

pub fn flows() -> Vec<(&'static str, FlowModel)> {
    let mut out: Vec<(&'static str, FlowModel)> =
        generators().into_iter().map(|(name, g)| (name, FlowModel::ode(g))).collect();
    out.push(("koenigs-cayley-parabolic", cayley_parabolic()));
    out
}

pub fn weights() -> Vec<(&'static str, WeightSpec)> {
    vec![
        ("g=0", WeightSpec::weight(AnalyticFn::zero())),
        ("g=1", WeightSpec::weight(AnalyticFn::real(1.0))),
        ("g=z", WeightSpec::weight(AnalyticFn::identity())),
        ("alpha=1-z", WeightSpec::coboundary(AnalyticFn::poly_real(&[1.0, -1.0]), None)),
    ]
}

pub fn products() -> Vec<(&'static str, BlaschkeProduct)> {
    vec![
        ("geometric-10", BlaschkeProduct::geometric_truncation(10)),
        ("scattered", BlaschkeProduct::new(vec![c(0.5, 0.0), c(-0.3, 0.4), c(0.0, 0.9), c(0.0, 0.0)], 0.7).unwrap()),
        ("spiral", BlaschkeProduct::new((1..=6).map(|k| Complex64::from_polar(1.0 - 0.6f64.powi(k), 0.9 * k as f64)).collect(), -1.2).unwrap()),
    ]
}

/// Disc maps whose inverses are known in closed form.
pub fn conformal_maps() -> Vec<(&'static str, ConformalMap)> {
    let a = 0.3;
    let forward = AnalyticFn::mobius(c(1.0, 0.0), c(-a, 0.0), c(-a, 0.0), c(1.0, 0.0)).unwrap();
    let inverse = AnalyticFn::mobius(c(1.0, 0.0), c(a, 0.0), c(a, 0.0), c(1.0, 0.0)).unwrap();
    vec![
        ("cayley", ConformalMap::cayley()),
        ("disc-automorphism", ConformalMap::new(forward, InverseStrategy::ClosedForm { map: inverse })),
    ]
}

/// Flows paired with a boundary point that they move into the disc.
pub fn interior_constructions() -> Vec<(&'static str, FlowModel, Complex64)> {
    vec![
        ("-z", FlowModel::ode(AnalyticFn::poly_real(&[0.0, -1.0])), c(1.0, 0.0)),
        ("-z(1-z)", FlowModel::ode(AnalyticFn::poly_real(&[0.0, -1.0, 1.0])), c(0.0, 1.0)),
        (
            "koenigs-spiral",
            koenigs_flow(ConformalMap::identity(), c(1.0, 1.0), KoenigsMode::Spiral).unwrap(),
            c(1.0, 0.0),
        ),
    ]
}

pub fn gap_weights() -> Vec<(&'static str, WeightSpec)> {
    weights().into_iter().filter(|(name, _)| *name != "g=z").collect()
}

// ---------------------------------------------------------------- harness

pub fn disc_point(r_max: f64) -> impl Strategy<Value = Complex64> + Clone {
    (0.0..1.0f64, 0.0..TAU).prop_map(move |(u, theta)| Complex64::from_polar(r_max * u.sqrt(), theta))
}

/// Runs `test` on `cases` deterministic samples of `strategy`.
pub fn property<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> TestCaseResult) -> Check
where
    S: Strategy,
{
    let config = Config { cases, failure_persistence: None, max_shrink_iters: 64, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// `n` deterministic draws from `strategy`, for checks that report an
/// aggregate such as a maximum error.
pub fn samples<S: Strategy>(n: usize, strategy: S) -> Vec<S::Value> {
    let mut runner = TestRunner::new_with_rng(Config::default(), TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    (0..n).map(|_| strategy.new_tree(&mut runner).expect("strategy draws").current()).collect()
}

pub trait OrFail<T> {
    fn or_fail(self, ctx: &str) -> std::result::Result<T, TestCaseError>;
}

impl<T> OrFail<T> for semiflow_core::Result<T> {
    fn or_fail(self, ctx: &str) -> std::result::Result<T, TestCaseError> {
        self.map_err(|e| TestCaseError::fail(format!("{ctx}: {e}")))
    }
}

fn fail(msg: String) -> Check {
    Err(msg)
}

fn core<T>(r: semiflow_core::Result<T>, ctx: &str) -> Result<T, String> {
    r.map_err(|e| format!("{ctx}: {e}"))
}

fn centered(f: impl Fn(Complex64) -> semiflow_core::Result<Complex64>, z: Complex64) -> semiflow_core::Result<Complex64> {
    let h = Complex64::new(FD_STEP, 0.0);
    Ok((f(z + h)? - f(z - h)?) / (2.0 * FD_STEP))
}

// ---------------------------------------------------------------- analytic

pub fn analytic_derivative_matches_difference() -> Check {
    for (name, f) in functions() {
        let df = f.derivative();
        property(100, disc_point(0.8), |z| {
            let d = df.eval(z).or_fail(name)?;
            let fd = centered(|x| f.eval(x), z).or_fail(name)?;
            prop_assert!((d - fd).norm() <= 1e-5 * (1.0 + d.norm()), "{name} at {z}: {d} vs {fd}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn analytic_taylor_round_trip() -> Check {
    let (n, r) = (24, 0.9);
    for (name, f) in functions() {
        let series = core(taylor(&f, n, r), name)?;
        let m = (0..1024)
            .map(|j| f.eval(Complex64::from_polar(r, TAU * j as f64 / 1024.0)).map(|v| v.norm()))
            .collect::<semiflow_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?
            .into_iter()
            .fold(0.0, f64::max);
        property(60, disc_point(r / 2.0), |z| {
            let q = z.norm() / r;
            let bound = m * q.powi(n as i32 + 1) / (1.0 - q) + 1e-13 * (1.0 + m);
            let err = (series.eval(z) - f.eval(z).or_fail(name)?).norm();
            prop_assert!(err <= bound, "{name} at {z}: error {err:e} > tail {bound:e}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn analytic_grid_refinement_monotone() -> Check {
    let grids = [GridSpec::uniform(6, 16, 0.9).unwrap(), GridSpec::uniform(5, 24, 0.97).unwrap()];
    for (name, f) in functions() {
        let df = f.derivative();
        for base in &grids {
            let mut grid = base.clone();
            let mut norm = core(bloch_norm_grid(&f, &grid), name)?;
            let mut semi = core(bloch_seminorm_with(&grid, |z| df.eval(z)), name)?;
            for _ in 0..2 {
                grid = grid.refined();
                let finer = core(bloch_norm_grid(&f, &grid), name)?;
                let finer_semi = core(bloch_seminorm_with(&grid, |z| df.eval(z)), name)?;
                if finer < norm || finer_semi < semi {
                    return fail(format!("{name}: refinement decreased the grid norm {norm} -> {finer}"));
                }
                norm = finer;
                semi = finer_semi;
            }
        }
    }
    Ok(())
}

pub fn analytic_hp_monotone_in_r() -> Check {
    for (name, f) in functions() {
        for p in [1.0, 2.0, 4.0] {
            let values = [0.3, 0.6, 0.9]
                .iter()
                .map(|&r| hp_norm_boundary(&f, p, r, 256))
                .collect::<semiflow_core::Result<Vec<_>>>()
                .map_err(|e| format!("{name}: {e}"))?;
            if values.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
                return fail(format!("{name}: p = {p} integral means {values:?} decrease"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- flow

pub fn flow_semigroup() -> Check {
    for (name, flow) in flows() {
        let bound = 10.0 * flow.tol();
        property(50, (disc_point(0.8), 0.0..2.0f64, 0.0..2.0f64), |(z, s, t)| {
            let res = flow.check_semigroup(z, s, t).or_fail(name)?;
            prop_assert!(res <= bound, "{name}: residual {res:e} at z={z}, s={s}, t={t}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn flow_generator_round_trip() -> Check {
    for (name, g) in generators() {
        let flow = FlowModel::ode(g.clone());
        property(30, disc_point(0.8), |z| {
            let est = flow.generator_fd(z, &H_LADDER).or_fail(name)?;
            let exact = g.eval(z).or_fail(name)?;
            prop_assert!((est - exact).norm() <= 1e-6, "{name} at {z}: {est} vs {exact}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn flow_koenigs_matches_ode() -> Check {
    let ode = FlowModel::ode(AnalyticFn::poly_real(&[0.0, -1.0]));
    let model = core(koenigs_flow(ConformalMap::identity(), c(1.0, 0.0), KoenigsMode::Spiral), "koenigs")?;
    let bound = 10.0 * ode.tol();
    property(50, (disc_point(0.9), 0.0..5.0f64), |(z, t)| {
        let a = ode.advance(z, t).or_fail("ode")?;
        let b = model.advance(z, t).or_fail("koenigs")?;
        prop_assert!((a - b).norm() <= bound, "z={z}, t={t}: {a} vs {b}");
        Ok(())
    })
}

pub fn flow_disc_invariance() -> Check {
    for (name, flow) in flows() {
        property(100, (disc_point(0.99), 0.0..10.0f64), |(z, t)| {
            if let Ok(w) = flow.advance(z, t) {
                prop_assert!(w.norm() < 1.0, "{name}: |φ_{t}({z})| = {}", w.norm());
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn flow_z_derivative_matches_difference() -> Check {
    for (name, flow) in flows() {
        property(40, (disc_point(0.8), 0.0..2.0f64), |(z, t)| {
            let d = flow.flow_z_derivative(z, t).or_fail(name)?;
            let fd = centered(|x| flow.advance(x, t), z).or_fail(name)?;
            prop_assert!((d - fd).norm() <= 1e-5 * d.norm(), "{name} at z={z}, t={t}: {d} vs {fd}");
            Ok(())
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------- cocycle

fn semigroups() -> Vec<(String, WeightedSemigroup)> {
    let mut out = Vec::new();
    for (fname, flow) in flows() {
        for (wname, weight) in weights() {
            out.push((format!("{fname} / {wname}"), WeightedSemigroup::new(flow.clone(), weight)));
        }
    }
    out
}

pub fn cocycle_identity_at_zero() -> Check {
    for (name, wsg) in semigroups() {
        property(20, disc_point(0.9), |z| {
            let m = wsg.cocycle(z, 0.0).or_fail(&name)?;
            let state = wsg.evaluate(z, 0.0).or_fail(&name)?;
            prop_assert!(m == Complex64::new(1.0, 0.0) && state.m == m, "{name}: m_0({z}) = {m}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn cocycle_nonvanishing() -> Check {
    let alpha = AnalyticFn::poly_real(&[1.0, -1.0]);
    for (name, wsg) in semigroups() {
        property(30, (disc_point(0.95), 0.0..4.0f64), |(z, t)| {
            let m = wsg.cocycle(z, t).or_fail(&name)?;
            prop_assert!(m.norm() > 0.0 && m.is_finite(), "{name}: m_{t}({z}) = {m}");
            let cob = coboundary_eval(&alpha, wsg.flow(), z, t).or_fail(&name)?;
            prop_assert!(cob.norm() > 0.0 && cob.is_finite(), "{name}: coboundary {cob}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn cocycle_identity() -> Check {
    for (name, wsg) in semigroups() {
        property(50, (disc_point(0.8), 0.0..1.0f64, 0.0..1.0f64), |(z, s, t)| {
            let res = wsg.check_cocycle_identity(z, s, t).or_fail(&name)?;
            prop_assert!(res <= 1e-8, "{name}: residual {res:e} at z={z}, s={s}, t={t}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn cocycle_weight_round_trip() -> Check {
    for (name, wsg) in semigroups() {
        let g = wsg.weight_generator();
        property(20, disc_point(0.8), |z| {
            let est = wsg.weight_generator_fd(z, &H_LADDER).or_fail(&name)?;
            let exact = g.eval(z).or_fail(&name)?;
            prop_assert!((est - exact).norm() <= 1e-6, "{name} at {z}: {est} vs {exact}");
            Ok(())
        })?;
    }
    Ok(())
}

pub fn consistency_functions() -> Vec<(&'static str, AnalyticFn)> {
    vec![
        ("1", AnalyticFn::real(1.0)),
        ("z", AnalyticFn::identity()),
        ("z^2", AnalyticFn::monomial(2)),
        ("exp_truncation", AnalyticFn::exp_truncation(12)),
    ]
}

pub fn cocycle_consistency_ratios() -> Check {
    let cases = [
        ("-z", AnalyticFn::poly_real(&[0.0, -1.0])),
        ("-z(1-z)", AnalyticFn::poly_real(&[0.0, -1.0, 1.0])),
    ];
    let ladder = default_t_ladder(7);
    for (fname, g) in cases {
        for (wname, weight) in weights().into_iter().take(3) {
            let wsg = WeightedSemigroup::new(FlowModel::ode(g.clone()), weight);
            for (name, f) in consistency_functions() {
                let table = core(wsg.generator_consistency(&f, &ConsistencyNorm::default(), &ladder), name)?;
                if !table.passes() {
                    return fail(format!("G={fname}, {wname}, f={name}: {:?}", table.rows));
                }
            }
        }
    }
    Ok(())
}

pub fn cocycle_generator_linear() -> Check {
    let fs = functions();
    for (gname, g) in generators() {
        for (wname, w) in [("1", AnalyticFn::real(1.0)), ("z", AnalyticFn::identity())] {
            for pair in fs.windows(2) {
                let (f1, f2) = (&pair[0].1, &pair[1].1);
                let a1 = apply_generator(&g, &w, f1);
                let a2 = apply_generator(&g, &w, f2);
                let a12 = apply_generator(&g, &w, &AnalyticFn::sum(vec![f1.clone(), f2.clone()]));
                property(10, disc_point(0.9), |z| {
                    let (x1, x2) = (a1.eval(z).or_fail(gname)?, a2.eval(z).or_fail(gname)?);
                    let x12 = a12.eval(z).or_fail(gname)?;
                    let scale = 1.0 + x1.norm() + x2.norm();
                    prop_assert!(
                        (x12 - x1 - x2).norm() <= 1e-13 * scale,
                        "G={gname}, g={wname}, f={}+{} at {z}",
                        pair[0].0,
                        pair[1].0
                    );
                    Ok(())
                })?;
            }
        }
    }
    Ok(())
}

pub fn cocycle_weighted_derivative_matches_difference() -> Check {
    let fs = [("exp", AnalyticFn::exp(AnalyticFn::identity())), ("z^2", AnalyticFn::monomial(2))];
    for (name, wsg) in semigroups() {
        for (fname, f) in &fs {
            property(15, (disc_point(0.8), 0.0..1.0f64), |(z, t)| {
                let d = wsg.weighted_z_derivative(f, z, t).or_fail(&name)?;
                let fd = centered(|x| wsg.apply_weighted(f, x, t), z).or_fail(&name)?;
                prop_assert!(
                    (d - fd).norm() <= 1e-5 * (1.0 + d.norm()),
                    "{name}, f={fname} at z={z}, t={t}: {d} vs {fd}"
                );
                Ok(())
            })?;
        }
    }
    Ok(())
}

pub fn cocycle_transfer_round_trip() -> Check {
    let gs = [("0", AnalyticFn::zero()), ("1", AnalyticFn::real(1.0)), ("z", AnalyticFn::identity())];
    for (hname, h) in conformal_maps() {
        let back = core(h.inverse_map(), hname)?;
        for (gname, g_flow) in generators() {
            for (wname, g_weight) in &gs {
                let (g1, w1) = transfer_generator(&back, &g_flow, g_weight);
                let (g2, w2) = transfer_generator(&h, &g1, &w1);
                property(20, disc_point(0.8), |z| {
                    let dg = (g2.eval(z).or_fail(hname)? - g_flow.eval(z).or_fail(hname)?).norm();
                    let dw = (w2.eval(z).or_fail(hname)? - g_weight.eval(z).or_fail(hname)?).norm();
                    prop_assert!(dg <= 1e-10 && dw <= 1e-10, "h={hname}, G={gname}, g={wname} at {z}: {dg:e}, {dw:e}");
                    Ok(())
                })?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- blaschke

pub fn blaschke_interior_bound() -> Check {
    for (name, b) in products() {
        property(200, disc_point(0.999), |z| {
            let v = b.eval(z).or_fail(name)?;
            prop_assert!(v.norm() < 1.0, "{name}: |B({z})| = {}", v.norm());
            Ok(())
        })?;
    }
    Ok(())
}

pub fn blaschke_boundary_modulus() -> Check {
    for (name, b) in products() {
        for j in 0..64 {
            let z = Complex64::from_polar(1.0, TAU * j as f64 / 64.0);
            let v = core(b.eval(z), name)?;
            if (v.norm() - 1.0).abs() > 1e-10 {
                return fail(format!("{name}: |B({z})| = {}", v.norm()));
            }
        }
    }
    Ok(())
}

pub fn blaschke_derivative_matches_difference() -> Check {
    for (name, b) in products() {
        let check = |z: Complex64| -> Result<(), String> {
            let d = core(b.derivative(z), name)?;
            // the scale of B near z is the distance to the boundary
            let h = 1e-4 * (1.0 - z.norm());
            let step = Complex64::new(h, 0.0);
            let fd = (core(b.eval(z + step), name)? - core(b.eval(z - step), name)?) / (2.0 * h);
            if (d - fd).norm() > 1e-5 * d.norm() {
                return fail(format!("{name} at {z}: {d} vs {fd}"));
            }
            Ok(())
        };
        for &a in b.zeros() {
            check(a)?;
        }
        property(100, disc_point(0.95), |z| check(z).map_err(TestCaseError::fail))?;
    }
    Ok(())
}

pub fn blaschke_pseudo_distance_metric() -> Check {
    property(300, (disc_point(0.999), disc_point(0.999), disc_point(0.999)), |(x, y, z)| {
        prop_assert!(pseudo_distance(x, y) == pseudo_distance(y, x), "asymmetric at {x}, {y}");
        let (xy, yz, xz) = (pseudo_distance(x, y), pseudo_distance(y, z), pseudo_distance(x, z));
        prop_assert!(xz <= xy + yz + 1e-12, "triangle fails: {xz} > {xy} + {yz}");
        prop_assert!(pseudo_distance(x, x) == 0.0);
        Ok(())
    })
}

/// `β̂` for the truncations `{1 - 2^{-n}}_{n ≤ N}`.
pub fn beta_hats(range: std::ops::RangeInclusive<usize>) -> Result<Vec<(usize, f64)>, String> {
    range
        .map(|n| {
            let b = BlaschkeProduct::geometric_truncation(n);
            let marked: Vec<usize> = (0..n).collect();
            core(gpv_bound_check(&b, &marked, 0.1, 16), "gpv").map(|r| (n, r.beta_hat))
        })
        .collect()
}

pub fn blaschke_beta_stable() -> Check {
    let betas = beta_hats(8..=14)?;
    let lo = betas.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    let hi = betas.iter().map(|b| b.1).fold(0.0, f64::max);
    if !(lo > 0.0 && hi < 2.0 * lo) {
        return fail(format!("beta_hat over N = 8..14 not within a factor 2: {betas:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- continuity

pub fn small_grid() -> GridSpec {
    GridSpec::uniform(6, 24, 0.95).unwrap()
}

fn case1(name: &str, flow: &FlowModel, gamma0: Complex64) -> Result<GapConstruction, String> {
    core(construct_case1(flow, gamma0, 6, 0.5), name)
}

pub fn continuity_margins() -> Check {
    for (name, flow, gamma0) in interior_constructions() {
        let gc = case1(name, &flow, gamma0)?;
        for (i, (a, b)) in gc.margins().into_iter().enumerate() {
            if !(a >= VERIFY_MARGIN && b.is_none_or(|b| b >= VERIFY_MARGIN)) {
                return fail(format!("{name}: level {} margins {a:e}, {b:?}", i + 1));
            }
        }
        if !gc.verify() {
            return fail(format!("{name}: construction fails verification"));
        }
    }
    Ok(())
}

pub fn continuity_cancellation_and_independence() -> Check {
    for (name, flow, gamma0) in interior_constructions() {
        let gc = case1(name, &flow, gamma0)?;
        let mut reference: Option<Vec<u64>> = None;
        for (wname, weight) in gap_weights() {
            let wsg = WeightedSemigroup::new(flow.clone(), weight);
            let report = core(bloch_gap(&gc, &wsg, &small_grid()), name)?;
            if let Some(row) = report.rows.iter().find(|r| r.cancellation_residual > 1e-8 * r.scale) {
                return fail(format!("{name}, {wname}: level {} cancellation residual {:e}", row.n, row.cancellation_residual));
            }
            if !(report.delta_hat > 0.0) {
                return fail(format!("{name}, {wname}: delta_hat {}", report.delta_hat));
            }
            let bits: Vec<u64> = report.rows.iter().map(|r| r.lower_bound.to_bits()).collect();
            match &reference {
                None => reference = Some(bits),
                Some(r) if *r != bits => return fail(format!("{name}: lower bounds change under {wname}")),
                Some(_) => {}
            }
        }
    }
    Ok(())
}

pub fn continuity_times_halve() -> Check {
    let mut all = Vec::new();
    for (name, flow, gamma0) in interior_constructions() {
        all.push((name, case1(name, &flow, gamma0)?));
    }
    all.push(("parabolic", core(construct_case2(&FlowModel::cayley_translation(1.0), 6, None), "case 2")?));
    all.push(("hyperbolic", core(construct_case2(&FlowModel::cayley_dilation(1.0), 6, None), "case 2")?));
    for (name, gc) in all {
        if let Some(w) = gc.pairs.windows(2).find(|w| !(w[1].t < w[0].t / 2.0)) {
            return fail(format!("{name}: t_{} = {} is not below t_{} / 2 = {}", w[1].n, w[1].t, w[0].n, w[0].t / 2.0));
        }
    }
    Ok(())
}

pub fn continuity_case2_ratio() -> Check {
    let gc = core(construct_case2(&FlowModel::cayley_translation(1.0), 8, None), "case 2")?;
    let angles = gc.angles.as_ref().ok_or("no angle report")?;
    let late: Vec<_> = angles.rows.iter().filter(|r| r.n >= 4).collect();
    if late.is_empty() {
        return fail("no levels with n >= 4".into());
    }
    if let Some(r) = late.iter().find(|r| !(0.8..=1.2).contains(&r.ratio)) {
        return fail(format!("level {}: ratio {}", r.n, r.ratio));
    }
    if late.windows(2).any(|w| (w[1].ratio - 1.0).abs() > (w[0].ratio - 1.0).abs()) {
        let ratios: Vec<f64> = late.iter().map(|r| r.ratio).collect();
        return fail(format!("ratios {ratios:?} do not approach 1"));
    }
    Ok(())
}

/// Every core invariant, in module order.
pub fn all() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("analytic: derivative vs centered difference", analytic_derivative_matches_difference),
        ("analytic: Taylor round trip within tail bound", analytic_taylor_round_trip),
        ("analytic: grid norm monotone under refinement", analytic_grid_refinement_monotone),
        ("analytic: integral means nondecreasing in r", analytic_hp_monotone_in_r),
        ("flow: semigroup residual", flow_semigroup),
        ("flow: generator round trip", flow_generator_round_trip),
        ("flow: Koenigs spiral vs ODE", flow_koenigs_matches_ode),
        ("flow: disc invariance", flow_disc_invariance),
        ("flow: z-derivative vs centered difference", flow_z_derivative_matches_difference),
        ("cocycle: m_0 = 1", cocycle_identity_at_zero),
        ("cocycle: non-vanishing", cocycle_nonvanishing),
        ("cocycle: cocycle identity", cocycle_identity),
        ("cocycle: weight generator round trip", cocycle_weight_round_trip),
        ("cocycle: consistency ratios", cocycle_consistency_ratios),
        ("cocycle: generator linearity", cocycle_generator_linear),
        ("cocycle: weighted z-derivative vs centered difference", cocycle_weighted_derivative_matches_difference),
        ("cocycle: transfer round trip", cocycle_transfer_round_trip),
        ("blaschke: interior bound", blaschke_interior_bound),
        ("blaschke: boundary modulus", blaschke_boundary_modulus),
        ("blaschke: derivative vs centered difference", blaschke_derivative_matches_difference),
        ("blaschke: pseudo-distance metric", blaschke_pseudo_distance_metric),
        ("blaschke: beta_hat stable in N", blaschke_beta_stable),
        ("continuity: scale margins", continuity_margins),
        ("continuity: cancellation and weight independence", continuity_cancellation_and_independence),
        ("continuity: times halve", continuity_times_halve),
        ("continuity: automorphism ratio", continuity_case2_ratio),
    ]
}
