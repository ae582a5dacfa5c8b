use rand::Rng;
use rand_chacha::ChaCha8Rng;
use semiflow_core::analytic::AnalyticFn;
use semiflow_core::blaschke::{gpv_bound_check, BlaschkeProduct, GPV_SAMPLE_RADII};
use semiflow_core::cocycle::{
    coboundary_similarity_check, default_t_ladder, transfer_conjugation_check, WeightedSemigroup,
};
use semiflow_core::continuity::{bloch_gap, construct_case1, construct_case2, separability_witness, ANGLE_TOL};
use semiflow_core::flow::ConformalMap;
use semiflow_core::{Complex64, Error};

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::Run;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type CmdResult = Result<(), RunError>;

const DEFAULT_H_LADDER: [f64; 3] = [4e-3, 2e-3, 1e-3];

fn random_point(rng: &mut ChaCha8Rng, max_radius: f64) -> Complex64 {
    let r = max_radius * rng.random::<f64>().sqrt();
    Complex64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
}

struct Sample {
    z: Complex64,
    s: f64,
    t: f64,
}

fn samples(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, default_radius: f64) -> Vec<Sample> {
    let n = cfg.points.unwrap_or(50);
    let radius = cfg.max_radius.unwrap_or(default_radius);
    let t_max = cfg.max_time.unwrap_or(1.0);
    (0..n)
        .map(|_| {
            let z = random_point(rng, radius);
            let s = t_max * rng.random::<f64>();
            let t = t_max * rng.random::<f64>();
            Sample { z, s, t }
        })
        .collect()
}

fn worst(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

pub fn flow_trace(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let flow = cfg.flow()?;
    let z = cfg.z.ok_or_else(|| ConfigError("missing 'z'".into()))?;
    let t = cfg.t.ok_or_else(|| ConfigError("missing 't'".into()))?;
    let traj = flow.trajectory(z, t)?;
    run.table("trajectory.csv", &traj.to_csv())?;
    let inside = traj.samples.iter().all(|s| s.value.norm() < 1.0);
    run.check("orbit_stays_in_disc", inside, format!("{} samples", traj.samples.len()));
    Ok(())
}

pub fn flow_check(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, run: &mut Run) -> CmdResult {
    let flow = cfg.flow()?;
    let tol = &cfg.tolerances;
    let ladder = cfg.h_ladder.clone().unwrap_or(DEFAULT_H_LADDER.to_vec());
    let generator = flow.generator();
    let mut csv = String::from("z_re,z_im,s,t,semigroup_residual,generator_residual\n");
    let mut semigroup = Vec::new();
    let mut round_trip = Vec::new();
    for p in samples(cfg, rng, 0.8) {
        let a = flow.check_semigroup(p.z, p.s, p.t)?;
        let b = (flow.generator_fd(p.z, &ladder)? - generator.eval(p.z)?).norm();
        csv.push_str(&format!("{},{},{},{},{},{}\n", p.z.re, p.z.im, p.s, p.t, a, b));
        semigroup.push(a);
        round_trip.push(b);
    }
    run.table("flow_check.csv", &csv)?;
    let (a, b) = (worst(&semigroup), worst(&round_trip));
    run.check("semigroup_identity", a <= tol.quadrature, format!("max residual {a:e} (bound {:e})", tol.quadrature));
    run.check("generator_round_trip", b <= tol.fd, format!("max residual {b:e} (bound {:e})", tol.fd));
    Ok(())
}

fn semigroup(cfg: &ExperimentConfig) -> Result<WeightedSemigroup, RunError> {
    Ok(WeightedSemigroup::new(cfg.flow()?, cfg.weight_or_zero()))
}

pub fn cocycle_check(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, run: &mut Run) -> CmdResult {
    let wsg = semigroup(cfg)?;
    let tol = &cfg.tolerances;
    let ladder = cfg.h_ladder.clone().unwrap_or(DEFAULT_H_LADDER.to_vec());
    let g = wsg.weight_generator();
    let mut csv = String::from("z_re,z_im,s,t,identity_residual,weight_residual\n");
    let mut identity = Vec::new();
    let mut round_trip = Vec::new();
    for p in samples(cfg, rng, 0.8) {
        let a = wsg.check_cocycle_identity(p.z, p.s, p.t)?;
        let b = (wsg.weight_generator_fd(p.z, &ladder)? - g.eval(p.z)?).norm();
        csv.push_str(&format!("{},{},{},{},{},{}\n", p.z.re, p.z.im, p.s, p.t, a, b));
        identity.push(a);
        round_trip.push(b);
    }
    run.table("cocycle_check.csv", &csv)?;
    let (a, b) = (worst(&identity), worst(&round_trip));
    run.check("cocycle_identity", a <= tol.quadrature, format!("max residual {a:e} (bound {:e})", tol.quadrature));
    run.check("weight_round_trip", b <= tol.fd, format!("max residual {b:e} (bound {:e})", tol.fd));
    Ok(())
}

pub fn generator_check(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let wsg = semigroup(cfg)?;
    let f = cfg.function()?;
    let ladder = cfg.t_ladder.clone().unwrap_or_else(|| default_t_ladder(7));
    let norm = cfg.norm.clone().unwrap_or_default();
    let table = wsg.generator_consistency(&f, &norm, &ladder)?;
    run.table("consistency.csv", &table.to_csv())?;
    let last = table.rows.last().map(|r| r.residual).unwrap_or(0.0);
    run.check("first_order_decay", table.passes(), format!("final residual {last:e}"));
    Ok(())
}

pub fn coboundary_check(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, run: &mut Run) -> CmdResult {
    let flow = cfg.flow()?;
    let alpha = cfg.alpha.clone().ok_or_else(|| ConfigError("missing 'alpha'".into()))?;
    let f = cfg.function.clone().unwrap_or_else(AnalyticFn::identity);
    let tol = cfg.tolerances.algebraic;
    let mut csv = String::from("z_re,z_im,t,residual\n");
    let mut residuals = Vec::new();
    for p in samples(cfg, rng, 0.8) {
        let r = coboundary_similarity_check(&alpha, &flow, &f, p.z, p.t)?;
        csv.push_str(&format!("{},{},{},{}\n", p.z.re, p.z.im, p.t, r));
        residuals.push(r);
    }
    run.table("coboundary_check.csv", &csv)?;
    let w = worst(&residuals);
    run.check("similarity_identity", w <= tol, format!("max residual {w:e} (bound {tol:e})"));
    Ok(())
}

pub fn transfer_check(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng, run: &mut Run) -> CmdResult {
    let wsg = semigroup(cfg)?;
    let h = cfg.conformal.clone().unwrap_or_else(ConformalMap::cayley);
    let f = cfg.function.clone().unwrap_or_else(AnalyticFn::identity);
    let tol = cfg.tolerances.quadrature;
    let mut csv = String::from("z_re,z_im,t,residual\n");
    let mut residuals = Vec::new();
    for p in samples(cfg, rng, 0.8) {
        let r = transfer_conjugation_check(&h, &wsg, &f, p.z, p.t)?;
        csv.push_str(&format!("{},{},{},{}\n", p.z.re, p.z.im, p.t, r));
        residuals.push(r);
    }
    run.table("transfer_check.csv", &csv)?;
    let w = worst(&residuals);
    run.check("conjugation_identity", w <= tol, format!("max residual {w:e} (bound {tol:e})"));
    Ok(())
}

fn blaschke_or_geometric(cfg: &ExperimentConfig, n: usize) -> BlaschkeProduct {
    cfg.blaschke.clone().unwrap_or_else(|| BlaschkeProduct::geometric_truncation(n))
}

pub fn gpv(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let b = blaschke_or_geometric(cfg, cfg.levels.unwrap_or(12));
    let marked = cfg.marked.clone().unwrap_or_else(|| (0..b.zeros().len()).collect());
    let alpha = cfg.disc_radius.unwrap_or(0.1);
    let report = gpv_bound_check(&b, &marked, alpha, cfg.samples_per_disc.unwrap_or(16))?;
    let mut csv = String::from("index,zero_re,zero_im,deflated,beta\n");
    for row in &report.per_zero {
        csv.push_str(&format!("{},{},{},{},{}\n", row.index, row.zero.re, row.zero.im, row.deflated, row.beta));
    }
    run.table("gpv.csv", &csv)?;
    run.check("interpolating", report.delta > 0.0, format!("delta {:e}", report.delta));
    run.check("discs_disjoint", report.disjoint, format!("min separation {:?}", report.min_separation));
    run.check(
        "derivative_bound",
        report.beta_hat > 0.0,
        format!("beta_hat {:e} over {} radii", report.beta_hat, GPV_SAMPLE_RADII),
    );
    Ok(())
}

pub fn bloch_gap_case1(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let wsg = semigroup(cfg)?;
    let gamma0 = cfg.gamma0.unwrap_or(Complex64::new(1.0, 0.0));
    let gc = construct_case1(wsg.flow(), gamma0, cfg.levels.unwrap_or(6), cfg.t_start.unwrap_or(0.5))?;
    let report = bloch_gap(&gc, &wsg, &cfg.grid_or_default())?;
    run.table("bloch_gap.csv", &report.to_csv())?;
    let mut margins = String::from("n,first_margin,second_margin\n");
    for (p, (a, b)) in gc.pairs.iter().zip(gc.margins()) {
        margins.push_str(&format!("{},{},{}\n", p.n, a, b.map(|b| b.to_string()).unwrap_or_default()));
    }
    run.table("margins.csv", &margins)?;
    run.check("construction_invariants", gc.verify(), format!("{} levels", gc.pairs.len()));
    run.check("delta_hat_positive", report.delta_hat > 0.0, format!("delta_hat {:e}", report.delta_hat));
    run.check("gap_dominates_bound", report.gap_dominates_bound(), "grid gap >= certified bound - slack");
    run.check("double_zero_cancellation", report.cancellation_holds(), "residual <= 1e-8 * scale");
    Ok(())
}

pub fn bloch_gap_case2(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let wsg = semigroup(cfg)?;
    let gc = construct_case2(wsg.flow(), cfg.levels.unwrap_or(6), cfg.gamma0)?;
    let angles = gc.angles.clone().expect("automorphism constructions carry angle diagnostics");
    let mut csv = String::from("n,r_n,t_n,w_re,w_im,angle_residual,ratio,stolz\n");
    for (p, a) in gc.pairs.iter().zip(&angles.rows) {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.n, p.r, p.t, p.w.re, p.w.im, a.angle_residual, a.ratio, a.stolz
        ));
    }
    run.table("angles.csv", &csv)?;
    let report = bloch_gap(&gc, &wsg, &cfg.grid_or_default())?;
    run.table("bloch_gap.csv", &report.to_csv())?;
    let angle = angles.rows.iter().map(|r| r.angle_residual).fold(0.0, f64::max);
    run.check("angle_equation", angle <= ANGLE_TOL, format!("max residual {angle:e}"));
    let ratios_ok = angles.rows.iter().filter(|r| r.n >= 4).all(|r| (0.8..=1.2).contains(&r.ratio));
    run.check("ratio_near_one", ratios_ok, "(1 - Re w_n) 2^n in [0.8, 1.2] for n >= 4");
    run.check(
        "separated",
        angles.min_separation >= 0.1,
        format!("min pseudo-distance {}", angles.min_separation),
    );
    run.check("construction_invariants", gc.verify(), format!("gamma0 = {}", gc.gamma0));
    run.check("delta_hat_positive", report.delta_hat > 0.0, format!("delta_hat {:e}", report.delta_hat));
    run.check("double_zero_cancellation", report.cancellation_holds(), "residual <= 1e-8 * scale");
    Ok(())
}

pub fn separability(cfg: &ExperimentConfig, run: &mut Run) -> CmdResult {
    let b = blaschke_or_geometric(cfg, cfg.levels.unwrap_or(10));
    let rotations = cfg
        .rotations
        .clone()
        .unwrap_or_else(|| (0..8).map(|k| std::f64::consts::TAU * k as f64 / 8.0).collect());
    let report = separability_witness(&b, &rotations, &cfg.grid_or_default())?;
    run.table("separability.csv", &report.to_csv())?;
    run.check("uniformly_separated", report.passes(), format!("epsilon_hat {:?}", report.epsilon_hat));
    Ok(())
}
