//! The registered verification checks, grouped by suite.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blender::{calibrate_l, compute_m_r, compute_m_r_with, Axiom, Blender};
use crate::chart::{
    alpha_eval, contact_field_residual, contact_vector_field, contact_volume, d_alpha_eval, kernel_basis,
    kernel_residual, reeb_field, verify_strict_contact, ChartParams, ChartPoint, FnField, Tangent,
};
use crate::cones::{check_contraction, Axes, ConeField, Metric};
use crate::config::{RunConfig, Suite};
use crate::embeddings::{cosphere_chain_identity, disk_neighborhood_identity, disk_samples, CosphereParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flows::Flow;
use crate::holonomy::Holonomy;
use crate::model::{Manifold, Model, ModelParams};
use crate::report::CheckRecord;
use crate::suspension::{
    map_kernel_residual, suspension_transitivity_bridge, AnalyticDeformation, ChartIdentity, ChartModel,
    CircleRotation, Deformation, FnDeformation, Scaled, Suspension, Zero,
};
use crate::transitivity::{
    build_transition_graph, dividing_obstruction, is_mixing, is_transitive, mixing_under_refinement, Answer,
    BoxPartition, Dividing,
};
use crate::verdict::Verdict;

/// m_r of the default model, regression fixtures.
pub const M_R_FIXTURES: [(f64, usize); 4] = [(0.1, 30), (0.05, 93), (0.02, 356), (0.01, 911)];

/// Shared state for one run.
pub struct Ctx {
    pub cfg: RunConfig,
    pub model: Model,
    pub exec: Exec,
}

impl Ctx {
    pub fn new(cfg: RunConfig, exec: Exec) -> Result<Self> {
        let model = cfg.model()?;
        Ok(Ctx { cfg, model, exec })
    }

    /// Generator seeded from the run seed, the check name and r.
    fn rng(&self, name: &str, r: Option<f64>) -> ChaCha8Rng {
        // FNV-1a keeps the stream independent of std's hasher
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        let rb = r.map(f64::to_bits).unwrap_or(0);
        ChaCha8Rng::seed_from_u64(self.cfg.run.seed ^ h ^ rb.rotate_left(17))
    }

    fn blender(&self, r: f64) -> Result<Blender> {
        let mut opts = self.cfg.verify_options();
        opts.exec = self.exec;
        Blender::new(self.model.clone(), r, opts)
    }

    fn samples(&self, div: usize) -> usize {
        (self.cfg.run.samples / div).max(10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scope {
    Once,
    PerR,
    /// Per r at or below the bound.
    PerRUpTo(f64),
}

pub type CheckFn = fn(&Ctx, Option<f64>) -> Result<Vec<CheckRecord>>;

pub struct CheckSpec {
    pub suite: Suite,
    pub name: &'static str,
    pub anchor: &'static str,
    pub scope: Scope,
    pub run: CheckFn,
}

const fn entry(suite: Suite, name: &'static str, anchor: &'static str, scope: Scope, run: CheckFn) -> CheckSpec {
    CheckSpec {
        suite,
        name,
        anchor,
        scope,
        run,
    }
}

pub static REGISTRY: &[CheckSpec] = &[
    entry(Suite::Chart, "chart.contact_form", "standard-chart", Scope::Once, chart_contact_form),
    entry(Suite::Chart, "chart.reeb_field", "reeb-field", Scope::Once, chart_reeb_field),
    entry(Suite::Chart, "chart.base_map_strict", "base-map", Scope::Once, chart_base_map),
    entry(Suite::Chart, "chart.return_map_strict", "return-map", Scope::Once, chart_return_map),
    entry(Suite::Chart, "chart.affine_factors_strict", "return-map-factors", Scope::Once, chart_affine_factors),
    entry(Suite::Chart, "chart.contact_vector_field", "contact-vector-field", Scope::Once, chart_contact_field),
    entry(Suite::Flows, "flows.closed_form", "hamiltonian-flow", Scope::Once, flows_closed_form),
    entry(Suite::Flows, "flows.conformal", "conformal-factor", Scope::Once, flows_conformal),
    entry(Suite::Flows, "flows.step_halving", "hamiltonian-flow", Scope::Once, flows_step_halving),
    entry(Suite::Model, "model.fixed_points", "fixed-points", Scope::PerR, model_fixed_points),
    entry(Suite::Model, "model.invariant_manifolds", "invariant-manifolds", Scope::PerR, model_manifolds),
    entry(Suite::Model, "model.psi_kernel", "perturbed-family", Scope::PerR, model_psi_kernel),
    entry(Suite::Model, "model.coordinate_contraction", "coordinate-contraction", Scope::PerR, model_contraction),
    entry(Suite::Model, "model.m_r", "m-r-growth", Scope::Once, model_m_r),
    entry(Suite::Cones, "cones.cone_fields", "cone-fields", Scope::PerR, cones_fields),
    entry(Suite::Cones, "cones.center_drift", "center-drift", Scope::PerR, cones_center_drift),
    entry(Suite::Blender, "blender.axiom", "blender-axioms", Scope::PerR, blender_axioms),
    entry(Suite::Blender, "blender.distinctive", "distinctive-property", Scope::PerR, blender_distinctive),
    entry(Suite::Holonomy, "holonomy.heteroclinic_identity", "holonomy-heteroclinic", Scope::PerRUpTo(0.05), holonomy_heteroclinic),
    entry(Suite::Holonomy, "holonomy.estimates", "holonomy-estimates", Scope::PerRUpTo(0.05), holonomy_estimates),
    entry(Suite::Holonomy, "holonomy.holder", "holder-holonomy", Scope::PerRUpTo(0.05), holonomy_holder),
    entry(Suite::Suspension, "suspension.identity_field", "characteristic-field", Scope::Once, susp_identity_field),
    entry(Suite::Suspension, "suspension.residuals", "characteristic-field", Scope::Once, susp_residuals),
    entry(Suite::Suspension, "suspension.return_kernel", "return-map-contact", Scope::Once, susp_return_kernel),
    entry(Suite::Suspension, "suspension.c1_scaling", "c1-closeness", Scope::Once, susp_c1_scaling),
    entry(Suite::Suspension, "suspension.bridge", "suspension-transitivity", Scope::Once, susp_bridge),
    entry(Suite::Transitivity, "transitivity.cat_map", "transitivity-detection", Scope::Once, trans_cat),
    entry(Suite::Transitivity, "transitivity.identity", "transitivity-detection", Scope::Once, trans_identity),
    entry(Suite::Transitivity, "transitivity.quarter_rotation", "transitivity-detection", Scope::Once, trans_quarter),
    entry(Suite::Transitivity, "transitivity.golden_rotation", "transitivity-detection", Scope::Once, trans_golden),
    entry(Suite::Transitivity, "transitivity.dividing_set", "dividing-set", Scope::Once, trans_dividing),
    entry(Suite::Embeddings, "embeddings.disk", "disk-neighborhood", Scope::Once, emb_disk),
    entry(Suite::Embeddings, "embeddings.cosphere", "cosphere-neighborhood", Scope::Once, emb_cosphere),
];

pub fn find(name: &str) -> Option<&'static CheckSpec> {
    REGISTRY.iter().find(|s| s.name == name)
}

/// Runs a registered check directly, outside a full report.
pub fn run_check(ctx: &Ctx, name: &str, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let spec = find(name).ok_or_else(|| Error::config("run.suites", format!("unknown check {name}")))?;
    (spec.run)(ctx, r)
}

fn record(name: &str, r: Option<f64>) -> CheckRecord {
    let anchor = find(name).map(|s| s.anchor).unwrap_or("");
    CheckRecord::new(name, anchor).at(r)
}

fn need_r(r: Option<f64>) -> Result<f64> {
    r.ok_or_else(|| Error::Precondition("check needs a value of r".into()))
}

fn pt(s: f64, t: f64, u: f64) -> ChartPoint {
    ChartPoint::new(vec![s], t, vec![u])
}

fn unit_tangent(rng: &mut ChaCha8Rng) -> Tangent {
    Tangent::new(vec![rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0), vec![rng.gen_range(-1.0..1.0)])
}

/// Uniform point of the chart with |u| below `u_max`.
fn chart_point(rng: &mut ChaCha8Rng, chart: &ChartParams, u_max: f64) -> ChartPoint {
    let (t0, t1) = chart.t_range();
    pt(
        rng.gen_range(-chart.s_halfwidth..chart.s_halfwidth),
        rng.gen_range(t0..t1),
        rng.gen_range(-u_max..u_max),
    )
}

fn needs_n1(ctx: &Ctx) -> Result<()> {
    if ctx.model.n() != 1 {
        return Err(Error::Precondition("check implemented for n = 1".into()));
    }
    Ok(())
}

/// A chart large enough to hold every affine factor's images.
fn wide_chart(chart: &ChartParams) -> ChartParams {
    ChartParams {
        eps_u: 1e3,
        s_halfwidth: 1e3,
        delta: 10.0,
        ..chart.clone()
    }
}

// ---------------------------------------------------------------- chart

fn chart_contact_form(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let c = &ctx.model.chart;
    let (t0, t1) = c.t_range();
    let k = 11;
    let mut min_vol = f64::INFINITY;
    let n = c.n;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let f = |a: usize| a as f64 / (k - 1) as f64;
                let p = ChartPoint::new(
                    vec![-c.s_halfwidth + 2.0 * c.s_halfwidth * f(i); n],
                    t0 + (t1 - t0) * f(j),
                    vec![-c.eps_u + 2.0 * c.eps_u * f(l); n],
                );
                min_vol = min_vol.min(contact_volume(&p).abs());
            }
        }
    }
    Ok(vec![record("chart.contact_form", r)
        .pass_if(min_vol > 0.0)
        .margin(min_vol)
        .detail("min_abs_volume", min_vol)
        .detail("grid_points", (k * k * k) as f64)])
}

fn chart_reeb_field(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let c = &ctx.model.chart;
    let mut rng = ctx.rng("chart.reeb_field", r);
    let n = c.n;
    let mut worst: f64 = 0.0;
    let count = ctx.samples(10);
    for _ in 0..count {
        let p = ChartPoint::new(
            (0..n).map(|_| rng.gen_range(-c.s_halfwidth..c.s_halfwidth)).collect(),
            rng.gen_range(c.t_range().0..c.t_range().1),
            (0..n).map(|_| rng.gen_range(-c.eps_u..c.eps_u)).collect(),
        );
        let rv = reeb_field(&p);
        worst = worst.max((alpha_eval(&p, &rv) - 1.0).abs());
        for i in 0..2 * n + 1 {
            let mut e = vec![0.0; 2 * n + 1];
            e[i] = 1.0;
            worst = worst.max(d_alpha_eval(&rv, &Tangent::from_slice(n, &e)).abs());
        }
    }
    let tol = ctx.cfg.tolerances.contact;
    Ok(vec![record("chart.reeb_field", r)
        .pass_if(worst <= tol)
        .margin(tol - worst)
        .detail("max_residual", worst)
        .detail("samples", count as f64)])
}

fn chart_base_map(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let m = &ctx.model;
    let mut rng = ctx.rng("chart.base_map_strict", r);
    let u_max = m.params.lambda * m.chart.eps_u;
    let samples: Vec<_> = (0..ctx.cfg.run.samples)
        .map(|_| (chart_point(&mut rng, &m.chart, u_max), unit_tangent(&mut rng)))
        .collect();
    let jac = m.phi_base_jacobian(1);
    let tol = ctx.cfg.tolerances.contact;
    let chk = verify_strict_contact(&|p| m.phi_base(p), &|_| jac.clone(), &samples, tol, &m.chart)?;
    Ok(vec![record("chart.base_map_strict", r)
        .pass_if(chk.ok)
        .margin(tol - chk.max_residual)
        .detail("max_residual", chk.max_residual)
        .detail("samples", samples.len() as f64)
        .witness(samples[chk.worst_index].0.to_vec())])
}

/// Points of the return window whose χ-images stay in `wide_chart`.
fn window_samples(ctx: &Ctx, rng: &mut ChaCha8Rng, count: usize) -> Vec<(ChartPoint, Tangent)> {
    let m = &ctx.model;
    let p = &m.params;
    let l = m.chart.l;
    let du = 0.5 * p.lambda.powi(p.k0) * m.chart.eps_u;
    (0..count)
        .map(|_| {
            let q = pt(
                rng.gen_range(-p.w_rad..p.w_rad),
                rng.gen_range(l - p.w_rad..l + p.w_rad.min(m.chart.delta)),
                p.x_u + rng.gen_range(-du..du),
            );
            (q, unit_tangent(rng))
        })
        .collect()
}

fn chart_return_map(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let m = &ctx.model;
    let mut rng = ctx.rng("chart.return_map_strict", r);
    let samples = window_samples(ctx, &mut rng, ctx.cfg.run.samples);
    let jac = m.chi_jacobian(1);
    let tol = ctx.cfg.tolerances.contact;
    let chk = verify_strict_contact(&|p| m.chi(p), &|_| jac.clone(), &samples, tol, &wide_chart(&m.chart))?;
    Ok(vec![record("chart.return_map_strict", r)
        .pass_if(chk.ok)
        .margin(tol - chk.max_residual)
        .detail("max_residual", chk.max_residual)
        .detail("samples", samples.len() as f64)])
}

type Affine = (&'static str, Box<dyn Fn(&ChartPoint) -> ChartPoint + Sync>, DMatrix<f64>);

/// χ = Reeb shift ∘ shear ∘ hyperbolic scaling ∘ u-translation.
fn affine_factors(m: &Model) -> Vec<Affine> {
    let p = m.params.clone();
    let (x_u, lam, k0, l) = (p.x_u, p.lambda, p.k0, m.chart.l);
    let c = lam.powi(k0);
    let mut hyp = DMatrix::identity(3, 3);
    hyp[(0, 0)] = c;
    hyp[(2, 2)] = 1.0 / c;
    let mut shear = DMatrix::identity(3, 3);
    shear[(1, 2)] = 1.0;
    vec![
        ("u_translation", Box::new(move |q: &ChartPoint| pt(q.s[0], q.t, q.u[0] - x_u)), DMatrix::identity(3, 3)),
        ("hyperbolic_scaling", Box::new(move |q: &ChartPoint| pt(c * q.s[0], q.t, q.u[0] / c)), hyp),
        ("shear", Box::new(|q: &ChartPoint| pt(q.s[0] + 1.0, q.t + q.u[0], q.u[0])), shear),
        ("reeb_shift", Box::new(move |q: &ChartPoint| pt(q.s[0], q.t - l, q.u[0])), DMatrix::identity(3, 3)),
    ]
}

fn chart_affine_factors(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let m = &ctx.model;
    let mut rng = ctx.rng("chart.affine_factors_strict", r);
    let samples = window_samples(ctx, &mut rng, ctx.cfg.run.samples);
    let dom = wide_chart(&m.chart);
    let tol = ctx.cfg.tolerances.contact;
    let mut rec = record("chart.affine_factors_strict", r);
    let mut worst: f64 = 0.0;
    let mut cur = samples.clone();
    for (name, map, jac) in affine_factors(m) {
        let chk = verify_strict_contact(&|q| map(q), &|_| jac.clone(), &cur, tol, &dom)?;
        rec = rec.detail(&format!("{name}_residual"), chk.max_residual);
        worst = worst.max(chk.max_residual);
        cur = cur.iter().map(|(q, v)| (map(q), v.push(&jac))).collect();
    }
    let comp_err = samples
        .iter()
        .zip(&cur)
        .map(|((q, _), (img, _))| img.dist(&m.chi(q)) / (1.0 + img.to_vec().iter().fold(0.0f64, |a, x| a.max(x.abs()))))
        .fold(0.0, f64::max);
    let ok = worst <= tol && comp_err <= 1e-12;
    Ok(vec![rec
        .pass_if(ok)
        .margin((tol - worst).min(1e-12 - comp_err))
        .detail("max_residual", worst)
        .detail("composition_error", comp_err)])
}

fn chart_contact_field(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let mut rng = ctx.rng("chart.contact_vector_field", r);
    let c = &ctx.model.chart;
    let mut worst: f64 = 0.0;
    let mut alpha_err: f64 = 0.0;
    let count = ctx.samples(10);
    for _ in 0..20 {
        let k: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k2 = k.clone();
        let value = move |p: &ChartPoint| {
            let (s, t, u) = (p.s[0], p.t, p.u[0]);
            k[0] + k[1] * s + k[2] * t + k[3] * u + k[4] * s * s + k[5] * t * t + k[6] * u * u + k[7] * s * t + k[8] * t * u + k[9] * s * u
        };
        let grad = move |p: &ChartPoint| {
            let (s, t, u) = (p.s[0], p.t, p.u[0]);
            let k = &k2;
            Tangent::new(
                vec![k[1] + 2.0 * k[4] * s + k[7] * t + k[9] * u],
                k[2] + 2.0 * k[5] * t + k[7] * s + k[8] * u,
                vec![k[3] + 2.0 * k[6] * u + k[8] * t + k[9] * s],
            )
        };
        let h = FnField(value, grad);
        for _ in 0..count / 20 {
            let p = chart_point(&mut rng, c, c.eps_u);
            let v = contact_vector_field(&h, &p)?;
            worst = worst.max(contact_field_residual(&h, &p, &v));
            alpha_err = alpha_err.max((alpha_eval(&p, &v) - (h.0)(&p)).abs());
        }
    }
    let tol = 1e-9;
    let err = worst.max(alpha_err);
    Ok(vec![record("chart.contact_vector_field", r)
        .pass_if(err <= tol)
        .margin(tol - err)
        .detail("max_residual", worst)
        .detail("alpha_residual", alpha_err)])
}

// ---------------------------------------------------------------- flows

/// RK4 against e^r t below L/3 and L + (t − L)e^{−r} above 2L/3, on a
/// 100 × 100 grid per range.
fn flows_closed_form(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let flow = &ctx.model.flow;
    let l = ctx.model.chart.l;
    let r_max = ctx.model.params.r_max;
    let k = 100;
    let rs: Vec<f64> = (0..k).map(|i| r_max * (i + 1) as f64 / k as f64).collect();
    let run = |lower: bool| -> (f64, f64) {
        let rows = ctx.exec.map(&rs, |&rr| {
            let mut worst: (f64, f64) = (0.0, 0.0);
            for j in 0..k {
                let frac = (j as f64 + 0.5) / k as f64;
                let (t, psi, f) = if lower {
                    let t = (l / 3.0) * (-r_max).exp() * frac;
                    (t, rr.exp() * t, rr.exp())
                } else {
                    let t = l - (l / 3.0) * frac;
                    (t, l + (t - l) * (-rr).exp(), (-rr).exp())
                };
                let st = flow.integrate_rk4(rr, t);
                worst.0 = worst.0.max((st.psi - psi).abs());
                worst.1 = worst.1.max((st.f() - f).abs());
            }
            worst
        });
        rows.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
    };
    let (lo_psi, lo_f) = run(true);
    let (hi_psi, hi_f) = run(false);
    let err = lo_psi.max(lo_f).max(hi_psi).max(hi_f);
    let tol = ctx.cfg.tolerances.flow;
    Ok(vec![record("flows.closed_form", r)
        .pass_if(err <= tol)
        .margin(tol - err)
        .detail("lower_psi_error", lo_psi)
        .detail("lower_f_error", lo_f)
        .detail("upper_psi_error", hi_psi)
        .detail("upper_f_error", hi_f)
        .detail("grid_points", (2 * k * k) as f64)])
}

/// (Φ^H_r)^*α = f_r(t)·α on random points and tangents.
fn flows_conformal(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let m = &ctx.model;
    let mut rng = ctx.rng("flows.conformal", r);
    let (t0, t1) = m.chart.t_range();
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..ctx.samples(10) {
        let rr = rng.gen_range(0.0..m.params.r_max);
        let p = ChartPoint::new(
            (0..m.n()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            rng.gen_range(t0.max(0.0)..t1.min(m.chart.l)),
            (0..m.n()).map(|_| rng.gen_range(-m.chart.eps_u..m.chart.eps_u)).collect(),
        );
        let v = Tangent::new(
            (0..m.n()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            rng.gen_range(-1.0..1.0),
            (0..m.n()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let Ok((img, jac)) = m.flow.phi_h_jacobian(rr, &p) else {
            continue;
        };
        let f = m.flow.f_factor(rr, p.t)?;
        let res = (alpha_eval(&img, &v.push(&jac)) - f * alpha_eval(&p, &v)).abs() / (1.0 + v.norm());
        worst = worst.max(res);
        used += 1;
    }
    let tol = ctx.cfg.tolerances.flow;
    Ok(vec![record("flows.conformal", r)
        .pass_if(used > 0 && worst <= tol)
        .margin(tol - worst)
        .detail("max_residual", worst)
        .detail("samples", used as f64)])
}

/// RK4 at the configured step and at half of it against the quadrature
/// solution in the middle range.
fn flows_step_halving(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let m = &ctx.model;
    let l = m.chart.l;
    let h = m.flow.step;
    let coarse = Flow::with_step(&m.chart, m.params.blend, 4.0 * h);
    let fine = Flow::with_step(&m.chart, m.params.blend, 2.0 * h);
    let (mut e_coarse, mut e_fine): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let t = l * (0.4 + 0.02 * i as f64);
        for j in 1..=5 {
            let rr = 0.02 * j as f64;
            let exact = m.flow.state(rr, t)?;
            e_coarse = e_coarse.max((coarse.integrate_rk4(rr, t).psi - exact.psi).abs());
            e_fine = e_fine.max((fine.integrate_rk4(rr, t).psi - exact.psi).abs());
        }
    }
    let tol = ctx.cfg.tolerances.flow;
    // the fine error may already sit at the quadrature floor
    let converging = e_fine <= e_coarse || e_fine <= 1e-13;
    Ok(vec![record("flows.step_halving", r)
        .pass_if(e_fine <= tol && e_coarse <= tol && converging)
        .margin(tol - e_coarse.max(e_fine))
        .detail("error_step", e_coarse)
        .detail("error_half_step", e_fine)
        .detail("step", 4.0 * h)])
}

// ---------------------------------------------------------------- model

fn model_fixed_points(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let m = &ctx.model;
    let (q, _, _) = m.psi_r(&m.chart.q(), r);
    let (p, _, _) = m.psi_r(&m.chart.p(), r);
    let dq = q.dist(&m.chart.q());
    let dp = p.dist(&m.chart.p());
    let dims = m.stable_dimensions(r)?;
    let n = m.n();
    Ok(vec![record("model.fixed_points", Some(r))
        .pass_if(dq == 0.0 && dp == 0.0 && dims == (n, 2 * n))
        .margin(0.0 - dq.max(dp))
        .detail("q_displacement", dq)
        .detail("p_displacement", dp)
        .detail("stable_dim_q", dims.0 as f64)
        .detail("stable_dim_p", dims.1 as f64)])
}

fn model_manifolds(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let mut rec = record("model.invariant_manifolds", Some(r));
    let mut worst: f64 = 0.0;
    for which in [Manifold::StableQ, Manifold::UnstableQ, Manifold::StableP, Manifold::UnstableP] {
        let c = ctx.model.invariant_manifold(which, r)?;
        rec = rec.detail(&format!("{which:?}_steps"), c.max_steps as f64);
        worst = worst.max(c.final_distance);
    }
    Ok(vec![rec.pass_if(worst <= 1e-9).margin(1e-9 - worst).detail("final_distance", worst)])
}

/// Sample box for the r-family: the chart with |u| ≤ 0.08, s ∈ [−3, 3].
fn family_point(rng: &mut ChaCha8Rng, m: &Model) -> ChartPoint {
    let (t0, t1) = m.chart.t_range();
    let u = 0.08f64.min(m.chart.eps_u);
    pt(
        rng.gen_range(-m.chart.s_halfwidth..m.chart.s_halfwidth),
        rng.gen_range(t0 + 0.03 * (t1 - t0)..t1 - 0.03 * (t1 - t0)),
        rng.gen_range(-u..u),
    )
}

fn model_psi_kernel(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let r = need_r(r)?;
    let m = &ctx.model;
    let mut rng = ctx.rng("model.psi_kernel", Some(r));
    let pts: Vec<ChartPoint> = (0..ctx.samples(10)).map(|_| family_point(&mut rng, m)).collect();
    let rows = ctx.exec.map(&pts, |p| {
        m.step_jacobian(p, r).ok().map(|(img, j)| {
            let scale = kernel_basis(p).iter().map(|w| w.push(&j).norm()).fold(1.0, f64::max);
            kernel_residual(&img, p, &j) / scale
        })
    });
    let used: Vec<f64> = rows.iter().flatten().copied().collect();
    let worst = used.iter().copied().fold(0.0, f64::max);
    let tol = ctx.cfg.tolerances.flow;
    Ok(vec![record("model.psi_kernel", Some(r))
        .pass_if(!used.is_empty() && worst <= tol)
        .margin(tol - worst)
        .detail("max_relative_residual", worst)
        .detail("samples", used.len() as f64)
        .detail("left_chart", (rows.len() - used.len()) as f64)])
}

/// μ|s'| < |s| and μ|u| < |u'| for chart steps off the return window, with
/// μ lowered by one part in 10⁶ to absorb rounding at the exact rate.
fn model_contraction(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let r = need_r(r)?;
    let m = &ctx.model;
    let mu = m.params.mu * (1.0 - 1e-6);
    let mut rng = ctx.rng("model.coordinate_contraction", Some(r));
    let pts: Vec<ChartPoint> = (0..ctx.cfg.run.samples)
        .map(|_| family_point(&mut rng, m))
        .filter(|p| !m.in_window(p) && p.s[0] != 0.0 && p.u[0] != 0.0)
        .collect();
    let rows = ctx.exec.map(&pts, |p| {
        m.chart_step(p, r).ok().map(|img| {
            let s_slack = 1.0 - mu * img.s[0].abs() / p.s[0].abs();
            let u_slack = 1.0 - mu * p.u[0].abs() / img.u[0].abs();
            s_slack.min(u_slack)
        })
    });
    let (mut worst, mut worst_i) = (f64::INFINITY, 0);
    let mut used = 0;
    for (i, s) in rows.iter().enumerate() {
        if let Some(s) = s {
            used += 1;
            if *s < worst {
                worst = *s;
                worst_i = i;
            }
        }
    }
    let ok = used > 0 && worst > 0.0;
    let mut rec = record("model.coordinate_contraction", Some(r))
        .pass_if(ok)
        .margin(worst)
        .detail("min_relative_slack", worst)
        .detail("samples", used as f64);
    if !ok && !pts.is_empty() {
        rec = rec.witness(pts[worst_i].to_vec());
    }
    Ok(vec![rec])
}

fn model_m_r(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let m = &ctx.model;
    let mut rs: Vec<f64> = ctx.cfg.run.r.clone();
    if !rs.contains(&0.01) && 0.01 <= m.params.r_max {
        rs.push(0.01);
    }
    rs.sort_by(|a, b| b.total_cmp(a));
    let half = Flow::with_step(&m.chart, m.params.blend, 0.5 * m.flow.step);
    let n = m.params.n_iter as f64;
    let mut rec = record("model.m_r", r);
    let mut ok = true;
    let mut margin = f64::INFINITY;
    let mut prev: Option<usize> = None;
    let default_model = m.chart == ChartParams::default() && m.params == ModelParams::default();
    for &rr in &rs {
        let mr = compute_m_r(m, rr)?;
        let mr_half = compute_m_r_with(&half, m.params.n_iter, m.chart.l, rr)?;
        let bound = 0.5 * (-rr.ln()) / (n * rr);
        rec = rec.detail(&format!("m_r@{rr}"), mr as f64);
        margin = margin.min(mr as f64 / bound - 1.0);
        ok &= mr as f64 >= bound && mr == mr_half && prev.is_none_or(|p| mr >= p);
        if default_model {
            if let Some(&(_, want)) = M_R_FIXTURES.iter().find(|(fr, _)| *fr == rr) {
                ok &= mr == want;
            }
        }
        prev = Some(mr);
    }
    calibrate_l(m)?;
    Ok(vec![rec.pass_if(ok).margin(margin)])
}

// ---------------------------------------------------------------- cones

/// The u-cone is forward invariant and the s-cone backward invariant under
/// chart steps off the return window.
fn cones_fields(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let r = need_r(r)?;
    let m = &ctx.model;
    let mut rng = ctx.rng("cones.cone_fields", Some(r));
    let pts: Vec<ChartPoint> = (0..ctx.samples(10))
        .map(|_| family_point(&mut rng, m))
        .filter(|p| {
            !m.in_window(p)
                && m.chart_step_jacobian(p, r).is_ok()
                && m.chart_step_inv(p, r).and_then(|q| m.chart_step_jacobian(&q, r)).is_ok()
        })
        .collect();
    let width = 0.5;
    let fwd = |p: &ChartPoint| m.chart_step_jacobian(p, r).map(|(_, j)| j);
    let bwd = |p: &ChartPoint| -> Result<DMatrix<f64>> {
        let q = m.chart_step_inv(p, r)?;
        let (_, j) = m.chart_step_jacobian(&q, r)?;
        j.try_inverse().ok_or_else(|| Error::Singular("chart step Jacobian".into()))
    };
    let cu = check_contraction(&fwd, &ConeField::new(Axes::U, width), &pts, 16)?;
    // backward steps couple dt into ds through s·∂f/∂t, so the s-cone is
    // measured with dt weighted up by the chart's s-extent
    let w_t = 10.0 * m.chart.s_halfwidth;
    let metric = Metric {
        w_t,
        ..Metric::EUCLIDEAN
    };
    let cs = check_contraction(&bwd, &ConeField::new(Axes::S, width).with_metric(metric), &pts, 16)?;
    let margin = cu.margin.min(cs.margin);
    Ok(vec![record("cones.cone_fields", Some(r))
        .pass_if(!pts.is_empty() && cu.contracted && cs.contracted)
        .margin(margin)
        .detail("unstable_margin", cu.margin)
        .detail("stable_margin", cs.margin)
        .detail("width", width)
        .detail("stable_metric_w_t", w_t)
        .detail("points", pts.len() as f64)])
}

/// ν ≥ r^{−1/2} and η ≤ r²μ^{−ln r/r} along the blender block orbits.
fn cones_center_drift(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let d = ctx.blender(r)?.center_drift_report()?;
    let ok = d.nu >= d.nu_target && d.eta <= d.eta_target;
    let margin = (d.nu / d.nu_target - 1.0).min(1.0 - d.eta / d.eta_target);
    let mut rec = record("cones.center_drift", Some(r))
        .pass_if(ok)
        .margin(margin)
        .detail("nu", d.nu)
        .detail("nu_target", d.nu_target)
        .detail("eta", d.eta)
        .detail("eta_target", d.eta_target)
        .detail("chart_deviation", d.chart_deviation)
        .detail("du", d.du);
    if !ok {
        rec = rec.note(format!("nu = {:.4} against r^(-1/2) = {:.4}", d.nu, d.nu_target));
    }
    Ok(vec![rec])
}

// ---------------------------------------------------------------- blender

fn blender_axioms(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let b = ctx.blender(r)?;
    let rep = b.verify_all();
    Ok(Axiom::ALL
        .iter()
        .map(|&ax| {
            let name = format!("blender.axiom_{}", ax.letter());
            match rep.entry(ax) {
                Some(e) => {
                    let mut rec = CheckRecord::new(&name, ax.slug())
                        .at(Some(r))
                        .verdict(e.verdict)
                        .margin(e.margin)
                        .detail("m_r", rep.m_r as f64)
                        .detail("samples", e.samples as f64);
                    for (k, v) in &e.details {
                        rec = rec.detail(k, *v);
                    }
                    if let Some(w) = &e.witness {
                        rec = rec.witness(w);
                    }
                    if let Some(n) = &e.note {
                        rec = rec.note(n.clone());
                    }
                    rec
                }
                None => CheckRecord::new(&name, ax.slug())
                    .at(Some(r))
                    .verdict(Verdict::Fail)
                    .note("axiom missing from report"),
            }
        })
        .collect())
}

/// Random vertical disks right of W stay vertical disks in the box; the
/// verdict must not change between 32 and 64 nodes per disk.
fn blender_distinctive(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let b = ctx.blender(r)?;
    let run = &ctx.cfg.run;
    let a = b.distinctive_property_test(run.distinctive_disks, run.distinctive_iterations, 32, run.seed);
    let c = b.distinctive_property_test(run.distinctive_disks, run.distinctive_iterations, 64, run.seed);
    let ok = a.verdict == Verdict::Pass && c.verdict == Verdict::Pass;
    let verdict = if a.verdict == c.verdict {
        Verdict::from_bool(ok)
    } else {
        Verdict::Inconclusive
    };
    let mut rec = record("blender.distinctive", Some(r))
        .verdict(verdict)
        .margin(a.pass_rate.min(c.pass_rate) - 1.0)
        .detail("pass_rate", a.pass_rate)
        .detail("pass_rate_k64", c.pass_rate)
        .detail("short_steps", a.short_steps as f64)
        .detail("long_steps", a.long_steps as f64)
        .detail("max_lipschitz", a.max_lipschitz)
        .detail("max_st_diameter", a.max_st_diameter);
    if let Some(f) = a.failures.first().or(c.failures.first()) {
        rec = rec.witness(f).note(f.reason.clone());
    }
    Ok(vec![rec])
}

// ---------------------------------------------------------------- holonomy

fn holonomy(ctx: &Ctx, r: f64) -> Result<Holonomy<'_>> {
    needs_n1(ctx)?;
    Holonomy::new(&ctx.model, r, ctx.cfg.holonomy)
}

/// The axis points (0, L − δ, 0) go to the heteroclinic points b(r − δ).
fn holonomy_heteroclinic(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let h = holonomy(ctx, r)?;
    let tol = ctx.cfg.tolerances.holonomy;
    let mut worst: f64 = 0.0;
    let mut rec = record("holonomy.heteroclinic_identity", Some(r));
    for (k, delta) in [0.0, r, 2.0 * r].into_iter().enumerate() {
        let e = h.certify_heteroclinic(delta)?;
        rec = rec.detail(&format!("error_delta_{k}r"), e);
        worst = worst.max(e);
    }
    Ok(vec![rec.pass_if(worst <= tol).margin(tol - worst).detail("max_error", worst)])
}

fn source_point(rng: &mut ChaCha8Rng, h: &Holonomy, l: f64) -> ChartPoint {
    let sr = h.source_radius();
    pt(rng.gen_range(-sr..sr), rng.gen_range(l - 2.0 * h.r..l), 0.0)
}

/// |s − 1| ≤ μ^{−m_r} and |t − (r + t_x − L)| ≤ μ^{−m_r} on the image.
fn holonomy_estimates(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let h = holonomy(ctx, r)?;
    let l = ctx.model.chart.l;
    let bound = ctx.model.params.mu.powi(-(h.bx.m_r as i32));
    let mut rng = ctx.rng("holonomy.estimates", Some(r));
    let xs: Vec<ChartPoint> = (0..50).map(|_| source_point(&mut rng, &h, l)).collect();
    let rows = ctx.exec.map(&xs, |x| {
        h.holonomy_map(x).map(|res| {
            let y = res.image;
            let ds = (y.s[0] - 1.0).abs();
            let dt = (y.t - (r + x.t - l)).abs();
            (ds, dt)
        })
    });
    let (mut ds_max, mut dt_max) = (0.0f64, 0.0f64);
    for row in rows {
        let (ds, dt) = row?;
        ds_max = ds_max.max(ds);
        dt_max = dt_max.max(dt);
    }
    let tol = bound.max(1e-12);
    let worst = ds_max.max(dt_max);
    Ok(vec![record("holonomy.estimates", Some(r))
        .pass_if(worst <= tol)
        .margin(1.0 - worst / tol)
        .detail("s_error", ds_max)
        .detail("t_error", dt_max)
        .detail("bound", bound)
        .detail("samples", xs.len() as f64)])
}

/// κ̂ ∈ (0, 1] on random pairs, and no smaller on pairs at half the distance.
fn holonomy_holder(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let r = need_r(r)?;
    let h = holonomy(ctx, r)?;
    let l = ctx.model.chart.l;
    let mut rng = ctx.rng("holonomy.holder", Some(r));
    let pairs: Vec<_> = (0..ctx.cfg.run.holder_pairs)
        .map(|_| (source_point(&mut rng, &h, l), source_point(&mut rng, &h, l)))
        .collect();
    let est = h.estimate_holder(&pairs)?;
    let halved: Vec<_> = pairs
        .iter()
        .map(|(x, y)| (x.clone(), pt(0.5 * (x.s[0] + y.s[0]), 0.5 * (x.t + y.t), 0.0)))
        .collect();
    let est2 = h.estimate_holder(&halved)?;
    let ok = est.kappa_hat > 0.0 && est.kappa_hat <= 1.0 && est2.kappa_hat >= est.kappa_hat - 1e-3;
    let mut rec = record("holonomy.holder", Some(r))
        .pass_if(ok)
        .margin(est.kappa_hat)
        .detail("kappa_hat", est.kappa_hat)
        .detail("kappa_hat_halved", est2.kappa_hat)
        .detail("pairs_used", est.pairs_used as f64)
        .detail("skipped", est.skipped as f64);
    if let Some(i) = est.worst_pair {
        rec = rec.witness([pairs[i].0.to_vec(), pairs[i].1.to_vec()]);
    }
    Ok(vec![rec])
}

// ---------------------------------------------------------------- suspension

fn chart_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(0.1..0.4), rng.gen_range(-0.1..0.1)])
        .collect()
}

fn circle_samples(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|k| vec![(k as f64 + 0.5) / n as f64]).collect()
}

fn identity_suspension(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<Suspension<ChartIdentity>> {
    let mut s = Suspension::new(
        ChartIdentity {
            chart: ctx.model.chart.clone(),
        },
        &chart_samples(rng, 10),
    )?;
    s.exec = ctx.exec;
    Ok(s)
}

/// H = G(θ + ωτ)·P(τ), compatible with the gluing by the rotation.
fn circle_h(omega: f64, amp: f64) -> impl Deformation {
    FnDeformation(move |tau: f64, y: &[f64]| {
        let x = y[0] + omega * tau;
        amp * ((TAU * x).sin() + 0.3 * (2.0 * TAU * x).cos()) * (1.0 + 0.5 * (TAU * tau).sin())
    })
}

fn quad(c: &[f64], y: &[f64]) -> f64 {
    c[0] + c[1] * y[0] + c[2] * y[1] + c[3] * y[2] + c[4] * y[0] * y[2] + c[5] * y[1] * y[1]
}

fn quad_grad(c: &[f64], y: &[f64]) -> Vec<f64> {
    vec![c[1] + c[4] * y[2], c[2] + 2.0 * c[5] * y[1], c[3] + c[4] * y[0]]
}

/// With ν = −H dτ + α on the identity suspension, Z = ∂_τ + V_H.
fn susp_identity_field(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let mut rng = ctx.rng("suspension.identity_field", r);
    let susp = identity_suspension(ctx, &mut rng)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let def = AnalyticDeformation(
            |_tau: f64, y: &[f64]| -quad(&c, y),
            |_tau: f64, y: &[f64]| (0.0, -DVector::from_vec(quad_grad(&c, y))),
        );
        let field = FnField(
            |p: &ChartPoint| quad(&c, &p.to_vec()),
            |p: &ChartPoint| Tangent::from_slice(1, &quad_grad(&c, &p.to_vec())),
        );
        for y in chart_samples(&mut rng, 5) {
            let z = susp.characteristic_field(&def, rng.gen_range(0.0..1.0), &y)?;
            let v = contact_vector_field(&field, &ChartPoint::from_slice(1, &y))?.to_vec();
            for (a, b) in z.v.iter().zip(&v) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let tol = ctx.cfg.tolerances.characteristic;
    Ok(vec![record("suspension.identity_field", r)
        .pass_if(worst <= tol)
        .margin(tol - worst)
        .detail("max_field_error", worst)])
}

/// The three defining residuals of Z for a time-dependent H on a rotation.
fn susp_residuals(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let susp = Suspension::new(CircleRotation { omega: 0.5 }, &circle_samples(8))?;
    let h = circle_h(0.5, 0.1);
    let mut rng = ctx.rng("suspension.residuals", r);
    let mut worst: f64 = 0.0;
    for _ in 0..ctx.samples(100) {
        let z = susp.characteristic_field(&h, rng.gen_range(0.0..1.0), &[rng.gen_range(0.0..1.0)])?;
        worst = z.residuals.iter().copied().fold(worst, f64::max);
    }
    let gluing = susp.periodicity_defect(&h, &circle_samples(100))?;
    let tol = ctx.cfg.tolerances.characteristic;
    let err = worst.max(gluing);
    Ok(vec![record("suspension.residuals", r)
        .pass_if(err <= tol)
        .margin(tol - err)
        .detail("max_residual", worst)
        .detail("gluing_defect", gluing)])
}

fn susp_return_kernel(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    needs_n1(ctx)?;
    let mut rng = ctx.rng("suspension.return_kernel", r);
    let mut susp = identity_suspension(ctx, &mut rng)?;
    susp.steps = 100;
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let def = FnDeformation(move |tau: f64, y: &[f64]| {
        0.05 * (c[0] + c[1] * y[0] * y[2] + c[2] * (3.0 * y[1]).sin() + c[3] * y[0] * y[0]) * (1.0 + tau)
    });
    let samples = chart_samples(&mut rng, ctx.samples(10));
    let res = susp.return_kernel_residual(&def, &samples)?;
    // the model map itself preserves the kernel at the first configured r
    let r0 = ctx.cfg.run.r[0];
    let model_samples: Vec<Vec<f64>> = samples.iter().take(200).map(|y| vec![y[0], y[1], 0.5 * y[2]]).collect();
    let model_res = map_kernel_residual(
        &ChartModel {
            model: ctx.model.clone(),
            r: r0,
        },
        &model_samples,
    )?;
    let tol = ctx.cfg.tolerances.return_kernel;
    let ok = res <= tol && model_res <= 1e-8;
    Ok(vec![record("suspension.return_kernel", r)
        .pass_if(ok)
        .margin((tol - res).min(1e-8 - model_res))
        .detail("return_kernel_residual", res)
        .detail("model_kernel_residual", model_res)
        .detail("samples", samples.len() as f64)])
}

/// d_C¹(Φ^{τH}_1, φ) is linear in τ.
fn susp_c1_scaling(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let mut susp = Suspension::new(CircleRotation { omega: 0.5 }, &circle_samples(8))?;
    susp.steps = 100;
    susp.exec = ctx.exec;
    let h0 = circle_h(0.5, 1.0);
    let samples = circle_samples(100);
    let zero = susp.c1_distance(&Scaled { inner: &h0, factor: 0.0 }, &samples)?;
    let fit = susp.c1_distance_scaling(&h0, &[1e-3, 3e-3, 1e-2, 3e-2, 1e-1], &samples)?;
    let ok = zero <= 1e-9 && fit.slope > 0.0 && fit.r_squared >= 0.99;
    Ok(vec![record("suspension.c1_scaling", r)
        .pass_if(ok)
        .margin(fit.r_squared - 0.99)
        .detail("slope", fit.slope)
        .detail("intercept", fit.intercept)
        .detail("r_squared", fit.r_squared)
        .detail("h0_c2", fit.h0_c2)
        .detail("distance_at_zero", zero)])
}

fn susp_bridge(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let part = BoxPartition::new(vec![0.0], vec![1.0], vec![64], vec![true])?;
    let lift = |x: &[f64]| x.to_vec();
    let project = |y: &[f64]| y.to_vec();
    let seed = ctx.cfg.run.seed;
    let mut rec = record("suspension.bridge", r);
    let mut ok = true;

    let id = Suspension::new(CircleRotation { omega: 0.0 }, &circle_samples(8))?;
    let rep = suspension_transitivity_bridge(&id, &Zero, &part, &lift, &project, 16, seed)?;
    ok &= rep.transitive.answer == Answer::No;
    rec = rec.detail("identity_components", rep.transitive.components as f64);

    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let rot = Suspension::new(CircleRotation { omega: golden }, &circle_samples(8))?;
    let rep = suspension_transitivity_bridge(&rot, &Zero, &part, &lift, &project, 16, seed)?;
    ok &= rep.transitive.answer == Answer::Yes && rep.mixing.answer == Answer::No;
    rec = rec.detail("golden_components", rep.transitive.components as f64);

    if ctx.model.n() == 1 {
        // H = (s² + u²)/2 turns the (s, u)-plane by one radian per unit τ
        let mut rng = ctx.rng("suspension.bridge", r);
        let mut susp = identity_suspension(ctx, &mut rng)?;
        susp.steps = 100;
        let def = AnalyticDeformation(
            |_tau: f64, y: &[f64]| -(y[0] * y[0] + y[2] * y[2]) / 2.0,
            |_tau: f64, y: &[f64]| (0.0, DVector::from_vec(vec![-y[0], 0.0, -y[2]])),
        );
        let annulus = BoxPartition::new(vec![0.0, 0.05], vec![1.0, 0.08], vec![32, 1], vec![true, false])?;
        let lift = |x: &[f64]| {
            let a = TAU * x[0];
            vec![x[1] * a.cos(), 0.25, x[1] * a.sin()]
        };
        let project = |y: &[f64]| vec![y[2].atan2(y[0]).rem_euclid(TAU) / TAU, y[0].hypot(y[2])];
        let rep = suspension_transitivity_bridge(&susp, &def, &annulus, &lift, &project, 8, seed)?;
        ok &= rep.escaped_samples == 0 && rep.transitive.answer == Answer::Yes;
        rec = rec.detail("annulus_escapes", rep.escaped_samples as f64);
    }
    Ok(vec![rec.pass_if(ok)])
}

// ---------------------------------------------------------------- transitivity

fn rotation(w: f64) -> impl Fn(&[f64]) -> Option<Vec<f64>> + Sync {
    move |x: &[f64]| Some(vec![(x[0] + w).rem_euclid(1.0)])
}

fn answer_name(a: Answer) -> f64 {
    match a {
        Answer::Yes => 1.0,
        Answer::No => 0.0,
        Answer::Inconclusive => -1.0,
    }
}

/// Expected transitivity and mixing answers for a known map.
#[allow(clippy::too_many_arguments)]
fn known_map(
    ctx: &Ctx,
    name: &str,
    r: Option<f64>,
    map: &(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync),
    part: &BoxPartition,
    want_transitive: Answer,
    want_mixing: Answer,
) -> Result<Vec<CheckRecord>> {
    let seed = ctx.cfg.run.seed;
    let g = build_transition_graph(map, part, 16, seed, ctx.exec);
    let t = is_transitive(&g);
    let mix = if t.answer == Answer::Yes {
        mixing_under_refinement(map, part, 16, seed, ctx.exec)
    } else {
        is_mixing(&g, None)
    };
    let ok = t.answer == want_transitive && mix.answer == want_mixing;
    let mut rec = record(name, r)
        .pass_if(ok)
        .detail("transitive", answer_name(t.answer))
        .detail("mixing", answer_name(mix.answer))
        .detail("components", t.components as f64)
        .detail("cells", t.cells as f64)
        .detail("period", mix.period as f64);
    if let Some(w) = t.witness {
        rec = rec.witness(w);
    }
    Ok(vec![rec])
}

fn trans_cat(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let cat = |x: &[f64]| Some(vec![(2.0 * x[0] + x[1]).rem_euclid(1.0), (x[0] + x[1]).rem_euclid(1.0)]);
    known_map(ctx, "transitivity.cat_map", r, &cat, &BoxPartition::torus(2, 64), Answer::Yes, Answer::Yes)
}

fn trans_identity(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let id = |x: &[f64]| Some(x.to_vec());
    known_map(ctx, "transitivity.identity", r, &id, &BoxPartition::torus(1, 64), Answer::No, Answer::No)
}

fn trans_quarter(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    known_map(
        ctx,
        "transitivity.quarter_rotation",
        r,
        &rotation(0.25),
        &BoxPartition::torus(1, 64),
        Answer::No,
        Answer::No,
    )
}

fn trans_golden(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    known_map(
        ctx,
        "transitivity.golden_rotation",
        r,
        &rotation((5f64.sqrt() - 1.0) / 2.0),
        &BoxPartition::torus(1, 64),
        Answer::Yes,
        Answer::No,
    )
}

/// A monotone flow has a witness; a gradient flow crossing two parallel
/// circles does not.
fn trans_dividing(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let field = |x: &[f64]| vec![1.0 - x[0] * x[0], 0.0];
    let gamma = |x: &[f64]| x[0];
    let samples: Vec<Vec<f64>> = (0..20).map(|k| vec![-0.9 + 0.09 * k as f64, 0.05 * k as f64]).collect();
    let monotone = dividing_obstruction(&field, &gamma, &samples, 5.0, 0.01)?;

    let grad = |x: &[f64]| vec![-x[0].sin(), 0.0];
    let circles = |x: &[f64]| (x[0] - std::f64::consts::FRAC_PI_4).sin() * (x[0] - std::f64::consts::FRAC_PI_2).sin();
    let twice = dividing_obstruction(&grad, &circles, &[vec![2.0, 0.0], vec![1.0, 0.3]], 10.0, 0.01)?;

    let ok = matches!(monotone, Dividing::Witness(_)) && matches!(twice, Dividing::Inapplicable { crossings: 2, .. });
    let mut rec = record("transitivity.dividing_set", r).pass_if(ok);
    if let Dividing::Witness(w) = &monotone {
        rec = rec.detail("direction", w.direction).detail("patch_points", (w.patch_u.len() + w.patch_v.len()) as f64);
    }
    let _ = ctx;
    Ok(vec![rec])
}

// ---------------------------------------------------------------- embeddings

const EMBEDDING_A: [f64; 3] = [0.5, 1.0, 2.0];

fn emb_disk(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let tol = ctx.cfg.tolerances.embedding;
    let mut rec = record("embeddings.disk", r);
    let mut worst: f64 = 0.0;
    for (k, a) in EMBEDDING_A.into_iter().enumerate() {
        let samples = disk_samples(a, ctx.samples(10), ctx.cfg.run.seed.wrapping_add(k as u64));
        let chk = disk_neighborhood_identity(a, &samples)?;
        rec = rec.detail(&format!("residual_a_{a}"), chk.max_residual);
        worst = worst.max(chk.max_residual);
    }
    Ok(vec![rec.pass_if(worst <= tol).margin(tol - worst).detail("max_residual", worst)])
}

fn emb_cosphere(ctx: &Ctx, r: Option<f64>) -> Result<Vec<CheckRecord>> {
    let tol = ctx.cfg.tolerances.embedding;
    let mut rec = record("embeddings.cosphere", r);
    let mut worst: f64 = 0.0;
    for (k, a) in EMBEDDING_A.into_iter().enumerate() {
        let rep = cosphere_chain_identity(&CosphereParams::new(a), ctx.samples(10), ctx.cfg.run.seed.wrapping_add(k as u64))?;
        rec = rec
            .detail(&format!("residual_a_{a}"), rep.max_residual())
            .detail(&format!("chained_bound_a_{a}"), rep.chained_bound);
        worst = worst.max(rep.max_residual());
    }
    Ok(vec![rec.pass_if(worst <= tol).margin(tol - worst).detail("max_residual", worst)])
}
