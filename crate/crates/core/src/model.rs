//! Synthetic partially hyperbolic model on the chart: the diagonal base map
//! Φ(s, t, u) = (λs, t, u/λ), the heteroclinic return map R_χ on the window W,
//! and the perturbed family Ψ_r with its chart and block composition rules.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartParams, ChartPoint};
use crate::error::{Error, Result};
use crate::flows::{Blend, Flow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub lambda: f64,
    #[serde(rename = "N")]
    pub n_iter: usize,
    pub mu: f64,
    pub k0: i32,
    pub m: usize,
    pub x_u: f64,
    pub r_max: f64,
    pub w_rad: f64,
    pub w_depth: f64,
    #[serde(default)]
    pub blend: Blend,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            lambda: 0.4,
            n_iter: 1,
            mu: 2.0,
            k0: 6,
            m: 2,
            x_u: 0.05,
            r_max: 0.1,
            w_rad: 0.02,
            w_depth: 0.3,
            blend: Blend::Quadratic,
        }
    }
}

impl ModelParams {
    pub fn validate(&self, chart: &ChartParams) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::config("model.lambda", "must lie in (0, 1)"));
        }
        if !(self.mu > 1.0 && self.mu * self.lambda <= 1.0) {
            return Err(Error::config("model.mu", "need mu > 1 and mu * lambda <= 1"));
        }
        if self.n_iter < 1 {
            return Err(Error::config("model.N", "must be at least 1"));
        }
        if self.k0 < 1 {
            return Err(Error::config("model.k0", "must be positive"));
        }
        if self.m < 2 {
            return Err(Error::config("model.m", "must be at least 2"));
        }
        if self.x_u.abs() > chart.eps_u / 2.0 {
            return Err(Error::config("model.x_u", "must satisfy |x_u| <= eps_u / 2"));
        }
        if !(self.r_max > 0.0 && self.r_max < chart.l / 3.0) {
            return Err(Error::config("model.r_max", "must lie in (0, L/3)"));
        }
        if !(self.w_rad > 0.0 && self.x_u.abs() + self.w_rad <= chart.eps_u && self.w_rad <= chart.s_halfwidth) {
            return Err(Error::config("model.w_rad", "window must fit inside the chart"));
        }
        if self.x_u.abs() <= self.w_rad {
            return Err(Error::config("model.w_rad", "window must not meet the plane u = 0"));
        }
        if !(self.w_depth > 2.0 * self.r_max && self.w_depth < 2.0 * chart.l / 3.0) {
            return Err(Error::config("model.w_depth", "must lie in (2 r_max, 2L/3)"));
        }
        Ok(())
    }

    /// Number of base-map units taken by one block step.
    pub fn block_units(&self) -> usize {
        self.n_iter * self.m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionTag {
    Chart,
    ReturnWindow,
    Outside,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitStep {
    pub point: ChartPoint,
    pub tag: RegionTag,
    /// Base-map units elapsed when this point is reached.
    pub step_index: usize,
}

pub type HybridOrbit = Vec<OrbitStep>;

#[derive(Clone, Debug)]
pub struct Model {
    pub chart: ChartParams,
    pub params: ModelParams,
    pub flow: Flow,
}

impl Model {
    pub fn new(chart: ChartParams, params: ModelParams) -> Result<Self> {
        chart.validate()?;
        params.validate(&chart)?;
        let flow = Flow::new(&chart, params.blend);
        Ok(Model { chart, params, flow })
    }

    pub fn default_model() -> Self {
        Model::new(ChartParams::default(), ModelParams::default()).expect("defaults are valid")
    }

    pub fn n(&self) -> usize {
        self.chart.n
    }

    fn lam(&self) -> f64 {
        self.params.lambda
    }

    /// H_λ^k(s, t, u) = (λᵏs, t, λ⁻ᵏu).
    pub fn hyperbolic(&self, k: i32, p: &ChartPoint) -> ChartPoint {
        let c = self.lam().powi(k);
        ChartPoint::new(p.s.iter().map(|s| c * s).collect(), p.t, p.u.iter().map(|u| u / c).collect())
    }

    pub fn phi_base(&self, p: &ChartPoint) -> ChartPoint {
        self.hyperbolic(1, p)
    }

    pub fn phi_base_inv(&self, p: &ChartPoint) -> ChartPoint {
        self.hyperbolic(-1, p)
    }

    pub fn phi_base_jacobian(&self, n: usize) -> DMatrix<f64> {
        let mut j = DMatrix::identity(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            j[(i, i)] = self.lam();
            j[(n + 1 + i, n + 1 + i)] = 1.0 / self.lam();
        }
        j
    }

    pub fn window_center(&self) -> ChartPoint {
        ChartPoint::new(vec![0.0; self.n()], self.chart.l, vec![self.params.x_u; self.n()])
    }

    /// W = D_s(w_rad) × [L − w_depth, L + δ] × D_u(x_u, w_rad).
    pub fn in_window(&self, p: &ChartPoint) -> bool {
        let w = self.params.w_rad;
        p.s.iter().all(|s| s.abs() <= w)
            && p.u.iter().all(|u| (u - self.params.x_u).abs() <= w)
            && p.t >= self.chart.l - self.params.w_depth
            && p.t <= self.chart.l + self.chart.delta
    }

    pub fn region(&self, p: &ChartPoint) -> RegionTag {
        if self.in_window(p) {
            RegionTag::ReturnWindow
        } else if self.chart.contains(p) {
            RegionTag::Chart
        } else {
            RegionTag::Outside
        }
    }

    /// G_{1_s} ∘ H_λ^{k0} ∘ T_u(−x_u) ∘ T_t(−L), without the window check.
    pub fn chi(&self, p: &ChartPoint) -> ChartPoint {
        let c = self.lam().powi(self.params.k0);
        let u: Vec<f64> = p.u.iter().map(|u| (u - self.params.x_u) / c).collect();
        let s: Vec<f64> = p.s.iter().map(|s| c * s + 1.0).collect();
        let t = p.t - self.chart.l + u.iter().sum::<f64>();
        ChartPoint::new(s, t, u)
    }

    pub fn chi_inv(&self, p: &ChartPoint) -> ChartPoint {
        let c = self.lam().powi(self.params.k0);
        let t = p.t + self.chart.l - p.u.iter().sum::<f64>();
        ChartPoint::new(
            p.s.iter().map(|s| (s - 1.0) / c).collect(),
            t,
            p.u.iter().map(|u| c * u + self.params.x_u).collect(),
        )
    }

    pub fn chi_jacobian(&self, n: usize) -> DMatrix<f64> {
        let c = self.lam().powi(self.params.k0);
        let mut j = DMatrix::identity(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            j[(i, i)] = c;
            j[(n, n + 1 + i)] = 1.0 / c;
            j[(n + 1 + i, n + 1 + i)] = 1.0 / c;
        }
        j
    }

    pub fn return_map_chi(&self, p: &ChartPoint) -> Result<ChartPoint> {
        if !self.in_window(p) {
            return Err(Error::NotInWindow);
        }
        Ok(self.chi(p))
    }

    /// One base unit away from W: Φ^H_r ∘ Φ.
    pub fn chart_step(&self, p: &ChartPoint, r: f64) -> Result<ChartPoint> {
        let q = self.phi_base(p);
        if !self.chart.contains(&q) {
            return Err(Error::Model("base image leaves the chart".into()));
        }
        self.flow.phi_h(r, &q)
    }

    pub fn chart_step_inv(&self, y: &ChartPoint, r: f64) -> Result<ChartPoint> {
        let q = self.flow.phi_h(-r, y)?;
        Ok(self.phi_base_inv(&q))
    }

    pub fn chart_step_jacobian(&self, p: &ChartPoint, r: f64) -> Result<(ChartPoint, DMatrix<f64>)> {
        let q = self.phi_base(p);
        if !self.chart.contains(&q) {
            return Err(Error::Model("base image leaves the chart".into()));
        }
        let (img, jh) = self.flow.phi_h_jacobian(r, &q)?;
        Ok((img, jh * self.phi_base_jacobian(p.n())))
    }

    fn block_time(&self, r: f64) -> f64 {
        self.params.block_units() as f64 * r
    }

    /// Φ^R_r ∘ R_χ ∘ Φ^H_{Nm·r}.
    pub fn macro_step(&self, p: &ChartPoint, r: f64) -> Result<ChartPoint> {
        let q = self.flow.phi_h(self.block_time(r), p)?;
        let mut out = self.chi(&q);
        out.t += r;
        Ok(out)
    }

    pub fn macro_step_inv(&self, y: &ChartPoint, r: f64) -> Result<ChartPoint> {
        let mut q = y.clone();
        q.t -= r;
        let q = self.chi_inv(&q);
        self.flow.phi_h(-self.block_time(r), &q)
    }

    pub fn macro_step_jacobian(&self, p: &ChartPoint, r: f64) -> Result<(ChartPoint, DMatrix<f64>)> {
        let (q, jh) = self.flow.phi_h_jacobian(self.block_time(r), p)?;
        let mut out = self.chi(&q);
        out.t += r;
        Ok((out, self.chi_jacobian(p.n()) * jh))
    }

    /// One step of the hybrid dynamics, with the number of base units it covers.
    pub fn psi_r(&self, p: &ChartPoint, r: f64) -> (ChartPoint, RegionTag, usize) {
        if self.in_window(p) {
            return match self.macro_step(p, r) {
                Ok(q) if self.chart.contains(&q) => (q, RegionTag::ReturnWindow, self.params.block_units()),
                Ok(q) => (q, RegionTag::Outside, self.params.block_units()),
                Err(_) => (p.clone(), RegionTag::Outside, 0),
            };
        }
        match self.chart_step(p, r) {
            Ok(q) if self.chart.contains(&q) => (q, RegionTag::Chart, 1),
            Ok(q) => (q, RegionTag::Outside, 1),
            Err(_) => (p.clone(), RegionTag::Outside, 0),
        }
    }

    /// Preimage under the hybrid dynamics: the block inverse when it lands in
    /// W, otherwise the chart inverse.
    pub fn psi_r_inv(&self, y: &ChartPoint, r: f64) -> Result<(ChartPoint, RegionTag)> {
        if let Ok(x) = self.macro_step_inv(y, r) {
            if self.in_window(&x) {
                return Ok((x, RegionTag::ReturnWindow));
            }
        }
        let x = self.chart_step_inv(y, r)?;
        if self.chart.contains(&x) && !self.in_window(&x) {
            Ok((x, RegionTag::Chart))
        } else {
            Err(Error::Model("backward orbit leaves chart and window".into()))
        }
    }

    /// Forward hybrid orbit covering at least `units` base units.
    pub fn orbit(&self, p: &ChartPoint, r: f64, units: usize) -> HybridOrbit {
        let mut orbit = vec![OrbitStep {
            point: p.clone(),
            tag: self.region(p),
            step_index: 0,
        }];
        let mut cur = p.clone();
        let mut elapsed = 0;
        while elapsed < units {
            let (next, tag, du) = self.psi_r(&cur, r);
            elapsed += du;
            orbit.push(OrbitStep {
                point: next.clone(),
                tag,
                step_index: elapsed,
            });
            if tag == RegionTag::Outside {
                break;
            }
            cur = next;
        }
        orbit
    }

    /// Jacobian of the hybrid step taken at `p` (chart or block rule).
    pub fn step_jacobian(&self, p: &ChartPoint, r: f64) -> Result<(ChartPoint, DMatrix<f64>)> {
        if self.in_window(p) {
            self.macro_step_jacobian(p, r)
        } else {
            self.chart_step_jacobian(p, r)
        }
    }

    /// Ψ_r^N by chart steps, failing if the orbit enters W or leaves the chart.
    pub fn chart_iterate(&self, p: &ChartPoint, r: f64, k: usize) -> Result<ChartPoint> {
        let mut cur = p.clone();
        for _ in 0..k {
            if self.in_window(&cur) {
                return Err(Error::Model("orbit enters the return window".into()));
            }
            cur = self.chart_step(&cur, r)?;
            if !self.chart.contains(&cur) {
                return Err(Error::Model("orbit leaves the chart".into()));
            }
        }
        Ok(cur)
    }

    /// Special points (1_s, r − δ, 0_u) on the heteroclinic segment.
    pub fn heteroclinic_point(&self, r: f64, delta: f64) -> Result<ChartPoint> {
        if !(0.0..=2.0 * r).contains(&delta) {
            return Err(Error::Precondition(format!("delta {delta} outside [0, 2r]")));
        }
        Ok(self.chart.b(r - delta))
    }

    /// Stable dimensions at Q and P from the eigenvalues of the step Jacobian.
    pub fn stable_dimensions(&self, r: f64) -> Result<(usize, usize)> {
        let count = |p: &ChartPoint| -> Result<usize> {
            let (_, j) = self.chart_step_jacobian(p, r)?;
            Ok(j.complex_eigenvalues().iter().filter(|z| z.norm() < 1.0).count())
        };
        Ok((count(&self.chart.q())?, count(&self.chart.p())?))
    }

    pub fn invariant_manifold(&self, which: Manifold, r: f64) -> Result<ManifoldCertificate> {
        if !(r > 0.0 && r <= self.params.r_max) {
            return Err(Error::Precondition(format!("r = {r} outside (0, r_max]")));
        }
        let n = self.n();
        let l = self.chart.l;
        let (target, forward, samples): (ChartPoint, bool, Vec<ChartPoint>) = match which {
            Manifold::StableQ => (
                self.chart.q(),
                true,
                (0..=8).map(|k| ChartPoint::new(vec![-3.0 + 0.75 * k as f64; n], 0.0, vec![0.0; n])).collect(),
            ),
            Manifold::UnstableQ => (
                self.chart.q(),
                false,
                (0..=8)
                    .map(|k| ChartPoint::new(vec![0.0; n], -0.04 + 0.05 * k as f64, vec![0.15 - 0.03 * k as f64; n]))
                    .collect(),
            ),
            Manifold::StableP => (
                self.chart.p(),
                true,
                (0..=8)
                    .map(|k| ChartPoint::new(vec![2.5 - 0.6 * k as f64; n], 0.06 + 0.055 * k as f64, vec![0.0; n]))
                    .collect(),
            ),
            Manifold::UnstableP => (
                self.chart.p(),
                false,
                (0..=8).map(|k| ChartPoint::new(vec![0.0; n], l, vec![-0.01 + 0.0025 * k as f64; n])).collect(),
            ),
        };
        let mut worst: f64 = 0.0;
        let mut steps_max = 0;
        for p in &samples {
            let mut cur = p.clone();
            let mut steps = 0;
            while cur.dist(&target) > 1e-9 {
                cur = if forward { self.chart_step(&cur, r)? } else { self.chart_step_inv(&cur, r)? };
                steps += 1;
                if steps > 20_000 {
                    return Err(Error::Inconclusive(format!("{which:?} sample did not converge")));
                }
            }
            worst = worst.max(cur.dist(&target));
            steps_max = steps_max.max(steps);
        }
        Ok(ManifoldCertificate {
            which,
            description: which.description(l),
            samples: samples.len(),
            max_steps: steps_max,
            final_distance: worst,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    StableQ,
    UnstableQ,
    StableP,
    UnstableP,
}

impl Manifold {
    fn description(self, l: f64) -> String {
        match self {
            Manifold::StableQ => "{t = 0, u = 0}".into(),
            Manifold::UnstableQ => format!("{{s = 0, t in [-eps, {l})}}"),
            Manifold::StableP => format!("{{t in (0, {l} + eps], u = 0}}"),
            Manifold::UnstableP => format!("{{s = 0, t = {l}}}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCertificate {
    pub which: Manifold,
    pub description: String,
    pub samples: usize,
    pub max_steps: usize,
    pub final_distance: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{kernel_basis, kernel_residual, verify_strict_contact, Tangent};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(s: f64, t: f64, u: f64) -> ChartPoint {
        ChartPoint::new(vec![s], t, vec![u])
    }

    #[test]
    fn base_map_examples() {
        let m = Model::default_model();
        for t in [-0.05, 0.0, 0.2, 0.5, 0.55] {
            assert_eq!(m.phi_base(&pt(0.0, t, 0.0)), pt(0.0, t, 0.0));
        }
        assert_eq!(m.phi_base(&pt(1.0, 0.0, 0.0)), pt(0.4, 0.0, 0.0));
    }

    #[test]
    fn base_map_and_chi_are_strict() {
        let m = Model::default_model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<_> = (0..2000)
            .map(|_| {
                let p = pt(rng.gen_range(-1.0..1.0), rng.gen_range(0.0..0.5), rng.gen_range(-0.07..0.07));
                let v = Tangent::new(vec![rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0), vec![rng.gen_range(-1.0..1.0)]);
                (p, v)
            })
            .collect();
        let jac = m.phi_base_jacobian(1);
        let chk = verify_strict_contact(&|p| m.phi_base(p), &|_| jac.clone(), &samples, 1e-12, &m.chart).unwrap();
        assert!(chk.ok);

        let w: Vec<_> = (0..2000)
            .map(|_| {
                let p = pt(rng.gen_range(-0.02..0.02), rng.gen_range(0.48..0.52), rng.gen_range(0.04999..0.05001));
                let v = Tangent::new(vec![rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0), vec![rng.gen_range(-1e-3..1e-3)]);
                (p, v)
            })
            .collect();
        let big = ChartParams {
            eps_u: 1.0,
            ..ChartParams::default()
        };
        let jchi = m.chi_jacobian(1);
        let chk = verify_strict_contact(&|p| m.chi(p), &|_| jchi.clone(), &w, 1e-10, &big).unwrap();
        assert!(chk.ok, "{}", chk.max_residual);
    }

    #[test]
    fn chi_sends_window_center_to_a() {
        let m = Model::default_model();
        let a = m.return_map_chi(&m.window_center()).unwrap();
        assert!(a.dist(&m.chart.b(0.0)) < 1e-15);
        assert_eq!(m.return_map_chi(&m.chart.p()), Err(Error::NotInWindow));
        // u-disk through the window center lands on the leaf through a
        let up = 0.004;
        let img = m.chi(&pt(0.0, 0.5, 0.05 + up));
        let c = 0.4f64.powi(6);
        assert!((img.u[0] - up / c).abs() < 1e-9 && (img.t - up / c).abs() < 1e-9 && img.s[0] == 1.0);
        let back = m.chi_inv(&img);
        assert!(back.dist(&pt(0.0, 0.5, 0.05 + up)) < 1e-14);
    }

    #[test]
    fn fixed_points_and_macro_step() {
        let m = Model::default_model();
        for r in [0.02, 0.05, 0.1] {
            let (q, tag, _) = m.psi_r(&m.chart.q(), r);
            assert_eq!((q, tag), (m.chart.q(), RegionTag::Chart));
            let (p, _, _) = m.psi_r(&m.chart.p(), r);
            assert_eq!(p, m.chart.p());
        }
        let (img, tag, units) = m.psi_r(&m.window_center(), 0.05);
        assert_eq!(tag, RegionTag::ReturnWindow);
        assert_eq!(units, 2);
        assert!((img.t - 0.05).abs() < 1e-15 && img.s[0] == 1.0 && img.u[0] == 0.0);
    }

    #[test]
    fn stable_dimensions_at_fixed_points() {
        let m = Model::default_model();
        for r in [0.02, 0.1] {
            assert_eq!(m.stable_dimensions(r).unwrap(), (1, 2));
        }
    }

    #[test]
    fn invariant_manifold_certificates() {
        let m = Model::default_model();
        for which in [Manifold::StableQ, Manifold::UnstableQ, Manifold::StableP, Manifold::UnstableP] {
            let c = m.invariant_manifold(which, 0.05).unwrap();
            assert!(c.final_distance <= 1e-9, "{which:?}");
        }
        // |s(Ψ^k)| ≤ 2 μ^{-k} along the stable manifold of Q
        let mut p = pt(2.0, 0.0, 0.0);
        for k in 1..30 {
            p = m.chart_step(&p, 0.05).unwrap();
            assert!(p.s[0].abs() <= 2.0 * 2f64.powi(-k));
            assert_eq!((p.t, p.u[0]), (0.0, 0.0));
        }
        // backward along the unstable manifold of P, u contracts by at least μ⁻¹
        let mut p = pt(0.0, 0.5, 0.01);
        for _ in 0..10 {
            let q = m.chart_step_inv(&p, 0.05).unwrap();
            assert!(q.u[0].abs() <= p.u[0].abs() / 2.0);
            p = q;
        }
    }

    #[test]
    fn heteroclinic_points() {
        let m = Model::default_model();
        let r = 0.05;
        assert_eq!(m.heteroclinic_point(r, 0.0).unwrap(), m.chart.b(r));
        assert_eq!(m.heteroclinic_point(r, r).unwrap(), m.chart.b(0.0));
        assert_eq!(m.heteroclinic_point(r, 2.0 * r).unwrap(), m.chart.b(-r));
        assert!(matches!(m.heteroclinic_point(r, 3.0 * r), Err(Error::Precondition(_))));
    }

    #[test]
    fn hybrid_inverse_round_trips() {
        let m = Model::default_model();
        let r = 0.05;
        let x = pt(0.005, 0.47, 0.05001);
        let (y, tag, _) = m.psi_r(&x, r);
        assert_eq!(tag, RegionTag::ReturnWindow);
        let (back, tag) = m.psi_r_inv(&y, r).unwrap();
        assert_eq!(tag, RegionTag::ReturnWindow);
        assert!(back.dist(&x) < 1e-10);
        let z = pt(0.3, 0.1, 0.01);
        let (y, _, _) = m.psi_r(&z, r);
        let (back, tag) = m.psi_r_inv(&y, r).unwrap();
        assert_eq!(tag, RegionTag::Chart);
        assert!(back.dist(&z) < 1e-12);
    }

    #[test]
    fn config_errors_name_fields() {
        let bad = ModelParams {
            lambda: 1.5,
            ..ModelParams::default()
        };
        match Model::new(ChartParams::default(), bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "model.lambda"),
            other => panic!("{other:?}"),
        }
        let neg = ChartParams {
            l: -0.5,
            ..ChartParams::default()
        };
        match Model::new(neg, ModelParams::default()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "chart.L"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn projection_commutes(s in -3.0..3.0f64, t in -0.02..0.52f64, u in -0.08..0.08f64, r in 0.0..0.1f64) {
            let m = Model::default_model();
            let p = pt(s, t, u);
            prop_assume!(!m.in_window(&p));
            if let Ok(img) = m.chart_step(&p, r) {
                let proj = m.chart_step(&pt(0.0, t, 0.0), r).unwrap();
                prop_assert!((img.t - proj.t).abs() <= 1e-10);
                prop_assert!((img.t - m.flow.psi_flow(r, t).unwrap()).abs() <= 1e-12);
            }
        }

        #[test]
        fn coordinate_contraction(s in -3.0..3.0f64, t in -0.02..0.52f64, u in -0.08..0.08f64, r in 0.0..0.1f64) {
            let m = Model::default_model();
            let p = pt(s, t, u);
            prop_assume!(!m.in_window(&p) && s != 0.0 && u != 0.0);
            if let Ok(img) = m.chart_step(&p, r) {
                let mu = 2.0 * (1.0 - 1e-6);
                prop_assert!(mu * img.s[0].abs() < s.abs());
                prop_assert!(mu * u.abs() < img.u[0].abs());
            }
        }

        #[test]
        fn psi_preserves_kernel(s in -3.0..3.0f64, t in -0.02..0.52f64, u in -0.08..0.08f64, r in 0.0..0.1f64) {
            let m = Model::default_model();
            let p = pt(s, t, u);
            if let Ok((img, j)) = m.step_jacobian(&p, r) {
                let scale = kernel_basis(&p).iter().map(|w| w.push(&j).norm()).fold(1.0, f64::max);
                prop_assert!(kernel_residual(&img, &p, &j) <= 1e-8 * scale);
            }
        }
    }
}
