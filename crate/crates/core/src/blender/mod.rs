//! Blender boxes B_r(Q) around Q, the integer m_r, the long block map
//! Ψ^{Nm_r} on the box and the axiom checks built on them.
//!
//! Only n = 1 is supported here. The box is far too thin in u for direct
//! evaluation of the long map (u_radius ~ 1e−29 already at r = 0.05), so the
//! long map is evaluated through its closed composition: Ψ^{M} by chart
//! steps (M = N·m_r − N·m) followed by one block step, with s − 1 tracked
//! separately and the large powers of λ kept in log space.

mod axioms;
mod disks;
mod grid;

pub use axioms::{Axiom, AxiomEntry, AxiomReport, CenterDriftReport, Witness};
pub use disks::{Branch, DiskFailure, DistinctiveReport, VerticalDisk};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::ChartPoint;
use crate::cones::Metric;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flows::Flow;
use crate::model::Model;

const M_R_CAP: usize = 1_000_000;

/// Height t(Q_r) = r·(1 − e^{−8Nr}) of the box's right face.
pub fn q_height(n_iter: usize, r: f64) -> f64 {
    r * (1.0 - (-8.0 * n_iter as f64 * r).exp())
}

fn check_r(model: &Model, r: f64) -> Result<()> {
    if r > 0.0 && r <= model.params.r_max {
        Ok(())
    } else {
        Err(Error::Precondition(format!("r = {r} outside (0, r_max = {}]", model.params.r_max)))
    }
}

/// (P_r, Q_r) = ((0, L − r, 0), (0, t(Q_r), 0)).
pub fn special_points(model: &Model, r: f64) -> Result<(ChartPoint, ChartPoint)> {
    check_r(model, r)?;
    let n = model.n();
    Ok((
        ChartPoint::on_axis(n, model.chart.l - r),
        ChartPoint::on_axis(n, q_height(model.params.n_iter, r)),
    ))
}

/// Smallest m with ψ_{N m r}(t(Q_r)) ∈ [t(Ψ^{5N} P_r), t(Ψ^{6N} P_r)].
pub fn compute_m_r(model: &Model, r: f64) -> Result<usize> {
    check_r(model, r)?;
    compute_m_r_with(&model.flow, model.params.n_iter, model.chart.l, r)
}

/// As [`compute_m_r`] with an explicit t-axis flow (used for step-halving checks).
pub fn compute_m_r_with(flow: &Flow, n_iter: usize, l: f64, r: f64) -> Result<usize> {
    let nr = n_iter as f64 * r;
    let lo = flow.psi_flow(5.0 * nr, l - r)?;
    let hi = flow.psi_flow(6.0 * nr, l - r)?;
    let mut t = q_height(n_iter, r);
    for k in 0..=M_R_CAP {
        if t >= lo && t <= hi {
            return Ok(k);
        }
        t = flow.psi_flow(nr, t)?;
    }
    Err(Error::Inconclusive(format!("m_r not reached within {M_R_CAP} block steps at r = {r}")))
}

/// l = 3× the largest u-distance, pushed back over the N·m block units at
/// rate μ, between W's axis points and the points that R_χ sends onto the
/// plane u = 0 through a.
pub fn calibrate_l(model: &Model) -> Result<f64> {
    let p = &model.params;
    let n = model.n();
    let (t_lo, t_hi) = (model.chart.l - p.w_depth, model.chart.l + model.chart.delta);
    let mut worst: f64 = 0.0;
    for k in 0..=4 {
        let t = t_lo + (t_hi - t_lo) * k as f64 / 4.0;
        let out_u = |u: f64| model.chi(&ChartPoint::new(vec![0.0; n], t, vec![u; n])).u[0];
        let (mut a, mut b) = (p.x_u - p.w_rad, p.x_u + p.w_rad);
        if out_u(a).signum() == out_u(b).signum() {
            return Err(Error::Model("return map does not reach u = 0 from the window".into()));
        }
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if out_u(mid).signum() == out_u(a).signum() {
                a = mid;
            } else {
                b = mid;
            }
        }
        worst = worst.max(0.5 * (a + b));
    }
    Ok(3.0 * worst.abs() * p.mu.powi(p.block_units() as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlenderBox {
    pub s_radius: f64,
    pub t_radius: f64,
    pub u_radius: f64,
    pub r: f64,
    pub m_r: usize,
    pub l: f64,
}

/// Faces of the box: stable (|s| = 2), central (|t| = τ, split into the
/// left face t = −τ and right face t = τ) and unstable (|u| = ρ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Face {
    Stable,
    Central,
    Unstable,
    Left,
    Right,
}

impl BlenderBox {
    pub fn contains(&self, p: &ChartPoint) -> bool {
        p.s.iter().all(|s| s.abs() <= self.s_radius)
            && p.t.abs() <= self.t_radius
            && p.u.iter().all(|u| u.abs() <= self.u_radius)
    }

    /// Normalized distance to a face: 0 on the face, 1 at the opposite
    /// extreme of the box's midplane.
    pub fn face_clearance(&self, p: &ChartPoint, face: Face) -> f64 {
        let smax = p.s.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let umax = p.u.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        match face {
            Face::Stable => 1.0 - smax / self.s_radius,
            Face::Central => 1.0 - p.t.abs() / self.t_radius,
            Face::Unstable => 1.0 - umax / self.u_radius,
            Face::Left => (p.t + self.t_radius) / (2.0 * self.t_radius),
            Face::Right => (self.t_radius - p.t) / (2.0 * self.t_radius),
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * (self.s_radius.powi(2) + self.t_radius.powi(2) + self.u_radius.powi(2)).sqrt()
    }
}

pub fn build_box(model: &Model, r: f64) -> Result<BlenderBox> {
    let m_r = compute_m_r(model, r)?;
    let l = calibrate_l(model)?;
    let u_radius = l * model.params.mu.powi(-(m_r as i32));
    if u_radius > model.chart.eps_u {
        return Err(Error::config("model.r_max", "box u-radius exceeds chart eps_u; shrink r_max"));
    }
    Ok(BlenderBox {
        s_radius: 2.0,
        t_radius: q_height(model.params.n_iter, r),
        u_radius,
        r,
        m_r,
        l,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyOptions {
    /// Cone width ε.
    pub eps: f64,
    /// Grid nodes per unit half-width for the flood fills (spacing radius/grid).
    pub grid: usize,
    /// Sample points per axis for the cone checks.
    pub cone_samples: usize,
    /// Rays per sample point.
    pub rays: usize,
    /// Random disks used by axioms e and f.
    pub disks: usize,
    /// Graph nodes per disk, minus one (even).
    pub disk_nodes: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            eps: 0.25,
            grid: 32,
            cone_samples: 5,
            rays: 64,
            disks: 64,
            disk_nodes: 32,
            seed: 7,
            exec: Exec::default(),
        }
    }
}

impl VerifyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::config("verify.eps", "must lie in (0, 1)"));
        }
        if self.grid < 4 {
            return Err(Error::config("verify.grid", "must be at least 4"));
        }
        if self.cone_samples < 2 {
            return Err(Error::config("verify.cone_samples", "must be at least 2"));
        }
        if self.rays < 4 {
            return Err(Error::config("verify.rays", "must be at least 4"));
        }
        if self.disk_nodes < 2 || !self.disk_nodes.is_multiple_of(2) {
            return Err(Error::config("verify.disk_nodes", "must be even and at least 2"));
        }
        Ok(())
    }
}

/// Image of a box point under the long block map, with s − 1 kept apart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LongImage {
    pub sigma: f64,
    pub t: f64,
    pub uhat: f64,
    /// ln of the total center factor F = f_{Nm_r·r}(t0).
    pub ln_f: f64,
    /// ∂ ln F / ∂t0.
    pub g: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LongPreimage {
    pub s: f64,
    pub t: f64,
    pub uhat: f64,
    /// Point of the orbit at which the block step is taken.
    pub t_w: f64,
    pub u_w: f64,
    pub ln_f: f64,
}

/// A built box together with everything needed to run the axiom checks.
#[derive(Clone, Debug)]
pub struct Blender {
    pub model: Model,
    pub bx: BlenderBox,
    pub opts: VerifyOptions,
    pub metric: Metric,
    /// t(Ψ^{−3N}(Q_r)), the branch threshold for disk iteration.
    pub theta: f64,
    /// Chart steps M = N·m_r − N·m taken before the block step.
    pub tail: usize,
    ln_lam: f64,
    ln_rho: f64,
}

impl Blender {
    pub fn new(model: Model, r: f64, opts: VerifyOptions) -> Result<Self> {
        opts.validate()?;
        if model.n() != 1 {
            return Err(Error::config("chart.n", "blender verification supports n = 1 only"));
        }
        let bx = build_box(&model, r)?;
        let p = &model.params;
        let units = p.n_iter * bx.m_r;
        if units < p.block_units() {
            return Err(Error::Precondition(format!("m_r = {} shorter than one block", bx.m_r)));
        }
        let tail = units - p.block_units();
        let ln_lam = p.lambda.ln();
        let ln_rho = bx.l.ln() - bx.m_r as f64 * p.mu.ln();
        if (tail as f64 + p.k0 as f64) * ln_lam < -600.0 || ln_rho < -600.0 {
            return Err(Error::Precondition(format!(
                "r = {r}: long-map factors exceed the f64 range (m_r = {})",
                bx.m_r
            )));
        }
        let theta = model.flow.psi_flow(-3.0 * p.n_iter as f64 * r, bx.t_radius)?;
        let metric = Metric {
            w_s: 1.0,
            w_t: 1.0,
            w_u: (-0.5 * ln_rho).exp(),
        };
        Ok(Blender {
            model,
            bx,
            opts,
            metric,
            theta,
            tail,
            ln_lam,
            ln_rho,
        })
    }

    pub fn r(&self) -> f64 {
        self.bx.r
    }

    pub fn eps(&self) -> f64 {
        self.opts.eps
    }

    pub fn n_iter(&self) -> usize {
        self.model.params.n_iter
    }

    /// ρ = u_radius.
    pub fn rho(&self) -> f64 {
        self.bx.u_radius
    }

    /// λ^{M + k0}, the s-contraction of the long map.
    pub fn long_s_factor_ln(&self) -> f64 {
        (self.tail as f64 + self.model.params.k0 as f64) * self.ln_lam
    }

    /// Source û of the long branch that lands on u = 0.
    pub fn long_center_uhat(&self) -> f64 {
        self.model.params.x_u * (self.tail as f64 * self.ln_lam - self.ln_rho).exp()
    }

    pub fn point(&self, s: f64, t: f64, uhat: f64) -> ChartPoint {
        ChartPoint::new(vec![s], t, vec![uhat * self.rho()])
    }

    /// Ψ^N by chart steps.
    pub fn psi_n(&self, p: &ChartPoint) -> Result<ChartPoint> {
        self.model.chart_iterate(p, self.r(), self.n_iter())
    }

    pub fn psi_n_inv(&self, y: &ChartPoint) -> Result<ChartPoint> {
        let mut cur = y.clone();
        for _ in 0..self.n_iter() {
            cur = self.model.chart_step_inv(&cur, self.r())?;
        }
        Ok(cur)
    }

    pub fn psi_n_jacobian(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        let mut cur = p.clone();
        let mut j = DMatrix::identity(3, 3);
        for _ in 0..self.n_iter() {
            let (next, js) = self.model.chart_step_jacobian(&cur, self.r())?;
            j = js * j;
            cur = next;
        }
        Ok(j)
    }

    /// Jacobian of Ψ^{−N} at y, as the inverse of the forward Jacobian at
    /// the preimage.
    pub fn psi_n_inv_jacobian(&self, y: &ChartPoint) -> Result<DMatrix<f64>> {
        let x = self.psi_n_inv(y)?;
        self.psi_n_jacobian(&x)?
            .try_inverse()
            .ok_or_else(|| Error::Singular("Ψ^N Jacobian".into()))
    }

    fn tail_time(&self) -> f64 {
        self.tail as f64 * self.r()
    }

    fn block_time(&self) -> f64 {
        self.model.params.block_units() as f64 * self.r()
    }

    /// The orbit of a box point must run outside W for M chart steps and
    /// then sit in W.
    fn check_long_orbit(&self, t_w: f64, u_w: f64) -> Result<()> {
        let p = &self.model.params;
        let w = ChartPoint::new(vec![0.0], t_w, vec![u_w]);
        if !self.model.in_window(&w) {
            return Err(Error::NotInWindow);
        }
        if self.tail > 0 && (p.lambda * u_w - p.x_u).abs() <= p.w_rad {
            return Err(Error::Model("long orbit enters W early".into()));
        }
        Ok(())
    }

    /// Ψ^{Nm_r} on the box (orbit: M chart steps, then one block step).
    ///
    /// Only sources with û0 = û* + λ^{M+k0}·v land back in the box, and
    /// writing û0 in absolute terms would cancel catastrophically, so the
    /// source is given by v, which is also the image's û.
    pub fn long_forward(&self, s0: f64, t0: f64, v: f64) -> Result<LongImage> {
        let p = &self.model.params;
        let flow = &self.model.flow;
        let u_out = v * self.rho();
        let u_w = p.x_u + p.lambda.powi(p.k0) * u_out;
        let st1 = flow.state(self.tail_time(), t0)?;
        self.check_long_orbit(st1.psi, u_w)?;
        let st2 = flow.state(self.block_time(), st1.psi)?;
        let ln_f = st1.log_f + st2.log_f;
        let g = st1.g + st2.g * st1.f();
        Ok(LongImage {
            sigma: s0 * (self.long_s_factor_ln() + ln_f).exp(),
            t: st2.psi - self.model.chart.l + u_out + self.r(),
            uhat: v,
            ln_f,
            g,
        })
    }

    /// Inverse of [`Self::long_forward`] on its image.
    pub fn long_inverse(&self, sigma: f64, t: f64, uhat: f64) -> Result<LongPreimage> {
        let p = &self.model.params;
        let flow = &self.model.flow;
        let u_out = uhat * self.rho();
        let u_w = p.x_u + p.lambda.powi(p.k0) * u_out;
        let t_block = t - self.r() + self.model.chart.l - u_out;
        let st2 = flow.state(-self.block_time(), t_block)?;
        let st1 = flow.state(-self.tail_time(), st2.psi)?;
        self.check_long_orbit(st2.psi, u_w)?;
        let ln_f = -(st1.log_f + st2.log_f);
        Ok(LongPreimage {
            s: sigma * (-self.long_s_factor_ln() - ln_f).exp(),
            t: st1.psi,
            uhat: self.long_center_uhat() + self.long_s_factor_ln().exp() * uhat,
            t_w: st2.psi,
            u_w,
            ln_f,
        })
    }

    /// Physical Jacobian of the long map at a box point. It depends on
    /// (s, t) only; the u-coordinate of `p` is not used.
    pub fn long_jacobian(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        let img = self.long_forward(p.s[0], p.t, 0.0)?;
        let f = img.ln_f.exp();
        let sf = (self.long_s_factor_ln() + img.ln_f).exp();
        let du = (-self.long_s_factor_ln()).exp();
        Ok(DMatrix::from_row_slice(3, 3, &[sf, sf * img.g * p.s[0], 0.0, 0.0, f, du, 0.0, 0.0, du]))
    }
}
