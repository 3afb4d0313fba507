//! Metric cone fields around coordinate sub-bundles, contraction and dilation
//! checks, the sum cone K^cu and the center-drift measurement.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartPoint, Tangent};
use crate::error::{Error, Result};
use crate::model::{HybridOrbit, Model};

/// Diagonal metric |v|² = w_s²|ds|² + w_t²dt² + w_u²|du|².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub w_s: f64,
    pub w_t: f64,
    pub w_u: f64,
}

impl Default for Metric {
    fn default() -> Self {
        Metric::EUCLIDEAN
    }
}

impl Metric {
    pub const EUCLIDEAN: Metric = Metric {
        w_s: 1.0,
        w_t: 1.0,
        w_u: 1.0,
    };

    /// Physical tangent to weighted coordinates.
    pub fn to_weighted(&self, v: &Tangent) -> Tangent {
        Tangent::new(
            v.ds.iter().map(|x| x * self.w_s).collect(),
            v.dt * self.w_t,
            v.du.iter().map(|x| x * self.w_u).collect(),
        )
    }

    pub fn to_physical(&self, v: &Tangent) -> Tangent {
        Tangent::new(
            v.ds.iter().map(|x| x / self.w_s).collect(),
            v.dt / self.w_t,
            v.du.iter().map(|x| x / self.w_u).collect(),
        )
    }

    pub fn norm(&self, v: &Tangent) -> f64 {
        self.to_weighted(v).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axes {
    pub s: bool,
    pub t: bool,
    pub u: bool,
}

impl Axes {
    pub const S: Axes = Axes {
        s: true,
        t: false,
        u: false,
    };
    pub const T: Axes = Axes {
        s: false,
        t: true,
        u: false,
    };
    pub const U: Axes = Axes {
        s: false,
        t: false,
        u: true,
    };

    pub fn complement(self) -> Axes {
        Axes {
            s: !self.s,
            t: !self.t,
            u: !self.u,
        }
    }

    pub fn union(self, o: Axes) -> Axes {
        Axes {
            s: self.s || o.s,
            t: self.t || o.t,
            u: self.u || o.u,
        }
    }

    /// Keeps only the components on these axes.
    pub fn project(self, v: &Tangent) -> Tangent {
        let n = v.n();
        Tangent::new(
            if self.s { v.ds.clone() } else { vec![0.0; n] },
            if self.t { v.dt } else { 0.0 },
            if self.u { v.du.clone() } else { vec![0.0; n] },
        )
    }

    pub fn dim(self, n: usize) -> usize {
        n * self.s as usize + self.t as usize + n * self.u as usize
    }

    /// Embeds coordinates of the sub-space (ordered s, t, u) as a tangent.
    fn embed(self, n: usize, coords: &[f64]) -> Tangent {
        let mut v = Tangent::zero(n);
        let mut k = 0;
        if self.s {
            v.ds.copy_from_slice(&coords[k..k + n]);
            k += n;
        }
        if self.t {
            v.dt = coords[k];
            k += 1;
        }
        if self.u {
            v.du.copy_from_slice(&coords[k..k + n]);
        }
        v
    }
}

/// Deterministic unit directions in ℝᵈ.
fn sphere_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci lattice on S², padded with a deterministic sequence beyond
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let mut v = vec![0.0; d];
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).sqrt();
                    v[0] = rho * (golden * k as f64).cos();
                    v[1] = rho * (golden * k as f64).sin();
                    v[2] = z;
                    for (j, x) in v.iter_mut().enumerate().skip(3) {
                        *x = ((k * 7 + j * 13) as f64).sin() * 0.3;
                    }
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

pub trait Cone: Sync {
    fn metric(&self) -> Metric;
    fn contains(&self, v: &Tangent) -> bool;
    /// Signed slack, positive in the interior and zero on the boundary.
    fn margin(&self, v: &Tangent) -> f64;
    /// Physical unit vectors on the boundary of the cone.
    fn boundary_rays(&self, n: usize, count: usize) -> Vec<Tangent>;
    /// Physical unit vectors spread through the cone, boundary included.
    fn sample_rays(&self, n: usize, count: usize) -> Vec<Tangent>;
}

/// K_ε(E) = {v : |v − π_E v| ≤ ε |π_E v|}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeField {
    pub base: Axes,
    pub width: f64,
    pub metric: Metric,
}

impl ConeField {
    pub fn new(base: Axes, width: f64) -> Self {
        ConeField {
            base,
            width,
            metric: Metric::EUCLIDEAN,
        }
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    /// |v − π v| / |π v| in the cone's metric.
    pub fn ratio(&self, v: &Tangent) -> f64 {
        let w = self.metric.to_weighted(v);
        let on = self.base.project(&w).norm();
        let off = self.base.complement().project(&w).norm();
        if on == 0.0 {
            if off == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            off / on
        }
    }

    fn rays_at_width(&self, n: usize, count: usize, frac: f64) -> Vec<Tangent> {
        let base_dirs = sphere_directions(self.base.dim(n), count);
        let comp = self.base.complement();
        let comp_dirs = sphere_directions(comp.dim(n), count);
        let mut rays = Vec::new();
        for e in &base_dirs {
            for c in &comp_dirs {
                let mut w = self.base.embed(n, e);
                if comp.dim(n) > 0 {
                    w = w.add(&comp.embed(n, c).scale(frac * self.width));
                }
                let w = w.scale(1.0 / w.norm());
                rays.push(self.metric.to_physical(&w));
                if comp.dim(n) == 0 {
                    break;
                }
            }
        }
        rays
    }
}

impl Cone for ConeField {
    fn metric(&self) -> Metric {
        self.metric
    }

    fn contains(&self, v: &Tangent) -> bool {
        self.ratio(v) <= self.width
    }

    fn margin(&self, v: &Tangent) -> f64 {
        self.width - self.ratio(v)
    }

    fn boundary_rays(&self, n: usize, count: usize) -> Vec<Tangent> {
        self.rays_at_width(n, count / 2, 1.0)
    }

    fn sample_rays(&self, n: usize, count: usize) -> Vec<Tangent> {
        [0.0, 0.5, 1.0]
            .iter()
            .flat_map(|&f| self.rays_at_width(n, count / 2, f))
            .collect()
    }
}

/// K^cu = K_ε(A ⊂ A⊕C) + K_δ(B ⊂ B⊕C) over complementary bases A, B sharing
/// the complement C.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumCone {
    pub first: ConeField,
    pub second: ConeField,
    pub shared: Axes,
}

impl SumCone {
    /// K^cu: du-cone of width ε plus dt-cone of width δ, sharing ds.
    pub fn center_unstable(eps: f64, delta: f64, metric: Metric) -> Self {
        SumCone {
            first: ConeField::new(Axes::U, eps).with_metric(metric),
            second: ConeField::new(Axes::T, delta).with_metric(metric),
            shared: Axes::S,
        }
    }

    fn parts(&self, v: &Tangent) -> (f64, f64, f64, f64) {
        let w = self.first.metric.to_weighted(v);
        let a = self.first.base.project(&w).norm();
        let b = self.second.base.project(&w).norm();
        let c = self.shared.project(&w).norm();
        let rest = self.first.base.union(self.second.base).union(self.shared).complement().project(&w).norm();
        (a, b, c, rest)
    }

    /// Splits v into members of the two cones, sharing the C-part in
    /// proportion to the available widths.
    pub fn decompose(&self, v: &Tangent) -> (Tangent, Tangent) {
        let (a, b, _, _) = self.parts(v);
        let cap_a = self.first.width * a;
        let cap_b = self.second.width * b;
        let share = if cap_a + cap_b > 0.0 { cap_a / (cap_a + cap_b) } else { 0.5 };
        let c = self.shared.project(v);
        let v1 = self.first.base.project(v).add(&c.scale(share));
        let v2 = self.second.base.project(v).add(&c.scale(1.0 - share));
        (v1, v2)
    }
}

impl Cone for SumCone {
    fn metric(&self) -> Metric {
        self.first.metric
    }

    fn contains(&self, v: &Tangent) -> bool {
        let (v1, v2) = self.decompose(v);
        let (_, _, _, rest) = self.parts(v);
        let tol = 1e-12 * self.metric().norm(v);
        rest <= tol
            && self.first.ratio(&v1) <= self.first.width * (1.0 + 1e-12)
            && self.second.ratio(&v2) <= self.second.width * (1.0 + 1e-12)
    }

    fn margin(&self, v: &Tangent) -> f64 {
        let (a, b, c, rest) = self.parts(v);
        (self.first.width * a + self.second.width * b - c - rest) / (a + b).max(f64::MIN_POSITIVE)
    }

    fn boundary_rays(&self, n: usize, count: usize) -> Vec<Tangent> {
        self.rays(n, count, &[1.0])
    }

    fn sample_rays(&self, n: usize, count: usize) -> Vec<Tangent> {
        self.rays(n, count, &[0.0, 0.5, 1.0])
    }
}

impl SumCone {
    fn rays(&self, n: usize, count: usize, fracs: &[f64]) -> Vec<Tangent> {
        let ab = self.first.base.union(self.second.base);
        let c_dirs = sphere_directions(self.shared.dim(n), count);
        let ab_dirs = sphere_directions(ab.dim(n), count / c_dirs.len().max(1));
        let mut rays = Vec::new();
        for d in &ab_dirs {
            let w = ab.embed(n, d);
            let a = self.first.base.project(&w).norm();
            let b = self.second.base.project(&w).norm();
            let cap = self.first.width * a + self.second.width * b;
            for c in &c_dirs {
                for &f in fracs {
                    let v = w.add(&self.shared.embed(n, c).scale(f * cap));
                    let v = v.scale(1.0 / v.norm());
                    rays.push(self.metric().to_physical(&v));
                }
            }
        }
        rays
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub contracted: bool,
    pub margin: f64,
    pub worst_point: usize,
    pub worst_ray: Tangent,
    pub rays_checked: usize,
}

/// Pushes boundary rays of the cone at each sample point by the Jacobian and
/// checks they land strictly inside the cone at the image.
pub fn check_contraction(
    jac: &(dyn Fn(&ChartPoint) -> Result<DMatrix<f64>> + Sync),
    cone: &dyn Cone,
    samples: &[ChartPoint],
    rays_per_point: usize,
) -> Result<ConeCheck> {
    let mut out = ConeCheck {
        contracted: true,
        margin: f64::INFINITY,
        worst_point: 0,
        worst_ray: Tangent::zero(1),
        rays_checked: 0,
    };
    for (i, p) in samples.iter().enumerate() {
        let j = jac(p)?;
        for ray in cone.boundary_rays(p.n(), rays_per_point) {
            let m = cone.margin(&ray.push(&j));
            out.rays_checked += 1;
            if m < out.margin {
                out.margin = m;
                out.worst_point = i;
                out.worst_ray = ray;
            }
        }
    }
    out.contracted = out.margin > 0.0;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationEstimate {
    pub lambda_hat: f64,
    pub samples: usize,
    pub witness_point: usize,
    pub witness: Tangent,
}

/// Infimum of |Jv|/|v| over sampled unit vectors of the cone.
pub fn dilation_constant(
    jac: &(dyn Fn(&ChartPoint) -> Result<DMatrix<f64>> + Sync),
    cone: &dyn Cone,
    samples: &[ChartPoint],
    rays_per_point: usize,
) -> Result<DilationEstimate> {
    let metric = cone.metric();
    let mut out = DilationEstimate {
        lambda_hat: f64::INFINITY,
        samples: 0,
        witness_point: 0,
        witness: Tangent::zero(1),
    };
    for (i, p) in samples.iter().enumerate() {
        let j = jac(p)?;
        for ray in cone.sample_rays(p.n(), rays_per_point) {
            let ratio = metric.norm(&ray.push(&j)) / metric.norm(&ray);
            out.samples += 1;
            if ratio < out.lambda_hat {
                out.lambda_hat = ratio;
                out.witness_point = i;
                out.witness = ray;
            }
        }
    }
    Ok(out)
}

/// μ² > 1 + ε², ν > 1 > η and η/(1 − μ⁻¹) < δ < √(ν² − 1).
pub fn check_stretching_criterion(mu: f64, eps: f64, nu: f64, eta: f64, delta: f64) -> bool {
    mu * mu > 1.0 + eps * eps && nu > 1.0 && (0.0..1.0).contains(&eta) && eta / (1.0 - 1.0 / mu) < delta && delta < (nu * nu - 1.0).sqrt()
}

/// Constant from the stretching lemma: √min(μ²/(1+ε²), ν²/(1+δ²)).
pub fn stretching_constant(mu: f64, eps: f64, nu: f64, delta: f64) -> f64 {
    (mu * mu / (1.0 + eps * eps)).min(nu * nu / (1.0 + delta * delta)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDrift {
    pub nu: f64,
    pub eta: f64,
    pub du_norm: f64,
}

/// Pushes R = ∂_t along the orbit by chained step Jacobians.
pub fn estimate_center_drift(model: &Model, orbit: &HybridOrbit, r: f64) -> Result<CenterDrift> {
    let n = model.n();
    let mut v = Tangent::d_t(n);
    for step in &orbit[..orbit.len().saturating_sub(1)] {
        let (_, j) = model.step_jacobian(&step.point, r)?;
        v = v.push(&j);
    }
    let nu = v.dt;
    let ds = v.ds.iter().map(|x| x * x).sum::<f64>().sqrt();
    let du = v.du.iter().map(|x| x * x).sum::<f64>().sqrt();
    if du > 1e-9 {
        return Err(Error::Model(format!("du-component {du:e} of pushed Reeb vector")));
    }
    Ok(CenterDrift {
        nu,
        eta: ds / nu,
        du_norm: du,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn tg(ds: f64, dt: f64, du: f64) -> Tangent {
        Tangent::new(vec![ds], dt, vec![du])
    }

    fn diag(s: f64, t: f64, u: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![s, t, u]))
    }

    fn origin() -> Vec<ChartPoint> {
        vec![ChartPoint::on_axis(1, 0.0)]
    }

    /// Largest off-base ratio of J·(boundary ray) for diagonal J = (a_s, a_t, a_u)
    /// on K_ε(du): rays (ε cos θ, ε sin θ, 1) give ε √(a_s² cos² + a_t² sin²)/a_u.
    fn diagonal_ratio_oracle(a_s: f64, a_t: f64, a_u: f64, eps: f64) -> f64 {
        eps * a_s.abs().max(a_t.abs()) / a_u.abs()
    }

    /// min over the cone of |Jv|/|v| for diagonal J on K_ε(du), attained on
    /// the boundary in the direction of the smaller off-base multiplier.
    fn diagonal_dilation_oracle(a_s: f64, a_t: f64, a_u: f64, eps: f64) -> f64 {
        let m = a_s.abs().min(a_t.abs());
        let boundary = ((a_u * a_u + eps * eps * m * m) / (1.0 + eps * eps)).sqrt();
        boundary.min(a_u.abs())
    }

    #[test]
    fn membership_examples() {
        let k = ConeField::new(Axes::U, 0.25);
        assert!(k.contains(&tg(0.0, 0.0, 3.0)));
        assert!(ConeField::new(Axes::U, 0.0).contains(&tg(0.0, 0.0, -1.0)));
        assert!(!k.contains(&tg(1.0, 0.0, 1.0)));
        assert!(k.contains(&tg(0.2, 0.0, 1.0)));
    }

    #[test]
    fn contraction_examples() {
        let k = ConeField::new(Axes::U, 0.25);
        let j = diag(0.5, 1.0, 2.0);
        let chk = check_contraction(&|_| Ok(j.clone()), &k, &origin(), 64).unwrap();
        assert!(chk.contracted);
        let worst = 0.25 - chk.margin;
        let oracle = diagonal_ratio_oracle(0.5, 1.0, 2.0, 0.25);
        assert!(worst <= oracle + 1e-12 && worst > oracle * 0.99);

        let id = check_contraction(&|_| Ok(DMatrix::identity(3, 3)), &k, &origin(), 64).unwrap();
        assert!(!id.contracted && id.margin.abs() < 1e-12);

        let bad = check_contraction(&|_| Ok(diag(2.0, 1.0, 0.5)), &k, &origin(), 64).unwrap();
        assert!(!bad.contracted);
        let oracle = diagonal_ratio_oracle(2.0, 1.0, 0.5, 0.25);
        assert!((0.25 - bad.margin - oracle).abs() < 0.01);
    }

    #[test]
    fn dilation_examples() {
        let j = diag(0.5, 1.0, 2.0);
        let axis = dilation_constant(&|_| Ok(j.clone()), &ConeField::new(Axes::U, 0.0), &origin(), 64).unwrap();
        assert!((axis.lambda_hat - 2.0).abs() < 1e-12);
        let k = ConeField::new(Axes::U, 0.25);
        let est = dilation_constant(&|_| Ok(j.clone()), &k, &origin(), 64).unwrap();
        let oracle = diagonal_dilation_oracle(0.5, 1.0, 2.0, 0.25);
        assert!((oracle - ((4.0f64 + 1.0 / 64.0) / (1.0 + 1.0 / 16.0)).sqrt()).abs() < 1e-12);
        assert!(est.lambda_hat >= oracle - 1e-12 && est.lambda_hat <= oracle + 1e-3);

        // rotation taking du to ds
        let mut rot = DMatrix::zeros(3, 3);
        rot[(0, 2)] = 1.0;
        rot[(2, 0)] = -1.0;
        rot[(1, 1)] = 1.0;
        let est = dilation_constant(&|_| Ok(rot.clone()), &k, &origin(), 64).unwrap();
        assert!((est.lambda_hat - 1.0).abs() < 1e-12);
        assert!(!check_contraction(&|_| Ok(rot.clone()), &k, &origin(), 64).unwrap().contracted);
    }

    #[test]
    fn stretching_examples() {
        assert!(check_stretching_criterion(2.0, 0.25, 0.05f64.exp(), 0.0, 0.1));
        assert!(!check_stretching_criterion(2.0, 0.25, 2.0, 0.2, 0.3));
        assert!(!check_stretching_criterion(1.1, 0.5, 2.0, 0.0, 0.1));
    }

    #[test]
    fn sum_cone_rays_sit_on_boundary() {
        let k = SumCone::center_unstable(0.25, 0.1, Metric::EUCLIDEAN);
        for ray in k.boundary_rays(1, 64) {
            assert!(k.margin(&ray).abs() < 1e-12);
            assert!(k.contains(&ray));
        }
        assert!(!k.contains(&tg(1.0, 1.0, 1.0)));
        assert!(k.contains(&tg(0.0, 1.0, 1.0)));
    }

    #[test]
    fn weighted_metric_changes_width() {
        let m = Metric {
            w_s: 1.0,
            w_t: 1.0,
            w_u: 100.0,
        };
        let k = ConeField::new(Axes::U, 0.25).with_metric(m);
        assert!(k.contains(&tg(20.0, 0.0, 1.0)));
        assert!(!k.contains(&tg(30.0, 0.0, 1.0)));
    }

    #[test]
    fn center_drift_on_lower_chart_orbit() {
        let model = Model::default_model();
        let r = 0.05;
        let orbit = model.orbit(&ChartPoint::new(vec![0.3], 0.01, vec![0.0]), r, 10);
        let d = estimate_center_drift(&model, &orbit, r).unwrap();
        assert!((d.nu - (10.0 * r).exp()).abs() < 1e-12);
        assert_eq!(d.eta, 0.0);
    }

    proptest! {
        #[test]
        fn sum_of_members_is_member(a in -2.0..2.0f64, b in -2.0..2.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
            let k = SumCone::center_unstable(0.25, 0.1, Metric::EUCLIDEAN);
            let v1 = tg(0.25 * a.abs() * x, 0.0, a);
            let v2 = tg(0.1 * b.abs() * y, b, 0.0);
            prop_assert!(k.first.contains(&v1) && k.second.contains(&v2));
            prop_assert!(k.contains(&v1.add(&v2)));
        }

        #[test]
        fn stretching_is_monotone(mu in 1.0..4.0f64, eps in 0.0..1.0f64, nu in 1.0..4.0f64, eta in 0.0..1.0f64,
                                  delta in 0.0..2.0f64, dnu in 0.0..1.0f64, shrink in 0.0..1.0f64) {
            if check_stretching_criterion(mu, eps, nu, eta, delta) {
                prop_assert!(check_stretching_criterion(mu, eps, nu + dnu, eta, delta));
                prop_assert!(check_stretching_criterion(mu, eps * shrink, nu, eta * shrink, delta));
            }
        }
    }
}
