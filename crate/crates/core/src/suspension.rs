//! Mapping tori of contactomorphisms, graph deformations ν_H = H·dτ + α and
//! their characteristic fields, and return maps.
//!
//! Points of ℝ × Y are written (τ, y). The gluing is (τ, y) ~ (τ − 1, Φ(y)),
//! so the return map of a characteristic flow started on {0} × Y is Φ
//! composed with the time-one map of the flow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::ChartParams;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::Model;
use crate::numerics::{self, linear_fit, rk4_step_vec, LinearFit};
use crate::transitivity::{self, BoxPartition, MixingResult, TransitivityResult};

/// A contact manifold in coordinates with a contactomorphism Φ.
pub trait ContactSystem: Sync {
    fn dim(&self) -> usize;
    /// α at y as a covector.
    fn alpha(&self, y: &[f64]) -> DVector<f64>;
    /// dα at y as the antisymmetric matrix Ω with dα(v, w) = vᵀΩw.
    fn d_alpha(&self, y: &[f64]) -> DMatrix<f64>;
    fn map(&self, y: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>>;
    /// Whether y lies in the modeled neighborhood.
    fn contains(&self, _y: &[f64]) -> bool {
        true
    }
}

/// S¹ = ℝ/ℤ with α = dθ and Φ = rotation by ω turns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleRotation {
    pub omega: f64,
}

impl ContactSystem for CircleRotation {
    fn dim(&self) -> usize {
        1
    }
    fn alpha(&self, _y: &[f64]) -> DVector<f64> {
        DVector::from_element(1, 1.0)
    }
    fn d_alpha(&self, _y: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
    fn map(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![y[0] + self.omega])
    }
    fn jacobian(&self, _y: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(1, 1))
    }
}

fn chart_alpha(y: &[f64]) -> DVector<f64> {
    let n = (y.len() - 1) / 2;
    let mut a = DVector::zeros(y.len());
    a[n] = 1.0;
    for i in 0..n {
        a[n + 1 + i] = -y[i];
    }
    a
}

/// dα = Σ duᵢ ∧ dsᵢ in (s, t, u) order.
fn chart_d_alpha(dim: usize) -> DMatrix<f64> {
    let n = (dim - 1) / 2;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        m[(n + 1 + i, i)] = 1.0;
        m[(i, n + 1 + i)] = -1.0;
    }
    m
}

/// The chart with Φ = id.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartIdentity {
    pub chart: ChartParams,
}

impl ContactSystem for ChartIdentity {
    fn dim(&self) -> usize {
        self.chart.dim()
    }
    fn alpha(&self, y: &[f64]) -> DVector<f64> {
        chart_alpha(y)
    }
    fn d_alpha(&self, _y: &[f64]) -> DMatrix<f64> {
        chart_d_alpha(self.dim())
    }
    fn map(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(y.to_vec())
    }
    fn jacobian(&self, _y: &[f64]) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }
    fn contains(&self, y: &[f64]) -> bool {
        self.chart.contains(&crate::chart::ChartPoint::from_slice(self.chart.n, y))
    }
}

/// The chart with Φ = Ψ_r. It preserves ker α but scales α along the flow,
/// so only kernel preservation is meaningful for it.
#[derive(Clone, Debug)]
pub struct ChartModel {
    pub model: Model,
    pub r: f64,
}

impl ContactSystem for ChartModel {
    fn dim(&self) -> usize {
        self.model.chart.dim()
    }
    fn alpha(&self, y: &[f64]) -> DVector<f64> {
        chart_alpha(y)
    }
    fn d_alpha(&self, _y: &[f64]) -> DMatrix<f64> {
        chart_d_alpha(self.dim())
    }
    fn map(&self, y: &[f64]) -> Result<Vec<f64>> {
        let p = crate::chart::ChartPoint::from_slice(self.model.n(), y);
        Ok(self.model.step_jacobian(&p, self.r)?.0.to_vec())
    }
    fn jacobian(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        let p = crate::chart::ChartPoint::from_slice(self.model.n(), y);
        Ok(self.model.step_jacobian(&p, self.r)?.1)
    }
    fn contains(&self, y: &[f64]) -> bool {
        self.model.chart.contains(&crate::chart::ChartPoint::from_slice(self.model.n(), y))
    }
}

/// Largest relative component of F^*α_{F(y)} orthogonal to α_y: zero iff
/// DF maps ker α_y into ker α_{F(y)}.
pub fn kernel_defect(alpha_y: &DVector<f64>, alpha_fy: &DVector<f64>, jac: &DMatrix<f64>) -> f64 {
    let pulled = jac.transpose() * alpha_fy;
    let along = pulled.dot(alpha_y) / alpha_y.norm_squared();
    (&pulled - alpha_y * along).norm() / pulled.norm().max(f64::MIN_POSITIVE)
}

/// Kernel preservation of Φ over samples.
pub fn map_kernel_residual(sys: &dyn ContactSystem, samples: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in samples {
        let fy = sys.map(y)?;
        worst = worst.max(kernel_defect(&sys.alpha(y), &sys.alpha(&fy), &sys.jacobian(y)?));
    }
    Ok(worst)
}

/// A function H(τ, y) on ℝ × Y.
pub trait Deformation: Sync {
    fn value(&self, tau: f64, y: &[f64]) -> f64;

    /// (∂_τH, ∇_yH), by central differences unless overridden.
    fn gradient(&self, tau: f64, y: &[f64]) -> (f64, DVector<f64>) {
        let h = 1e-6;
        let dt = (self.value(tau + h, y) - self.value(tau - h, y)) / (2.0 * h);
        let mut z = y.to_vec();
        let dy = DVector::from_iterator(
            y.len(),
            (0..y.len()).map(|i| {
                z[i] = y[i] + h;
                let p = self.value(tau, &z);
                z[i] = y[i] - h;
                let m = self.value(tau, &z);
                z[i] = y[i];
                (p - m) / (2.0 * h)
            }),
        );
        (dt, dy)
    }
}

/// H given by a closure, with finite-difference derivatives.
pub struct FnDeformation<F>(pub F);

impl<F> Deformation for FnDeformation<F>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
{
    fn value(&self, tau: f64, y: &[f64]) -> f64 {
        (self.0)(tau, y)
    }
}

/// H with an explicit gradient.
pub struct AnalyticDeformation<F, G>(pub F, pub G);

impl<F, G> Deformation for AnalyticDeformation<F, G>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
    G: Fn(f64, &[f64]) -> (f64, DVector<f64>) + Sync,
{
    fn value(&self, tau: f64, y: &[f64]) -> f64 {
        (self.0)(tau, y)
    }
    fn gradient(&self, tau: f64, y: &[f64]) -> (f64, DVector<f64>) {
        (self.1)(tau, y)
    }
}

/// c·H.
pub struct Scaled<'a> {
    pub inner: &'a dyn Deformation,
    pub factor: f64,
}

impl Deformation for Scaled<'_> {
    fn value(&self, tau: f64, y: &[f64]) -> f64 {
        self.factor * self.inner.value(tau, y)
    }
    fn gradient(&self, tau: f64, y: &[f64]) -> (f64, DVector<f64>) {
        let (dt, dy) = self.inner.gradient(tau, y);
        (self.factor * dt, dy * self.factor)
    }
}

pub struct Zero;

impl Deformation for Zero {
    fn value(&self, _tau: f64, _y: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _tau: f64, y: &[f64]) -> (f64, DVector<f64>) {
        (0.0, DVector::zeros(y.len()))
    }
}

/// Sampled sup of |H|, |∂H| and |∂²H| over [0, 1] × samples; the second
/// derivatives are finite differences of the gradient.
pub fn c2_norm(h: &dyn Deformation, samples: &[Vec<f64>]) -> f64 {
    let step = 1e-4;
    let mut sup: f64 = 0.0;
    for (k, y) in samples.iter().enumerate() {
        let tau = (k as f64 + 0.5) / samples.len() as f64;
        let (dt, dy) = h.gradient(tau, y);
        sup = sup.max(h.value(tau, y).abs()).max(dt.abs()).max(dy.amax());
        let (dtp, dyp) = h.gradient(tau + step, y);
        let (dtm, dym) = h.gradient(tau - step, y);
        sup = sup.max(((dtp - dtm) / (2.0 * step)).abs()).max(((dyp - dym) / (2.0 * step)).amax());
        let mut z = y.clone();
        for i in 0..y.len() {
            z[i] = y[i] + step;
            let (ap, bp) = h.gradient(tau, &z);
            z[i] = y[i] - step;
            let (am, bm) = h.gradient(tau, &z);
            z[i] = y[i];
            sup = sup.max(((ap - am) / (2.0 * step)).abs()).max(((bp - bm) / (2.0 * step)).amax());
        }
    }
    sup
}

/// Characteristic field Z = ∂_τ + v at a point, with the residuals of
/// ν_H(Z) = 0, dτ(Z) = 1 and (ι_Z dν_H)|_{ker ν_H} = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicField {
    pub v: Vec<f64>,
    pub residuals: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialReturn {
    pub images: Vec<Option<Vec<f64>>>,
    pub escaped: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct C1Scaling {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub h0_c2: f64,
}

/// The suspension Σ(Φ) with framing dτ and ν induced by α.
pub struct Suspension<S: ContactSystem> {
    pub base: S,
    /// RK4 steps per unit τ.
    pub steps: usize,
    pub exec: Exec,
}

impl<S: ContactSystem> Suspension<S> {
    /// Checks that Φ preserves ker α to 1e−8 on the samples.
    pub fn new(base: S, samples: &[Vec<f64>]) -> Result<Self> {
        let res = map_kernel_residual(&base, samples)?;
        if res > 1e-8 {
            return Err(Error::Model(format!("map does not preserve ker α (residual {res:e})")));
        }
        Ok(Suspension {
            base,
            steps: 400,
            exec: Exec::default(),
        })
    }

    /// max |H(τ, y) − H(τ − 1, Φ(y))| over the samples.
    pub fn periodicity_defect(&self, h: &dyn Deformation, samples: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (k, y) in samples.iter().enumerate() {
            let tau = 1.0 + (k as f64 + 0.5) / samples.len() as f64;
            worst = worst.max((h.value(tau, y) - h.value(tau - 1.0, &self.base.map(y)?)).abs());
        }
        Ok(worst)
    }

    pub fn characteristic_field(&self, h: &dyn Deformation, tau: f64, y: &[f64]) -> Result<CharacteristicField> {
        let d = self.base.dim();
        let big = d + 1;
        let a = self.base.alpha(y);
        let omega = self.base.d_alpha(y);
        let hv = h.value(tau, y);
        let (h_tau, h_y) = h.gradient(tau, y);
        // ν_H = (H, α) and dν_H = dH ∧ dτ + dα on (τ, y)
        let mut nu = DVector::zeros(big);
        nu[0] = hv;
        nu.rows_mut(1, d).copy_from(&a);
        let mut grad = DVector::zeros(big);
        grad[0] = h_tau;
        grad.rows_mut(1, d).copy_from(&h_y);
        let mut m = DMatrix::zeros(big, big);
        for i in 0..big {
            m[(i, 0)] += grad[i];
            m[(0, i)] -= grad[i];
        }
        for i in 0..d {
            for j in 0..d {
                m[(i + 1, j + 1)] += omega[(i, j)];
            }
        }
        // unknowns (v, c): Mᵀ(1, v) = c·ν and ν(1, v) = 0
        let mut sys = DMatrix::zeros(big + 1, d + 1);
        let mut rhs = DVector::zeros(big + 1);
        for i in 0..big {
            for j in 0..d {
                sys[(i, j)] = m[(j + 1, i)];
            }
            sys[(i, d)] = -nu[i];
            rhs[i] = -m[(0, i)];
        }
        for j in 0..d {
            sys[(big, j)] = a[j];
        }
        rhs[big] = -hv;
        // the system is consistent, so a least-squares solve is exact
        let qr = sys.qr();
        let rmat = qr.r();
        let diag: Vec<f64> = (0..d + 1).map(|i| rmat[(i, i)].abs()).collect();
        let scale = diag.iter().copied().fold(1.0, f64::max);
        if !diag.iter().all(|x| *x > 1e-12 * scale) {
            return Err(Error::Singular(format!("degenerate distribution at τ = {tau}, y = {y:?}")));
        }
        let qtb = qr.q().transpose() * &rhs;
        let x = rmat
            .solve_upper_triangular(&qtb)
            .ok_or_else(|| Error::Singular("characteristic field".into()))?;
        let mut z = DVector::zeros(big);
        z[0] = 1.0;
        z.rows_mut(1, d).copy_from(&x.rows(0, d));
        let zeta = m.transpose() * &z;
        let along = zeta.dot(&nu) / nu.norm_squared();
        let restricted = (&zeta - &nu * along).amax();
        Ok(CharacteristicField {
            v: x.rows(0, d).iter().copied().collect(),
            residuals: [nu.dot(&z).abs(), (z[0] - 1.0).abs(), restricted],
        })
    }

    /// Integrates Z from (τ0, y) to τ1 by RK4, without applying the gluing.
    pub fn flow(&self, h: &dyn Deformation, y: &[f64], tau0: f64, tau1: f64) -> Result<Vec<f64>> {
        let n = ((tau1 - tau0).abs() * self.steps as f64).ceil().max(1.0) as usize;
        let dt = (tau1 - tau0) / n as f64;
        let field = |tau: f64, y: &[f64]| -> Vec<f64> {
            self.characteristic_field(h, tau, y)
                .map(|z| z.v)
                .unwrap_or_else(|_| vec![f64::NAN; y.len()])
        };
        let mut cur = y.to_vec();
        for k in 0..n {
            cur = rk4_step_vec(&field, tau0 + k as f64 * dt, &cur, dt);
            if !cur.iter().all(|x| x.is_finite()) || !self.base.contains(&cur) {
                return Err(Error::Domain { index: k });
            }
        }
        Ok(cur)
    }

    /// Φ^H: flow from {0} × Y to {1} × Y, then identify through Φ.
    pub fn return_map(&self, h: &dyn Deformation, y: &[f64]) -> Result<Vec<f64>> {
        self.base.map(&self.flow(h, y, 0.0, 1.0)?)
    }

    pub fn return_jacobian(&self, h: &dyn Deformation, y: &[f64]) -> Result<DMatrix<f64>> {
        let err = std::cell::RefCell::new(None);
        let f = |x: &[f64]| {
            self.return_map(h, x).unwrap_or_else(|e| {
                *err.borrow_mut() = Some(e);
                vec![f64::NAN; x.len()]
            })
        };
        let jac = numerics::fd_jacobian_richardson(&f, y, 1e-5);
        match err.into_inner() {
            Some(e) => Err(e),
            None => Ok(jac),
        }
    }

    /// Return map on each sample; samples whose orbits leave the modeled
    /// neighborhood are reported instead of mapped.
    pub fn return_map_partial(&self, h: &dyn Deformation, samples: &[Vec<f64>]) -> PartialReturn {
        let images: Vec<Option<Vec<f64>>> = self.exec.map(samples, |y| self.return_map(h, y).ok());
        let escaped = images.iter().enumerate().filter(|(_, x)| x.is_none()).map(|(i, _)| i).collect();
        PartialReturn { images, escaped }
    }

    /// Kernel preservation of Φ^H over the samples that stay in the domain.
    pub fn return_kernel_residual(&self, h: &dyn Deformation, samples: &[Vec<f64>]) -> Result<f64> {
        let res: Vec<Option<f64>> = self.exec.map(samples, |y| {
            let fy = self.return_map(h, y).ok()?;
            let jac = self.return_jacobian(h, y).ok()?;
            Some(kernel_defect(&self.base.alpha(y), &self.base.alpha(&fy), &jac))
        });
        if res.iter().all(Option::is_none) {
            return Err(Error::Precondition("every sample leaves the modeled neighborhood".into()));
        }
        Ok(res.into_iter().flatten().fold(0.0, f64::max))
    }

    /// Sampled C¹ distance between Φ^H and Φ: max of |Φ^H − Φ| plus the
    /// operator norm of the Jacobian difference.
    pub fn c1_distance(&self, h: &dyn Deformation, samples: &[Vec<f64>]) -> Result<f64> {
        let per: Vec<Option<f64>> = self.exec.map(samples, |y| {
            let a = self.return_map(h, y).ok()?;
            let b = self.base.map(y).ok()?;
            let ja = self.return_jacobian(h, y).ok()?;
            let jb = self.base.jacobian(y).ok()?;
            let point = a.iter().zip(&b).map(|(x, z)| (x - z).powi(2)).sum::<f64>().sqrt();
            Some(point + (ja - jb).svd(false, false).singular_values.max())
        });
        if per.iter().all(Option::is_none) {
            return Err(Error::Precondition("every sample leaves the modeled neighborhood".into()));
        }
        Ok(per.into_iter().flatten().fold(0.0, f64::max))
    }

    /// Fits d(τ) = C¹ distance of Φ^{τH₀} from Φ against τ‖H₀‖_{C²}.
    pub fn c1_distance_scaling(&self, h0: &dyn Deformation, taus: &[f64], samples: &[Vec<f64>]) -> Result<C1Scaling> {
        let norm = c2_norm(h0, samples);
        let mut xs = Vec::with_capacity(taus.len());
        let mut ds = Vec::with_capacity(taus.len());
        for &tau in taus {
            let scaled = Scaled { inner: h0, factor: tau };
            xs.push(tau * norm);
            ds.push(self.c1_distance(&scaled, samples)?);
        }
        let LinearFit {
            slope,
            intercept,
            r_squared,
        } = linear_fit(&xs, &ds);
        Ok(C1Scaling {
            slope,
            intercept,
            r_squared,
            h0_c2: norm,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeReport {
    pub transitive: TransitivityResult,
    pub mixing: MixingResult,
    pub escaped_samples: usize,
}

/// Transitivity of the suspension flow, decided on the return map: the
/// partition lives in coordinates reached through `lift` (partition → Y) and
/// `project` (Y → partition).
#[allow(clippy::too_many_arguments)]
pub fn suspension_transitivity_bridge<S: ContactSystem>(
    susp: &Suspension<S>,
    h: &dyn Deformation,
    partition: &BoxPartition,
    lift: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    project: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    samples_per_cell: usize,
    seed: u64,
) -> Result<BridgeReport> {
    let map = |x: &[f64]| susp.return_map(h, &lift(x)).ok().map(|y| project(&y));
    let graph = transitivity::build_transition_graph(&map, partition, samples_per_cell, seed, susp.exec);
    let transitive = transitivity::is_transitive(&graph);
    let mixing = transitivity::mixing_under_refinement(&map, partition, samples_per_cell, seed, susp.exec);
    Ok(BridgeReport {
        transitive,
        mixing,
        escaped_samples: graph.escapes.iter().sum(),
    })
}
