//! The standard contact chart with coordinates (s, t, u) and form
//! α = dt − Σ sᵢ duᵢ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub delta: f64,
    pub eps_u: f64,
    pub s_halfwidth: f64,
}

impl Default for ChartParams {
    fn default() -> Self {
        ChartParams {
            n: 1,
            l: 0.5,
            delta: 0.05,
            eps_u: 0.2,
            s_halfwidth: 3.0,
        }
    }
}

impl ChartParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("chart.n", "must be at least 1"));
        }
        if !(self.l > 0.0 && self.l < 1.0) {
            return Err(Error::config("chart.L", format!("must lie in (0, 1), got {}", self.l)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("chart.delta", "must be positive"));
        }
        if !(self.eps_u > 0.0) {
            return Err(Error::config("chart.eps_u", "must be positive"));
        }
        if !(self.s_halfwidth > 0.0) {
            return Err(Error::config("chart.s_halfwidth", "must be positive"));
        }
        Ok(())
    }

    pub fn t_range(&self) -> (f64, f64) {
        (-self.delta, self.l + self.delta)
    }

    pub fn contains(&self, p: &ChartPoint) -> bool {
        let (lo, hi) = self.t_range();
        p.t >= lo
            && p.t <= hi
            && p.s.iter().all(|s| s.abs() <= self.s_halfwidth)
            && p.u.iter().all(|u| u.abs() <= self.eps_u)
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn q(&self) -> ChartPoint {
        ChartPoint::on_axis(self.n, 0.0)
    }

    pub fn p(&self) -> ChartPoint {
        ChartPoint::on_axis(self.n, self.l)
    }

    /// The point b_τ = (1_s, τ, 0_u); a = b_0.
    pub fn b(&self, tau: f64) -> ChartPoint {
        ChartPoint::new(vec![1.0; self.n], tau, vec![0.0; self.n])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub s: Vec<f64>,
    pub t: f64,
    pub u: Vec<f64>,
}

impl ChartPoint {
    pub fn new(s: Vec<f64>, t: f64, u: Vec<f64>) -> Self {
        assert_eq!(s.len(), u.len(), "s and u must have equal dimension");
        ChartPoint { s, t, u }
    }

    pub fn on_axis(n: usize, t: f64) -> Self {
        ChartPoint::new(vec![0.0; n], t, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Flattened coordinates in the order (s, t, u).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.s.clone();
        v.push(self.t);
        v.extend_from_slice(&self.u);
        v
    }

    pub fn from_slice(n: usize, v: &[f64]) -> Self {
        ChartPoint::new(v[..n].to_vec(), v[n], v[n + 1..2 * n + 1].to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|x| x.is_finite())
    }

    pub fn dist(&self, other: &ChartPoint) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tangent {
    pub ds: Vec<f64>,
    pub dt: f64,
    pub du: Vec<f64>,
}

impl Tangent {
    pub fn new(ds: Vec<f64>, dt: f64, du: Vec<f64>) -> Self {
        assert_eq!(ds.len(), du.len(), "ds and du must have equal dimension");
        Tangent { ds, dt, du }
    }

    pub fn zero(n: usize) -> Self {
        Tangent::new(vec![0.0; n], 0.0, vec![0.0; n])
    }

    pub fn d_t(n: usize) -> Self {
        Tangent::new(vec![0.0; n], 1.0, vec![0.0; n])
    }

    pub fn d_s(n: usize, i: usize) -> Self {
        let mut v = Tangent::zero(n);
        v.ds[i] = 1.0;
        v
    }

    pub fn d_u(n: usize, i: usize) -> Self {
        let mut v = Tangent::zero(n);
        v.du[i] = 1.0;
        v
    }

    pub fn n(&self) -> usize {
        self.ds.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.ds.clone();
        v.push(self.dt);
        v.extend_from_slice(&self.du);
        v
    }

    pub fn from_slice(n: usize, v: &[f64]) -> Self {
        Tangent::new(v[..n].to_vec(), v[n], v[n + 1..2 * n + 1].to_vec())
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Tangent {
        Tangent::from_slice(self.n(), &self.to_vec().iter().map(|x| c * x).collect::<Vec<_>>())
    }

    pub fn add(&self, other: &Tangent) -> Tangent {
        let v: Vec<f64> = self.to_vec().iter().zip(other.to_vec()).map(|(a, b)| a + b).collect();
        Tangent::from_slice(self.n(), &v)
    }

    /// Pushes the vector forward by a Jacobian given in (s, t, u) order.
    pub fn push(&self, jac: &DMatrix<f64>) -> Tangent {
        let w = jac * DVector::from_vec(self.to_vec());
        Tangent::from_slice(self.n(), w.as_slice())
    }
}

/// A 1-form on the chart.
pub trait OneForm: Sync {
    fn eval(&self, p: &ChartPoint, v: &Tangent) -> f64;
}

/// A 2-form on the chart.
pub trait TwoForm: Sync {
    fn eval(&self, p: &ChartPoint, v: &Tangent, w: &Tangent) -> f64;
}

pub struct Alpha;

impl OneForm for Alpha {
    fn eval(&self, p: &ChartPoint, v: &Tangent) -> f64 {
        alpha_eval(p, v)
    }
}

pub struct DAlpha;

impl TwoForm for DAlpha {
    fn eval(&self, _p: &ChartPoint, v: &Tangent, w: &Tangent) -> f64 {
        d_alpha_eval(v, w)
    }
}

pub fn alpha_eval(p: &ChartPoint, v: &Tangent) -> f64 {
    v.dt - p.s.iter().zip(&v.du).map(|(s, du)| s * du).sum::<f64>()
}

/// dα = Σ duᵢ ∧ dsᵢ.
pub fn d_alpha_eval(v: &Tangent, w: &Tangent) -> f64 {
    (0..v.n()).map(|i| v.du[i] * w.ds[i] - v.ds[i] * w.du[i]).sum()
}

pub fn reeb_field(p: &ChartPoint) -> Tangent {
    Tangent::d_t(p.n())
}

/// Basis of ker α at `p`: ∂_{sᵢ} and ∂_{uᵢ} + sᵢ ∂_t.
pub fn kernel_basis(p: &ChartPoint) -> Vec<Tangent> {
    let n = p.n();
    let mut basis: Vec<Tangent> = (0..n).map(|i| Tangent::d_s(n, i)).collect();
    for i in 0..n {
        let mut w = Tangent::d_u(n, i);
        w.dt = p.s[i];
        basis.push(w);
    }
    basis
}

/// Value of α ∧ (dα)ⁿ on the coordinate frame, up to the constant
/// normalization of the wedge product.
pub fn contact_volume(p: &ChartPoint) -> f64 {
    let n = p.n();
    let dim = 2 * n + 1;
    let frame: Vec<Tangent> = (0..dim)
        .map(|k| {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            Tangent::from_slice(n, &v)
        })
        .collect();
    let mut perm: Vec<usize> = (0..dim).collect();
    let mut total = 0.0;
    permute(&mut perm, 0, &mut |perm| {
        let sign = permutation_sign(perm);
        let mut term = alpha_eval(p, &frame[perm[0]]);
        for j in 0..n {
            term *= d_alpha_eval(&frame[perm[1 + 2 * j]], &frame[perm[2 + 2 * j]]);
        }
        total += sign * term;
    });
    total
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

fn permutation_sign(perm: &[usize]) -> f64 {
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// A scalar field on the chart with its gradient in (s, t, u) order.
pub trait ScalarField: Sync {
    fn value(&self, p: &ChartPoint) -> f64;
    fn gradient(&self, p: &ChartPoint) -> Tangent;
}

/// Closure-backed scalar field.
pub struct FnField<F, G>(pub F, pub G);

impl<F, G> ScalarField for FnField<F, G>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
    G: Fn(&ChartPoint) -> Tangent + Sync,
{
    fn value(&self, p: &ChartPoint) -> f64 {
        (self.0)(p)
    }
    fn gradient(&self, p: &ChartPoint) -> Tangent {
        (self.1)(p)
    }
}

/// The gradient paired with a tangent, i.e. dH(v).
fn pair(grad: &Tangent, v: &Tangent) -> f64 {
    grad.to_vec().iter().zip(v.to_vec()).map(|(a, b)| a * b).sum()
}

/// Solves α(V) = H and (ι_V dα + dH − dH(R)·α)|_{ker α} = 0 for V.
pub fn contact_vector_field(h: &dyn ScalarField, p: &ChartPoint) -> Result<Tangent> {
    let n = p.n();
    let dim = 2 * n + 1;
    let grad = h.gradient(p);
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for k in 0..dim {
        let mut e = vec![0.0; dim];
        e[k] = 1.0;
        a[(0, k)] = alpha_eval(p, &Tangent::from_slice(n, &e));
    }
    b[0] = h.value(p);
    for (row, w) in kernel_basis(p).iter().enumerate() {
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            a[(row + 1, k)] = d_alpha_eval(&Tangent::from_slice(n, &e), w);
        }
        b[row + 1] = -pair(&grad, w);
    }
    let x = numerics::solve(a, b).ok_or_else(|| Error::Singular("contact vector field system".into()))?;
    Ok(Tangent::from_slice(n, x.as_slice()))
}

/// Residuals of the two defining equations of a contact vector field.
pub fn contact_field_residual(h: &dyn ScalarField, p: &ChartPoint, v: &Tangent) -> f64 {
    let grad = h.gradient(p);
    let r = reeb_field(p);
    let mut res = (alpha_eval(p, v) - h.value(p)).abs();
    for w in kernel_basis(p) {
        let val = d_alpha_eval(v, &w) + pair(&grad, &w) - pair(&grad, &r) * alpha_eval(p, &w);
        res = res.max(val.abs());
    }
    res
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactCheck {
    pub ok: bool,
    pub max_residual: f64,
    pub worst_index: usize,
}

/// Compares α_{F(p)}(DF·v) with α_p(v) over the samples.
pub fn verify_strict_contact(
    map: &dyn Fn(&ChartPoint) -> ChartPoint,
    jac: &dyn Fn(&ChartPoint) -> DMatrix<f64>,
    samples: &[(ChartPoint, Tangent)],
    tol: f64,
    domain: &ChartParams,
) -> Result<ContactCheck> {
    let mut check = ContactCheck {
        ok: true,
        max_residual: 0.0,
        worst_index: 0,
    };
    for (index, (p, v)) in samples.iter().enumerate() {
        if !domain.contains(p) {
            return Err(Error::Domain { index });
        }
        let fp = map(p);
        if !domain.contains(&fp) {
            return Err(Error::Domain { index });
        }
        let res = (alpha_eval(&fp, &v.push(&jac(p))) - alpha_eval(p, v)).abs();
        if res > check.max_residual {
            check.max_residual = res;
            check.worst_index = index;
        }
    }
    check.ok = check.max_residual <= tol;
    Ok(check)
}

/// Residual of kernel preservation, max |α_{F(p)}(DF·w)| over unit kernel vectors w.
pub fn kernel_residual(fp: &ChartPoint, p: &ChartPoint, jac: &DMatrix<f64>) -> f64 {
    kernel_basis(p)
        .iter()
        .map(|w| (alpha_eval(fp, &w.push(jac)) / w.norm()).abs())
        .fold(0.0, f64::max)
}

/// Finite-difference Jacobian of a chart map, in (s, t, u) order.
pub fn fd_jacobian(map: &dyn Fn(&ChartPoint) -> ChartPoint, p: &ChartPoint, h_rel: f64) -> DMatrix<f64> {
    let n = p.n();
    let flat = |x: &[f64]| map(&ChartPoint::from_slice(n, x)).to_vec();
    numerics::fd_jacobian(&flat, &p.to_vec(), h_rel)
}

pub fn fd_jacobian_richardson(map: &dyn Fn(&ChartPoint) -> ChartPoint, p: &ChartPoint, h_rel: f64) -> DMatrix<f64> {
    let n = p.n();
    let flat = |x: &[f64]| map(&ChartPoint::from_slice(n, x)).to_vec();
    numerics::fd_jacobian_richardson(&flat, &p.to_vec(), h_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(s: f64, t: f64, u: f64) -> ChartPoint {
        ChartPoint::new(vec![s], t, vec![u])
    }

    fn tg(ds: f64, dt: f64, du: f64) -> Tangent {
        Tangent::new(vec![ds], dt, vec![du])
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_eval(&pt(0.0, 0.0, 0.0), &tg(0.0, 1.0, 0.0)), 1.0);
        let p = ChartPoint::new(vec![2.0, 0.0], 0.1, vec![0.0, 0.0]);
        assert_eq!(alpha_eval(&p, &Tangent::d_u(2, 0)), -2.0);
        assert_eq!(alpha_eval(&pt(1.3, 0.2, -0.1), &tg(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn reeb_examples() {
        let q = ChartParams::default().q();
        assert_eq!(reeb_field(&q), tg(0.0, 1.0, 0.0));
        let p = pt(0.7, 0.3, -0.1);
        let r = reeb_field(&p);
        assert_eq!(d_alpha_eval(&r, &Tangent::d_s(1, 0)), 0.0);
        assert_eq!(alpha_eval(&p, &r), 1.0);
    }

    #[test]
    fn contact_volume_nonzero_on_grid() {
        let params = ChartParams::default();
        for i in 0..=10 {
            for j in 0..=10 {
                let p = pt(-3.0 + 0.6 * i as f64, -0.05 + 0.06 * j as f64, 0.2 - 0.04 * i as f64);
                assert!(params.contains(&p));
                assert!(contact_volume(&p).abs() > 0.5);
            }
        }
        let p2 = ChartPoint::new(vec![0.5, -1.0], 0.2, vec![0.1, 0.0]);
        assert!(contact_volume(&p2).abs() > 0.5);
    }

    #[test]
    fn identity_is_strict() {
        let params = ChartParams::default();
        let samples = vec![(pt(0.5, 0.1, 0.05), tg(0.3, -1.0, 2.0))];
        let check = verify_strict_contact(&|p| p.clone(), &|_| DMatrix::identity(3, 3), &samples, 1e-12, &params).unwrap();
        assert!(check.ok);
        assert_eq!(check.max_residual, 0.0);
    }

    #[test]
    fn scaling_is_strict_and_translation_is_not() {
        let params = ChartParams::default();
        let samples: Vec<_> = (0..50)
            .map(|k| {
                let x = k as f64 / 50.0;
                (pt(x - 0.5, 0.4 * x, 0.05 * x), tg(x, 1.0 - x, 2.0 * x - 0.7))
            })
            .collect();
        let scale = |p: &ChartPoint| pt(p.s[0] / 2.0, p.t, 2.0 * p.u[0]);
        let scale_jac = |_: &ChartPoint| DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 2.0]));
        let check = verify_strict_contact(&scale, &scale_jac, &samples, 1e-12, &params).unwrap();
        assert!(check.ok && check.max_residual <= 1e-12);

        let shift = |p: &ChartPoint| pt(p.s[0] + 1.0, p.t, p.u[0]);
        let check = verify_strict_contact(&shift, &|_| DMatrix::identity(3, 3), &samples, 1e-12, &params).unwrap();
        let expected = samples.iter().map(|(_, v)| v.du[0].abs()).fold(0.0, f64::max);
        assert!(!check.ok);
        assert!((check.max_residual - expected).abs() < 1e-14);
    }

    #[test]
    fn image_outside_chart_names_sample() {
        let params = ChartParams::default();
        let samples = vec![(pt(0.0, 0.1, 0.0), tg(0.0, 1.0, 0.0)), (pt(2.5, 0.1, 0.0), tg(0.0, 1.0, 0.0))];
        let shift = |p: &ChartPoint| pt(p.s[0] + 1.0, p.t, p.u[0]);
        let err = verify_strict_contact(&shift, &|_| DMatrix::identity(3, 3), &samples, 1e-12, &params).unwrap_err();
        assert_eq!(err, Error::Domain { index: 1 });
    }

    #[test]
    fn contact_field_of_profile_hamiltonian() {
        // H = h(t) with h = sin gives h ∂_t + h' s ∂_s for this α
        let h = FnField(|p: &ChartPoint| p.t.sin(), |p: &ChartPoint| tg(0.0, p.t.cos(), 0.0));
        let p = pt(0.8, 0.3, -0.1);
        let v = contact_vector_field(&h, &p).unwrap();
        assert!((v.dt - 0.3f64.sin()).abs() < 1e-14);
        assert!((v.ds[0] - 0.3f64.cos() * 0.8).abs() < 1e-14);
        assert!(v.du[0].abs() < 1e-14);
    }

    #[test]
    fn constant_hamiltonian_gives_reeb() {
        let one = FnField(|_: &ChartPoint| 1.0, |p: &ChartPoint| Tangent::zero(p.n()));
        let p = pt(-1.2, 0.4, 0.15);
        assert_eq!(contact_vector_field(&one, &p).unwrap(), reeb_field(&p));
    }

    #[test]
    fn linear_hamiltonian_residual() {
        let h = FnField(|p: &ChartPoint| p.u[0], |_: &ChartPoint| tg(0.0, 0.0, 1.0));
        let a = ChartParams::default().b(0.0);
        let v = contact_vector_field(&h, &a).unwrap();
        assert!(contact_field_residual(&h, &a, &v) <= 1e-10);
        // independent check: α(V) = u = 0 and ds-component equals H_u + s H_t = 1
        assert!((v.ds[0] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn alpha_is_linear(s in -3.0..3.0f64, t in -0.05..0.55f64, u in -0.2..0.2f64,
                           a in -5.0..5.0f64, b in -5.0..5.0f64,
                           v in prop::array::uniform3(-2.0..2.0f64), w in prop::array::uniform3(-2.0..2.0f64)) {
            let p = pt(s, t, u);
            let v = tg(v[0], v[1], v[2]);
            let w = tg(w[0], w[1], w[2]);
            let lhs = alpha_eval(&p, &v.scale(a).add(&w.scale(b)));
            let rhs = a * alpha_eval(&p, &v) + b * alpha_eval(&p, &w);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn d_alpha_is_antisymmetric(v in prop::array::uniform3(-2.0..2.0f64), w in prop::array::uniform3(-2.0..2.0f64)) {
            let v = tg(v[0], v[1], v[2]);
            let w = tg(w[0], w[1], w[2]);
            prop_assert_eq!(d_alpha_eval(&v, &w), -d_alpha_eval(&w, &v));
        }

        #[test]
        fn random_hamiltonian_solves_defining_equations(s in -3.0..3.0f64, t in -0.05..0.55f64, u in -0.2..0.2f64,
                                                        c in prop::array::uniform4(-1.0..1.0f64)) {
            let h = FnField(
                move |p: &ChartPoint| c[0] + c[1] * p.s[0] * p.u[0] + c[2] * (p.t * 3.0).sin() + c[3] * p.u[0],
                move |p: &ChartPoint| tg(c[1] * p.u[0], 3.0 * c[2] * (p.t * 3.0).cos(), c[1] * p.s[0] + c[3]),
            );
            let p = pt(s, t, u);
            let v = contact_vector_field(&h, &p).unwrap();
            prop_assert!(contact_field_residual(&h, &p, &v) <= 1e-10);
        }
    }
}
