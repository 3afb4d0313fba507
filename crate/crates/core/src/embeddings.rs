//! Pullback identities for the disk and cosphere neighborhood coordinates,
//! with the circle as base manifold and β = dx on it.
//!
//! Forms are coefficient vectors in the coordinates of their space; a map F
//! pulls ω back to DFᵀ·ω(F(p)).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type FormFn<'a> = &'a dyn Fn(&[f64]) -> DVector<f64>;
pub type MapFn<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;
pub type JacFn<'a> = &'a dyn Fn(&[f64]) -> DMatrix<f64>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackCheck {
    pub stage: String,
    pub samples: usize,
    /// max over samples and coordinate vectors of |F^*ω_target − ω_source|.
    pub max_residual: f64,
    pub worst: Vec<f64>,
}

/// Residual of F^*ω_target = ω_source over the samples.
pub fn pullback_residual(stage: &str, source: FormFn, target: FormFn, map: MapFn, jac: JacFn, samples: &[Vec<f64>]) -> PullbackCheck {
    let mut out = PullbackCheck {
        stage: stage.to_string(),
        samples: samples.len(),
        max_residual: 0.0,
        worst: vec![],
    };
    for p in samples {
        let pulled = jac(p).transpose() * target(&map(p));
        let res = (pulled - source(p)).amax();
        if res > out.max_residual || out.worst.is_empty() {
            out.max_residual = out.max_residual.max(res);
            out.worst = p.clone();
        }
    }
    out
}

fn check_a(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("a = {a} must be positive")))
    }
}

/// ι(s, t, x) = (√(−s/(2πa)), 2πt, x) into polar coordinates (r, θ, x).
pub fn disk_map(a: f64, p: &[f64]) -> Vec<f64> {
    vec![(-p[0] / (TAU * a)).sqrt(), TAU * p[1], p[2]]
}

pub fn disk_jacobian(a: f64, p: &[f64]) -> DMatrix<f64> {
    let r = (-p[0] / (TAU * a)).sqrt();
    let mut j = DMatrix::zeros(3, 3);
    j[(0, 0)] = -1.0 / (2.0 * TAU * a * r);
    j[(1, 1)] = TAU;
    j[(2, 2)] = 1.0;
    j
}

/// Random (s, t, x) with s ∈ (−2πa, 0).
pub fn disk_samples(a: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| vec![-TAU * a * rng.gen_range(1e-3..1.0), rng.gen::<f64>(), rng.gen::<f64>()])
        .collect()
}

/// ι^*(−a r² dθ + dx) = s dt + dx on (−2πa, 0) × S¹ × S¹.
pub fn disk_neighborhood_identity(a: f64, samples: &[Vec<f64>]) -> Result<PullbackCheck> {
    check_a(a)?;
    if let Some(i) = samples.iter().position(|p| !(p[0] > -TAU * a && p[0] < 0.0)) {
        return Err(Error::Domain { index: i });
    }
    let source = |p: &[f64]| DVector::from_vec(vec![0.0, p[0], 1.0]);
    let target = |q: &[f64]| DVector::from_vec(vec![0.0, -a * q[0] * q[0], 1.0]);
    Ok(pullback_residual(
        "disk",
        &source,
        &target,
        &|p| disk_map(a, p),
        &|p| disk_jacobian(a, p),
        samples,
    ))
}

/// Parameters of the cosphere chain: the twist and polar maps are centered
/// at (s₀, t₀).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosphereParams {
    pub a: f64,
    pub s0: f64,
    pub t0: f64,
    /// Largest polar radius sampled.
    pub r_max: f64,
}

impl CosphereParams {
    pub fn new(a: f64) -> Self {
        CosphereParams {
            a,
            s0: -1.0,
            t0: 0.0,
            r_max: 0.5,
        }
    }
}

/// ȷ(s, t, x) = (−ln(−s), t, x) for s < 0.
pub fn jmath(p: &[f64]) -> Vec<f64> {
    vec![-(-p[0]).ln(), p[1], p[2]]
}

pub fn jmath_jacobian(p: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::identity(3, 3);
    j[(0, 0)] = -1.0 / p[0];
    j
}

/// τ(s, t) = ½(t − t₀)(s + s₀), a primitive of λ + s dt for
/// λ = ½((t − t₀)ds − (s − s₀)dt).
pub fn twist_time(c: &CosphereParams, s: f64, t: f64) -> f64 {
    0.5 * (t - c.t0) * (s + c.s0)
}

/// Ψ(s, t, x) = (s, t, Φ^R_{τ(s,t)}(x)), the Reeb flow on the circle being
/// the rotation x ↦ x + τ.
pub fn twist(c: &CosphereParams, p: &[f64]) -> Vec<f64> {
    vec![p[0], p[1], p[2] + twist_time(c, p[0], p[1])]
}

pub fn twist_jacobian(c: &CosphereParams, p: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::identity(3, 3);
    j[(2, 0)] = 0.5 * (p[1] - c.t0);
    j[(2, 1)] = 0.5 * (p[0] + c.s0);
    j
}

/// φ(r, θ, x) = (s₀ + √a·r cos θ, t₀ + √a·r sin θ, x).
pub fn polar(c: &CosphereParams, q: &[f64]) -> Vec<f64> {
    let k = c.a.sqrt();
    vec![c.s0 + k * q[0] * q[1].cos(), c.t0 + k * q[0] * q[1].sin(), q[2]]
}

pub fn polar_jacobian(c: &CosphereParams, q: &[f64]) -> DMatrix<f64> {
    let k = c.a.sqrt();
    let (sn, cs) = q[1].sin_cos();
    let mut j = DMatrix::identity(3, 3);
    j[(0, 0)] = k * cs;
    j[(0, 1)] = -k * q[0] * sn;
    j[(1, 0)] = k * sn;
    j[(1, 1)] = k * q[0] * cs;
    j
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosphereReport {
    pub a: f64,
    pub stages: Vec<PullbackCheck>,
    /// Residual of the composite identity (Ψ∘φ)^*(−s dt + β) = −(a/2)r² dθ + β.
    pub composite: PullbackCheck,
    /// Bound from the per-stage residuals: |Dφ|·res(Ψ) + res(φ).
    pub chained_bound: f64,
}

impl CosphereReport {
    pub fn max_residual(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| s.max_residual)
            .fold(self.composite.max_residual, f64::max)
    }
}

/// Residual of each stage: ȷ, the Reeb twist Ψ, the polar map φ, and Ψ∘φ.
pub fn cosphere_chain_identity(c: &CosphereParams, n: usize, seed: u64) -> Result<CosphereReport> {
    check_a(c.a)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ȷ lives on s < 0; the polar samples avoid r = 0
    let jmath_samples: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![-rng.gen_range(0.05..3.0), rng.gen::<f64>(), rng.gen::<f64>()])
        .collect();
    let polar_samples: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(1e-3..c.r_max), rng.gen_range(0.0..TAU), rng.gen::<f64>()])
        .collect();
    let st_samples: Vec<Vec<f64>> = polar_samples.iter().map(|q| polar(c, q)).collect();

    let contact = |p: &[f64]| DVector::from_vec(vec![0.0, -p[0], 1.0]);
    let jmath_target = |q: &[f64]| DVector::from_vec(vec![0.0, 1.0, q[0].exp()]);
    let jmath_source = |p: &[f64]| DVector::from_vec(vec![0.0, 1.0, -1.0 / p[0]]);
    let liouville = |p: &[f64]| DVector::from_vec(vec![0.5 * (p[1] - c.t0), -0.5 * (p[0] - c.s0), 1.0]);
    let polar_form = |q: &[f64]| DVector::from_vec(vec![0.0, -0.5 * c.a * q[0] * q[0], 1.0]);

    let stages = vec![
        pullback_residual("jmath", &jmath_source, &jmath_target, &jmath, &jmath_jacobian, &jmath_samples),
        pullback_residual(
            "twist",
            &liouville,
            &contact,
            &|p| twist(c, p),
            &|p| twist_jacobian(c, p),
            &st_samples,
        ),
        pullback_residual(
            "polar",
            &polar_form,
            &liouville,
            &|q| polar(c, q),
            &|q| polar_jacobian(c, q),
            &polar_samples,
        ),
    ];
    let composite = pullback_residual(
        "composite",
        &polar_form,
        &contact,
        &|q| twist(c, &polar(c, q)),
        &|q| twist_jacobian(c, &polar(c, q)) * polar_jacobian(c, q),
        &polar_samples,
    );
    let jac_norm = polar_samples
        .iter()
        .map(|q| polar_jacobian(c, q).norm())
        .fold(0.0, f64::max);
    let chained_bound = jac_norm * stages[1].max_residual + stages[2].max_residual;
    Ok(CosphereReport {
        a: c.a,
        stages,
        composite,
        chained_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fd_jacobian_richardson;
    use proptest::prelude::*;

    #[test]
    fn disk_identity_holds() {
        let chk = disk_neighborhood_identity(1.0, &disk_samples(1.0, 1000, 1)).unwrap();
        assert!(chk.max_residual <= 1e-10, "{chk:?}");
    }

    #[test]
    fn disk_radius_examples() {
        let a = 1.7;
        assert_eq!(disk_map(a, &[-TAU * a * 0.25, 0.0, 0.0])[0], 0.5);
        // r²/|s| = 1/(2πa) halves when a doubles
        let s = -0.3;
        let ratio = |a: f64| disk_map(a, &[s, 0.0, 0.0])[0].powi(2) / s.abs();
        assert!((ratio(2.0 * a) / ratio(a) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn disk_rejects_samples_outside_the_range() {
        assert_eq!(
            disk_neighborhood_identity(1.0, &[vec![-0.5, 0.0, 0.0], vec![0.1, 0.0, 0.0]]),
            Err(Error::Domain { index: 1 })
        );
        assert!(disk_neighborhood_identity(-1.0, &[]).is_err());
    }

    #[test]
    fn wrong_form_is_detected() {
        // dropping the factor a from the target must leave a residual
        let a = 2.0;
        let samples = disk_samples(a, 10, 3);
        let chk = pullback_residual(
            "disk",
            &|p: &[f64]| DVector::from_vec(vec![0.0, p[0], 1.0]),
            &|q: &[f64]| DVector::from_vec(vec![0.0, -q[0] * q[0], 1.0]),
            &|p| disk_map(a, p),
            &|p| disk_jacobian(a, p),
            &samples,
        );
        assert!(chk.max_residual > 1e-2);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let c = CosphereParams::new(2.0);
        let p = [-0.7, 0.3, 0.2];
        let q = [0.3, 1.1, 0.4];
        type BoxedMap = Box<dyn Fn(&[f64]) -> Vec<f64>>;
        let pairs: [(BoxedMap, DMatrix<f64>, &[f64]); 4] = [
            (Box::new(|x: &[f64]| disk_map(2.0, x)), disk_jacobian(2.0, &p), &p),
            (Box::new(jmath), jmath_jacobian(&p), &p),
            (Box::new(move |x: &[f64]| twist(&c, x)), twist_jacobian(&c, &p), &p),
            (Box::new(move |x: &[f64]| polar(&c, x)), polar_jacobian(&c, &q), &q),
        ];
        for (f, j, x) in pairs {
            let fd = fd_jacobian_richardson(&*f, x, 1e-5);
            assert!((fd - j).amax() < 1e-8);
        }
    }

    #[test]
    fn jmath_stage_at_reference_point() {
        // s = −e^{−ρ}
        let rho: f64 = 0.8;
        let p = [-(-rho).exp(), 0.2, 0.3];
        assert!((jmath(&p)[0] - rho).abs() < 1e-15);
    }

    #[test]
    fn cosphere_chain_holds_for_each_a() {
        for a in [0.5, 1.0, 2.0] {
            let rep = cosphere_chain_identity(&CosphereParams::new(a), 1000, 7).unwrap();
            for st in &rep.stages {
                assert!(st.max_residual <= 1e-10, "{st:?}");
            }
            assert!(rep.composite.max_residual <= 1e-9);
            assert!(rep.composite.max_residual <= rep.chained_bound + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn disk_identity_random(a in 0.1f64..5.0, s in 1e-3f64..0.999, t in 0.0f64..1.0, x in 0.0f64..1.0) {
            let chk = disk_neighborhood_identity(a, &[vec![-TAU * a * s, t, x]]).unwrap();
            prop_assert!(chk.max_residual <= 1e-10);
        }
    }
}
