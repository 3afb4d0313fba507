use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Blender, BlenderBox};
use crate::chart::ChartPoint;
use crate::error::{Error, Result};
use crate::verdict::Verdict;

/// Vertical disk over D_u(u0, ρ): (s, t) = (s0, t0) + (ds, dt)(û) at
/// u = u0 + ρû, sampled at K + 1 equally spaced nodes û ∈ [−1, 1], with zero
/// offset at û = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalDisk {
    pub s0: f64,
    pub t0: f64,
    pub ds: Vec<f64>,
    pub dt: Vec<f64>,
    pub u_radius: f64,
    #[serde(default)]
    pub u0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Short,
    Long,
}

impl VerticalDisk {
    pub fn flat(s0: f64, t0: f64, k: usize, u_radius: f64) -> Self {
        assert!(k >= 2 && k.is_multiple_of(2), "node count K must be even");
        VerticalDisk {
            s0,
            t0,
            ds: vec![0.0; k + 1],
            dt: vec![0.0; k + 1],
            u_radius,
            u0: 0.0,
        }
    }

    /// Builds a disk from raw offsets, moving the values at û = 0 into the center.
    pub fn from_offsets(s0: f64, t0: f64, ds: Vec<f64>, dt: Vec<f64>, u_radius: f64) -> Result<Self> {
        if ds.len() != dt.len() || ds.len() < 3 || ds.len().is_multiple_of(2) {
            return Err(Error::Precondition("disk needs an odd number (≥ 3) of nodes".into()));
        }
        let c = ds.len() / 2;
        let (cs, ct) = (ds[c], dt[c]);
        Ok(VerticalDisk {
            s0: s0 + cs,
            t0: t0 + ct,
            ds: ds.iter().map(|x| x - cs).collect(),
            dt: dt.iter().map(|x| x - ct).collect(),
            u_radius,
            u0: 0.0,
        })
    }

    pub fn nodes(&self) -> usize {
        self.ds.len()
    }

    fn k(&self) -> usize {
        self.ds.len() - 1
    }

    pub fn uhat(&self, i: usize) -> f64 {
        -1.0 + 2.0 * i as f64 / self.k() as f64
    }

    pub fn point(&self, i: usize) -> ChartPoint {
        ChartPoint::new(vec![self.s0 + self.ds[i]], self.t0 + self.dt[i], vec![self.u0 + self.uhat(i) * self.u_radius])
    }

    /// Linear interpolation of the offsets at û ∈ [−1, 1].
    pub fn offsets_at(&self, uhat: f64) -> (f64, f64) {
        let x = ((uhat + 1.0) * 0.5 * self.k() as f64).clamp(0.0, self.k() as f64);
        let i = (x.floor() as usize).min(self.k() - 1);
        let w = x - i as f64;
        (
            self.ds[i] * (1.0 - w) + self.ds[i + 1] * w,
            self.dt[i] * (1.0 - w) + self.dt[i + 1] * w,
        )
    }

    /// Sampled Lipschitz constant in the metric with |du| weighted by ρ^{−1/2}.
    pub fn lipschitz(&self) -> f64 {
        let du = 2.0 / self.k() as f64 * self.u_radius.sqrt();
        (0..self.k())
            .map(|i| (self.ds[i + 1] - self.ds[i]).hypot(self.dt[i + 1] - self.dt[i]) / du)
            .fold(0.0, f64::max)
    }

    pub fn is_vertical(&self, eps: f64) -> bool {
        self.lipschitz() <= 2.0 * eps
    }

    /// The disk meets u = 0 at its center; it is right of W when t0 > 0.
    pub fn right_of_w(&self) -> bool {
        self.t0 > 0.0
    }

    pub fn t_range(&self) -> (f64, f64) {
        self.dt
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(self.t0 + d), hi.max(self.t0 + d)))
    }

    pub fn min_abs_t(&self) -> f64 {
        self.dt.iter().map(|d| (self.t0 + d).abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn in_box(&self, bx: &BlenderBox) -> bool {
        self.u0 == 0.0
            && (self.u_radius - bx.u_radius).abs() <= 1e-12 * bx.u_radius
            && self
                .ds
                .iter()
                .zip(&self.dt)
                .all(|(ds, dt)| (self.s0 + ds).abs() <= bx.s_radius && (self.t0 + dt).abs() <= bx.t_radius)
    }

    /// Diameter of the (s, t)-projection.
    pub fn st_diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.nodes() {
            for j in i + 1..self.nodes() {
                d = d.max((self.ds[i] - self.ds[j]).hypot(self.dt[i] - self.dt[j]));
            }
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskFailure {
    pub index: usize,
    pub seed: u64,
    pub iteration: usize,
    pub reason: String,
    /// Center heights and branches up to the failure.
    pub history: Vec<(f64, Branch)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinctiveReport {
    pub r: f64,
    pub n_disks: usize,
    pub n_iter: usize,
    pub nodes: usize,
    pub survivors: usize,
    pub pass_rate: f64,
    pub short_steps: usize,
    pub long_steps: usize,
    pub max_lipschitz: f64,
    pub max_st_diameter: f64,
    pub failures: Vec<DiskFailure>,
    pub verdict: Verdict,
    /// Per-disk survival, in seed order.
    pub survived: Vec<bool>,
}

struct Run {
    failure: Option<DiskFailure>,
    short: usize,
    long: usize,
    max_lip: f64,
    max_diam: f64,
}

impl Blender {
    /// Random vertical disk right of W: sine offsets whose slopes keep the
    /// Lipschitz constant below 0.9ε.
    pub fn random_disk(&self, rng: &mut impl Rng, k: usize) -> VerticalDisk {
        let rho = self.rho();
        let tau = self.bx.t_radius;
        let s0 = rng.gen_range(-1.5..1.5);
        let t0 = rng.gen_range(0.02 * tau..0.98 * tau);
        let cap = 0.9 * self.eps() / std::f64::consts::SQRT_2;
        let wave = |rng: &mut dyn rand::RngCore| {
            let omega = rng.gen_range(1.0..6.0);
            let amp = cap / omega * rng.gen_range(0.2..1.0) * rho.sqrt();
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            (omega, amp, phase)
        };
        let (ws, as_, ps) = wave(rng);
        let (wt, at, pt) = wave(rng);
        let mut d = VerticalDisk::flat(s0, t0, k, rho);
        for i in 0..=k {
            let u = d.uhat(i);
            d.ds[i] = as_ * ((ws * u + ps).sin() - ps.sin());
            d.dt[i] = at * ((wt * u + pt).sin() - pt.sin());
        }
        d
    }

    pub fn disk_seed(&self, seed: u64, index: usize) -> u64 {
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
    }

    pub fn random_disks(&self, n: usize, k: usize, seed: u64) -> Vec<VerticalDisk> {
        (0..n)
            .map(|i| self.random_disk(&mut ChaCha8Rng::seed_from_u64(self.disk_seed(seed, i)), k))
            .collect()
    }

    /// Disk through the heteroclinic point (1, θ, 0) on the threshold height,
    /// which takes the long branch.
    pub fn heteroclinic_disk(&self, k: usize) -> Result<VerticalDisk> {
        let p = self.model.heteroclinic_point(self.r(), self.r() - self.theta)?;
        // r − (r − θ) can round below θ; pin the tie exactly
        debug_assert!((p.t - self.theta).abs() < 1e-15);
        Ok(VerticalDisk::flat(p.s[0], self.theta, k, self.rho()))
    }

    /// Random disks plus D_Q, the heteroclinic disk, and flat disks at τ/2
    /// and just below τ.
    pub fn standard_disks(&self) -> Vec<VerticalDisk> {
        let k = self.opts.disk_nodes;
        let mut disks = self.random_disks(self.opts.disks, k, self.opts.seed);
        disks.extend(self.d_q(k).ok());
        disks.extend(self.heteroclinic_disk(k).ok());
        let tau = self.bx.t_radius;
        disks.push(VerticalDisk::flat(0.0, 0.5 * tau, k, self.rho()));
        disks.push(VerticalDisk::flat(-1.0, 0.999 * tau, k, self.rho()));
        disks
    }

    /// Unstable disk of P inside the box: the image of the u-leaf through
    /// the first point of W^u(Q)'s t-axis orbit landing in
    /// (L − r e^{−r}, L − r e^{−2r}], pulled back one block and returned.
    pub fn d_q(&self, k: usize) -> Result<VerticalDisk> {
        let r = self.r();
        let l = self.model.chart.l;
        let flow = &self.model.flow;
        let lo = flow.psi_flow(r, l - r)?;
        let hi = flow.psi_flow(2.0 * r, l - r)?;
        let mut t = r;
        let mut steps = 0;
        while !(t > lo && t <= hi) {
            t = flow.psi_flow(r, t)?;
            steps += 1;
            if steps > 1_000_000 {
                return Err(Error::Inconclusive("D_Q orbit did not reach its window".into()));
            }
        }
        let t_w = flow.psi_flow(-(self.model.params.block_units() as f64) * r, t)?;
        let w = ChartPoint::new(vec![0.0], t_w, vec![self.model.params.x_u]);
        if !self.model.in_window(&w) {
            return Err(Error::NotInWindow);
        }
        let (img, j) = self.model.macro_step_jacobian(&w, r)?;
        let mut d = VerticalDisk::flat(img.s[0], img.t, k, self.rho());
        let lam_k0 = self.model.params.lambda.powi(self.model.params.k0);
        for i in 0..=k {
            let du = lam_k0 * self.rho() * d.uhat(i);
            d.ds[i] = j[(0, 2)] * du;
            d.dt[i] = j[(1, 2)] * du;
        }
        Ok(d)
    }

    /// One step of the disk dynamics: Ψ^N if the center height is below
    /// θ = t(Ψ^{−3N}(Q_r)), otherwise Ψ^{Nm_r} (ties go long). The image is
    /// re-graphed over the same û-grid by pushing offsets through the
    /// Jacobian at the source center.
    pub fn iterate_disk(&self, d: &VerticalDisk) -> Result<(VerticalDisk, Branch)> {
        if !d.is_vertical(self.eps()) {
            return Err(Error::Precondition(format!("input disk lipschitz {:.3e} > 2ε", d.lipschitz())));
        }
        if !d.right_of_w() {
            return Err(Error::Precondition(format!("input disk not right of W (t0 = {:e})", d.t0)));
        }
        let rho = self.rho();
        let k = d.nodes() - 1;
        let mut out = VerticalDisk::flat(0.0, 0.0, k, rho);
        let branch = if d.t0 < self.theta {
            let c = ChartPoint::new(vec![d.s0], d.t0, vec![0.0]);
            let img = self.psi_n(&c)?;
            let j = self.psi_n_jacobian(&c)?;
            let shrink = self.model.params.lambda.powi(self.n_iter() as i32);
            out.s0 = img.s[0];
            out.t0 = img.t;
            for i in 0..=k {
                let src = shrink * out.uhat(i);
                let (ds, dt) = d.offsets_at(src);
                let du = rho * src;
                out.ds[i] = j[(0, 0)] * ds + j[(0, 1)] * dt + j[(0, 2)] * du;
                out.dt[i] = j[(1, 0)] * ds + j[(1, 1)] * dt + j[(1, 2)] * du;
            }
            Branch::Short
        } else {
            let uc = self.long_center_uhat();
            let scale = self.long_s_factor_ln().exp();
            if uc.abs() + scale > 1.0 {
                return Err(Error::Model("long-branch source leaves the disk".into()));
            }
            let (cs, ct) = d.offsets_at(uc);
            let x = self.point(d.s0 + cs, d.t0 + ct, uc);
            let img = self.long_forward(x.s[0], x.t, 0.0)?;
            let j = self.long_jacobian(&x)?;
            out.s0 = 1.0 + img.sigma;
            out.t0 = img.t;
            for i in 0..=k {
                let src = uc + scale * out.uhat(i);
                let (ds, dt) = d.offsets_at(src);
                let (ds, dt) = (ds - cs, dt - ct);
                let du = rho * scale * out.uhat(i);
                out.ds[i] = j[(0, 0)] * ds + j[(0, 1)] * dt + j[(0, 2)] * du;
                out.dt[i] = j[(1, 0)] * ds + j[(1, 1)] * dt + j[(1, 2)] * du;
            }
            Branch::Long
        };
        let lip = out.lipschitz();
        if lip > 2.0 * self.eps() {
            return Err(Error::Model(format!(
                "image of disk at t0 = {:e} fails the graph property (lipschitz {lip:.3e})",
                d.t0
            )));
        }
        Ok((out, branch))
    }

    fn run_disk(&self, index: usize, seed: u64, disk: &VerticalDisk, n_iter: usize) -> Run {
        let mut run = Run {
            failure: None,
            short: 0,
            long: 0,
            max_lip: disk.lipschitz(),
            max_diam: disk.st_diameter(),
        };
        let mut history = vec![];
        let mut cur = disk.clone();
        let limit = self.bx.diameter();
        for it in 0..n_iter {
            let reason = match self.iterate_disk(&cur) {
                Ok((next, branch)) => {
                    history.push((next.t0, branch));
                    match branch {
                        Branch::Short => run.short += 1,
                        Branch::Long => run.long += 1,
                    }
                    run.max_lip = run.max_lip.max(next.lipschitz());
                    run.max_diam = run.max_diam.max(next.st_diameter());
                    let bad = if !next.in_box(&self.bx) {
                        Some("iterate leaves the box".to_string())
                    } else if !next.right_of_w() {
                        Some("iterate is not right of W".to_string())
                    } else if next.st_diameter() > limit {
                        Some("projection diameter exceeds the box".to_string())
                    } else {
                        None
                    };
                    cur = next;
                    bad
                }
                Err(e) => Some(e.to_string()),
            };
            if let Some(reason) = reason {
                run.failure = Some(DiskFailure {
                    index,
                    seed,
                    iteration: it,
                    reason,
                    history,
                });
                break;
            }
        }
        run
    }

    /// Iterates seeded random disks right of W and checks that every iterate
    /// is again a vertical disk in the box, right of W.
    pub fn distinctive_property_test(&self, n_disks: usize, n_iter: usize, k: usize, seed: u64) -> DistinctiveReport {
        let disks = self.random_disks(n_disks, k, seed);
        let seeds: Vec<u64> = (0..n_disks).map(|i| self.disk_seed(seed, i)).collect();
        self.distinctive_for_disks(&disks, &seeds, n_iter)
    }

    pub fn distinctive_for_disks(&self, disks: &[VerticalDisk], seeds: &[u64], n_iter: usize) -> DistinctiveReport {
        let runs = self
            .opts
            .exec
            .map_range(disks.len(), |i| self.run_disk(i, seeds.get(i).copied().unwrap_or(0), &disks[i], n_iter));
        let survived: Vec<bool> = runs.iter().map(|r| r.failure.is_none()).collect();
        let survivors = survived.iter().filter(|&&b| b).count();
        let n = disks.len();
        DistinctiveReport {
            r: self.r(),
            n_disks: n,
            n_iter,
            nodes: disks.first().map(|d| d.nodes()).unwrap_or(0),
            survivors,
            pass_rate: if n == 0 { 0.0 } else { survivors as f64 / n as f64 },
            short_steps: runs.iter().map(|r| r.short).sum(),
            long_steps: runs.iter().map(|r| r.long).sum(),
            max_lipschitz: runs.iter().map(|r| r.max_lip).fold(0.0, f64::max),
            max_st_diameter: runs.iter().map(|r| r.max_diam).fold(0.0, f64::max),
            verdict: Verdict::from_bool(n > 0 && survivors == n),
            failures: runs.into_iter().filter_map(|r| r.failure).collect(),
            survived,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blender::VerifyOptions;
    use crate::model::Model;
    use proptest::prelude::*;

    fn blender(r: f64) -> Blender {
        Blender::new(Model::default_model(), r, VerifyOptions::default()).unwrap()
    }

    #[test]
    fn short_branch_scales_t_by_e_to_the_nr() {
        let b = blender(0.05);
        let d = VerticalDisk::flat(0.3, 0.3 * b.theta, 16, b.rho());
        let (img, br) = b.iterate_disk(&d).unwrap();
        assert_eq!(br, Branch::Short);
        assert!((img.t0 - (0.05f64).exp() * d.t0).abs() < 1e-15);
        assert!((img.s0 - 0.4 * (0.05f64).exp() * 0.3).abs() < 1e-15);
    }

    #[test]
    fn long_branch_lands_above_half_r_squared() {
        let b = blender(0.05);
        for frac in [0.0, 0.5, 1.0] {
            let t0 = b.theta + frac * (b.bx.t_radius - b.theta);
            let (img, br) = b.iterate_disk(&VerticalDisk::flat(0.0, t0, 16, b.rho())).unwrap();
            assert_eq!(br, Branch::Long);
            assert!(img.t0 > 0.5 * 0.05 * 0.05, "{}", img.t0);
            assert_eq!(img.s0, 1.0);
            // the image is the sheared u-leaf: dt = ρ û
            assert!((img.dt[16] - b.rho()).abs() < 1e-9 * b.rho());
        }
    }

    #[test]
    fn threshold_tie_goes_long() {
        let b = blender(0.05);
        let (_, br) = b.iterate_disk(&VerticalDisk::flat(0.5, b.theta, 8, b.rho())).unwrap();
        assert_eq!(br, Branch::Long);
        let (_, br) = b.iterate_disk(&b.heteroclinic_disk(8).unwrap()).unwrap();
        assert_eq!(br, Branch::Long);
    }

    #[test]
    fn disk_left_of_w_rejected() {
        let b = blender(0.05);
        let d = VerticalDisk::flat(0.0, -0.001, 8, b.rho());
        assert!(matches!(b.iterate_disk(&d), Err(Error::Precondition(_))));
    }

    #[test]
    fn d_q_is_vertical_right_of_w_and_survives() {
        let b = blender(0.05);
        let d = b.d_q(32).unwrap();
        let r: f64 = 0.05;
        assert!(d.t0 > r * (1.0 - (-r).exp()) - 1e-15 && d.t0 <= r * (1.0 - (-2.0 * r).exp()) + 1e-15);
        assert_eq!(d.s0, 1.0);
        assert!(d.is_vertical(b.eps()) && d.right_of_w() && d.in_box(&b.bx));
        let rep = b.distinctive_for_disks(&[d], &[0], 50);
        assert_eq!(rep.survivors, 1, "{:?}", rep.failures);
    }

    #[test]
    fn distinctive_small_run() {
        let b = blender(0.05);
        let rep = b.distinctive_property_test(10, 20, 16, 3);
        assert_eq!(rep.verdict, Verdict::Pass, "{:?}", rep.failures);
        assert!(rep.long_steps > 0 && rep.short_steps > 0);
        assert!(rep.max_lipschitz <= 2.0 * b.eps());
    }

    #[test]
    fn from_offsets_recenters() {
        let d = VerticalDisk::from_offsets(1.0, 0.01, vec![0.1, 0.2, 0.3], vec![0.0, 1e-3, 0.0], 1e-6).unwrap();
        assert_eq!(d.s0, 1.2);
        assert_eq!(d.ds, vec![-0.1 + 0.0, 0.0, 0.09999999999999998]);
        assert!(VerticalDisk::from_offsets(0.0, 0.0, vec![0.0; 4], vec![0.0; 4], 1.0).is_err());
    }

    #[test]
    fn lipschitz_of_linear_graph() {
        // ds = c·ρ^{1/2}·û has weighted slope exactly c
        let rho: f64 = 1e-20;
        let mut d = VerticalDisk::flat(0.0, 0.1, 8, rho);
        for i in 0..=8 {
            d.ds[i] = 0.3 * rho.sqrt() * d.uhat(i);
        }
        assert!((d.lipschitz() - 0.3).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn iterates_stay_vertical(seed in 0u64..1_000_000) {
            let b = blender(0.1);
            let d = b.random_disk(&mut ChaCha8Rng::seed_from_u64(seed), 16);
            prop_assert!(d.is_vertical(b.eps()));
            let (img, _) = b.iterate_disk(&d).unwrap();
            prop_assert!(img.lipschitz() <= d.lipschitz().max(b.rho().sqrt() * 1.01));
            prop_assert!(img.right_of_w() && img.in_box(&b.bx));
        }
    }
}
