//! Unstable leaves by backward iteration, and the unstable holonomy from
//! the slab {u = 0} near P to the slab {u = 0} near a.
//!
//! Every step rule of the model is affine in u with (s, t) independent of u
//! away from the block step, so a flat u-disk pulled back along an orbit and
//! pushed forward again reproduces the leaf up to rounding. Leaves are
//! computed for n = 1.

use serde::{Deserialize, Serialize};

use crate::blender::{build_box, BlenderBox, VerticalDisk};
use crate::chart::{ChartParams, ChartPoint};
use crate::error::{Error, Result};
use crate::model::{Model, RegionTag};

/// Slab {u = level} over [−s_half, s_half] × [t_lo, t_hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transversal {
    pub s_half: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub level: f64,
}

impl Transversal {
    /// [−2, 2]_s × [−δ, L + δ]_t × {0}_u.
    pub fn standard(chart: &ChartParams) -> Self {
        Transversal {
            s_half: 2.0,
            t_lo: -chart.delta,
            t_hi: chart.l + chart.delta,
            level: 0.0,
        }
    }

    pub fn contains(&self, p: &ChartPoint, tol: f64) -> bool {
        p.s.iter().all(|s| s.abs() <= self.s_half)
            && p.t >= self.t_lo
            && p.t <= self.t_hi
            && p.u.iter().all(|u| (u - self.level).abs() <= tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeafOptions {
    pub depth: usize,
    /// Graph nodes minus one (even).
    pub nodes: usize,
    /// Required agreement between depth d and d + 1.
    pub tol: f64,
}

impl Default for LeafOptions {
    fn default() -> Self {
        LeafOptions {
            depth: 40,
            nodes: 32,
            tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub disk: VerticalDisk,
    pub depth: usize,
    /// Largest node discrepancy between depth d and d + 1.
    pub discrepancy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    Chart,
    Block,
}

fn backward_rules(model: &Model, p: &ChartPoint, r: f64, depth: usize) -> Result<(ChartPoint, Vec<Rule>)> {
    let mut cur = p.clone();
    let mut rules = Vec::with_capacity(depth);
    for k in 0..depth {
        let (x, tag) = model.psi_r_inv(&cur, r).map_err(|_| {
            Error::Model(format!("backward orbit escapes after {k} steps; leaf unavailable at depth {depth}"))
        })?;
        rules.push(if tag == RegionTag::ReturnWindow { Rule::Block } else { Rule::Chart });
        cur = x;
    }
    rules.reverse();
    Ok((cur, rules))
}

/// Pushes the points (start.s, start.t, u_b) whose forward u-coordinates are
/// `targets` through the rule sequence.
fn push_leaf(model: &Model, start: &ChartPoint, rules: &[Rule], targets: &[f64], r: f64) -> Result<Vec<ChartPoint>> {
    let p = &model.params;
    let lam_k0 = p.lambda.powi(p.k0);
    targets
        .iter()
        .map(|&u| {
            let u_b = rules.iter().rev().fold(u, |u, rule| match rule {
                Rule::Chart => p.lambda * u,
                Rule::Block => lam_k0 * u + p.x_u,
            });
            let mut cur = ChartPoint::new(start.s.clone(), start.t, vec![u_b]);
            for rule in rules {
                cur = match rule {
                    Rule::Chart => model.chart_step(&cur, r)?,
                    Rule::Block => model.macro_step(&cur, r)?,
                };
            }
            Ok(cur)
        })
        .collect()
}

fn leaf_at_depth(model: &Model, p: &ChartPoint, radius: f64, r: f64, k: usize, depth: usize) -> Result<(VerticalDisk, f64)> {
    let (start, rules) = backward_rules(model, p, r, depth)?;
    let mut disk = VerticalDisk::flat(p.s[0], p.t, k, radius);
    disk.u0 = p.u[0];
    let targets: Vec<f64> = (0..=k).map(|i| p.u[0] + radius * disk.uhat(i)).collect();
    let pts = push_leaf(model, &start, &rules, &targets, r)?;
    let c = &pts[k / 2];
    let mut err = (c.s[0] - p.s[0]).abs().max((c.t - p.t).abs());
    for (i, q) in pts.iter().enumerate() {
        disk.ds[i] = q.s[0] - c.s[0];
        disk.dt[i] = q.t - c.t;
        err = err.max((q.u[0] - targets[i]).abs());
    }
    Ok((disk, err))
}

/// Local unstable leaf through `p` as a graph over D_u(p.u, radius).
pub fn unstable_leaf(model: &Model, p: &ChartPoint, radius: f64, r: f64, opts: &LeafOptions) -> Result<Leaf> {
    if model.n() != 1 {
        return Err(Error::config("chart.n", "leaf computation supports n = 1 only"));
    }
    if !(radius > 0.0) {
        return Err(Error::Precondition("leaf radius must be positive".into()));
    }
    let (a, err_a) = leaf_at_depth(model, p, radius, r, opts.nodes, opts.depth)?;
    let (b, err_b) = leaf_at_depth(model, p, radius, r, opts.nodes, opts.depth + 1)?;
    let mut discrepancy = err_a.max(err_b);
    for i in 0..a.nodes() {
        discrepancy = discrepancy.max((a.ds[i] - b.ds[i]).abs()).max((a.dt[i] - b.dt[i]).abs());
    }
    if discrepancy > opts.tol {
        return Err(Error::Inconclusive(format!(
            "leaf depth {} and {} disagree by {discrepancy:e}",
            opts.depth,
            opts.depth + 1
        )));
    }
    Ok(Leaf {
        disk: a,
        depth: opts.depth,
        discrepancy,
    })
}

/// The point of a leaf graph at height u, and the arc length from the
/// leaf's center to it.
fn walk_leaf(disk: &VerticalDisk, u: f64) -> (ChartPoint, f64) {
    let target = (u - disk.u0) / disk.u_radius;
    let at = |x: f64| {
        let (ds, dt) = disk.offsets_at(x);
        ChartPoint::new(vec![disk.s0 + ds], disk.t0 + dt, vec![disk.u0 + x * disk.u_radius])
    };
    let steps = 64;
    let mut len = 0.0;
    let mut prev = at(0.0);
    for i in 1..=steps {
        let next = at(target * i as f64 / steps as f64);
        len += next.dist(&prev);
        prev = next;
    }
    (prev, len)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyResult {
    pub image: ChartPoint,
    pub path_length: f64,
    pub depth: usize,
    /// |u(image) − target level|.
    pub transversal_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub kappa_hat: f64,
    pub pairs_used: usize,
    pub skipped: usize,
    pub worst_pair: Option<usize>,
}

/// Holonomy along unstable leaves from D_s(2μ^{−m_r}) × [L − 2r, L] × {0}
/// near P to the slab through a.
#[derive(Clone, Debug)]
pub struct Holonomy<'a> {
    pub model: &'a Model,
    pub r: f64,
    pub bx: BlenderBox,
    pub opts: LeafOptions,
}

impl<'a> Holonomy<'a> {
    pub fn new(model: &'a Model, r: f64, opts: LeafOptions) -> Result<Self> {
        if model.n() != 1 {
            return Err(Error::config("chart.n", "holonomy supports n = 1 only"));
        }
        let bx = build_box(model, r)?;
        Ok(Holonomy { model, r, bx, opts })
    }

    pub fn source_radius(&self) -> f64 {
        2.0 * self.model.params.mu.powi(-(self.bx.m_r as i32))
    }

    pub fn source_contains(&self, x: &ChartPoint) -> bool {
        let l = self.model.chart.l;
        x.s[0].abs() <= self.source_radius() && x.t >= l - 2.0 * self.r && x.t <= l && x.u[0] == 0.0
    }

    fn path_cap(&self) -> f64 {
        10.0 * self.bx.diameter()
    }

    /// Hol(x) on the slab {u = 0} near a.
    pub fn holonomy_map(&self, x: &ChartPoint) -> Result<HolonomyResult> {
        self.holonomy_to(x, 0.0)
    }

    /// Follows the leaf through x to the slab {u = level} near a: the leaf
    /// of Ψ^{−Nm}(x) is walked into W to the point the block step sends to
    /// that level.
    pub fn holonomy_to(&self, x: &ChartPoint, level: f64) -> Result<HolonomyResult> {
        if !self.source_contains(x) {
            return Err(Error::Precondition(format!("{:?} outside the holonomy source domain", x.to_vec())));
        }
        let p = &self.model.params;
        let mut back = x.clone();
        for _ in 0..p.block_units() {
            back = self.model.chart_step_inv(&back, self.r)?;
        }
        let u_needed = p.x_u + p.lambda.powi(p.k0) * level;
        let leaf = unstable_leaf(self.model, &back, 1.25 * u_needed.abs(), self.r, &self.opts)?;
        let (w, path) = walk_leaf(&leaf.disk, u_needed);
        if !self.model.in_window(&w) {
            return Err(Error::NotInWindow);
        }
        if path > self.path_cap() {
            return Err(Error::Inconclusive(format!("leaf path {path} exceeds the cap")));
        }
        let image = self.model.macro_step(&w, self.r)?;
        Ok(HolonomyResult {
            transversal_residual: (image.u[0] - level).abs(),
            image,
            path_length: path,
            depth: leaf.depth,
        })
    }

    /// Moves y along its own leaf to the slab {u = level}.
    pub fn leaf_holonomy(&self, y: &ChartPoint, level: f64) -> Result<HolonomyResult> {
        let span = (level - y.u[0]).abs();
        if span == 0.0 {
            return Ok(HolonomyResult {
                image: y.clone(),
                path_length: 0.0,
                depth: 0,
                transversal_residual: 0.0,
            });
        }
        let leaf = unstable_leaf(self.model, y, 1.25 * span, self.r, &self.opts)?;
        let (image, path) = walk_leaf(&leaf.disk, level);
        if path > self.path_cap() {
            return Err(Error::Inconclusive(format!("leaf path {path} exceeds the cap")));
        }
        Ok(HolonomyResult {
            transversal_residual: (image.u[0] - level).abs(),
            image,
            path_length: path,
            depth: leaf.depth,
        })
    }

    /// Distance from Hol(0, L − δ, 0) to the heteroclinic point (1, r − δ, 0).
    pub fn certify_heteroclinic(&self, delta: f64) -> Result<f64> {
        let target = self.model.heteroclinic_point(self.r, delta)?;
        let x = ChartPoint::on_axis(1, self.model.chart.l - delta);
        Ok(self.holonomy_map(&x)?.image.dist(&target))
    }

    /// κ̂ = min(1, min ln d(Hol x, Hol y) / ln d(x, y)) over pairs with
    /// 0 < d(x, y) < 1.
    pub fn estimate_holder(&self, pairs: &[(ChartPoint, ChartPoint)]) -> Result<HolderEstimate> {
        let mut out = HolderEstimate {
            kappa_hat: 1.0,
            pairs_used: 0,
            skipped: 0,
            worst_pair: None,
        };
        for (i, (x, y)) in pairs.iter().enumerate() {
            let d = x.dist(y);
            if !(d > 0.0 && d < 1.0) {
                out.skipped += 1;
                continue;
            }
            let dh = self.holonomy_map(x)?.image.dist(&self.holonomy_map(y)?.image);
            out.pairs_used += 1;
            let ratio = dh.ln() / d.ln();
            if ratio < out.kappa_hat {
                out.kappa_hat = ratio;
                out.worst_pair = Some(i);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(s: f64, t: f64, u: f64) -> ChartPoint {
        ChartPoint::new(vec![s], t, vec![u])
    }

    #[test]
    fn leaf_on_axis_is_flat() {
        let m = Model::default_model();
        let leaf = unstable_leaf(&m, &pt(0.0, 0.3, 0.0), 0.1, 0.05, &LeafOptions::default()).unwrap();
        assert!(leaf.disk.ds.iter().chain(&leaf.disk.dt).all(|x| x.abs() < 1e-15));
        assert!(leaf.discrepancy <= 1e-8);
    }

    #[test]
    fn leaf_near_a_is_the_sheared_plane() {
        // the block step adds u' to t, so the leaf through a point it produced
        // is t − t0 = u − u0
        let m = Model::default_model();
        let y = pt(1.0, 0.02, 0.0);
        let leaf = unstable_leaf(&m, &y, 1e-3, 0.05, &LeafOptions::default()).unwrap();
        for i in 0..leaf.disk.nodes() {
            let du = leaf.disk.uhat(i) * 1e-3;
            assert!((leaf.disk.dt[i] - du).abs() < 1e-12, "{} vs {du}", leaf.disk.dt[i]);
        }
    }

    #[test]
    fn leaf_depth_discrepancy_below_contraction_bound() {
        // oracle: depth d vs d + 1 differ by at most μ^{−d}·diam
        let m = Model::default_model();
        let opts = LeafOptions {
            depth: 12,
            ..Default::default()
        };
        let leaf = unstable_leaf(&m, &pt(1.0, 0.02, 0.0), 1e-3, 0.05, &opts).unwrap();
        let diam = 2.0 * 1e-3 * 2f64.sqrt();
        assert!(leaf.discrepancy <= 2f64.powi(-12) * diam);
    }

    #[test]
    fn escaping_backward_orbit_is_an_error() {
        let m = Model::default_model();
        assert!(unstable_leaf(&m, &pt(1.5, 0.3, 0.0), 0.01, 0.05, &LeafOptions::default()).is_err());
    }

    #[test]
    fn holonomy_of_the_axis_hits_the_heteroclinic_points() {
        let m = Model::default_model();
        for r in [0.02, 0.05] {
            let h = Holonomy::new(&m, r, LeafOptions::default()).unwrap();
            for delta in [0.0, r, 2.0 * r] {
                assert!(h.certify_heteroclinic(delta).unwrap() < 1e-4);
                let res = h.holonomy_map(&pt(0.0, 0.5 - delta, 0.0)).unwrap();
                assert!(res.transversal_residual <= 1e-8);
                assert!(Transversal::standard(&m.chart).contains(&res.image, 1e-8));
                assert!(res.path_length > 0.0 && res.path_length < 10.0 * h.bx.diameter());
            }
        }
    }

    #[test]
    fn holonomy_estimates_on_the_source_slab() {
        let m = Model::default_model();
        let r = 0.05;
        let h = Holonomy::new(&m, r, LeafOptions::default()).unwrap();
        let bound = 2f64.powi(-(h.bx.m_r as i32));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = pt(rng.gen_range(-1.0..1.0) * h.source_radius(), rng.gen_range(0.5 - 2.0 * r..0.5), 0.0);
            let y = h.holonomy_map(&x).unwrap().image;
            assert!((y.s[0] - 1.0).abs() <= bound);
            assert!((y.t - (r + x.t - 0.5)).abs() <= bound.max(1e-12));
        }
    }

    #[test]
    fn holonomy_composes_through_an_intermediate_slab() {
        let m = Model::default_model();
        let h = Holonomy::new(&m, 0.05, LeafOptions::default()).unwrap();
        let x = pt(0.5 * h.source_radius(), 0.47, 0.0);
        let direct = h.holonomy_map(&x).unwrap().image;
        let mid = h.holonomy_to(&x, 2e-3).unwrap().image;
        let via = h.leaf_holonomy(&mid, 0.0).unwrap().image;
        assert!(direct.dist(&via) < 1e-6, "{:?} vs {:?}", direct, via);
    }

    #[test]
    fn leaves_are_equivariant() {
        let m = Model::default_model();
        let r = 0.05;
        let p = pt(1.0, 0.02, 0.0);
        let radius = 1e-3;
        let opts = LeafOptions::default();
        let leaf = unstable_leaf(&m, &p, radius, r, &opts).unwrap();
        let q = m.chart_step(&p, r).unwrap();
        let image_leaf = unstable_leaf(&m, &q, radius / 0.4, r, &opts).unwrap();
        for i in 0..leaf.disk.nodes() {
            let z = m.chart_step(&leaf.disk.point(i), r).unwrap();
            let (ds, dt) = image_leaf.disk.offsets_at((z.u[0] - q.u[0]) / image_leaf.disk.u_radius);
            let err = (z.s[0] - q.s[0] - ds).abs().max((z.t - q.t - dt).abs());
            assert!(err < 1e-8, "node {i}: {err}");
        }
    }

    #[test]
    fn holder_exponent_on_axis_pairs_is_one() {
        let m = Model::default_model();
        let h = Holonomy::new(&m, 0.05, LeafOptions::default()).unwrap();
        let pairs: Vec<_> = (0..20)
            .map(|k| (pt(0.0, 0.41 + 0.004 * k as f64, 0.0), pt(0.0, 0.42 + 0.003 * k as f64, 0.0)))
            .collect();
        let est = h.estimate_holder(&pairs).unwrap();
        assert!((est.kappa_hat - 1.0).abs() < 1e-3);
    }

    #[test]
    fn holder_exponent_random_pairs_and_halving() {
        let m = Model::default_model();
        let r = 0.05;
        let h = Holonomy::new(&m, r, LeafOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sr = h.source_radius();
        let draw = |rng: &mut ChaCha8Rng| pt(rng.gen_range(-sr..sr), rng.gen_range(0.5 - 2.0 * r..0.5), 0.0);
        let pairs: Vec<_> = (0..1000).map(|_| (draw(&mut rng), draw(&mut rng))).collect();
        let est = h.estimate_holder(&pairs).unwrap();
        assert!(est.kappa_hat > 0.0 && est.kappa_hat <= 1.0);
        let halved: Vec<_> = pairs
            .iter()
            .map(|(x, y)| {
                let mid = pt(0.5 * (x.s[0] + y.s[0]), 0.5 * (x.t + y.t), 0.0);
                (x.clone(), mid)
            })
            .collect();
        let est2 = h.estimate_holder(&halved).unwrap();
        assert!(est2.kappa_hat >= est.kappa_hat - 1e-3);
    }

    #[test]
    fn source_domain_is_enforced() {
        let m = Model::default_model();
        let h = Holonomy::new(&m, 0.05, LeafOptions::default()).unwrap();
        assert!(matches!(h.holonomy_map(&pt(0.1, 0.48, 0.0)), Err(Error::Precondition(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn holonomy_is_reeb_translation_on_axis(delta in 0.0f64..0.1) {
            let m = Model::default_model();
            let h = Holonomy::new(&m, 0.05, LeafOptions::default()).unwrap();
            let y = h.holonomy_map(&pt(0.0, 0.5 - delta, 0.0)).unwrap().image;
            prop_assert!((y.t - (0.05 - delta)).abs() < 1e-10);
            prop_assert_eq!(y.s[0], 1.0);
        }
    }
}
