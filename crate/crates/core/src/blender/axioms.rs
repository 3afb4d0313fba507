use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::{Blender, Branch, VerticalDisk};
use crate::chart::{ChartPoint, Tangent};
use crate::cones::{
    check_contraction, check_stretching_criterion, dilation_constant, stretching_constant, Axes, ConeField, SumCone,
};
use crate::error::{Error, Result};
use crate::verdict::Verdict;

const DILATION_SLACK: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    A,
    B,
    C,
    D,
    E,
    F,
}

impl Axiom {
    pub const ALL: [Axiom; 6] = [Axiom::A, Axiom::B, Axiom::C, Axiom::D, Axiom::E, Axiom::F];

    pub fn slug(self) -> &'static str {
        match self {
            Axiom::A => "blender-axiom-a",
            Axiom::B => "blender-axiom-b",
            Axiom::C => "blender-axiom-c",
            Axiom::D => "blender-axiom-d",
            Axiom::E => "blender-axiom-e",
            Axiom::F => "blender-axiom-f",
        }
    }

    pub fn letter(self) -> char {
        match self {
            Axiom::A => 'a',
            Axiom::B => 'b',
            Axiom::C => 'c',
            Axiom::D => 'd',
            Axiom::E => 'e',
            Axiom::F => 'f',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Point { coords: Vec<f64> },
    Disk { index: usize, s0: f64, t0: f64 },
    CenterPair { nu: f64, eta: f64 },
}

impl Witness {
    fn point(p: &ChartPoint) -> Self {
        Witness::Point { coords: p.to_vec() }
    }

    fn disk(index: usize, d: &VerticalDisk) -> Self {
        Witness::Disk {
            index,
            s0: d.s0,
            t0: d.t0,
        }
    }
}

/// Center behavior of the Reeb direction under the blender steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDriftReport {
    pub r: f64,
    /// max |TΨ^N(R) − e^{Nr}R| / e^{Nr} on Ψ^{−N}(A).
    pub chart_deviation: f64,
    /// Smallest dt-gain along the block orbits.
    pub nu: f64,
    /// Largest |ds|/dt along the block orbits.
    pub eta: f64,
    pub du: f64,
    /// r^{−1/2}.
    pub nu_target: f64,
    /// r²·μ^{−ln r / r}.
    pub eta_target: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomEntry {
    pub axiom: Axiom,
    pub verdict: Verdict,
    /// Smallest recorded slack; positive on pass.
    pub margin: f64,
    pub witness: Option<Witness>,
    pub samples: usize,
    pub r: f64,
    pub details: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl AxiomEntry {
    fn new(axiom: Axiom, r: f64) -> Self {
        AxiomEntry {
            axiom,
            verdict: Verdict::Inconclusive,
            margin: f64::NAN,
            witness: None,
            samples: 0,
            r,
            details: BTreeMap::new(),
            note: None,
        }
    }

    fn detail(&mut self, key: &str, value: f64) {
        self.details.insert(key.to_string(), value);
    }

    /// Entry for a check that could not run.
    pub fn from_error(axiom: Axiom, r: f64, err: &Error) -> Self {
        let mut e = AxiomEntry::new(axiom, r);
        e.verdict = match err {
            Error::Inconclusive(_) => Verdict::Inconclusive,
            _ => Verdict::Fail,
        };
        e.note = Some(err.to_string());
        e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub r: f64,
    pub m_r: usize,
    pub entries: Vec<AxiomEntry>,
}

impl AxiomReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::all(self.entries.iter().map(|e| e.verdict))
    }

    pub fn entry(&self, axiom: Axiom) -> Option<&AxiomEntry> {
        self.entries.iter().find(|e| e.axiom == axiom)
    }
}

/// Outcome of one flood-fill pass.
struct Fill {
    found: bool,
    margin: f64,
    worst: Option<ChartPoint>,
    members: usize,
    details: Vec<(&'static str, f64)>,
    extra_ok: bool,
}

/// Pass at both resolutions, fail at both, otherwise inconclusive.
fn merge_fills(mut entry: AxiomEntry, coarse: Fill, fine: Fill, res: usize) -> AxiomEntry {
    entry.samples = coarse.members + fine.members;
    if !coarse.found || !fine.found {
        entry.verdict = Verdict::Inconclusive;
        entry.note = Some(format!(
            "component not found at resolution {}; refine the grid",
            if coarse.found { 2 * res } else { res }
        ));
        return entry;
    }
    let pass = |f: &Fill| f.margin > 0.0 && f.extra_ok;
    entry.verdict = match (pass(&coarse), pass(&fine)) {
        (true, true) => Verdict::Pass,
        (false, false) => Verdict::Fail,
        _ => Verdict::Inconclusive,
    };
    entry.margin = coarse.margin.min(fine.margin);
    for (k, v) in &fine.details {
        entry.detail(k, *v);
    }
    entry.detail("margin_coarse", coarse.margin);
    entry.detail("margin_fine", fine.margin);
    if entry.verdict != Verdict::Pass {
        let worst = if pass(&fine) { coarse.worst } else { fine.worst };
        entry.witness = worst.as_ref().map(Witness::point);
    }
    entry
}

impl Blender {
    pub fn verify_all(&self) -> AxiomReport {
        let disks = self.standard_disks();
        let entries = Axiom::ALL
            .iter()
            .map(|&ax| {
                let res = match ax {
                    Axiom::A => self.verify_axiom_a(),
                    Axiom::B => self.verify_axiom_b(),
                    Axiom::C => self.verify_axiom_c(),
                    Axiom::D => self.verify_axiom_d(),
                    Axiom::E => self.verify_axiom_e(&disks),
                    Axiom::F => self.verify_axiom_f(&disks),
                };
                res.unwrap_or_else(|e| AxiomEntry::from_error(ax, self.r(), &e))
            })
            .collect();
        AxiomReport {
            r: self.r(),
            m_r: self.bx.m_r,
            entries,
        }
    }

    /// Component of B ∩ Ψ^N(B) through Q stays off ∂^s B and off
    /// Ψ^N(∂^c B ∪ ∂^u B); every point has |s| < 2/μ.
    pub fn verify_axiom_a(&self) -> Result<AxiomEntry> {
        let res = self.opts.grid;
        let coarse = self.fill_a(res);
        let fine = self.fill_a(2 * res);
        Ok(merge_fills(AxiomEntry::new(Axiom::A, self.r()), coarse, fine, res))
    }

    fn fill_a(&self, res: usize) -> Fill {
        let grid = Grid::new(res, 3);
        let bx = &self.bx;
        let y_of = |c: &[f64]| ChartPoint::new(vec![c[0] * bx.s_radius], c[1] * bx.t_radius, vec![c[2] * bx.u_radius]);
        // (member, central clearance of the preimage, unstable clearance of the preimage)
        let evals: Vec<(bool, f64, f64)> = self.opts.exec.map_range(grid.len(), |i| {
            let y = y_of(&grid.node(i));
            match self.psi_n_inv(&y) {
                Ok(x) if bx.contains(&x) => (
                    true,
                    bx.face_clearance(&x, super::Face::Central),
                    bx.face_clearance(&x, super::Face::Unstable),
                ),
                _ => (false, 0.0, 0.0),
            }
        });
        let member: Vec<bool> = evals.iter().map(|e| e.0).collect();
        let comp = grid.flood_fill(&member, grid.center());
        let mut out = Fill {
            found: comp[grid.center()],
            margin: f64::INFINITY,
            worst: None,
            members: 0,
            details: vec![],
            extra_ok: true,
        };
        let (mut s_face, mut c_img, mut u_img, mut s_max) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0f64);
        for (i, _) in comp.iter().enumerate().filter(|(_, &b)| b) {
            out.members += 1;
            let y = y_of(&grid.node(i));
            let sf = bx.face_clearance(&y, super::Face::Stable);
            let (_, c, u) = evals[i];
            s_face = s_face.min(sf);
            c_img = c_img.min(c);
            u_img = u_img.min(u);
            s_max = s_max.max(y.s[0].abs());
            let m = sf.min(c).min(u);
            if m < out.margin {
                out.margin = m;
                out.worst = Some(y);
            }
        }
        let s_bound = 2.0 / self.model.params.mu;
        out.extra_ok = s_max < s_bound;
        out.details = vec![
            ("stable_face", s_face),
            ("central_image", c_img),
            ("unstable_image", u_img),
            ("s_max_over_2_inv_mu", s_max / s_bound),
            ("members", out.members as f64),
        ];
        out
    }

    /// Component of B ∩ Ψ^{Nm_r}(B) through a stays off ∂^r B, ∂^s B and
    /// Ψ^{Nm_r}(∂^u B), with |s − 1| ≤ μ^{−m_r} throughout.
    pub fn verify_axiom_b(&self) -> Result<AxiomEntry> {
        let res = self.opts.grid;
        let coarse = self.fill_b(res);
        let fine = self.fill_b(2 * res);
        Ok(merge_fills(AxiomEntry::new(Axiom::B, self.r()), coarse, fine, res))
    }

    fn fill_b(&self, res: usize) -> Fill {
        // grid over (t̂, û) of the image; the s-fibre is handled exactly
        let grid = Grid::new(res, 2);
        let bx = &self.bx;
        let s_ln = self.long_s_factor_ln();
        // (member, s half-width of the fibre image, |û0|, central clearance of t0)
        let evals: Vec<(bool, f64, f64, f64)> = self.opts.exec.map_range(grid.len(), |i| {
            let c = grid.node(i);
            match self.long_inverse(0.0, c[0] * bx.t_radius, c[1]) {
                Ok(pre) if pre.t.abs() <= bx.t_radius && pre.uhat.abs() <= 1.0 => (
                    true,
                    bx.s_radius * (s_ln + pre.ln_f).exp(),
                    pre.uhat.abs(),
                    1.0 - pre.t.abs() / bx.t_radius,
                ),
                _ => (false, 0.0, 0.0, 0.0),
            }
        });
        let member: Vec<bool> = evals.iter().map(|e| e.0).collect();
        let comp = grid.flood_fill(&member, grid.center());
        let mut out = Fill {
            found: comp[grid.center()],
            margin: f64::INFINITY,
            worst: None,
            members: 0,
            details: vec![],
            extra_ok: true,
        };
        let (mut r_face, mut s_face, mut u_img, mut c_img, mut spread) =
            (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0f64);
        for (i, _) in comp.iter().enumerate().filter(|(_, &b)| b) {
            out.members += 1;
            let c = grid.node(i);
            let (_, w, u0, cc) = evals[i];
            let rf = 1.0 - c[0];
            let sf = 1.0 - (1.0 + w) / bx.s_radius;
            let uf = 1.0 - u0;
            r_face = r_face.min(rf);
            s_face = s_face.min(sf);
            u_img = u_img.min(uf);
            c_img = c_img.min(cc);
            spread = spread.max(w);
            let m = rf.min(sf).min(uf);
            if m < out.margin {
                out.margin = m;
                out.worst = Some(self.point(1.0, c[0] * bx.t_radius, c[1]));
            }
        }
        let bound = self.model.params.mu.powi(-(bx.m_r as i32));
        out.extra_ok = spread <= bound;
        out.details = vec![
            ("right_face", r_face),
            ("stable_face", s_face),
            ("unstable_image", u_img),
            ("central_image", c_img),
            ("s_spread_over_mu_pow", spread / bound),
            ("members", out.members as f64),
        ];
        out
    }

    fn box_samples(&self, per_axis: usize) -> Vec<ChartPoint> {
        let bx = &self.bx;
        let lin = |k: usize| -1.0 + 2.0 * k as f64 / (per_axis - 1) as f64;
        let mut pts = Vec::with_capacity(per_axis.pow(3));
        for i in 0..per_axis {
            for j in 0..per_axis {
                for k in 0..per_axis {
                    pts.push(ChartPoint::new(
                        vec![lin(i) * bx.s_radius],
                        lin(j) * bx.t_radius,
                        vec![lin(k) * bx.u_radius],
                    ));
                }
            }
        }
        pts
    }

    /// K^u_ε is contracted by Ψ^N and K^s_ε by Ψ^{−N}, both dilated by μ.
    pub fn verify_axiom_c(&self) -> Result<AxiomEntry> {
        let mu = self.model.params.mu;
        let eps = self.eps();
        let rays = self.opts.rays;
        let chart = &self.model.chart;
        let all = self.box_samples(self.opts.cone_samples);
        let fwd: Vec<ChartPoint> = all
            .iter()
            .filter(|x| self.psi_n(x).is_ok())
            .cloned()
            .collect();
        let bwd: Vec<ChartPoint> = all
            .iter()
            .filter(|y| self.psi_n_inv(y).map(|x| chart.contains(&x)).unwrap_or(false))
            .cloned()
            .collect();
        let ku = ConeField::new(Axes::U, eps).with_metric(self.metric);
        let ks = ConeField::new(Axes::S, eps).with_metric(self.metric);
        let jf = |p: &ChartPoint| self.psi_n_jacobian(p);
        let jb = |p: &ChartPoint| self.psi_n_inv_jacobian(p);
        let cu = check_contraction(&jf, &ku, &fwd, rays)?;
        let du = dilation_constant(&jf, &ku, &fwd, rays)?;
        let cs = check_contraction(&jb, &ks, &bwd, rays)?;
        let ds = dilation_constant(&jb, &ks, &bwd, rays)?;

        let mut e = AxiomEntry::new(Axiom::C, self.r());
        e.samples = cu.rays_checked + cs.rays_checked + du.samples + ds.samples;
        e.detail("unstable_contraction_margin", cu.margin);
        e.detail("stable_contraction_margin", cs.margin);
        e.detail("unstable_dilation", du.lambda_hat);
        e.detail("stable_dilation", ds.lambda_hat);
        e.detail("sample_points", (fwd.len() + bwd.len()) as f64);
        let need = mu * DILATION_SLACK;
        let parts = [
            (cu.margin / eps, &fwd[cu.worst_point]),
            (cs.margin / eps, &bwd[cs.worst_point]),
            (du.lambda_hat / need - 1.0, &fwd[du.witness_point]),
            (ds.lambda_hat / need - 1.0, &bwd[ds.witness_point]),
        ];
        let (margin, worst) = parts
            .iter()
            .fold((f64::INFINITY, parts[0].1), |acc, &(m, p)| if m < acc.0 { (m, p) } else { acc });
        e.margin = margin;
        e.verdict = Verdict::from_bool(cu.contracted && cs.contracted && du.lambda_hat >= need && ds.lambda_hat >= need);
        if e.verdict != Verdict::Pass {
            e.witness = Some(Witness::point(worst));
        }
        Ok(e)
    }

    /// Sample points of Ψ^{−N}(A) (chart part) and of Ψ^{−Nm_r}(A′) (long part).
    pub(crate) fn axiom_d_samples(&self) -> (Vec<ChartPoint>, Vec<ChartPoint>) {
        let bx = &self.bx;
        let per = 2 * self.opts.cone_samples - 1;
        let chart_part: Vec<ChartPoint> = self
            .box_samples(per)
            .iter()
            .filter_map(|y| self.psi_n_inv(y).ok().filter(|x| bx.contains(x)))
            .collect();
        let grid = Grid::new(per / 2, 2);
        let mut long_part = Vec::new();
        for i in 0..grid.len() {
            let c = grid.node(i);
            if let Ok(pre) = self.long_inverse(0.0, c[0] * bx.t_radius, c[1]) {
                if pre.t.abs() <= bx.t_radius && pre.uhat.abs() <= 1.0 {
                    for s in [-bx.s_radius, 0.0, bx.s_radius] {
                        long_part.push(self.point(s, pre.t, pre.uhat));
                    }
                }
            }
        }
        (chart_part, long_part)
    }

    /// K^cu = K_ε(du) + K_δ(dt) is contracted and uniformly dilated by Ψ^N on
    /// Ψ^{−N}(A) and by Ψ^{Nm_r} on Ψ^{−Nm_r}(A′), with δ taken from the
    /// window set by the measured center factors (ν, η).
    pub fn verify_axiom_d(&self) -> Result<AxiomEntry> {
        let mu = self.model.params.mu;
        let eps = self.eps();
        let rays = self.opts.rays;
        let (chart_part, long_part) = self.axiom_d_samples();
        if chart_part.is_empty() || long_part.is_empty() {
            return Err(Error::Inconclusive("no axiom d sample points".into()));
        }
        let jc = |p: &ChartPoint| self.psi_n_jacobian(p);
        let jl = |p: &ChartPoint| self.long_jacobian(p);

        let mut nu = f64::INFINITY;
        let mut eta: f64 = 0.0;
        let mut drift = |j: DMatrix<f64>| -> Result<()> {
            let v = Tangent::d_t(1).push(&j);
            if v.du[0].abs() > 1e-9 * v.dt.abs() {
                return Err(Error::Model("Reeb vector picks up a du-component".into()));
            }
            nu = nu.min(v.dt);
            eta = eta.max(v.ds[0].abs() / v.dt);
            Ok(())
        };
        for p in &chart_part {
            drift(jc(p)?)?;
        }
        for p in &long_part {
            drift(jl(p)?)?;
        }

        let mut e = AxiomEntry::new(Axiom::D, self.r());
        let lower = eta / (1.0 - 1.0 / mu);
        let upper = (nu * nu - 1.0).max(0.0).sqrt();
        e.detail("nu", nu);
        e.detail("eta", eta);
        e.detail("delta_lower", lower);
        e.detail("delta_upper", upper);
        if !(lower < upper) {
            e.verdict = Verdict::Fail;
            e.margin = upper - lower;
            e.witness = Some(Witness::CenterPair { nu, eta });
            e.note = Some("empty delta window".into());
            return Ok(e);
        }
        let delta = 0.5 * (lower + upper);
        e.detail("delta", delta);
        let criterion = check_stretching_criterion(mu, eps, nu, eta, delta);
        let cone = SumCone::center_unstable(eps, delta, self.metric);
        let cc = check_contraction(&jc, &cone, &chart_part, rays)?;
        let dc = dilation_constant(&jc, &cone, &chart_part, rays)?;
        let cl = check_contraction(&jl, &cone, &long_part, rays)?;
        let dl = dilation_constant(&jl, &cone, &long_part, rays)?;
        let need = stretching_constant(mu, eps, nu, delta);
        e.detail("stretching_constant", need);
        e.detail("chart_contraction_margin", cc.margin);
        e.detail("long_contraction_margin", cl.margin);
        e.detail("chart_dilation", dc.lambda_hat);
        e.detail("long_dilation", dl.lambda_hat);
        e.samples = cc.rays_checked + cl.rays_checked + dc.samples + dl.samples;
        let dil = dc.lambda_hat.min(dl.lambda_hat);
        let parts = [
            (cc.margin, &chart_part[cc.worst_point]),
            (cl.margin, &long_part[cl.worst_point]),
            (dc.lambda_hat / (need * DILATION_SLACK) - 1.0, &chart_part[dc.witness_point]),
            (dl.lambda_hat / (need * DILATION_SLACK) - 1.0, &long_part[dl.witness_point]),
            (dil - 1.0, &chart_part[dc.witness_point]),
        ];
        let (margin, worst) = parts
            .iter()
            .fold((f64::INFINITY, parts[0].1), |acc, &(m, p)| if m < acc.0 { (m, p) } else { acc });
        e.margin = margin;
        e.verdict = Verdict::from_bool(criterion && margin > 0.0);
        if !criterion {
            e.note = Some("stretching criterion fails at the chosen delta".into());
        }
        if e.verdict != Verdict::Pass {
            e.witness = Some(Witness::point(worst));
        }
        Ok(e)
    }

    /// Pushes the Reeb vector R = ∂_t through Ψ^N on Ψ^{−N}(A) and through
    /// the block orbits on Ψ^{−Nm_r}(A′).
    pub fn center_drift_report(&self) -> Result<CenterDriftReport> {
        let (chart_part, long_part) = self.axiom_d_samples();
        if chart_part.is_empty() || long_part.is_empty() {
            return Err(Error::Inconclusive("no center drift sample points".into()));
        }
        let r = self.r();
        let gain = (self.n_iter() as f64 * r).exp();
        let mut out = CenterDriftReport {
            r,
            chart_deviation: 0.0,
            nu: f64::INFINITY,
            eta: 0.0,
            du: 0.0,
            nu_target: r.powf(-0.5),
            eta_target: r * r * self.model.params.mu.powf(-r.ln() / r),
            samples: chart_part.len() + long_part.len(),
        };
        for p in &chart_part {
            let v = Tangent::d_t(1).push(&self.psi_n_jacobian(p)?);
            let dev = v.ds[0].abs().max((v.dt - gain).abs()).max(v.du[0].abs()) / gain;
            out.chart_deviation = out.chart_deviation.max(dev);
        }
        for p in &long_part {
            let v = Tangent::d_t(1).push(&self.long_jacobian(p)?);
            out.nu = out.nu.min(v.dt);
            out.eta = out.eta.max(v.ds[0].abs() / v.dt);
            out.du = out.du.max(v.du[0].abs());
        }
        Ok(out)
    }

    fn check_disk_input(&self, index: usize, d: &VerticalDisk) -> Result<()> {
        if !d.is_vertical(self.eps()) {
            return Err(Error::Precondition(format!(
                "disk {index} is not vertical (lipschitz {:.3e})",
                d.lipschitz()
            )));
        }
        if !d.right_of_w() {
            return Err(Error::Precondition(format!("disk {index} is not right of W (t0 = {:e})", d.t0)));
        }
        if !d.in_box(&self.bx) {
            return Err(Error::Precondition(format!("disk {index} leaves the box")));
        }
        Ok(())
    }

    /// Every disk right of W stays more than r³ away from the left face.
    pub fn verify_axiom_e(&self, disks: &[VerticalDisk]) -> Result<AxiomEntry> {
        for (i, d) in disks.iter().enumerate() {
            self.check_disk_input(i, d)?;
        }
        let r3 = self.r().powi(3);
        let mut e = AxiomEntry::new(Axiom::E, self.r());
        e.samples = disks.iter().map(|d| d.nodes()).sum();
        let (idx, dist) = disks
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.t_range().0 + self.bx.t_radius))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        e.margin = dist - r3;
        e.detail("min_left_distance", dist);
        e.detail("r_cubed", r3);
        e.verdict = Verdict::from_bool(e.margin > 0.0);
        if e.verdict != Verdict::Pass && !disks.is_empty() {
            e.witness = Some(Witness::disk(idx, &disks[idx]));
        }
        Ok(e)
    }

    /// One disk iteration keeps a vertical disk right of W: the short branch
    /// clears ∂^r B and the long branch clears W, each by more than r³.
    pub fn verify_axiom_f(&self, disks: &[VerticalDisk]) -> Result<AxiomEntry> {
        for (i, d) in disks.iter().enumerate() {
            self.check_disk_input(i, d)?;
        }
        let r = self.r();
        let r3 = r.powi(3);
        let outcomes = self.opts.exec.map(disks, |d| self.iterate_disk(d));
        let mut e = AxiomEntry::new(Axiom::F, r);
        e.samples = disks.len();
        let mut margin = f64::INFINITY;
        let mut worst = None;
        let (mut short, mut long) = (0usize, 0usize);
        let mut long_center: f64 = f64::INFINITY;
        let mut ok = true;
        for (i, out) in outcomes.into_iter().enumerate() {
            let m = match out {
                Ok((img, branch)) => {
                    let valid = img.is_vertical(self.eps()) && img.in_box(&self.bx) && img.right_of_w();
                    let clearance = match branch {
                        Branch::Short => {
                            short += 1;
                            self.bx.t_radius - img.t_range().1
                        }
                        Branch::Long => {
                            long += 1;
                            long_center = long_center.min(img.t0 / (0.5 * r * r));
                            img.min_abs_t()
                        }
                    };
                    if valid {
                        clearance - r3
                    } else {
                        -1.0
                    }
                }
                Err(_) => -1.0,
            };
            if m < margin {
                margin = m;
                worst = Some(i);
            }
            ok &= m > 0.0;
        }
        e.margin = margin;
        e.detail("short_branch", short as f64);
        e.detail("long_branch", long as f64);
        e.detail("r_cubed", r3);
        if long > 0 {
            e.detail("long_center_over_half_r2", long_center);
            ok &= long_center > 1.0;
        }
        e.verdict = Verdict::from_bool(ok && !disks.is_empty());
        if e.verdict != Verdict::Pass {
            if let Some(i) = worst {
                e.witness = Some(Witness::disk(i, &disks[i]));
            }
        }
        Ok(e)
    }
}
