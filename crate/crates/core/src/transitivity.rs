//! Transitivity and mixing of sampled maps on box partitions, and the
//! dividing-set obstruction for flows.
//!
//! Verdicts describe the transition graph at the sampled resolution.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::numerics::rk4_step_vec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    Inconclusive,
}

/// Axis-aligned box split into equal cells; periodic axes wrap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxPartition {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl BoxPartition {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, res: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let d = lo.len();
        if hi.len() != d || res.len() != d || periodic.len() != d || d == 0 {
            return Err(Error::Precondition("partition axes have mismatched lengths".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) || res.contains(&0) {
            return Err(Error::Precondition("partition needs lo < hi and positive resolution".into()));
        }
        Ok(BoxPartition { lo, hi, res, periodic })
    }

    /// The unit torus [0, 1)^d with `res` cells per axis.
    pub fn torus(d: usize, res: usize) -> Self {
        BoxPartition::new(vec![0.0; d], vec![1.0; d], vec![res; d], vec![true; d]).unwrap()
    }

    pub fn cells(&self) -> usize {
        self.res.iter().product()
    }

    /// Same box with resolution scaled by `num / den` on every axis.
    pub fn rescaled(&self, num: usize, den: usize) -> Self {
        let res = self.res.iter().map(|r| (r * num / den).max(1)).collect();
        BoxPartition { res, ..self.clone() }
    }

    /// Cell index, first axis fastest; None outside a non-periodic axis.
    #[allow(clippy::needless_range_loop)]
    pub fn cell_of(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.lo.len() {
            let width = self.hi[k] - self.lo[k];
            let mut y = (x[k] - self.lo[k]) / width;
            if self.periodic[k] {
                y = y.rem_euclid(1.0);
            } else if !(0.0..=1.0).contains(&y) {
                return None;
            }
            let c = ((y * self.res[k] as f64) as usize).min(self.res[k] - 1);
            idx += c * stride;
            stride *= self.res[k];
        }
        Some(idx)
    }

    pub fn cell_bounds(&self, mut idx: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.lo.len();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        for k in 0..d {
            let c = idx % self.res[k];
            idx /= self.res[k];
            let w = (self.hi[k] - self.lo[k]) / self.res[k] as f64;
            a[k] = self.lo[k] + c as f64 * w;
            b[k] = a[k] + w;
        }
        (a, b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    /// Sorted successor lists.
    pub adj: Vec<Vec<usize>>,
    pub samples_per_cell: usize,
    pub seed: u64,
    /// Escaping samples per cell.
    pub escapes: Vec<usize>,
    /// Cells whose samples all escape.
    pub exterior: Vec<bool>,
}

impl TransitionGraph {
    pub fn from_adjacency(adj: Vec<Vec<usize>>) -> Self {
        let n = adj.len();
        TransitionGraph {
            adj,
            samples_per_cell: 0,
            seed: 0,
            escapes: vec![0; n],
            exterior: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Plain adjacency-list text: a header, then `i: j k …` per cell.
    pub fn to_adjacency_text(&self) -> String {
        let mut out = format!(
            "# cells {} samples_per_cell {} seed {}\n",
            self.len(),
            self.samples_per_cell,
            self.seed
        );
        for (i, succ) in self.adj.iter().enumerate() {
            if self.exterior[i] {
                let _ = writeln!(out, "{i}: exterior");
                continue;
            }
            let _ = write!(out, "{i}:");
            for j in succ {
                let _ = write!(out, " {j}");
            }
            out.push('\n');
        }
        out
    }

    fn active(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.exterior[i]).collect()
    }
}

/// Maps `samples_per_cell` jittered samples of each cell; an image outside
/// the partition (or a `None` image) counts as an escape.
pub fn build_transition_graph(
    map: &(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync),
    partition: &BoxPartition,
    samples_per_cell: usize,
    seed: u64,
    exec: Exec,
) -> TransitionGraph {
    let d = partition.lo.len();
    // stratify along the first axis, jitter the rest
    let rows = exec.map_range(partition.cells(), |cell| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (cell as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let (a, b) = partition.cell_bounds(cell);
        let mut succ = Vec::new();
        let mut escapes = 0;
        for k in 0..samples_per_cell {
            let x: Vec<f64> = (0..d)
                .map(|i| {
                    let frac = if i == 0 {
                        (k as f64 + rng.gen::<f64>()) / samples_per_cell as f64
                    } else {
                        rng.gen::<f64>()
                    };
                    a[i] + frac * (b[i] - a[i])
                })
                .collect();
            match map(&x).and_then(|y| partition.cell_of(&y)) {
                Some(j) => succ.push(j),
                None => escapes += 1,
            }
        }
        succ.sort_unstable();
        succ.dedup();
        (succ, escapes)
    });
    let exterior = rows.iter().map(|(s, e)| *e > 0 && s.is_empty()).collect();
    let escapes = rows.iter().map(|(_, e)| *e).collect();
    TransitionGraph {
        adj: rows.into_iter().map(|(s, _)| s).collect(),
        samples_per_cell,
        seed,
        escapes,
        exterior,
    }
}

/// Strongly connected components of the subgraph on `nodes` (Tarjan,
/// iterative). Returns a component id per graph node (usize::MAX off `nodes`).
pub fn strongly_connected_components(g: &TransitionGraph, nodes: &[usize]) -> (Vec<usize>, usize) {
    let n = g.len();
    let mut inside = vec![false; n];
    for &v in nodes {
        inside[v] = true;
    }
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![usize::MAX; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut count = 0;
    for &root in nodes {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if let Some(&w) = g.adj[v].get(*pos) {
                *pos += 1;
                if !inside[w] {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = count;
                        if w == v {
                            break;
                        }
                    }
                    count += 1;
                }
            }
        }
    }
    (comp, count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitivityResult {
    pub answer: Answer,
    /// A pair (i, j) with j unreachable from i, when one exists.
    pub witness: Option<(usize, usize)>,
    pub components: usize,
    pub cells: usize,
    pub samples_per_cell: usize,
    pub escapes: usize,
}

/// Yes iff the non-exterior cells form one strongly connected component; no
/// when they do not and no sample escaped.
pub fn is_transitive(g: &TransitionGraph) -> TransitivityResult {
    let nodes = g.active();
    let (comp, count) = strongly_connected_components(g, &nodes);
    let escapes: usize = g.escapes.iter().sum();
    let mut out = TransitivityResult {
        answer: Answer::Yes,
        witness: None,
        components: count,
        cells: g.len(),
        samples_per_cell: g.samples_per_cell,
        escapes,
    };
    if count <= 1 {
        return out;
    }
    // a sink component cannot reach any other
    let mut has_exit = vec![false; count];
    for &v in &nodes {
        for &w in &g.adj[v] {
            if comp[w] != usize::MAX && comp[w] != comp[v] {
                has_exit[comp[v]] = true;
            }
        }
    }
    let sink = (0..count).find(|&c| !has_exit[c]).unwrap_or(0);
    let i = nodes.iter().copied().find(|&v| comp[v] == sink);
    let j = nodes.iter().copied().find(|&v| comp[v] != sink);
    out.witness = i.zip(j);
    out.answer = if escapes == 0 { Answer::No } else { Answer::Inconclusive };
    out
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Period of a strongly connected graph: gcd of level(u) + 1 − level(v)
/// over edges, with BFS levels from one node.
pub fn period(g: &TransitionGraph, nodes: &[usize]) -> usize {
    let Some(&start) = nodes.first() else { return 0 };
    let mut level = vec![usize::MAX; g.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut p = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &g.adj[v] {
            if g.exterior[w] {
                continue;
            }
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            } else {
                p = gcd(p, (level[v] + 1).abs_diff(level[w]));
            }
        }
    }
    p
}

/// Smallest T ≤ horizon with A^T entrywise positive, by propagating bitset
/// rows: row_i(A^{T+1}) = ⋃_{k ∈ succ(i)} row_k(A^T).
pub fn primitivity_exponent(g: &TransitionGraph, horizon: usize) -> Option<usize> {
    let n = g.len();
    let words = n.div_ceil(64);
    let full_last = if n.is_multiple_of(64) { u64::MAX } else { (1u64 << (n % 64)) - 1 };
    let is_full = |row: &[u64]| row[..words - 1].iter().all(|w| *w == u64::MAX) && row[words - 1] == full_last;
    let mut cur = vec![0u64; n * words];
    for (i, succ) in g.adj.iter().enumerate() {
        for &j in succ {
            cur[i * words + j / 64] |= 1 << (j % 64);
        }
    }
    let mut next = vec![0u64; n * words];
    for t in 1..=horizon {
        if (0..n).all(|i| is_full(&cur[i * words..(i + 1) * words])) {
            return Some(t);
        }
        next.iter_mut().for_each(|w| *w = 0);
        for (i, succ) in g.adj.iter().enumerate() {
            for &k in succ {
                for w in 0..words {
                    next[i * words + w] |= cur[k * words + w];
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingResult {
    pub answer: Answer,
    pub period: usize,
    /// First T with A^T > 0, per resolution tested.
    pub exponents: Vec<Option<usize>>,
    pub cells: Vec<usize>,
}

/// Mixing of one graph: strongly connected, aperiodic, and A^T > 0 within
/// the horizon (4× the cell count by default).
pub fn is_mixing(g: &TransitionGraph, horizon: Option<usize>) -> MixingResult {
    let horizon = horizon.unwrap_or(4 * g.len());
    let trans = is_transitive(g);
    let mut out = MixingResult {
        answer: Answer::No,
        period: 0,
        exponents: vec![],
        cells: vec![g.len()],
    };
    if trans.answer != Answer::Yes {
        out.answer = trans.answer;
        return out;
    }
    let nodes = g.active();
    out.period = period(g, &nodes);
    if out.period > 1 {
        return out;
    }
    if nodes.len() != g.len() {
        out.answer = Answer::Inconclusive;
        return out;
    }
    let e = primitivity_exponent(g, horizon);
    out.exponents.push(e);
    out.answer = if e.is_some() { Answer::Yes } else { Answer::Inconclusive };
    out
}

/// A coarse graph of a rotation-like map reaches A^T > 0 only because cell
/// images smear by a cell width per step, so its exponent grows in
/// proportion to the resolution. This compares exponents at half and full
/// resolution: mixing when refinement costs less than a factor 1.5.
pub fn mixing_under_refinement(
    map: &(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync),
    partition: &BoxPartition,
    samples_per_cell: usize,
    seed: u64,
    exec: Exec,
) -> MixingResult {
    let fine = build_transition_graph(map, partition, samples_per_cell, seed, exec);
    let mut out = is_mixing(&fine, None);
    if out.answer != Answer::Yes || partition.res.iter().any(|&r| r < 4) {
        return out;
    }
    let coarse_part = partition.rescaled(1, 2);
    let coarse = build_transition_graph(map, &coarse_part, samples_per_cell, seed, exec);
    let c = is_mixing(&coarse, None);
    out.cells.insert(0, coarse.len());
    out.exponents.insert(0, c.exponents.first().copied().flatten());
    out.answer = match (c.answer, out.exponents[0], out.exponents[1]) {
        (Answer::Yes, Some(ec), Some(ef)) if (ef as f64) < 1.5 * ec as f64 => Answer::Yes,
        (Answer::Yes, Some(_), Some(_)) => Answer::No,
        _ => Answer::Inconclusive,
    };
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DividingWitness {
    /// Crossing points used as the two patches of Γ.
    pub patch_u: Vec<Vec<f64>>,
    pub patch_v: Vec<Vec<f64>>,
    /// Points of U (forward collar) and V (backward collar).
    pub u_points: Vec<Vec<f64>>,
    pub v_points: Vec<Vec<f64>>,
    pub crossings: Vec<usize>,
    /// Sign of γ after a crossing.
    pub direction: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Dividing {
    Witness(DividingWitness),
    /// The obstruction does not apply; `orbit` is the violating sample.
    Inapplicable { orbit: usize, crossings: usize, reason: String },
}

struct OrbitTrace {
    crossings: Vec<(Vec<f64>, f64)>,
}

fn trace(field: &(dyn Fn(&[f64]) -> Vec<f64> + Sync), gamma: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64], t: f64, dt: f64) -> OrbitTrace {
    let f = |_: f64, y: &[f64]| field(y);
    let steps = (t.abs() / dt).ceil() as usize;
    let h = t / steps as f64;
    let mut cur = x.to_vec();
    let mut g = gamma(&cur);
    let mut crossings = Vec::new();
    for _ in 0..steps {
        let nxt = rk4_step_vec(&f, 0.0, &cur, h);
        let gn = gamma(&nxt);
        if g != 0.0 && (gn == 0.0 || gn.signum() != g.signum()) {
            // linear interpolation is enough to seed the patch
            let w = g / (g - gn);
            let p = cur.iter().zip(&nxt).map(|(a, b)| a + w * (b - a)).collect();
            let after = if h > 0.0 { gn.signum() } else { g.signum() };
            crossings.push((p, after));
        }
        cur = nxt;
        g = gn;
    }
    OrbitTrace { crossings }
}

fn gradient_norm(gamma: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64]) -> f64 {
    let h = 1e-6;
    let mut z = x.to_vec();
    let mut sum = 0.0;
    for i in 0..x.len() {
        z[i] = x[i] + h;
        let a = gamma(&z);
        z[i] = x[i] - h;
        let b = gamma(&z);
        z[i] = x[i];
        sum += ((a - b) / (2.0 * h)).powi(2);
    }
    sum.sqrt()
}

/// Integrates every sample over [−T, T]. When each orbit meets {γ = 0} at
/// most once and always in the same direction, U and V are short flow-outs
/// of two disjoint sets of crossing points and Φ_t(U) ∩ V = ∅ is checked
/// for t ∈ [0, T].
pub fn dividing_obstruction(
    field: &(dyn Fn(&[f64]) -> Vec<f64> + Sync),
    gamma: &(dyn Fn(&[f64]) -> f64 + Sync),
    samples: &[Vec<f64>],
    t_horizon: f64,
    dt: f64,
) -> Result<Dividing> {
    if !(t_horizon > 0.0 && dt > 0.0) {
        return Err(Error::Precondition("horizon and step must be positive".into()));
    }
    let mut crossings = Vec::with_capacity(samples.len());
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut direction = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let fwd = trace(field, gamma, x, t_horizon, dt);
        let bwd = trace(field, gamma, x, -t_horizon, dt);
        let all: Vec<_> = fwd.crossings.into_iter().chain(bwd.crossings).collect();
        for (p, _) in &all {
            if gradient_norm(gamma, p) < 1e-8 {
                return Err(Error::Precondition(format!("Γ is not regular at {p:?}")));
            }
        }
        if all.len() > 1 {
            return Ok(Dividing::Inapplicable {
                orbit: i,
                crossings: all.len(),
                reason: "orbit meets Γ more than once".into(),
            });
        }
        if let Some((p, after)) = all.into_iter().next() {
            if direction != 0.0 && after != direction {
                return Ok(Dividing::Inapplicable {
                    orbit: i,
                    crossings: 1,
                    reason: "orbits cross Γ in both directions".into(),
                });
            }
            direction = after;
            points.push(p);
            crossings.push(1);
        } else {
            crossings.push(0);
        }
    }
    if points.len() < 2 {
        return Ok(Dividing::Inapplicable {
            orbit: 0,
            crossings: points.len(),
            reason: "fewer than two sampled orbits meet Γ".into(),
        });
    }
    let half = points.len() / 2;
    let (patch_u, patch_v) = (points[..half].to_vec(), points[half..].to_vec());
    let collar = (10.0 * dt).min(0.1 * t_horizon);
    let flow_out = |p: &[f64], t: f64| {
        let f = |_: f64, y: &[f64]| field(y);
        let steps = 10;
        (0..steps).fold(p.to_vec(), |y, _| rk4_step_vec(&f, 0.0, &y, t / steps as f64))
    };
    let u_points: Vec<Vec<f64>> = patch_u.iter().map(|p| flow_out(p, collar)).collect();
    let v_points: Vec<Vec<f64>> = patch_v.iter().map(|p| flow_out(p, -collar)).collect();
    // V lies on the side before Γ; U must never return there
    for (k, u) in u_points.iter().enumerate() {
        if gamma(u).signum() != direction || !trace(field, gamma, u, t_horizon, dt).crossings.is_empty() {
            return Ok(Dividing::Inapplicable {
                orbit: k,
                crossings: 1,
                reason: "flow-out of U returns across Γ".into(),
            });
        }
    }
    if v_points.iter().any(|v| gamma(v).signum() != -direction) {
        return Ok(Dividing::Inapplicable {
            orbit: half,
            crossings: 1,
            reason: "backward collar is not on the far side of Γ".into(),
        });
    }
    Ok(Dividing::Witness(DividingWitness {
        patch_u,
        patch_v,
        u_points,
        v_points,
        crossings,
        direction,
        horizon: t_horizon,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat(x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![(2.0 * x[0] + x[1]).rem_euclid(1.0), (x[0] + x[1]).rem_euclid(1.0)])
    }

    fn rotation(w: f64) -> impl Fn(&[f64]) -> Option<Vec<f64>> + Sync {
        move |x: &[f64]| Some(vec![(x[0] + w).rem_euclid(1.0)])
    }

    fn identity(x: &[f64]) -> Option<Vec<f64>> {
        Some(x.to_vec())
    }

    /// Exhaustive reachability by Floyd-Warshall closure.
    fn oracle_strongly_connected(adj: &[Vec<usize>]) -> bool {
        let n = adj.len();
        let mut r = vec![vec![false; n]; n];
        for (i, s) in adj.iter().enumerate() {
            r[i][i] = true;
            for &j in s {
                r[i][j] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r.iter().all(|row| row.iter().all(|x| *x))
    }

    #[test]
    fn partition_indexing() {
        let p = BoxPartition::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![4, 2], vec![true, false]).unwrap();
        assert_eq!(p.cells(), 8);
        assert_eq!(p.cell_of(&[0.3, 0.5]), Some(1 + 4));
        assert_eq!(p.cell_of(&[1.3, -0.5]), Some(1));
        assert_eq!(p.cell_of(&[0.3, 1.5]), None);
        let (a, b) = p.cell_bounds(5);
        assert_eq!((a, b), (vec![0.25, 0.0], vec![0.5, 1.0]));
    }

    #[test]
    fn identity_has_only_self_loops() {
        let g = build_transition_graph(&identity, &BoxPartition::torus(1, 8), 16, 1, Exec::Sequential);
        for (i, s) in g.adj.iter().enumerate() {
            assert_eq!(s, &vec![i]);
        }
        let t = is_transitive(&g);
        assert_eq!(t.answer, Answer::No);
        let (i, j) = t.witness.unwrap();
        assert_ne!(i, j);
        assert_eq!(is_mixing(&g, None).answer, Answer::No);
    }

    #[test]
    fn quarter_rotation_is_two_four_cycles() {
        let g = build_transition_graph(&rotation(0.25), &BoxPartition::torus(1, 8), 16, 1, Exec::Sequential);
        for (i, s) in g.adj.iter().enumerate() {
            assert_eq!(s, &vec![(i + 2) % 8]);
        }
        let t = is_transitive(&g);
        assert_eq!((t.answer, t.components), (Answer::No, 2));
        assert_eq!(is_mixing(&g, None).answer, Answer::No);
        // restricted to one orbit of cells the period is 4
        let sub = TransitionGraph::from_adjacency(vec![vec![1], vec![2], vec![3], vec![0]]);
        assert_eq!(period(&sub, &[0, 1, 2, 3]), 4);
    }

    #[test]
    fn cat_map_is_transitive_and_mixing() {
        let part = BoxPartition::torus(2, 32);
        let g = build_transition_graph(&cat, &part, 16, 3, Exec::default());
        // every sampled edge lands inside the exact image parallelogram of its cell
        for (i, succ) in g.adj.iter().enumerate().step_by(37) {
            let (a, b) = part.cell_bounds(i);
            for &j in succ {
                let (c, d) = part.cell_bounds(j);
                let hit = (0..=20).any(|p| {
                    (0..=20).any(|q| {
                        let x = [a[0] + (b[0] - a[0]) * p as f64 / 20.0, a[1] + (b[1] - a[1]) * q as f64 / 20.0];
                        let y = cat(&x).unwrap();
                        let tol = 1.0 / 32.0 / 10.0;
                        (0..2).all(|k| {
                            let dist = |v: f64| (v - y[k]).rem_euclid(1.0).min((y[k] - v).rem_euclid(1.0));
                            (y[k] >= c[k] && y[k] <= d[k]) || dist(c[k]) < tol || dist(d[k]) < tol
                        })
                    })
                });
                assert!(hit, "edge {i} -> {j}");
            }
        }
        assert_eq!(is_transitive(&g).answer, Answer::Yes);
        let m = mixing_under_refinement(&cat, &part, 16, 3, Exec::default());
        assert_eq!(m.answer, Answer::Yes, "{m:?}");
    }

    #[test]
    fn golden_rotation_is_transitive_but_not_mixing() {
        let w = (5f64.sqrt() - 1.0) / 2.0;
        let part = BoxPartition::torus(1, 64);
        let g = build_transition_graph(&rotation(w), &part, 16, 5, Exec::Sequential);
        assert_eq!(is_transitive(&g).answer, Answer::Yes);
        let m = mixing_under_refinement(&rotation(w), &part, 16, 5, Exec::Sequential);
        assert_eq!(m.answer, Answer::No, "{m:?}");
    }

    #[test]
    fn verdicts_are_deterministic() {
        let part = BoxPartition::torus(2, 16);
        let a = build_transition_graph(&cat, &part, 16, 9, Exec::Sequential);
        let b = build_transition_graph(&cat, &part, 16, 9, Exec::default());
        assert_eq!(a, b);
        assert_eq!(a.to_adjacency_text(), b.to_adjacency_text());
    }

    #[test]
    fn no_verdicts_persist_under_refinement() {
        for map in [&identity as &(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync), &rotation(0.25)] {
            for res in [8, 16] {
                let g = build_transition_graph(map, &BoxPartition::torus(1, res), 16, 1, Exec::Sequential);
                assert_eq!(is_transitive(&g).answer, Answer::No);
            }
        }
    }

    #[test]
    fn escaping_cells_are_exterior_and_block_no() {
        let part = BoxPartition::new(vec![0.0], vec![1.0], vec![4], vec![false]).unwrap();
        let shift = |x: &[f64]| Some(vec![x[0] + 0.5]);
        let g = build_transition_graph(&shift, &part, 8, 1, Exec::Sequential);
        assert!(g.exterior[2] && g.exterior[3]);
        assert_eq!(is_transitive(&g).answer, Answer::Inconclusive);
        assert!(g.to_adjacency_text().contains("3: exterior"));
    }

    #[test]
    fn adjacency_text_format() {
        let g = TransitionGraph::from_adjacency(vec![vec![1], vec![0, 1]]);
        assert_eq!(g.to_adjacency_text(), "# cells 2 samples_per_cell 0 seed 0\n0: 1\n1: 0 1\n");
    }

    #[test]
    fn monotone_flow_has_a_dividing_witness() {
        // ẏ = 1 − y² on [−1, 1] × S¹
        let field = |x: &[f64]| vec![1.0 - x[0] * x[0], 0.0];
        let gamma = |x: &[f64]| x[0];
        let samples: Vec<Vec<f64>> = (0..20).map(|k| vec![-0.9 + 0.09 * k as f64, 0.05 * k as f64]).collect();
        match dividing_obstruction(&field, &gamma, &samples, 5.0, 0.01).unwrap() {
            Dividing::Witness(w) => {
                assert!(w.crossings.iter().all(|c| *c <= 1));
                assert_eq!(w.direction, 1.0);
                assert!(w.u_points.iter().all(|u| u[0] > 0.0));
                assert!(w.v_points.iter().all(|v| v[0] < 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_parallel_circles_are_crossed_twice() {
        // gradient flow of cos on S¹ (times a trivial factor), Γ = {x = π/4} ∪ {x = π/2}
        let field = |x: &[f64]| vec![-x[0].sin(), 0.0];
        let gamma = |x: &[f64]| (x[0] - std::f64::consts::FRAC_PI_4).sin() * (x[0] - std::f64::consts::FRAC_PI_2).sin();
        let samples = vec![vec![2.0, 0.0], vec![1.0, 0.3]];
        match dividing_obstruction(&field, &gamma, &samples, 10.0, 0.01).unwrap() {
            Dividing::Inapplicable { orbit, crossings, .. } => assert_eq!((orbit, crossings), (0, 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rotation_recrosses() {
        let field = |x: &[f64]| vec![x[1], -x[0]];
        let gamma = |x: &[f64]| x[0];
        let out = dividing_obstruction(&field, &gamma, &[vec![0.1, 0.05]], 10.0, 0.01).unwrap();
        assert!(matches!(out, Dividing::Inapplicable { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn transitivity_matches_exhaustive_reachability(
            n in 1usize..=16,
            edges in prop::collection::vec((0usize..16, 0usize..16), 0..48),
        ) {
            let mut adj = vec![Vec::new(); n];
            for (a, b) in edges {
                adj[a % n].push(b % n);
            }
            for s in &mut adj {
                s.sort_unstable();
                s.dedup();
            }
            let g = TransitionGraph::from_adjacency(adj.clone());
            let want = oracle_strongly_connected(&adj);
            prop_assert_eq!(is_transitive(&g).answer == Answer::Yes, want);
        }
    }
}
