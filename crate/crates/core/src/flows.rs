//! The profile Hamiltonian H = h(t) and its flow Φ^H_r(s, t, u) = (f_r(t)·s, ψ_r(t), u).
//!
//! For α = dt − Σ sᵢduᵢ the contact vector field of h(t) is h ∂_t + h′ Σ sᵢ∂_{sᵢ},
//! so f_r = exp(∫ h′(ψ_ρ) dρ) and (Φ^H_r)^*α = f_r·α.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chart::{ChartParams, ChartPoint};
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, integrate, rk4_step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Blend {
    /// h = L/3 + (t − L/3)(2L/3 − t)/(L/3) on the middle range.
    #[default]
    Quadratic,
    /// Adds a quartic bump: q(x) = y + y², y = x(1 − x).
    Quartic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileH {
    pub l: f64,
    bump: f64,
}

impl ProfileH {
    pub fn new(l: f64, blend: Blend) -> Self {
        let bump = match blend {
            Blend::Quadratic => 0.0,
            Blend::Quartic => 1.0,
        };
        ProfileH { l, bump }
    }

    fn third(&self) -> f64 {
        self.l / 3.0
    }

    pub fn h(&self, t: f64) -> f64 {
        let a = self.third();
        if t <= a {
            t
        } else if t >= 2.0 * a {
            self.l - t
        } else {
            let x = (t - a) / a;
            let y = x * (1.0 - x);
            a + a * (y + self.bump * y * y)
        }
    }

    pub fn h_prime(&self, t: f64) -> f64 {
        let a = self.third();
        if t <= a {
            1.0
        } else if t >= 2.0 * a {
            -1.0
        } else {
            let x = (t - a) / a;
            let y = x * (1.0 - x);
            (1.0 - 2.0 * x) * (1.0 + 2.0 * self.bump * y)
        }
    }

    pub fn h_second(&self, t: f64) -> f64 {
        let a = self.third();
        if t <= a || t >= 2.0 * a {
            0.0
        } else {
            self.middle_second(t)
        }
    }

    /// h″ of the middle-range formula, used where a segment is known to stay
    /// in the middle range even if a stage lands on a junction.
    fn middle_second(&self, t: f64) -> f64 {
        let a = self.third();
        let x = (t - a) / a;
        let y = x * (1.0 - x);
        (-2.0 * (1.0 + 2.0 * self.bump * y) + 2.0 * self.bump * (1.0 - 2.0 * x).powi(2)) / a
    }
}

/// Flow state along the t-axis: ψ, log f and g = ∂(log f)/∂t₀.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisState {
    pub psi: f64,
    pub log_f: f64,
    pub g: f64,
}

impl AxisState {
    pub fn f(&self) -> f64 {
        self.log_f.exp()
    }
}

#[derive(Clone, Debug)]
pub struct Flow {
    pub profile: ProfileH,
    pub step: f64,
    lo: f64,
    hi: f64,
    rule: (Vec<f64>, Vec<f64>),
    transit_time: f64,
    transit_log_f: f64,
    transit_g: f64,
}

impl Flow {
    pub fn new(chart: &ChartParams, blend: Blend) -> Self {
        Flow::with_step(chart, blend, 1e-4 * chart.l)
    }

    pub fn with_step(chart: &ChartParams, blend: Blend, step: f64) -> Self {
        assert!(step > 0.0, "step must be positive");
        let (lo, hi) = chart.t_range();
        let mut flow = Flow {
            profile: ProfileH::new(chart.l, blend),
            step,
            lo,
            hi,
            rule: gauss_legendre(24),
            transit_time: 0.0,
            transit_log_f: 0.0,
            transit_g: 0.0,
        };
        let a = chart.l / 3.0;
        flow.transit_time = flow.time_between(a, 2.0 * a);
        let end = flow.rk4(
            AxisState {
                psi: a,
                log_f: 0.0,
                g: 0.0,
            },
            flow.transit_time,
        );
        flow.transit_log_f = end.log_f;
        flow.transit_g = end.g;
        flow
    }

    /// Flow time from `a` to `b` inside the middle range, ∫ ds / h(s).
    fn time_between(&self, a: f64, b: f64) -> f64 {
        integrate(|s| 1.0 / self.profile.h(s), a, b, &self.rule)
    }

    /// Moves a middle-range state to ψ, using f = h(ψ)/h(t) and
    /// ∂f/∂t = f·(h′(ψ) − h′(t))/h(ψ) for an autonomous flow.
    fn middle_jump(&self, st: AxisState, psi: f64) -> AxisState {
        let p = &self.profile;
        let t = st.psi;
        AxisState {
            psi,
            log_f: st.log_f + (p.h(psi) / p.h(t)).ln(),
            g: st.g + st.log_f.exp() * (p.h_prime(psi) - p.h_prime(t)) / p.h(t),
        }
    }

    /// ψ between t and `bound` with ∫_t^ψ ds/h = rem, by Newton safeguarded
    /// with bisection.
    fn solve_middle(&self, t: f64, bound: f64, rem: f64) -> f64 {
        let (mut lo, mut hi) = if bound > t { (t, bound) } else { (bound, t) };
        let residual = |x: f64| self.time_between(t, x).abs() - rem;
        let mut x = (t + (bound - t).signum() * rem * self.profile.h(t)).clamp(lo, hi);
        for _ in 0..100 {
            let fx = residual(x);
            // residual grows with distance from t
            if (fx > 0.0) == (bound > t) {
                hi = x;
            } else {
                lo = x;
            }
            let step = fx * self.profile.h(x) * (bound - t).signum();
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
                return next;
            }
            x = next;
        }
        x
    }

    fn rhs(&self, y: &[f64; 3], middle: bool) -> [f64; 3] {
        let p = &self.profile;
        let curv = if middle { p.middle_second(y[0]) } else { p.h_second(y[0]) };
        [p.h(y[0]), p.h_prime(y[0]), curv * y[1].exp()]
    }

    /// RK4 for a segment inside the middle range.
    fn rk4(&self, s: AxisState, duration: f64) -> AxisState {
        self.rk4_with(s, duration, true)
    }

    /// Plain RK4 over a signed duration, in equal steps no longer than `self.step`.
    fn rk4_with(&self, s: AxisState, duration: f64, middle: bool) -> AxisState {
        let n = (duration.abs() / self.step).ceil().max(1.0) as usize;
        let h = duration / n as f64;
        let mut y = [s.psi, s.log_f, s.g];
        for _ in 0..n {
            y = rk4_step(|y| self.rhs(y, middle), &y, h);
        }
        AxisState {
            psi: y[0],
            log_f: y[1],
            g: y[2],
        }
    }

    /// RK4 over the whole range, without closed forms or junction handling.
    pub fn integrate_rk4(&self, r: f64, t0: f64) -> AxisState {
        self.rk4_with(
            AxisState {
                psi: t0,
                log_f: 0.0,
                g: 0.0,
            },
            r,
            false,
        )
    }

    fn range_error(&self, start: f64, exit_time: f64) -> Error {
        Error::Range {
            start,
            exit_time,
            lo: self.lo,
            hi: self.hi,
        }
    }

    /// Full state of the t-axis flow at signed time `r` from `t0`.
    pub fn state(&self, r: f64, t0: f64) -> Result<AxisState> {
        if !(t0 >= self.lo && t0 <= self.hi) {
            return Err(self.range_error(t0, 0.0));
        }
        let a = self.profile.l / 3.0;
        let l = self.profile.l;
        let dir = if r >= 0.0 { 1.0 } else { -1.0 };
        let mut st = AxisState {
            psi: t0,
            log_f: 0.0,
            g: 0.0,
        };
        let mut rem = r.abs();
        let mut elapsed = 0.0;
        while rem > 0.0 {
            let t = st.psi;
            let lower = t < a || (t == a && dir < 0.0);
            let upper = t > 2.0 * a || (t == 2.0 * a && dir > 0.0);
            if lower {
                // ψ = t·e^τ, log f += τ
                if t == 0.0 {
                    st.log_f += dir * rem;
                    break;
                }
                if dir > 0.0 && t > 0.0 {
                    let cross = (a / t).ln();
                    if rem >= cross {
                        st.psi = a;
                        st.log_f += cross;
                        rem -= cross;
                        elapsed += cross;
                        continue;
                    }
                } else if dir > 0.0 && t < 0.0 {
                    let exit = (self.lo / t).ln();
                    if rem > exit {
                        return Err(self.range_error(t0, elapsed + exit));
                    }
                }
                st.psi = t * (dir * rem).exp();
                st.log_f += dir * rem;
                break;
            } else if upper {
                // ψ = L + (t − L)·e^{−τ}, log f −= τ
                let x = t - l;
                if x == 0.0 {
                    st.log_f -= dir * rem;
                    break;
                }
                if dir < 0.0 && x < 0.0 {
                    let cross = (a / -x).ln();
                    if rem >= cross {
                        st.psi = 2.0 * a;
                        st.log_f += cross;
                        rem -= cross;
                        elapsed += cross;
                        continue;
                    }
                } else if dir < 0.0 && x > 0.0 {
                    let exit = ((self.hi - l) / x).ln();
                    if rem > exit {
                        return Err(self.range_error(t0, elapsed + exit));
                    }
                }
                st.psi = l + x * (-dir * rem).exp();
                st.log_f -= dir * rem;
                break;
            } else {
                let target = if dir > 0.0 { 2.0 * a } else { a };
                if t == a && dir > 0.0 && rem >= self.transit_time {
                    st.g += st.log_f.exp() * self.transit_g;
                    st.log_f += self.transit_log_f;
                    st.psi = target;
                    rem -= self.transit_time;
                    elapsed += self.transit_time;
                    continue;
                }
                if t == 2.0 * a && dir < 0.0 && rem >= self.transit_time {
                    st.log_f -= self.transit_log_f;
                    st.g -= st.log_f.exp() * self.transit_g;
                    st.psi = target;
                    rem -= self.transit_time;
                    elapsed += self.transit_time;
                    continue;
                }
                let to_junction = self.time_between(t, target).abs();
                if rem >= to_junction {
                    st = self.middle_jump(st, target);
                    rem -= to_junction;
                    elapsed += to_junction;
                    continue;
                }
                let psi = self.solve_middle(t, target, rem);
                st = self.middle_jump(st, psi);
                break;
            }
        }
        Ok(st)
    }

    pub fn psi_flow(&self, r: f64, t0: f64) -> Result<f64> {
        Ok(self.state(r, t0)?.psi)
    }

    pub fn f_factor(&self, r: f64, t0: f64) -> Result<f64> {
        Ok(self.state(r, t0)?.f())
    }

    pub fn phi_h(&self, r: f64, p: &ChartPoint) -> Result<ChartPoint> {
        let st = self.state(r, p.t)?;
        let f = st.f();
        Ok(ChartPoint::new(p.s.iter().map(|s| f * s).collect(), st.psi, p.u.clone()))
    }

    /// Image and Jacobian (in (s, t, u) order) of Φ^H_r at `p`.
    pub fn phi_h_jacobian(&self, r: f64, p: &ChartPoint) -> Result<(ChartPoint, DMatrix<f64>)> {
        let st = self.state(r, p.t)?;
        let n = p.n();
        let f = st.f();
        let mut jac = DMatrix::identity(2 * n + 1, 2 * n + 1);
        for i in 0..n {
            jac[(i, i)] = f;
            jac[(i, n)] = f * st.g * p.s[i];
        }
        jac[(n, n)] = f;
        let image = ChartPoint::new(p.s.iter().map(|s| f * s).collect(), st.psi, p.u.clone());
        Ok((image, jac))
    }

    /// Flow time needed for a full pass through the middle range.
    pub fn transit_time(&self) -> f64 {
        self.transit_time
    }
}
