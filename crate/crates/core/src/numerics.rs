//! Small numerical kernels shared across modules.

use nalgebra::{DMatrix, DVector};

/// One classical RK4 step for an autonomous system.
pub fn rk4_step<const D: usize>(f: impl Fn(&[f64; D]) -> [f64; D], y: &[f64; D], h: f64) -> [f64; D] {
    let add = |a: &[f64; D], b: &[f64; D], c: f64| {
        let mut o = *a;
        for i in 0..D {
            o[i] += c * b[i];
        }
        o
    };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, h / 2.0));
    let k3 = f(&add(y, &k2, h / 2.0));
    let k4 = f(&add(y, &k3, h));
    let mut out = *y;
    for i in 0..D {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// RK4 step for a time-dependent system on a dynamically sized state.
pub fn rk4_step_vec(f: &dyn Fn(f64, &[f64]) -> Vec<f64>, t: f64, y: &[f64], h: f64) -> Vec<f64> {
    let shift = |k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + h / 2.0, &shift(&k1, h / 2.0));
    let k3 = f(t + h / 2.0, &shift(&k2, h / 2.0));
    let k4 = f(t + h, &shift(&k3, h));
    (0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Integrates `f` over [a, b] with a fixed Gauss-Legendre rule.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Central finite-difference Jacobian with relative step `h_rel`.
pub fn fd_jacobian(map: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h_rel: f64) -> DMatrix<f64> {
    let y0 = map(x);
    let mut jac = DMatrix::zeros(y0.len(), x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = h_rel * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let yp = map(&xp);
        xp[j] = x[j] - h;
        let ym = map(&xp);
        xp[j] = x[j];
        for i in 0..y0.len() {
            jac[(i, j)] = (yp[i] - ym[i]) / (2.0 * h);
        }
    }
    jac
}

/// Richardson-extrapolated central differences (fourth order).
pub fn fd_jacobian_richardson(map: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h_rel: f64) -> DMatrix<f64> {
    let coarse = fd_jacobian(map, x, 2.0 * h_rel);
    let fine = fd_jacobian(map, x, h_rel);
    (fine * 4.0 - coarse) / 3.0
}

/// Solves `a x = b` by LU, returning `None` when the matrix is singular.
pub fn solve(a: DMatrix<f64>, b: DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.lu();
    let x = lu.solve(&b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares with intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let v = integrate(|x| x.powi(15) + 3.0 * x * x, 0.0, 2.0, &rule);
        assert!((v - (2f64.powi(16) / 16.0 + 8.0)).abs() < 1e-9);
    }

    #[test]
    fn rk4_matches_exponential() {
        let mut y = [1.0];
        for _ in 0..100 {
            y = rk4_step(|y| [y[0]], &y, 0.01);
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn fd_jacobian_of_linear_map_is_exact() {
        let map = |x: &[f64]| vec![2.0 * x[0] + x[1], -x[1]];
        let j = fd_jacobian(&map, &[0.3, 0.7], 1e-6);
        assert!((j[(0, 0)] - 2.0).abs() < 1e-8 && (j[(0, 1)] - 1.0).abs() < 1e-8);
        assert!((j[(1, 1)] + 1.0).abs() < 1e-8 && j[(1, 0)].abs() < 1e-8);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = linear_fit(&x, &y);
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.r_squared - 1.0).abs() < 1e-12);
    }
}
