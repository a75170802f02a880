//! Reference solutions of the nonlinear system itself, independent of the
//! Carleman machinery.

use crate::carleman::NonlinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{c, tensor_power, CVector};
use crate::tensor::product_rule;

/// Integration aborts once `‖u‖` exceeds this.
pub const BLOW_UP_NORM: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
    /// Requested maximal step.
    pub step: f64,
    pub order: u32,
    pub steps_taken: usize,
}

impl OracleSolution {
    /// State at a grid time (exact match up to 1e-12).
    pub fn at(&self, t: f64) -> Option<&CVector> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12).map(|k| &self.states[k])
    }

    pub fn last(&self) -> &CVector {
        self.states.last().expect("solution has at least one state")
    }
}

/// Classical RK4 for `u' = Σ_j W_j u^{⊗j}` with sub-steps of size at most `h`
/// between consecutive grid times (equal sub-steps within each interval).
pub fn integrate(sys: &NonlinearSystem, times: &[f64], h: f64) -> Result<OracleSolution> {
    integrate_with(|u: &CVector| sys.rhs(u.as_slice()), sys.phi0().clone(), times, h)
}

/// RK4 driver for an arbitrary vector field; shared with the spectral
/// reference solver.
pub fn integrate_with(f: impl Fn(&CVector) -> CVector, u0: CVector, times: &[f64], h: f64) -> Result<OracleSolution> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be non-negative and strictly increasing".into()));
    }
    let mut u = u0;
    let mut t = 0.0;
    let mut states = Vec::with_capacity(times.len());
    let mut total = 0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let count = (span / h - 1e-9).ceil().max(1.0) as usize;
            let dt = span / count as f64;
            for k in 0..count {
                u = rk4_step(&f, &u, dt);
                let norm = u.norm();
                if !norm.is_finite() || norm > BLOW_UP_NORM {
                    return Err(Error::BlowUp { time: t + (k + 1) as f64 * dt, norm });
                }
            }
            total += count;
        }
        t = target;
        states.push(u.clone());
    }
    Ok(OracleSolution { times: times.to_vec(), states, step: h, order: 4, steps_taken: total })
}

fn rk4_step(f: &impl Fn(&CVector) -> CVector, u: &CVector, h: f64) -> CVector {
    let hc = c(h);
    let k1 = f(u);
    let k2 = f(&(u + &k1 * (hc * 0.5)));
    let k3 = f(&(u + &k2 * (hc * 0.5)));
    let k4 = f(&(u + &k3 * hc));
    u + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (hc / 6.0)
}

/// `u(t) = u0 / (u0 + (1 − u0) e^t)` for `u' = −u + u²`, `0 ≤ u0 < 1`.
pub fn logistic_closed_form(u0: f64, t: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u0) {
        return Err(Error::InvalidArgument(format!("logistic closed form needs 0 ≤ u0 < 1, got {u0}")));
    }
    Ok(u0 / (u0 + (1.0 - u0) * t.exp()))
}

/// Norm of the difference between a central difference of `u^{⊗n}` at grid
/// time `t` and `Σ_i u^{⊗(i-1)} ⊗ f(u) ⊗ u^{⊗(n-i)}`. The neighbours of `t` in
/// the grid must be equidistant.
pub fn tensor_power_derivative_check(sol: &OracleSolution, sys: &NonlinearSystem, n: usize, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("tensor power needs n ≥ 1".into()));
    }
    let k = sol
        .times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12)
        .filter(|&k| k > 0 && k + 1 < sol.times.len())
        .ok_or_else(|| Error::InvalidArgument(format!("t = {t} is not an interior grid point")))?;
    let (tm, tp) = (sol.times[k - 1], sol.times[k + 1]);
    let delta = tp - sol.times[k];
    if ((sol.times[k] - tm) - delta).abs() > 1e-12 * delta.max(1.0) {
        return Err(Error::InvalidArgument("grid neighbours of t are not equidistant".into()));
    }
    let plus = tensor_power(sol.states[k + 1].as_slice(), n);
    let minus = tensor_power(sol.states[k - 1].as_slice(), n);
    let u = sol.states[k].as_slice();
    let exact = product_rule(u, sys.rhs(u).as_slice(), n);
    let residual = plus
        .iter()
        .zip(&minus)
        .zip(&exact)
        .map(|((p, m), e)| ((p - m) / (2.0 * delta) - e).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(residual)
}

/// Least-squares slope of `log(err)` against `log(h)`.
pub fn observed_order(steps: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = steps
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    least_squares_slope(&pts)
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
