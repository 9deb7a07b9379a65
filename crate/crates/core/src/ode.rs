//! Adaptive Dormand-Prince 5(4) integrator with PI step control, an optional
//! state guard (used to keep trajectories on the simplex) and the method's
//! fourth-order dense output.

use crate::error::{Error, Result};

/// What a guard did to a freshly accepted state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuardOutcome {
    Unchanged,
    Corrected,
    Reject,
}

pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
    /// Inspect (and possibly project) a candidate state; returns the
    /// largest violation seen as the second value.
    fn guard(&mut self, _y: &mut [f64]) -> (GuardOutcome, f64) {
        (GuardOutcome::Unchanged, 0.0)
    }
}

/// Adapter turning a closure into an [`OdeSystem`] without a guard.
pub struct FnSystem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> OdeSystem for FnSystem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy)
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-8,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub guard_corrections: usize,
    /// Largest guard violation (e.g. most negative coordinate) seen on accepted steps.
    pub max_violation: f64,
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub t_final: f64,
    pub y_final: Vec<f64>,
    /// True when the observer requested an early stop.
    pub stopped: bool,
    pub stats: OdeStats,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// fourth-order continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates from `t0` to `t_end`, recording the state at every time in
/// `samples` (sorted, within `[t0, t_end]`). `observer(t, y)` runs after every
/// accepted step; returning `true` stops the integration.
pub fn solve<S: OdeSystem>(
    sys: &mut S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    samples: &[f64],
    opts: &OdeOptions,
    mut observer: impl FnMut(f64, &[f64]) -> bool,
) -> Result<OdeSolution> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state dimension");
    if !(t_end >= t0) {
        return Err(Error::Parameter(format!("t_end {t_end} precedes t0 {t0}")));
    }
    let mut stats = OdeStats::default();
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let mut next_sample = 0;
    while next_sample < samples.len() && samples[next_sample] <= t0 {
        times.push(samples[next_sample]);
        states.push(y0.to_vec());
        next_sample += 1;
    }

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut fnew = vec![0.0; n];
    let mut buf = vec![0.0; n];

    sys.rhs(t, &y, &mut k[0])?;
    stats.evaluations += 1;

    if t_end == t0 {
        return Ok(OdeSolution {
            times,
            states,
            t_final: t,
            y_final: y,
            stopped: false,
            stats,
        });
    }

    let span = t_end - t0;
    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            // Hairer's starting step heuristic
            let sc = |i: usize, yv: &[f64]| opts.atol + opts.rtol * yv[i].abs();
            let d0 = (0..n).map(|i| (y[i] / sc(i, &y)).powi(2)).sum::<f64>() / n.max(1) as f64;
            let d1 = (0..n).map(|i| (k[0][i] / sc(i, &y)).powi(2)).sum::<f64>() / n.max(1) as f64;
            let h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * (d0 / d1).sqrt() };
            let h0 = h0.min(span);
            for i in 0..n {
                ytmp[i] = y[i] + h0 * k[0][i];
            }
            sys.rhs(t + h0, &ytmp, &mut buf)?;
            stats.evaluations += 1;
            let d2 = ((0..n)
                .map(|i| ((buf[i] - k[0][i]) / sc(i, &y)).powi(2))
                .sum::<f64>()
                / n.max(1) as f64)
                .sqrt()
                / h0;
            let h1 = if d1.sqrt().max(d2) <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / d1.sqrt().max(d2)).powf(1.0 / 5.0)
            };
            (100.0 * h0).min(h1)
        }
    };
    h = h.min(opts.h_max).min(span);
    let mut err_old: f64 = 1e-4;
    let mut rejected_last = false;
    let mut stopped = false;

    loop {
        if t >= t_end {
            break;
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Stiff { t, h });
        }
        let remaining = t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::Stiff { t, h });
        }

        // stages
        let (k0, rest) = k.split_at_mut(1);
        let k0 = &k0[0];
        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k0[i];
        }
        sys.rhs(t + C[1] * h, &ytmp, &mut rest[0])?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k0[i] + A32 * rest[0][i]);
        }
        sys.rhs(t + C[2] * h, &ytmp, &mut rest[1])?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k0[i] + A42 * rest[0][i] + A43 * rest[1][i]);
        }
        sys.rhs(t + C[3] * h, &ytmp, &mut rest[2])?;
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A51 * k0[i] + A52 * rest[0][i] + A53 * rest[1][i] + A54 * rest[2][i]);
        }
        sys.rhs(t + C[4] * h, &ytmp, &mut rest[3])?;
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k0[i]
                    + A62 * rest[0][i]
                    + A63 * rest[1][i]
                    + A64 * rest[2][i]
                    + A65 * rest[3][i]);
        }
        sys.rhs(t + h, &ytmp, &mut rest[4])?;
        for i in 0..n {
            ynew[i] = y[i]
                + h * (B1 * k0[i] + B3 * rest[1][i] + B4 * rest[2][i] + B5 * rest[3][i] + B6 * rest[4][i]);
        }
        sys.rhs(t + h, &ynew, &mut fnew)?;
        stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k0[i]
                    + E3 * rest[1][i]
                    + E4 * rest[2][i]
                    + E5 * rest[3][i]
                    + E6 * rest[4][i]
                    + E7 * fnew[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let (outcome, violation) = sys.guard(&mut ynew);
            if outcome == GuardOutcome::Reject {
                stats.rejected += 1;
                h *= 0.5;
                rejected_last = true;
                continue;
            }
            if outcome == GuardOutcome::Corrected {
                stats.guard_corrections += 1;
                sys.rhs(t + h, &ynew, &mut fnew)?;
                stats.evaluations += 1;
            }
            stats.max_violation = stats.max_violation.max(violation);
            let t_new = if last { t_end } else { t + h };
            while next_sample < samples.len() && samples[next_sample] <= t_new {
                let ts = samples[next_sample];
                let mut out = vec![0.0; n];
                if ts >= t_new {
                    out.copy_from_slice(&ynew);
                } else {
                    let theta = (ts - t) / (t_new - t);
                    let th1 = 1.0 - theta;
                    for i in 0..n {
                        let diff = ynew[i] - y[i];
                        let b = h * k[0][i] - diff;
                        let c = diff - h * fnew[i] - b;
                        let d = h
                            * (D1 * k[0][i]
                                + D3 * k[2][i]
                                + D4 * k[3][i]
                                + D5 * k[4][i]
                                + D6 * k[5][i]
                                + D7 * fnew[i]);
                        out[i] = y[i] + theta * (diff + th1 * (b + theta * (c + th1 * d)));
                    }
                }
                times.push(ts);
                states.push(out);
                next_sample += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            k[0].copy_from_slice(&fnew);
            stats.steps += 1;

            let mut fac = 0.9 * err.max(1e-10).powf(-0.17) * err_old.powf(0.04);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            err_old = err.max(1e-4);
            rejected_last = false;
            h = (h * fac).min(opts.h_max);
            if observer(t, &y) {
                stopped = true;
                break;
            }
        } else {
            stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            rejected_last = true;
        }
    }

    Ok(OdeSolution {
        times,
        states,
        t_final: t,
        y_final: y,
        stopped,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_hits_closed_form() {
        let mut sys = FnSystem {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = -y[0];
                Ok(())
            },
        };
        let samples: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let sol = solve(&mut sys, 0.0, &[1.0], 5.0, &samples, &OdeOptions::with_tol(1e-10), |_, _| false).unwrap();
        assert_eq!(sol.times.len(), 11);
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - (-t).exp()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let mut sys = FnSystem {
            dim: 2,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
        };
        let samples: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let sol = solve(&mut sys, 0.0, &[1.0, 0.0], 10.0, &samples, &OdeOptions::with_tol(1e-10), |_, _| false).unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - t.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn observer_stops_early() {
        let mut sys = FnSystem {
            dim: 1,
            f: |_t: f64, _y: &[f64], dy: &mut [f64]| {
                dy[0] = 1.0;
                Ok(())
            },
        };
        let sol = solve(&mut sys, 0.0, &[0.0], 10.0, &[], &OdeOptions::default(), |_, y| y[0] > 2.0).unwrap();
        assert!(sol.stopped && sol.t_final < 10.0 && sol.y_final[0] > 2.0);
    }

    #[test]
    fn step_budget_exhaustion_reports_stiffness() {
        let mut sys = FnSystem {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = -1e7 * (y[0] - 1.0);
                Ok(())
            },
        };
        let opts = OdeOptions {
            max_steps: 1000,
            ..OdeOptions::with_tol(1e-9)
        };
        let err = solve(&mut sys, 0.0, &[0.0], 10.0, &[], &opts, |_, _| false).unwrap_err();
        assert!(matches!(err, Error::Stiff { .. }));
        assert!(err.to_string().contains("decomposition"));
    }
}
