//! Dormand–Prince 5(4) with step rejection on negativity.

use crate::error::{LabError, Result};

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// B - B*, the embedded 4th-order difference
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Reject steps that leave the non-negative orthant.
    pub nonnegative: bool,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn relative(rtol: f64) -> Self {
        OdeOptions {
            rtol,
            atol: 1e-300,
            nonnegative: true,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest accepted scaled error estimate (`<= 1` by construction).
    pub max_error: f64,
}

/// Integrates the autonomous system `y' = rhs(y)` from `t = 0` and returns
/// the state at each of `times` (non-decreasing, `>= 0`). Steps are
/// shortened to land on output times exactly.
pub fn integrate<F>(
    mut rhs: F,
    y0: &[f64],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(&y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = initial_step(&y, &k[0], opts);

    for &target in times {
        if target < t {
            return Err(LabError::InvalidArgument(format!(
                "output times must be non-decreasing, got {target} after {t}"
            )));
        }
        while t < target {
            if stats.steps + stats.rejected >= opts.max_steps {
                return Err(LabError::StepUnderflow {
                    t,
                    detail: format!("step budget {} exhausted", opts.max_steps),
                });
            }
            let remaining = target - t;
            let last = h >= remaining * (1.0 - 1e-12);
            let step = if last { remaining } else { h };
            if !last && (t + step == t || step < 1e-300) {
                return Err(LabError::StepUnderflow {
                    t,
                    detail: format!(
                        "step {step:e} too small; the cumulant flow is blowing up or is stiff here"
                    ),
                });
            }
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, kj) in k.iter().enumerate().take(s) {
                        acc += A[s][j] * kj[i];
                    }
                    stage[i] = y[i] + step * acc;
                }
                rhs(&stage, &mut k[s]);
                stats.evaluations += 1;
            }
            // stage 6 is already the 5th-order solution (FSAL)
            y_new.copy_from_slice(&stage);
            let mut err = 0.0;
            let mut finite = true;
            let mut negative = false;
            for i in 0..n {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[i];
                }
                e *= step;
                let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / scale).powi(2);
                finite &= y_new[i].is_finite();
                negative |= opts.nonnegative && y_new[i] < 0.0;
            }
            let err = (err / n.max(1) as f64).sqrt();
            if !finite || negative || !(err <= 1.0) {
                stats.rejected += 1;
                let shrink = if finite && !negative && err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
                } else {
                    0.25
                };
                h = step * shrink;
                if t + h == t || h < 1e-300 {
                    return Err(LabError::StepUnderflow {
                        t,
                        detail: if negative {
                            "no step keeps the state non-negative".into()
                        } else {
                            format!("error estimate {err:e} cannot be met")
                        },
                    });
                }
                continue;
            }
            stats.steps += 1;
            stats.max_error = stats.max_error.max(err);
            t = if last { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            let (first, rest) = k.split_at_mut(1);
            first[0].copy_from_slice(&rest[5]);
            let grow = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // a step truncated to hit an output time says little about the next one
            h = if last {
                h.max(step * grow)
            } else {
                step * grow
            };
        }
        out.push(y.clone());
    }
    Ok((out, stats))
}

fn initial_step(y: &[f64], f0: &[f64], opts: &OdeOptions) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let scale = opts.atol + opts.rtol * yi.abs();
        d0 = d0.max(yi.abs() / scale);
        d1 = d1.max(fi.abs() / scale);
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(1e-12, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let (ys, stats) = integrate(
            |y, dy| dy[0] = -2.0 * y[0],
            &[1.0],
            &[0.5, 1.0, 3.0],
            &OdeOptions::relative(1e-11),
        )
        .unwrap();
        for (y, t) in ys.iter().zip([0.5f64, 1.0, 3.0]) {
            assert!(
                (y[0] / (-2.0 * t).exp() - 1.0).abs() < 1e-9,
                "{} {}",
                y[0],
                t
            );
        }
        assert!(stats.steps > 0);
    }

    #[test]
    fn riccati_blow_down() {
        // y' = -y^2, y(0) = 1e6 -> y(t) = 1 / (1e-6 + t)
        let (ys, _) = integrate(
            |y, dy| dy[0] = -y[0] * y[0],
            &[1e6],
            &[1.0],
            &OdeOptions::relative(1e-11),
        )
        .unwrap();
        assert!((ys[0][0] * (1e-6 + 1.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_output_time_returns_initial_state() {
        let (ys, _) = integrate(
            |_, dy| dy[0] = 1.0,
            &[2.0],
            &[0.0],
            &OdeOptions::relative(1e-8),
        )
        .unwrap();
        assert_eq!(ys[0], vec![2.0]);
    }

    #[test]
    fn finite_time_blow_up_is_reported() {
        let r = integrate(
            |y, dy| dy[0] = y[0] * y[0],
            &[1.0],
            &[2.0],
            &OdeOptions::relative(1e-8),
        );
        assert!(matches!(r, Err(LabError::StepUnderflow { .. })));
    }
}
