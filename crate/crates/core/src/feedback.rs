//! Outer-loop PID with feedforward, and the mapping from a total
//! pressure-difference command to clamped per-actuator setpoints.

use crate::error::{Error, Result};
use crate::pneumatics::PneumaticConstants;
use crate::scalar::{lit, Real};

/// PID gains in Pa per normalized angle unit. `k_d` is signed: the
/// derivative acts on the measurement, so a negative `k_d` damps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains<T: Real> {
    pub k_ff: T,
    pub k_p: T,
    pub k_i: T,
    pub k_d: T,
}

impl<T: Real> PidGains<T> {
    pub fn new(k_ff: T, k_p: T, k_i: T, k_d: T) -> Result<Self> {
        let finite = k_ff.is_finite() && k_p.is_finite() && k_i.is_finite() && k_d.is_finite();
        if !finite || k_p < T::zero() || k_i < T::zero() {
            return Err(Error::InvalidModel("PID gains must be finite with k_p, k_i >= 0".into()));
        }
        Ok(Self { k_ff, k_p, k_i, k_d })
    }

    pub fn zero() -> Self {
        Self { k_ff: T::zero(), k_p: T::zero(), k_i: T::zero(), k_d: T::zero() }
    }
}

/// Controller state carried between steps. The derivative is filtered, so
/// the raw backward difference and its filtered value are both kept.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState<T: Real> {
    pub integral: T,
    pub prev_y: T,
    pub prev_err: T,
    pub deriv_filt: T,
    primed: bool,
}

/// One discrete PID evaluation: trapezoidal integral, backward-difference
/// derivative of the measurement through a first-order filter with time
/// constant `2*dt`. The integral is clamped so that `|k_i * integral|`
/// never exceeds `windup_limit`.
pub fn pid_step<T: Real>(
    gains: &PidGains<T>,
    state: &PidState<T>,
    y_des: T,
    y_meas: T,
    dt: T,
    windup_limit: T,
) -> (T, PidState<T>) {
    let err = y_des - y_meas;
    let (prev_y, prev_err) = if state.primed { (state.prev_y, state.prev_err) } else { (y_meas, T::zero()) };

    let mut integral = state.integral + (err + prev_err) * dt / lit(2.0);
    if gains.k_i > T::zero() {
        let cap = windup_limit / gains.k_i;
        integral = integral.clamp(-cap, cap);
    }

    let raw_deriv = (y_meas - prev_y) / dt;
    // time constant 2*dt => alpha = dt / (2*dt + dt)
    let alpha = T::one() / lit(3.0);
    let deriv_filt = state.deriv_filt + (raw_deriv - state.deriv_filt) * alpha;

    let u = gains.k_ff * y_des + gains.k_p * err + gains.k_i * integral + gains.k_d * deriv_filt;
    let next = PidState { integral, prev_y: y_meas, prev_err: err, deriv_filt, primed: true };
    (u, next)
}

/// Per-actuator setpoints from the total pressure-difference command,
/// clamped to the feasible interval `[p0, p_max]`. This clamp is also
/// where learned corrections are made feasible.
pub fn setpoints_from_input<T: Real>(u_tot: T, consts: &PneumaticConstants<T>) -> (T, T) {
    let p0 = consts.p_ambient;
    let p_max = consts.p_max;
    let p_a = p_max.min(p0.max(p0 + u_tot));
    let p_b = p_max.min(p0.max(p0 - u_tot));
    (p_a, p_b)
}
