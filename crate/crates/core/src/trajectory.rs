//! Reference generation from trapezoidal angular-velocity profiles.
//!
//! A waypoint list `(time, angle)` is turned into a sampled trajectory:
//! the angle holds its previous value until a waypoint's time, then moves
//! to the waypoint's angle along a trapezoidal (or triangular) velocity
//! profile that respects the acceleration and velocity limits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Waypoint schedule plus kinematic limits. The first waypoint defines
/// the initial angle; every later waypoint starts a move at its time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapezoidSpec<T: Real> {
    /// (time s, angle rad); times strictly increasing.
    pub waypoints: Vec<(T, T)>,
    /// rad/s^2
    pub a_max: T,
    /// rad/s
    pub v_max: T,
    /// sampling time, s
    pub ts: T,
    /// total trajectory duration, s
    pub duration: T,
}

/// Sampled reference: `samples[k-1]` is the angle at `t = k*ts`. The value
/// at `t = 0` is `initial`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub samples: Vec<T>,
    pub ts: T,
    pub initial: T,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `t_s,angle_rad` rows with full float precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t_s,angle_rad\n");
        for (k, v) in self.samples.iter().enumerate() {
            let t = self.ts * lit::<T>((k + 1) as f64);
            out.push_str(&format!(
                "{:.16e},{:.16e}\n",
                t.to_f64().unwrap_or(f64::NAN),
                v.to_f64().unwrap_or(f64::NAN)
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Reads a trajectory written by [`write_csv`](Self::write_csv) (or any
    /// uniformly sampled `t,angle` file starting at `t = ts`). Imported
    /// references are assumed to depart from rest at angle zero.
    pub fn read_csv(path: &Path) -> Result<Trajectory<T>> {
        let text = std::fs::read_to_string(path)?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.chars().next().is_some_and(|c| c.is_alphabetic())) {
                continue;
            }
            let mut parts = line.split(',');
            let (t, v) = match (parts.next(), parts.next()) {
                (Some(t), Some(v)) => (t, v),
                _ => return Err(Error::Config(format!("line {}: expected `t,angle`", lineno + 1))),
            };
            let t: f64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad time value", lineno + 1)))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {}: bad angle value", lineno + 1)))?;
            rows.push((t, v));
        }
        if rows.len() < 2 {
            return Err(Error::EmptyTrajectory { min: 2, got: rows.len() });
        }
        let ts = rows[0].0;
        if ts <= 0.0 {
            return Err(Error::Config("first sample must sit at t = ts > 0".into()));
        }
        for (k, (t, _)) in rows.iter().enumerate() {
            let expect = ts * (k + 1) as f64;
            if (t - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                return Err(Error::Config(format!(
                    "non-uniform sampling at row {}: t = {t}, expected {expect}",
                    k + 1
                )));
            }
        }
        Ok(Trajectory {
            samples: rows.iter().map(|(_, v)| lit::<T>(*v)).collect(),
            ts: lit(ts),
            initial: T::zero(),
        })
    }
}

struct Move<T: Real> {
    start_t: T,
    from: T,
    delta: T,
    t_acc: T,
    t_cruise: T,
    total: T,
    a: T,
}

impl<T: Real> Move<T> {
    fn position(&self, t: T) -> T {
        let tau = t - self.start_t;
        let d = self.delta.abs();
        let sign = if self.delta >= T::zero() { T::one() } else { -T::one() };
        let half = lit::<T>(0.5);
        let dist = if tau <= T::zero() {
            T::zero()
        } else if tau < self.t_acc {
            half * self.a * tau * tau
        } else if tau < self.t_acc + self.t_cruise {
            half * self.a * self.t_acc * self.t_acc + self.a * self.t_acc * (tau - self.t_acc)
        } else if tau < self.total {
            let rem = self.total - tau;
            d - half * self.a * rem * rem
        } else {
            d
        };
        self.from + sign * dist
    }
}

/// Samples the waypoint schedule. Fails when a move cannot complete
/// before the next one starts (or before the trajectory ends).
pub fn generate_trapezoid<T: Real>(spec: &TrapezoidSpec<T>) -> Result<Trajectory<T>> {
    if spec.waypoints.is_empty() {
        return Err(Error::EmptyTrajectory { min: 1, got: 0 });
    }
    if !(spec.a_max > T::zero() && spec.v_max > T::zero() && spec.ts > T::zero() && spec.duration > T::zero()) {
        return Err(Error::Config("trapezoid limits and sampling must be positive".into()));
    }
    for pair in spec.waypoints.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::Config("waypoint times must be strictly increasing".into()));
        }
    }

    let mut moves: Vec<Move<T>> = Vec::new();
    for i in 1..spec.waypoints.len() {
        let (start_t, to) = spec.waypoints[i];
        let from = spec.waypoints[i - 1].1;
        let delta = to - from;
        let d = delta.abs();
        let (t_acc, t_cruise) = if d == T::zero() {
            (T::zero(), T::zero())
        } else {
            let v_tri = (spec.a_max * d).sqrt();
            if v_tri <= spec.v_max {
                ((d / spec.a_max).sqrt(), T::zero())
            } else {
                let t_acc = spec.v_max / spec.a_max;
                let cruise_dist = d - spec.v_max * spec.v_max / spec.a_max;
                (t_acc, cruise_dist / spec.v_max)
            }
        };
        let total = t_acc + t_acc + t_cruise;
        let deadline = if i + 1 < spec.waypoints.len() { spec.waypoints[i + 1].0 } else { spec.duration };
        let available = deadline - start_t;
        if total > available * (T::one() + T::default_epsilon().sqrt()) {
            return Err(Error::InfeasibleSegment {
                segment: i,
                reason: format!(
                    "move of {:.3} rad needs {:.4} s but only {:.4} s remain before the next transition",
                    delta.to_f64().unwrap_or(f64::NAN),
                    total.to_f64().unwrap_or(f64::NAN),
                    available.to_f64().unwrap_or(f64::NAN),
                ),
            });
        }
        moves.push(Move { start_t, from, delta, t_acc, t_cruise, total, a: spec.a_max });
    }

    let n = (spec.duration / spec.ts)
        .round()
        .to_usize()
        .ok_or_else(|| Error::Config("duration/ts does not fit a sample count".into()))?;
    if n == 0 {
        return Err(Error::EmptyTrajectory { min: 1, got: 0 });
    }

    let initial = spec.waypoints[0].1;
    let samples = (1..=n)
        .map(|k| {
            let t = spec.ts * lit::<T>(k as f64);
            match moves.iter().rev().find(|m| m.start_t <= t) {
                Some(m) => m.position(t),
                None => initial,
            }
        })
        .collect();
    Ok(Trajectory { samples, ts: spec.ts, initial })
}

/// The evaluation trajectory: 8 s, jumps between -30 and +30 degrees at
/// t = 1.6, 2.6, 3.6, 4.6 s and a return to zero at 6 s. Each 60-degree
/// transition runs at 12000 deg/s^2 peak acceleration with the velocity
/// cap chosen so it completes in 0.2 s.
pub fn paper_reference_trajectory<T: Real>(ts: T) -> Result<Trajectory<T>> {
    let deg = |d: f64| lit::<T>(d.to_radians());
    let a_max = deg(12000.0);
    // trapezoid covering 60 deg in 0.2 s at accel a: v = aT/2 - sqrt((aT/2)^2 - a*d)
    let half_at = lit::<T>(0.5) * a_max * lit(0.2);
    let v_max = half_at - (half_at * half_at - a_max * deg(60.0)).sqrt();

    generate_trapezoid(&TrapezoidSpec {
        waypoints: vec![
            (T::zero(), T::zero()),
            (lit(1.6), deg(-30.0)),
            (lit(2.6), deg(30.0)),
            (lit(3.6), deg(-30.0)),
            (lit(4.6), deg(30.0)),
            (lit(6.0), T::zero()),
        ],
        a_max,
        v_max,
        ts,
        duration: lit(8.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn max_accel(samples: &[f64], initial: f64, ts: f64) -> f64 {
        let mut prev_v = (samples[0] - initial) / ts;
        let mut worst = 0.0f64;
        for pair in samples.windows(2) {
            let v = (pair[1] - pair[0]) / ts;
            worst = worst.max(((v - prev_v) / ts).abs());
            prev_v = v;
        }
        worst
    }

    #[test]
    fn single_waypoint_is_constant() {
        let traj = generate_trapezoid(&TrapezoidSpec {
            waypoints: vec![(0.0, deg(12.0))],
            a_max: 1.0,
            v_max: 1.0,
            ts: 0.02,
            duration: 1.0,
        })
        .unwrap();
        assert_eq!(traj.len(), 50);
        assert!(traj.samples.iter().all(|&v| v == deg(12.0)));
    }

    #[test]
    fn pure_triangle_matches_closed_form_time() {
        // 60 deg at 12000 deg/s^2 with a generous velocity cap: the
        // triangle profile finishes in sqrt(4 * delta / a).
        let ts = 0.002;
        let traj = generate_trapezoid(&TrapezoidSpec {
            waypoints: vec![(0.0, 0.0), (0.5, deg(60.0))],
            a_max: deg(12000.0),
            v_max: deg(900.0),
            ts,
            duration: 1.0,
        })
        .unwrap();
        let oracle = (4.0 * 60.0 / 12000.0f64).sqrt();
        let done = traj
            .samples
            .iter()
            .position(|&v| (v - deg(60.0)).abs() < 1e-12)
            .unwrap();
        let t_done = (done + 1) as f64 * ts;
        assert!(
            (t_done - 0.5 - oracle).abs() <= ts + 1e-12,
            "triangle took {} s, oracle {}",
            t_done - 0.5,
            oracle
        );
        assert!(max_accel(&traj.samples, traj.initial, ts) <= deg(12000.0) * 1.05);
    }

    #[test]
    fn velocity_cap_produces_cruise_phase() {
        let ts = 0.002;
        let v_cap = deg(200.0);
        let traj = generate_trapezoid(&TrapezoidSpec {
            waypoints: vec![(0.0, 0.0), (0.1, deg(60.0))],
            a_max: deg(12000.0),
            v_max: v_cap,
            ts,
            duration: 1.0,
        })
        .unwrap();
        let mut top_speed = 0.0f64;
        for pair in traj.samples.windows(2) {
            top_speed = top_speed.max((pair[1] - pair[0]).abs() / ts);
        }
        assert!(top_speed <= v_cap * 1.001, "cruise speed {top_speed} above cap {v_cap}");
        assert!(max_accel(&traj.samples, traj.initial, ts) <= deg(12000.0) * 1.05);
    }

    #[test]
    fn infeasible_transition_names_the_segment() {
        let err = generate_trapezoid(&TrapezoidSpec {
            waypoints: vec![(0.0, 0.0), (1.0, deg(60.0)), (1.05, 0.0)],
            a_max: deg(12000.0),
            v_max: deg(351.5),
            ts: 0.02,
            duration: 2.0,
        })
        .unwrap_err();
        match err {
            Error::InfeasibleSegment { segment, .. } => assert_eq!(segment, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn paper_reference_shape() {
        let traj = paper_reference_trajectory::<f64>(0.02).unwrap();
        assert_eq!(traj.len(), 400);
        assert_eq!(traj.initial, 0.0);

        // plateaus by the documented schedule
        let at = |t: f64| traj.samples[(t / 0.02).round() as usize - 1];
        assert_relative_eq!(at(1.0), 0.0);
        assert_relative_eq!(at(2.0), deg(-30.0), epsilon = 1e-12);
        assert_relative_eq!(at(3.0), deg(30.0), epsilon = 1e-12);
        assert_relative_eq!(at(4.0), deg(-30.0), epsilon = 1e-12);
        assert_relative_eq!(at(5.0), deg(30.0), epsilon = 1e-12);
        assert_relative_eq!(at(7.0), 0.0, epsilon = 1e-12);

        // largest jump between consecutive plateau levels is 60 degrees
        let levels = [0.0, -30.0, 30.0, -30.0, 30.0, 0.0f64];
        let max_jump = levels.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max);
        assert_relative_eq!(max_jump, 60.0);

        // velocity continuity and acceleration bound in sampled differences
        assert!(max_accel(&traj.samples, traj.initial, 0.02) <= deg(12000.0) * 1.05);
        let mut prev_v = 0.0;
        for pair in traj.samples.windows(2) {
            let v = (pair[1] - pair[0]) / 0.02;
            assert!((v - prev_v).abs() <= deg(12000.0) * 0.02 * 1.05);
            prev_v = v;
        }
    }

    #[test]
    fn paper_transitions_take_point_two_seconds() {
        let ts = 0.02;
        let traj = paper_reference_trajectory::<f64>(ts).unwrap();
        // the -30 -> +30 jump starting at 2.6 s
        let start_idx = (2.6 / ts) as usize - 1;
        let mut end_idx = start_idx;
        while (traj.samples[end_idx] - deg(30.0)).abs() > 1e-9 {
            end_idx += 1;
        }
        let took = (end_idx - start_idx) as f64 * ts;
        assert!((took - 0.2).abs() <= ts + 1e-12, "60 deg transition took {took} s");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = paper_reference_trajectory::<f64>(0.02).unwrap();
        let b = paper_reference_trajectory::<f64>(0.02).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = paper_reference_trajectory::<f64>(0.02).unwrap();
        traj.write_csv(&path).unwrap();
        let back = Trajectory::<f64>::read_csv(&path).unwrap();
        assert_eq!(back.samples, traj.samples);
        assert_eq!(back.ts, traj.ts);
    }

    #[test]
    fn csv_rejects_non_uniform_sampling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t_s,angle_rad\n0.02,0.0\n0.05,0.1\n").unwrap();
        assert!(Trajectory::<f64>::read_csv(&path).is_err());
    }
}
