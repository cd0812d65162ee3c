//! Second-order arm model, zero-order-hold discretization, discrete
//! simulation and lifted-matrix construction.
//!
//! The continuous model maps a pressure difference (bar) to an arm angle
//! (rad) through a damped second-order response. States are kept in
//! normalized units so the lifted-domain weights stay dimensionless.

use nalgebra::{DMatrix, Matrix2, Matrix3, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Pa per bar; the transfer-function gain is given in rad/bar.
pub(crate) const PA_PER_BAR: f64 = 1e5;

/// Continuous second-order arm model: gain `kappa` (rad/bar), natural
/// frequency `omega0` (1/s), damping ratio `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderModel<T: Real> {
    pub kappa: T,
    pub omega0: T,
    pub delta: T,
}

impl<T: Real> SecondOrderModel<T> {
    pub fn new(kappa: T, omega0: T, delta: T) -> Result<Self> {
        let ok = kappa.is_finite()
            && omega0.is_finite()
            && delta.is_finite()
            && kappa != T::zero()
            && omega0 > T::zero()
            && delta > T::zero();
        if !ok {
            return Err(Error::InvalidModel(
                "second-order model needs finite kappa != 0, omega0 > 0, delta > 0".into(),
            ));
        }
        Ok(Self { kappa, omega0, delta })
    }

    /// Continuous state-space realization in normalized coordinates
    /// (angle/angle_scale, rate/rate_scale), input dp/input_scale.
    pub fn normalized_realization(&self, norms: &NormalizationConstants<T>) -> (Matrix2<T>, Vector2<T>) {
        let w2 = self.omega0 * self.omega0;
        let a = Matrix2::new(
            T::zero(),
            norms.rate_scale / norms.angle_scale,
            -w2 * norms.angle_scale / norms.rate_scale,
            -lit::<T>(2.0) * self.delta * self.omega0,
        );
        let b = Vector2::new(
            T::zero(),
            self.kappa * w2 * norms.input_scale / (lit::<T>(PA_PER_BAR) * norms.rate_scale),
        );
        (a, b)
    }
}

/// Scales used to normalize angle (rad), angular rate (rad/s) and
/// pressure-difference input (Pa).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConstants<T: Real> {
    pub angle_scale: T,
    pub rate_scale: T,
    pub input_scale: T,
}

impl<T: Real> NormalizationConstants<T> {
    pub fn new(angle_scale: T, rate_scale: T, input_scale: T) -> Result<Self> {
        if angle_scale <= T::zero() || rate_scale <= T::zero() || input_scale <= T::zero() {
            return Err(Error::InvalidModel("normalization constants must be positive".into()));
        }
        Ok(Self { angle_scale, rate_scale, input_scale })
    }
}

impl<T: Real> Default for NormalizationConstants<T> {
    /// (pi rad, 10*pi rad/s, 1e5 Pa)
    fn default() -> Self {
        Self {
            angle_scale: T::pi(),
            rate_scale: lit::<T>(10.0) * T::pi(),
            input_scale: lit(1e5),
        }
    }
}

/// Discrete two-state SISO plant `x(k) = A x(k-1) + B u(k-1)`, `y(k) = C x(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePlant<T: Real> {
    pub a: Matrix2<T>,
    pub b: Vector2<T>,
    pub c: RowVector2<T>,
    pub ts: T,
}

impl<T: Real> DiscretePlant<T> {
    pub fn new(a: Matrix2<T>, b: Vector2<T>, c: RowVector2<T>, ts: T) -> Result<Self> {
        if !(ts.is_finite() && ts > T::zero()) {
            return Err(Error::InvalidModel("sampling time must be positive".into()));
        }
        let finite =
            a.iter().all(|e| e.is_finite()) && b.iter().all(|e| e.is_finite()) && c.iter().all(|e| e.is_finite());
        if !finite {
            return Err(Error::InvalidModel("non-finite state-space entry".into()));
        }
        let plant = Self { a, b, c, ts };
        if plant.spectral_radius() >= T::one() {
            return Err(Error::InvalidModel("A has spectral radius >= 1 (unstable plant)".into()));
        }
        Ok(plant)
    }

    /// Largest eigenvalue modulus of `A`.
    pub fn spectral_radius(&self) -> T {
        let tr = self.a.trace();
        let det = self.a.determinant();
        let half = tr / lit::<T>(2.0);
        let disc = half * half - det;
        if disc >= T::zero() {
            let root = disc.sqrt();
            (half + root).abs().max((half - root).abs())
        } else {
            // complex pair: |lambda|^2 = det
            det.abs().sqrt()
        }
    }

    /// One recursion step: returns the next state and the output read there.
    pub fn step(&self, x: &Vector2<T>, u: T) -> (Vector2<T>, T) {
        let x_next = self.a * x + self.b * u;
        let y = (self.c * x_next)[(0, 0)];
        (x_next, y)
    }

    /// Simulates the whole horizon: `y[k-1] = C x(k)` for k = 1..=N with
    /// inputs u(0..N-1), so the output sequence is shifted one step past
    /// the input sequence.
    pub fn simulate(&self, u_seq: &[T], x0: &Vector2<T>) -> Vec<T> {
        let mut x = *x0;
        let mut y = Vec::with_capacity(u_seq.len());
        for &u in u_seq {
            let (x_next, yk) = self.step(&x, u);
            x = x_next;
            y.push(yk);
        }
        y
    }
}

/// Zero-order-hold discretization of the normalized realization, computed
/// exactly through the matrix exponential of the augmented [[A, B], [0, 0]]
/// block (never an Euler approximation).
pub fn discretize_zoh<T: Real>(
    model: &SecondOrderModel<T>,
    norms: &NormalizationConstants<T>,
    ts: T,
) -> Result<DiscretePlant<T>> {
    if !(ts.is_finite() && ts > T::zero()) {
        return Err(Error::InvalidModel("sampling time must be positive".into()));
    }
    let model = SecondOrderModel::new(model.kappa, model.omega0, model.delta)?;
    let norms = NormalizationConstants::new(norms.angle_scale, norms.rate_scale, norms.input_scale)?;
    let (ac, bc) = model.normalized_realization(&norms);

    let mut aug = Matrix3::zeros();
    aug.fixed_view_mut::<2, 2>(0, 0).copy_from(&(ac * ts));
    aug.fixed_view_mut::<2, 1>(0, 2).copy_from(&(bc * ts));
    let e = expm3(&aug);

    let a = e.fixed_view::<2, 2>(0, 0).into_owned();
    let b = e.fixed_view::<2, 1>(0, 2).into_owned();
    DiscretePlant::new(a, b, RowVector2::new(T::one(), T::zero()), ts)
}

/// Matrix exponential by scaling-and-squaring with a Taylor kernel.
/// The scaled norm is <= 1/2, where the series converges in a few terms.
fn expm3<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let norm = (0..3)
        .map(|r| m.row(r).iter().fold(T::zero(), |acc, e| acc + e.abs()))
        .fold(T::zero(), |acc, s| acc.max(s));

    let mut squarings = 0u32;
    let mut scaled = *m;
    if norm > lit(0.5) {
        let s = (norm / lit(0.5)).ln() / T::ln_2();
        squarings = s.ceil().to_u32().unwrap_or(64).min(64);
        scaled /= lit::<T>(2.0f64.powi(squarings as i32));
    }

    let mut sum = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..=40 {
        term = (term * scaled) / lit::<T>(k as f64);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    for _ in 0..squarings {
        sum *= sum;
    }
    sum
}

/// Lower-triangular Toeplitz matrix of Markov parameters:
/// `P[i][k] = C A^(i-k) B` for i >= k, zero above the diagonal.
pub fn build_lifted_matrix<T: Real>(plant: &DiscretePlant<T>, n: usize) -> Result<DMatrix<T>> {
    if n == 0 {
        return Err(Error::EmptyTrajectory { min: 1, got: 0 });
    }
    let mut markov = Vec::with_capacity(n);
    let mut v = plant.b;
    markov.push((plant.c * v)[(0, 0)]);
    for _ in 1..n {
        v = plant.a * v;
        markov.push((plant.c * v)[(0, 0)]);
    }
    let mut p = DMatrix::zeros(n, n);
    for r in 0..n {
        for col in 0..=r {
            p[(r, col)] = markov[r - col];
        }
    }
    Ok(p)
}

/// Forward-Euler difference matrix of the lifted correction input: rows
/// 1..N-1 hold (-1, +1)/T on the diagonal pair, and the last row repeats
/// the previous one.
pub fn build_difference_matrix<T: Real>(n: usize, t_ilc: T) -> Result<DMatrix<T>> {
    if n < 2 {
        return Err(Error::EmptyTrajectory { min: 2, got: n });
    }
    if !(t_ilc.is_finite() && t_ilc > T::zero()) {
        return Err(Error::InputRange("T_ilc must be positive".into()));
    }
    let inv_t = T::one() / t_ilc;
    let mut d = DMatrix::zeros(n, n);
    for r in 0..n - 1 {
        d[(r, r)] = -inv_t;
        d[(r, r + 1)] = inv_t;
    }
    d[(n - 1, n - 2)] = -inv_t;
    d[(n - 1, n - 1)] = inv_t;
    Ok(d)
}

/// Lifted description of one fixed-length trajectory: plant matrix `P`,
/// difference matrix `D`, horizon `N` and the ILC sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSystem<T: Real> {
    pub p: DMatrix<T>,
    pub d: DMatrix<T>,
    pub n: usize,
    pub t_ilc: T,
}

impl<T: Real> LiftedSystem<T> {
    pub fn from_plant(plant: &DiscretePlant<T>, n: usize) -> Result<Self> {
        let p = build_lifted_matrix(plant, n)?;
        let d = build_difference_matrix(n, plant.ts)?;
        Ok(Self { p, d, n, t_ilc: plant.ts })
    }
}
