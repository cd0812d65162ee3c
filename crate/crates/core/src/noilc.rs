//! Norm-optimal ILC: lifted error prediction, the quadratic cost, its
//! closed-form minimizer, total-input composition, correction-signal
//! persistence, and a PD-type ILC baseline.
//!
//! The update solves
//! `u+ = (P'MP + S + D'WD)^-1 [ (P'MP + S) u + P'M e ]`
//! through a symmetric positive-definite factorization. The Hessian does
//! not depend on the iteration, so it is assembled and factored once per
//! experiment and reused for every update.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lti::{LiftedSystem, NormalizationConstants};
use crate::scalar::{lit, Real};

/// Cost matrices of the quadratic objective. `M` weighs the predicted
/// error, `S` the change in correction input, `W` its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcWeights<T: Real> {
    pub m: DMatrix<T>,
    pub s: DMatrix<T>,
    pub w: DMatrix<T>,
}

impl<T: Real> IlcWeights<T> {
    /// Validates shape, symmetry, positive semi-definiteness of `M` and
    /// `W` (Cholesky on `X + eps*I`) and strict definiteness of `S`.
    pub fn new(m: DMatrix<T>, s: DMatrix<T>, w: DMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        for (mat, name) in [(&m, "M"), (&s, "S"), (&w, "W")] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::LengthMismatch { expected: n, got: mat.nrows().max(mat.ncols()) });
            }
            if !is_symmetric(mat) {
                return Err(Error::SingularCost { matrix: name_of(name) });
            }
        }
        check_psd(&m, "M")?;
        check_psd(&w, "W")?;
        if Cholesky::new(s.clone()).is_none() {
            return Err(Error::SingularCost { matrix: "S" });
        }
        Ok(Self { m, s, w })
    }

    /// Diagonal weights `m*I`, `s*I`, `w*I` as used in the experiments.
    pub fn diagonal(n: usize, m: T, s: T, w: T) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal_element(n, n, m),
            DMatrix::from_diagonal_element(n, n, s),
            DMatrix::from_diagonal_element(n, n, w),
        )
    }
}

fn name_of(name: &str) -> &'static str {
    match name {
        "M" => "M",
        "S" => "S",
        _ => "W",
    }
}

fn is_symmetric<T: Real>(m: &DMatrix<T>) -> bool {
    let scale = T::one() + m.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
    let tol = T::default_epsilon().sqrt() * scale;
    for r in 0..m.nrows() {
        for c in r + 1..m.ncols() {
            if (m[(r, c)] - m[(c, r)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

fn check_psd<T: Real>(m: &DMatrix<T>, name: &'static str) -> Result<()> {
    let scale = T::one() + m.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
    let eps = T::default_epsilon().sqrt() * scale;
    let shifted = m + DMatrix::from_diagonal_element(m.nrows(), m.ncols(), eps);
    if Cholesky::new(shifted).is_none() {
        return Err(Error::SingularCost { matrix: name });
    }
    Ok(())
}

/// One learning iterate: correction signal, measured error, index.
#[derive(Debug, Clone, PartialEq)]
pub struct IlcIterate<T: Real> {
    pub u: Vec<T>,
    pub e: Vec<T>,
    pub j: u32,
}

fn check_len<T>(v: &[T], n: usize) -> Result<()> {
    if v.len() != n {
        Err(Error::LengthMismatch { expected: n, got: v.len() })
    } else {
        Ok(())
    }
}

/// Model-based error prediction `e+ = e - P (u+ - u)`.
pub fn predict_error<T: Real>(lifted: &LiftedSystem<T>, e_j: &[T], u_j: &[T], u_next: &[T]) -> Result<Vec<T>> {
    check_len(e_j, lifted.n)?;
    check_len(u_j, lifted.n)?;
    check_len(u_next, lifted.n)?;
    let du = DVector::from_iterator(lifted.n, u_next.iter().zip(u_j).map(|(a, b)| *a - *b));
    let pdu = &lifted.p * du;
    Ok(e_j.iter().zip(pdu.iter()).map(|(e, p)| *e - *p).collect())
}

/// Quadratic objective `1/2 [e+' M e+ + du' S du + u+' D'WD u+]` with the
/// error predicted through the lifted model.
pub fn ilc_cost<T: Real>(
    weights: &IlcWeights<T>,
    lifted: &LiftedSystem<T>,
    e_j: &[T],
    u_j: &[T],
    u_next: &[T],
) -> Result<T> {
    let e_next = DVector::from_vec(predict_error(lifted, e_j, u_j, u_next)?);
    let du = DVector::from_iterator(lifted.n, u_next.iter().zip(u_j).map(|(a, b)| *a - *b));
    let u_next = DVector::from_column_slice(u_next);
    let deriv = &lifted.d * u_next;

    let quad = |m: &DMatrix<T>, v: &DVector<T>| (v.transpose() * m * v)[(0, 0)];
    Ok((quad(&weights.m, &e_next) + quad(&weights.s, &du) + quad(&weights.w, &deriv)) / lit(2.0))
}

/// Cached closed-form minimizer: the Hessian `P'MP + S + D'WD` is
/// factored once and shared by all updates of an experiment.
#[derive(Debug, Clone)]
pub struct NoilcSolver<T: Real> {
    chol: Cholesky<T, Dyn>,
    ptmp_plus_s: DMatrix<T>,
    ptm: DMatrix<T>,
    n: usize,
}

impl<T: Real> NoilcSolver<T> {
    pub fn new(weights: &IlcWeights<T>, lifted: &LiftedSystem<T>) -> Result<Self> {
        let n = lifted.n;
        if weights.m.nrows() != n {
            return Err(Error::LengthMismatch { expected: n, got: weights.m.nrows() });
        }
        let ptm = lifted.p.transpose() * &weights.m;
        let ptmp_plus_s = &ptm * &lifted.p + &weights.s;
        let dtwd = lifted.d.transpose() * &weights.w * &lifted.d;
        let hessian = &ptmp_plus_s + dtwd;
        let chol = Cholesky::new(hessian).ok_or(Error::SingularCost {
            matrix: "P'MP + S + D'WD",
        })?;
        Ok(Self { chol, ptmp_plus_s, ptm, n })
    }

    /// Returns the minimizer of the objective for the measured pair
    /// `(e_j, u_j)`.
    pub fn update(&self, e_j: &[T], u_j: &[T]) -> Result<Vec<T>> {
        check_len(e_j, self.n)?;
        check_len(u_j, self.n)?;
        let rhs = &self.ptmp_plus_s * DVector::from_column_slice(u_j)
            + &self.ptm * DVector::from_column_slice(e_j);
        Ok(self.chol.solve(&rhs).data.into())
    }
}

/// One-shot update for callers that do not reuse the factorization.
pub fn noilc_update<T: Real>(
    weights: &IlcWeights<T>,
    lifted: &LiftedSystem<T>,
    e_j: &[T],
    u_j: &[T],
) -> Result<Vec<T>> {
    NoilcSolver::new(weights, lifted)?.update(e_j, u_j)
}

/// Adds the stored (normalized) correction sample to the PID output in Pa.
pub fn compose_total_input<T: Real>(u_pid: T, u_corr_k: T, norms: &NormalizationConstants<T>) -> T {
    u_pid + u_corr_k * norms.input_scale
}

/// PD-type ILC baseline: `u+ = Q * (u + kp e + kd diff(e)/T)`, with `Q` a
/// zero-phase second-order Butterworth low-pass. A cutoff at or above the
/// Nyquist rate degenerates to the identity.
pub fn pd_ilc_update<T: Real>(
    kp_ilc: T,
    kd_ilc: T,
    q_cutoff_hz: T,
    e_j: &[T],
    u_j: &[T],
    t_ilc: T,
) -> Result<Vec<T>> {
    let n = u_j.len();
    check_len(e_j, n)?;
    if !(t_ilc > T::zero()) {
        return Err(Error::InputRange("T_ilc must be positive".into()));
    }

    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        // forward difference, last element duplicated like the D matrix
        let diff = if n < 2 {
            T::zero()
        } else if i < n - 1 {
            (e_j[i + 1] - e_j[i]) / t_ilc
        } else {
            (e_j[n - 1] - e_j[n - 2]) / t_ilc
        };
        raw.push(u_j[i] + kp_ilc * e_j[i] + kd_ilc * diff);
    }

    let nyquist = T::one() / (lit::<T>(2.0) * t_ilc);
    if q_cutoff_hz >= nyquist * (T::one() - T::default_epsilon().sqrt()) {
        return Ok(raw);
    }
    Ok(zero_phase_lowpass(&raw, q_cutoff_hz, t_ilc))
}

/// Forward-backward second-order Butterworth low-pass (zero phase).
fn zero_phase_lowpass<T: Real>(x: &[T], fc: T, ts: T) -> Vec<T> {
    let k = (T::pi() * fc * ts).tan();
    let k2 = k * k;
    let sqrt2 = lit::<T>(2.0).sqrt();
    let norm = T::one() / (T::one() + sqrt2 * k + k2);
    let b0 = k2 * norm;
    let b1 = b0 * lit(2.0);
    let b2 = b0;
    let a1 = lit::<T>(2.0) * (k2 - T::one()) * norm;
    let a2 = (T::one() - sqrt2 * k + k2) * norm;

    let biquad = |input: &[T]| {
        let mut out = Vec::with_capacity(input.len());
        let (mut x1, mut x2, mut y1, mut y2) = (T::zero(), T::zero(), T::zero(), T::zero());
        for &xn in input {
            let yn = b0 * xn + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = xn;
            y2 = y1;
            y1 = yn;
            out.push(yn);
        }
        out
    };

    let mut fwd = biquad(x);
    fwd.reverse();
    let mut back = biquad(&fwd);
    back.reverse();
    back
}

const CORRECTION_MAGIC: [u8; 4] = *b"NOIL";
const CORRECTION_VERSION: u16 = 1;

/// Writes the correction signal: little-endian header
/// `{magic "NOIL", version u16, N u32, T_ilc f64}`, payload of `N` f64
/// samples, trailing CRC32 over everything before it.
pub fn save_correction<T: Real>(path: &Path, iterate: &IlcIterate<T>, t_ilc: T) -> Result<()> {
    let mut buf = Vec::with_capacity(18 + iterate.u.len() * 8 + 4);
    buf.extend_from_slice(&CORRECTION_MAGIC);
    buf.extend_from_slice(&CORRECTION_VERSION.to_le_bytes());
    buf.extend_from_slice(&(iterate.u.len() as u32).to_le_bytes());
    buf.extend_from_slice(&t_ilc.to_f64().unwrap_or(f64::NAN).to_le_bytes());
    for v in &iterate.u {
        buf.extend_from_slice(&v.to_f64().unwrap_or(f64::NAN).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a correction file back; the error vector of the returned iterate
/// is zeroed since the file persists only the correction signal.
pub fn load_correction<T: Real>(path: &Path) -> Result<(IlcIterate<T>, T)> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 22 {
        return Err(Error::CorrectionFormat("file too short".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::CorrectionFormat("checksum mismatch".into()));
    }
    if body[0..4] != CORRECTION_MAGIC {
        return Err(Error::CorrectionFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != CORRECTION_VERSION {
        return Err(Error::CorrectionFormat(format!(
            "unsupported version {version}, expected {CORRECTION_VERSION}"
        )));
    }
    let n = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let t_ilc = f64::from_le_bytes(body[10..18].try_into().unwrap());
    let payload = &body[18..];
    if payload.len() != n * 8 {
        return Err(Error::CorrectionFormat(format!(
            "payload holds {} bytes, header says N = {n}",
            payload.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    for chunk in payload.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        u.push(T::from_f64(v).ok_or_else(|| Error::CorrectionFormat("non-representable sample".into()))?);
    }
    let iterate = IlcIterate { u, e: vec![T::zero(); n], j: 0 };
    let t = T::from_f64(t_ilc).ok_or_else(|| Error::CorrectionFormat("non-representable T_ilc".into()))?;
    Ok((iterate, t))
}
