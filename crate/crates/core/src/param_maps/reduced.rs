//! Two-parameter descriptions for state feedback and for stable plants.

use num_complex::Complex64;

use super::convert::{advance_tol, iop_to_slp_unchecked, times_right_shift_tol};
use super::{fit, k_from_youla, left_shift_residual, IopQuadruple, SlpQuadruple, YoulaParam};
use crate::coprime::{doubly_coprime_stable, doubly_coprime_state_feedback, DoublyCoprimeFactors, VERIFY_TOL};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, to_complex, CMat, LuInverse, Mat};
use crate::lti::{is_stable, markov_expand, Controller, Fir, StateSpacePlant};

fn require_identity(m: &Mat, what: &str) -> Result<()> {
    let (r, c) = m.shape();
    if r != c || max_abs(&(m - Mat::identity(r, c))) > 0.0 {
        return Err(Error::Precondition(format!("{what} must be the identity")));
    }
    Ok(())
}

/// State feedback (`C2 = I`): `(zI - A) R - B2 M = I` with `R`, `M`
/// strictly proper, and `K = M R^-1`.
#[derive(Debug, Clone)]
pub struct StateFeedbackSlp {
    plant: StateSpacePlant,
}

impl StateFeedbackSlp {
    pub fn new(p: &StateSpacePlant) -> Result<Self> {
        require_identity(p.c2(), "C2")?;
        Ok(Self { plant: p.clone() })
    }

    /// Largest coefficient error of the reduced constraint, including the
    /// zeroth coefficients of `R` and `M`.
    pub fn residual(&self, r: &Fir, m: &Fir) -> f64 {
        let p = &self.plant;
        left_shift_residual(p.a(), r, p.b2(), m, true).max(max_abs(&m.coeff(0)))
    }

    /// `K = (zM)(zR)^-1` through `horizon`.
    pub fn controller(&self, r: &Fir, m: &Fir, horizon: usize) -> Result<Fir> {
        let zr = advance_tol(r, VERIFY_TOL, "R")?;
        let zm = advance_tol(m, VERIFY_TOL, "M")?;
        Ok(zm.mul_truncated(&zr.inverse(horizon)?, horizon)?.0)
    }

    /// Full quadruple with `N = R (zI - A) - I` and `L = M (zI - A)`.
    pub fn complete(&self, r: &Fir, m: &Fir) -> Result<SlpQuadruple> {
        let a = self.plant.a();
        let n = times_right_shift_tol(r, a, VERIFY_TOL, "R")?.sub(&Fir::identity(a.nrows()))?;
        let l = times_right_shift_tol(m, a, VERIFY_TOL, "M")?;
        let mut r0 = r.clone().into_coeffs();
        r0[0].fill(0.0);
        let mut m0 = m.clone().into_coeffs();
        m0[0].fill(0.0);
        Ok(SlpQuadruple { r: Fir::new(r0)?, m: Fir::new(m0)?, n, l })
    }

    pub fn realize(&self, r: &Fir, m: &Fir) -> Result<Controller> {
        let s = self.complete(r, m)?;
        Controller::from_responses(&s.r, &s.m, &s.n, &s.l)
    }
}

/// State feedback with invertible `B2`: `(zI - A) W = B2 Z`, `W` strictly
/// proper, `Z` proper, and `K = (Z - I) W^-1`.
///
/// The completion `U = (Z - I) B2^-1 (zI - A)` is proper only when
/// `Z_0 = I`, so that coefficient is part of the constraint.
#[derive(Debug, Clone)]
pub struct StateFeedbackIop {
    plant: StateSpacePlant,
    b2_inv: Mat,
}

impl StateFeedbackIop {
    pub fn new(p: &StateSpacePlant) -> Result<Self> {
        require_identity(p.c2(), "C2")?;
        let b2_inv = p
            .b2()
            .clone()
            .lu_inverse()
            .filter(|_| p.b2().is_square())
            .ok_or_else(|| Error::Precondition("B2 must be invertible".into()))?;
        Ok(Self { plant: p.clone(), b2_inv })
    }

    pub fn residual(&self, w: &Fir, z: &Fir) -> f64 {
        let p = &self.plant;
        let nu = p.nu();
        left_shift_residual(p.a(), w, p.b2(), z, false).max(max_abs(&(z.coeff(0) - Mat::identity(nu, nu))))
    }

    /// `K = z(Z - I) (zW)^-1` through `horizon`.
    pub fn controller(&self, w: &Fir, z: &Fir, horizon: usize) -> Result<Fir> {
        let nu = self.plant.nu();
        let zw = advance_tol(w, VERIFY_TOL, "W")?;
        let zd = advance_tol(&z.sub(&Fir::identity(nu))?, VERIFY_TOL, "Z - I")?;
        Ok(zd.mul_truncated(&zw.inverse(horizon)?, horizon)?.0)
    }

    /// Full quadruple with `U = (Z - I) B2^-1 (zI - A)` and
    /// `Y = W B2^-1 (zI - A)`.
    pub fn complete(&self, w: &Fir, z: &Fir) -> Result<IopQuadruple> {
        let a = self.plant.a();
        let nu = self.plant.nu();
        let e = z.sub(&Fir::identity(nu))?.right_mul(&self.b2_inv)?;
        let u = times_right_shift_tol(&e, a, VERIFY_TOL, "Z - I")?;
        let y = times_right_shift_tol(&w.right_mul(&self.b2_inv)?, a, VERIFY_TOL, "W")?;
        Ok(IopQuadruple { y, u, w: w.clone(), z: z.clone() })
    }

    pub fn realize(&self, w: &Fir, z: &Fir) -> Result<Controller> {
        let x = self.complete(w, z)?;
        let h = x.u.horizon().max(x.y.horizon()) + self.plant.n() + 1;
        let s = iop_to_slp_unchecked(&self.plant, &x.u, h)?;
        Controller::from_responses(&s.r, &s.m, &s.n, &s.l)
    }
}

/// State feedback with `B2 = C2 = I`: `Ul = Ur = I`, `Vl = Vr = -A`,
/// `Nl = Nr = I/z`, `Ml = Mr = I - A/z`, so that
/// `K = (-A - (I - A/z) Q)(I - Q/z)^-1`.
#[derive(Debug, Clone)]
pub struct StateFeedbackYoula {
    factors: DoublyCoprimeFactors,
}

impl StateFeedbackYoula {
    pub fn new(p: &StateSpacePlant) -> Result<Self> {
        Ok(Self { factors: doubly_coprime_state_feedback(p)? })
    }

    pub fn factors(&self) -> &DoublyCoprimeFactors {
        &self.factors
    }

    /// `-A - (I - A/z) Q`.
    pub fn numerator(&self, q: &YoulaParam) -> Result<Fir> {
        self.factors.vr.sub(&self.factors.mr.mul(&q.q)?)
    }

    /// `I - Q/z`.
    pub fn denominator(&self, q: &YoulaParam) -> Result<Fir> {
        self.factors.ur.sub(&self.factors.nr.mul(&q.q)?)
    }

    pub fn controller(&self, q: &YoulaParam, horizon: usize) -> Result<Fir> {
        k_from_youla(&self.factors, q, horizon)
    }
}

/// Reductions for stable `A`, where all three parameterizations collapse
/// to `L = U = -Q` and `K = -Q (I - P22 Q)^-1`.
#[derive(Debug, Clone)]
pub struct StablePlantReductions {
    plant: StateSpacePlant,
    p22: Fir,
    horizon: usize,
}

impl StablePlantReductions {
    /// `horizon` is the truncation length used for `P22` and the responses.
    pub fn new(p: &StateSpacePlant, horizon: usize) -> Result<Self> {
        let (stable, rho) = is_stable(p.a());
        if !stable {
            return Err(Error::Precondition(format!(
                "stable-plant reduction needs a stable A (spectral radius {rho:.4})"
            )));
        }
        Ok(Self { plant: p.clone(), p22: markov_expand(&p.p22(), horizon), horizon })
    }

    pub fn p22(&self) -> &Fir {
        &self.p22
    }

    pub fn factors(&self) -> Result<DoublyCoprimeFactors> {
        doubly_coprime_stable(&self.plant, self.horizon)
    }

    /// `-Q (I - P22 Q)^-1` evaluated exactly at `z`.
    pub fn youla_k_at(&self, q: &YoulaParam, z: Complex64) -> Result<CMat> {
        let g = self.plant.p22().eval(z).ok_or_else(|| Error::Solver("P22 has a pole at a sample frequency".into()))?;
        let qz = q.q.eval_unchecked(z);
        let ny = self.plant.ny();
        let den = (CMat::identity(ny, ny) - g * &qz)
            .lu_inverse()
            .ok_or_else(|| Error::Solver("I - P22 Q is singular at a sample frequency".into()))?;
        Ok(-qz * den)
    }

    pub fn youla_controller(&self, q: &YoulaParam, horizon: usize) -> Result<Fir> {
        let ny = self.plant.ny();
        let den = Fir::identity(ny).sub(&self.p22.mul(&q.q)?)?;
        Ok(q.q.neg().mul_truncated(&den.inverse(horizon)?, horizon)?.0)
    }

    /// `Y = I + P22 U`, `Z = I + U P22`, `W = P22 Z`.
    pub fn iop_from_u(&self, u: &Fir) -> Result<IopQuadruple> {
        let (nu, ny) = (self.plant.nu(), self.plant.ny());
        let h = self.horizon;
        let y = Fir::identity(ny).add(&self.p22.mul_truncated(u, h)?.0)?;
        let z = Fir::identity(nu).add(&u.mul_truncated(&self.p22, h)?.0)?;
        let w = self.p22.mul_truncated(&z, h)?.0;
        Ok(IopQuadruple { y: fit(y, h, "Y")?, u: fit(u.clone(), h, "U")?, w, z: fit(z, h, "Z")? })
    }

    /// `N = (zI-A)^-1 B2 L`, `M = L C2 (zI-A)^-1`,
    /// `R = (zI-A)^-1 + N C2 (zI-A)^-1`.
    pub fn slp_from_l(&self, l: &Fir) -> Result<SlpQuadruple> {
        iop_to_slp_unchecked(&self.plant, l, self.horizon)
    }

    /// `L (C2 N + I)^-1` evaluated exactly at `z` for `N = (zI-A)^-1 B2 L`.
    pub fn slp_k_at(&self, l: &Fir, z: Complex64) -> Result<CMat> {
        let p = &self.plant;
        let n = p.n();
        let zi_a = CMat::identity(n, n) * z - to_complex(p.a());
        let phi = zi_a.lu_inverse().ok_or_else(|| Error::Solver("zI - A is singular at a sample frequency".into()))?;
        let lz = l.eval_unchecked(z);
        let nz = phi * to_complex(p.b2()) * &lz;
        let ny = p.ny();
        let den = (to_complex(p.c2()) * nz + CMat::identity(ny, ny))
            .lu_inverse()
            .ok_or_else(|| Error::Solver("C2 N + I is singular at a sample frequency".into()))?;
        Ok(lz * den)
    }
}
