//! Youla, input-output (IOP) and system-level (SLP) parameters, the affine
//! maps between them, and the controllers they describe.
//!
//! Conventions: positive feedback `u = K y`, `P22 = C2 (zI - A)^-1 B2`,
//! `K = (Vr - Mr Q)(Ur - Nr Q)^-1 = U Y^-1 = L - M R^-1 N`.

mod convert;
mod reduced;

pub use convert::{
    iop_to_slp, iop_to_youla, slp_to_iop, slp_to_youla, youla_to_iop, youla_to_slp, AffineTerm, YoulaSlpAffine,
};
pub use reduced::{StablePlantReductions, StateFeedbackIop, StateFeedbackSlp, StateFeedbackYoula};

use num_complex::Complex64;

use crate::coprime::{DoublyCoprimeFactors, VERIFY_TOL};
use crate::error::{dim, Error, Result};
use crate::linalg::{cmax_abs, max_abs, CMat, LuInverse, Mat};
use crate::lti::{unit_circle_points, Controller, Fir, StateSpacePlant};

/// Default number of unit-circle samples for frequency checks.
pub const DEFAULT_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct YoulaParam {
    pub q: Fir,
}

impl YoulaParam {
    pub fn new(q: Fir) -> Self {
        Self { q }
    }

    pub fn zero(nu: usize, ny: usize) -> Self {
        Self { q: Fir::zeros(nu, ny, 0) }
    }
}

/// Closed-loop maps from `(dy, du)` to `(y, u)`: `[[Y, W], [U, Z]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IopQuadruple {
    pub y: Fir,
    pub u: Fir,
    pub w: Fir,
    pub z: Fir,
}

/// Closed-loop maps from `(dx, dy)` to `(x, u)`: `[[R, N], [M, L]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlpQuadruple {
    pub r: Fir,
    pub m: Fir,
    pub n: Fir,
    pub l: Fir,
}

impl IopQuadruple {
    pub fn check_shapes(&self, nu: usize, ny: usize) -> Result<()> {
        check_shapes(&[
            ("Y", &self.y, (ny, ny)),
            ("U", &self.u, (nu, ny)),
            ("W", &self.w, (ny, nu)),
            ("Z", &self.z, (nu, nu)),
        ])
    }

    pub fn named(&self) -> [(&'static str, &Fir); 4] {
        [("Y", &self.y), ("U", &self.u), ("W", &self.w), ("Z", &self.z)]
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .y
            .max_abs_diff(&other.y)?
            .max(self.u.max_abs_diff(&other.u)?)
            .max(self.w.max_abs_diff(&other.w)?)
            .max(self.z.max_abs_diff(&other.z)?))
    }

    /// `Y = I`, `U = 0`, `W = P22`, `Z = I`.
    pub fn open_loop(p22: &Fir) -> Self {
        let (ny, nu) = p22.shape();
        Self { y: Fir::identity(ny), u: Fir::zeros(nu, ny, 0), w: p22.clone(), z: Fir::identity(nu) }
    }
}

impl SlpQuadruple {
    pub fn check_shapes(&self, nx: usize, nu: usize, ny: usize) -> Result<()> {
        check_shapes(&[
            ("R", &self.r, (nx, nx)),
            ("M", &self.m, (nu, nx)),
            ("N", &self.n, (nx, ny)),
            ("L", &self.l, (nu, ny)),
        ])
    }

    pub fn named(&self) -> [(&'static str, &Fir); 4] {
        [("R", &self.r), ("M", &self.m), ("N", &self.n), ("L", &self.l)]
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self
            .r
            .max_abs_diff(&other.r)?
            .max(self.m.max_abs_diff(&other.m)?)
            .max(self.n.max_abs_diff(&other.n)?)
            .max(self.l.max_abs_diff(&other.l)?))
    }
}

fn check_shapes(items: &[(&str, &Fir, (usize, usize))]) -> Result<()> {
    for (name, f, shape) in items {
        if f.shape() != *shape {
            return Err(dim(format!("{name} is {:?}, expected {shape:?}", f.shape())));
        }
    }
    Ok(())
}

/// Truncates to `horizon`, failing when a dropped entry exceeds the tolerance.
pub(crate) fn fit(g: Fir, horizon: usize, what: &str) -> Result<Fir> {
    let (t, r) = g.truncate(horizon);
    if r > VERIFY_TOL {
        return Err(Error::Residual {
            what: format!("{what} truncated at horizon {horizon}"),
            residual: r,
            tol: VERIFY_TOL,
        });
    }
    Ok(t)
}

/// `(Vr - Mr Q, Ur - Nr Q)`: numerator and denominator of the Youla controller.
pub fn youla_fraction(f: &DoublyCoprimeFactors, q: &YoulaParam) -> Result<(Fir, Fir)> {
    let s = f.vr.sub(&f.mr.mul(&q.q)?)?;
    let t = f.ur.sub(&f.nr.mul(&q.q)?)?;
    Ok((s, t))
}

pub fn k_from_youla(f: &DoublyCoprimeFactors, q: &YoulaParam, horizon: usize) -> Result<Fir> {
    let (s, t) = youla_fraction(f, q)?;
    Ok(s.mul_truncated(&t.inverse(horizon)?, horizon)?.0)
}

pub fn k_from_iop(x: &IopQuadruple, horizon: usize) -> Result<Fir> {
    Ok(x.u.mul_truncated(&x.y.inverse(horizon)?, horizon)?.0)
}

/// `L - M R^-1 N`. With `c2` given this is computed as `L (I + C2 N)^-1`,
/// which needs only a proper inverse; otherwise `R^-1 N = (zR)^-1 (zN)`.
pub fn k_from_slp(s: &SlpQuadruple, c2: Option<&Mat>, horizon: usize) -> Result<Fir> {
    match c2 {
        Some(c2) => {
            let ny = s.l.cols();
            let den = Fir::identity(ny).add(&s.n.left_mul(c2)?)?;
            Ok(s.l.mul_truncated(&den.inverse(horizon)?, horizon)?.0)
        }
        None => {
            let zr = s.r.advance()?;
            let zn = s.n.advance()?;
            let beta = zr.inverse(horizon)?.mul_truncated(&zn, horizon)?.0;
            let mb = s.m.mul_truncated(&beta, horizon)?.0;
            Ok(s.l.truncate(horizon).0.sub(&mb)?)
        }
    }
}

fn inv(m: CMat, what: &str) -> Result<CMat> {
    m.lu_inverse().ok_or_else(|| Error::Solver(format!("{what} is singular at a sample frequency")))
}

pub fn youla_k_at(f: &DoublyCoprimeFactors, q: &YoulaParam, z: Complex64) -> Result<CMat> {
    let qz = q.q.eval_unchecked(z);
    let s = f.vr.eval_unchecked(z) - f.mr.eval_unchecked(z) * &qz;
    let t = f.ur.eval_unchecked(z) - f.nr.eval_unchecked(z) * &qz;
    Ok(s * inv(t, "Ur - Nr Q")?)
}

pub fn iop_k_at(x: &IopQuadruple, z: Complex64) -> Result<CMat> {
    Ok(x.u.eval_unchecked(z) * inv(x.y.eval_unchecked(z), "Y")?)
}

pub fn slp_k_at(s: &SlpQuadruple, z: Complex64) -> Result<CMat> {
    let rinv = inv(s.r.eval_unchecked(z), "R")?;
    Ok(s.l.eval_unchecked(z) - s.m.eval_unchecked(z) * rinv * s.n.eval_unchecked(z))
}

/// Largest entrywise gap between two controller evaluators over `npoints`
/// unit-circle frequencies.
pub fn controller_gap(
    a: impl Fn(Complex64) -> Result<CMat>,
    b: impl Fn(Complex64) -> Result<CMat>,
    npoints: usize,
) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for z in unit_circle_points(npoints) {
        gap = gap.max(cmax_abs(&(a(z)? - b(z)?)));
    }
    Ok(gap)
}

/// State-space realization of the Youla controller. Its internal signal
/// `(Ur - Nr Q)^-1 y` is stable in closed loop, so the realization is
/// internally stabilizing whenever `Q` is.
pub fn youla_controller(f: &DoublyCoprimeFactors, q: &YoulaParam) -> Result<Controller> {
    let (s, t) = youla_fraction(f, q)?;
    Controller::from_right_fraction(&s, &t)
}

pub fn slp_controller(s: &SlpQuadruple) -> Result<Controller> {
    Controller::from_responses(&s.r, &s.m, &s.n, &s.l)
}

/// Realization of `U Y^-1`. The fraction form is used for stable plants;
/// otherwise the quadruple is first mapped to SLP responses.
pub fn iop_controller(p: &StateSpacePlant, x: &IopQuadruple, horizon: usize) -> Result<Controller> {
    if p.is_open_loop_stable() {
        Controller::from_right_fraction(&x.u, &x.y)
    } else {
        slp_controller(&iop_to_slp(p, x, horizon)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IopReport {
    /// `Y - P22 U - I` and `W - P22 Z`.
    pub left_residual: f64,
    /// `W - Y P22` and `Z - U P22 - I`.
    pub right_residual: f64,
    pub max_residual: f64,
    /// Frequencies where `P22` has a pole.
    pub skipped: usize,
    pub npoints: usize,
    pub pass: bool,
}

/// Checks the IOP affine subspace at `npoints` unit-circle frequencies.
pub fn verify_iop_subspace(p: &StateSpacePlant, x: &IopQuadruple, npoints: usize) -> Result<IopReport> {
    x.check_shapes(p.nu(), p.ny())?;
    let p22 = p.p22();
    let (iy, iu) = (CMat::identity(p.ny(), p.ny()), CMat::identity(p.nu(), p.nu()));
    let (mut left, mut right, mut skipped) = (0.0f64, 0.0f64, 0);
    for z in unit_circle_points(npoints.max(1)) {
        let Some(g) = p22.eval(z) else {
            skipped += 1;
            continue;
        };
        let e = |f: &Fir| f.eval_unchecked(z);
        let (y, u, w, zz) = (e(&x.y), e(&x.u), e(&x.w), e(&x.z));
        left = left.max(cmax_abs(&(&y - &g * &u - &iy))).max(cmax_abs(&(&w - &g * &zz)));
        right = right.max(cmax_abs(&(&w - &y * &g))).max(cmax_abs(&(&zz - &u * &g - &iu)));
    }
    let max_residual = left.max(right);
    Ok(IopReport {
        left_residual: left,
        right_residual: right,
        max_residual,
        skipped,
        npoints,
        pass: max_residual < VERIFY_TOL,
    })
}

/// IOP subspace residual expressed through coprime factors, which turns
/// every identity into a polynomial one:
/// `Ml Y - Nl U = Ml`, `Ml W = Nl Z`, `Y Nr = W Mr`, `Z Mr - U Nr = Mr`.
pub fn iop_factor_residual(f: &DoublyCoprimeFactors, x: &IopQuadruple) -> Result<f64> {
    let r1 = f.ml.mul(&x.y)?.sub(&f.nl.mul(&x.u)?)?.sub(&f.ml)?;
    let r2 = f.ml.mul(&x.w)?.sub(&f.nl.mul(&x.z)?)?;
    let r3 = x.y.mul(&f.nr)?.sub(&x.w.mul(&f.mr)?)?;
    let r4 = x.z.mul(&f.mr)?.sub(&x.u.mul(&f.nr)?)?.sub(&f.mr)?;
    Ok(r1.max_abs().max(r2.max_abs()).max(r3.max_abs()).max(r4.max_abs()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlpReport {
    /// `(zI - A)[R N] - B2 [M L] = [I 0]`, coefficient-wise.
    pub left_residual: f64,
    /// `[R; M](zI - A) - [N; L] C2 = [I; 0]`, coefficient-wise.
    pub right_residual: f64,
    pub r_strictly_proper: bool,
    pub m_strictly_proper: bool,
    pub n_strictly_proper: bool,
    pub max_residual: f64,
    pub pass: bool,
}

/// Largest coefficient of `(zI - A) X - B Y - [eye] I`, counting the
/// `z^1` coefficient `X_0`.
pub(crate) fn left_shift_residual(a: &Mat, x: &Fir, b: &Mat, y: &Fir, eye: bool) -> f64 {
    let last = (x.horizon() + 1).max(y.horizon());
    let mut r = max_abs(&x.coeff(0));
    for j in 0..=last {
        let mut e = x.coeff(j + 1) - a * x.coeff(j) - b * y.coeff(j);
        if eye && j == 0 {
            e -= Mat::identity(e.nrows(), e.ncols());
        }
        r = r.max(max_abs(&e));
    }
    r
}

/// Largest coefficient of `X (zI - A) - Y C - [eye] I`.
fn right_shift_residual(x: &Fir, a: &Mat, y: &Fir, c: &Mat, eye: bool) -> f64 {
    left_shift_residual(&a.transpose(), &x.transpose(), &c.transpose(), &y.transpose(), eye)
}

/// Checks the SLP affine subspace through its exact coefficient recursions
/// and the strict properness of `R`, `M`, `N`.
pub fn verify_slp_subspace(p: &StateSpacePlant, s: &SlpQuadruple) -> Result<SlpReport> {
    s.check_shapes(p.n(), p.nu(), p.ny())?;
    let (a, b2, c2) = (p.a(), p.b2(), p.c2());
    let left = left_shift_residual(a, &s.r, b2, &s.m, true).max(left_shift_residual(a, &s.n, b2, &s.l, false));
    let right = right_shift_residual(&s.r, a, &s.n, c2, true).max(right_shift_residual(&s.m, a, &s.l, c2, false));
    let sp = |f: &Fir| f.is_strictly_proper(VERIFY_TOL);
    let (rs, ms, ns) = (sp(&s.r), sp(&s.m), sp(&s.n));
    let max_residual = left.max(right);
    Ok(SlpReport {
        left_residual: left,
        right_residual: right,
        r_strictly_proper: rs,
        m_strictly_proper: ms,
        n_strictly_proper: ns,
        max_residual,
        pass: max_residual < VERIFY_TOL && rs && ms && ns,
    })
}

#[cfg(test)]
mod tests;
