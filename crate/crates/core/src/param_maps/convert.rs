use super::{fit, iop_factor_residual, verify_iop_subspace, verify_slp_subspace, youla_fraction};
use super::{IopQuadruple, SlpQuadruple, YoulaParam, DEFAULT_POINTS};
use crate::coprime::{DoublyCoprimeFactors, VERIFY_TOL};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lti::{solve_left_resolvent, solve_right_resolvent, Fir, StateSpacePlant};

fn residual_error(what: &str, residual: f64) -> Error {
    Error::Residual { what: what.into(), residual, tol: VERIFY_TOL }
}

/// Full-length IOP quadruple of `Q`, before truncation.
fn youla_to_iop_exact(f: &DoublyCoprimeFactors, q: &YoulaParam) -> Result<IopQuadruple> {
    let (s, t) = youla_fraction(f, q)?;
    let nu = f.mr.rows();
    Ok(IopQuadruple { y: t.mul(&f.ml)?, u: s.mul(&f.ml)?, w: t.mul(&f.nl)?, z: Fir::identity(nu).add(&s.mul(&f.nl)?)? })
}

/// `Y = (Ur - Nr Q) Ml`, `U = (Vr - Mr Q) Ml`, `W = (Ur - Nr Q) Nl`,
/// `Z = I + (Vr - Mr Q) Nl`.
pub fn youla_to_iop(f: &DoublyCoprimeFactors, q: &YoulaParam, horizon: usize) -> Result<IopQuadruple> {
    let x = youla_to_iop_exact(f, q)?;
    Ok(IopQuadruple {
        y: fit(x.y, horizon, "Y")?,
        u: fit(x.u, horizon, "U")?,
        w: fit(x.w, horizon, "W")?,
        z: fit(x.z, horizon, "Z")?,
    })
}

/// `Q = Vl Y Ur - Ul U Ur - Vl W Vr + Ul Z Vr - Vl Ur`.
///
/// Membership of `x` in the IOP subspace is checked through the factors,
/// where it becomes a set of polynomial identities.
pub fn iop_to_youla(f: &DoublyCoprimeFactors, x: &IopQuadruple, horizon: usize) -> Result<YoulaParam> {
    x.check_shapes(f.mr.rows(), f.ml.rows())?;
    let r = iop_factor_residual(f, x)?;
    if r > VERIFY_TOL {
        return Err(residual_error("input is not in the IOP subspace", r));
    }
    let q =
        f.vl.mul(&x.y)?
            .mul(&f.ur)?
            .sub(&f.ul.mul(&x.u)?.mul(&f.ur)?)?
            .sub(&f.vl.mul(&x.w)?.mul(&f.vr)?)?
            .add(&f.ul.mul(&x.z)?.mul(&f.vr)?)?
            .sub(&f.vl.mul(&f.ur)?)?;
    Ok(YoulaParam::new(fit(q, horizon, "Q")?))
}

/// `Y = I + C2 N`, `U = L`, `W = C2 R B2`, `Z = I + M B2`.
pub fn slp_to_iop(p: &StateSpacePlant, s: &SlpQuadruple) -> Result<IopQuadruple> {
    let report = verify_slp_subspace(p, s)?;
    if !report.pass {
        return Err(residual_error("input is not in the SLP subspace", report.max_residual));
    }
    let (b2, c2) = (p.b2(), p.c2());
    Ok(IopQuadruple {
        y: Fir::identity(p.ny()).add(&s.n.left_mul(c2)?)?,
        u: s.l.clone(),
        w: s.r.left_mul(c2)?.right_mul(b2)?,
        z: Fir::identity(p.nu()).add(&s.m.right_mul(b2)?)?,
    })
}

/// SLP responses of an IOP quadruple: `L = U`, and `M`, `N`, `R` from
///
/// ```text
/// M (zI - A) = U C2,   (zI - A) N = B2 U,   (zI - A) R = I + B2 M
/// ```
///
/// which are the defining relations of `M = U C2 (zI-A)^-1`,
/// `N = (zI-A)^-1 B2 U` and `R = (zI-A)^-1 + (zI-A)^-1 B2 U C2 (zI-A)^-1`.
/// For stable `A` they are solved by the convergent series, otherwise by
/// least squares over `horizon` coefficients including the tail equations,
/// which is exact whenever the responses are FIR within `horizon`.
pub fn iop_to_slp(p: &StateSpacePlant, x: &IopQuadruple, horizon: usize) -> Result<SlpQuadruple> {
    let report = verify_iop_subspace(p, x, DEFAULT_POINTS)?;
    if !report.pass {
        return Err(residual_error("input is not in the IOP subspace", report.max_residual));
    }
    iop_to_slp_unchecked(p, &x.u, horizon)
}

pub(crate) fn iop_to_slp_unchecked(p: &StateSpacePlant, u: &Fir, horizon: usize) -> Result<SlpQuadruple> {
    let (a, b2, c2) = (p.a(), p.b2(), p.c2());
    let n = p.n();
    let (m, rm) = solve_right_resolvent(a, &u.right_mul(c2)?, horizon)?;
    let (nn, rn) = solve_left_resolvent(a, &u.left_mul(b2)?, horizon)?;
    let rhs = Fir::identity(n).add(&m.left_mul(b2)?)?;
    let (r, rr) = solve_left_resolvent(a, &rhs, horizon)?;
    let residual = rm.max(rn).max(rr);
    if residual > VERIFY_TOL {
        return Err(residual_error(&format!("closed-loop responses do not close within horizon {horizon}"), residual));
    }
    Ok(SlpQuadruple { r, m, n: nn, l: fit(u.clone(), horizon, "L")? })
}

/// Composition of [`youla_to_iop`] and [`iop_to_slp`]; the intermediate
/// quadruple is kept at full length.
pub fn youla_to_slp(
    p: &StateSpacePlant,
    f: &DoublyCoprimeFactors,
    q: &YoulaParam,
    horizon: usize,
) -> Result<SlpQuadruple> {
    iop_to_slp(p, &youla_to_iop_exact(f, q)?, horizon)
}

/// `Q = Vl C2 N Ur - Ul L Ur - Vl C2 R B2 Vr + Ul M B2 Vr + Ul Vr`.
pub fn slp_to_youla(
    p: &StateSpacePlant,
    f: &DoublyCoprimeFactors,
    s: &SlpQuadruple,
    horizon: usize,
) -> Result<YoulaParam> {
    let report = verify_slp_subspace(p, s)?;
    if !report.pass {
        return Err(residual_error("input is not in the SLP subspace", report.max_residual));
    }
    let (b2, c2) = (p.b2(), p.c2());
    let q =
        f.vl.mul(&s.n.left_mul(c2)?)?
            .mul(&f.ur)?
            .sub(&f.ul.mul(&s.l)?.mul(&f.ur)?)?
            .sub(&f.vl.mul(&s.r.left_mul(c2)?.right_mul(b2)?)?.mul(&f.vr)?)?
            .add(&f.ul.mul(&s.m.right_mul(b2)?)?.mul(&f.vr)?)?
            .add(&f.ul.mul(&f.vr)?)?;
    Ok(YoulaParam::new(fit(q, horizon, "Q")?))
}

/// `offset + left * Q * right`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTerm {
    pub offset: Fir,
    pub left: Fir,
    pub right: Fir,
}

impl AffineTerm {
    pub fn at(&self, q: &Fir, horizon: usize) -> Result<Fir> {
        let full = self.offset.add(&self.left.mul(q)?.mul(&self.right)?)?;
        fit(full, horizon, "affine image")
    }
}

/// SLP responses as affine functions of the Youla parameter, with
/// `G1 = Ml C2 (zI-A)^-1` and `H1 = (zI-A)^-1 B2 Mr`:
///
/// ```text
/// L = Vr Ml - Mr Q Ml
/// M = Vr G1 - Mr Q G1
/// N = (zI-A)^-1 B2 Vr Ml - H1 Q Ml
/// R = (zI-A)^-1 (I + B2 Vr G1) - H1 Q G1
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct YoulaSlpAffine {
    pub r: AffineTerm,
    pub m: AffineTerm,
    pub n: AffineTerm,
    pub l: AffineTerm,
}

impl YoulaSlpAffine {
    /// Expands the offsets and the resolvent factors through `horizon`.
    pub fn new(p: &StateSpacePlant, f: &DoublyCoprimeFactors, horizon: usize) -> Result<Self> {
        let (a, b2, c2) = (p.a(), p.b2(), p.c2());
        let mut worst: f64 = 0.0;
        let mut left = |g: Fir| -> Result<Fir> {
            let (x, r) = solve_left_resolvent(a, &g, horizon)?;
            worst = worst.max(r);
            Ok(x)
        };
        let h1 = left(f.mr.left_mul(b2)?)?;
        let vr_ml = f.vr.mul(&f.ml)?;
        let n0 = left(vr_ml.left_mul(b2)?)?;
        let (g1, rg) = solve_right_resolvent(a, &f.ml.right_mul(c2)?, horizon)?;
        let m0 = f.vr.mul(&g1)?;
        let r0 = left(Fir::identity(p.n()).add(&m0.left_mul(b2)?)?)?;
        let worst = worst.max(rg);
        if worst > VERIFY_TOL {
            return Err(residual_error(
                &format!("Youla-to-SLP resolvents do not close within horizon {horizon}"),
                worst,
            ));
        }
        let minus_mr = f.mr.neg();
        let minus_h1 = h1.neg();
        Ok(Self {
            l: AffineTerm { offset: vr_ml, left: minus_mr.clone(), right: f.ml.clone() },
            m: AffineTerm { offset: m0, left: minus_mr, right: g1.clone() },
            n: AffineTerm { offset: n0, left: minus_h1.clone(), right: f.ml.clone() },
            r: AffineTerm { offset: r0, left: minus_h1, right: g1 },
        })
    }

    pub fn at(&self, q: &YoulaParam, horizon: usize) -> Result<SlpQuadruple> {
        Ok(SlpQuadruple {
            r: self.r.at(&q.q, horizon)?,
            m: self.m.at(&q.q, horizon)?,
            n: self.n.at(&q.q, horizon)?,
            l: self.l.at(&q.q, horizon)?,
        })
    }
}

/// Drops the zeroth coefficient (multiplication by `z`) after checking that
/// it is negligible.
pub(crate) fn advance_tol(f: &Fir, tol: f64, what: &str) -> Result<Fir> {
    let lead = crate::linalg::max_abs(&f.coeff(0));
    if lead > tol {
        return Err(Error::Precondition(format!("{what} is not strictly proper (|G_0| = {lead:.3e})")));
    }
    if f.horizon() == 0 {
        return Ok(Fir::zeros(f.rows(), f.cols(), 0));
    }
    Fir::new(f.coeffs()[1..].to_vec())
}

/// `X (zI - A)` for `X` strictly proper up to `tol`.
pub(crate) fn times_right_shift_tol(x: &Fir, a: &Mat, tol: f64, what: &str) -> Result<Fir> {
    let zx = advance_tol(x, tol, what)?;
    let mut coeffs = x.coeffs().to_vec();
    coeffs[0] = Mat::zeros(x.rows(), x.cols());
    zx.sub(&Fir::new(coeffs)?.right_mul(a)?)
}
