//! H2 programs in the Youla, SLP and IOP parameters.

use super::pattern::SparsityPattern;
use super::program::{LeastSquaresProgram, LinearExpr, ProgramBuilder, VarId};
use crate::coprime::{DoublyCoprimeFactors, VERIFY_TOL};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::lti::{
    is_stable, markov_expand, series_horizon, solve_left_resolvent, solve_right_resolvent, Fir, StateSpacePlant,
};

/// Trailing coefficients below this are dropped from the closed-loop maps.
const TRIM: f64 = 1e-15;

pub(crate) fn cst(m: &Mat) -> Fir {
    Fir::constant(m.clone())
}

pub(crate) fn require_horizon(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::Precondition("synthesis horizon must be at least 1".into()));
    }
    Ok(())
}

/// `T11 + T12 Q T21`, the closed loop `w -> z` as an affine map of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct YoulaBlocks {
    pub t11: Fir,
    pub t12: Fir,
    pub t21: Fir,
}

impl YoulaBlocks {
    /// With `G1 = Ml C2 (zI-A)^-1` and `H1 = (zI-A)^-1 B2 Mr`:
    ///
    /// ```text
    /// T21 = G1 B1 + Ml D21
    /// T12 = -(C1 H1 + D12 Mr)
    /// T11 = C1 (zI-A)^-1 (B1 + B2 Vr T21) + D11 + D12 Vr T21
    /// ```
    ///
    /// The resolvents are exact when the maps are FIR (deadbeat factors) and
    /// converge geometrically for stable `A`; anything else is reported as a
    /// residual.
    pub fn new(p: &StateSpacePlant, f: &DoublyCoprimeFactors) -> Result<Self> {
        f.check_shapes(p.nu(), p.ny())?;
        let (a, b1, b2, c1, c2) = (p.a(), p.b1(), p.b2(), p.c1(), p.c2());
        let (d11, d12, d21) = (p.d11(), p.d12(), p.d21());
        let mut h = 3 * f.horizon() + 2 * p.n() + 4;
        if is_stable(a).0 {
            h += series_horizon(a, 0);
        }
        let (g1, r1) = solve_right_resolvent(a, &f.ml.right_mul(c2)?, h)?;
        let (h1, r2) = solve_left_resolvent(a, &f.mr.left_mul(b2)?, h)?;
        let t21 = g1.right_mul(b1)?.add(&f.ml.right_mul(d21)?)?;
        let t12 = h1.left_mul(c1)?.add(&f.mr.left_mul(d12)?)?.neg();
        let vt = f.vr.mul(&t21)?;
        let (x, r3) = solve_left_resolvent(a, &cst(b1).add(&vt.left_mul(b2)?)?, h)?;
        let t11 = x.left_mul(c1)?.add(&cst(d11))?.add(&vt.left_mul(d12)?)?;
        let worst = r1.max(r2).max(r3);
        if worst > VERIFY_TOL {
            return Err(Error::Residual {
                what: format!("Youla closed-loop maps truncated at horizon {h}"),
                residual: worst,
                tol: VERIFY_TOL,
            });
        }
        Ok(Self { t11: t11.trim(TRIM), t12: t12.trim(TRIM), t21: t21.trim(TRIM) })
    }
}

pub(crate) fn youla_builder(p: &StateSpacePlant, blocks: &YoulaBlocks, t: usize) -> Result<(ProgramBuilder, VarId)> {
    require_horizon(t)?;
    let mut b = ProgramBuilder::new();
    let q = b.variable("Q", p.nu(), p.ny(), 0, t, None)?;
    let obj = LinearExpr::constant(blocks.t11.clone()).term(blocks.t12.clone(), q, blocks.t21.clone(), 0)?;
    b.minimize(obj);
    Ok((b, q))
}

/// Unconstrained least squares `min ||T11 + T12 Q T21||` over `Q` with
/// coefficients `0..=t`.
pub fn assemble_youla_program(p: &StateSpacePlant, f: &DoublyCoprimeFactors, t: usize) -> Result<LeastSquaresProgram> {
    let blocks = YoulaBlocks::new(p, f)?;
    youla_builder(p, &blocks, t)?.0.build()
}

/// `C1 R B1 + C1 N D21 + D12 M B1 + D12 L D21 + D11`.
pub(crate) fn slp_objective(
    p: &StateSpacePlant,
    r: LinearExpr,
    m: LinearExpr,
    n: LinearExpr,
    l: LinearExpr,
) -> Result<LinearExpr> {
    let (b1, c1, d12, d21) = (cst(p.b1()), cst(p.c1()), cst(p.d12()), cst(p.d21()));
    r.left_mul(&c1)?
        .right_mul(&b1)?
        .plus(n.left_mul(&c1)?.right_mul(&d21)?)?
        .plus(m.left_mul(&d12)?.right_mul(&b1)?)?
        .plus(l.left_mul(&d12)?.right_mul(&d21)?)?
        .plus_constant(&cst(p.d11()))
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SlpVars {
    pub r: VarId,
    pub m: VarId,
    pub n: VarId,
    pub l: VarId,
}

/// `sum_t z^shift left X right` with constant factors.
fn affine(rows: usize, cols: usize, terms: &[(Mat, VarId, Mat, usize)], constant: Option<Mat>) -> Result<LinearExpr> {
    let mut e = match constant {
        Some(c) => LinearExpr::constant(Fir::constant(c)),
        None => LinearExpr::zero(rows, cols),
    };
    for (left, v, right, shift) in terms {
        e = e.term(cst(left), *v, cst(right), *shift)?;
    }
    Ok(e)
}

/// Masks in the order `R`, `M`, `N`, `L`.
pub(crate) fn slp_builder(
    p: &StateSpacePlant,
    t: usize,
    masks: [Option<&SparsityPattern>; 4],
) -> Result<(ProgramBuilder, SlpVars)> {
    require_horizon(t)?;
    let (a, b2, c2) = (p.a(), p.b2(), p.c2());
    let (nx, nu, ny) = (p.n(), p.nu(), p.ny());
    let mut b = ProgramBuilder::new();
    let r = b.variable("R", nx, nx, 1, t, masks[0])?;
    let m = b.variable("M", nu, nx, 1, t, masks[1])?;
    let n = b.variable("N", nx, ny, 1, t, masks[2])?;
    let l = b.variable("L", nu, ny, 0, t, masks[3])?;
    let (ix, iu, iy) = (Mat::identity(nx, nx), Mat::identity(nu, nu), Mat::identity(ny, ny));
    // The z^-t coefficients of these identities are the tail conditions
    // A R_t + B2 M_t = 0 and friends, so the closure is exact.
    b.require_zero(affine(
        nx,
        nx,
        &[(ix.clone(), r, ix.clone(), 1), (-a, r, ix.clone(), 0), (-b2, m, ix.clone(), 0)],
        Some(-&ix),
    )?);
    b.require_zero(affine(
        nx,
        ny,
        &[(ix.clone(), n, iy.clone(), 1), (-a, n, iy.clone(), 0), (-b2, l, iy.clone(), 0)],
        None,
    )?);
    b.require_zero(affine(
        nx,
        nx,
        &[(ix.clone(), r, ix.clone(), 1), (ix.clone(), r, -a, 0), (ix.clone(), n, -c2, 0)],
        Some(-&ix),
    )?);
    b.require_zero(affine(nu, nx, &[(iu.clone(), m, ix.clone(), 1), (iu.clone(), m, -a, 0), (iu, l, -c2, 0)], None)?);
    let obj = slp_objective(p, b.var(r), b.var(m), b.var(n), b.var(l))?;
    b.minimize(obj);
    Ok((b, SlpVars { r, m, n, l }))
}

/// Equality-constrained least squares over FIR `(R, M, N, L)` of horizon
/// `t`, with the subspace identities imposed on every coefficient.
pub fn assemble_slp_program(p: &StateSpacePlant, t: usize) -> Result<LeastSquaresProgram> {
    slp_builder(p, t, [None; 4])?.0.build()
}

/// `U` is the only decision variable; the other three blocks are its
/// images under the identities.
#[derive(Debug, Clone)]
pub(crate) struct IopVars {
    pub u: VarId,
    pub y: LinearExpr,
    pub w: LinearExpr,
    pub z: LinearExpr,
}

pub(crate) fn require_stable(p: &StateSpacePlant, what: &str) -> Result<()> {
    let (stable, rho) = is_stable(p.a());
    if !stable {
        return Err(Error::Precondition(format!(
            "{what} needs a stable A (spectral radius {rho:.4}); use the SLP or Youla route"
        )));
    }
    Ok(())
}

/// IOP program for stable `A` with `U` FIR of horizon `t`. For a stable
/// plant the identities fix `Y = I + P22 U`, `Z = I + U P22` and
/// `W = P22 Z`, and the remaining one, `W = Y P22`, then holds identically,
/// so the feasible set is parameterized by `U` alone. `P22` is truncated
/// at its decay horizon.
pub(crate) fn iop_builder(
    p: &StateSpacePlant,
    t: usize,
    u_mask: Option<&SparsityPattern>,
    with_objective: bool,
) -> Result<(ProgramBuilder, IopVars)> {
    require_horizon(t)?;
    require_stable(p, "IOP synthesis")?;
    let he = series_horizon(p.a(), 1);
    let (nu, ny) = (p.nu(), p.ny());
    let p22 = markov_expand(&p.p22(), he).trim(TRIM);
    let mut b = ProgramBuilder::new();
    let u = b.variable("U", nu, ny, 0, t, u_mask)?;
    let y = b.var_between(u, Some(&p22), None, 0).plus_constant(&Fir::identity(ny))?;
    let z = b.var_between(u, None, Some(&p22), 0).plus_constant(&Fir::identity(nu))?;
    let w = z.clone().left_mul(&p22)?;
    if with_objective {
        let p11 = markov_expand(&p.p11(), he).trim(TRIM);
        let p12 = markov_expand(&p.p12(), he).trim(TRIM);
        let p21 = markov_expand(&p.p21(), he).trim(TRIM);
        b.minimize(LinearExpr::constant(p11).term(p12, u, p21, 0)?);
    }
    Ok((b, IopVars { u, y, w, z }))
}

/// `min ||P11 + P12 U P21||` over the IOP quadruple; stable plants only.
pub fn assemble_iop_program(p: &StateSpacePlant, t: usize) -> Result<LeastSquaresProgram> {
    iop_builder(p, t, None, true)?.0.build()
}
