//! SLS problems with sparsity and box constraints on `(R, M, N, L)`, posed
//! directly or transferred to the Youla or IOP parameters.

use std::str::FromStr;
use std::time::Instant;

use super::assemble::{
    cst, iop_builder, require_horizon, require_stable, slp_builder, slp_objective, IopVars, SlpVars,
};
use super::pattern::SparsityPattern;
use super::program::{solve_equality_ls, LeastSquaresProgram, LinearExpr, ProgramBuilder, VarId};
use super::{finish, iop_outcome, read_iop, read_slp, slp_outcome, youla_outcome, Route, SynthesisResult};
use crate::coprime::DoublyCoprimeFactors;
use crate::error::{dim, Error, Result};
use crate::linalg::Mat;
use crate::lti::{is_stable, series_horizon, StateSpacePlant};
use crate::param_maps::{AffineTerm, YoulaParam, YoulaSlpAffine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlpBlock {
    R,
    M,
    N,
    L,
}

impl SlpBlock {
    pub const ALL: [SlpBlock; 4] = [SlpBlock::R, SlpBlock::M, SlpBlock::N, SlpBlock::L];

    pub fn name(self) -> &'static str {
        match self {
            SlpBlock::R => "R",
            SlpBlock::M => "M",
            SlpBlock::N => "N",
            SlpBlock::L => "L",
        }
    }

    fn shape(self, p: &StateSpacePlant) -> (usize, usize) {
        match self {
            SlpBlock::R => (p.n(), p.n()),
            SlpBlock::M => (p.nu(), p.n()),
            SlpBlock::N => (p.n(), p.ny()),
            SlpBlock::L => (p.nu(), p.ny()),
        }
    }
}

impl FromStr for SlpBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" | "r" => Ok(SlpBlock::R),
            "M" | "m" => Ok(SlpBlock::M),
            "N" | "n" => Ok(SlpBlock::N),
            "L" | "l" => Ok(SlpBlock::L),
            other => Err(Error::Precondition(format!("unknown SLP block {other:?}"))),
        }
    }
}

/// `lower <= entry <= upper` on every coefficient of one block. Since
/// the blocks are zero outside their support and horizon, the interval
/// must contain zero for the set to be nonempty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockBound {
    pub block: SlpBlock,
    pub lower: f64,
    pub upper: f64,
}

/// The constraint set on the closed-loop responses: one support pattern
/// per block and coefficient bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlsConstraint {
    pub r: Option<SparsityPattern>,
    pub m: Option<SparsityPattern>,
    pub n: Option<SparsityPattern>,
    pub l: Option<SparsityPattern>,
    pub bounds: Vec<BlockBound>,
}

impl SlsConstraint {
    pub fn pattern(&self, b: SlpBlock) -> Option<&SparsityPattern> {
        match b {
            SlpBlock::R => self.r.as_ref(),
            SlpBlock::M => self.m.as_ref(),
            SlpBlock::N => self.n.as_ref(),
            SlpBlock::L => self.l.as_ref(),
        }
    }

    pub fn validate(&self, p: &StateSpacePlant) -> Result<()> {
        for b in SlpBlock::ALL {
            if let Some(m) = self.pattern(b) {
                if m.shape() != b.shape(p) {
                    return Err(dim(format!("pattern for {} is {:?}, block is {:?}", b.name(), m.shape(), b.shape(p))));
                }
            }
        }
        for bd in &self.bounds {
            if bd.lower.is_nan() || bd.upper.is_nan() || bd.lower > bd.upper {
                return Err(Error::Precondition(format!(
                    "bound on {} must be an interval, got [{}, {}]",
                    bd.block.name(),
                    bd.lower,
                    bd.upper
                )));
            }
        }
        Ok(())
    }

    fn masks(&self) -> [Option<&SparsityPattern>; 4] {
        SlpBlock::ALL.map(|b| self.pattern(b))
    }

    fn apply(&self, b: &mut ProgramBuilder, exprs: &[(SlpBlock, LinearExpr)], patterns: bool) -> Result<()> {
        for (block, e) in exprs {
            if patterns {
                if let Some(m) = self.pattern(*block) {
                    b.require_pattern(e.clone(), m.clone())?;
                }
            }
            for bd in self.bounds.iter().filter(|bd| bd.block == *block) {
                b.bound(e.clone(), bd.lower, bd.upper);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransferTarget {
    Youla,
    Iop,
}

fn constrained_slp_builder(p: &StateSpacePlant, t: usize, s: &SlsConstraint) -> Result<(ProgramBuilder, SlpVars)> {
    s.validate(p)?;
    let (mut b, v) = slp_builder(p, t, s.masks())?;
    let exprs =
        [(SlpBlock::R, b.var(v.r)), (SlpBlock::M, b.var(v.m)), (SlpBlock::N, b.var(v.n)), (SlpBlock::L, b.var(v.l))];
    s.apply(&mut b, &exprs, false)?;
    Ok((b, v))
}

/// The SLS problem itself: FIR responses of horizon `t` in `s`.
pub fn assemble_constrained_slp_program(
    p: &StateSpacePlant,
    t: usize,
    s: &SlsConstraint,
) -> Result<LeastSquaresProgram> {
    constrained_slp_builder(p, t, s)?.0.build()
}

pub fn synthesize_constrained_slp(p: &StateSpacePlant, t: usize, s: &SlsConstraint) -> Result<SynthesisResult> {
    let start = Instant::now();
    let (b, v) = constrained_slp_builder(p, t, s)?;
    let prog = b.build()?;
    let sol = solve_equality_ls(&prog)?;
    let out = slp_outcome(p, read_slp(&prog.index, v, &sol.x), t)?;
    finish(p, Route::Slp, out, &sol, None, false, start)
}

enum Handles {
    Youla(VarId),
    Iop(IopVars),
}

fn image(term: &AffineTerm, q: VarId) -> Result<LinearExpr> {
    LinearExpr::constant(term.offset.clone()).term(term.left.clone(), q, term.right.clone(), 0)
}

/// `(zI - A) X` or `X (zI - A)` as expressions.
fn shifted(b: &ProgramBuilder, v: VarId, a: &Mat, left: bool) -> Result<LinearExpr> {
    let minus_a = cst(&-a);
    let other =
        if left { b.var_between(v, Some(&minus_a), None, 0) } else { b.var_between(v, None, Some(&minus_a), 0) };
    b.var_between(v, None, None, 1).plus(other)
}

fn transfer_builder(
    p: &StateSpacePlant,
    f: &DoublyCoprimeFactors,
    s: &SlsConstraint,
    target: TransferTarget,
    t: usize,
) -> Result<(ProgramBuilder, Handles)> {
    require_horizon(t)?;
    s.validate(p)?;
    match target {
        TransferTarget::Youla => {
            f.check_shapes(p.nu(), p.ny())?;
            let mut h = 3 * f.horizon() + 2 * p.n() + 4;
            if is_stable(p.a()).0 {
                h += series_horizon(p.a(), 0);
            }
            let aff = YoulaSlpAffine::new(p, f, h)?;
            // Q recovered from FIR responses of horizon t has this degree.
            let qh = t + f.vl.horizon().max(f.ul.horizon()) + f.ur.horizon().max(f.vr.horizon());
            let mut b = ProgramBuilder::new();
            let q = b.variable("Q", p.nu(), p.ny(), 0, qh, None)?;
            let exprs = [
                (SlpBlock::R, image(&aff.r, q)?),
                (SlpBlock::M, image(&aff.m, q)?),
                (SlpBlock::N, image(&aff.n, q)?),
                (SlpBlock::L, image(&aff.l, q)?),
            ];
            for (_, e) in &exprs {
                b.require_fir(e.clone(), t);
            }
            s.apply(&mut b, &exprs, true)?;
            let [(_, r), (_, m), (_, n), (_, l)] = exprs;
            b.minimize(slp_objective(p, r, m, n, l)?);
            Ok((b, Handles::Youla(q)))
        }
        TransferTarget::Iop => {
            require_stable(p, "the IOP target")?;
            let (a, b2, c2) = (p.a(), p.b2(), p.c2());
            let (nx, nu) = (p.n(), p.nu());
            let (mut b, v) = iop_builder(p, t, s.l.as_ref(), false)?;
            // R, M, N = f(U) through their defining relations, kept FIR.
            let r = b.variable("R", nx, nx, 1, t, s.r.as_ref())?;
            let m = b.variable("M", nu, nx, 1, t, s.m.as_ref())?;
            let n = b.variable("N", nx, p.ny(), 1, t, s.n.as_ref())?;
            let e = shifted(&b, m, a, false)?.plus(b.var_between(v.u, None, Some(&cst(&-c2)), 0))?;
            b.require_zero(e);
            let e = shifted(&b, n, a, true)?.plus(b.var_between(v.u, Some(&cst(&-b2)), None, 0))?;
            b.require_zero(e);
            let e = shifted(&b, r, a, true)?
                .plus(b.var_between(m, Some(&cst(&-b2)), None, 0))?
                .plus_constant(&cst(&-Mat::identity(nx, nx)))?;
            b.require_zero(e);
            let exprs =
                [(SlpBlock::R, b.var(r)), (SlpBlock::M, b.var(m)), (SlpBlock::N, b.var(n)), (SlpBlock::L, b.var(v.u))];
            s.apply(&mut b, &exprs, false)?;
            let [(_, re), (_, me), (_, ne), (_, le)] = exprs;
            b.minimize(slp_objective(p, re, me, ne, le)?);
            Ok((b, Handles::Iop(v)))
        }
    }
}

/// The SLS problem over FIR responses of horizon `t` in `s`, rewritten in
/// the Youla parameter (responses as affine images of `Q`, FIR closure
/// imposed on the images) or in the IOP parameters (`L = U`, with `R`,
/// `M`, `N` tied to `U` by `M (zI-A) = U C2`, `(zI-A) N = B2 U`,
/// `(zI-A) R = I + B2 M`). The IOP target needs a stable plant.
pub fn sls_transfer(
    p: &StateSpacePlant,
    f: &DoublyCoprimeFactors,
    s: &SlsConstraint,
    target: TransferTarget,
    t: usize,
) -> Result<LeastSquaresProgram> {
    transfer_builder(p, f, s, target, t)?.0.build()
}

/// Solves [`sls_transfer`] and reports the controller of the optimum.
pub fn synthesize_sls_transfer(
    p: &StateSpacePlant,
    f: &DoublyCoprimeFactors,
    s: &SlsConstraint,
    target: TransferTarget,
    t: usize,
) -> Result<SynthesisResult> {
    let start = Instant::now();
    let (b, handles) = transfer_builder(p, f, s, target, t)?;
    let prog = b.build()?;
    let sol = solve_equality_ls(&prog)?;
    match handles {
        Handles::Youla(q) => {
            let qv = YoulaParam::new(prog.index.value(q, &sol.x).trim(0.0));
            finish(p, Route::Youla, youla_outcome(p, f, qv, t)?, &sol, None, false, start)
        }
        Handles::Iop(v) => {
            let x = read_iop(&prog.index, v, &sol.x)?;
            finish(p, Route::Iop, iop_outcome(p, x, t)?, &sol, None, false, start)
        }
    }
}
