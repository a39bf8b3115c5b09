//! Sparsity-invariance inner approximations for state feedback: the
//! controller is written as `K = S T^-1` with `S` in the target pattern and
//! `T` diagonal, which keeps `K` in the pattern without requiring QI.

use std::time::Instant;

use super::assemble::{cst, require_horizon, slp_objective, youla_builder, YoulaBlocks};
use super::pattern::SparsityPattern;
use super::program::{solve_equality_ls, LinearExpr, ProgramBuilder};
use super::{finish, youla_outcome, Outcome, Parameters, Route, SynthesisResult};
use crate::error::{dim, Result};
use crate::linalg::LuInverse;
use crate::lti::{Fir, StateSpacePlant};
use crate::param_maps::{
    verify_iop_subspace, verify_slp_subspace, StateFeedbackIop, StateFeedbackSlp, StateFeedbackYoula, DEFAULT_POINTS,
};

/// Inner approximation of `min ||closed loop||` over `K` with the support
/// of `lpat`, for state-feedback plants (`C2 = I`):
///
/// - SLP: `M` in `lpat`, `R` diagonal, `K = (zM)(zR)^-1`.
/// - Youla (`B2 = I`): `-A - (I - A/z) Q` in `lpat`, `I - Q/z` diagonal.
/// - IOP (`B2` invertible): `Z - I` in `lpat`, `W` diagonal,
///   `K = z(Z - I)(zW)^-1`.
pub fn synthesize_si(p: &StateSpacePlant, t: usize, lpat: &SparsityPattern, route: Route) -> Result<SynthesisResult> {
    require_horizon(t)?;
    if lpat.shape() != (p.nu(), p.ny()) {
        return Err(dim(format!("controller pattern is {:?}, plant needs {}x{}", lpat.shape(), p.nu(), p.ny())));
    }
    let start = Instant::now();
    let h = super::controller_horizon(p, t);
    let n = p.n();
    let diag = SparsityPattern::diagonal(n);
    let (a, b2) = (p.a(), p.b2());
    let (out, sol) = match route {
        Route::Slp => {
            let sf = StateFeedbackSlp::new(p)?;
            let nu = p.nu();
            let mut b = ProgramBuilder::new();
            let r = b.variable("R", n, n, 1, t, Some(&diag))?;
            let m = b.variable("M", nu, n, 1, t, Some(lpat))?;
            let eye = Fir::identity(n);
            let closure = b
                .var_between(r, None, None, 1)
                .plus(b.var_between(r, Some(&cst(&-a)), None, 0))?
                .plus(b.var_between(m, Some(&cst(&-b2)), None, 0))?
                .plus_constant(&eye.neg())?;
            b.require_zero(closure);
            // N = R (zI - A) - I and L = M (zI - A).
            let ne = b
                .var_between(r, None, None, 1)
                .plus(b.var_between(r, None, Some(&cst(&-a)), 0))?
                .plus_constant(&eye.neg())?;
            let le = b.var_between(m, None, None, 1).plus(b.var_between(m, None, Some(&cst(&-a)), 0))?;
            let obj = slp_objective(p, b.var(r), b.var(m), ne, le)?;
            b.minimize(obj);
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let (rv, mv) = (prog.index.value(r, &sol.x), prog.index.value(m, &sol.x));
            let s = sf.complete(&rv, &mv)?;
            let out = Outcome {
                controller: sf.controller(&rv, &mv, h)?,
                realization: sf.realize(&rv, &mv)?,
                subspace_residual: verify_slp_subspace(p, &s)?.max_residual,
                params: Parameters::Slp(s),
            };
            (out, sol)
        }
        Route::Youla => {
            let sf = StateFeedbackYoula::new(p)?;
            let f = sf.factors();
            let blocks = YoulaBlocks::new(p, f)?;
            let (mut b, q) = youla_builder(p, &blocks, t)?;
            let num = LinearExpr::constant(f.vr.clone()).term(f.mr.neg(), q, Fir::identity(n), 0)?;
            let den = LinearExpr::constant(f.ur.clone()).term(f.nr.neg(), q, Fir::identity(n), 0)?;
            b.require_pattern(num, lpat.clone())?;
            b.require_pattern(den, diag)?;
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let qv = crate::param_maps::YoulaParam::new(prog.index.value(q, &sol.x));
            (youla_outcome(p, f, qv, t)?, sol)
        }
        Route::Iop => {
            let sf = StateFeedbackIop::new(p)?;
            let b2_inv = b2.clone().lu_inverse().expect("checked by the reduction");
            let nu = p.nu();
            let mut b = ProgramBuilder::new();
            let w = b.variable("W", n, nu, 1, t, Some(&diag))?;
            // D = Z - I, strictly proper because Z_0 = I.
            let d = b.variable("D", nu, nu, 1, t, Some(lpat))?;
            let closure = b
                .var_between(w, None, None, 1)
                .plus(b.var_between(w, Some(&cst(&-a)), None, 0))?
                .plus(b.var_between(d, Some(&cst(&-b2)), None, 0))?
                .plus_constant(&cst(&-b2))?;
            b.require_zero(closure);
            let (c1, d12, d21) = (p.c1(), p.d12(), p.d21());
            let g = &b2_inv * (p.b1() - a * d21);
            let gz = &b2_inv * d21;
            let obj = LinearExpr::constant(cst(&(p.d11() - c1 * d21)))
                .term(cst(c1), w, cst(&g), 0)?
                .term(cst(c1), w, cst(&gz), 1)?
                .term(cst(d12), d, cst(&g), 0)?
                .term(cst(d12), d, cst(&gz), 1)?;
            b.minimize(obj);
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let wv = prog.index.value(w, &sol.x);
            let zv = Fir::identity(nu).add(&prog.index.value(d, &sol.x))?;
            let x = sf.complete(&wv, &zv)?;
            let out = Outcome {
                controller: sf.controller(&wv, &zv, h)?,
                realization: sf.realize(&wv, &zv)?,
                subspace_residual: verify_iop_subspace(p, &x, DEFAULT_POINTS)?.max_residual.max(sf.residual(&wv, &zv)),
                params: Parameters::Iop(x),
            };
            (out, sol)
        }
    };
    finish(p, route, out, &sol, Some(lpat), true, start)
}
