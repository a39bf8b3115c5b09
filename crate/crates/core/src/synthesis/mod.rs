//! H2 synthesis in the Youla, SLP and IOP parameters as finite-dimensional
//! least squares over FIR coefficients, with subspace (QI) and
//! sparsity-invariance structure, SLS constraint transfer and the
//! distributed state-feedback example.

mod assemble;
mod example1;
mod pattern;
mod program;
mod si;
mod transfer;

pub use assemble::{assemble_iop_program, assemble_slp_program, assemble_youla_program, YoulaBlocks};
pub use example1::{
    chain_adjacency, example1_plant, example1_plant_with_a, solve_example1, Example1Report, Example1Route, COST_TOL,
    GAIN_TOL,
};
pub use pattern::{plant_pattern, qi_test, SparsityPattern};
pub use program::{
    solve_equality_ls, LeastSquaresProgram, LinearExpr, LsSolution, ProgramBuilder, VarBlock, VarId, VariableIndex,
    FEASIBILITY_TOL,
};
pub use si::synthesize_si;
pub use transfer::{
    assemble_constrained_slp_program, sls_transfer, synthesize_constrained_slp, synthesize_sls_transfer, BlockBound,
    SlpBlock, SlsConstraint, TransferTarget,
};

use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;

use crate::coprime::{doubly_coprime_stable, factorize, verify_bezout, DoublyCoprimeFactors, FactorMode};
use crate::error::{dim, Error, Result};
use crate::linalg::Mat;
use crate::lti::{internal_stability, is_stable, series_horizon, Controller, Fir, StateSpacePlant};
use crate::param_maps::{
    iop_controller, k_from_iop, k_from_slp, k_from_youla, verify_iop_subspace, verify_slp_subspace, youla_controller,
    IopQuadruple, SlpQuadruple, YoulaParam, DEFAULT_POINTS,
};
use assemble::{iop_builder, slp_builder, youla_builder, IopVars, SlpVars};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Youla,
    Slp,
    Iop,
}

impl Route {
    pub const ALL: [Route; 3] = [Route::Youla, Route::Slp, Route::Iop];

    pub fn name(self) -> &'static str {
        match self {
            Route::Youla => "youla",
            Route::Slp => "slp",
            Route::Iop => "iop",
        }
    }
}

impl FromStr for Route {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "youla" => Ok(Route::Youla),
            "slp" => Ok(Route::Slp),
            "iop" => Ok(Route::Iop),
            other => Err(Error::Precondition(format!("unknown parameterization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Youla(YoulaParam),
    Slp(SlpQuadruple),
    Iop(IopQuadruple),
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub route: Route,
    pub params: Parameters,
    /// Impulse response of `K`, truncated to `controller_horizon`.
    pub controller: Fir,
    pub realization: Controller,
    /// Optimal objective, the squared H2 norm of the closed loop `w -> z`.
    pub cost_sq: f64,
    pub equality_residual: f64,
    /// Residual of the route's own verifier (Bezout for Youla).
    pub subspace_residual: f64,
    /// Largest entry of `K` outside the requested pattern, if any.
    pub structure_residual: f64,
    pub stable: bool,
    pub spectral_radius: f64,
    /// Set when the result comes from a convex inner approximation.
    pub inner_approx: bool,
    pub free_dims: usize,
    pub wall_time: Duration,
}

impl SynthesisResult {
    pub fn h2_cost(&self) -> f64 {
        self.cost_sq.sqrt()
    }

    pub fn max_residual(&self) -> f64 {
        self.equality_residual.max(self.subspace_residual)
    }
}

/// Truncation length for the reported impulse response of `K`.
pub(crate) fn controller_horizon(p: &StateSpacePlant, t: usize) -> usize {
    2 * t + 2 * p.n() + 2
}

pub(crate) struct Outcome {
    pub params: Parameters,
    pub controller: Fir,
    pub realization: Controller,
    pub subspace_residual: f64,
}

pub(crate) fn finish(
    p: &StateSpacePlant,
    route: Route,
    out: Outcome,
    sol: &LsSolution,
    lpat: Option<&SparsityPattern>,
    inner_approx: bool,
    start: Instant,
) -> Result<SynthesisResult> {
    let (stable, spectral_radius) = internal_stability(p, &out.realization)?;
    let structure_residual = match lpat {
        Some(m) => pattern_residual(&out.controller, m),
        None => 0.0,
    };
    Ok(SynthesisResult {
        route,
        params: out.params,
        controller: out.controller,
        realization: out.realization,
        cost_sq: sol.cost_sq,
        equality_residual: sol.equality_residual,
        subspace_residual: out.subspace_residual,
        structure_residual,
        stable,
        spectral_radius,
        inner_approx,
        free_dims: sol.free_dims,
        wall_time: start.elapsed(),
    })
}

/// Largest entry of `g` outside `mask`.
pub fn pattern_residual(g: &Fir, mask: &SparsityPattern) -> f64 {
    let (r, c) = mask.shape();
    g.coeffs()
        .iter()
        .flat_map(|k| (0..r).flat_map(move |i| (0..c).map(move |j| (i, j, k))))
        .filter(|(i, j, _)| !mask.get(*i, *j))
        .map(|(i, j, k)| k[(i, j)].abs())
        .fold(0.0, f64::max)
}

/// Stable factors for stable plants, deadbeat factors otherwise.
pub fn default_factors(p: &StateSpacePlant) -> Result<DoublyCoprimeFactors> {
    if is_stable(p.a()).0 {
        doubly_coprime_stable(p, series_horizon(p.a(), 1))
    } else {
        factorize(p, FactorMode::Deadbeat, None)
    }
}

pub(crate) fn youla_outcome(p: &StateSpacePlant, f: &DoublyCoprimeFactors, q: YoulaParam, t: usize) -> Result<Outcome> {
    Ok(Outcome {
        controller: k_from_youla(f, &q, controller_horizon(p, t))?,
        realization: youla_controller(f, &q)?,
        subspace_residual: verify_bezout(f, p, DEFAULT_POINTS)?.max_residual,
        params: Parameters::Youla(q),
    })
}

pub(crate) fn slp_outcome(p: &StateSpacePlant, s: SlpQuadruple, t: usize) -> Result<Outcome> {
    let report = verify_slp_subspace(p, &s)?;
    Ok(Outcome {
        controller: k_from_slp(&s, Some(p.c2()), controller_horizon(p, t))?,
        realization: Controller::from_responses(&s.r, &s.m, &s.n, &s.l)?,
        subspace_residual: report.max_residual,
        params: Parameters::Slp(s),
    })
}

pub(crate) fn iop_outcome(p: &StateSpacePlant, x: IopQuadruple, t: usize) -> Result<Outcome> {
    let report = verify_iop_subspace(p, &x, DEFAULT_POINTS)?;
    let h = controller_horizon(p, t);
    Ok(Outcome {
        controller: k_from_iop(&x, h)?,
        realization: iop_controller(p, &x, h)?,
        subspace_residual: report.max_residual,
        params: Parameters::Iop(x),
    })
}

pub(crate) fn read_slp(index: &VariableIndex, v: SlpVars, x: &DVector<f64>) -> SlpQuadruple {
    SlpQuadruple { r: index.value(v.r, x), m: index.value(v.m, x), n: index.value(v.n, x), l: index.value(v.l, x) }
}

pub(crate) fn read_iop(index: &VariableIndex, v: IopVars, x: &DVector<f64>) -> Result<IopQuadruple> {
    let image = |e: &LinearExpr| e.evaluate(index, x).map(|(_, f)| f);
    Ok(IopQuadruple { y: image(&v.y)?, u: index.value(v.u, x), w: image(&v.w)?, z: image(&v.z)? })
}

fn check_controller_pattern(p: &StateSpacePlant, lpat: &SparsityPattern) -> Result<()> {
    if lpat.shape() != (p.nu(), p.ny()) {
        return Err(dim(format!("controller pattern is {:?}, plant needs {}x{}", lpat.shape(), p.nu(), p.ny())));
    }
    Ok(())
}

fn run(
    p: &StateSpacePlant,
    t: usize,
    route: Route,
    factors: Option<&DoublyCoprimeFactors>,
    lpat: Option<&SparsityPattern>,
) -> Result<SynthesisResult> {
    let start = Instant::now();
    match route {
        Route::Youla => {
            let f = match factors {
                Some(f) => f.clone(),
                None => default_factors(p)?,
            };
            let blocks = YoulaBlocks::new(p, &f)?;
            let (mut b, q) = youla_builder(p, &blocks, t)?;
            if let Some(m) = lpat {
                // (Vr - Mr Q) Ml, the IOP response U.
                let u = LinearExpr::constant(f.vr.mul(&f.ml)?).term(f.mr.neg(), q, f.ml.clone(), 0)?;
                b.require_pattern(u, m.clone())?;
            }
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let qv = YoulaParam::new(prog.index.value(q, &sol.x));
            finish(p, route, youla_outcome(p, &f, qv, t)?, &sol, lpat, false, start)
        }
        Route::Slp => {
            let (b, v) = slp_builder(p, t, [None, None, None, lpat])?;
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let s = read_slp(&prog.index, v, &sol.x);
            finish(p, route, slp_outcome(p, s, t)?, &sol, lpat, false, start)
        }
        Route::Iop => {
            let (b, v) = iop_builder(p, t, lpat, true)?;
            let prog = b.build()?;
            let sol = solve_equality_ls(&prog)?;
            let x = read_iop(&prog.index, v, &sol.x)?;
            finish(p, route, iop_outcome(p, x, t)?, &sol, lpat, false, start)
        }
    }
}

/// Unstructured H2 synthesis over horizon `t`. The Youla route uses
/// `factors` when given, else [`default_factors`].
pub fn synthesize(
    p: &StateSpacePlant,
    route: Route,
    t: usize,
    factors: Option<&DoublyCoprimeFactors>,
) -> Result<SynthesisResult> {
    run(p, t, route, factors, None)
}

/// H2 synthesis with `K` restricted to the subspace `lpat`, posed convexly
/// on `(Vr - Mr Q) Ml`, `L` or `U`. Requires `lpat` to be quadratically
/// invariant under the structural pattern of `P22`.
pub fn synthesize_structured(
    p: &StateSpacePlant,
    t: usize,
    lpat: &SparsityPattern,
    route: Route,
    factors: Option<&DoublyCoprimeFactors>,
) -> Result<SynthesisResult> {
    check_controller_pattern(p, lpat)?;
    if !qi_test(lpat, &plant_pattern(p))? {
        return Err(Error::QiViolation);
    }
    run(p, t, route, factors, Some(lpat))
}

/// Largest coefficient gap between `K` and a static gain.
pub fn static_gain_error(k: &Fir, gain: &Mat) -> Result<f64> {
    k.max_abs_diff(&Fir::constant(gain.clone()))
}
