//! Distributed state feedback on a graph: `x[t+1] = A x[t] + u[t] + w[t]`,
//! cost `E ||x||^2`, controller restricted to the graph. The optimum is the
//! static gain `K = -A`, which gives `x[t+1] = w[t]` and squared cost `n`.

use super::pattern::SparsityPattern;
use super::si::synthesize_si;
use super::{static_gain_error, Route, SynthesisResult};
use crate::error::{dim, Error, Result};
use crate::linalg::{spectral_radius, Mat};
use crate::lti::{PlantBlocks, StateSpacePlant};

/// Tolerances of the recovery check.
pub const GAIN_TOL: f64 = 1e-6;
pub const COST_TOL: f64 = 1e-8;

/// Path graph on `n` nodes with self-loops.
pub fn chain_adjacency(n: usize) -> Mat {
    Mat::from_fn(n, n, |i, j| if i.abs_diff(j) <= 1 { 1.0 } else { 0.0 })
}

/// Plant with `A = adjacency * 0.5 / rho(adjacency)` (unscaled when the
/// spectral radius is zero) and `B1 = B2 = C1 = C2 = I`, no feedthrough.
pub fn example1_plant(adjacency: &Mat) -> Result<StateSpacePlant> {
    if !adjacency.is_square() || adjacency.nrows() == 0 {
        return Err(dim("adjacency must be a nonempty square matrix"));
    }
    let rho = spectral_radius(adjacency);
    let a = if rho > 0.0 { adjacency * (0.5 / rho) } else { adjacency.clone() };
    example1_plant_with_a(&a)
}

/// Same plant with `A` taken verbatim.
pub fn example1_plant_with_a(a: &Mat) -> Result<StateSpacePlant> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    StateSpacePlant::new(PlantBlocks::new(a.clone(), eye.clone(), eye.clone(), eye.clone(), eye))
}

#[derive(Debug, Clone)]
pub struct Example1Route {
    pub result: SynthesisResult,
    /// `max |K_k + A δ_k|` over all coefficients.
    pub gain_error: f64,
    /// `|cost^2 - n|`.
    pub cost_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Example1Report {
    pub a: Mat,
    pub pattern: SparsityPattern,
    pub routes: Vec<Example1Route>,
    pub pass: bool,
}

/// Runs the SLP, Youla and IOP inner approximations with the controller
/// pattern `support(A)` plus the diagonal.
pub fn solve_example1(plant: &StateSpacePlant, t: usize) -> Result<Example1Report> {
    if t < 2 {
        return Err(Error::Precondition("the example needs a horizon of at least 2".into()));
    }
    let a = plant.a().clone();
    let n = a.nrows();
    let pattern = SparsityPattern::support(&a, 0.0).union(&SparsityPattern::diagonal(n))?;
    let mut routes = Vec::with_capacity(3);
    for route in [Route::Slp, Route::Youla, Route::Iop] {
        let result = synthesize_si(plant, t, &pattern, route)?;
        let gain_error = static_gain_error(&result.controller, &-&a)?;
        let cost_error = (result.cost_sq - n as f64).abs();
        let pass = gain_error <= GAIN_TOL && cost_error <= COST_TOL && result.stable;
        routes.push(Example1Route { result, gain_error, cost_error, pass });
    }
    let pass = routes.iter().all(|r| r.pass);
    Ok(Example1Report { a, pattern, routes, pass })
}
