//! State-space and FIR transfer-matrix substrate: arithmetic on matrix
//! polynomials in `z^-1`, Markov expansion, Schur stability and the
//! plant/controller interconnection.

mod controller;
mod fir;
mod plant;

pub use controller::{four_block_stable, four_block_system, internal_stability, lft_closed_loop, Controller};
pub use fir::{unit_circle_points, Fir, UNIT_CIRCLE_TOL};
pub use plant::{
    decay_horizon, h2_norm_ss, is_stable, markov_expand, pbh_full_rank, series_horizon, solve_left_resolvent,
    solve_right_resolvent, times_left_shift, times_right_shift, transfer_at, PlantBlocks, StateSpace, StateSpacePlant,
    STAB_EPS,
};

/// Squared-norm-sum H2 norm of an FIR; see [`Fir::h2_norm`].
pub fn h2_norm(g: &Fir) -> f64 {
    g.h2_norm()
}
