use num_complex::Complex64;

use super::fir::Fir;
use crate::error::{dim, Error, Result};
use crate::linalg::{
    complex_rank, eigenvalues, lstsq, max_abs, spectral_radius, to_complex, unit_circle_split, CMat, Mat,
};

/// Margin below one required of a Schur-stable spectral radius.
pub const STAB_EPS: f64 = 1e-9;

/// A plain realization `C (zI - A)^-1 B + D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(dim(format!(
                "realization A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Transfer matrix at `z`; `None` when `zI - A` is singular there.
    pub fn eval(&self, z: Complex64) -> Option<CMat> {
        transfer_at(&self.a, &self.b, &self.c, &self.d, z)
    }
}

pub fn transfer_at(a: &Mat, b: &Mat, c: &Mat, d: &Mat, z: Complex64) -> Option<CMat> {
    let n = a.nrows();
    if n == 0 {
        return Some(to_complex(d));
    }
    let resolvent = CMat::identity(n, n) * z - to_complex(a);
    let x = resolvent.lu().solve(&to_complex(b))?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(to_complex(c) * x + to_complex(d))
}

/// Impulse response `[D, CB, CAB, ..., CA^(T-1)B]`.
pub fn markov_expand(sys: &StateSpace, horizon: usize) -> Fir {
    let mut coeffs = Vec::with_capacity(horizon + 1);
    coeffs.push(sys.d.clone());
    let mut ak_b = sys.b.clone();
    for _ in 1..=horizon {
        coeffs.push(&sys.c * &ak_b);
        ak_b = &sys.a * ak_b;
    }
    Fir::new(coeffs).expect("all Markov parameters share the shape of D")
}

/// Schur stability with the `STAB_EPS` margin; also returns the spectral radius.
pub fn is_stable(a: &Mat) -> (bool, f64) {
    let rho = spectral_radius(a);
    (rho < 1.0 - STAB_EPS, rho)
}

/// H2 norm of a Schur-stable system from its controllability Gramian,
/// `P = A P A^T + B B^T`, summed by squaring: after `j` steps the partial
/// sum covers `2^j` Markov parameters.
pub fn h2_norm_ss(sys: &StateSpace) -> Result<f64> {
    let (stable, rho) = is_stable(&sys.a);
    if !stable {
        return Err(Error::Precondition(format!("H2 norm of an unstable system (spectral radius {rho:.4})")));
    }
    let mut ak = sys.a.clone();
    let mut p = &sys.b * sys.b.transpose();
    for _ in 0..64 {
        if max_abs(&ak) < 1e-300 {
            break;
        }
        let next = &p + &ak * &p * ak.transpose();
        let done = max_abs(&(&next - &p)) <= f64::EPSILON * max_abs(&next);
        p = next;
        ak = &ak * &ak;
        if done {
            break;
        }
    }
    let h2 = (&sys.c * p * sys.c.transpose()).trace() + sys.d.norm_squared();
    Ok(h2.max(0.0).sqrt())
}

/// Blocks of the generalized plant; `D22` is zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantBlocks {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub d21: Mat,
}

impl PlantBlocks {
    /// Blocks with every feedthrough term zero.
    pub fn new(a: Mat, b1: Mat, b2: Mat, c1: Mat, c2: Mat) -> Self {
        let d11 = Mat::zeros(c1.nrows(), b1.ncols());
        let d12 = Mat::zeros(c1.nrows(), b2.ncols());
        let d21 = Mat::zeros(c2.nrows(), b1.ncols());
        Self { a, b1, b2, c1, c2, d11, d12, d21 }
    }

    pub fn with_d11(mut self, d: Mat) -> Self {
        self.d11 = d;
        self
    }

    pub fn with_d12(mut self, d: Mat) -> Self {
        self.d12 = d;
        self
    }

    pub fn with_d21(mut self, d: Mat) -> Self {
        self.d21 = d;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpacePlant {
    blocks: PlantBlocks,
}

impl StateSpacePlant {
    pub fn new(blocks: PlantBlocks) -> Result<Self> {
        let p = &blocks;
        let n = p.a.nrows();
        let (nw, nu, nz, ny) = (p.b1.ncols(), p.b2.ncols(), p.c1.nrows(), p.c2.nrows());
        let checks = [
            ("A", p.a.shape(), (n, n)),
            ("B1", p.b1.shape(), (n, nw)),
            ("B2", p.b2.shape(), (n, nu)),
            ("C1", p.c1.shape(), (nz, n)),
            ("C2", p.c2.shape(), (ny, n)),
            ("D11", p.d11.shape(), (nz, nw)),
            ("D12", p.d12.shape(), (nz, nu)),
            ("D21", p.d21.shape(), (ny, nw)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(dim(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        if n == 0 {
            return Err(dim("plant must have at least one state"));
        }
        if nu == 0 || ny == 0 {
            return Err(dim("plant needs at least one control input and one measurement"));
        }
        if !pbh_full_rank(&p.a, &p.b2, true) {
            return Err(Error::NotStabilizable);
        }
        if !pbh_full_rank(&p.a.transpose(), &p.c2.transpose(), true) {
            return Err(Error::NotDetectable);
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &PlantBlocks {
        &self.blocks
    }

    pub fn a(&self) -> &Mat {
        &self.blocks.a
    }
    pub fn b1(&self) -> &Mat {
        &self.blocks.b1
    }
    pub fn b2(&self) -> &Mat {
        &self.blocks.b2
    }
    pub fn c1(&self) -> &Mat {
        &self.blocks.c1
    }
    pub fn c2(&self) -> &Mat {
        &self.blocks.c2
    }
    pub fn d11(&self) -> &Mat {
        &self.blocks.d11
    }
    pub fn d12(&self) -> &Mat {
        &self.blocks.d12
    }
    pub fn d21(&self) -> &Mat {
        &self.blocks.d21
    }

    pub fn n(&self) -> usize {
        self.blocks.a.nrows()
    }
    pub fn nw(&self) -> usize {
        self.blocks.b1.ncols()
    }
    pub fn nu(&self) -> usize {
        self.blocks.b2.ncols()
    }
    pub fn nz(&self) -> usize {
        self.blocks.c1.nrows()
    }
    pub fn ny(&self) -> usize {
        self.blocks.c2.nrows()
    }

    pub fn is_open_loop_stable(&self) -> bool {
        is_stable(self.a()).0
    }

    pub fn p11(&self) -> StateSpace {
        let b = &self.blocks;
        StateSpace { a: b.a.clone(), b: b.b1.clone(), c: b.c1.clone(), d: b.d11.clone() }
    }

    pub fn p12(&self) -> StateSpace {
        let b = &self.blocks;
        StateSpace { a: b.a.clone(), b: b.b2.clone(), c: b.c1.clone(), d: b.d12.clone() }
    }

    pub fn p21(&self) -> StateSpace {
        let b = &self.blocks;
        StateSpace { a: b.a.clone(), b: b.b1.clone(), c: b.c2.clone(), d: b.d21.clone() }
    }

    pub fn p22(&self) -> StateSpace {
        let b = &self.blocks;
        StateSpace { a: b.a.clone(), b: b.b2.clone(), c: b.c2.clone(), d: Mat::zeros(self.ny(), self.nu()) }
    }

    /// True when the whole of `(A, B2)` is reachable.
    pub fn is_controllable(&self) -> bool {
        pbh_full_rank(self.a(), self.b2(), false)
    }

    pub fn is_observable(&self) -> bool {
        pbh_full_rank(&self.a().transpose(), &self.c2().transpose(), false)
    }
}

/// PBH test `rank [lambda I - A, B] = n` at every eigenvalue, or only the
/// eigenvalues on or outside the stability margin when `unstable_only`.
pub fn pbh_full_rank(a: &Mat, b: &Mat, unstable_only: bool) -> bool {
    let n = a.nrows();
    for lambda in eigenvalues(a) {
        if unstable_only && lambda.norm() < 1.0 - STAB_EPS {
            continue;
        }
        let shifted = CMat::identity(n, n) * lambda - to_complex(a);
        let stacked = {
            let bc = to_complex(b);
            let mut m = CMat::zeros(n, n + b.ncols());
            m.view_mut((0, 0), (n, n)).copy_from(&shifted);
            m.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
            m
        };
        if complex_rank(&stacked, 1e-9) < n {
            return false;
        }
    }
    true
}

/// Smallest `k` with `||A^k||` below `floor`, capped at `cap`. Used to pick
/// how far a stable series must run before its tail is negligible.
pub fn decay_horizon(a: &Mat, floor: f64, cap: usize) -> usize {
    let mut p = Mat::identity(a.nrows(), a.nrows());
    for k in 0..cap {
        if max_abs(&p) <= floor {
            return k;
        }
        p = a * p;
    }
    cap
}

/// Horizon after which a series in powers of `a` is below round-off, and
/// at least `min`.
pub fn series_horizon(a: &Mat, min: usize) -> usize {
    decay_horizon(a, 1e-16, 4000).max(min)
}

/// Strictly proper `X` through `horizon` with `(zI - A) X = G`, plus the
/// largest residual of that identity over all coefficients.
///
/// For Schur-stable `A` this is the convergent series `X_{k+1} = A X_k + G_k`.
/// Otherwise `A` is split across the unit circle: the stable modes run
/// forward from `X_0 = 0` and the unstable ones backward from
/// `X_{horizon+1} = 0`, both contractive. This is exact whenever the true
/// `X` is an FIR of degree at most `horizon`. When the split is not
/// available (a mode on the circle) the finite system including the tail
/// equations is solved in the least-squares sense.
pub fn solve_left_resolvent(a: &Mat, g: &Fir, horizon: usize) -> Result<(Fir, f64)> {
    let n = a.nrows();
    if g.rows() != n || a.ncols() != n {
        return Err(dim("resolvent solve: G must have as many rows as A"));
    }
    let m = g.cols();
    let horizon = horizon.max(1);
    let mut x = vec![Mat::zeros(n, m); horizon + 1];
    if is_stable(a).0 {
        for k in 0..horizon {
            x[k + 1] = a * &x[k] + g.coeff(k);
        }
    } else if let Some(sp) = unit_circle_split(a) {
        let ns = sp.stable_dim();
        let nu = n - ns;
        let gt: Vec<Mat> = (0..=horizon).map(|k| &sp.v_inv * g.coeff(k)).collect();
        let mut xs = vec![Mat::zeros(ns, m); horizon + 1];
        for k in 0..horizon {
            xs[k + 1] = &sp.a_s * &xs[k] + gt[k].rows(0, ns);
        }
        let lu = sp.a_u.clone().lu();
        let mut xu = vec![Mat::zeros(nu, m); horizon + 2];
        for k in (1..=horizon).rev() {
            let rhs = &xu[k + 1] - gt[k].rows(ns, nu);
            xu[k] = lu.solve(&rhs).ok_or_else(|| Error::Solver("unstable block of A is singular".into()))?;
        }
        for k in 1..=horizon {
            x[k] = sp.v.columns(0, ns) * &xs[k] + sp.v.columns(ns, nu) * &xu[k];
        }
    } else {
        lstsq_resolvent(a, g, horizon, &mut x);
    }
    let x = Fir::new(x)?;
    let residual = left_resolvent_residual(a, &x, g);
    Ok((x, residual))
}

/// Least-squares fallback: unknowns `X_1..X_H` stacked, equation `k` is
/// `X_{k+1} - A X_k = G_k`, tail equations included.
fn lstsq_resolvent(a: &Mat, g: &Fir, horizon: usize, x: &mut [Mat]) {
    let (n, m) = (a.nrows(), g.cols());
    let last_eq = horizon.max(g.horizon());
    let rows = n * (last_eq + 1);
    let mut sys = Mat::zeros(rows, n * horizon);
    let mut rhs = Mat::zeros(rows, m);
    for k in 0..=last_eq {
        if k + 1 <= horizon {
            sys.view_mut((n * k, n * k), (n, n)).copy_from(&Mat::identity(n, n));
        }
        if k >= 1 && k <= horizon {
            sys.view_mut((n * k, n * (k - 1)), (n, n)).copy_from(&(-a));
        }
        rhs.view_mut((n * k, 0), (n, m)).copy_from(&g.coeff(k));
    }
    let sol = lstsq(&sys, &rhs, 1e-13);
    for k in 1..=horizon {
        x[k] = sol.rows(n * (k - 1), n).into_owned();
    }
}

fn left_resolvent_residual(a: &Mat, x: &Fir, g: &Fir) -> f64 {
    let last = (x.horizon() + 1).max(g.horizon());
    (0..=last).map(|k| max_abs(&(x.coeff(k + 1) - a * x.coeff(k) - g.coeff(k)))).fold(max_abs(&x.coeff(0)), f64::max)
}

/// Strictly proper `X` with `X (zI - A) = G`; see [`solve_left_resolvent`].
pub fn solve_right_resolvent(a: &Mat, g: &Fir, horizon: usize) -> Result<(Fir, f64)> {
    let (xt, r) = solve_left_resolvent(&a.transpose(), &g.transpose(), horizon)?;
    Ok((xt.transpose(), r))
}

/// `X (zI - A)` for strictly proper `X`: coefficients `X_{k+1} - X_k A`.
pub fn times_right_shift(x: &Fir, a: &Mat) -> Result<Fir> {
    x.advance()?.sub(&x.right_mul(a)?)
}

/// `(zI - A) X` for strictly proper `X`.
pub fn times_left_shift(a: &Mat, x: &Fir) -> Result<Fir> {
    x.advance()?.sub(&x.left_mul(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_plant(a: f64) -> Result<StateSpacePlant> {
        StateSpacePlant::new(PlantBlocks::new(s(a), s(1.0), s(1.0), s(1.0), s(1.0)))
    }

    #[test]
    fn markov_examples() {
        let sys = StateSpace::new(s(0.0), s(1.0), s(1.0), s(0.0)).unwrap();
        let c: Vec<f64> = markov_expand(&sys, 3).coeffs().iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(c, vec![0.0, 1.0, 0.0, 0.0]);
        let sys = StateSpace::new(s(0.5), s(1.0), s(1.0), s(0.0)).unwrap();
        let c: Vec<f64> = markov_expand(&sys, 3).coeffs().iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(c, vec![0.0, 1.0, 0.5, 0.25]);
        let sys = StateSpace::new(s(0.5), s(1.0), s(1.0), s(2.0)).unwrap();
        let c: Vec<f64> = markov_expand(&sys, 1).coeffs().iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(c, vec![2.0, 1.0]);
    }

    #[test]
    fn stability_examples() {
        assert_eq!(is_stable(&s(0.5)), (true, 0.5));
        let (st, rho) = is_stable(&s(1.1));
        assert!(!st && (rho - 1.1).abs() < 1e-15);
        let shift = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(is_stable(&shift).0);
    }

    #[test]
    fn constructor_checks() {
        assert!(scalar_plant(1.1).is_ok());
        // Unstable mode invisible to the input.
        let a = Mat::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b2 = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let blocks = PlantBlocks::new(a.clone(), b2.clone(), b2.clone(), Mat::identity(2, 2), Mat::identity(2, 2));
        assert_eq!(StateSpacePlant::new(blocks), Err(Error::NotStabilizable));
        let blocks =
            PlantBlocks::new(a.clone(), Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2), b2.transpose());
        assert_eq!(StateSpacePlant::new(blocks), Err(Error::NotDetectable));
        // Same structure with the hidden mode stable is fine.
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.5]);
        let blocks = PlantBlocks::new(a, b2.clone(), b2.clone(), Mat::identity(2, 2), Mat::identity(2, 2));
        assert!(StateSpacePlant::new(blocks).is_ok());
        let bad = PlantBlocks::new(s(1.0), s(1.0), Mat::zeros(2, 1), s(1.0), s(1.0));
        assert!(matches!(StateSpacePlant::new(bad), Err(Error::Dimension(_))));
    }

    #[test]
    fn gramian_h2_matches_impulse_response() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.1]);
        let sys =
            StateSpace::new(a, Mat::from_row_slice(2, 1, &[1.0, -1.0]), Mat::from_row_slice(1, 2, &[0.7, 2.0]), s(0.4))
                .unwrap();
        let fir = markov_expand(&sys, 200);
        assert!((h2_norm_ss(&sys).unwrap() - fir.h2_norm()).abs() < 1e-13);
        // 1 / (z - 0.5): sum 0.25^k = 4/3.
        let sys = StateSpace::new(s(0.5), s(1.0), s(1.0), s(0.0)).unwrap();
        assert!((h2_norm_ss(&sys).unwrap().powi(2) - 4.0 / 3.0).abs() < 1e-14);
        assert!(h2_norm_ss(&StateSpace::new(s(1.5), s(1.0), s(1.0), s(0.0)).unwrap()).is_err());
    }

    #[test]
    fn resolvent_stable_matches_series() {
        let a = s(0.5);
        let (x, r) = solve_left_resolvent(&a, &Fir::scalar(&[1.0]), 40).unwrap();
        assert!((x.coeff(3)[(0, 0)] - 0.25).abs() < 1e-15);
        assert!(r < 1e-11);
    }

    #[test]
    fn resolvent_unstable_fir_exact() {
        // (z - 2)^-1 (z - 2) / z = 1/z.
        let a = s(2.0);
        let g = Fir::scalar(&[1.0, -2.0]);
        let (x, r) = solve_left_resolvent(&a, &g, 6).unwrap();
        assert!(r < 1e-13);
        assert!((x.coeff(1)[(0, 0)] - 1.0).abs() < 1e-13);
        assert!(x.coeffs()[2..].iter().all(|c| c[(0, 0)].abs() < 1e-13));
        let (y, _) = solve_right_resolvent(&a, &g, 6).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-13);
    }

    #[test]
    fn shift_products() {
        let a = s(0.5);
        let x = Fir::scalar(&[0.0, 1.0]);
        let y = times_right_shift(&x, &a).unwrap();
        assert_eq!(y.coeffs().iter().map(|c| c[(0, 0)]).collect::<Vec<_>>(), vec![1.0, -0.5]);
        let y = times_left_shift(&a, &x).unwrap();
        assert_eq!(y.coeffs().iter().map(|c| c[(0, 0)]).collect::<Vec<_>>(), vec![1.0, -0.5]);
    }
}
