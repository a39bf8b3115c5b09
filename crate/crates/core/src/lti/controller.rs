use super::fir::Fir;
use super::plant::{is_stable, StateSpace, StateSpacePlant, STAB_EPS};
use crate::error::{dim, Error, Result};
use crate::linalg::{block2, minimal_poles, LuInverse, Mat};

/// Trailing FIR coefficients below this are dropped before realization.
const REALIZATION_TRIM: f64 = 1e-14;

/// Dynamic output feedback `xi+ = Ak xi + Bk y`, `u = Ck xi + Dk y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub ak: Mat,
    pub bk: Mat,
    pub ck: Mat,
    pub dk: Mat,
}

impl Controller {
    pub fn new(ak: Mat, bk: Mat, ck: Mat, dk: Mat) -> Result<Self> {
        StateSpace::new(ak.clone(), bk.clone(), ck.clone(), dk.clone())?;
        Ok(Self { ak, bk, ck, dk })
    }

    pub fn static_gain(dk: Mat) -> Self {
        let (nu, ny) = dk.shape();
        Self { ak: Mat::zeros(0, 0), bk: Mat::zeros(0, ny), ck: Mat::zeros(nu, 0), dk }
    }

    pub fn order(&self) -> usize {
        self.ak.nrows()
    }

    pub fn nu(&self) -> usize {
        self.dk.nrows()
    }

    pub fn ny(&self) -> usize {
        self.dk.ncols()
    }

    /// Shift-register realization of `K_0 + K_1 z^-1 + ... + K_T z^-T`; the
    /// state holds the last `T` measurements.
    pub fn from_fir(k: &Fir) -> Self {
        let k = k.trim(REALIZATION_TRIM);
        let (nu, ny) = k.shape();
        let t = k.horizon();
        let nk = t * ny;
        let mut ak = Mat::zeros(nk, nk);
        for i in 1..t {
            ak.view_mut((i * ny, (i - 1) * ny), (ny, ny)).copy_from(&Mat::identity(ny, ny));
        }
        let mut bk = Mat::zeros(nk, ny);
        let mut ck = Mat::zeros(nu, nk);
        if t > 0 {
            bk.view_mut((0, 0), (ny, ny)).copy_from(&Mat::identity(ny, ny));
            for i in 1..=t {
                ck.view_mut((0, (i - 1) * ny), (nu, ny)).copy_from(&k.coeff(i));
            }
        }
        Self { ak, bk, ck, dk: k.coeff(0) }
    }

    /// Realization of `num * den^-1` for FIR numerator and denominator with
    /// invertible `den_0`; the state holds past values of `v = den^-1 y`.
    pub fn from_right_fraction(num: &Fir, den: &Fir) -> Result<Self> {
        let (num, den) = (num.trim(REALIZATION_TRIM), den.trim(REALIZATION_TRIM));
        let ny = den.rows();
        if den.cols() != ny || num.cols() != ny {
            return Err(dim("right fraction: denominator must be square and match the numerator"));
        }
        let nu = num.rows();
        let g = den.coeff(0).lu_inverse().ok_or(Error::SingularLeading { cond: den.leading_condition_number() })?;
        let t = num.horizon().max(den.horizon());
        let nk = t * ny;
        let n0g = num.coeff(0) * &g;
        let mut ak = Mat::zeros(nk, nk);
        let mut bk = Mat::zeros(nk, ny);
        let mut ck = Mat::zeros(nu, nk);
        if t > 0 {
            bk.view_mut((0, 0), (ny, ny)).copy_from(&g);
        }
        for k in 1..=t {
            let gd = &g * den.coeff(k);
            ak.view_mut((0, (k - 1) * ny), (ny, ny)).copy_from(&(-&gd));
            ck.view_mut((0, (k - 1) * ny), (nu, ny)).copy_from(&(num.coeff(k) - &num.coeff(0) * &gd));
            if k < t {
                ak.view_mut((k * ny, (k - 1) * ny), (ny, ny)).copy_from(&Mat::identity(ny, ny));
            }
        }
        Ok(Self { ak, bk, ck, dk: n0g })
    }

    /// Realization of `L - M R^-1 N` driven by the closed-loop responses,
    /// with `beta = (zR)^-1 (zN) y` as the internal signal.
    pub fn from_responses(r: &Fir, m: &Fir, n: &Fir, l: &Fir) -> Result<Self> {
        let (r, m, n, l) =
            (r.trim(REALIZATION_TRIM), m.trim(REALIZATION_TRIM), n.trim(REALIZATION_TRIM), l.trim(REALIZATION_TRIM));
        let nx = r.rows();
        let (nu, ny) = l.shape();
        if r.cols() != nx || m.shape() != (nu, nx) || n.shape() != (nx, ny) {
            return Err(dim("response realization: inconsistent block shapes"));
        }
        let r1inv = r
            .coeff(1)
            .lu_inverse()
            .ok_or(Error::SingularLeading { cond: crate::linalg::condition_number(&r.coeff(1)) })?;
        let t = [r.horizon(), m.horizon(), n.horizon(), l.horizon()].into_iter().max().unwrap_or(0).max(1);
        // State: [y(t-1) .. y(t-T), beta(t-1) .. beta(t-T)].
        let yoff = 0;
        let boff = t * ny;
        let nk = t * (ny + nx);
        // beta = r1inv (N_1 y + sum N_{k+1} ytap_k - sum R_{k+1} btap_k)
        let mut beta_state = Mat::zeros(nx, nk);
        for k in 1..t {
            beta_state.view_mut((0, yoff + (k - 1) * ny), (nx, ny)).copy_from(&(&r1inv * n.coeff(k + 1)));
            beta_state.view_mut((0, boff + (k - 1) * nx), (nx, nx)).copy_from(&(-&r1inv * r.coeff(k + 1)));
        }
        let beta_y = &r1inv * n.coeff(1);
        let mut ak = Mat::zeros(nk, nk);
        let mut bk = Mat::zeros(nk, ny);
        bk.view_mut((yoff, 0), (ny, ny)).copy_from(&Mat::identity(ny, ny));
        for k in 1..t {
            ak.view_mut((yoff + k * ny, yoff + (k - 1) * ny), (ny, ny)).copy_from(&Mat::identity(ny, ny));
            ak.view_mut((boff + k * nx, boff + (k - 1) * nx), (nx, nx)).copy_from(&Mat::identity(nx, nx));
        }
        ak.view_mut((boff, 0), (nx, nk)).copy_from(&beta_state);
        bk.view_mut((boff, 0), (nx, ny)).copy_from(&beta_y);
        let mut ck = Mat::zeros(nu, nk);
        for k in 1..=t {
            ck.view_mut((0, yoff + (k - 1) * ny), (nu, ny)).copy_from(&l.coeff(k));
            ck.view_mut((0, boff + (k - 1) * nx), (nu, nx)).copy_from(&(-m.coeff(k)));
        }
        Ok(Self { ak, bk, ck, dk: l.coeff(0) })
    }

    pub fn as_state_space(&self) -> StateSpace {
        StateSpace { a: self.ak.clone(), b: self.bk.clone(), c: self.ck.clone(), d: self.dk.clone() }
    }
}

fn check_dims(p: &StateSpacePlant, k: &Controller) -> Result<()> {
    if k.nu() != p.nu() || k.ny() != p.ny() {
        return Err(dim(format!("controller is {}x{}, plant needs {}x{}", k.nu(), k.ny(), p.nu(), p.ny())));
    }
    Ok(())
}

/// Realization of `P11 + P12 K (I - P22 K)^-1 P21` with state `(x, xi)`.
pub fn lft_closed_loop(p: &StateSpacePlant, k: &Controller) -> Result<StateSpace> {
    check_dims(p, k)?;
    let (a, b1, b2, c1, c2) = (p.a(), p.b1(), p.b2(), p.c1(), p.c2());
    let acl = block2(&(a + b2 * &k.dk * c2), &(b2 * &k.ck), &(&k.bk * c2), &k.ak);
    let bcl = crate::linalg::vstack(&[&(b1 + b2 * &k.dk * p.d21()), &(&k.bk * p.d21())]);
    let ccl = crate::linalg::hstack(&[&(c1 + p.d12() * &k.dk * c2), &(p.d12() * &k.ck)]);
    let dcl = p.d11() + p.d12() * &k.dk * p.d21();
    StateSpace::new(acl, bcl, ccl, dcl)
}

/// Closed-loop Schur stability; also returns the closed-loop spectral radius.
pub fn internal_stability(p: &StateSpacePlant, k: &Controller) -> Result<(bool, f64)> {
    Ok(is_stable(&lft_closed_loop(p, k)?.a))
}

/// The map `(dy, du) -> (y, u)`, i.e. `[[Y, W], [U, Z]]`, realized on the
/// closed-loop state.
pub fn four_block_system(p: &StateSpacePlant, k: &Controller) -> Result<StateSpace> {
    let acl = lft_closed_loop(p, k)?.a;
    let (b2, c2) = (p.b2(), p.c2());
    let (nu, ny, nk) = (p.nu(), p.ny(), k.order());
    let b = block2(&(b2 * &k.dk), b2, &k.bk, &Mat::zeros(nk, nu));
    let c = block2(c2, &Mat::zeros(ny, nk), &(&k.dk * c2), &k.ck);
    let d = block2(&Mat::identity(ny, ny), &Mat::zeros(ny, nu), &k.dk, &Mat::identity(nu, nu));
    StateSpace::new(acl, b, c, d)
}

/// Stability judged only from the poles of the four closed-loop maps.
pub fn four_block_stable(p: &StateSpacePlant, k: &Controller) -> Result<bool> {
    let sys = four_block_system(p, k)?;
    Ok(minimal_poles(&sys.a, &sys.b, &sys.c).iter().all(|l| l.norm() < 1.0 - STAB_EPS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::plant::{markov_expand, PlantBlocks};

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_plant(a: f64) -> StateSpacePlant {
        StateSpacePlant::new(PlantBlocks::new(s(a), s(1.0), s(1.0), s(1.0), s(1.0))).unwrap()
    }

    #[test]
    fn open_loop_and_deadbeat() {
        let p = scalar_plant(0.5);
        let cl = lft_closed_loop(&p, &Controller::static_gain(s(0.0))).unwrap();
        assert_eq!(cl.a, s(0.5));
        let cl = lft_closed_loop(&p, &Controller::static_gain(s(-0.5))).unwrap();
        assert_eq!(cl.a, s(0.0));
        assert!(internal_stability(&p, &Controller::static_gain(s(0.0))).unwrap().0);
        assert!(!internal_stability(&scalar_plant(1.1), &Controller::static_gain(s(0.0))).unwrap().0);
    }

    #[test]
    fn fir_realization_reproduces_impulse_response() {
        let k = Fir::scalar(&[0.3, -0.2, 0.1]);
        let c = Controller::from_fir(&k);
        assert_eq!(c.order(), 2);
        let imp = markov_expand(&c.as_state_space(), 4);
        assert!(imp.max_abs_diff(&k).unwrap() < 1e-15);
    }

    #[test]
    fn right_fraction_realization() {
        // (0.5 - 0.1 z^-1) / (1 + 0.4 z^-1)
        let num = Fir::scalar(&[0.5, -0.1]);
        let den = Fir::scalar(&[1.0, 0.4]);
        let c = Controller::from_right_fraction(&num, &den).unwrap();
        let want = num.mul(&den.inverse(12).unwrap()).unwrap().truncate(12).0;
        let got = markov_expand(&c.as_state_space(), 12);
        assert!(got.max_abs_diff(&want).unwrap() < 1e-14);
    }

    #[test]
    fn four_block_matches_eigen_test_on_scalar() {
        for (a, g) in [(0.5, 0.0), (1.1, 0.0), (1.1, -1.0), (2.0, -0.2)] {
            let p = scalar_plant(a);
            let k = Controller::static_gain(s(g));
            assert_eq!(internal_stability(&p, &k).unwrap().0, four_block_stable(&p, &k).unwrap());
        }
    }
}
