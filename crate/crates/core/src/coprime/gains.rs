use crate::error::{Error, Result};
use crate::linalg::{max_abs, orth, LuInverse, Mat, RANK_TOL};
use crate::lti::{is_stable, StateSpacePlant};

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Both closed-loop matrices nilpotent.
    Deadbeat,
    /// Identity-weighted Riccati gains.
    Riccati,
}

/// `F` with `A + B2 F` Schur and `L` with `A + L C2` Schur.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizingGains {
    pub f: Mat,
    pub l: Mat,
    pub mode: GainMode,
}

impl StabilizingGains {
    /// Checks shapes and Schur stability of both closed-loop matrices.
    pub fn validate(&self, p: &StateSpacePlant) -> Result<()> {
        if self.f.shape() != (p.nu(), p.n()) || self.l.shape() != (p.n(), p.ny()) {
            return Err(Error::Dimension(format!(
                "gains F {:?}, L {:?} do not fit the plant",
                self.f.shape(),
                self.l.shape()
            )));
        }
        let (fs, rf) = is_stable(&(p.a() + p.b2() * &self.f));
        let (ls, rl) = is_stable(&(p.a() + &self.l * p.c2()));
        if !fs || !ls {
            return Err(Error::Precondition(format!(
                "gains are not stabilizing (rho(A+B2F) = {rf:.3}, rho(A+LC2) = {rl:.3})"
            )));
        }
        Ok(())
    }
}

pub(crate) fn is_nilpotent(m: &Mat) -> bool {
    let n = m.nrows();
    let scale = (1.0 + max_abs(m)).powi(n as i32);
    let mut p = Mat::identity(n, n);
    for _ in 0..n {
        p = m * p;
    }
    max_abs(&p) <= 1e-9 * scale
}

/// Single-input pole placement at the origin restricted to the reachable
/// subspace of `(a, b)`; returns the row gain `f` (zero when nothing moves).
fn place_single_input(a: &Mat, b: &Mat) -> Mat {
    let n = a.nrows();
    let mut krylov = Mat::zeros(n, n);
    let mut v = b.clone();
    for k in 0..n {
        krylov.set_column(k, &v.column(0));
        v = a * v;
    }
    let vc = orth(&krylov, RANK_TOL);
    let nc = vc.ncols();
    if nc == 0 {
        return Mat::zeros(1, n);
    }
    let ac = vc.transpose() * a * &vc;
    let bc = vc.transpose() * b;
    let mut ctrb = Mat::zeros(nc, nc);
    let mut v = bc.clone();
    let mut ac_pow = Mat::identity(nc, nc);
    for k in 0..nc {
        ctrb.set_column(k, &v.column(0));
        v = &ac * v;
        ac_pow = &ac * ac_pow;
    }
    // Ackermann with target polynomial lambda^nc.
    let Some(ctrb_inv) = ctrb.lu_inverse() else {
        return Mat::zeros(1, n);
    };
    let last_row = ctrb_inv.row(nc - 1).into_owned();
    let fc = -(last_row * ac_pow);
    Mat::from_row_slice(1, n, (fc * vc.transpose()).as_slice())
}

/// `F` making `A + B F` nilpotent, or `None` when some nonzero mode is unreachable.
///
/// Inputs are placed one after another, and the first one takes every mode
/// it reaches. A weakly coupled leading input gives a needlessly large
/// gain, so each input is tried as the leader and the smallest gain wins.
pub fn deadbeat_feedback(a: &Mat, b: &Mat) -> Option<Mat> {
    let m = b.ncols();
    (0..m.max(1))
        .filter_map(|lead| {
            let order: Vec<usize> = (0..m).map(|k| (lead + k) % m).collect();
            deadbeat_in_order(a, b, &order)
        })
        .min_by(|x, y| max_abs(x).total_cmp(&max_abs(y)))
}

fn deadbeat_in_order(a: &Mat, b: &Mat, order: &[usize]) -> Option<Mat> {
    let (n, m) = (a.nrows(), b.ncols());
    let mut f = Mat::zeros(m, n);
    for _pass in 0..=n {
        let acl = a + b * &f;
        if is_nilpotent(&acl) {
            return Some(f);
        }
        for &i in order {
            let acur = a + b * &f;
            let bi = b.columns(i, 1).into_owned();
            let fi = place_single_input(&acur, &bi);
            let mut row = f.row_mut(i);
            row += fi;
        }
    }
    is_nilpotent(&(a + b * &f)).then_some(f)
}

/// Identity-weighted Riccati state-feedback gain. The stabilizing solution
/// of `X = A'XA - A'XB (I + B'XB)^-1 B'XA + I` comes from the doubling
/// iteration
///
/// ```text
/// W = I + G H,  A <- A W^-1 A,  G <- G + A W^-1 G A',  H <- H + A' H W^-1 A
/// ```
///
/// started at `(A, BB', I)`, which converges quadratically to `H = X`.
pub fn riccati_feedback(a: &Mat, b: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let m = b.ncols();
    let eye = Mat::identity(n, n);
    let (mut ak, mut g, mut h) = (a.clone(), b * b.transpose(), eye.clone());
    for _ in 0..RICCATI_MAX_ITER {
        let w = (&eye + &g * &h).lu();
        let w_a = w.solve(&ak).ok_or_else(|| Error::Solver("Riccati doubling step singular".into()))?;
        let w_g = w.solve(&g).ok_or_else(|| Error::Solver("Riccati doubling step singular".into()))?;
        let h_next = &h + ak.transpose() * &h * &w_a;
        let g_next = &g + &ak * w_g * ak.transpose();
        let a_next = &ak * w_a;
        let delta = max_abs(&(&h_next - &h));
        h = (&h_next + h_next.transpose()) * 0.5;
        g = (&g_next + g_next.transpose()) * 0.5;
        ak = a_next;
        if !h.iter().all(|x| x.is_finite()) {
            break;
        }
        if delta <= RICCATI_TOL * max_abs(&h).max(1.0) {
            let btx = b.transpose() * &h;
            let s = Mat::identity(m, m) + &btx * b;
            let s_inv = s.lu_inverse().ok_or_else(|| Error::Solver("Riccati gain matrix singular".into()))?;
            let f = -(s_inv * btx * a);
            return if is_stable(&(a + b * &f)).0 { Ok(f) } else { Err(Error::NotStabilizable) };
        }
    }
    Err(Error::RiccatiDiverged(RICCATI_MAX_ITER))
}

/// Deadbeat gains when the plant allows them, Riccati gains otherwise.
pub fn deadbeat_gains(p: &StateSpacePlant) -> Result<StabilizingGains> {
    let (a, b2, c2) = (p.a(), p.b2(), p.c2());
    let f = deadbeat_feedback(a, b2);
    let l = deadbeat_feedback(&a.transpose(), &c2.transpose()).map(|lt| lt.transpose());
    match (f, l) {
        (Some(f), Some(l)) => Ok(StabilizingGains { f, l, mode: GainMode::Deadbeat }),
        _ => riccati_gains(p),
    }
}

pub fn riccati_gains(p: &StateSpacePlant) -> Result<StabilizingGains> {
    let f = riccati_feedback(p.a(), p.b2())?;
    let l = riccati_feedback(&p.a().transpose(), &p.c2().transpose())
        .map_err(|e| match e {
            Error::NotStabilizable => Error::NotDetectable,
            other => other,
        })?
        .transpose();
    Ok(StabilizingGains { f, l, mode: GainMode::Riccati })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;
    use crate::lti::PlantBlocks;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn scalar_deadbeat() {
        let p = StateSpacePlant::new(PlantBlocks::new(s(0.5), s(1.0), s(1.0), s(1.0), s(1.0))).unwrap();
        let g = deadbeat_gains(&p).unwrap();
        assert_eq!(g.mode, GainMode::Deadbeat);
        assert!((g.f[(0, 0)] + 0.5).abs() < 1e-14);
        assert!((g.l[(0, 0)] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn identity_plant_needs_every_input() {
        let i2 = Mat::identity(2, 2);
        let p =
            StateSpacePlant::new(PlantBlocks::new(i2.clone(), i2.clone(), i2.clone(), i2.clone(), i2.clone())).unwrap();
        let g = deadbeat_gains(&p).unwrap();
        assert!(max_abs(&(&g.f + &i2)) < 1e-12);
        assert!(max_abs(&(&g.l + &i2)) < 1e-12);
    }

    #[test]
    fn already_nilpotent() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b2 = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let f = deadbeat_feedback(&a, &b2).unwrap();
        assert_eq!(f, Mat::zeros(1, 2));
        assert!(spectral_radius(&(a + b2 * f)) < 1e-12);
    }

    #[test]
    fn stable_uncontrollable_mode_falls_back() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.2]);
        let b2 = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let i2 = Mat::identity(2, 2);
        let p = StateSpacePlant::new(PlantBlocks::new(a, i2.clone(), b2, i2.clone(), i2)).unwrap();
        let g = deadbeat_gains(&p).unwrap();
        assert_eq!(g.mode, GainMode::Riccati);
        g.validate(&p).unwrap();
    }
}
