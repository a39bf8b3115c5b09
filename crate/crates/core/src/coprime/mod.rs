//! Doubly-coprime factorizations of `P22` over FIR transfer matrices.
//!
//! The general construction is the observer-based one: with `AF = A + B2 F`
//! and `AL = A + L C2`,
//!
//! ```text
//! Mr = [AF | B2 ; F | I]    Vr = [AF | -L ; F | 0]
//! Nr = [AF | B2 ; C2 | 0]   Ur = [AF | -L ; C2 | I]
//! Ul = [AL | -B2 ; F | I]   Vl = [AL | -L ; F | 0]
//! Nl = [AL | B2 ; C2 | 0]   Ml = [AL | L ; C2 | I]
//! ```
//!
//! Deadbeat gains make every factor a polynomial of degree at most `n`.

mod extended;
mod gains;

use extended::closed_loop_markov;
pub use gains::{deadbeat_feedback, deadbeat_gains, riccati_feedback, riccati_gains, GainMode, StabilizingGains};

use crate::error::{dim, Error, Result};
use crate::linalg::{cmax_abs, max_abs, CMat, LuInverse, Mat};
use crate::lti::{is_stable, markov_expand, series_horizon, unit_circle_points, Fir, StateSpacePlant};

/// Verification tolerance shared by the frequency-sampled checks.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DoublyCoprimeFactors {
    pub ul: Fir,
    pub vl: Fir,
    pub nl: Fir,
    pub ml: Fir,
    pub ur: Fir,
    pub vr: Fir,
    pub nr: Fir,
    pub mr: Fir,
}

impl DoublyCoprimeFactors {
    /// Checks the shapes against `nu` inputs and `ny` measurements.
    pub fn check_shapes(&self, nu: usize, ny: usize) -> Result<()> {
        let want = [
            ("Ul", &self.ul, (nu, nu)),
            ("Vl", &self.vl, (nu, ny)),
            ("Nl", &self.nl, (ny, nu)),
            ("Ml", &self.ml, (ny, ny)),
            ("Ur", &self.ur, (ny, ny)),
            ("Vr", &self.vr, (nu, ny)),
            ("Nr", &self.nr, (ny, nu)),
            ("Mr", &self.mr, (nu, nu)),
        ];
        for (name, f, shape) in want {
            if f.shape() != shape {
                return Err(dim(format!("{name} is {:?}, expected {shape:?}", f.shape())));
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &Fir); 8] {
        [
            ("Ul", &self.ul),
            ("Vl", &self.vl),
            ("Nl", &self.nl),
            ("Ml", &self.ml),
            ("Ur", &self.ur),
            ("Vr", &self.vr),
            ("Nr", &self.nr),
            ("Mr", &self.mr),
        ]
    }

    /// Largest horizon among the eight factors.
    pub fn horizon(&self) -> usize {
        self.named().iter().map(|(_, f)| f.horizon()).max().unwrap_or(0)
    }

    /// Another factorization of the same plant obtained by the constant
    /// change of Youla coordinates `Q -> Q + X`:
    /// `Vr - Mr X`, `Ur - Nr X`, `Ul - X Nl`, `Vl - X Ml`.
    pub fn shifted(&self, x: &Mat) -> Result<Self> {
        let xf = Fir::constant(x.clone());
        Ok(Self {
            ul: self.ul.sub(&xf.mul(&self.nl)?)?,
            vl: self.vl.sub(&xf.mul(&self.ml)?)?,
            nl: self.nl.clone(),
            ml: self.ml.clone(),
            ur: self.ur.sub(&self.nr.mul(&xf)?)?,
            vr: self.vr.sub(&self.mr.mul(&xf)?)?,
            nr: self.nr.clone(),
            mr: self.mr.clone(),
        })
    }
}

/// Observer-based factors expanded through `horizon`; fails when the
/// Bezout check does not pass at 64 frequencies.
pub fn doubly_coprime_general(
    p: &StateSpacePlant,
    gains: &StabilizingGains,
    horizon: usize,
) -> Result<DoublyCoprimeFactors> {
    gains.validate(p)?;
    let (b2, c2, f, l) = (p.b2(), p.c2(), &gains.f, &gains.l);
    let (nu, ny) = (p.nu(), p.ny());
    let a = p.a();
    let iu = Mat::identity(nu, nu);
    let iy = Mat::identity(ny, ny);
    let right = |b: Mat, c: &Mat, d: Mat| closed_loop_markov(a, b2, f, &b, c, &d, horizon);
    let left = |b: Mat, c: &Mat, d: Mat| closed_loop_markov(a, l, c2, &b, c, &d, horizon);
    let factors = DoublyCoprimeFactors {
        mr: right(b2.clone(), f, iu.clone()),
        nr: right(b2.clone(), c2, Mat::zeros(ny, nu)),
        vr: right(-l, f, Mat::zeros(nu, ny)),
        ur: right(-l, c2, iy.clone()),
        ul: left(-b2, f, iu),
        vl: left(-l, f, Mat::zeros(nu, ny)),
        nl: left(b2.clone(), c2, Mat::zeros(ny, nu)),
        ml: left(l.clone(), c2, iy),
    };
    let report = verify_bezout(&factors, p, 64)?;
    if !report.pass {
        return Err(Error::Residual {
            what: "Bezout identity of observer-based factors".into(),
            residual: report.max_residual,
            tol: VERIFY_TOL,
        });
    }
    Ok(factors)
}

/// `Ul = Ur = Ml = Mr = I`, `Vl = Vr = 0`, `Nl = Nr = P22` for a stable plant.
pub fn doubly_coprime_stable(p: &StateSpacePlant, horizon: usize) -> Result<DoublyCoprimeFactors> {
    let (stable, rho) = is_stable(p.a());
    if !stable {
        return Err(Error::Precondition(format!(
            "trivial factorization needs a stable plant (spectral radius {rho:.4})"
        )));
    }
    let (nu, ny) = (p.nu(), p.ny());
    let p22 = markov_expand(&p.p22(), horizon);
    Ok(DoublyCoprimeFactors {
        ul: Fir::identity(nu),
        vl: Fir::zeros(nu, ny, 0),
        nl: p22.clone(),
        ml: Fir::identity(ny),
        ur: Fir::identity(ny),
        vr: Fir::zeros(nu, ny, 0),
        nr: p22,
        mr: Fir::identity(nu),
    })
}

/// `Ul = Ur = I`, `Vl = Vr = -A`, `Nl = Nr = I/z`, `Ml = Mr = I - A/z`
/// for a plant with `B2 = C2 = I`.
pub fn doubly_coprime_state_feedback(p: &StateSpacePlant) -> Result<DoublyCoprimeFactors> {
    let n = p.n();
    let eye = Mat::identity(n, n);
    if p.b2().shape() != (n, n)
        || p.c2().shape() != (n, n)
        || max_abs(&(p.b2() - &eye)) > 0.0
        || max_abs(&(p.c2() - &eye)) > 0.0
    {
        return Err(Error::Precondition("state-feedback factorization needs B2 = I and C2 = I".into()));
    }
    let a = p.a();
    let id = Fir::identity(n);
    let minus_a = Fir::constant(-a);
    let shift = Fir::delayed(eye.clone(), 1);
    let m = Fir::new(vec![eye, -a])?;
    Ok(DoublyCoprimeFactors {
        ul: id.clone(),
        vl: minus_a.clone(),
        nl: shift.clone(),
        ml: m.clone(),
        ur: id,
        vr: minus_a,
        nr: shift,
        mr: m,
    })
}

/// Factorization strategies exposed to callers that pick one by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMode {
    Deadbeat,
    Riccati,
    Stable,
    StateFeedback,
}

/// Builds factors in the requested mode. `horizon = None` picks the
/// smallest horizon that makes the truncated factors pass verification.
pub fn factorize(p: &StateSpacePlant, mode: FactorMode, horizon: Option<usize>) -> Result<DoublyCoprimeFactors> {
    match mode {
        FactorMode::StateFeedback => doubly_coprime_state_feedback(p),
        FactorMode::Stable => {
            let h = horizon.unwrap_or_else(|| series_horizon(p.a(), 4 * p.n()));
            doubly_coprime_stable(p, h)
        }
        FactorMode::Deadbeat | FactorMode::Riccati => {
            let gains = if mode == FactorMode::Deadbeat { deadbeat_gains(p)? } else { riccati_gains(p)? };
            let h = horizon.unwrap_or_else(|| {
                let af = p.a() + p.b2() * &gains.f;
                let al = p.a() + &gains.l * p.c2();
                let h = series_horizon(&af, p.n()).max(series_horizon(&al, p.n()));
                match gains.mode {
                    // Computed nilpotent matrices leave an `(A + B2 F)^n` of
                    // round-off size; a few more terms square it away.
                    GainMode::Deadbeat => h.min(4 * p.n()).max(1),
                    GainMode::Riccati => h,
                }
            });
            doubly_coprime_general(p, &gains, h)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BezoutReport {
    /// Largest entry of the block Bezout product minus the identity.
    pub bezout_residual: f64,
    /// Largest entry of `Nr Mr^-1 - P22` and `Ml^-1 Nl - P22`.
    pub factor_residual: f64,
    pub max_residual: f64,
    /// Frequencies where `zI - A`, `Mr` or `Ml` was singular.
    pub skipped: usize,
    pub npoints: usize,
    pub pass: bool,
}

impl BezoutReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual < tol
    }
}

fn cblock2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + c.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out.view_mut((a.nrows(), 0), c.shape()).copy_from(c);
    out.view_mut((a.nrows(), a.ncols()), d.shape()).copy_from(d);
    out
}

/// Checks the Bezout identity and `P22 = Nr Mr^-1 = Ml^-1 Nl` at `npoints`
/// equispaced unit-circle frequencies.
pub fn verify_bezout(f: &DoublyCoprimeFactors, p: &StateSpacePlant, npoints: usize) -> Result<BezoutReport> {
    if npoints == 0 {
        return Err(Error::Precondition("npoints must be at least 1".into()));
    }
    f.check_shapes(p.nu(), p.ny())?;
    let p22 = p.p22();
    let n = p.nu() + p.ny();
    let mut bezout_residual: f64 = 0.0;
    let mut factor_residual: f64 = 0.0;
    let mut skipped = 0;
    for z in unit_circle_points(npoints) {
        let e = |g: &Fir| g.eval_unchecked(z);
        let (ul, vl, nl, ml) = (e(&f.ul), e(&f.vl), e(&f.nl), e(&f.ml));
        let (ur, vr, nr, mr) = (e(&f.ur), e(&f.vr), e(&f.nr), e(&f.mr));
        let left = cblock2(&ul, &(-&vl), &(-&nl), &ml);
        let right = cblock2(&mr, &vr, &nr, &ur);
        let prod = left * right - CMat::identity(n, n);
        bezout_residual = bezout_residual.max(cmax_abs(&prod));
        let (Some(p22z), Some(mr_inv), Some(ml_inv)) = (p22.eval(z), mr.clone().lu_inverse(), ml.clone().lu_inverse())
        else {
            skipped += 1;
            continue;
        };
        factor_residual = factor_residual.max(cmax_abs(&(&nr * mr_inv - &p22z))).max(cmax_abs(&(ml_inv * &nl - &p22z)));
    }
    let max_residual = bezout_residual.max(factor_residual);
    Ok(BezoutReport {
        bezout_residual,
        factor_residual,
        max_residual,
        skipped,
        npoints,
        pass: max_residual < VERIFY_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::PlantBlocks;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalar_plant(a: f64) -> StateSpacePlant {
        StateSpacePlant::new(PlantBlocks::new(s(a), s(1.0), s(1.0), s(1.0), s(1.0))).unwrap()
    }

    fn vals(f: &Fir) -> Vec<f64> {
        f.coeffs().iter().map(|c| c[(0, 0)]).collect()
    }

    #[test]
    fn scalar_deadbeat_factors() {
        let p = scalar_plant(0.5);
        let g = deadbeat_gains(&p).unwrap();
        let f = doubly_coprime_general(&p, &g, 1).unwrap();
        assert_eq!(vals(&f.mr), vec![1.0, -0.5]);
        assert_eq!(vals(&f.nr), vec![0.0, 1.0]);
        let r = verify_bezout(&f, &p, 16).unwrap();
        assert!(r.max_residual < 1e-12, "{r:?}");
    }

    #[test]
    fn zero_gains_on_stable_plant_give_trivial_form() {
        let p = scalar_plant(0.5);
        let g = StabilizingGains { f: s(0.0), l: s(0.0), mode: GainMode::Riccati };
        let f = doubly_coprime_general(&p, &g, 60).unwrap();
        assert_eq!(vals(&f.mr)[0], 1.0);
        assert!(vals(&f.mr)[1..].iter().all(|&x| x == 0.0));
        let t = doubly_coprime_stable(&p, 60).unwrap();
        assert!(f.nr.max_abs_diff(&t.nr).unwrap() == 0.0);
    }

    #[test]
    fn trivial_factorization() {
        let p = scalar_plant(0.5);
        let f = doubly_coprime_stable(&p, 60).unwrap();
        assert_eq!(vals(&f.nr)[..4], [0.0, 1.0, 0.5, 0.25]);
        assert!(verify_bezout(&f, &p, 16).unwrap().max_residual < 1e-12);
        let p0 = scalar_plant(0.0);
        assert_eq!(vals(&doubly_coprime_stable(&p0, 1).unwrap().nr), vec![0.0, 1.0]);
        assert!(doubly_coprime_stable(&scalar_plant(1.1), 10).is_err());
    }

    #[test]
    fn state_feedback_factors() {
        let p = scalar_plant(0.5);
        let f = doubly_coprime_state_feedback(&p).unwrap();
        assert_eq!(vals(&f.mr), vec![1.0, -0.5]);
        assert_eq!(vals(&f.nr), vec![0.0, 1.0]);
        assert_eq!(vals(&f.vr), vec![-0.5]);
        assert_eq!(vals(&f.ur), vec![1.0]);
        assert!(verify_bezout(&f, &p, 16).unwrap().pass);
        let two = StateSpacePlant::new(PlantBlocks::new(s(0.5), s(1.0), s(2.0), s(1.0), s(1.0))).unwrap();
        assert!(doubly_coprime_state_feedback(&two).is_err());
    }

    #[test]
    fn perturbed_factor_fails() {
        let p = scalar_plant(0.5);
        let mut f = doubly_coprime_state_feedback(&p).unwrap();
        f.vr = f.vr.add(&Fir::scalar(&[0.1])).unwrap();
        assert!(!verify_bezout(&f, &p, 16).unwrap().pass);
    }
}
