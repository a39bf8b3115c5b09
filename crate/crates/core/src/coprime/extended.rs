//! Markov parameters of `(A + G H, B, C, D)` in double-double arithmetic.
//!
//! Deadbeat gains of weakly controllable or observable plants are large,
//! and the powers of the closed-loop matrix then lose most of their digits
//! in plain `f64`. The factors only need to be consistent with the rounded
//! gains, so the closed-loop matrix and its powers are formed with twice
//! the working precision and each coefficient is rounded once at the end.

use twofloat::TwoFloat;

use crate::linalg::Mat;
use crate::lti::Fir;

struct Wide {
    rows: usize,
    cols: usize,
    data: Vec<TwoFloat>,
}

impl Wide {
    fn from_mat(m: &Mat) -> Self {
        let (rows, cols) = m.shape();
        let data = (0..rows * cols).map(|k| TwoFloat::from(m[(k / cols, k % cols)])).collect();
        Self { rows, cols, data }
    }

    fn at(&self, i: usize, j: usize) -> TwoFloat {
        self.data[i * self.cols + j]
    }

    fn mul(&self, other: &Wide) -> Wide {
        let mut data = vec![TwoFloat::from(0.0); self.rows * other.cols];
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = TwoFloat::from(0.0);
                for k in 0..self.cols {
                    acc += self.at(i, k) * other.at(k, j);
                }
                data[i * other.cols + j] = acc;
            }
        }
        Wide { rows: self.rows, cols: other.cols, data }
    }

    fn add(mut self, other: &Wide) -> Wide {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y;
        }
        self
    }

    fn round(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.at(i, j).hi())
    }
}

/// `[D, C B, C Acl B, ..., C Acl^(horizon-1) B]` with `Acl = A + G H`.
pub(crate) fn closed_loop_markov(a: &Mat, g: &Mat, h: &Mat, b: &Mat, c: &Mat, d: &Mat, horizon: usize) -> Fir {
    let acl = Wide::from_mat(a).add(&Wide::from_mat(g).mul(&Wide::from_mat(h)));
    let cw = Wide::from_mat(c);
    let mut coeffs = Vec::with_capacity(horizon + 1);
    coeffs.push(d.clone());
    let mut ak_b = Wide::from_mat(b);
    for _ in 1..=horizon {
        coeffs.push(cw.mul(&ak_b).round());
        ak_b = acl.mul(&ak_b);
    }
    Fir::new(coeffs).expect("all Markov parameters share the shape of D")
}
