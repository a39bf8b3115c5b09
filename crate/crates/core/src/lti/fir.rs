use num_complex::Complex64;

use crate::error::{dim, Error, Result};
use crate::linalg::{condition_number, max_abs, CMat, LuInverse, Mat};

/// Unit-circle tolerance for frequency evaluation.
pub const UNIT_CIRCLE_TOL: f64 = 1e-12;

/// `G(z) = sum_k G_k z^-k` with `k = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fir {
    rows: usize,
    cols: usize,
    coeffs: Vec<Mat>,
}

impl Fir {
    pub fn new(coeffs: Vec<Mat>) -> Result<Self> {
        let first = coeffs.first().ok_or_else(|| dim("an FIR needs at least one coefficient"))?;
        let (rows, cols) = first.shape();
        if coeffs.iter().any(|c| c.shape() != (rows, cols)) {
            return Err(dim("FIR coefficients must share one shape"));
        }
        Ok(Self { rows, cols, coeffs })
    }

    /// Builds from scalar coefficients (1x1 matrices).
    pub fn scalar(values: &[f64]) -> Self {
        let coeffs = if values.is_empty() {
            vec![Mat::zeros(1, 1)]
        } else {
            values.iter().map(|&v| Mat::from_element(1, 1, v)).collect()
        };
        Self { rows: 1, cols: 1, coeffs }
    }

    pub fn zeros(rows: usize, cols: usize, horizon: usize) -> Self {
        Self { rows, cols, coeffs: vec![Mat::zeros(rows, cols); horizon + 1] }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Mat::identity(n, n))
    }

    pub fn constant(m: Mat) -> Self {
        let (rows, cols) = m.shape();
        Self { rows, cols, coeffs: vec![m] }
    }

    /// `m z^-lag`.
    pub fn delayed(m: Mat, lag: usize) -> Self {
        let (rows, cols) = m.shape();
        let mut coeffs = vec![Mat::zeros(rows, cols); lag + 1];
        coeffs[lag] = m;
        Self { rows, cols, coeffs }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn horizon(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Mat] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Mat> {
        self.coeffs
    }

    /// Coefficient `k`, zero past the horizon.
    pub fn coeff(&self, k: usize) -> Mat {
        self.coeffs.get(k).cloned().unwrap_or_else(|| Mat::zeros(self.rows, self.cols))
    }

    pub fn get(&self, k: usize) -> Option<&Mat> {
        self.coeffs.get(k)
    }

    pub fn is_strictly_proper(&self, tol: f64) -> bool {
        max_abs(&self.coeffs[0]) <= tol
    }

    /// Largest entry magnitude over all coefficients.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Largest coefficient-wise difference, padding the shorter operand with zeros.
    pub fn max_abs_diff(&self, other: &Fir) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    fn check_same_shape(&self, other: &Fir, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim(format!("{op}: {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }

    pub fn add(&self, other: &Fir) -> Result<Fir> {
        self.check_same_shape(other, "fir add")?;
        let t = self.horizon().max(other.horizon());
        let coeffs = (0..=t).map(|k| self.coeff(k) + other.coeff(k)).collect();
        Ok(Fir { rows: self.rows, cols: self.cols, coeffs })
    }

    pub fn sub(&self, other: &Fir) -> Result<Fir> {
        self.check_same_shape(other, "fir sub")?;
        let t = self.horizon().max(other.horizon());
        let coeffs = (0..=t).map(|k| self.coeff(k) - other.coeff(k)).collect();
        Ok(Fir { rows: self.rows, cols: self.cols, coeffs })
    }

    pub fn neg(&self) -> Fir {
        self.scale(-1.0)
    }

    pub fn scale(&self, s: f64) -> Fir {
        Fir { rows: self.rows, cols: self.cols, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// Full Cauchy product, horizon `Ta + Tb`.
    pub fn mul(&self, other: &Fir) -> Result<Fir> {
        let (prod, _) = self.mul_truncated(other, self.horizon() + other.horizon())?;
        Ok(prod)
    }

    /// Cauchy product through `horizon`; also returns the largest entry of
    /// the discarded coefficients.
    pub fn mul_truncated(&self, other: &Fir, horizon: usize) -> Result<(Fir, f64)> {
        if self.cols != other.rows {
            return Err(dim(format!("fir mul: {:?} * {:?}", self.shape(), other.shape())));
        }
        let full = self.horizon() + other.horizon();
        let mut coeffs = vec![Mat::zeros(self.rows, other.cols); full.max(horizon) + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.iter().all(|&x| x == 0.0) {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        let residual = coeffs[horizon + 1..].iter().map(max_abs).fold(0.0, f64::max);
        coeffs.truncate(horizon + 1);
        Ok((Fir { rows: self.rows, cols: other.cols, coeffs }, residual))
    }

    pub fn left_mul(&self, m: &Mat) -> Result<Fir> {
        Fir::constant(m.clone()).mul(self)
    }

    pub fn right_mul(&self, m: &Mat) -> Result<Fir> {
        self.mul(&Fir::constant(m.clone()))
    }

    pub fn transpose(&self) -> Fir {
        Fir { rows: self.cols, cols: self.rows, coeffs: self.coeffs.iter().map(|c| c.transpose()).collect() }
    }

    /// Truncates (or zero-pads) to `horizon`; returns the largest dropped entry.
    pub fn truncate(&self, horizon: usize) -> (Fir, f64) {
        let residual = self.coeffs.iter().skip(horizon + 1).map(max_abs).fold(0.0, f64::max);
        let coeffs = (0..=horizon).map(|k| self.coeff(k)).collect();
        (Fir { rows: self.rows, cols: self.cols, coeffs }, residual)
    }

    /// Drops trailing coefficients whose entries are all at most `tol`.
    pub fn trim(&self, tol: f64) -> Fir {
        let mut t = self.horizon();
        while t > 0 && max_abs(&self.coeffs[t]) <= tol {
            t -= 1;
        }
        self.truncate(t).0
    }

    /// Multiplies by `z^-lag`.
    pub fn delay(&self, lag: usize) -> Fir {
        let mut coeffs = vec![Mat::zeros(self.rows, self.cols); lag];
        coeffs.extend(self.coeffs.iter().cloned());
        Fir { rows: self.rows, cols: self.cols, coeffs }
    }

    /// Multiplies by `z`; the zeroth coefficient must vanish.
    pub fn advance(&self) -> Result<Fir> {
        if !self.is_strictly_proper(0.0) {
            return Err(Error::Precondition("advancing by z needs a strictly proper FIR".into()));
        }
        if self.horizon() == 0 {
            return Ok(Fir::zeros(self.rows, self.cols, 0));
        }
        Ok(Fir { rows: self.rows, cols: self.cols, coeffs: self.coeffs[1..].to_vec() })
    }

    pub fn leading_condition_number(&self) -> f64 {
        condition_number(&self.coeffs[0])
    }

    /// Power-series inverse through `horizon`.
    pub fn inverse(&self, horizon: usize) -> Result<Fir> {
        if self.rows != self.cols {
            return Err(dim("fir inverse needs a square FIR"));
        }
        let cond = self.leading_condition_number();
        let g0inv = match self.coeffs[0].clone().lu_inverse() {
            Some(inv) if cond.is_finite() && cond < 1e14 => inv,
            _ => return Err(Error::SingularLeading { cond }),
        };
        let mut x: Vec<Mat> = Vec::with_capacity(horizon + 1);
        x.push(g0inv.clone());
        for k in 1..=horizon {
            let mut acc = Mat::zeros(self.rows, self.rows);
            for j in 1..=k.min(self.horizon()) {
                acc += &self.coeffs[j] * &x[k - j];
            }
            x.push(-&g0inv * acc);
        }
        Ok(Fir { rows: self.rows, cols: self.cols, coeffs: x })
    }

    /// `G(z)` at a point of the unit circle.
    pub fn eval(&self, z: Complex64) -> Result<CMat> {
        let modulus = z.norm();
        if (modulus - 1.0).abs() > UNIT_CIRCLE_TOL {
            return Err(Error::OffUnitCircle { modulus });
        }
        Ok(self.eval_unchecked(z))
    }

    /// Horner evaluation in `w = 1/z` without the unit-circle check.
    pub fn eval_unchecked(&self, z: Complex64) -> CMat {
        let w = z.inv();
        let mut acc = CMat::zeros(self.rows, self.cols);
        for c in self.coeffs.iter().rev() {
            acc = acc * w + c.map(|x| Complex64::new(x, 0.0));
        }
        acc
    }

    pub fn h2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &Fir) -> Result<Fir> {
        if self.rows != other.rows {
            return Err(dim("fir hcat: row counts differ"));
        }
        let t = self.horizon().max(other.horizon());
        let coeffs = (0..=t).map(|k| crate::linalg::hstack(&[&self.coeff(k), &other.coeff(k)])).collect();
        Ok(Fir { rows: self.rows, cols: self.cols + other.cols, coeffs })
    }

    /// Vertical concatenation `[self; other]`.
    pub fn vcat(&self, other: &Fir) -> Result<Fir> {
        if self.cols != other.cols {
            return Err(dim("fir vcat: column counts differ"));
        }
        let t = self.horizon().max(other.horizon());
        let coeffs = (0..=t).map(|k| crate::linalg::vstack(&[&self.coeff(k), &other.coeff(k)])).collect();
        Ok(Fir { rows: self.rows + other.rows, cols: self.cols, coeffs })
    }
}

/// `n` equispaced points on the unit circle starting at `z = 1`.
pub fn unit_circle_points(n: usize) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect()
}
