use crate::error::{dim, Result};
use crate::linalg::Mat;
use crate::lti::{Fir, StateSpacePlant};

/// Binary support mask applied to every coefficient of a transfer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    /// Row-major.
    mask: Vec<bool>,
}

impl SparsityPattern {
    pub fn new(rows: usize, cols: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != rows * cols {
            return Err(dim(format!("pattern of {rows}x{cols} needs {} entries", rows * cols)));
        }
        Ok(Self { rows, cols, mask })
    }

    /// From nested 0/1 rows.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(dim("pattern rows have different lengths"));
        }
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(dim("pattern entries must be 0 or 1"));
        }
        Self::new(r, c, rows.iter().flatten().map(|&v| v == 1).collect())
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self { rows, cols, mask: vec![true; rows * cols] }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, mask: vec![false; rows * cols] }
    }

    pub fn diagonal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| i == j)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mask = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, mask }
    }

    /// Entries with magnitude above `tol`.
    pub fn support(m: &Mat, tol: f64) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].abs() > tol)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.mask[i * self.cols + j] = v;
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(dim("pattern union of different shapes"));
        }
        let mask = self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, mask })
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.mask.iter().zip(&other.mask).all(|(a, b)| *a || !*b)
    }

    /// Boolean matrix product.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(dim("pattern product shapes"));
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| (0..self.cols).any(|k| self.get(i, k) && other.get(k, j))))
    }

    /// Whether every coefficient of `g` vanishes (within `tol`) outside the mask.
    pub fn admits(&self, g: &Fir, tol: f64) -> bool {
        g.shape() == self.shape()
            && g.coeffs()
                .iter()
                .all(|c| (0..self.rows).all(|i| (0..self.cols).all(|j| self.get(i, j) || c[(i, j)].abs() <= tol)))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| u8::from(self.get(i, j))).collect()).collect()
    }

    pub fn to_mat(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }
}

/// Quadratic invariance of `lpat` (controller, `nu x ny`) under `ppat`
/// (plant, `ny x nu`): `Lpat(i,j) Ppat(j,k) Lpat(k,l) => Lpat(i,l)`.
pub fn qi_test(lpat: &SparsityPattern, ppat: &SparsityPattern) -> Result<bool> {
    let (nu, ny) = lpat.shape();
    if ppat.shape() != (ny, nu) {
        return Err(dim(format!(
            "QI test: controller pattern {:?} needs a {ny}x{nu} plant pattern, got {:?}",
            lpat.shape(),
            ppat.shape()
        )));
    }
    let kpk = lpat.product(ppat)?.product(lpat)?;
    Ok(lpat.contains(&kpk))
}

/// Structural support of `P22 = C2 (zI - A)^-1 B2`: the union of the
/// supports of `C2 A^k B2`, `k < n`, in Boolean arithmetic.
pub fn plant_pattern(p: &StateSpacePlant) -> SparsityPattern {
    let n = p.n();
    let a = SparsityPattern::support(p.a(), 0.0);
    let b = SparsityPattern::support(p.b2(), 0.0);
    let c = SparsityPattern::support(p.c2(), 0.0);
    let mut reach = b.clone();
    let mut acc = c.product(&b).expect("C2 B2 shapes");
    for _ in 1..n {
        reach = a.product(&reach).expect("A B2 shapes");
        acc = acc.union(&c.product(&reach).expect("C2 A B2 shapes")).expect("same shape");
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::PlantBlocks;

    fn pat(rows: &[&[u8]]) -> SparsityPattern {
        SparsityPattern::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn plant(a: Mat, b2: Mat, c2: Mat) -> StateSpacePlant {
        let n = a.nrows();
        let (nu, ny) = (b2.ncols(), c2.nrows());
        StateSpacePlant::new(
            PlantBlocks::new(a, Mat::identity(n, n), b2, Mat::zeros(1, n), c2)
                .with_d12(Mat::zeros(1, nu))
                .with_d21(Mat::zeros(ny, n)),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_is_qi_under_diagonal() {
        assert!(qi_test(&SparsityPattern::diagonal(3), &SparsityPattern::diagonal(3)).unwrap());
    }

    #[test]
    fn lower_triangular_is_qi() {
        let lower = pat(&[&[1, 0, 0], &[1, 1, 0], &[1, 1, 1]]);
        assert!(qi_test(&lower, &lower).unwrap());
    }

    #[test]
    fn chain_support_is_not_qi_under_dense_plant() {
        let a = Mat::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let p = plant(a.clone(), Mat::identity(3, 3), Mat::identity(3, 3));
        let ppat = plant_pattern(&p);
        assert_eq!(ppat, SparsityPattern::full(3, 3));
        assert!(!qi_test(&SparsityPattern::support(&a, 0.0), &ppat).unwrap());
    }

    #[test]
    fn plant_pattern_cases() {
        let diag = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.2, 0.3]));
        let p = plant(diag, Mat::identity(3, 3), Mat::identity(3, 3));
        assert_eq!(plant_pattern(&p), SparsityPattern::diagonal(3));
        // Shift x1 -> x2 -> x3 with input at x1 and output at x3.
        let shift = Mat::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let b2 = Mat::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let c2 = Mat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let p = plant(shift, b2, c2);
        assert_eq!(plant_pattern(&p), SparsityPattern::full(1, 1));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(qi_test(&SparsityPattern::full(2, 3), &SparsityPattern::full(2, 3)).is_err());
    }
}
