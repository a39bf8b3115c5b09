//! Dense helpers on top of nalgebra: spectra, ranks, subspace bases and
//! minimum-norm least squares.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative singular-value threshold used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Eigenvalues by faer's real Schur solver. nalgebra's QR iteration
/// stalls on exactly nilpotent blocks, which FIR realizations are full of.
pub fn eigenvalues(a: &Mat) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    match m.eigenvalues() {
        Ok(ev) => ev.iter().map(|z| Complex64::new(z.re, z.im)).collect(),
        // Reported as unbounded so stability checks fail closed.
        Err(_) => vec![Complex64::new(f64::INFINITY, 0.0); n],
    }
}

pub fn spectral_radius(a: &Mat) -> f64 {
    eigenvalues(a).iter().map(|l| l.norm()).fold(0.0, f64::max)
}

pub fn to_complex(a: &Mat) -> CMat {
    a.map(|x| Complex64::new(x, 0.0))
}

fn singular_values(a: &Mat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn rank(a: &Mat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * smax).count()
}

/// Rank of a complex matrix through its real 2x2 embedding.
pub fn complex_rank(a: &CMat, rel_tol: f64) -> usize {
    let (r, c) = a.shape();
    let mut m = Mat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            m[(i, j)] = z.re;
            m[(i, j + c)] = -z.im;
            m[(i + r, j)] = z.im;
            m[(i + r, j + c)] = z.re;
        }
    }
    rank(&m, rel_tol) / 2
}

/// Orthonormal basis of the column space.
pub fn orth(a: &Mat, rel_tol: f64) -> Mat {
    let n = a.nrows();
    if n == 0 || a.ncols() == 0 {
        return Mat::zeros(n, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| smax > 0.0 && svd.singular_values[i] > rel_tol * smax).collect();
    Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

/// Orthonormal basis of the null space.
pub fn null_space(a: &Mat, rel_tol: f64) -> Mat {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Mat::identity(n, n);
    }
    // Pad with zero rows so the thin SVD yields a full right basis.
    let mut padded = Mat::zeros(a.nrows().max(n), n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.max();
    let free: Vec<usize> = (0..n).filter(|&i| smax == 0.0 || svd.singular_values[i] <= rel_tol * smax).collect();
    Mat::from_fn(n, free.len(), |i, j| vt[(free[j], i)])
}

/// Minimum-norm least-squares solution of `a x = b` (columns of `b` solved jointly).
pub fn lstsq(a: &Mat, b: &Mat, rel_tol: f64) -> Mat {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Mat::zeros(a.ncols(), b.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("both singular bases computed")
}

pub fn lstsq_vec(a: &Mat, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let x = lstsq(a, &Mat::from_column_slice(b.len(), 1, b.as_slice()), rel_tol);
    DVector::from_column_slice(x.as_slice())
}

/// Inversion through full-pivot LU. nalgebra's `try_inverse` uses cofactor
/// formulas up to 4x4, which lose several digits on ill-conditioned input.
pub trait LuInverse: Sized {
    fn lu_inverse(self) -> Option<Self>;
}

impl<T: ComplexField> LuInverse for DMatrix<T> {
    fn lu_inverse(self) -> Option<Self> {
        if self.nrows() != self.ncols() {
            return None;
        }
        self.full_piv_lu().try_inverse()
    }
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn cmax_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.norm()))
}

/// 2-norm condition number; infinite for singular or empty-rank input.
pub fn condition_number(a: &Mat) -> f64 {
    let s = singular_values(a);
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if s.is_empty() {
        1.0
    } else if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// `[[a, b], [c, d]]` with compatible block shapes.
pub fn block2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + c.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out.view_mut((a.nrows(), 0), c.shape()).copy_from(c);
    out.view_mut((a.nrows(), a.ncols()), d.shape()).copy_from(d);
    out
}

pub fn hstack(blocks: &[&Mat]) -> Mat {
    let r = blocks.first().map_or(0, |b| b.nrows());
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let mut j = 0;
    for b in blocks {
        out.view_mut((0, j), b.shape()).copy_from(*b);
        j += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&Mat]) -> Mat {
    let c = blocks.first().map_or(0, |b| b.ncols());
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(r, c);
    let mut i = 0;
    for b in blocks {
        out.view_mut((i, 0), b.shape()).copy_from(*b);
        i += b.nrows();
    }
    out
}

/// Eigenvalues of the part of `(a, b, c)` that is both reachable and observable.
pub fn minimal_poles(a: &Mat, b: &Mat, c: &Mat) -> Vec<Complex64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut krylov = Vec::with_capacity(n);
    let mut blk = b.clone();
    for _ in 0..n {
        krylov.push(blk.clone());
        blk = a * &blk;
    }
    let ctrb = hstack(&krylov.iter().collect::<Vec<_>>());
    let vc = orth(&ctrb, RANK_TOL);
    if vc.ncols() == 0 {
        return Vec::new();
    }
    let a1 = vc.transpose() * a * &vc;
    let c1 = c * &vc;
    let mut rows = Vec::with_capacity(n);
    let mut blk = c1.clone();
    for _ in 0..vc.ncols() {
        rows.push(blk.clone());
        blk = &blk * &a1;
    }
    let obsv = vstack(&rows.iter().collect::<Vec<_>>());
    let vo = orth(&obsv.transpose(), RANK_TOL);
    if vo.ncols() == 0 {
        return Vec::new();
    }
    eigenvalues(&(vo.transpose() * a1 * vo))
}

/// Block diagonalization `A = V diag(As, Au) V^-1` separating the
/// eigenvalues inside the unit circle (`As`) from those outside (`Au`).
#[derive(Debug, Clone)]
pub struct CircleSplit {
    pub v: Mat,
    pub v_inv: Mat,
    pub a_s: Mat,
    pub a_u: Mat,
}

impl CircleSplit {
    pub fn stable_dim(&self) -> usize {
        self.a_s.nrows()
    }
}

/// Spectral split of `a` across the unit circle from the matrix sign of a
/// Cayley transform, which maps the outside of the circle to the right
/// half plane. `None` when an eigenvalue is too close to the circle for
/// the split to be trusted.
pub fn unit_circle_split(a: &Mat) -> Option<CircleSplit> {
    let n = a.nrows();
    let eye = Mat::identity(n, n);
    // (A - I)(A + I)^-1, or its inverse when -1 is (nearly) an eigenvalue;
    // both have the same sign function.
    let plus = a + &eye;
    let minus = a - &eye;
    let mut s = if condition_number(&plus) <= condition_number(&minus) {
        &minus * plus.lu_inverse()?
    } else {
        &plus * minus.lu_inverse()?
    };
    let mut converged = false;
    for _ in 0..100 {
        let inv = s.clone().lu_inverse()?;
        let det = s.determinant().abs();
        let c = if det.is_finite() && det > 0.0 { det.powf(-1.0 / n as f64) } else { 1.0 };
        let next = (&s * c + inv / c) * 0.5;
        let delta = max_abs(&(&next - &s));
        s = next;
        if !s.iter().all(|x| x.is_finite()) {
            return None;
        }
        if delta <= 1e-13 * max_abs(&s).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let p_u = (&eye + &s) * 0.5;
    let nu = p_u.trace().round();
    if !(0.0..=n as f64).contains(&nu) {
        return None;
    }
    let nu = nu as usize;
    let basis = |p: &Mat, k: usize| -> Mat {
        let svd = p.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        Mat::from_fn(n, k, |i, j| u[(i, order[j])])
    };
    let ns = n - nu;
    let mut v = hstack(&[&basis(&(&eye - &p_u), ns), &basis(&p_u, nu)]);
    if condition_number(&v) > 1e8 {
        return None;
    }
    let scale = max_abs(a).max(1.0);
    let mut v_inv = v.clone().lu_inverse()?;
    let mut t = &v_inv * a * &v;
    // The sign iteration loses accuracy when a mode sits near -1 or +1;
    // Newton steps on the block Sylvester equations remove what is left
    // of the off-diagonal blocks.
    for _ in 0..4 {
        if off_diagonal(&t, ns) <= 1e-15 * scale {
            break;
        }
        let t11 = t.view((0, 0), (ns, ns)).into_owned();
        let t22 = t.view((ns, ns), (nu, nu)).into_owned();
        let x = sylvester(&t11, &t22, &(-t.view((0, ns), (ns, nu)).into_owned()))?;
        let y = sylvester(&t22, &t11, &(-t.view((ns, 0), (nu, ns)).into_owned()))?;
        let mut step = Mat::identity(n, n);
        step.view_mut((0, ns), (ns, nu)).copy_from(&x);
        step.view_mut((ns, 0), (nu, ns)).copy_from(&y);
        v = &v * step;
        v_inv = v.clone().lu_inverse()?;
        t = &v_inv * a * &v;
    }
    if off_diagonal(&t, ns) > 1e-9 * scale {
        return None;
    }
    Some(CircleSplit {
        a_s: t.view((0, 0), (ns, ns)).into_owned(),
        a_u: t.view((ns, ns), (nu, nu)).into_owned(),
        v,
        v_inv,
    })
}

fn off_diagonal(t: &Mat, k: usize) -> f64 {
    let n = t.nrows();
    max_abs(&t.view((0, k), (k, n - k)).into_owned()).max(max_abs(&t.view((k, 0), (n - k, k)).into_owned()))
}

/// `X` with `P X - X R = C`, through the Kronecker form; sizes here are
/// small.
fn sylvester(p: &Mat, r: &Mat, c: &Mat) -> Option<Mat> {
    let (m, k) = (p.nrows(), r.nrows());
    if m == 0 || k == 0 {
        return Some(Mat::zeros(m, k));
    }
    let mut sys = Mat::zeros(m * k, m * k);
    for j in 0..k {
        sys.view_mut((j * m, j * m), (m, m)).copy_from(p);
        for i in 0..k {
            let rij = r[(i, j)];
            if rij != 0.0 {
                let mut blk = sys.view_mut((j * m, i * m), (m, m));
                for d in 0..m {
                    blk[(d, d)] -= rij;
                }
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = sys.full_piv_lu().solve(&rhs)?;
    Some(Mat::from_column_slice(m, k, x.as_slice()))
}
