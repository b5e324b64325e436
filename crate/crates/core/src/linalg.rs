//! Thin safe wrappers over the LAPACK symmetric/Hermitian eigensolvers plus
//! the small dense helpers the rest of the crate needs.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

// Link the system OpenBLAS that provides the LAPACK symbols.
extern crate openblas_src;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// `vectors[(i, k)]` is component `i` of eigenvector `k`.
    pub vectors: Array2<Complex64>,
}

/// Real symmetric eigensolve (`dsyevd`). Only the lower triangle is read.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = square_dim(a.dim())?;
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    let mut buf = column_major(a);
    let mut w = vec![0.0; n];
    let ni = n as i32;
    let mut info = 0;
    let (mut work_q, mut iwork_q) = (0.0f64, 0i32);
    // SAFETY: every pointer refers to a live buffer sized for the query/solve
    // call per the LAPACK dsyevd contract.
    unsafe {
        lapack_sys::dsyevd_(
            c"V".as_ptr(),
            c"L".as_ptr(),
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            &mut work_q,
            &-1,
            &mut iwork_q,
            &-1,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    let lwork = work_q as i32;
    let liwork = iwork_q;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            c"V".as_ptr(),
            c"L".as_ptr(),
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| buf[i + k * n]);
    Ok((w, vectors))
}

/// Complex Hermitian eigensolve (`zheevd`). Only the lower triangle is read.
pub fn eigh_complex(a: &Array2<Complex64>) -> Result<HermitianEigen> {
    let n = square_dim(a.dim())?;
    if n == 0 {
        return Ok(HermitianEigen {
            values: Vec::new(),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let mut buf = column_major(a);
    let mut w = vec![0.0; n];
    let ni = n as i32;
    let mut info = 0;
    let mut work_q = Complex64::new(0.0, 0.0);
    let (mut rwork_q, mut iwork_q) = (0.0f64, 0i32);
    // SAFETY: Complex64 is layout-compatible with LAPACK's double complex;
    // buffers are sized per the zheevd workspace query.
    unsafe {
        lapack_sys::zheevd_(
            c"V".as_ptr(),
            c"L".as_ptr(),
            &ni,
            buf.as_mut_ptr().cast(),
            &ni,
            w.as_mut_ptr(),
            (&mut work_q as *mut Complex64).cast(),
            &-1,
            &mut rwork_q,
            &-1,
            &mut iwork_q,
            &-1,
            &mut info,
        );
    }
    check("zheevd", info)?;
    let lwork = work_q.re as i32;
    let lrwork = rwork_q as i32;
    let liwork = iwork_q;
    let mut work = vec![Complex64::new(0.0, 0.0); lwork.max(1) as usize];
    let mut rwork = vec![0.0; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::zheevd_(
            c"V".as_ptr(),
            c"L".as_ptr(),
            &ni,
            buf.as_mut_ptr().cast(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr().cast(),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("zheevd", info)?;
    let vectors = Array2::from_shape_fn((n, n), |(i, k)| buf[i + k * n]);
    Ok(HermitianEigen { values: w, vectors })
}

/// Largest singular value of a (possibly rectangular) complex matrix.
pub fn spectral_norm(a: &Array2<Complex64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let ah = a.t().mapv(|z| z.conj());
    let gram = ah.dot(a);
    let eig = eigh_complex(&gram)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Conjugate transpose.
pub fn adjoint(a: &Array2<Complex64>) -> Array2<Complex64> {
    a.t().mapv(|z| z.conj())
}

/// Order-fixed pairwise (cascade) summation; the result depends only on the
/// order of `values`, never on how they were produced.
pub fn pairwise_sum<T>(values: &[T]) -> T
where
    T: Copy + Default + std::ops::Add<Output = T>,
{
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        return values.iter().fold(T::default(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn square_dim((r, c): (usize, usize)) -> Result<usize> {
    if r != c {
        return Err(Error::InvalidArgument(format!("matrix is {r}x{c}, expected square")));
    }
    Ok(r)
}

fn column_major<T: Copy>(a: &Array2<T>) -> Vec<T> {
    let n = a.nrows();
    let mut buf = Vec::with_capacity(n * a.ncols());
    for j in 0..a.ncols() {
        for i in 0..n {
            buf.push(a[(i, j)]);
        }
    }
    buf
}

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_eigenpairs_satisfy_definition() {
        let a = ndarray::array![[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let (w, v) = eigh_real(&a).unwrap();
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
        for k in 0..3 {
            let col = v.column(k).to_owned();
            let av = a.dot(&col);
            for i in 0..3 {
                assert!((av[i] - w[k] * col[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn complex_eigenpairs_satisfy_definition() {
        let i = Complex64::i();
        let one = Complex64::new(1.0, 0.0);
        let a = ndarray::array![[2.0 * one, i], [-i, 2.0 * one]];
        let eig = eigh_complex(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
        for k in 0..2 {
            let col = eig.vectors.column(k).to_owned();
            let av = a.dot(&col);
            for r in 0..2 {
                assert!((av[r] - eig.values[k] * col[r]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Array2::from_diag(&ndarray::arr1(&[Complex64::new(0.5, 0.0), Complex64::new(0.0, -3.0)]));
        assert!((spectral_norm(&a).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_for_exact_data() {
        let v: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
    }
}
