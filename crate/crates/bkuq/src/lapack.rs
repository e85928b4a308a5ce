//! Direct bindings to the system LAPACK/BLAS with row-major wrappers.
//!
//! Only the handful of routines the laboratory needs are bound: dense
//! nonsymmetric and symmetric eigensolvers, LU factorization/solve with a
//! condition estimate, and matrix-matrix products. All public wrappers take
//! row-major buffers; the translation to LAPACK's column-major convention is
//! done here once (transpose copies are O(n²) against the O(n³) work they
//! front, so they never matter).
//!
//! Eigenvectors are returned with each vector contiguous: vector `k` occupies
//! `vectors[k*n..(k+1)*n]`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

mod ffi {
    use num_complex::Complex64 as C64;

    #[link(name = "lapack")]
    extern "C" {
        pub fn zgeev_(
            jobvl: *const u8,
            jobvr: *const u8,
            n: *const i32,
            a: *mut C64,
            lda: *const i32,
            w: *mut C64,
            vl: *mut C64,
            ldvl: *const i32,
            vr: *mut C64,
            ldvr: *const i32,
            work: *mut C64,
            lwork: *const i32,
            rwork: *mut f64,
            info: *mut i32,
        );
        pub fn dsyev_(
            jobz: *const u8,
            uplo: *const u8,
            n: *const i32,
            a: *mut f64,
            lda: *const i32,
            w: *mut f64,
            work: *mut f64,
            lwork: *const i32,
            info: *mut i32,
        );
        pub fn zgetrf_(
            m: *const i32,
            n: *const i32,
            a: *mut C64,
            lda: *const i32,
            ipiv: *mut i32,
            info: *mut i32,
        );
        pub fn zgetrs_(
            trans: *const u8,
            n: *const i32,
            nrhs: *const i32,
            a: *const C64,
            lda: *const i32,
            ipiv: *const i32,
            b: *mut C64,
            ldb: *const i32,
            info: *mut i32,
        );
        pub fn zgecon_(
            norm: *const u8,
            n: *const i32,
            a: *const C64,
            lda: *const i32,
            anorm: *const f64,
            rcond: *mut f64,
            work: *mut C64,
            rwork: *mut f64,
            info: *mut i32,
        );
    }

    #[link(name = "blas")]
    extern "C" {
        pub fn dgemm_(
            transa: *const u8,
            transb: *const u8,
            m: *const i32,
            n: *const i32,
            k: *const i32,
            alpha: *const f64,
            a: *const f64,
            lda: *const i32,
            b: *const f64,
            ldb: *const i32,
            beta: *const f64,
            c: *mut f64,
            ldc: *const i32,
        );
        pub fn zgemm_(
            transa: *const u8,
            transb: *const u8,
            m: *const i32,
            n: *const i32,
            k: *const i32,
            alpha: *const C64,
            a: *const C64,
            lda: *const i32,
            b: *const C64,
            ldb: *const i32,
            beta: *const C64,
            c: *mut C64,
            ldc: *const i32,
        );
    }
}

fn transpose_c64(a: &[C64], n: usize) -> Vec<C64> {
    let mut t = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

/// Eigendecomposition of a general complex matrix.
pub struct Eig {
    pub values: Vec<C64>,
    /// Right eigenvectors, empty unless requested; vector `k` is the slice
    /// `vectors[k*n..(k+1)*n]` and satisfies A v = λ_k v.
    pub vectors: Vec<C64>,
}

/// Eigenvalues (and optionally right eigenvectors) of a general complex
/// matrix given in row-major order.
pub fn eig(a: &[C64], n: usize, want_vectors: bool) -> Result<Eig> {
    assert_eq!(a.len(), n * n);
    let mut acm = transpose_c64(a, n);
    let nn = n as i32;
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut vr = if want_vectors {
        vec![C64::new(0.0, 0.0); n * n]
    } else {
        vec![C64::new(0.0, 0.0); 1]
    };
    let jobvr = if want_vectors { b'V' } else { b'N' };
    let ldvr = if want_vectors { nn } else { 1 };
    let mut rwork = vec![0.0_f64; 2 * n];
    let mut info = 0_i32;
    unsafe {
        // workspace query
        let mut wq = [C64::new(0.0, 0.0)];
        let m1 = -1_i32;
        ffi::zgeev_(
            &b'N',
            &jobvr,
            &nn,
            acm.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            vr.as_mut_ptr(),
            &ldvr,
            wq.as_mut_ptr(),
            &m1,
            rwork.as_mut_ptr(),
            &mut info,
        );
        if info != 0 {
            return Err(Error::Lapack { routine: "zgeev (workspace)", info });
        }
        let lwork = wq[0].re as i32;
        let mut work = vec![C64::new(0.0, 0.0); lwork as usize];
        ffi::zgeev_(
            &b'N',
            &jobvr,
            &nn,
            acm.as_mut_ptr(),
            &nn,
            w.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            vr.as_mut_ptr(),
            &ldvr,
            work.as_mut_ptr(),
            &lwork,
            rwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zgeev", info });
    }
    // Column k of the column-major VR is already contiguous at [k*n..(k+1)*n].
    Ok(Eig {
        values: w,
        vectors: if want_vectors { vr } else { Vec::new() },
    })
}

/// Eigendecomposition of a real symmetric matrix: ascending eigenvalues and
/// orthonormal eigenvectors.
pub struct SymEig {
    pub values: Vec<f64>,
    /// Vector `k` is `vectors[k*n..(k+1)*n]`.
    pub vectors: Vec<f64>,
}

/// Eigenvalues and eigenvectors of a real symmetric matrix (row-major; only
/// symmetry up to roundoff is required since one triangle is read).
pub fn sym_eig(a: &[f64], n: usize) -> Result<SymEig> {
    assert_eq!(a.len(), n * n);
    let mut acm = a.to_vec(); // symmetric: row-major == column-major layout
    let nn = n as i32;
    let mut w = vec![0.0_f64; n];
    let mut info = 0_i32;
    unsafe {
        let mut wq = [0.0_f64];
        let m1 = -1_i32;
        ffi::dsyev_(&b'V', &b'L', &nn, acm.as_mut_ptr(), &nn, w.as_mut_ptr(), wq.as_mut_ptr(), &m1, &mut info);
        if info != 0 {
            return Err(Error::Lapack { routine: "dsyev (workspace)", info });
        }
        let lwork = wq[0] as i32;
        let mut work = vec![0.0_f64; lwork as usize];
        ffi::dsyev_(&b'V', &b'L', &nn, acm.as_mut_ptr(), &nn, w.as_mut_ptr(), work.as_mut_ptr(), &lwork, &mut info);
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsyev", info });
    }
    Ok(SymEig { values: w, vectors: acm })
}

/// LU factorization of a complex matrix, retained for repeated solves and a
/// condition estimate.
pub struct Lu {
    n: usize,
    factors: Vec<C64>, // column-major LU from zgetrf
    ipiv: Vec<i32>,
    anorm_1: f64,
}

/// Factor a row-major complex matrix.
pub fn lu_factor(a: &[C64], n: usize) -> Result<Lu> {
    assert_eq!(a.len(), n * n);
    let mut acm = transpose_c64(a, n);
    // 1-norm (max column sum) of A before factoring, for the condition estimate.
    let mut anorm_1 = 0.0_f64;
    for j in 0..n {
        let s: f64 = (0..n).map(|i| acm[j * n + i].norm()).sum();
        anorm_1 = anorm_1.max(s);
    }
    let nn = n as i32;
    let mut ipiv = vec![0_i32; n];
    let mut info = 0_i32;
    unsafe {
        ffi::zgetrf_(&nn, &nn, acm.as_mut_ptr(), &nn, ipiv.as_mut_ptr(), &mut info);
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "zgetrf", info });
    }
    Ok(Lu { n, factors: acm, ipiv, anorm_1 })
}

impl Lu {
    /// Solve A X = B in place. `b` holds `nrhs` right-hand sides, each a
    /// contiguous length-n block.
    pub fn solve_in_place(&self, b: &mut [C64], nrhs: usize) -> Result<()> {
        assert_eq!(b.len(), self.n * nrhs);
        let nn = self.n as i32;
        let nr = nrhs as i32;
        let mut info = 0_i32;
        unsafe {
            ffi::zgetrs_(
                &b'N',
                &nn,
                &nr,
                self.factors.as_ptr(),
                &nn,
                self.ipiv.as_ptr(),
                b.as_mut_ptr(),
                &nn,
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Lapack { routine: "zgetrs", info });
        }
        Ok(())
    }

    /// Reciprocal 1-norm condition number estimate of the factored matrix.
    pub fn rcond_1(&self) -> Result<f64> {
        let nn = self.n as i32;
        let mut rcond = 0.0_f64;
        let mut work = vec![C64::new(0.0, 0.0); 2 * self.n];
        let mut rwork = vec![0.0_f64; 2 * self.n];
        let mut info = 0_i32;
        unsafe {
            ffi::zgecon_(
                &b'1',
                &nn,
                self.factors.as_ptr(),
                &nn,
                &self.anorm_1,
                &mut rcond,
                work.as_mut_ptr(),
                rwork.as_mut_ptr(),
                &mut info,
            );
        }
        if info != 0 {
            return Err(Error::Lapack { routine: "zgecon", info });
        }
        Ok(rcond)
    }
}

/// Row-major real GEMM: C = alpha · op(A) · op(B) + beta · C, where C is
/// m×n, op(A) is m×k, op(B) is k×n, and `transa`/`transb` select whether the
/// stored matrix or its transpose is used.
#[allow(clippy::too_many_arguments)]
pub fn dgemm(
    transa: bool,
    transb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // Row-major trick: compute Cᵀ = op(B)ᵀ op(A)ᵀ in column-major terms; a
    // row-major buffer read column-major IS the transpose, so flags carry over
    // and leading dimensions are the stored matrices' row-major widths.
    let ta = if transa { b'T' } else { b'N' };
    let tb = if transb { b'T' } else { b'N' };
    let lda = if transa { m } else { k } as i32; // stored A width
    let ldb = if transb { k } else { n } as i32; // stored B width
    let (mm, nn, kk) = (n as i32, m as i32, k as i32);
    unsafe {
        ffi::dgemm_(
            &tb,
            &ta,
            &mm,
            &nn,
            &kk,
            &alpha,
            b.as_ptr(),
            &ldb,
            a.as_ptr(),
            &lda,
            &beta,
            c.as_mut_ptr(),
            &mm,
        );
    }
}

/// Row-major complex GEMM; same conventions as [`dgemm`].
#[allow(clippy::too_many_arguments)]
pub fn zgemm(
    transa: bool,
    transb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: C64,
    a: &[C64],
    b: &[C64],
    beta: C64,
    c: &mut [C64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let ta = if transa { b'T' } else { b'N' };
    let tb = if transb { b'T' } else { b'N' };
    let lda = if transa { m } else { k } as i32;
    let ldb = if transb { k } else { n } as i32;
    let (mm, nn, kk) = (n as i32, m as i32, k as i32);
    unsafe {
        ffi::zgemm_(
            &tb,
            &ta,
            &mm,
            &nn,
            &kk,
            &alpha,
            b.as_ptr(),
            &ldb,
            a.as_ptr(),
            &lda,
            &beta,
            c.as_mut_ptr(),
            &mm,
        );
    }
}
