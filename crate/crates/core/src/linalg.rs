//! Dense linear algebra sized for this project: LU solves, complex
//! eigenvalues via shifted Hessenberg QR, inverse iteration, Arnoldi,
//! and small matrix exponentials. Matrices are row-major slices; problem
//! sizes stay in the low hundreds, so an O(n^3) direct approach is fine.

use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    pub n: usize,
    pub a: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat {
            n,
            a: vec![C64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real(n: usize, data: &[f64]) -> Self {
        CMat {
            n,
            a: data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.a[i * n + j] * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matmul(&self, other: &CMat) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.a[k * n + j];
                }
            }
        }
        out
    }

    pub fn scale(&mut self, s: C64) {
        for v in self.a.iter_mut() {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &CMat) {
        for (v, w) in self.a.iter_mut().zip(&other.a) {
            *v += *w;
        }
    }

    pub fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.a[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * self.n + j]
    }
}

// ---------------------------------------------------------------------------
// LU factorizations
// ---------------------------------------------------------------------------

/// In-place LU with partial pivoting for a real row-major matrix.
pub struct LuReal {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
}

impl LuReal {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut p = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("real LU pivot at column {col}")));
            }
            if p != col {
                for j in 0..n {
                    a.swap(col * n + j, p * n + j);
                }
                piv.swap(col, p);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                a[r * n + col] = f;
                for j in col + 1..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
            }
        }
        Ok(LuReal { n, lu: a, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu[i * n + j] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                x[i] = x[i] - self.lu[i * n + j] * x[j];
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

/// In-place LU with partial pivoting for a complex matrix.
pub struct LuComplex {
    n: usize,
    lu: Vec<C64>,
    piv: Vec<usize>,
}

impl LuComplex {
    pub fn factor(n: usize, mut a: Vec<C64>) -> Result<Self> {
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut p = col;
            let mut best = a[col * n + col].norm();
            for r in col + 1..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Singular(format!("complex LU pivot at column {col}")));
            }
            if p != col {
                for j in 0..n {
                    a.swap(col * n + j, p * n + j);
                }
                piv.swap(col, p);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                a[r * n + col] = f;
                for j in col + 1..n {
                    let upper = a[col * n + j];
                    a[r * n + j] -= f * upper;
                }
            }
        }
        Ok(LuComplex { n, lu: a, piv })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x: Vec<C64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let f = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= f * xj;
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let f = self.lu[i * n + j];
                let xj = x[j];
                x[i] -= f * xj;
            }
            x[i] /= self.lu[i * n + i];
        }
        x
    }
}

// ---------------------------------------------------------------------------
// Eigenvalues: Hessenberg reduction + shifted QR
// ---------------------------------------------------------------------------

/// Householder reduction to upper Hessenberg form (in place, no Q).
fn hessenberg_in_place(h: &mut CMat) {
    let n = h.n;
    for k in 0..n.saturating_sub(2) {
        // norm of column k below the subdiagonal
        let mut xnorm = 0.0;
        for i in k + 1..n {
            xnorm += h[(i, k)].norm_sqr();
        }
        let xnorm = xnorm.sqrt();
        if xnorm < 1e-300 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let alpha = if x0.norm() > 0.0 {
            -(x0 / x0.norm()) * xnorm
        } else {
            C64::new(-xnorm, 0.0)
        };
        // v = x - alpha*e1, normalized
        let mut v = vec![C64::new(0.0, 0.0); n - k - 1];
        v[0] = x0 - alpha;
        for i in k + 2..n {
            v[i - k - 1] = h[(i, k)];
        }
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm < 1e-300 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // H <- (I - 2 v v^H) H : rows k+1..n
        for j in k..n {
            let mut dot = C64::new(0.0, 0.0);
            for i in k + 1..n {
                dot += v[i - k - 1].conj() * h[(i, j)];
            }
            let dot2 = dot * 2.0;
            for i in k + 1..n {
                let upd = v[i - k - 1] * dot2;
                h[(i, j)] -= upd;
            }
        }
        // H <- H (I - 2 v v^H) : columns k+1..n
        for i in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for j in k + 1..n {
                dot += h[(i, j)] * v[j - k - 1];
            }
            let dot2 = dot * 2.0;
            for j in k + 1..n {
                let upd = dot2 * v[j - k - 1].conj();
                h[(i, j)] -= upd;
            }
        }
        // enforce exact zeros below the subdiagonal in column k
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }
}

fn wilkinson_shift(a: C64, b: C64, c: C64, d: C64) -> C64 {
    // eigenvalue of [[a, b], [c, d]] closest to d
    let tr_half = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (tr_half * tr_half - det).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Eigenvalues of a general complex matrix by Hessenberg reduction and
/// explicitly shifted QR with Givens rotations. No balancing; fine for the
/// well-scaled operators assembled in this crate.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    let mut h = m.clone();
    hessenberg_in_place(&mut h);
    hessenberg_eigenvalues(&mut h)
}

/// Eigenvalues of an upper Hessenberg matrix (destroys the input).
pub fn hessenberg_eigenvalues(h: &mut CMat) -> Result<Vec<C64>> {
    let n = h.n;
    let mut eigs = vec![C64::new(0.0, 0.0); n];
    if n == 0 {
        return Ok(eigs);
    }
    let eps = f64::EPSILON;
    let mut hi = n; // active block is rows/cols lo..hi
    let mut iters_here = 0usize;
    let mut total_iters = 0usize;
    let max_total = 60 * n.max(10);

    while hi > 0 {
        // find lo: scan for negligible subdiagonal
        let mut lo = hi - 1;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let scale = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if sub <= eps * scale.max(1e-300) {
                h[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            // 1x1 block converged
            eigs[hi - 1] = h[(hi - 1, hi - 1)];
            hi -= 1;
            iters_here = 0;
            continue;
        }
        if lo == hi - 2 {
            // solve 2x2 blocks in closed form; this also handles defective
            // (Jordan) pairs that shifted QR cannot split
            let a = h[(hi - 2, hi - 2)];
            let b = h[(hi - 2, hi - 1)];
            let c = h[(hi - 1, hi - 2)];
            let d = h[(hi - 1, hi - 1)];
            let tr_half = (a + d) * 0.5;
            let disc = (tr_half * tr_half - (a * d - b * c)).sqrt();
            eigs[hi - 2] = tr_half + disc;
            eigs[hi - 1] = tr_half - disc;
            hi -= 2;
            iters_here = 0;
            continue;
        }

        total_iters += 1;
        iters_here += 1;
        if total_iters > max_total {
            return Err(Error::NoConvergence(format!(
                "QR eigenvalue iteration stalled at block size {}",
                hi - lo
            )));
        }

        let shift = if iters_here % 12 == 0 {
            // exceptional shift to break symmetry-induced cycling
            h[(hi - 1, hi - 1)]
                + C64::new(
                    1.5 * (h[(hi - 1, hi - 2)].norm() + h[(hi - 2, hi - 3.min(hi - 2))].norm()),
                    0.0,
                )
        } else {
            wilkinson_shift(
                h[(hi - 2, hi - 2)],
                h[(hi - 2, hi - 1)],
                h[(hi - 1, hi - 2)],
                h[(hi - 1, hi - 1)],
            )
        };

        // QR step on the active block: factor (H - shift I) with Givens,
        // then form RQ + shift I.
        let m = hi - lo;
        let mut cs = vec![0.0f64; m - 1];
        let mut sn = vec![C64::new(0.0, 0.0); m - 1];
        for i in lo..hi {
            h[(i, i)] -= shift;
        }
        for i in lo..hi - 1 {
            let a = h[(i, i)];
            let b = h[(i + 1, i)];
            let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (c, s) = if r < 1e-300 {
                (1.0, C64::new(0.0, 0.0))
            } else if a.norm() < 1e-300 {
                (0.0, b.conj() / b.norm())
            } else {
                (a.norm() / r, (a / a.norm()) * b.conj() / r)
            };
            cs[i - lo] = c;
            sn[i - lo] = s;
            // apply to rows i, i+1 over columns i..hi
            for j in i..hi {
                let t1 = h[(i, j)];
                let t2 = h[(i + 1, j)];
                h[(i, j)] = t1 * c + s * t2;
                h[(i + 1, j)] = -s.conj() * t1 + t2 * c;
            }
        }
        // right-multiply by Q = G_0^H ... G_{m-2}^H
        for i in lo..hi - 1 {
            let c = cs[i - lo];
            let s = sn[i - lo];
            let top = lo;
            for r in top..(i + 2).min(hi) {
                let t1 = h[(r, i)];
                let t2 = h[(r, i + 1)];
                h[(r, i)] = t1 * c + s.conj() * t2;
                h[(r, i + 1)] = -s * t1 + t2 * c;
            }
        }
        for i in lo..hi {
            h[(i, i)] += shift;
        }
    }
    Ok(eigs)
}

/// One eigenvector of `m` for a computed eigenvalue via inverse iteration.
pub fn eigenvector(m: &CMat, lambda: C64) -> Result<Vec<C64>> {
    let n = m.n;
    let scale = m.one_norm().max(1.0);
    // perturb the shift slightly so the factorization stays regular
    let mut shift = lambda + C64::new(scale * 1e-13, scale * 1e-13);
    let mut lu = None;
    for attempt in 0..4 {
        let mut a = m.a.clone();
        for i in 0..n {
            a[i * n + i] -= shift;
        }
        match LuComplex::factor(n, a) {
            Ok(f) => {
                lu = Some(f);
                break;
            }
            Err(_) => {
                shift += C64::new(scale * 1e-11 * (attempt + 1) as f64, 0.0);
            }
        }
    }
    let lu = lu.ok_or_else(|| Error::Singular("inverse iteration factorization".into()))?;
    // deterministic start vector
    let mut v: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0 + (i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
        .collect();
    normalize(&mut v);
    for _ in 0..3 {
        let mut w = lu.solve(&v);
        normalize(&mut w);
        v = w;
    }
    Ok(v)
}

fn normalize(v: &mut [C64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
}

/// |<u, v>| / (|u||v|): overlap used for eigenvalue branch tracking.
pub fn overlap(u: &[C64], v: &[C64]) -> f64 {
    let mut dot = C64::new(0.0, 0.0);
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a.conj() * b;
        nu += a.norm_sqr();
        nv += b.norm_sqr();
    }
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot.norm() / (nu * nv).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Arnoldi iteration (real, matrix-free)
// ---------------------------------------------------------------------------

pub struct ArnoldiResult {
    /// Orthonormal basis vectors, length m+1 (or less on breakdown).
    pub basis: Vec<Vec<f64>>,
    /// Hessenberg entries h[(i, j)] for i <= j+1, stored row-major (m+1) x m.
    pub h: Vec<f64>,
    /// Number of completed columns.
    pub m: usize,
}

impl ArnoldiResult {
    pub fn h_entry(&self, i: usize, j: usize) -> f64 {
        self.h[i * self.m + j]
    }

    /// Square upper-Hessenberg section as a complex matrix.
    pub fn square_h(&self) -> CMat {
        let m = self.m;
        let mut out = CMat::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = C64::new(self.h[i * m + j], 0.0);
            }
        }
        out
    }
}

/// Arnoldi factorization A V_m = V_m H_m + h_{m+1,m} v_{m+1} e_m^T with
/// re-orthogonalized modified Gram-Schmidt.
pub fn arnoldi(
    apply: &mut dyn FnMut(&[f64]) -> Vec<f64>,
    v0: &[f64],
    m: usize,
) -> Result<ArnoldiResult> {
    let n = v0.len();
    let nrm = v0.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nrm == 0.0 {
        return Err(Error::Degenerate("Arnoldi start vector is zero".into()));
    }
    let mut basis: Vec<Vec<f64>> = vec![v0.iter().map(|x| x / nrm).collect()];
    let mut h = vec![0.0; (m + 1) * m];
    let mut completed = 0;
    for j in 0..m {
        let mut w = apply(&basis[j]);
        if w.len() != n {
            return Err(Error::DimensionMismatch("Arnoldi operator output".into()));
        }
        for pass in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let dot: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                if pass == 0 {
                    h[i * m + j] = dot;
                } else {
                    h[i * m + j] += dot;
                }
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= dot * vk;
                }
            }
        }
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        h[(j + 1) * m + j] = wn;
        completed = j + 1;
        if wn < 1e-12 {
            break; // invariant subspace found
        }
        for x in w.iter_mut() {
            *x /= wn;
        }
        basis.push(w);
    }
    Ok(ArnoldiResult {
        basis,
        h,
        m: completed,
    })
}

// ---------------------------------------------------------------------------
// Small matrix exponential (scaling and squaring, Pade(6))
// ---------------------------------------------------------------------------

/// exp(A) for a small complex matrix via Pade(6) with scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    let n = a.n;
    let norm = a.one_norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let mut b = a.clone();
    b.scale(C64::new(0.5f64.powi(s), 0.0));

    // Pade(6,6): c_k = (12-k)! 6! / (12! k! (6-k)!)
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let mut pow = CMat::identity(n);
    let mut p = CMat::identity(n);
    let mut q = CMat::identity(n);
    for (k, &ck) in C.iter().enumerate().skip(1) {
        pow = pow.matmul(&b);
        let mut term = pow.clone();
        term.scale(C64::new(ck, 0.0));
        p.add_assign(&term);
        if k % 2 == 1 {
            term.scale(C64::new(-1.0, 0.0));
        }
        q.add_assign(&term);
    }
    let lu = LuComplex::factor(n, q.a).expect("Pade denominator is well conditioned");
    let mut r = CMat::zeros(n);
    for j in 0..n {
        let col: Vec<C64> = (0..n).map(|i| p[(i, j)]).collect();
        let x = lu.solve(&col);
        for i in 0..n {
            r[(i, j)] = x[i];
        }
    }
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn real_lu_solves() {
        let a = vec![2.0, 1.0, -1.0, -3.0, -1.0, 2.0, -2.0, 1.0, 2.0];
        let lu = LuReal::factor(3, a).unwrap();
        let x = lu.solve(&[8.0, -11.0, -3.0]);
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((x[2] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_eigenvalues_of_diagonalizable_matrix() {
        // companion matrix of (x-1)(x-2i)(x+3) = x^3 + (2 - 2i) x^2 + (-3 - 4i) x + 6i
        // companion for x^3 + a2 x^2 + a1 x + a0:
        let a2 = c(2.0, -2.0);
        let a1 = c(-3.0, -4.0);
        let a0 = c(0.0, 6.0);
        let mut m = CMat::zeros(3);
        m[(0, 0)] = -a2;
        m[(0, 1)] = -a1;
        m[(0, 2)] = -a0;
        m[(1, 0)] = c(1.0, 0.0);
        m[(2, 1)] = c(1.0, 0.0);
        let mut eigs = eigenvalues(&m).unwrap();
        eigs.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        let expect = [c(-3.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)];
        for (got, want) in eigs.iter().zip(expect.iter()) {
            assert!((got - want).norm() < 1e-10, "got {got}, want {want}");
        }
    }

    #[test]
    fn eigenvalues_of_rotation_like_real_matrix() {
        // [[0, -1], [1, 0]] has eigenvalues +-i
        let m = CMat::from_real(2, &[0.0, -1.0, 1.0, 0.0]);
        let mut eigs = eigenvalues(&m).unwrap();
        eigs.sort_by(|x, y| x.im.partial_cmp(&y.im).unwrap());
        assert!((eigs[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((eigs[1] - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_larger_random_real_matrix_match_trace_and_det() {
        // deterministic pseudo-random entries; check sum(eig) = trace and
        // residual |det(A - lambda I)| small via LU of shifted matrix
        let n = 24;
        let mut a = vec![0.0; n * n];
        let mut state = 1234567u64;
        let mut trace = 0.0;
        for i in 0..n {
            for j in 0..n {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0;
                a[i * n + j] = v;
                if i == j {
                    trace += v;
                }
            }
        }
        let m = CMat::from_real(n, &a);
        let eigs = eigenvalues(&m).unwrap();
        let sum: C64 = eigs.iter().sum();
        assert!((sum.re - trace).abs() < 1e-8, "trace mismatch: {} vs {}", sum.re, trace);
        assert!(sum.im.abs() < 1e-8);
        // inverse iteration should return true eigenpairs with small residual
        for lam in eigs.iter().take(4) {
            let v = eigenvector(&m, *lam).unwrap();
            let av = m.matvec(&v);
            let mut resid = 0.0;
            for i in 0..n {
                resid += (av[i] - lam * v[i]).norm_sqr();
            }
            assert!(resid.sqrt() < 1e-8, "eigenpair residual {}", resid.sqrt());
        }
    }

    #[test]
    fn expm_of_nilpotent_and_diagonal() {
        // exp of diag(1, -2)
        let mut d = CMat::zeros(2);
        d[(0, 0)] = c(1.0, 0.0);
        d[(1, 1)] = c(-2.0, 0.0);
        let e = expm(&d);
        assert!((e[(0, 0)].re - 1.0f64.exp()).abs() < 1e-12);
        assert!((e[(1, 1)].re - (-2.0f64).exp()).abs() < 1e-12);
        assert!(e[(0, 1)].norm() < 1e-14);

        // exp of [[0, 1], [0, 0]] = [[1, 1], [0, 1]]
        let mut nil = CMat::zeros(2);
        nil[(0, 1)] = c(1.0, 0.0);
        let e = expm(&nil);
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((e[(0, 1)].re - 1.0).abs() < 1e-14);

        // exp of i*pi*sigma_y/2-ish rotation generator: exp([[0,-t],[t,0]]) = rotation
        let t = 0.7;
        let mut rot = CMat::zeros(2);
        rot[(0, 1)] = c(-t, 0.0);
        rot[(1, 0)] = c(t, 0.0);
        let e = expm(&rot);
        assert!((e[(0, 0)].re - t.cos()).abs() < 1e-12);
        assert!((e[(1, 0)].re - t.sin()).abs() < 1e-12);
    }

    #[test]
    fn arnoldi_recovers_dominant_eigenvalue() {
        // A = diag(3, 1, 0.5, ...) acting through a closure
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| 3.0 / (1.0 + i as f64)).collect();
        let mut apply = |v: &[f64]| -> Vec<f64> { v.iter().zip(&diag).map(|(x, d)| x * d).collect() };
        let v0: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).sin()).collect();
        let res = arnoldi(&mut apply, &v0, 20).unwrap();
        let mut hm = res.square_h();
        let eigs = hessenberg_eigenvalues(&mut hm).unwrap();
        let max_ritz = eigs.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        assert!((max_ritz - 3.0).abs() < 1e-10, "ritz {}", max_ritz);
    }
}
