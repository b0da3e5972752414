//! Small dense spectral analysis: spectral radius, dominant-cluster spectral
//! projector, and the general-position test for fixed-point starts.
//!
//! Everything runs in plain f64: the linear-rate experiments that consume
//! these quantities need two or three digits of the rate, so extended
//! precision would buy nothing here. The eigen-machinery is the classic real
//! Schur route: Householder reduction to Hessenberg form, Francis
//! double-shift QR with deflation, splitting of real 2x2 blocks, direct
//! adjacent block swaps to reorder the dominant cluster to the top, and a
//! small Sylvester solve for the spectral projector.

use crate::rate::NormOrder;

/// Row-major dense square matrix as accepted at the API boundary.
pub type Matrix = Vec<Vec<f64>>;

const MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("matrix must be square and non-empty with at most {MAX_DIM} rows, got {0}")]
    BadDimension(String),
    #[error("eigen-iteration failed to converge")]
    NumericalFailure,
    #[error("an eigenvalue modulus falls too close to the cluster boundary")]
    IllSeparatedCluster,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Spectral data of a Jacobian: radius, dominant-cluster projector, and the
/// largest modulus strictly below the cluster.
#[derive(Debug, Clone)]
pub struct SpectralInfo {
    pub rho: f64,
    pub dominant_projector: Matrix,
    /// Largest eigenvalue modulus outside the dominant cluster; 0 when the
    /// cluster is the whole spectrum.
    pub subdominant_radius: f64,
}

// ---------------------------------------------------------------------------
// Flat matrix helpers
// ---------------------------------------------------------------------------

#[derive(Clone)]
struct Mat {
    n: usize,
    a: Vec<f64>,
}

impl Mat {
    fn zeros(n: usize) -> Self {
        Mat {
            n,
            a: vec![0.0; n * n],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(SpectralError::BadDimension(format!("{n} rows")));
        }
        let mut m = Mat::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SpectralError::BadDimension(format!(
                    "row {i} has {} entries in a {n}-row matrix",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SpectralError::DegenerateInput(format!(
                        "non-finite entry at ({i}, {j})"
                    )));
                }
                m.a[i * n + j] = *v;
            }
        }
        Ok(m)
    }

    fn to_rows(&self) -> Matrix {
        (0..self.n)
            .map(|i| self.a[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    fn mul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.at(i, k);
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * other.at(k, j);
                }
            }
        }
        out
    }

    fn transpose(&self) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.set(j, i, self.at(i, j));
            }
        }
        out
    }

    fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                self.a[i * self.n..(i + 1) * self.n]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Real Schur decomposition
// ---------------------------------------------------------------------------

/// J = Q T Q^T with T quasi-upper-triangular: 1x1 blocks for real
/// eigenvalues, 2x2 blocks for complex pairs.
struct Schur {
    t: Mat,
    q: Mat,
}

fn hessenberg(h: &mut Mat, q: &mut Mat) {
    let n = h.n;
    for k in 0..n.saturating_sub(2) {
        // Householder zeroing column k below the subdiagonal.
        let mut v: Vec<f64> = (k + 1..n).map(|i| h.at(i, k)).collect();
        let alpha = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if alpha == 0.0 {
            continue;
        }
        let alpha = if v[0] >= 0.0 { -alpha } else { alpha };
        v[0] -= alpha;
        let vnorm2 = v.iter().map(|x| x * x).sum::<f64>();
        if vnorm2 == 0.0 {
            continue;
        }
        // H rows
        for j in 0..n {
            let dot: f64 = (0..v.len()).map(|i| v[i] * h.at(k + 1 + i, j)).sum();
            let s = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                let val = h.at(k + 1 + i, j) - s * vi;
                h.set(k + 1 + i, j, val);
            }
        }
        // H columns
        for i in 0..n {
            let dot: f64 = (0..v.len()).map(|j| h.at(i, k + 1 + j) * v[j]).sum();
            let s = 2.0 * dot / vnorm2;
            for (j, vj) in v.iter().enumerate() {
                let val = h.at(i, k + 1 + j) - s * vj;
                h.set(i, k + 1 + j, val);
            }
        }
        // Accumulate Q
        for i in 0..n {
            let dot: f64 = (0..v.len()).map(|j| q.at(i, k + 1 + j) * v[j]).sum();
            let s = 2.0 * dot / vnorm2;
            for (j, vj) in v.iter().enumerate() {
                let val = q.at(i, k + 1 + j) - s * vj;
                q.set(i, k + 1 + j, val);
            }
        }
        for i in k + 2..n {
            h.set(i, k, 0.0);
        }
        h.set(k + 1, k, alpha);
    }
}

/// Applies a 3 (or 2) element Householder reflector determined by `x` to
/// rows `r..r+len` of `m` over columns `c0..` (left) and stores nothing.
fn house_vec(x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let alpha = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if alpha == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -alpha } else { alpha };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vnorm2 = v.iter().map(|u| u * u).sum::<f64>();
    if vnorm2 == 0.0 {
        None
    } else {
        Some((v, vnorm2))
    }
}

fn francis_qr(h: &mut Mat, q: &mut Mat) -> Result<(), SpectralError> {
    let n = h.n;
    if n == 1 {
        return Ok(());
    }
    let eps = f64::EPSILON;
    let hnorm = h.norm_inf().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter_since = 0usize;
    let mut total = 0usize;
    let max_total = 60 * n;

    'outer: loop {
        // Deflate negligible subdiagonals.
        let mut m = hi;
        while m > 0 {
            let sub = h.at(m, m - 1).abs();
            if sub <= eps * (h.at(m - 1, m - 1).abs() + h.at(m, m).abs()).max(eps * hnorm) {
                h.set(m, m - 1, 0.0);
                break;
            }
            m -= 1;
        }
        let lo = m;
        if lo == hi {
            // 1x1 converged.
            if hi == 0 {
                break 'outer;
            }
            hi -= 1;
            iter_since = 0;
            continue;
        }
        if lo + 1 == hi {
            // 2x2 converged (split later if its eigenvalues are real).
            if lo == 0 {
                break 'outer;
            }
            hi = lo - 1;
            iter_since = 0;
            continue;
        }

        total += 1;
        iter_since += 1;
        if total > max_total {
            return Err(SpectralError::NumericalFailure);
        }

        // Double shift from the trailing 2x2, with an exceptional shift
        // every ten stalled sweeps.
        let (s, t) = if iter_since % 11 == 10 {
            let w = h.at(hi, hi - 1).abs() + h.at(hi - 1, hi - 2).abs();
            (1.5 * w, w * w)
        } else {
            let a = h.at(hi - 1, hi - 1);
            let b = h.at(hi - 1, hi);
            let c = h.at(hi, hi - 1);
            let d = h.at(hi, hi);
            (a + d, a * d - b * c)
        };

        let mut x = h.at(lo, lo) * h.at(lo, lo) + h.at(lo, lo + 1) * h.at(lo + 1, lo)
            - s * h.at(lo, lo)
            + t;
        let mut y = h.at(lo + 1, lo) * (h.at(lo, lo) + h.at(lo + 1, lo + 1) - s);
        let mut z = if lo + 2 <= hi {
            h.at(lo + 2, lo + 1) * h.at(lo + 1, lo)
        } else {
            0.0
        };

        // Bulge chase; the last pass (k = hi - 1) is the closing 2-element
        // reflector that restores Hessenberg form.
        for k in lo..hi {
            let len = if k + 2 <= hi { 3 } else { 2 };
            let col = [x, y, z];
            if let Some((v, vnorm2)) = house_vec(&col[..len]) {
                let c0 = k.saturating_sub(1).max(lo);
                // Left: rows k..k+len.
                for j in c0..n {
                    let dot: f64 = (0..len).map(|i| v[i] * h.at(k + i, j)).sum();
                    let sfac = 2.0 * dot / vnorm2;
                    for (i, vi) in v[..len].iter().enumerate() {
                        let val = h.at(k + i, j) - sfac * vi;
                        h.set(k + i, j, val);
                    }
                }
                // Right: columns k..k+len.
                let rmax = (k + 3).min(hi);
                for i in 0..=rmax {
                    let dot: f64 = (0..len).map(|j| h.at(i, k + j) * v[j]).sum();
                    let sfac = 2.0 * dot / vnorm2;
                    for (j, vj) in v[..len].iter().enumerate() {
                        let val = h.at(i, k + j) - sfac * vj;
                        h.set(i, k + j, val);
                    }
                }
                // Accumulate.
                for i in 0..n {
                    let dot: f64 = (0..len).map(|j| q.at(i, k + j) * v[j]).sum();
                    let sfac = 2.0 * dot / vnorm2;
                    for (j, vj) in v[..len].iter().enumerate() {
                        let val = q.at(i, k + j) - sfac * vj;
                        q.set(i, k + j, val);
                    }
                }
            }
            x = h.at(k + 1, k);
            if k + 2 <= hi {
                y = h.at(k + 2, k);
            }
            if k + 3 <= hi {
                z = h.at(k + 3, k);
            } else {
                z = 0.0;
            }
        }
    }

    // Hygiene: exact zeros strictly below the subdiagonal.
    for i in 2..n {
        for j in 0..i - 1 {
            h.set(i, j, 0.0);
        }
    }
    Ok(())
}

/// Rotates real-eigenvalue 2x2 blocks into two 1x1 blocks so that only
/// complex pairs remain as 2x2 blocks.
fn split_real_blocks(t: &mut Mat, q: &mut Mat) {
    let n = t.n;
    let mut i = 0;
    while i + 1 < n {
        if t.at(i + 1, i) == 0.0 {
            i += 1;
            continue;
        }
        let a = t.at(i, i);
        let b = t.at(i, i + 1);
        let c = t.at(i + 1, i);
        let d = t.at(i + 1, i + 1);
        let half = 0.5 * (a - d);
        let disc = half * half + b * c;
        if disc < 0.0 {
            i += 2;
            continue;
        }
        // Real pair: rotate the eigenvector of the larger eigenvalue first.
        let root = disc.sqrt();
        let mid = 0.5 * (a + d);
        let lam = if mid >= 0.0 { mid + root } else { mid - root };
        // (A - lam I) v = 0; take the better-conditioned row.
        let (vx, vy) = if b.abs() + (lam - a).abs() >= c.abs() + (lam - d).abs() {
            (b, lam - a)
        } else {
            (lam - d, c)
        };
        let norm = (vx * vx + vy * vy).sqrt();
        let (cs, sn) = if norm == 0.0 {
            (1.0, 0.0)
        } else {
            (vx / norm, vy / norm)
        };
        // G = [[cs, -sn], [sn, cs]]; apply G^T on the left, G on the right.
        for j in 0..n {
            let r0 = t.at(i, j);
            let r1 = t.at(i + 1, j);
            t.set(i, j, cs * r0 + sn * r1);
            t.set(i + 1, j, -sn * r0 + cs * r1);
        }
        for r in 0..n {
            let c0 = t.at(r, i);
            let c1 = t.at(r, i + 1);
            t.set(r, i, cs * c0 + sn * c1);
            t.set(r, i + 1, -sn * c0 + cs * c1);
        }
        for r in 0..n {
            let c0 = q.at(r, i);
            let c1 = q.at(r, i + 1);
            q.set(r, i, cs * c0 + sn * c1);
            q.set(r, i + 1, -sn * c0 + cs * c1);
        }
        t.set(i + 1, i, 0.0);
        i += 1;
    }
}

fn schur(j: &Mat) -> Result<Schur, SpectralError> {
    let n = j.n;
    let mut t = j.clone();
    let mut q = Mat::identity(n);
    hessenberg(&mut t, &mut q);
    francis_qr(&mut t, &mut q)?;
    split_real_blocks(&mut t, &mut q);
    Ok(Schur { t, q })
}

/// Diagonal block layout of a quasi-triangular T.
#[derive(Debug, Clone, Copy)]
struct Block {
    start: usize,
    size: usize,
    modulus: f64,
}

fn scan_blocks(t: &Mat) -> Vec<Block> {
    let n = t.n;
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t.at(i + 1, i) != 0.0 {
            let det = t.at(i, i) * t.at(i + 1, i + 1) - t.at(i, i + 1) * t.at(i + 1, i);
            blocks.push(Block {
                start: i,
                size: 2,
                modulus: det.max(0.0).sqrt(),
            });
            i += 2;
        } else {
            blocks.push(Block {
                start: i,
                size: 1,
                modulus: t.at(i, i).abs(),
            });
            i += 1;
        }
    }
    blocks
}

// ---------------------------------------------------------------------------
// Sylvester solves and block swapping
// ---------------------------------------------------------------------------

/// Solves A X - X B = C by dense Gaussian elimination on the Kronecker
/// system; A is p x p, B q x q, C and X p x q.
fn sylvester(a: &[f64], p: usize, b: &[f64], q: usize, c: &[f64]) -> Option<Vec<f64>> {
    let m = p * q;
    // Column-major vec(X): unknown index (i, j) -> j * p + i.
    let mut sys = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for j in 0..q {
        for i in 0..p {
            let row = j * p + i;
            rhs[row] = c[i * q + j];
            for k in 0..p {
                sys[row * m + j * p + k] += a[i * p + k];
            }
            for k in 0..q {
                sys[row * m + k * p + i] -= b[k * q + j];
            }
        }
    }
    // Partial-pivot elimination.
    for col in 0..m {
        let (piv, pv) = (col..m)
            .map(|r| (r, sys[r * m + col].abs()))
            .fold((col, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pv < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..m {
                sys.swap(piv * m + j, col * m + j);
            }
            rhs.swap(piv, col);
        }
        let d = sys[col * m + col];
        for r in col + 1..m {
            let f = sys[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..m {
                sys[r * m + j] -= f * sys[col * m + j];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = rhs[row];
        for j in row + 1..m {
            acc -= sys[row * m + j] * x[j];
        }
        x[row] = acc / sys[row * m + row];
    }
    // Back to row-major p x q.
    let mut out = vec![0.0; m];
    for j in 0..q {
        for i in 0..p {
            out[i * q + j] = x[j * p + i];
        }
    }
    Some(out)
}

fn copy_block(t: &Mat, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = t.at(r0 + i, c0 + j);
        }
    }
    out
}

/// Swaps two adjacent diagonal blocks of T in place (sizes p then q starting
/// at row `i`), updating Q. Direct method: the invariant subspace of the
/// trailing block is rotated to the front by a small QR.
fn swap_adjacent(t: &mut Mat, q: &mut Mat, i: usize, p: usize, qq: usize) -> Result<(), SpectralError> {
    let n = t.n;
    let a = copy_block(t, i, i, p, p);
    let b = copy_block(t, i + p, i + p, qq, qq);
    let c = copy_block(t, i, i + p, p, qq);
    let x = sylvester(&a, p, &b, qq, &c).ok_or(SpectralError::IllSeparatedCluster)?;

    // Z = [[-X], [I]]; Householder QR of the (p+q) x q block.
    let w = p + qq;
    let mut z = vec![0.0; w * qq];
    for r in 0..p {
        for col in 0..qq {
            z[r * qq + col] = -x[r * qq + col];
        }
    }
    for col in 0..qq {
        z[(p + col) * qq + col] = 1.0;
    }
    // Build the full orthogonal factor explicitly.
    let mut qfull = vec![0.0; w * w];
    for r in 0..w {
        qfull[r * w + r] = 1.0;
    }
    for col in 0..qq {
        let v: Vec<f64> = (col..w).map(|r| z[r * qq + col]).collect();
        if let Some((hv, vnorm2)) = house_vec(&v) {
            // Apply to remaining columns of Z.
            for c2 in col..qq {
                let dot: f64 = (0..hv.len()).map(|r| hv[r] * z[(col + r) * qq + c2]).sum();
                let s = 2.0 * dot / vnorm2;
                for r in 0..hv.len() {
                    z[(col + r) * qq + c2] -= s * hv[r];
                }
            }
            // Accumulate into qfull (right-multiply by the reflector).
            for r in 0..w {
                let dot: f64 = (0..hv.len()).map(|k| qfull[r * w + col + k] * hv[k]).sum();
                let s = 2.0 * dot / vnorm2;
                for k in 0..hv.len() {
                    qfull[r * w + col + k] -= s * hv[k];
                }
            }
        }
    }

    // T <- Q1^T T Q1 on the window rows/columns; Q <- Q Q1.
    let mut rows = vec![0.0; w * n];
    for r in 0..w {
        for jcol in 0..n {
            let mut acc = 0.0;
            for k in 0..w {
                acc += qfull[k * w + r] * t.at(i + k, jcol);
            }
            rows[r * n + jcol] = acc;
        }
    }
    for r in 0..w {
        for jcol in 0..n {
            t.set(i + r, jcol, rows[r * n + jcol]);
        }
    }
    let mut cols = vec![0.0; n * w];
    for r in 0..n {
        for jcol in 0..w {
            let mut acc = 0.0;
            for k in 0..w {
                acc += t.at(r, i + k) * qfull[k * w + jcol];
            }
            cols[r * w + jcol] = acc;
        }
    }
    for r in 0..n {
        for jcol in 0..w {
            t.set(r, i + jcol, cols[r * w + jcol]);
        }
    }
    for r in 0..n {
        for jcol in 0..w {
            let mut acc = 0.0;
            for k in 0..w {
                acc += q.at(r, i + k) * qfull[k * w + jcol];
            }
            cols[r * w + jcol] = acc;
        }
    }
    for r in 0..n {
        for jcol in 0..w {
            q.set(r, i + jcol, cols[r * w + jcol]);
        }
    }

    // The (2,1) block of the window is now numerically zero; make it exact
    // and fail loudly if it is not small.
    let tnorm = t.norm_inf().max(f64::MIN_POSITIVE);
    for r in qq..w {
        for jcol in 0..qq.min(w) {
            let v = t.at(i + r, i + jcol);
            if v.abs() > 1e-8 * tnorm {
                return Err(SpectralError::NumericalFailure);
            }
            t.set(i + r, i + jcol, 0.0);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Largest eigenvalue modulus of a dense real matrix (n <= 64).
pub fn spectral_radius(j: &[Vec<f64>]) -> Result<f64, SpectralError> {
    let m = Mat::from_rows(j)?;
    let s = schur(&m)?;
    Ok(scan_blocks(&s.t)
        .iter()
        .map(|b| b.modulus)
        .fold(0.0, f64::max))
}

/// Computes the spectral projector onto the dominant-modulus cluster:
/// eigenvalues with `|lam| >= rho (1 - cluster_tol)` (complex pairs always
/// travel together). An eigenvalue outside the cluster whose modulus lies
/// within `10 * cluster_tol * rho` of the boundary is refused as
/// ill-separated.
pub fn dominant_projector(j: &[Vec<f64>], cluster_tol: f64) -> Result<SpectralInfo, SpectralError> {
    if !(cluster_tol > 0.0 && cluster_tol < 0.5) {
        return Err(SpectralError::DegenerateInput(
            "cluster_tol must lie in (0, 0.5)".into(),
        ));
    }
    let m = Mat::from_rows(j)?;
    let n = m.n;
    let Schur { mut t, mut q } = schur(&m)?;

    let rho = scan_blocks(&t)
        .iter()
        .map(|b| b.modulus)
        .fold(0.0, f64::max);
    if rho == 0.0 {
        // Nilpotent: the whole spectrum is the cluster.
        return Ok(SpectralInfo {
            rho,
            dominant_projector: Mat::identity(n).to_rows(),
            subdominant_radius: 0.0,
        });
    }
    let boundary = rho * (1.0 - cluster_tol);
    let in_cluster = |modulus: f64| modulus >= boundary;
    for b in scan_blocks(&t) {
        if !in_cluster(b.modulus) && boundary - b.modulus <= 10.0 * cluster_tol * rho {
            return Err(SpectralError::IllSeparatedCluster);
        }
    }

    // Bubble dominant blocks to the top with adjacent swaps.
    loop {
        let blocks = scan_blocks(&t);
        let mut frontier = 0;
        while frontier < blocks.len() && in_cluster(blocks[frontier].modulus) {
            frontier += 1;
        }
        let Some(next) = blocks[frontier..]
            .iter()
            .position(|b| in_cluster(b.modulus))
            .map(|off| frontier + off)
        else {
            break;
        };
        // Move block `next` up one position; rescan (starts shift).
        let upper = blocks[next - 1];
        let lower = blocks[next];
        swap_adjacent(&mut t, &mut q, upper.start, upper.size, lower.size)?;
    }

    let blocks = scan_blocks(&t);
    let mut k = 0;
    let mut subdominant: f64 = 0.0;
    for b in &blocks {
        if in_cluster(b.modulus) {
            k += b.size;
        } else {
            subdominant = subdominant.max(b.modulus);
        }
    }

    // P = Q [[I, R], [0, 0]] Q^T with T11 R - R T22 = T12.
    let mut pt = Mat::zeros(n);
    for i in 0..k {
        pt.set(i, i, 1.0);
    }
    if k < n {
        let a = copy_block(&t, 0, 0, k, k);
        let b = copy_block(&t, k, k, n - k, n - k);
        let c = copy_block(&t, 0, k, k, n - k);
        let r = sylvester(&a, k, &b, n - k, &c).ok_or(SpectralError::IllSeparatedCluster)?;
        for i in 0..k {
            for jcol in 0..n - k {
                pt.set(i, k + jcol, r[i * (n - k) + jcol]);
            }
        }
    }
    let p = q.mul(&pt).mul(&q.transpose());

    Ok(SpectralInfo {
        rho,
        dominant_projector: p.to_rows(),
        subdominant_radius: subdominant,
    })
}

/// True iff the start has a component in the dominant subspace:
/// `||P xi0||_2 > tol ||xi0||_2`.
pub fn general_position_check(
    info: &SpectralInfo,
    xi0: &[f64],
    tol: f64,
) -> Result<bool, SpectralError> {
    let n = info.dominant_projector.len();
    if xi0.len() != n {
        return Err(SpectralError::BadDimension(format!(
            "xi0 has {} entries, projector is {n} x {n}",
            xi0.len()
        )));
    }
    let norm0 = xi0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm0 == 0.0 {
        return Err(SpectralError::DegenerateInput("xi0 is zero".into()));
    }
    let mut proj = 0.0;
    for row in &info.dominant_projector {
        let dot: f64 = row.iter().zip(xi0).map(|(a, b)| a * b).sum();
        proj += dot * dot;
    }
    Ok(proj.sqrt() > tol * norm0)
}

/// Measures the l_p norm deviation used by tests; re-exported convenience
/// over the rate-module norms for f64 vectors.
pub fn vec_norm(v: &[f64], p: NormOrder) -> f64 {
    match p {
        NormOrder::One => v.iter().map(|x| x.abs()).sum(),
        NormOrder::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormOrder::Inf => v.iter().map(|x| x.abs()).fold(0.0, f64::max),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frob_diff(a: &Matrix, b: &Matrix) -> f64 {
        let mut acc = 0.0;
        for (ra, rb) in a.iter().zip(b) {
            for (x, y) in ra.iter().zip(rb) {
                acc += (x - y) * (x - y);
            }
        }
        acc.sqrt()
    }

    fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
        let n = a.len();
        let mut out = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        out
    }

    fn rotation(theta: f64, scale: f64) -> Matrix {
        vec![
            vec![scale * theta.cos(), -scale * theta.sin()],
            vec![scale * theta.sin(), scale * theta.cos()],
        ]
    }

    /// Orthogonal matrix from the QR factorization of a seeded Gaussian.
    #[allow(clippy::needless_range_loop)]
    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        // Gram-Schmidt is plenty at these sizes.
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        for i in 0..n {
            for j in 0..i {
                let dot: f64 = (0..n).map(|r| cols[i][r] * cols[j][r]).sum();
                for r in 0..n {
                    cols[i][r] -= dot * cols[j][r];
                }
            }
            let norm = cols[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            for r in 0..n {
                cols[i][r] /= norm;
            }
        }
        let mut q = vec![vec![0.0; n]; n];
        for (j, col) in cols.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                q[i][j] = *v;
            }
        }
        q
    }

    #[test]
    fn radius_of_diagonal() {
        let r = spectral_radius(&[vec![0.5, 0.0], vec![0.0, 0.2]]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn radius_of_nilpotent_is_zero() {
        let r = spectral_radius(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn radius_of_scaled_rotation() {
        let r = spectral_radius(&rotation(0.3, 0.7)).unwrap();
        assert!((r - 0.7).abs() < 1e-10);
    }

    #[test]
    fn radius_matches_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 5, 8] {
            let j: Matrix = (0..n)
                .map(|_| (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
                .collect();
            let jt: Matrix = (0..n).map(|i| (0..n).map(|r| j[r][i]).collect()).collect();
            let a = spectral_radius(&j).unwrap();
            let b = spectral_radius(&jt).unwrap();
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn projector_of_diagonal() {
        let info = dominant_projector(&[vec![0.5, 0.0], vec![0.0, 0.2]], 1e-6).unwrap();
        assert!((info.rho - 0.5).abs() < 1e-12);
        assert!((info.subdominant_radius - 0.2).abs() < 1e-12);
        let expect = vec![vec![1.0, 0.0], vec![0.0, 0.0]];
        assert!(frob_diff(&info.dominant_projector, &expect) < 1e-10);
    }

    #[test]
    fn projector_of_jordan_block_is_identity() {
        let info = dominant_projector(&[vec![0.5, 1.0], vec![0.0, 0.5]], 1e-6).unwrap();
        let expect = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(frob_diff(&info.dominant_projector, &expect) < 1e-10);
        assert_eq!(info.subdominant_radius, 0.0);
    }

    #[test]
    fn projector_groups_equal_moduli() {
        let j = vec![
            vec![0.9, 0.0, 0.0],
            vec![0.0, -0.9, 0.0],
            vec![0.0, 0.0, 0.1],
        ];
        let info = dominant_projector(&j, 1e-6).unwrap();
        let expect = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ];
        assert!(frob_diff(&info.dominant_projector, &expect) < 1e-10);
        assert!((info.subdominant_radius - 0.1).abs() < 1e-10);
    }

    #[test]
    fn projector_handles_trailing_dominant_block() {
        // Dominant complex pair sits at the bottom: exercises a (1, 2) swap.
        let mut j = vec![vec![0.0; 3]; 3];
        j[0][0] = 0.3;
        let r = rotation(0.4, 0.8);
        for i in 0..2 {
            for k in 0..2 {
                j[1 + i][1 + k] = r[i][k];
            }
        }
        let info = dominant_projector(&j, 1e-6).unwrap();
        assert!((info.rho - 0.8).abs() < 1e-10);
        let expect = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        assert!(frob_diff(&info.dominant_projector, &expect) < 1e-9);
    }

    #[test]
    fn projector_swaps_pair_past_pair() {
        // 2x2 complex block above a larger 2x2 complex block: a (2, 2) swap.
        let mut j = vec![vec![0.0; 4]; 4];
        let low = rotation(0.7, 0.4);
        let high = rotation(0.2, 0.8);
        for i in 0..2 {
            for k in 0..2 {
                j[i][k] = low[i][k];
                j[2 + i][2 + k] = high[i][k];
            }
        }
        let info = dominant_projector(&j, 1e-6).unwrap();
        assert!((info.rho - 0.8).abs() < 1e-10);
        assert!((info.subdominant_radius - 0.4).abs() < 1e-10);
        let mut expect = vec![vec![0.0; 4]; 4];
        expect[2][2] = 1.0;
        expect[3][3] = 1.0;
        assert!(frob_diff(&info.dominant_projector, &expect) < 1e-9);
    }

    #[test]
    fn projector_invariants_on_rotated_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..40 {
            let n = rng.gen_range(2..=6);
            let rho = rng.gen_range(0.2..0.9);
            // Block diagonal: dominant 1x1 [rho], then smaller 1x1s or a
            // scaled rotation.
            let mut b = vec![vec![0.0; n]; n];
            b[0][0] = rho;
            let mut i = 1;
            while i < n {
                let sub = rho * rng.gen_range(0.1..0.6);
                if i + 1 < n && rng.gen_bool(0.5) {
                    let r = rotation(rng.gen_range(0.2..1.2), sub);
                    for a in 0..2 {
                        for c in 0..2 {
                            b[i + a][i + c] = r[a][c];
                        }
                    }
                    i += 2;
                } else {
                    b[i][i] = if rng.gen_bool(0.5) { sub } else { -sub };
                    i += 1;
                }
            }
            let q = random_orthogonal(n, &mut rng);
            let qt: Matrix = (0..n).map(|i| (0..n).map(|r| q[r][i]).collect()).collect();
            let j = mat_mul(&mat_mul(&q, &b), &qt);

            let info = dominant_projector(&j, 1e-6).expect("projector");
            assert!((info.rho - rho).abs() < 1e-8, "trial {trial}");

            let p = &info.dominant_projector;
            let pp = mat_mul(p, p);
            assert!(frob_diff(&pp, p) < 1e-10, "trial {trial}: P^2 != P");
            let pj = mat_mul(p, &j);
            let jp = mat_mul(&j, p);
            assert!(frob_diff(&pj, &jp) < 1e-10, "trial {trial}: PJ != JP");

            // Constructed truth: P = Q e1 e1^T Q^T.
            let mut e11 = vec![vec![0.0; n]; n];
            e11[0][0] = 1.0;
            let p_true = mat_mul(&mat_mul(&q, &e11), &qt);
            assert!(frob_diff(p, &p_true) < 1e-8, "trial {trial}: wrong subspace");
            assert!(info.subdominant_radius < info.rho);
        }
    }

    #[test]
    fn ill_separated_moduli_are_refused() {
        let j = vec![vec![1.0, 0.0], vec![0.0, 1.0 - 6e-6]];
        assert_eq!(
            dominant_projector(&j, 1e-6).unwrap_err(),
            SpectralError::IllSeparatedCluster
        );
    }

    #[test]
    fn general_position_basics() {
        let info = dominant_projector(&[vec![0.9, 0.0], vec![0.0, 0.1]], 1e-6).unwrap();
        assert!(general_position_check(&info, &[1.0, 1.0], 1e-8).unwrap());
        assert!(!general_position_check(&info, &[0.0, 1.0], 1e-8).unwrap());
        assert!(general_position_check(&info, &[0.0, 0.0], 1e-8).is_err());
    }

    #[test]
    fn subdominant_start_converges_at_subdominant_rate() {
        // x0 confined to the 0.1-eigenspace: the run measures 0.1, not 0.9.
        use crate::numerics::XReal;
        use crate::rate::{p_base_estimate, PowerFunction, Tail};
        use crate::solvers::{fixed_point_iterate, RunControl, VectorProblem};

        let problem = VectorProblem::new(
            "subdominant",
            |v: &[XReal]| {
                Ok(vec![
                    v[0].mul(&XReal::from_f64(0.9)),
                    v[1].mul(&XReal::from_f64(0.1)),
                ])
            },
            vec![XReal::zero(512), XReal::zero(512)],
            Some(vec![vec![0.9, 0.0], vec![0.0, 0.1]]),
        );
        let ctrl = RunControl {
            max_iter: 200,
            ..RunControl::default()
        };
        let run =
            fixed_point_iterate(&problem, &[XReal::zero(512), XReal::from_f64(1.0)], &ctrl)
                .unwrap();
        let p = p_base_estimate(&run.errors, &PowerFunction::Power { r: 1.0 }, &Tail::LastHalf)
            .unwrap();
        assert!((p - 0.1).abs() < 1e-2, "p = {p}");
    }

    #[test]
    fn random_runs_recover_spectral_radius() {
        // Dense rotated matrices, general-position starts: the measured
        // linear rate is rho(J) to within 1e-2 at 200 iterations.
        use crate::numerics::XReal;
        use crate::rate::{p_base_estimate, PowerFunction, Tail};
        use crate::solvers::{fixed_point_iterate, RunControl, VectorProblem};

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [2usize, 4, 6] {
            let rho = rng.gen_range(0.3..0.8);
            let mut b = vec![vec![0.0; n]; n];
            b[0][0] = rho;
            for (i, row) in b.iter_mut().enumerate().skip(1) {
                row[i] = rho * rng.gen_range(0.1..0.5);
            }
            let q = random_orthogonal(n, &mut rng);
            let qt: Matrix = (0..n).map(|i| (0..n).map(|r| q[r][i]).collect()).collect();
            let j = mat_mul(&mat_mul(&q, &b), &qt);

            let jx = j.clone();
            let problem = VectorProblem::new(
                format!("random-{n}"),
                move |v: &[XReal]| {
                    Ok(jx
                        .iter()
                        .map(|row| {
                            let mut acc = XReal::zero(v[0].precision());
                            for (aij, vj) in row.iter().zip(v) {
                                acc = acc.add(&XReal::from_f64(*aij).mul(vj));
                            }
                            acc
                        })
                        .collect())
                },
                vec![XReal::zero(512); n],
                Some(j.clone()),
            );
            // General-position start with a real margin: resample until the
            // component along the dominant direction is at least 0.4, so the
            // amplitude factor washes out of the 200-step tail.
            let q1: Vec<f64> = (0..n).map(|r| q[r][0]).collect();
            let x0f: Vec<f64> = loop {
                let cand: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = cand.iter().zip(&q1).map(|(a, b)| a * b).sum();
                if norm > 0.0 && dot.abs() >= 0.4 * norm {
                    break cand.iter().map(|v| v / norm).collect();
                }
            };
            let x0: Vec<XReal> = x0f.iter().map(|v| XReal::from_f64(*v)).collect();
            let ctrl = RunControl {
                max_iter: 200,
                ..RunControl::default()
            };
            let run = fixed_point_iterate(&problem, &x0, &ctrl).unwrap();
            let p =
                p_base_estimate(&run.errors, &PowerFunction::Power { r: 1.0 }, &Tail::LastHalf)
                    .unwrap();
            assert!((p - rho).abs() < 1e-2, "n={n}: p={p}, rho={rho}");
        }
    }
}
