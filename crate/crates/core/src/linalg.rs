//! Sparse matrices and the linear solvers used by the time stepper.
//!
//! The system matrices are nonsingular M-matrices, so LU factorization
//! without pivoting is stable and ILU(0) is a robust preconditioner.

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Duplicate entries are summed. Every diagonal position is present in the
    /// pattern, even if zero.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![1usize; n];
        for &(i, _, _) in triplets {
            counts[i] += 1;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row.push((i, 0.0));
        }
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last = usize::MAX;
            for (j, v) in row {
                if j == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = j;
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Same pattern with all values zero.
    pub fn zeros_like(&self) -> Self {
        SparseMatrix {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Index of `(i, j)` in the value array, if stored.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Position of the diagonal entry of each row in `values`.
    pub fn diagonal_positions(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                let r = self.row_ptr[i]..self.row_ptr[i + 1];
                r.start + self.col_idx[r].binary_search(&i).expect("diagonal present in pattern")
            })
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec(x, &mut y);
        y
    }

    /// `self + s * other` for matrices sharing a pattern.
    pub fn axpy(&self, s: f64, other: &SparseMatrix) -> SparseMatrix {
        assert!(self.same_pattern(other));
        SparseMatrix {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect(),
            ..self.clone()
        }
    }
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖b - A x‖∞`.
pub fn residual_inf(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.n() {
        let ax: f64 = a.row(i).map(|(j, v)| v * x[j]).sum();
        worst = worst.max((b[i] - ax).abs());
    }
    worst
}

/// LU factorization without pivoting in banded storage under a symmetric
/// permutation.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    band: Vec<f64>,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl BandedLu {
    /// Lower and upper bandwidth of `a` under `perm`.
    pub fn bandwidths(a: &SparseMatrix, perm: &[usize]) -> (usize, usize) {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let (mut lo, mut up) = (0, 0);
        for i in 0..a.n() {
            let pi = inv[i];
            for (j, _) in a.row(i) {
                let pj = inv[j];
                if pj < pi {
                    lo = lo.max(pi - pj);
                } else {
                    up = up.max(pj - pi);
                }
            }
        }
        (lo, up)
    }

    /// Returns `None` if a zero pivot is met.
    pub fn factor(a: &SparseMatrix, perm: &[usize]) -> Option<BandedLu> {
        let n = a.n();
        let (lower, upper) = Self::bandwidths(a, perm);
        let width = lower + upper + 1;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut band = vec![0.0; n * width];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let pj = inv[j];
                band[new * width + (pj + lower - new)] += v;
            }
        }
        for k in 0..n {
            let pivot = band[k * width + lower];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            let jmax = (k + upper).min(n - 1);
            let imax = (k + lower).min(n - 1);
            let (head, tail) = band.split_at_mut((k + 1) * width);
            let pivot_row = &head[k * width + lower..k * width + lower + (jmax - k) + 1];
            for i in k + 1..=imax {
                let row = &mut tail[(i - k - 1) * width..(i - k) * width];
                let off = k + lower - i;
                let l = row[off] / pivot;
                if l == 0.0 {
                    continue;
                }
                row[off] = l;
                // row[j + lower - i] for j in k+1..=jmax
                let dst = &mut row[off + 1..off + 1 + (jmax - k)];
                for (d, &u) in dst.iter_mut().zip(&pivot_row[1..]) {
                    *d -= l * u;
                }
            }
        }
        Some(BandedLu {
            n,
            lower,
            upper,
            width,
            band,
            perm: perm.to_vec(),
            inv,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, w, lo) = (self.n, self.width, self.lower);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let j0 = i.saturating_sub(lo);
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = y[i];
            for j in j0..i {
                acc -= row[j + lo - i] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let jmax = (i + self.upper).min(n - 1);
            let row = &self.band[i * w..(i + 1) * w];
            let mut acc = y[i];
            for j in i + 1..=jmax {
                acc -= row[j + lo - i] * y[j];
            }
            y[i] = acc / row[lo];
        }
        (0..n).map(|old| y[self.inv[old]]).collect()
    }
}

/// Incomplete LU with zero fill-in on the pattern of `a`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: SparseMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(a: &SparseMatrix) -> Option<Ilu0> {
        let mut lu = a.clone();
        let diag = lu.diagonal_positions();
        let n = lu.n;
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k]] = k;
            }
            for k in start..diag[i] {
                let j = lu.col_idx[k];
                let piv = lu.values[diag[j]];
                if piv == 0.0 {
                    return None;
                }
                let l = lu.values[k] / piv;
                lu.values[k] = l;
                if l == 0.0 {
                    continue;
                }
                for m in diag[j] + 1..lu.row_ptr[j + 1] {
                    let p = pos[lu.col_idx[m]];
                    if p != usize::MAX {
                        lu.values[p] -= l * lu.values[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k]] = usize::MAX;
            }
            if lu.values[diag[i]] == 0.0 {
                return None;
            }
        }
        Some(Ilu0 { lu, diag })
    }

    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut acc = r[i];
            for k in lu.row_ptr[i]..self.diag[i] {
                acc -= lu.values[k] * out[lu.col_idx[k]];
            }
            out[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = out[i];
            for k in self.diag[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.values[k] * out[lu.col_idx[k]];
            }
            out[i] = acc / lu.values[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned BiCGSTAB. `x` holds the initial guess on entry.
/// Returns `true` once `‖b - A x‖∞ ≤ tol`.
pub fn bicgstab(a: &SparseMatrix, prec: &Ilu0, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> bool {
    let n = a.n();
    let mut r = vec![0.0; n];
    a.mul_vec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if inf_norm(&r) <= tol {
        return true;
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return false;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        prec.apply(&p, &mut p_hat);
        a.mul_vec(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 {
            return false;
        }
        alpha = rho / denom;
        // s is stored in r
        for i in 0..n {
            r[i] -= alpha * v[i];
            x[i] += alpha * p_hat[i];
        }
        if inf_norm(&r) <= tol {
            return residual_inf(a, x, b) <= tol;
        }
        prec.apply(&r, &mut s_hat);
        a.mul_vec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return false;
        }
        omega = dot(&t, &r) / tt;
        for i in 0..n {
            x[i] += omega * s_hat[i];
            r[i] -= omega * t[i];
        }
        if inf_norm(&r) <= tol {
            return residual_inf(a, x, b) <= tol;
        }
    }
    false
}
