//! Row-major f64 matrix kernels. Three layouts cover every product the
//! tape needs: `nn` (A·B), `nt` (A·Bᵀ), `tn` (Aᵀ·B); all accumulate into C.
//!
//! Dimension convention for all three: `m` = C rows, `k` = inner dim,
//! `n` = C cols.
//!
//! Kernels keep a 4×16 accumulator tile in registers and block the inner
//! dimension so the streamed panel stays cache-resident. Products are
//! written as plain `acc += a * b` (which the auto-vectorizer turns into
//! packed ops) rather than `mul_add` (which stays scalar).
//!
//! With the `std` feature, large products split across a fixed number of
//! tasks (set via [`set_threads`]). The split is over disjoint C row
//! ranges for `nn`/`nt` (bit-identical to serial for any task count); `tn`
//! reduces per-chunk partials in chunk order, so its result is
//! reproducible for a fixed task count.

use core::sync::atomic::{AtomicUsize, Ordering};

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Fix the number of worker tasks used by large kernels. 0 = auto.
pub fn set_threads(n: usize) {
    THREADS.store(n, Ordering::Relaxed);
}

/// Worker tasks currently in effect.
pub fn threads() -> usize {
    let n = THREADS.load(Ordering::Relaxed);
    if n != 0 {
        return n;
    }
    #[cfg(feature = "std")]
    {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(8)
    }
    #[cfg(not(feature = "std"))]
    {
        1
    }
}

// Products below this many flops are not worth dispatching: task spawn
// and join overhead outweighs the split.
#[cfg(feature = "std")]
const PAR_MIN_FLOPS: usize = 1 << 28;

const MR: usize = 4; // register tile rows
const NR: usize = 16; // register tile cols
const KC: usize = 384; // inner-dimension block
const IB: usize = 64; // row block keeping the A panel cache-resident
const NT_JB: usize = 64; // B-row block for the small-product nt kernel
// Above this size nt pays for a B transpose to use the nn kernel.
const NT_VIA_NN_FLOPS: usize = 1 << 22;

/// C(m,n) += A(m,k) · B(k,n).
pub fn nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let tasks = par_tasks(m, k, n);
    if tasks <= 1 {
        return nn_serial(m, k, n, a, b, c);
    }
    #[cfg(feature = "std")]
    row_split(m, tasks, a, k, c, n, &|rows, a_part, c_part| {
        nn_serial(rows, k, n, a_part, b, c_part)
    });
}

/// C(m,n) += A(m,k) · B(n,k)ᵀ.
pub fn nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    if 2 * m * k * n >= NT_VIA_NN_FLOPS {
        // flip B's layout once, then reuse the faster nn path
        let mut bt = alloc::vec![0.0f64; k * n];
        for i in 0..n {
            for j in 0..k {
                bt[j * n + i] = b[i * k + j];
            }
        }
        return nn(m, k, n, a, &bt, c);
    }
    let tasks = par_tasks(m, k, n);
    if tasks <= 1 {
        return nt_serial(m, k, n, a, b, c);
    }
    #[cfg(feature = "std")]
    row_split(m, tasks, a, k, c, n, &|rows, a_part, c_part| {
        nt_serial(rows, k, n, a_part, b, c_part)
    });
}

/// C(m,n) += A(k,m)ᵀ · B(k,n).
pub fn tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let tasks = par_tasks(m, k, n);
    if tasks <= 1 || k < 2 * tasks {
        return tn_serial(m, k, n, a, b, c);
    }
    #[cfg(feature = "std")]
    {
        use alloc::vec;
        use alloc::vec::Vec;
        // Per-chunk partial results, reduced in chunk order: reproducible
        // for a fixed task count.
        let chunk_rows = k.div_ceil(tasks);
        let mut partials: Vec<Vec<f64>> = (0..tasks).map(|_| vec![0.0; m * n]).collect();
        rayon::scope(|s| {
            for (idx, part) in partials.iter_mut().enumerate() {
                let k0 = idx * chunk_rows;
                let k1 = (k0 + chunk_rows).min(k);
                if k0 >= k1 {
                    continue;
                }
                let a_part = &a[k0 * m..k1 * m];
                let b_part = &b[k0 * n..k1 * n];
                s.spawn(move |_| tn_serial(m, k1 - k0, n, a_part, b_part, part));
            }
        });
        for part in &partials {
            for (ci, pi) in c.iter_mut().zip(part.iter()) {
                *ci += *pi;
            }
        }
    }
}

fn par_tasks(m: usize, k: usize, n: usize) -> usize {
    let t = threads();
    if t <= 1 {
        return 1;
    }
    #[cfg(feature = "std")]
    {
        if 2 * m * k * n >= PAR_MIN_FLOPS {
            return t.min(m.max(1));
        }
    }
    let _ = (m, k, n);
    1
}

#[cfg(feature = "std")]
fn row_split(
    m: usize,
    tasks: usize,
    a: &[f64],
    a_cols: usize,
    c: &mut [f64],
    c_cols: usize,
    body: &(dyn Fn(usize, &[f64], &mut [f64]) + Sync),
) {
    let chunk = m.div_ceil(tasks);
    rayon::scope(|s| {
        let mut a_rest = a;
        let mut c_rest = c;
        let mut row = 0;
        while row < m {
            let rows = chunk.min(m - row);
            let (a_part, a_next) = a_rest.split_at(rows * a_cols);
            let (c_part, c_next) = c_rest.split_at_mut(rows * c_cols);
            a_rest = a_next;
            c_rest = c_next;
            s.spawn(move |_| body(rows, a_part, c_part));
            row += rows;
        }
    });
}

fn nn_serial(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    // blocked over k (B panel height), then over rows (A panel), so both
    // streamed panels stay cache-resident across the register tiles
    let mut k0 = 0;
    while k0 < k {
        let kb = KC.min(k - k0);
        let mut ib0 = 0;
        while ib0 < m {
            let ib = IB.min(m - ib0);
            let mut i0 = ib0;
            while i0 + MR <= ib0 + ib {
                let mut j0 = 0;
                while j0 + NR <= n {
                    let mut acc = [[0.0f64; NR]; MR];
                    for kk in k0..k0 + kb {
                        let brow = &b[kk * n + j0..kk * n + j0 + NR];
                        let a0 = a[i0 * k + kk];
                        let a1 = a[(i0 + 1) * k + kk];
                        let a2 = a[(i0 + 2) * k + kk];
                        let a3 = a[(i0 + 3) * k + kk];
                        for j in 0..NR {
                            let bv = brow[j];
                            acc[0][j] += a0 * bv;
                            acc[1][j] += a1 * bv;
                            acc[2][j] += a2 * bv;
                            acc[3][j] += a3 * bv;
                        }
                    }
                    for (di, arow) in acc.iter().enumerate() {
                        let crow = &mut c[(i0 + di) * n + j0..(i0 + di) * n + j0 + NR];
                        for j in 0..NR {
                            crow[j] += arow[j];
                        }
                    }
                    j0 += NR;
                }
                if j0 < n {
                    nn_edge(m, k, n, a, b, c, i0, MR, j0, n - j0, k0, kb);
                }
                i0 += MR;
            }
            if i0 < ib0 + ib {
                nn_edge(m, k, n, a, b, c, i0, ib0 + ib - i0, 0, n, k0, kb);
            }
            ib0 += ib;
        }
        k0 += kb;
    }
}

#[allow(clippy::too_many_arguments)]
fn nn_edge(
    _m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    i0: usize,
    ib: usize,
    j0: usize,
    jb: usize,
    k0: usize,
    kb: usize,
) {
    for di in 0..ib {
        let i = i0 + di;
        let crow = &mut c[i * n + j0..i * n + j0 + jb];
        for kk in k0..k0 + kb {
            let aik = a[i * k + kk];
            let brow = &b[kk * n + j0..kk * n + j0 + jb];
            for j in 0..jb {
                crow[j] += aik * brow[j];
            }
        }
    }
}

fn nt_serial(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    // Dot products of contiguous rows. B rows are processed in blocks so
    // the active block stays in L1 while all of A streams past it.
    const LANES: usize = 4;
    let kv = k / LANES * LANES;
    let mut j0 = 0;
    while j0 < n {
        let jb = NT_JB.min(n - j0);
        let mut i = 0;
        while i + 2 <= m {
            let a0 = &a[i * k..(i + 1) * k];
            let a1 = &a[(i + 1) * k..(i + 2) * k];
            let mut j = j0;
            while j + 2 <= j0 + jb {
                let b0 = &b[j * k..(j + 1) * k];
                let b1 = &b[(j + 1) * k..(j + 2) * k];
                let mut acc = [[0.0f64; LANES]; 4];
                let mut t = 0;
                while t < kv {
                    for l in 0..LANES {
                        acc[0][l] += a0[t + l] * b0[t + l];
                        acc[1][l] += a0[t + l] * b1[t + l];
                        acc[2][l] += a1[t + l] * b0[t + l];
                        acc[3][l] += a1[t + l] * b1[t + l];
                    }
                    t += LANES;
                }
                let mut sums = [0.0f64; 4];
                for (s, lanes) in sums.iter_mut().zip(acc.iter()) {
                    *s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
                }
                for t in kv..k {
                    sums[0] += a0[t] * b0[t];
                    sums[1] += a0[t] * b1[t];
                    sums[2] += a1[t] * b0[t];
                    sums[3] += a1[t] * b1[t];
                }
                c[i * n + j] += sums[0];
                c[i * n + j + 1] += sums[1];
                c[(i + 1) * n + j] += sums[2];
                c[(i + 1) * n + j + 1] += sums[3];
                j += 2;
            }
            while j < j0 + jb {
                let brow = &b[j * k..(j + 1) * k];
                c[i * n + j] += dot(a0, brow);
                c[(i + 1) * n + j] += dot(a1, brow);
                j += 1;
            }
            i += 2;
        }
        if i < m {
            let arow = &a[i * k..(i + 1) * k];
            for j in j0..j0 + jb {
                let brow = &b[j * k..(j + 1) * k];
                c[i * n + j] += dot(arow, brow);
            }
        }
        j0 += jb;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 4;
    let k = a.len();
    let kv = k / LANES * LANES;
    let mut acc = [0.0f64; LANES];
    let mut t = 0;
    while t < kv {
        for l in 0..LANES {
            acc[l] += a[t + l] * b[t + l];
        }
        t += LANES;
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for l in kv..k {
        s += a[l] * b[l];
    }
    s
}

fn tn_serial(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    // Same register tile as nn; A values per k live at stride m. Blocked
    // over k and over rows so both panels stay cache-resident.
    let mut k0 = 0;
    while k0 < k {
        let kb = KC.min(k - k0);
        let mut ib0 = 0;
        while ib0 < m {
            let ib = IB.min(m - ib0);
            let mut i0 = ib0;
            while i0 + MR <= ib0 + ib {
                let mut j0 = 0;
                while j0 + NR <= n {
                    let mut acc = [[0.0f64; NR]; MR];
                    for kk in k0..k0 + kb {
                        let brow = &b[kk * n + j0..kk * n + j0 + NR];
                        let acol = &a[kk * m + i0..kk * m + i0 + MR];
                        for j in 0..NR {
                            let bv = brow[j];
                            acc[0][j] += acol[0] * bv;
                            acc[1][j] += acol[1] * bv;
                            acc[2][j] += acol[2] * bv;
                            acc[3][j] += acol[3] * bv;
                        }
                    }
                    for (di, arow) in acc.iter().enumerate() {
                        let crow = &mut c[(i0 + di) * n + j0..(i0 + di) * n + j0 + NR];
                        for j in 0..NR {
                            crow[j] += arow[j];
                        }
                    }
                    j0 += NR;
                }
                if j0 < n {
                    tn_edge(m, n, a, b, c, i0, MR, j0, n - j0, k0, kb);
                }
                i0 += MR;
            }
            if i0 < ib0 + ib {
                tn_edge(m, n, a, b, c, i0, ib0 + ib - i0, 0, n, k0, kb);
            }
            ib0 += ib;
        }
        k0 += kb;
    }
}

#[allow(clippy::too_many_arguments)]
fn tn_edge(
    m: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    c: &mut [f64],
    i0: usize,
    ib: usize,
    j0: usize,
    jb: usize,
    k0: usize,
    kb: usize,
) {
    for kk in k0..k0 + kb {
        let brow = &b[kk * n + j0..kk * n + j0 + jb];
        for di in 0..ib {
            let av = a[kk * m + i0 + di];
            let crow = &mut c[(i0 + di) * n + j0..(i0 + di) * n + j0 + jb];
            for j in 0..jb {
                crow[j] += av * brow[j];
            }
        }
    }
}
