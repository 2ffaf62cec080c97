//! Truncated power-series arithmetic on coefficient vectors.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Product of two series truncated to `len` coefficients.
pub fn mul_trunc(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let a = &a[..a.len().min(len)];
    let b = &b[..b.len().min(len)];
    if a.is_empty() || b.is_empty() {
        return vec![0.0; len];
    }
    if a.len().min(b.len()) <= 64 {
        let mut out = vec![0.0; len];
        for (i, &x) in a.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate().take(len - i) {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let size = (a.len() + b.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex<f64>> = a.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut fb: Vec<Complex<f64>> = b.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fb.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = fa.iter().take(len).map(|c| c.re * scale).collect();
    out.resize(len, 0.0);
    out
}

/// Reciprocal of a series with nonzero constant term, to `len` coefficients,
/// by Newton iteration `h <- h (2 - g h)`.
pub fn inverse(g: &[f64], len: usize) -> Vec<f64> {
    assert!(g[0] != 0.0, "series inverse needs a nonzero constant term");
    let mut h = vec![1.0 / g[0]];
    let mut m = 1;
    while m < len {
        m = (2 * m).min(len);
        let gh = mul_trunc(&g[..g.len().min(m)], &h, m);
        let mut corr: Vec<f64> = gh.iter().map(|x| -x).collect();
        corr[0] += 2.0;
        h = mul_trunc(&h, &corr, m);
    }
    h.truncate(len);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_of_one_minus_z() {
        let h = inverse(&[1.0, -1.0], 300);
        assert!(h.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fft_product_matches_schoolbook() {
        let a: Vec<f64> = (0..200).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b: Vec<f64> = (0..150).map(|i| (i as f64 * 0.1).sin()).collect();
        let fast = mul_trunc(&a, &b, 300);
        for k in 0..300 {
            let mut s = 0.0;
            for i in 0..=k {
                if i < a.len() && k - i < b.len() {
                    s += a[i] * b[k - i];
                }
            }
            assert_relative_eq!(fast[k], s, epsilon = 1e-11);
        }
    }
}
