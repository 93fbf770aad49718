//! Same-length convolution with a short or long symmetric kernel.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Real;

/// Kernels up to this length are applied directly.
pub(crate) const DIRECT_MAX: usize = 65;

/// `out[k] = Σ_d kernel[d + R]·v[k + d]` for `|d| ≤ R`, with `v` zero outside
/// its range. `kernel` has odd length `2R + 1`.
pub(crate) fn convolve_same<T: Real>(v: &[T], kernel: &[T]) -> Vec<T> {
    debug_assert!(kernel.len() % 2 == 1);
    if kernel.len() <= DIRECT_MAX || v.len() < 2 * DIRECT_MAX {
        direct(v, kernel)
    } else {
        fft(v, kernel)
    }
}

fn direct<T: Real>(v: &[T], kernel: &[T]) -> Vec<T> {
    let n = v.len() as i64;
    let r = (kernel.len() / 2) as i64;
    (0..n)
        .map(|k| {
            let lo = (k - r).max(0);
            let hi = (k + r).min(n - 1);
            let mut acc = T::zero();
            for j in lo..=hi {
                acc += kernel[(j - k + r) as usize] * v[j as usize];
            }
            acc
        })
        .collect()
}

fn fft<T: Real>(v: &[T], kernel: &[T]) -> Vec<T> {
    let n = v.len();
    let r = kernel.len() / 2;
    let size = (n + kernel.len()).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex<f64>> = vec![Complex::default(); size];
    for (slot, x) in a.iter_mut().zip(v) {
        slot.re = x.to_f64().unwrap_or(0.0);
    }
    // kernel reversed and centred at index 0 (wrapping), which turns the
    // correlation into a circular convolution
    let mut b: Vec<Complex<f64>> = vec![Complex::default(); size];
    for (i, w) in kernel.iter().enumerate() {
        let d = i as i64 - r as i64;
        b[(-d).rem_euclid(size as i64) as usize].re = w.to_f64().unwrap_or(0.0);
    }
    forward.process(&mut a);
    forward.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inverse.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| T::lit(c.re * scale)).collect()
}
