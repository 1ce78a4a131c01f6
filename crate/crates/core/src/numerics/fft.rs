//! Real-input discrete Fourier transforms along the last axis.
//!
//! A spectrum of a length-`T` signal is stored as a tensor whose last two
//! axes are `[T/2 + 1, 2]` (real, imaginary).

use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use super::real::Real;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn bins_for(len: usize) -> usize {
    len / 2 + 1
}

/// Real DFT of every length-`T` row: `X_k = Σ_n x_n e^{-2πikn/T}`.
pub fn rdft<F: Real>(x: &Tensor<F>) -> Result<Tensor<F>> {
    let len = x.last_dim();
    if len < 2 {
        return Err(Error::Length { op: "rdft", len, min: 2 });
    }
    let bins = bins_for(len);
    let rows = x.len() / len;
    let mut out = Vec::with_capacity(rows * bins * 2);
    let plan = F::fft_plan(len, FftDirection::Forward);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); len];
    for row in x.data().chunks(len) {
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex::new(v, F::zero());
        }
        plan.process(&mut buf);
        for c in &buf[..bins] {
            out.push(c.re);
            out.push(c.im);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = bins;
    shape.push(2);
    Tensor::new(shape, out)
}

/// Weight of bin `k` in the real inverse transform: DC and Nyquist appear
/// once, every other bin stands for itself and its conjugate.
fn bin_weight(k: usize, len: usize) -> usize {
    if k == 0 || (len.is_multiple_of(2) && k == len / 2) {
        1
    } else {
        2
    }
}

/// Inverse of [`rdft`]. The imaginary parts of the DC and Nyquist bins do
/// not contribute.
pub fn irdft<F: Real>(spec: &Tensor<F>, len: usize) -> Result<Tensor<F>> {
    let shape = spec.shape();
    if shape.len() < 2 || shape[shape.len() - 1] != 2 {
        return Err(Error::Shape(format!(
            "irdft: spectrum must end in a (re, im) axis, got {shape:?}"
        )));
    }
    let bins = shape[shape.len() - 2];
    if len < 2 || bins != bins_for(len) {
        return Err(Error::Shape(format!(
            "irdft: {bins} bins cannot come from a length-{len} signal (needs {})",
            bins_for(len)
        )));
    }
    let rows = spec.len() / (bins * 2);
    let plan = F::fft_plan(len, FftDirection::Inverse);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); len];
    let scale = F::cast(1.0 / len as f64);
    let mut out = Vec::with_capacity(rows * len);
    for row in spec.data().chunks(bins * 2) {
        hermitian_fill(row, len, &mut buf);
        plan.process(&mut buf);
        out.extend(buf.iter().map(|c| c.re * scale));
    }
    let mut out_shape = shape[..shape.len() - 1].to_vec();
    *out_shape.last_mut().unwrap() = len;
    Tensor::new(out_shape, out)
}

fn hermitian_fill<F: Real>(row: &[F], len: usize, buf: &mut [Complex<F>]) {
    let bins = bins_for(len);
    for k in 0..bins {
        let (re, im) = (row[2 * k], row[2 * k + 1]);
        let im = if bin_weight(k, len) == 1 { F::zero() } else { im };
        buf[k] = Complex::new(re, im);
        if k > 0 && len - k >= bins {
            buf[len - k] = Complex::new(re, -im);
        }
    }
}

/// Vector-Jacobian product of [`rdft`]: maps a spectrum cotangent
/// `[.., bins, 2]` to a signal cotangent `[.., len]`.
pub(crate) fn rdft_adjoint<F: Real>(grad: &[F], len: usize, out: &mut [F]) {
    let bins = bins_for(len);
    let plan = F::fft_plan(len, FftDirection::Forward);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); len];
    for (g, o) in grad.chunks(bins * 2).zip(out.chunks_mut(len)) {
        buf.iter_mut().for_each(|b| *b = Complex::new(F::zero(), F::zero()));
        for k in 0..bins {
            buf[k] = Complex::new(g[2 * k], -g[2 * k + 1]);
        }
        plan.process(&mut buf);
        for (o, b) in o.iter_mut().zip(&buf) {
            *o = *o + b.re;
        }
    }
}

/// Vector-Jacobian product of [`irdft`].
pub(crate) fn irdft_adjoint<F: Real>(grad: &[F], len: usize, out: &mut [F]) {
    let bins = bins_for(len);
    let plan = F::fft_plan(len, FftDirection::Forward);
    let mut buf = vec![Complex::new(F::zero(), F::zero()); len];
    let inv = 1.0 / len as f64;
    for (g, o) in grad.chunks(len).zip(out.chunks_mut(bins * 2)) {
        for (b, &v) in buf.iter_mut().zip(g) {
            *b = Complex::new(v, F::zero());
        }
        plan.process(&mut buf);
        for k in 0..bins {
            let w = F::cast(bin_weight(k, len) as f64 * inv);
            o[2 * k] = o[2 * k] + buf[k].re * w;
            if bin_weight(k, len) == 2 {
                o[2 * k + 1] = o[2 * k + 1] + buf[k].im * w;
            }
        }
    }
}

/// Zeroes every bin at index `>= keep` of a `[.., bins, 2]` spectrum.
pub fn low_pass<F: Real>(spec: &Tensor<F>, keep: usize) -> Tensor<F> {
    let mut out = spec.clone();
    apply_low_pass(out.data_mut(), spec.shape()[spec.rank() - 2], keep);
    out
}

pub(crate) fn apply_low_pass<F: Real>(data: &mut [F], bins: usize, keep: usize) {
    for row in data.chunks_mut(bins * 2) {
        for v in &mut row[2 * keep.min(bins)..] {
            *v = F::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    /// O(T²) reference transform.
    fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
        let t = x.len();
        (0..bins_for(t))
            .map(|k| {
                x.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &v)| {
                    let th = 2.0 * PI * (k * n) as f64 / t as f64;
                    (re + v * th.cos(), im - v * th.sin())
                })
            })
            .collect()
    }

    fn signal(t: usize, seed: u64) -> Vec<f64> {
        (0..t)
            .map(|n| ((n as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0)
            .collect()
    }

    #[test]
    fn constant_signal_has_only_dc() {
        let x = Tensor::<f64>::full([16], 2.5);
        let s = rdft(&x).unwrap();
        assert!((s.at(&[0, 0]) - 40.0).abs() < 1e-12);
        for k in 1..9 {
            assert!(s.at(&[k, 0]).abs() < 1e-12 && s.at(&[k, 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoid_energy_lands_in_its_bin() {
        let x: Vec<f64> = (0..16).map(|t| (2.0 * PI * 3.0 * t as f64 / 16.0).sin()).collect();
        let oracle = naive_dft(&x);
        let s = rdft(&Tensor::<f64>::from_vec([16], x)).unwrap();
        for (k, &(re, im)) in oracle.iter().enumerate() {
            assert!((s.at(&[k, 0]) - re).abs() < 1e-12);
            assert!((s.at(&[k, 1]) - im).abs() < 1e-12);
            let mag = (re * re + im * im).sqrt();
            if k == 3 {
                assert!((mag - 8.0).abs() < 1e-12);
            } else {
                assert!(mag < 1e-12);
            }
        }
    }

    #[test]
    fn matches_naive_dft_and_parseval() {
        for t in [2usize, 3, 7, 16, 128] {
            let x = signal(t, t as u64);
            let oracle = naive_dft(&x);
            let s = rdft(&Tensor::<f64>::from_vec([t], x.clone())).unwrap();
            let mut spec_energy = 0.0;
            for (k, &(re, im)) in oracle.iter().enumerate() {
                assert!((s.at(&[k, 0]) - re).abs() < 1e-9);
                assert!((s.at(&[k, 1]) - im).abs() < 1e-9);
                spec_energy += bin_weight(k, t) as f64 * (re * re + im * im);
            }
            let energy: f64 = x.iter().map(|v| v * v).sum();
            assert!(((spec_energy / t as f64) - energy).abs() <= 1e-9 * energy);
        }
    }

    #[test]
    fn roundtrip_f64_and_f32() {
        for t in [2usize, 3, 16, 128] {
            let x = Tensor::<f64>::from_vec([3, t], (0..3).flat_map(|r| signal(t, r)).collect());
            let back = irdft(&rdft(&x).unwrap(), t).unwrap();
            assert!(back.max_abs_diff(&x) < 1e-12);
            let x32: Tensor<f32> = x.cast();
            let back32 = irdft(&rdft(&x32).unwrap(), t).unwrap();
            assert!(back32.max_abs_diff(&x32) < 1e-6);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(rdft(&Tensor::<f64>::zeros([1])), Err(Error::Length { .. })));
        let spec = Tensor::<f64>::zeros([5, 2]);
        assert!(irdft(&spec, 10).is_err());
        assert!(irdft(&spec, 8).is_ok() && irdft(&spec, 9).is_ok());
    }

    #[test]
    fn low_pass_is_idempotent() {
        let x = Tensor::<f64>::from_vec([16], signal(16, 9));
        let s = rdft(&x).unwrap();
        let once = low_pass(&s, 4);
        assert_eq!(low_pass(&once, 4), once);
        for k in 4..9 {
            assert_eq!(once.at(&[k, 0]), 0.0);
            assert_eq!(once.at(&[k, 1]), 0.0);
        }
    }
}
