//! Radix-2 complex FFT for power-of-two lengths.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Result};

/// Precomputed plan for in-place transforms of one fixed length.
///
/// `forward` computes `X_k = Σ_j x_j e^{-2πi jk/n}`; `inverse` applies the
/// conjugate kernel and divides by `n`, so `inverse(forward(x)) = x`.
/// With the `rustfft` feature the transforms run on `rustfft`; otherwise a
/// built-in radix-2 kernel is used.
#[derive(Clone)]
pub struct Fft {
    n: usize,
    backend: Backend,
}

#[derive(Clone)]
enum Backend {
    #[cfg_attr(feature = "rustfft", allow(dead_code))]
    Radix2(Radix2),
    #[cfg(feature = "rustfft")]
    RustFft {
        forward: alloc::sync::Arc<dyn rustfft::Fft<f64>>,
        inverse: alloc::sync::Arc<dyn rustfft::Fft<f64>>,
        scratch: core::cell::RefCell<Vec<Complex64>>,
    },
}

impl core::fmt::Debug for Fft {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let backend = match self.backend {
            Backend::Radix2(_) => "radix-2",
            #[cfg(feature = "rustfft")]
            Backend::RustFft { .. } => "rustfft",
        };
        f.debug_struct("Fft")
            .field("n", &self.n)
            .field("backend", &backend)
            .finish()
    }
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        check_length(n)?;
        #[cfg(feature = "rustfft")]
        {
            let mut planner = rustfft::FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Ok(Self {
                n,
                backend: Backend::RustFft {
                    forward,
                    inverse,
                    scratch: core::cell::RefCell::new(alloc::vec![Complex64::new(0.0, 0.0); len]),
                },
            })
        }
        #[cfg(not(feature = "rustfft"))]
        Self::radix2(n)
    }

    /// Plan on the built-in kernel regardless of features.
    pub fn radix2(n: usize) -> Result<Self> {
        check_length(n)?;
        Ok(Self {
            n,
            backend: Backend::Radix2(Radix2::new(n)),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n, "FFT buffer length");
        match &self.backend {
            Backend::Radix2(r) => r.transform(data, false),
            #[cfg(feature = "rustfft")]
            Backend::RustFft {
                forward, scratch, ..
            } => forward.process_with_scratch(data, &mut scratch.borrow_mut()),
        }
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.n, "FFT buffer length");
        match &self.backend {
            Backend::Radix2(r) => r.transform(data, true),
            #[cfg(feature = "rustfft")]
            Backend::RustFft {
                inverse, scratch, ..
            } => inverse.process_with_scratch(data, &mut scratch.borrow_mut()),
        }
        let scale = 1.0 / self.n as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

fn check_length(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(alloc::format!(
            "FFT length {n} is not a power of two >= 2"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Radix2 {
    // per stage of half-length h ≥ 4, the h twiddles e^{∓iπk/h}, stored
    // back to back so the inner loop reads them contiguously
    forward_twiddles: Vec<Complex64>,
    inverse_twiddles: Vec<Complex64>,
    swaps: Vec<(u32, u32)>,
}

impl Radix2 {
    fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let swaps = (0..n)
            .map(|i| (i, i.reverse_bits() >> (usize::BITS - bits)))
            .filter(|&(i, j)| i < j)
            .map(|(i, j)| (i as u32, j as u32))
            .collect();
        let mut forward_twiddles = Vec::new();
        let mut half = 4;
        while half < n {
            forward_twiddles.extend(
                (0..half).map(|k| Complex64::from_polar(1.0, -PI * k as f64 / half as f64)),
            );
            half *= 2;
        }
        let inverse_twiddles = forward_twiddles.iter().map(|w| w.conj()).collect();
        Self {
            forward_twiddles,
            inverse_twiddles,
            swaps,
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = data.len();
        for &(i, j) in &self.swaps {
            data.swap(i as usize, j as usize);
        }
        for pair in data.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = a + b;
            pair[1] = a - b;
        }
        if n >= 4 {
            // twiddles 1 and ∓i
            for quad in data.chunks_exact_mut(4) {
                let (a0, a1) = (quad[0], quad[1]);
                let b0 = quad[2];
                let b1 = if inverse {
                    Complex64::new(-quad[3].im, quad[3].re)
                } else {
                    Complex64::new(quad[3].im, -quad[3].re)
                };
                quad[0] = a0 + b0;
                quad[2] = a0 - b0;
                quad[1] = a1 + b1;
                quad[3] = a1 - b1;
            }
        }
        let table = if inverse {
            &self.inverse_twiddles
        } else {
            &self.forward_twiddles
        };
        let mut half = 4;
        let mut offset = 0;
        while half < n {
            let twiddles = &table[offset..offset + half];
            for block in data.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(twiddles) {
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            offset += half;
            half *= 2;
        }
    }
}
