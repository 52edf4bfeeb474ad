//! Deterministic helpers shared by unit tests.

use alloc::vec::Vec;

use crate::linalg::Matrix;

pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u, v) = (self.uniform(), self.uniform());
        libm::sqrt(-2.0 * libm::log(u)) * libm::cos(2.0 * core::f64::consts::PI * v)
    }
}

/// Intercept column followed by `d − 1` standard normal columns.
pub fn normal_design(rng: &mut SplitMix, n: usize, d: usize) -> Matrix {
    let data: Vec<f64> = (0..n * d)
        .map(|k| if k % d == 0 { 1.0 } else { rng.normal() })
        .collect();
    Matrix::from_row_major(n, d, data).unwrap()
}
