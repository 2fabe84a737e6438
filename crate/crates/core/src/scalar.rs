//! Scalar field abstraction for wavefunction amplitudes.
//!
//! Operator blocks are always real (all shipped couplings are real); the
//! amplitudes may be real or complex.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rand::RngCore;

/// Uniform on [-1, 1) from the top 53 bits of one `u64`.
pub fn unit_sample<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let x = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * x - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    Real,
    Complex,
}

impl ScalarKind {
    pub fn tag(self) -> u8 {
        match self {
            ScalarKind::Real => 0,
            ScalarKind::Complex => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ScalarKind::Real),
            1 => Some(ScalarKind::Complex),
            _ => None,
        }
    }
}

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + Default
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    const KIND: ScalarKind;
    /// Bytes per element in the little-endian state container.
    const BYTES: usize;

    fn zero() -> Self {
        Self::default()
    }
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn re(self) -> f64;
    fn im(self) -> f64;
    fn abs_sq(self) -> f64;
    fn scale(self, x: f64) -> Self;
    /// Draws a sample with components uniform on [-1, 1). Consumes exactly
    /// one `u64` (two 32-bit words) per component.
    fn sample<R: RngCore + ?Sized>(rng: &mut R) -> Self;
    /// Real components per element.
    fn components() -> usize {
        Self::BYTES / 8
    }
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const KIND: ScalarKind = ScalarKind::Real;
    const BYTES: usize = 8;

    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn sample<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        unit_sample(rng)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

impl Scalar for Complex64 {
    const KIND: ScalarKind = ScalarKind::Complex;
    const BYTES: usize = 16;

    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    fn scale(self, x: f64) -> Self {
        self * x
    }
    fn sample<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let re = unit_sample(rng);
        let im = unit_sample(rng);
        Complex64::new(re, im)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        let re = f64::from_le_bytes(bytes[..8].try_into().unwrap());
        let im = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        Complex64::new(re, im)
    }
}
