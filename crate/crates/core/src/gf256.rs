//! Arithmetic in GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B).
//!
//! Addition is XOR. Multiplication is carry-less shift-and-add followed by
//! reduction, so no tables are involved.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign};

/// Low byte of the reduction polynomial 0x11B.
const REDUCTION: u8 = 0x1B;

/// One element of GF(256).
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0x00);
    pub const ONE: Gf256 = Gf256(0x01);

    #[inline]
    pub const fn new(value: u8) -> Self {
        Gf256(value)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    /// Multiplicative inverse, `None` for zero.
    pub fn inverse(self) -> Option<Gf256> {
        if self.0 == 0 {
            return None;
        }
        // a^254 = a^-1 since the multiplicative group has order 255.
        let mut result = Gf256::ONE;
        let mut base = self;
        let mut exp = 254u8;
        while exp > 0 {
            if exp & 1 == 1 {
                result *= base;
            }
            base *= base;
            exp >>= 1;
        }
        Some(result)
    }
}

/// Product of two bytes in GF(256).
#[inline]
pub const fn gf_mul(a: u8, b: u8) -> u8 {
    let mut a = a;
    let mut b = b;
    let mut product = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            product ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= REDUCTION;
        }
        b >>= 1;
    }
    product
}

// Addition in characteristic 2 is XOR.
impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Gf256) {
        self.0 ^= rhs.0;
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(gf_mul(self.0, rhs.0))
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf256) {
        self.0 = gf_mul(self.0, rhs.0);
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(value: u8) -> Self {
        Gf256(value)
    }
}
