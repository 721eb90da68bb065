//! Arithmetic modulo the Mersenne prime 2^61 - 1.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MODULUS: u64 = (1 << 61) - 1;

/// Largest magnitude that survives a round trip through the field.
pub const MAX_SIGNED: i64 = (MODULUS / 2) as i64;

#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fp(u64);

impl Fp {
    pub const ZERO: Fp = Fp(0);
    pub const ONE: Fp = Fp(1);

    fn reduce(x: u64) -> u64 {
        let r = (x & MODULUS) + (x >> 61);
        if r >= MODULUS {
            r - MODULUS
        } else {
            r
        }
    }

    /// Canonical representative in `0..MODULUS`.
    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn from_raw(v: u64) -> Fp {
        Fp(Fp::reduce(v))
    }

    /// Embeds a signed integer as `x mod p`.
    pub fn encode(x: i64) -> Fp {
        let m = x.rem_euclid(MODULUS as i64);
        Fp(m as u64)
    }

    /// Decodes through the symmetric window `(-p/2, p/2]`.
    pub fn decode(self) -> i64 {
        if self.0 > MODULUS / 2 {
            self.0 as i64 - MODULUS as i64
        } else {
            self.0 as i64
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Fp {
        Fp(rng.gen_range(0..MODULUS))
    }

    pub fn bit(b: bool) -> Fp {
        if b {
            Fp::ONE
        } else {
            Fp::ZERO
        }
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.decode())
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        Fp(Fp::reduce(self.0 + rhs.0))
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        Fp(Fp::reduce(self.0 + MODULUS - rhs.0))
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp::ZERO - self
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        let wide = self.0 as u128 * rhs.0 as u128;
        let lo = (wide as u64) & MODULUS;
        let hi = (wide >> 61) as u64;
        Fp(Fp::reduce(lo + Fp::reduce(hi)))
    }
}
