//! Scalar abstraction used by the flux routines, with a forward-mode dual
//! number carrying four directional derivatives (one per conservation
//! variable). Evaluating a flux routine on `Dual4` inputs seeded with the
//! unit directions yields its exact Jacobian with respect to the state.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(x: f64) -> Self;
    fn value(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual4 {
    pub v: f64,
    pub d: [f64; 4],
}

impl Dual4 {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 4] }
    }

    /// `v` with unit derivative in direction `k`.
    pub fn variable(v: f64, k: usize) -> Self {
        let mut d = [0.0; 4];
        d[k] = 1.0;
        Self { v, d }
    }

    /// Seeds a 4-state so that derivatives are taken with respect to it.
    pub fn seed(u: [f64; 4]) -> [Dual4; 4] {
        [Self::variable(u[0], 0), Self::variable(u[1], 1), Self::variable(u[2], 2), Self::variable(u[3], 3)]
    }
}

impl Real for Dual4 {
    #[inline]
    fn cst(x: f64) -> Self {
        Self::constant(x)
    }

    #[inline]
    fn value(self) -> f64 {
        self.v
    }
}

impl Add for Dual4 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1], self.d[2] + o.d[2], self.d[3] + o.d[3]] }
    }
}

impl Sub for Dual4 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1], self.d[2] - o.d[2], self.d[3] - o.d[3]] }
    }
}

impl Mul for Dual4 {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; 4];
        for k in 0..4 {
            d[k] = self.d[k] * o.v + self.v * o.d[k];
        }
        Self { v: self.v * o.v, d }
    }
}

impl Div for Dual4 {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; 4];
        for k in 0..4 {
            d[k] = (self.d[k] - q * o.d[k]) * inv;
        }
        Self { v: q, d }
    }
}

impl Neg for Dual4 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { v: -self.v, d: [-self.d[0], -self.d[1], -self.d[2], -self.d[3]] }
    }
}
