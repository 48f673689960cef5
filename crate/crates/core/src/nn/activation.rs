//! Scalar activation functions and their derivatives.

use crate::real::Real;

/// Logistic function, evaluated without overflow for either sign.
#[inline]
pub fn sigmoid<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one() / (T::one() + (-u).exp())
    } else {
        let e = u.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + eᵘ)`.
#[inline]
pub fn softplus<T: Real>(u: T) -> T {
    u.max(T::zero()) + (-u.abs()).exp().ln_1p()
}

/// `u · sigmoid(u)`.
#[inline]
pub fn silu<T: Real>(u: T) -> T {
    u * sigmoid(u)
}

/// `s · (1 + u(1 − s))` with `s = sigmoid(u)`.
#[inline]
pub fn silu_prime<T: Real>(u: T) -> T {
    let s = sigmoid(u);
    s * (T::one() + u * (T::one() - s))
}

/// `s(1 − s)(2 + u(1 − 2s))`.
#[inline]
pub fn silu_second<T: Real>(u: T) -> T {
    let s = sigmoid(u);
    let two = T::one() + T::one();
    s * (T::one() - s) * (two + u * (T::one() - two * s))
}
