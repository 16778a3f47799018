//! Float helpers routed through libm so results do not depend on whether the
//! `std` feature is enabled (or on the host's libc).

#![allow(dead_code)]

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Rounds half away from zero, matching `f64::round`.
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
