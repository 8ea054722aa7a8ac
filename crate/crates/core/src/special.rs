//! Gamma and Beta functions and the Hurst-model constants.

use std::fmt;

use crate::error::{domain, Result};

/// Tolerance used to classify `H` as exactly one half.
pub const CLASSICAL_TOLERANCE: f64 = 1e-12;

/// Gamma function for positive real arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!(
            "gamma requires a positive finite argument, got {x}"
        ));
    }
    Ok(gamma_unchecked(x))
}

#[inline]
pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// Beta function `B(a, b) = Γ(a)Γ(b)/Γ(a+b)`.
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!("beta requires positive arguments, got ({a}, {b})"));
    }
    // The symmetric log form keeps beta(a, b) == beta(b, a) bit-for-bit.
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo + hi < 100.0 {
        Ok(gamma_unchecked(lo) * gamma_unchecked(hi) / gamma_unchecked(lo + hi))
    } else {
        Ok(statrs::function::beta::ln_beta(lo, hi).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `1/4 < H < 1/2`
    Singular,
    /// `H = 1/2`
    Classical,
    /// `1/2 < H < 1`
    Regular,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Singular => "singular",
            Regime::Classical => "classical",
            Regime::Regular => "regular",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A Hurst parameter together with the quantities derived from it.
///
/// `alpha = |H - 1/2|` is the order of the fractional operators in the
/// Volterra representation; `c_h` normalizes the kernel and `d_h` is both
/// the weight of the divergence term of the action and the constant linking
/// the kernel operator to its composed fractional-integral form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstModel {
    pub hurst: f64,
    pub alpha: f64,
    pub regime: Regime,
    pub c_h: f64,
    pub d_h: f64,
}

impl HurstModel {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(hurst > 0.25 && hurst < 1.0) {
            return domain(format!(
                "Hurst parameter must lie in the open interval (1/4, 1), got {hurst}"
            ));
        }
        if (hurst - 0.5).abs() < CLASSICAL_TOLERANCE {
            return Ok(Self {
                hurst,
                alpha: 0.0,
                regime: Regime::Classical,
                c_h: 1.0,
                d_h: 1.0,
            });
        }
        let regime = if hurst < 0.5 {
            Regime::Singular
        } else {
            Regime::Regular
        };
        let g_mid = gamma_unchecked(1.5 - hurst);
        let g_plus = gamma_unchecked(hurst + 0.5);
        let g_two = gamma_unchecked(2.0 - 2.0 * hurst);
        let c_h = (2.0 * hurst * g_mid / (g_plus * g_two)).sqrt();
        let d_h = (2.0 * hurst * g_mid * g_plus / g_two).sqrt();
        Ok(Self {
            hurst,
            alpha: (hurst - 0.5).abs(),
            regime,
            c_h,
            d_h,
        })
    }

    pub fn is_classical(&self) -> bool {
        self.regime == Regime::Classical
    }
}

/// `(k+1)^p - k^p` for `k >= 0`, accurate for large `k`.
pub(crate) fn pow_diff(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        k.powf(p) * (p * (1.0 / k).ln_1p()).exp_m1()
    }
}
