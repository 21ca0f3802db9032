//! Gamma-function ratios and binomial profiles.
//!
//! The spherical constants are all ratios `Γ(x + h) / Γ(x)` with moderate `h`
//! and possibly very large `x`. Raw Gamma overflows near 171, and a plain
//! `lnΓ(x + h) − lnΓ(x)` loses about `log10(lnΓ(x))` digits to cancellation,
//! so the difference is evaluated directly from the Stirling series after
//! shifting the argument up with the recurrence `Γ(x + 1) = xΓ(x)`.

use std::f64::consts::PI;

/// `B_{2k} / (2k (2k − 1))` for k = 1..8.
const STIRLING_COEFFS: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
];

/// Below this argument the Stirling tail is not trusted.
const STIRLING_MIN: f64 = 12.0;

/// Arguments on the half-integer lattice up to this size use exact products.
const LATTICE_MAX: f64 = 24.0;

fn stirling_tail(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut acc = 0.0;
    for c in STIRLING_COEFFS {
        acc += c * pow;
        pow *= inv2;
    }
    acc
}

/// Natural logarithm of Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    let mut shift = 0.0;
    let mut z = x;
    while z < STIRLING_MIN {
        shift += z.ln();
        z += 1.0;
    }
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + stirling_tail(z) - shift
}

fn is_half_lattice(x: f64) -> bool {
    (2.0 * x).fract() == 0.0
}

/// Γ(a) = mantissa · √π^{e} for a on the half-integer lattice.
fn lattice_gamma(a: f64) -> (f64, i32) {
    if a.fract() == 0.0 {
        let mut m = 1.0;
        let mut k = 1.0;
        while k < a {
            m *= k;
            k += 1.0;
        }
        (m, 0)
    } else {
        let mut m = 1.0;
        let mut k = 0.5;
        while k < a {
            m *= k;
            k += 1.0;
        }
        (m, 1)
    }
}

/// `ln(Γ(x + h) / Γ(x))` for x > 0 and x + h > 0.
pub fn ln_gamma_ratio(x: f64, h: f64) -> f64 {
    assert!(x > 0.0 && x + h > 0.0, "gamma ratio outside domain: x={x}, h={h}");
    if h == 0.0 {
        return 0.0;
    }
    // Shift both arguments up until the smaller one clears the Stirling threshold.
    let mut lo = x.min(x + h);
    let mut z = x;
    let mut correction = 0.0;
    while lo < STIRLING_MIN {
        correction -= (h / z).ln_1p();
        z += 1.0;
        lo += 1.0;
    }
    let zh = z + h;
    (z - 0.5) * (h / z).ln_1p() + h * zh.ln() - h + stirling_tail(zh) - stirling_tail(z)
        + correction
}

/// `Γ(x + h) / Γ(x)`.
///
/// Small half-integer arguments are evaluated with exact products so that
/// identities like `Γ(3/2) = √π/2` hold to the last bit; integer offsets use
/// the finite product `x (x + 1) ⋯ (x + h − 1)`.
pub fn gamma_ratio(x: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 1.0;
    }
    let top = x + h;
    if is_half_lattice(x) && is_half_lattice(h) && x <= LATTICE_MAX && top <= LATTICE_MAX {
        let (m_top, e_top) = lattice_gamma(top);
        let (m_bot, e_bot) = lattice_gamma(x);
        let ratio = m_top / m_bot;
        return match e_top - e_bot {
            0 => ratio,
            1 => ratio * PI.sqrt(),
            _ => ratio / PI.sqrt(),
        };
    }
    if h.fract() == 0.0 && h.abs() <= 64.0 {
        let steps = h.abs() as usize;
        if h > 0.0 {
            return (0..steps).map(|k| x + k as f64).product();
        }
        let denom: f64 = (1..=steps).map(|k| x - k as f64).product();
        return 1.0 / denom;
    }
    ln_gamma_ratio(x, h).exp()
}

/// Binomial(n, 1/2) probabilities `2^{-n} C(n, k)`, k = 0..=n.
///
/// Built from the log-space recurrence `ln p_{k+1} = ln p_k + ln((n − k)/(k + 1))`
/// and normalised by the compensated sum, so the weights sum to one to within
/// a few ulps for every n.
pub fn binomial_half_profile(n: usize) -> Vec<f64> {
    let mut logs = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    logs.push(0.0);
    for k in 0..n {
        acc += ((n - k) as f64 / (k + 1) as f64).ln();
        logs.push(acc);
    }
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let total = crate::reduce::NeumaierSum::from_iter(weights.iter().copied()).value();
    for w in &mut weights {
        *w /= total;
    }
    weights
}
