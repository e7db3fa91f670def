/// Lanczos coefficients for `g = 7`, `n = 9`.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x) Γ(1-x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    HALF_LN_2PI + (x + 0.5) * t.ln() - t + a.ln()
}

/// `(k-1) ln k - k - ln Γ(k)`, evaluated without cancellation for large `k`.
pub(crate) fn gamma_log_normalizer(k: f64) -> f64 {
    if k > 1e4 {
        let inv = 1.0 / k;
        // Stirling: ln Γ(k) = (k-½) ln k - k + ½ ln 2π + 1/(12k) - 1/(360k³) + ...
        -HALF_LN_2PI - 0.5 * k.ln() - inv / 12.0 + inv.powi(3) / 360.0
    } else {
        (k - 1.0) * k.ln() - k - ln_gamma(k)
    }
}
