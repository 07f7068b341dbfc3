//! Special functions: modified Bessel functions of the second kind for real
//! order and complex argument, the gamma function (via `statrs`) and the
//! standard normal law (via `libm`, whose `erfc` is accurate to a few ulps).
//!
//! `K_ν(z)` is evaluated with Temme's series for `|z| <= 2` and Steed's
//! continued fraction (CF2) otherwise, starting from the fractional order
//! `μ = ν - round(ν)` and recurring upward in the order. Both branches work
//! on the principal branch for `Re z > 0`, which is all the characteristic
//! functions of the generalized hyperbolic family ever need.

use num_complex::Complex64;
use statrs::function::gamma as sgamma;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Odd-power coefficients of the Taylor series of `1/Γ(1+x)`:
/// `1/Γ(1+x) = 1 + Σ_k c_k x^k`, here `c_1, c_3, c_5, ...`.
const RGAMMA_ODD: [f64; 7] = [
    0.577_215_664_901_532_9,
    -0.042_002_635_034_095_24,
    -0.042_197_734_555_544_34,
    0.007_218_943_246_663_1,
    -0.000_215_241_674_114_951,
    -0.000_020_134_854_780_788_24,
    0.000_001_133_027_231_981_696,
];

pub fn ln_gamma(x: f64) -> f64 {
    sgamma::ln_gamma(x)
}

pub fn gamma(x: f64) -> f64 {
    sgamma::gamma(x)
}

/// Standard normal distribution function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile. Accurate to a few ulps over `(0, 1)`.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    // Acklam's rational start, polished by two Halley steps on erfc.
    let x = acklam(p);
    let mut x = x;
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let plow = 0.024_25;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Temme's auxiliary gamma quantities for `|mu| <= 1/2`:
/// `(gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu))`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / sgamma::gamma(1.0 + mu);
    let gammi = 1.0 / sgamma::gamma(1.0 - mu);
    let gam2 = 0.5 * (gammi + gampl);
    let gam1 = if mu.abs() < 0.1 {
        let m2 = mu * mu;
        -RGAMMA_ODD.iter().rev().fold(0.0, |acc, c| acc * m2 + c)
    } else {
        (gammi - gampl) / (2.0 * mu)
    };
    (gam1, gam2, gampl, gammi)
}

/// `e^z K_mu(z)` and `e^z K_{mu+1}(z)` for `|mu| <= 1/2`.
fn k_pair_scaled(mu: f64, z: Complex64) -> (Complex64, Complex64) {
    if z.norm() <= 2.0 {
        let x2 = 0.5 * z;
        let pimu = PI * mu;
        let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
        let d = -x2.ln();
        let e = mu * d;
        let fact2 = if e.norm() < EPS { Complex64::new(1.0, 0.0) } else { e.sinh() / e };
        let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
        let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
        let mut sum = ff;
        let ee = e.exp();
        let mut p = 0.5 * ee / gampl;
        let mut q = 0.5 / (ee * gammi);
        let mut c = Complex64::new(1.0, 0.0);
        let dd = x2 * x2;
        let mut sum1 = p;
        let mu2 = mu * mu;
        for i in 1..=MAX_ITER {
            let fi = i as f64;
            ff = (fi * ff + p + q) / (fi * fi - mu2);
            c *= dd / fi;
            p /= fi - mu;
            q /= fi + mu;
            let del = c * ff;
            sum += del;
            let del1 = c * (p - fi * ff);
            sum1 += del1;
            if del.norm() < sum.norm() * EPS {
                break;
            }
        }
        let scale = z.exp();
        (sum * scale, sum1 * (2.0 / z) * scale)
    } else {
        let mu2 = mu * mu;
        let mut b = 2.0 * (1.0 + z);
        let mut d = 1.0 / b;
        let mut delh = d;
        let mut h = d;
        let mut q1 = Complex64::new(0.0, 0.0);
        let mut q2 = Complex64::new(1.0, 0.0);
        let a1 = 0.25 - mu2;
        let mut q = Complex64::new(a1, 0.0);
        let mut c = Complex64::new(a1, 0.0);
        let mut a = -a1;
        let mut s = 1.0 + q * delh;
        for i in 2..=MAX_ITER {
            let fi = i as f64;
            a -= 2.0 * (fi - 1.0);
            c = -a * c / fi;
            let qnew = (q1 - b * q2) / a;
            q1 = q2;
            q2 = qnew;
            q += c * qnew;
            b += 2.0;
            d = 1.0 / (b + a * d);
            delh = (b * d - 1.0) * delh;
            h += delh;
            let dels = q * delh;
            s += dels;
            if (dels / s).norm() < EPS {
                break;
            }
        }
        h *= a1;
        let kmu = (PI / (2.0 * z)).sqrt() / s;
        let k1 = kmu * (mu + z + 0.5 - h) / z;
        (kmu, k1)
    }
}

/// Scaled Bessel functions `e^z K_{nu+j}(z)` for `j = 0..count`.
///
/// `nu` may be negative (`K_{-nu} = K_nu`), but the whole run of orders must
/// stay on one side of zero; callers in this crate only ever ask for
/// nonnegative runs.
pub fn bessel_k_scaled_seq(nu: f64, z: Complex64, count: usize) -> Vec<Complex64> {
    let nu_abs = nu.abs();
    let n = (nu_abs + 0.5).floor();
    let mu = nu_abs - n;
    let (mut k0, mut k1) = k_pair_scaled(mu, z);
    let mut order = mu;
    let two_over_z = 2.0 / z;
    for _ in 0..n as usize {
        let k2 = two_over_z * (order + 1.0) * k1 + k0;
        k0 = k1;
        k1 = k2;
        order += 1.0;
    }
    let mut out = Vec::with_capacity(count);
    if count > 0 {
        out.push(k0);
    }
    if count > 1 {
        out.push(k1);
    }
    while out.len() < count {
        let m = out.len();
        let next = two_over_z * (nu_abs + (m as f64 - 1.0)) * out[m - 1] + out[m - 2];
        out.push(next);
    }
    out
}

/// `e^z K_nu(z)` on the principal branch, `Re z > 0`.
pub fn bessel_k_scaled(nu: f64, z: Complex64) -> Complex64 {
    bessel_k_scaled_seq(nu, z, 1)[0]
}

/// `K_nu(z)` on the principal branch, `Re z > 0`.
pub fn bessel_k(nu: f64, z: Complex64) -> Complex64 {
    bessel_k_scaled(nu, z) * (-z).exp()
}

/// `ln K_nu(x)` for real `x > 0`.
pub fn ln_bessel_k(nu: f64, x: f64) -> f64 {
    bessel_k_scaled(nu, Complex64::new(x, 0.0)).re.ln() - x
}

/// `ln(x^m K_m(x))` for real `x >= 0` and `m > 0`; finite at `x = 0`.
pub fn ln_pow_bessel_k(m: f64, x: f64) -> f64 {
    let limit = (m - 1.0) * std::f64::consts::LN_2 + ln_gamma(m);
    if x < 1e-8 {
        // x^m K_m(x) = 2^{m-1} Γ(m) (1 - x^2 / (4(m-1)) + ...) for m > 1.
        if m > 1.0 {
            return limit + (-x * x / (4.0 * (m - 1.0))).ln_1p();
        }
        return m * x.ln() + ln_bessel_k(m, x.max(1e-300));
    }
    m * x.ln() + ln_bessel_k(m, x)
}

/// `z^m K_m(z) / (2^{m-1} Γ(m))` for complex `z` with `Re z >= 0`; equals 1
/// at `z = 0`. This is the characteristic function kernel of the Student t
/// and GH skew t laws.
pub fn t_kernel(m: f64, z: Complex64) -> Complex64 {
    if z.norm() < 1e-7 {
        if m > 1.0 {
            return 1.0 - z * z / (4.0 * (m - 1.0));
        }
        if z.norm() == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
    }
    let ln_norm = (m - 1.0) * std::f64::consts::LN_2 + ln_gamma(m);
    // z^m e^{-z} (e^z K_m(z)) / norm, assembled in logs to avoid overflow.
    let k = bessel_k_scaled(m, z);
    (m * z.ln() - z - ln_norm + k.ln()).exp()
}
