//! Chi-squared and standard normal distribution functions.

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MAX_ITER: usize = 500;

/// `log(2π)`.
#[inline]
pub fn ln_2pi() -> f64 {
    LN_2PI
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || x < 0.0 || x.is_nan() {
        return Err(Error::Domain(alloc::format!("gamma_p(a={a}, x={x})")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    let log_prefactor = -x + a * libm::log(x) - libm::lgamma(a);
    if x < a + 1.0 {
        // series
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if libm::fabs(term) < libm::fabs(sum) * f64::EPSILON {
                return Ok((libm::exp(log_prefactor) * sum).min(1.0));
            }
        }
        Err(Error::NoConvergence("incomplete gamma series"))
    } else {
        // modified Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if libm::fabs(d) < tiny {
                d = tiny;
            }
            c = b + an / c;
            if libm::fabs(c) < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if libm::fabs(delta - 1.0) < f64::EPSILON {
                let q = libm::exp(log_prefactor) * h;
                return Ok((1.0 - q).max(0.0));
            }
        }
        Err(Error::NoConvergence("incomplete gamma continued fraction"))
    }
}

/// CDF of the chi-squared distribution with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain(alloc::format!("chi-squared with {k} degrees of freedom")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    gamma_p(0.5 * k as f64, 0.5 * x)
}

fn chi2_log_pdf(x: f64, k: usize) -> f64 {
    let h = 0.5 * k as f64;
    (h - 1.0) * libm::log(x) - 0.5 * x - h * core::f64::consts::LN_2 - libm::lgamma(h)
}

/// Quantile of the chi-squared distribution with `k` degrees of freedom.
///
/// Newton iterations on the CDF seeded by the Wilson–Hilferty approximation,
/// falling back to bisection whenever a step leaves the current bracket.
pub fn chi2_quantile(p: f64, k: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(alloc::format!("probability {p} outside (0, 1)")));
    }
    if k == 0 {
        return Err(Error::Domain(alloc::format!("chi-squared with {k} degrees of freedom")));
    }
    let kf = k as f64;
    let z = normal_quantile(p)?;
    let t = 2.0 / (9.0 * kf);
    let wh = kf * libm::pow(1.0 - t + z * libm::sqrt(t), 3.0);
    let mut x = if wh > 0.0 { wh } else { kf * 0.5 * p.max(1e-3) };

    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while chi2_cdf(hi, k)? < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NoConvergence("chi-squared quantile bracket"));
        }
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..MAX_ITER {
        let f = chi2_cdf(x, k)? - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = libm::exp(chi2_log_pdf(x, k));
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if libm::fabs(next - x) <= 1e-14 * next || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::NoConvergence("chi-squared quantile"))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal quantile (Acklam's rational approximation followed by one
/// Halley refinement against the erfc-based CDF).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(alloc::format!("probability {p} outside (0, 1)")));
    }
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
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * libm::sqrt(2.0 * core::f64::consts::PI) * libm::exp(0.5 * x * x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}
