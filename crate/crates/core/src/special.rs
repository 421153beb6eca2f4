//! Special functions used by the gain model and the fluctuation bounds.

use libm::{erfc, exp, log, sqrt};

/// `I0(x) - 1`, accurate for small arguments where `I0(x)` is close to one.
pub fn bessel_i0_minus_one(x: f64) -> f64 {
    let ax = x.abs();
    if ax > 20.0 {
        return bessel_i0(x) - 1.0;
    }
    // I0(x) = sum_k (x^2/4)^k / (k!)^2
    let q = 0.25 * ax * ax;
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 20.0 {
        return 1.0 + bessel_i0_minus_one(ax);
    }
    // Asymptotic expansion e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k)
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (k as f64 * 8.0 * ax);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    exp(ax) / sqrt(2.0 * core::f64::consts::PI * ax) * sum
}

/// Upper tail of the standard normal distribution, `P[Z > z]`.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / core::f64::consts::SQRT_2)
}

/// Inverse of [`normal_upper_tail`]: the `z` with `P[Z > z] = p`.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step against `erfc`.
pub fn inverse_normal_upper_tail(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
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
    const P_LOW: f64 = 0.02425;

    // Acklam works with the lower-tail quantile; z = -quantile(p).
    let quantile = if p < P_LOW {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut z = -quantile;

    let e = normal_upper_tail(z) - p;
    let density = exp(-0.5 * z * z) / sqrt(2.0 * core::f64::consts::PI);
    // Newton step on the upper tail (derivative is -density), with Halley correction.
    let u = e / density;
    z += u / (1.0 - 0.5 * z * u);
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_matches_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-16);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((bessel_i0(2.0) - 2.279_585_302_336_067).abs() < 1e-14);
        assert!((bessel_i0(30.0) / 7.816_722_978_239_774e11 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn i0_minus_one_keeps_small_arguments() {
        let x = 1e-6;
        let v = bessel_i0_minus_one(x);
        assert!((v / (x * x / 4.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_inverse_round_trips() {
        for &p in &[0.4, 0.1587, 0.05, 1e-3, 1e-7, 1e-10, 1e-15] {
            let z = inverse_normal_upper_tail(p);
            assert!((normal_upper_tail(z) / p - 1.0).abs() < 1e-10, "p={p}");
        }
    }
}
