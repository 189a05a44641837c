//! Gaussian moments and cell masses used by the quadrature oracles.

use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// `P(a < Z < b)` for standard normal `Z`, accurate in both tails.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    let upper = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
    if a >= 0.0 {
        upper(a) - upper(b)
    } else if b <= 0.0 {
        upper(-b) - upper(-a)
    } else {
        1.0 - upper(-a) - upper(b)
    }
}

/// `E|N(0, v)|^p` for `p > -1`.
pub fn gaussian_abs_moment(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        return if p == 0.0 { 1.0 } else if p > 0.0 { 0.0 } else { f64::INFINITY };
    }
    (0.5 * p * (2.0 * v).ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * std::f64::consts::PI.ln()).exp()
}

/// `e^{-z} 1F1(a; b; z)` for `a, b > 0`, `z >= 0` by the positive power series.
fn scaled_kummer(a: f64, b: f64, z: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 0.0;
    loop {
        term *= (a + n) / (b + n) * z / (n + 1.0);
        sum += term;
        n += 1.0;
        if term < 1e-17 * sum && n > z {
            break;
        }
        if n > 10_000.0 {
            break;
        }
    }
    // sum * e^{-z}, combined in logs for large z
    (sum.ln() - z).exp()
}

/// `E|mu + sigma Z|^p` for standard normal `Z` and `p > -1`.
///
/// Closed form `sigma^p 2^{p/2} Gamma((p+1)/2)/sqrt(pi) 1F1(-p/2; 1/2; -mu^2/2sigma^2)`,
/// evaluated through Kummer's transformation; large shifts use the
/// asymptotic series in `sigma^2 / mu^2`.
pub fn shifted_abs_moment(mu: f64, sigma: f64, p: f64) -> f64 {
    if sigma == 0.0 {
        return mu.abs().powf(p);
    }
    let z = mu * mu / (2.0 * sigma * sigma);
    if z > 60.0 {
        let r = sigma * sigma / (mu * mu);
        // sum_k C(p, 2k) (2k-1)!! r^k
        let mut total = 1.0;
        let mut coef = 1.0;
        for k in 1..6 {
            let k2 = 2.0 * k as f64;
            coef *= (p - k2 + 2.0) * (p - k2 + 1.0) / (k2 * (k2 - 1.0)) * (k2 - 1.0) * r;
            total += coef;
        }
        return mu.abs().powf(p) * total;
    }
    gaussian_abs_moment(sigma * sigma, p) * scaled_kummer(0.5 + 0.5 * p, 0.5, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quad_shifted(mu: f64, sigma: f64, p: f64) -> f64 {
        // substitute y = mu + sigma z; integrate the singular point exactly
        // by splitting at z0 = -mu/sigma and using u^2 substitution near it
        let z0 = -mu / sigma;
        let dens = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let n = 200_000;
        let half: f64 = z0.abs() + 12.0;
        let mut s = 0.0;
        for side in [-1.0, 1.0] {
            // z = z0 + side * u^2, u in (0, sqrt(half))
            let umax = half.sqrt();
            let h = umax / n as f64;
            for i in 0..n {
                let u = (i as f64 + 0.5) * h;
                let z = z0 + side * u * u;
                s += (sigma * u * u).powf(p) * dens(z) * 2.0 * u * h;
            }
        }
        s
    }

    #[test]
    fn absolute_moments_of_centered_normal() {
        assert_relative_eq!(gaussian_abs_moment(1.0, 2.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(gaussian_abs_moment(4.0, 1.0), 2.0 * (2.0 / std::f64::consts::PI).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(gaussian_abs_moment(1.0, 4.0), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn shifted_moment_matches_quadrature() {
        for &(mu, sigma, p) in &[(0.0, 1.0, -0.4), (0.3, 0.2, -0.4), (1.0, 0.1, -0.2), (2.0, 0.3, -0.5), (0.05, 0.3, -0.3)] {
            let exact = shifted_abs_moment(mu, sigma, p);
            let q = quad_shifted(mu, sigma, p);
            assert_relative_eq!(exact, q, max_relative = 2e-4);
        }
        // high-precision reference values
        assert_relative_eq!(shifted_abs_moment(0.3, 0.2, -0.4), 1.957_411_661_750_319, max_relative = 1e-9);
        assert_relative_eq!(shifted_abs_moment(2.0, 0.3, -0.5), 0.713_398_531_684_049_1, max_relative = 1e-9);
    }

    #[test]
    fn shifted_moment_is_continuous_across_the_asymptotic_switch() {
        let sigma = 0.1;
        let p = -0.4;
        let mu_switch = (120.0f64).sqrt() * sigma;
        let a = shifted_abs_moment(mu_switch * (1.0 - 1e-9), sigma, p);
        let b = shifted_abs_moment(mu_switch * (1.0 + 1e-9), sigma, p);
        assert_relative_eq!(a, b, max_relative = 1e-8);
        assert_relative_eq!(shifted_abs_moment(5.0, 0.01, p), 5f64.powf(p), max_relative = 1e-5);
    }

    #[test]
    fn normal_mass_in_tails() {
        assert_relative_eq!(normal_mass(-1.0, 1.0), 0.682_689_492_137_085_9, max_relative = 1e-9);
        assert!(normal_mass(9.0, 10.0) > 0.0);
        assert_relative_eq!(normal_mass(-10.0, -9.0), normal_mass(9.0, 10.0), max_relative = 1e-12);
    }
}
