//! Complete elliptic integrals, Jacobi elliptic functions and theta-function
//! moduli, as needed by the conformal-mapping capacitance model.
//!
//! Everything goes through the arithmetic-geometric mean, which converges
//! quadratically and keeps full double precision for moduli close to 0 or 1
//! as long as the caller supplies the complementary modulus directly.

use std::f64::consts::FRAC_PI_2;

const AGM_TOL: f64 = 1e-16;

/// Arithmetic-geometric mean of two non-negative numbers.
pub fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..64 {
        if (a - b).abs() <= AGM_TOL * a.abs().max(b.abs()) {
            break;
        }
        let next_a = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next_a;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind, K(k), given the
/// complementary modulus `k' = sqrt(1 - k^2)`.
pub fn ellip_k_from_complement(k_prime: f64) -> f64 {
    FRAC_PI_2 / agm(1.0, k_prime)
}

/// Complete elliptic integral of the first kind K(k) for `0 <= k < 1`.
pub fn ellip_k(k: f64) -> f64 {
    ellip_k_from_complement(((1.0 - k) * (1.0 + k)).sqrt())
}

/// The ratio `K(k) / K(k')` for a modulus pair `(k, k')` with `k^2 + k'^2 = 1`.
///
/// Passing both moduli avoids the cancellation in `sqrt(1 - k^2)` when one of
/// them is close to 1.
pub fn k_ratio(k: f64, k_prime: f64) -> f64 {
    agm(1.0, k) / agm(1.0, k_prime)
}

/// Jacobi elliptic functions `(sn, cn, dn)` of argument `u` and modulus `k`,
/// by descending Landen transformation.
pub fn jacobi_sn_cn_dn(u: f64, k: f64) -> (f64, f64, f64) {
    jacobi_with_complement(u, k, ((1.0 - k) * (1.0 + k)).sqrt())
}

/// [`jacobi_sn_cn_dn`] with the complementary modulus supplied by the caller,
/// which keeps `dn` accurate when `k` is close to 1.
pub fn jacobi_with_complement(u: f64, k: f64, k_prime: f64) -> (f64, f64, f64) {
    if k == 0.0 {
        return (u.sin(), u.cos(), 1.0);
    }
    let mut a = vec![1.0];
    let mut c = vec![k];
    let mut b = k_prime;
    while c.last().copied().unwrap_or(0.0).abs() > AGM_TOL && a.len() < 64 {
        let an = *a.last().unwrap();
        let next_a = 0.5 * (an + b);
        let next_c = 0.5 * (an - b);
        b = (an * b).sqrt();
        a.push(next_a);
        c.push(next_c);
    }
    let n = a.len() - 1;
    let mut phi = (1u64 << n) as f64 * a[n] * u;
    for i in (1..=n).rev() {
        phi = 0.5 * (phi + (c[i] / a[i] * phi.sin()).asin());
    }
    let sn = phi.sin();
    let cn = phi.cos();
    let dn = (k_prime * k_prime + k * k * cn * cn).sqrt();
    (sn, cn, dn)
}

/// Elliptic modulus pair `(k, k')` belonging to the nome `q`, computed from
/// the theta constants: `k = (θ2/θ3)^2`, `k' = (θ4/θ3)^2`.
///
/// Nomes above `e^-π` are mapped to the dual nome `exp(π² / ln q)`, for which
/// the roles of `k` and `k'` swap and the series converge fast.
pub fn modulus_from_nome(q: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&q), "nome must lie in [0, 1)");
    if q == 0.0 {
        return (0.0, 1.0);
    }
    let ln_q = q.ln();
    if ln_q > -std::f64::consts::PI {
        let (k, k_prime) = theta_modulus((std::f64::consts::PI.powi(2) / ln_q).exp());
        return (k_prime, k);
    }
    theta_modulus(q)
}

fn theta_modulus(q: f64) -> (f64, f64) {
    if q == 0.0 {
        return (0.0, 1.0);
    }
    let mut theta2 = 0.0;
    let mut theta3 = 1.0;
    let mut theta4 = 1.0;
    for n in 0..200u32 {
        let nf = f64::from(n);
        let t2 = q.powf(nf * (nf + 1.0));
        theta2 += t2;
        if n >= 1 {
            let t = q.powf(nf * nf);
            theta3 += 2.0 * t;
            theta4 += if n % 2 == 0 { 2.0 * t } else { -2.0 * t };
            if t < 1e-18 && t2 < 1e-18 {
                break;
            }
        }
    }
    theta2 *= 2.0 * q.powf(0.25);
    let k = (theta2 / theta3).powi(2);
    let k_prime = (theta4 / theta3).powi(2);
    (k, k_prime)
}
