//! Chebyshev collocation in one parameter: nodes, barycentric Lagrange
//! weights, and quadrature weights for the uniform density on `[-1, 1]`.

use std::f64::consts::PI;

/// First-kind Chebyshev points `cos((2k+1) pi / (2(p+1)))`, `k = 0..=p`.
pub fn chebyshev_nodes(p: usize) -> Vec<f64> {
    let m = (p + 1) as f64;
    (0..=p)
        .map(|k| {
            let v = ((2 * k + 1) as f64 * PI / (2.0 * m)).cos();
            // the middle node of an odd count is zero up to rounding
            if 2 * k == p {
                0.0
            } else {
                v
            }
        })
        .collect()
}

/// Values `L_k(y)` of the Lagrange basis through the degree-`p` Chebyshev
/// points, by the second barycentric formula.
pub fn lagrange_weights_at(p: usize, y: f64) -> Vec<f64> {
    let nodes = chebyshev_nodes(p);
    let m = (p + 1) as f64;
    let mut out = vec![0.0; p + 1];
    if let Some(k) = nodes.iter().position(|&t| t == y) {
        out[k] = 1.0;
        return out;
    }
    let mut total = 0.0;
    for (k, (&t, o)) in nodes.iter().zip(out.iter_mut()).enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let w = sign * ((2 * k + 1) as f64 * PI / (2.0 * m)).sin();
        *o = w / (y - t);
        total += *o;
    }
    for o in &mut out {
        *o /= total;
    }
    out
}

/// Weights `w_k = 1/2 * int_{-1}^{1} L_k(y) dy` (first Fejér rule, halved);
/// they sum to one.
pub fn quadrature_weights(p: usize) -> Vec<f64> {
    let m = p + 1;
    let mf = m as f64;
    (0..m)
        .map(|k| {
            let theta = (2 * k + 1) as f64 * PI / (2.0 * mf);
            let tail: f64 = (1..=m / 2)
                .map(|j| {
                    let jf = j as f64;
                    (2.0 * jf * theta).cos() / (4.0 * jf * jf - 1.0)
                })
                .sum();
            (1.0 - 2.0 * tail) / mf
        })
        .collect()
}

/// Stability constant `prod_i (2/pi log(p_i + 1) + 1)` of the tensorized
/// interpolation operator.
pub fn stability_constant(degrees: &[usize]) -> f64 {
    degrees
        .iter()
        .map(|&p| 2.0 / PI * ((p + 1) as f64).ln() + 1.0)
        .product()
}

/// Smallest degree with `(c_gamma / 2)^(p+1) <= eps`, the per-direction
/// degree rule of the anisotropic variant. Only reported as a diagnostic.
pub fn anisotropic_degree(eps: f64, c_gamma: f64) -> Option<usize> {
    let rho = c_gamma / 2.0;
    if !(eps > 0.0 && eps < 1.0 && rho > 0.0 && rho < 1.0) {
        return None;
    }
    let p = (eps.ln() / rho.ln()).ceil() - 1.0;
    Some(p.max(0.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Lagrange basis from the product formula.
    fn lagrange_direct(p: usize, k: usize, y: f64) -> f64 {
        let t = chebyshev_nodes(p);
        (0..=p)
            .filter(|&j| j != k)
            .map(|j| (y - t[j]) / (t[k] - t[j]))
            .product()
    }

    /// Composite Simpson rule with many panels, as an independent integrator.
    fn simpson(f: impl Fn(f64) -> f64) -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut s = f(-1.0) + f(1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn node_examples() {
        assert_eq!(chebyshev_nodes(0), vec![0.0]);
        let n1 = chebyshev_nodes(1);
        assert_relative_eq!(n1[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(n1[1], -(0.5f64.sqrt()), epsilon = 1e-15);
        let n2 = chebyshev_nodes(2);
        assert_relative_eq!(n2[0], 3f64.sqrt() / 2.0, epsilon = 1e-15);
        assert_eq!(n2[1], 0.0);
    }

    #[test]
    fn quadrature_examples() {
        assert_eq!(quadrature_weights(0), vec![1.0]);
        let w1 = quadrature_weights(1);
        assert_relative_eq!(w1[0], 0.5, epsilon = 1e-15);
        let w2 = quadrature_weights(2);
        assert_relative_eq!(w2[0], 2.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w2[1], 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w2[2], 2.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_integrates_lagrange_basis() {
        for p in 0..=6 {
            let w = quadrature_weights(p);
            for (k, wk) in w.iter().enumerate() {
                let exact = 0.5 * simpson(|y| lagrange_direct(p, k, y));
                assert_relative_eq!(*wk, exact, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn stability_examples() {
        assert_eq!(stability_constant(&[0, 0]), 1.0);
        assert_relative_eq!(
            stability_constant(&[1]),
            2.0 / PI * 2f64.ln() + 1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn anisotropic_degree_rule() {
        assert_eq!(anisotropic_degree(0.25, 1.0), Some(1));
        assert_eq!(anisotropic_degree(0.1, 1.0), Some(3));
        assert_eq!(anisotropic_degree(0.1, 2.5), None);
    }

    proptest! {
        #[test]
        fn partition_of_unity(p in 0usize..12, y in -1.0f64..=1.0) {
            let s: f64 = lagrange_weights_at(p, y).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn barycentric_matches_product_form(p in 0usize..10, y in -1.0f64..=1.0) {
            let bary = lagrange_weights_at(p, y);
            for (k, b) in bary.iter().enumerate() {
                prop_assert!((b - lagrange_direct(p, k, y)).abs() < 1e-10);
            }
        }

        #[test]
        fn exact_for_polynomials(p in 0usize..10, y in -1.0f64..=1.0) {
            let nodes = chebyshev_nodes(p);
            let f = |t: f64| (0..=p).map(|j| t.powi(j as i32) * (j as f64 + 1.0)).sum::<f64>();
            let interp: f64 = lagrange_weights_at(p, y)
                .iter()
                .zip(&nodes)
                .map(|(l, t)| l * f(*t))
                .sum();
            prop_assert!((interp - f(y)).abs() < 1e-10 * f(y).abs().max(1.0));
        }

        #[test]
        fn weights_are_positive_and_sum_to_one(p in 0usize..30) {
            let w = quadrature_weights(p);
            prop_assert!(w.iter().all(|&v| v > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }
}
