//! Composite trapezoid quadrature on (possibly non-uniform) nodes.

/// Trapezoid weights `w` with `sum_i w[i] f[i] ~ int_0^1 f`.
pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = x[i] - x[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), f.len());
    (1..x.len())
        .map(|i| 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]))
        .sum()
}

/// Running integral `F[i] = int_{x_0}^{x_i} f` (so `F[0] = 0`).
pub fn cumulative_trapezoid(x: &[f64], f: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), f.len());
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(acc);
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_integrand_is_exact() {
        let x = [0.0, 0.1, 0.45, 1.0];
        let f: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        assert!((trapezoid(&x, &f) - 2.5).abs() < 1e-15);
        let w = trapezoid_weights(&x);
        let s: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((s - 2.5).abs() < 1e-15);
    }

    #[test]
    fn cumulative_of_constant() {
        let x = [0.0, 0.25, 0.5, 1.0];
        let c = cumulative_trapezoid(&x, &[2.0; 4]);
        assert_eq!(c, vec![0.0, 0.5, 1.0, 2.0]);
    }
}
