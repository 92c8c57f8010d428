//! Quadrature rules: Gauss-Legendre nodes/weights and composite Simpson.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Roots of the Legendre polynomial by Newton iteration from the
/// Chebyshev initial guess; exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre nodes/weights mapped to `[a, b]`, sorted ascending.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let nodes = x.iter().map(|&xi| mid + half * xi).collect();
    let weights = w.iter().map(|&wi| half * wi).collect();
    (nodes, weights)
}

/// Composite Simpson weights for `n + 1` equispaced samples with step
/// `h` (`n` must be even and >= 2).
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2 && n % 2 == 0, "simpson needs an even interval count");
    let mut w = vec![0.0; n + 1];
    w[0] = h / 3.0;
    w[n] = h / 3.0;
    for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
        *wj = if j % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre_on(0.0, 1.0, 8);
        // degree-15 monomial is within the exactness degree
        let val: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(15)).sum();
        assert_abs_diff_eq!(val, 1.0 / 16.0, epsilon = 1e-14);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn gauss_legendre_smooth_integrand() {
        let (x, w) = gauss_legendre_on(0.0, 1.0, 32);
        let val: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.exp()).sum();
        assert_abs_diff_eq!(val, std::f64::consts::E - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn simpson_exp() {
        let n = 64;
        let h = 1.0 / n as f64;
        let w = simpson_weights(n, h);
        let val: f64 = (0..=n).map(|j| w[j] * (j as f64 * h).exp()).sum();
        assert_abs_diff_eq!(val, std::f64::consts::E - 1.0, epsilon = 1e-9);
    }
}
