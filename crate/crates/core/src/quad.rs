//! Gauss-Legendre rules.

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to `[a, b]`, appended to `out`.
pub fn push_panel(out: &mut Vec<(f64, f64)>, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        out.push((mid + half * x, half * w));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        assert!((rule.0[7] - 0.9602898564975363).abs() < 1e-14);
        let rule = gauss_legendre(1);
        assert_eq!(rule.0[0], 0.0);
        assert!((rule.1[0] - 2.0).abs() < 1e-14);
    }
}
