//! Composite trapezoid quadrature on uniform grids.
//!
//! Every integral in the crate (setpoint bounds, control law, energy balance,
//! Lyapunov norms, backstepping transform) goes through these routines so the
//! discrete quantities stay mutually consistent. The rule is second-order
//! accurate, matching the solver's spatial order, and exact on linear data.

/// Trapezoid sum of `values` sampled uniformly with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => {
            let interior: f64 = values[1..n - 1].iter().sum();
            h * (0.5 * (values[0] + values[n - 1]) + interior)
        }
    }
}

/// Trapezoid integral of samples at arbitrary sorted abscissae.
pub fn trapezoid_irregular(x: &[f64], values: &[f64]) -> f64 {
    assert_eq!(x.len(), values.len());
    x.windows(2)
        .zip(values.windows(2))
        .map(|(xw, vw)| 0.5 * (xw[1] - xw[0]) * (vw[0] + vw[1]))
        .sum()
}

/// Suffix integrals `out[i] = integral from x_i to x_{n-1} of values`,
/// uniform spacing `h`. `out[n-1] = 0`.
pub fn suffix_trapezoid(values: &[f64], h: f64, out: &mut Vec<f64>) {
    let n = values.len();
    out.clear();
    out.resize(n, 0.0);
    let mut acc = 0.0;
    for i in (0..n.saturating_sub(1)).rev() {
        acc += 0.5 * h * (values[i] + values[i + 1]);
        out[i] = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_on_linear() {
        let n = 17;
        let h = 0.25;
        let vals: Vec<f64> = (0..n).map(|i| 3.0 - 0.5 * (i as f64) * h).collect();
        let len = (n - 1) as f64 * h;
        let exact = 3.0 * len - 0.25 * len * len;
        assert_relative_eq!(trapezoid(&vals, h), exact, max_relative = 1e-14);
    }

    #[test]
    fn suffix_matches_direct() {
        let vals: Vec<f64> = (0..33).map(|i| ((i as f64) * 0.3).sin()).collect();
        let h = 0.1;
        let mut suffix = Vec::new();
        suffix_trapezoid(&vals, h, &mut suffix);
        for i in 0..vals.len() {
            assert_relative_eq!(suffix[i], trapezoid(&vals[i..], h), epsilon = 1e-13);
        }
    }

    #[test]
    fn irregular_matches_uniform() {
        let vals: Vec<f64> = (0..9).map(|i| (i as f64).powi(2)).collect();
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        assert_relative_eq!(
            trapezoid_irregular(&x, &vals),
            trapezoid(&vals, 0.5),
            epsilon = 1e-13
        );
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(trapezoid(&[], 0.1), 0.0);
        assert_eq!(trapezoid(&[5.0], 0.1), 0.0);
    }
}
