//! Composite trapezoid quadrature and linear interpolation on uniform grids.

/// Composite trapezoid rule for samples spaced `step` apart.
///
/// A single sample spans an empty interval and integrates to zero.
pub fn trapz(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid rule applied to the pointwise product `a[k] * b[k]`.
pub fn trapz_product(a: &[f64], b: &[f64], step: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]);
    for k in 1..n - 1 {
        acc += a[k] * b[k];
    }
    step * acc
}

/// Trapezoid rule with per-node weights `step * w_k`, where the end weights are one half.
pub fn trapz_weights(n: usize, step: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![step; n];
            w[0] *= 0.5;
            w[n - 1] *= 0.5;
            w
        }
    }
}

/// Linear interpolation of samples `values[k]` located at `origin + k * step`.
///
/// Arguments outside the sampled range are clamped to the end values.
pub fn interp_uniform(values: &[f64], origin: f64, step: f64, x: f64) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    if n == 1 {
        return values[0];
    }
    let pos = (x - origin) / step;
    if pos <= 0.0 {
        return values[0];
    }
    let last = (n - 1) as f64;
    if pos >= last {
        return values[n - 1];
    }
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    if w == 0.0 {
        values[k]
    } else {
        (1.0 - w) * values[k] + w * values[k + 1]
    }
}

/// Sup-norm of a slice.
pub fn sup_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// L² norm on [0,1] of grid samples, trapezoid rule.
pub fn l2_norm(values: &[f64], step: f64) -> f64 {
    trapz_product(values, values, step).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapz_exact_for_linear() {
        let step = 0.1;
        let v: Vec<f64> = (0..=10).map(|k| 2.0 * k as f64 * step + 1.0).collect();
        assert!((trapz(&v, step) - 2.0).abs() < 1e-14);
        assert_eq!(trapz(&[3.0], step), 0.0);
    }

    #[test]
    fn weights_match_trapz() {
        let v = [1.0, 4.0, 2.0, 7.0];
        let w = trapz_weights(4, 0.5);
        let via_w: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((via_w - trapz(&v, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn interp_hits_nodes_and_clamps() {
        let v = [0.0, 1.0, 4.0];
        assert_eq!(interp_uniform(&v, 0.0, 0.5, 0.5), 1.0);
        assert!((interp_uniform(&v, 0.0, 0.5, 0.75) - 2.5).abs() < 1e-15);
        assert_eq!(interp_uniform(&v, 0.0, 0.5, -3.0), 0.0);
        assert_eq!(interp_uniform(&v, 0.0, 0.5, 9.0), 4.0);
    }
}
