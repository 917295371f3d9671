/// Compares the analytic gradient returned by `f` at `params` against
/// central differences with step `eps`.
///
/// Returns the largest per-coordinate `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn grad_check<F>(f: F, params: &[f64], eps: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    assert!(eps > 0.0, "eps must be positive");
    let (_, analytic) = f(params);
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        probe[k] = params[k] + eps;
        let (up, _) = f(&probe);
        probe[k] = params[k] - eps;
        let (down, _) = f(&probe);
        probe[k] = params[k];
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let x = [0.5, -2.0, 3.25];
        let f = |w: &[f64]| (w.iter().zip(&x).map(|(a, b)| a * b).sum(), x.to_vec());
        assert!(grad_check(f, &[1.0, 2.0, -1.0], 1e-2) < 1e-10);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |w: &[f64]| (w[0] * w[0], vec![w[0]]);
        assert!(grad_check(f, &[3.0], 1e-5) > 0.4);
    }
}
