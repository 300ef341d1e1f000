use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    pub fn rel_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(&a, &n)| rel_error(a, n))
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central-difference check of `analytic` against `loss_fn` around `params`.
///
/// `loss_fn` must be deterministic.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    ensure_len("grad_check analytic gradient", params.len(), analytic.len())?;
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("finite-difference step {eps} must be positive")));
    }
    let mut probe = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut worst = (0.0, 0);
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = loss_fn(&probe)?;
        probe[i] = orig - eps;
        let down = loss_fn(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss while perturbing coordinate {i}")));
        }
        let n = (up - down) / (2.0 * eps);
        let err = rel_error(analytic[i], n);
        if err > worst.0 {
            worst = (err, i);
        }
        numeric.push(n);
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        analytic: analytic.to_vec(),
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss() {
        let theta = [0.3, -1.7, 2.2, 0.0];
        let r = grad_check(|p| Ok(0.5 * p.iter().map(|x| x * x).sum::<f64>()), &theta, &theta, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
    }

    #[test]
    fn linear_loss() {
        let c = [1.0, -2.0, 0.5];
        let r = grad_check(
            |p| Ok(p.iter().zip(&c).map(|(x, y)| x * y).sum()),
            &[4.0, 5.0, 6.0],
            &c,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn detects_wrong_gradient() {
        let r = grad_check(|p| Ok(p[0] * p[0]), &[1.0], &[3.0], 1e-5).unwrap();
        assert!(r.max_rel_error > 0.3);
        assert_eq!(r.worst_index, 0);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let r = grad_check(|p| Ok(1.0 / (p[0] - 1e-6)), &[0.0], &[0.0], 1e-6);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
