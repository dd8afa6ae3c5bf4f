use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Relative error above which a coordinate is flagged.
    pub tolerance: f64,
    /// Larger tensors are checked at this many evenly spaced coordinates.
    pub max_coords_per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_coords_per_tensor: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Flat indices whose relative error exceeded the tolerance.
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.flagged.is_empty())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn flagged_tensors(&self) -> impl Iterator<Item = &str> {
        self.tensors
            .iter()
            .filter(|t| !t.flagged.is_empty())
            .map(|t| t.name.as_str())
    }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the gradients accumulated by `objective` against central
/// differences.
///
/// `objective` must evaluate the loss at the current parameter values and
/// accumulate its gradient into `params` grads. It has to be deterministic:
/// callers with stochastic layers reseed their generators inside the closure.
pub fn grad_check<F>(params: &mut ParamStore, mut objective: F, opts: &GradCheckOptions) -> GradReport
where
    F: FnMut(&mut ParamStore) -> f64,
{
    params.zero_grad();
    objective(params);
    let analytic: Vec<(String, Vec<f64>)> = params
        .iter()
        .map(|(n, e)| (n.to_string(), e.grad.data().to_vec()))
        .collect();
    params.zero_grad();

    let mut tensors = Vec::with_capacity(analytic.len());
    for (name, grad) in analytic {
        let n = grad.len();
        let coords: Vec<usize> = if n <= opts.max_coords_per_tensor {
            (0..n).collect()
        } else {
            let stride = n as f64 / opts.max_coords_per_tensor as f64;
            (0..opts.max_coords_per_tensor)
                .map(|k| (k as f64 * stride) as usize)
                .collect()
        };
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            coords_checked: coords.len(),
            flagged: Vec::new(),
        };
        for k in coords {
            let original = params.value(&name).expect("listed").data()[k];
            params.value_mut(&name).expect("listed").data_mut()[k] = original + opts.step;
            let plus = objective(params);
            params.value_mut(&name).expect("listed").data_mut()[k] = original - opts.step;
            let minus = objective(params);
            params.value_mut(&name).expect("listed").data_mut()[k] = original;
            params.zero_grad();

            let numeric = (plus - minus) / (2.0 * opts.step);
            let err = relative_error(grad[k], numeric);
            if err > check.max_rel_error || err.is_nan() {
                check.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            }
            if !(err <= opts.tolerance) {
                check.flagged.push(k);
            }
        }
        tensors.push(check);
    }
    GradReport { tensors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor2;

    fn quadratic(p: &mut ParamStore) -> f64 {
        let w = p.value("w").unwrap().clone();
        p.grad_mut("w").unwrap().add_assign(&w).unwrap();
        0.5 * w.data().iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn quadratic_loss_passes_tightly() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor2::from_vec(1, 4, vec![0.3, -1.2, 2.0, 0.0]).unwrap())
            .unwrap();
        let opts = GradCheckOptions {
            tolerance: 1e-8,
            ..Default::default()
        };
        let report = grad_check(&mut p, quadratic, &opts);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn corrupted_rule_is_flagged() {
        let mut p = ParamStore::new();
        p.insert("good", Tensor2::filled(1, 2, 0.5)).unwrap();
        p.insert("bad", Tensor2::filled(1, 2, 0.5)).unwrap();
        let report = grad_check(
            &mut p,
            |p| {
                let g = p.value("good").unwrap().clone();
                let b = p.value("bad").unwrap().clone();
                p.grad_mut("good").unwrap().add_assign(&g).unwrap();
                // deliberately wrong: true gradient is b, not 2b
                p.grad_mut("bad").unwrap().add_assign(&b.scale(2.0)).unwrap();
                0.5 * (g.data().iter().chain(b.data()).map(|v| v * v).sum::<f64>())
            },
            &GradCheckOptions::default(),
        );
        assert!(!report.passed());
        assert_eq!(report.flagged_tensors().collect::<Vec<_>>(), vec!["bad"]);
    }

    #[test]
    fn subsampling_is_deterministic() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor2::filled(10, 10, 0.1)).unwrap();
        let opts = GradCheckOptions {
            max_coords_per_tensor: 7,
            ..Default::default()
        };
        let a = grad_check(&mut p, quadratic, &opts);
        let b = grad_check(&mut p, quadratic, &opts);
        assert_eq!(a, b);
        assert_eq!(a.tensors[0].coords_checked, 7);
    }
}
