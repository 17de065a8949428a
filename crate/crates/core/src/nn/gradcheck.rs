//! Finite-difference validation of reverse-mode gradients.

use crate::error::Result;

use super::params::ParamStore;
use super::rng::RngStream;
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradReport {
    /// max over sampled coordinates of |g_ad − g_fd| / max(|g_ad|, |g_fd|, 1e-8)
    pub max_rel_err: f64,
    /// Parameter name and flat coordinate of the worst disagreement.
    pub worst: Option<(String, usize)>,
    pub coords_checked: usize,
}

/// Compare analytic gradients against central finite differences.
///
/// `eval` computes the scalar loss at the store's current parameters and
/// returns it together with the analytic gradient of every parameter. The
/// computation must be deterministic (dropout disabled); only the loss value
/// is used for the perturbed evaluations. Up to `max_coords_per_param`
/// coordinates are sampled per tensor. Parameters are restored exactly.
pub fn grad_check(
    params: &mut ParamStore,
    mut eval: impl FnMut(&ParamStore) -> Result<(f64, Vec<(String, Tensor)>)>,
    eps: f64,
    max_coords_per_param: usize,
    rng: &mut RngStream,
) -> Result<GradReport> {
    let (_, analytic) = eval(params)?;
    let mut report = GradReport { max_rel_err: 0.0, worst: None, coords_checked: 0 };
    for (name, grad) in &analytic {
        let len = grad.len();
        let coords: Vec<usize> = if len <= max_coords_per_param {
            (0..len).collect()
        } else {
            rng.choose_k(len, max_coords_per_param)
        };
        for c in coords {
            let original = params.get(name)?.values()[c];
            params.get_mut(name)?.values_mut()[c] = original + eps;
            let (loss_plus, _) = eval(params)?;
            params.get_mut(name)?.values_mut()[c] = original - eps;
            let (loss_minus, _) = eval(params)?;
            params.get_mut(name)?.values_mut()[c] = original;

            let g_fd = (loss_plus - loss_minus) / (2.0 * eps);
            let g_ad = grad.values()[c];
            let rel = (g_ad - g_fd).abs() / g_ad.abs().max(g_fd.abs()).max(1e-8);
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), c));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;

    #[test]
    fn polynomial_gradient_is_exact() {
        // f(p) = p·p at p = 3: analytic gradient 6.
        let mut store = ParamStore::new();
        store.add("p", Tensor::vector(vec![3.0])).unwrap();
        let eval = |s: &ParamStore| -> Result<(f64, Vec<(String, Tensor)>)> {
            let mut g = Graph::new();
            let p = g.param(s, "p")?;
            let loss = g.mul(p, p)?;
            g.backward(loss)?;
            Ok((g.value(loss).item(), vec![("p".to_string(), g.grad(p).unwrap().clone())]))
        };
        let mut rng = RngStream::new(0, 0);
        let report = grad_check(&mut store, eval, 1e-6, 8, &mut rng).unwrap();
        assert!(report.max_rel_err < 1e-9, "rel err {}", report.max_rel_err);
        // The probe leaves parameters untouched.
        assert_eq!(store.get("p").unwrap().values(), &[3.0]);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut store = ParamStore::new();
        store.add("p", Tensor::vector(vec![2.0])).unwrap();
        let eval = |s: &ParamStore| -> Result<(f64, Vec<(String, Tensor)>)> {
            let v = s.get("p")?.values()[0];
            // Loss v², deliberately wrong analytic gradient v (should be 2v).
            Ok((v * v, vec![("p".to_string(), Tensor::vector(vec![v]))]))
        };
        let mut rng = RngStream::new(0, 0);
        let report = grad_check(&mut store, eval, 1e-6, 8, &mut rng).unwrap();
        assert!(report.max_rel_err > 0.4, "rel err {}", report.max_rel_err);
        assert_eq!(report.worst.as_ref().unwrap().0, "p");
    }
}
