//! Gradient verification against central finite differences.

use super::{Graph, NodeId, Tensor, TensorError};

/// Relative-error denominator floor; differences below this scale are noise.
const REL_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of a scalar function against central
/// differences `(f(p+h) − f(p−h)) / 2h`, coordinate by coordinate, and
/// returns the maximum relative error over all parameters.
///
/// `build` must construct the full forward graph from the given parameter
/// leaves and return the scalar output node. Run this in f64; central
/// differences are unreliable in f32.
pub fn grad_check<F>(build: F, params: &[Tensor<f64>], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId, TensorError>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(TensorError::BadStep);
    }

    let eval = |points: &[Tensor<f64>]| -> Result<(f64, Graph<f64>, NodeId), TensorError> {
        let mut graph = Graph::new();
        let ids: Vec<NodeId> =
            points.iter().enumerate().map(|(i, p)| graph.param(p.clone(), i)).collect();
        let out = build(&mut graph, &ids)?;
        if graph.value(out).len() != 1 {
            return Err(TensorError::NonScalarOutput(graph.value(out).shape().to_vec()));
        }
        Ok((graph.value(out).item(), graph, out))
    };

    let (_, graph, out) = eval(params)?;
    let analytic = graph.backward(out)?;

    let mut worst = 0.0f64;
    let mut perturbed: Vec<Tensor<f64>> = params.to_vec();
    for (pi, param) in params.iter().enumerate() {
        for j in 0..param.len() {
            let original = param.data()[j];
            perturbed[pi].data_mut()[j] = original + h;
            let (plus, _, _) = eval(&perturbed)?;
            perturbed[pi].data_mut()[j] = original - h;
            let (minus, _, _) = eval(&perturbed)?;
            perturbed[pi].data_mut()[j] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let reverse = analytic[pi].as_ref().map_or(0.0, |g| g.data()[j]);
            let rel = (reverse - numeric).abs() / reverse.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    #[test]
    fn linear_function_is_exact() {
        let params = vec![Tensor::<f64>::from_fn(&[4], |i| 0.3 * i as f64 - 0.5)];
        let err = grad_check(
            |g, ids| {
                let scaled = g.scale(ids[0], 2.5);
                Ok(g.mean(scaled))
            },
            &params,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-10, "linear check failed: {err}");
    }

    #[test]
    fn zero_step_is_rejected() {
        let params = vec![Tensor::<f64>::zeros(&[2])];
        assert_eq!(grad_check(|g, ids| Ok(g.mean(ids[0])), &params, 0.0), Err(TensorError::BadStep));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let params = vec![Tensor::<f64>::zeros(&[2])];
        assert!(matches!(
            grad_check(|_, ids| Ok(ids[0]), &params, 1e-5),
            Err(TensorError::NonScalarOutput(_))
        ));
    }

    #[test]
    fn tiny_softmax_cross_entropy_network() {
        let mut rng = Rng::seeded(42);
        let params = vec![
            rng.uniform_tensor::<f64>(&[3, 5], 0.8),
            rng.uniform_tensor::<f64>(&[5, 4], 0.8),
            rng.uniform_tensor::<f64>(&[4], 0.5),
        ];
        let err = grad_check(
            |g, ids| {
                let x = g.constant(Tensor::from_fn(&[2, 3], |i| (i as f64 * 0.9).cos()));
                let h = g.matmul(x, ids[0])?;
                let h = g.relu(h);
                let logits = g.matmul(h, ids[1])?;
                let logits = g.add_row_bias(logits, ids[2])?;
                g.cross_entropy(logits, &[1, 3], None)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "softmax+CE check failed: {err}");
    }
}
