//! Central-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::MiniDense;
use super::ops::softmax_cross_entropy;
use super::tensor::Tensor;
use super::NnError;

/// Compares analytic parameter gradients against central finite differences
/// `(f(theta+eps) - f(theta-eps)) / (2 eps)` on a random subset of parameter
/// elements, and returns the maximum relative error.
///
/// The loss is the softmax cross-entropy of `model(input)` against `labels`.
/// Run this on an `f64` model: an `f32` forward pass quantizes the loss far
/// above useful finite-difference resolution.
pub fn grad_check(
    model: &mut MiniDense<f64>,
    input: &Tensor<f64>,
    labels: &[usize],
    eps: f64,
    sample_size: usize,
    seed: u64,
) -> Result<f64, NnError> {
    if eps == 0.0 {
        return Err(NnError::ZeroEps);
    }

    model.zero_grads();
    let (logits, cache) = model.forward_cached(input)?;
    let (_, grad_logits) = softmax_cross_entropy(&logits, labels)?;
    model.backward(&cache, &grad_logits)?;

    // flatten the (parameter, element) index space
    let sizes: Vec<(String, usize)> = model
        .parameters()
        .map(|(name, t)| (name.to_string(), t.numel()))
        .collect();
    let total: usize = sizes.iter().map(|(_, n)| n).sum();
    let picks = sample_size.min(total);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < picks {
        chosen.insert(rng.gen_range(0..total));
    }

    let locate = |flat: usize| -> (String, usize) {
        let mut rest = flat;
        for (name, n) in &sizes {
            if rest < *n {
                return (name.clone(), rest);
            }
            rest -= n;
        }
        unreachable!("flat index within total")
    };

    let mut max_rel = 0.0f64;
    for flat in chosen {
        let (name, idx) = locate(flat);
        let analytic = model.parameter(&name).unwrap().grad().unwrap()[idx];

        let original = model.parameter(&name).unwrap().data()[idx];
        let loss_at = |m: &mut MiniDense<f64>, value: f64| -> Result<(f64, u64), NnError> {
            m.parameter_mut(&name).unwrap().data_mut()[idx] = value;
            let (logits, cache) = m.forward_cached(input)?;
            let loss = softmax_cross_entropy(&logits, labels)?.0;
            Ok((loss, cache.relu_state_hash()))
        };
        let (plus, state_plus) = loss_at(model, original + eps)?;
        let (minus, state_minus) = loss_at(model, original - eps)?;
        model.parameter_mut(&name).unwrap().data_mut()[idx] = original;

        // the loss is piecewise smooth; a probe that flips any ReLU between
        // its two evaluation points straddles a kink and says nothing about
        // the gradient, so it is discarded
        if state_plus != state_minus {
            continue;
        }

        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs());
        let rel = if denom < 1e-10 {
            0.0
        } else {
            (analytic - numeric).abs() / denom
        };
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ModelConfig;

    fn tiny_model(seed: u64) -> MiniDense<f64> {
        let cfg = ModelConfig {
            input_height: 16,
            input_width: 32,
            ..ModelConfig::default()
        };
        let mut model = MiniDense::<f64>::new(&cfg, seed).unwrap();
        // non-zero head so gradients reach every layer
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for v in model.parameter_mut("head.weight").unwrap().data_mut() {
            *v = rng.gen_range(-0.1..0.1);
        }
        model
    }

    fn random_batch(seed: u64) -> (Tensor<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = Tensor::new(
            &[2, 1, 16, 32],
            (0..2 * 16 * 32).map(|_| rng.gen_range(0.0..1.0)).collect(),
        )
        .unwrap();
        let labels = vec![rng.gen_range(0..7), rng.gen_range(0..7)];
        (batch, labels)
    }

    #[test]
    fn zero_eps_is_rejected() {
        let mut model = tiny_model(1);
        let (batch, labels) = random_batch(1);
        assert!(matches!(
            grad_check(&mut model, &batch, &labels, 0.0, 10, 0),
            Err(NnError::ZeroEps)
        ));
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let mut model = tiny_model(2);
        let (batch, labels) = random_batch(2);
        let err = grad_check(&mut model, &batch, &labels, 1e-3, 120, 3).unwrap();
        assert!(err <= 1e-3, "max relative error {err}");
    }

    #[test]
    fn restores_parameters_after_probing() {
        let mut model = tiny_model(4);
        let before: Vec<f64> = model
            .parameters()
            .flat_map(|(_, t)| t.data().to_vec())
            .collect();
        let (batch, labels) = random_batch(4);
        grad_check(&mut model, &batch, &labels, 1e-3, 50, 5).unwrap();
        let after: Vec<f64> = model
            .parameters()
            .flat_map(|(_, t)| t.data().to_vec())
            .collect();
        assert_eq!(before, after);
    }
}
