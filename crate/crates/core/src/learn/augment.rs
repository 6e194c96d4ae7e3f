use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Sequence};
use crate::error::{Error, Result};

/// `factor` copies of every sequence; copy 0 is untouched and the others get
/// zero-mean Gaussian noise of std `noise_scale` on the inputs. Targets are
/// never perturbed.
pub fn augment(ds: &Dataset, factor: usize, noise_scale: f64, seed: u64) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::InvalidParam("augmentation factor must be >= 1".into()));
    }
    let noise = Normal::new(0.0, noise_scale)
        .map_err(|e| Error::InvalidParam(format!("noise scale {noise_scale}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ds.sequences.len() * factor);
    for copy in 0..factor {
        for s in &ds.sequences {
            let inputs = if copy == 0 {
                s.inputs.clone()
            } else {
                s.inputs
                    .iter()
                    .map(|x| x.iter().map(|v| v + noise.sample(&mut rng)).collect())
                    .collect()
            };
            out.push(Sequence {
                episode: s.episode,
                inputs,
                targets: s.targets.clone(),
            });
        }
    }
    Dataset::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataset {
        Dataset::new(vec![Sequence {
            episode: 3,
            inputs: (0..50).map(|k| vec![k as f64 * 0.01, 0.5]).collect(),
            targets: (0..50).map(|k| vec![k as f64]).collect(),
        }])
        .unwrap()
    }

    #[test]
    fn factor_one_is_identity() {
        assert_eq!(augment(&ds(), 1, 0.01, 9).unwrap(), ds());
    }

    #[test]
    fn factor_multiplies_sequences_and_keeps_targets() {
        let a = augment(&ds(), 20, 0.01, 9).unwrap();
        assert_eq!(a.sequences.len(), 20);
        assert_eq!(a.sequences[0], ds().sequences[0]);
        assert!(a.sequences.iter().all(|s| s.targets == ds().sequences[0].targets));
        assert_ne!(a.sequences[1].inputs, ds().sequences[0].inputs);
        assert!(augment(&ds(), 0, 0.01, 9).is_err());
    }

    #[test]
    fn noise_is_zero_mean() {
        let sigma = 0.01;
        let a = augment(&ds(), 20, sigma, 1).unwrap();
        let base = &ds().sequences[0].inputs;
        let mut sum = 0.0;
        let mut n = 0usize;
        for s in &a.sequences[1..] {
            for (x, b) in s.inputs.iter().zip(base) {
                for (v, w) in x.iter().zip(b) {
                    sum += v - w;
                    n += 1;
                }
            }
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    }
}
