use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{cosine_lr, AdamW, NnError, Params, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        TrainRecipe {
            learning_rate: 1e-4,
            min_learning_rate: 0.0,
            weight_decay: 1e-5,
            max_epochs: 100,
            patience: 10,
            batch_size: 8,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub params: Params,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mini-batch AdamW with cosine annealing and early stopping on validation
/// loss. `grad` returns a sample's loss and per-parameter gradients; the
/// rng it receives drives any per-sample augmentation.
pub fn fit<S, G, V>(
    mut params: Params,
    train: &[S],
    val: &[S],
    recipe: &TrainRecipe,
    mut grad: G,
    mut val_loss: V,
) -> Result<TrainOutcome, NnError>
where
    G: FnMut(&Params, &S, &mut ChaCha8Rng) -> Result<(f64, Vec<Tensor>), NnError>,
    V: FnMut(&Params, &S) -> Result<f64, NnError>,
{
    if train.is_empty() {
        return Err(NnError::Training("empty training set".into()));
    }
    let batch_size = recipe.batch_size.max(1);
    let batches_per_epoch = train.len().div_ceil(batch_size);
    let total_steps = batches_per_epoch * recipe.max_epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let mut opt = AdamW::new(&params, recipe.weight_decay);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut step = 0;
    let mut stopped_early = false;

    for epoch in 0..recipe.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = recipe.learning_rate;
        for batch in order.chunks(batch_size) {
            let mut acc = params.zeros_like();
            for &i in batch {
                let (loss, g) = grad(&params, &train[i], &mut rng)?;
                if !loss.is_finite() {
                    return Err(NnError::Training(format!(
                        "non-finite loss on sample {i} in epoch {epoch}"
                    )));
                }
                epoch_loss += loss;
                for (a, gi) in acc.iter_mut().zip(&g) {
                    a.add_assign(gi);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let mut sq = 0.0;
            for a in &mut acc {
                a.scale(inv);
                sq += a.data().iter().map(|v| v * v).sum::<f64>();
            }
            if let Some(max) = recipe.clip_norm {
                let norm = sq.sqrt();
                if norm > max {
                    for a in &mut acc {
                        a.scale(max / norm);
                    }
                }
            }
            lr = cosine_lr(
                step,
                total_steps,
                recipe.learning_rate,
                recipe.min_learning_rate,
            );
            opt.step(&mut params, &acc, lr);
            step += 1;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss_value = if val.is_empty() {
            train_loss
        } else {
            let mut total = 0.0;
            for s in val {
                total += val_loss(&params, s)?;
            }
            total / val.len() as f64
        };
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss_value:.5} lr {lr:.3e}");
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss: val_loss_value,
            lr,
        });
        if val_loss_value < best.0 {
            best = (val_loss_value, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= recipe.patience {
                stopped_early = epoch + 1 < recipe.max_epochs;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.1,
        log,
        best_epoch: best.2,
        stopped_early,
    })
}

/// Sample indices partitioned into signer-disjoint train/val/test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignerSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// 70/15/15 split by signer: every signer's samples land in one partition.
/// Validation and test each receive at least one signer.
pub fn split_by_signer(signers: &[u32], seed: u64) -> Result<SignerSplit, NnError> {
    let mut ids: Vec<u32> = signers.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 3 {
        return Err(NnError::Training(format!(
            "{} distinct signers; at least 3 are needed for a signer-disjoint split",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = ((0.7 * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((n - n_train) / 2).max(1);
    let val_ids = &ids[..n_val];
    let test_ids = &ids[n_val..n - n_train];
    let mut split = SignerSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (i, s) in signers.iter().enumerate() {
        if val_ids.contains(s) {
            split.val.push(i);
        } else if test_ids.contains(s) {
            split.test.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fits a single scalar towards 3.0 under squared loss.
    fn run(recipe: &TrainRecipe, val_target: f64) -> TrainOutcome {
        let mut p = Params::new();
        p.push("w", Tensor::zeros(1, 1));
        let samples = vec![3.0; 4];
        let val = vec![val_target];
        fit(
            p,
            &samples,
            &val,
            recipe,
            |p, &y, _| {
                let w = p.tensor(0).get(0, 0);
                Ok(((w - y).powi(2), vec![Tensor::filled(1, 1, 2.0 * (w - y))]))
            },
            |p, &y| Ok((p.tensor(0).get(0, 0) - y).powi(2)),
        )
        .unwrap()
    }

    #[test]
    fn converges_and_is_deterministic() {
        let recipe = TrainRecipe {
            learning_rate: 0.1,
            max_epochs: 200,
            batch_size: 2,
            ..TrainRecipe::default()
        };
        let a = run(&recipe, 3.0);
        let b = run(&recipe, 3.0);
        assert_eq!(a.params, b.params);
        assert!((a.params.tensor(0).get(0, 0) - 3.0).abs() < 0.05);
    }

    #[test]
    fn patience_stops_early() {
        // Validation prefers w = 0, so it only gets worse as training proceeds.
        let recipe = TrainRecipe {
            learning_rate: 0.1,
            max_epochs: 100,
            patience: 10,
            ..TrainRecipe::default()
        };
        let out = run(&recipe, 0.0);
        assert!(out.stopped_early);
        assert!(out.log.len() < 100);
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn signer_split_is_disjoint() {
        let signers: Vec<u32> = (0..200).map(|i| i % 10).collect();
        let s = split_by_signer(&signers, 4).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 200);
        let of = |idx: &[usize]| idx.iter().map(|&i| signers[i]).collect::<BTreeSet<_>>();
        assert!(of(&s.train).is_disjoint(&of(&s.val)));
        assert!(of(&s.train).is_disjoint(&of(&s.test)));
        assert!(of(&s.val).is_disjoint(&of(&s.test)));
        assert_eq!(of(&s.train).len(), 7);
        assert!(split_by_signer(&[1, 1, 2], 0).is_err());
    }
}
