use ndarray::{Array2, Zip};

use super::TrainConfig;
use crate::cache_adapter::CacheAdapter;
use crate::error::{Error, Result};
use crate::kernels::{mmd_biased, mmd_gradient};

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (rows, classes) = logits.dim();
    if labels.len() != rows {
        return Err(Error::DimensionMismatch {
            context: "cross-entropy labels".into(),
            expected: rows,
            found: labels.len(),
        });
    }
    if rows == 0 {
        return Err(Error::EmptyInput("cross-entropy batch"));
    }
    if let Some(row) = labels.iter().position(|&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            row,
            label: labels[row] as u32,
            classes,
        });
    }
    let mut grad = Array2::zeros((rows, classes));
    let mut total = 0.0;
    for (i, row) in logits.outer_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        total += (max - row[labels[i]]) + sum.ln();
        for c in 0..classes {
            grad[[i, c]] = (row[c] - lse).exp();
        }
        grad[[i, labels[i]]] -= 1.0;
    }
    let n = rows as f64;
    grad /= n;
    Ok((total / n, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    /// `ce + alpha * mmd`
    pub loss: f64,
    pub ce: f64,
    /// `None` when alpha is zero and the MMD path was skipped.
    pub mmd: Option<f64>,
    pub d_keys: Array2<f64>,
}

/// `dS = dφ ⊙ ∂φ/∂S` for `φ = exp(−β(1 − min(S, 1)))`.
fn affinity_backward(d_phi: &Array2<f64>, phi: &Array2<f64>, sims: &Array2<f64>, beta: f64) -> Array2<f64> {
    let mut d_sims = Array2::zeros(d_phi.raw_dim());
    Zip::from(&mut d_sims)
        .and(d_phi)
        .and(phi)
        .and(sims)
        .for_each(|ds, &dp, &p, &s| {
            *ds = if s > 1.0 { 0.0 } else { dp * beta * p };
        });
    d_sims
}

/// Loss `CE(full_logits(batch)) + α · MMD(embed(real), embed(synth))` and its
/// exact gradient with respect to the cache keys.
///
/// Values and text weights are constants. The MMD term is evaluated on the
/// complete real and synthetic support sets.
pub fn loss_and_grad(
    adapter: &CacheAdapter,
    real_support: &Array2<f64>,
    synth_support: &Array2<f64>,
    batch: &Array2<f64>,
    batch_labels: &[usize],
    config: &TrainConfig,
) -> Result<LossGrad> {
    let beta = adapter.beta();
    let values = adapter.values();

    let sims = adapter.similarities(batch)?;
    let phi = crate::cache_adapter::phi(&sims, beta);
    let logits = phi.dot(values) * adapter.residual() + adapter.text_logits(batch)?;
    let (ce, d_logits) = cross_entropy(&logits, batch_labels)?;

    let d_phi = d_logits.dot(&values.t()) * adapter.residual();
    let d_sims = affinity_backward(&d_phi, &phi, &sims, beta);
    let mut d_keys = d_sims.t().dot(batch);

    if config.alpha == 0.0 {
        return Ok(LossGrad {
            loss: ce,
            ce,
            mmd: None,
            d_keys,
        });
    }

    let sims_r = adapter.similarities(real_support)?;
    let sims_s = adapter.similarities(synth_support)?;
    let phi_r = crate::cache_adapter::phi(&sims_r, beta);
    let phi_s = crate::cache_adapter::phi(&sims_s, beta);
    let emb_r = phi_r.dot(values);
    let emb_s = phi_s.dot(values);
    let mmd = mmd_biased(&emb_r, &emb_s, &config.kernel)?.value;
    let (d_emb_r, d_emb_s) = mmd_gradient(&emb_r, &emb_s, &config.kernel)?;

    for (d_emb, phi_x, sims_x, x) in [
        (d_emb_r, &phi_r, &sims_r, real_support),
        (d_emb_s, &phi_s, &sims_s, synth_support),
    ] {
        let d_phi_x = d_emb.dot(&values.t()) * config.alpha;
        let d_sims_x = affinity_backward(&d_phi_x, phi_x, sims_x, beta);
        d_keys += &d_sims_x.t().dot(x);
    }

    Ok(LossGrad {
        loss: ce + config.alpha * mmd,
        ce,
        mmd: Some(mmd),
        d_keys,
    })
}

/// Forward-only value of the training objective, composed from the public
/// adapter and kernel APIs. Finite-difference checks differentiate this.
pub fn objective(
    adapter: &CacheAdapter,
    real_support: &Array2<f64>,
    synth_support: &Array2<f64>,
    batch: &Array2<f64>,
    batch_labels: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    let (ce, _) = cross_entropy(&adapter.full_logits(batch)?, batch_labels)?;
    if config.alpha == 0.0 {
        return Ok(ce);
    }
    let mmd = mmd_biased(
        &adapter.mmd_embedding(real_support)?,
        &adapter.mmd_embedding(synth_support)?,
        &config.kernel,
    )?;
    Ok(ce + config.alpha * mmd.value)
}
