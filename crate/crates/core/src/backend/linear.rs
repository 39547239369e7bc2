use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dims, Backend};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::scoring::softmax_unchecked;
use crate::types::{argmax, AccessLevel, FeatureVector, ModelOutput};

/// Losses whose input gradient is available for attacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradLoss {
    /// Cross-entropy between the softmax and the uniform distribution.
    CeUniform,
    /// Shannon entropy of the softmax.
    Entropy,
}

/// `logits = W x + b` with a softmax head. Its embedding of an input is the
/// input itself, so mixing embeddings and mixing inputs coincide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct LinearSoftmaxModel {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    #[serde(rename = "K")]
    k: usize,
    d: usize,
}

impl TryFrom<ModelFile> for LinearSoftmaxModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let m = LinearSoftmaxModel::new(f.w, f.b)?;
        if m.num_classes() != f.k || m.dim() != f.d {
            return Err(Error::Backend(format!(
                "model header says K={} d={}, weights are {}x{}",
                f.k,
                f.d,
                m.num_classes(),
                m.dim()
            )));
        }
        Ok(m)
    }
}

impl From<LinearSoftmaxModel> for ModelFile {
    fn from(m: LinearSoftmaxModel) -> Self {
        ModelFile {
            k: m.num_classes(),
            d: m.dim(),
            w: m.weights,
            b: m.bias,
        }
    }
}

impl LinearSoftmaxModel {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::Backend("model needs at least one class".into()));
        }
        let d = weights[0].len();
        if d == 0 {
            return Err(Error::Backend("model input dimension must be >= 1".into()));
        }
        if weights.iter().any(|row| row.len() != d) {
            return Err(Error::Backend("weight rows differ in length".into()));
        }
        if bias.len() != k {
            return Err(Error::Backend(format!(
                "bias has {} entries, expected {k}",
                bias.len()
            )));
        }
        if weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Backend("model parameters must be finite".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![vec![0.0; dim]; num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// For a two-class model, the margin `w . x + b` with `w = W1 - W0`, `b = b1 - b0`.
    pub fn binary_margin(&self) -> Result<(Vec<f64>, f64)> {
        if self.num_classes() != 2 {
            return Err(Error::Theory(format!(
                "scalar margin needs a binary model, got K={}",
                self.num_classes()
            )));
        }
        let w = self.weights[1]
            .iter()
            .zip(&self.weights[0])
            .map(|(a, b)| a - b)
            .collect();
        Ok((w, self.bias[1] - self.bias[0]))
    }

    pub fn output(&self, x: &[f64], level: AccessLevel) -> ModelOutput {
        let values = match level {
            AccessLevel::Embeddings => x.to_vec(),
            AccessLevel::Logits => self.logits(x),
            AccessLevel::Probs => softmax_unchecked(&self.logits(x)),
            AccessLevel::Labels => {
                let l = self.logits(x);
                let mut v = vec![0.0; l.len()];
                v[argmax(&l)] = 1.0;
                v
            }
        };
        ModelOutput::new(level.output_kind(), values).expect("finite model on finite input")
    }

    /// Analytic gradient of `loss` with respect to the input.
    pub fn input_gradient(&self, x: &[f64], loss: GradLoss) -> Vec<f64> {
        let logits = self.logits(x);
        let p = softmax_unchecked(&logits);
        let k = p.len() as f64;
        // dL/dlogits, then back through W.
        let g: Vec<f64> = match loss {
            GradLoss::CeUniform => p.iter().map(|pi| pi - 1.0 / k).collect(),
            GradLoss::Entropy => {
                let mean: f64 = p.iter().zip(&logits).map(|(pi, li)| pi * li).sum();
                p.iter().zip(&logits).map(|(pi, li)| -pi * (li - mean)).collect()
            }
        };
        let mut out = vec![0.0; self.dim()];
        for (row, gk) in self.weights.iter().zip(&g) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += gk * w;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Backend(format!("{}: {j}", path.display())),
            other => other,
        })
    }
}

impl Backend for LinearSoftmaxModel {
    fn dim(&self) -> usize {
        self.weights[0].len()
    }

    fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn supports(&self, _level: AccessLevel) -> bool {
        true
    }

    fn predict(&self, batch: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>> {
        check_dims(batch, self.dim())?;
        Ok(batch.iter().map(|x| self.output(x.as_slice(), level)).collect())
    }

    fn grad_input(&self, x: &FeatureVector, loss: GradLoss) -> Result<FeatureVector> {
        check_dims(std::slice::from_ref(x), self.dim())?;
        FeatureVector::new(self.input_gradient(x.as_slice(), loss))
    }

    fn describe(&self) -> String {
        format!("linear-softmax K={} d={}", self.num_classes(), self.dim())
    }
}

/// Trained model and the mean cross-entropy after each epoch (index 0 is the
/// initial loss).
#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: LinearSoftmaxModel,
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Full-batch gradient descent on mean cross-entropy over the labeled
/// in-distribution rows, starting from zero weights. Stops early (keeping the
/// previous parameters) if an epoch raises the loss by more than 1e-6.
pub fn fit_logistic(data: &LabeledDataset, epochs: usize, lr: f64) -> Result<FitReport> {
    if epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {lr}")));
    }
    let rows: Vec<(&[f64], usize)> = data
        .in_distribution()
        .map(|r| (r.features.as_slice(), r.label.expect("validated")))
        .collect();
    let k = data.num_classes();
    let mut present = vec![false; k];
    rows.iter().for_each(|&(_, y)| present[y] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Backend(
            "training data must contain at least two classes".into(),
        ));
    }
    let d = data.dim();
    let n = rows.len() as f64;
    let mut model = LinearSoftmaxModel::zeros(k, d);

    let loss_and_grad = |m: &LinearSoftmaxModel| {
        let mut loss = 0.0;
        let mut gw = vec![vec![0.0; d]; k];
        let mut gb = vec![0.0; k];
        for &(x, y) in &rows {
            let logits = m.logits(x);
            let lse = crate::scoring::logsumexp(&logits);
            loss += lse - logits[y];
            for c in 0..k {
                let err = (logits[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
                gb[c] += err;
                for (g, xi) in gw[c].iter_mut().zip(x) {
                    *g += err * xi;
                }
            }
        }
        (loss / n, gw, gb)
    };

    let (mut loss, mut gw, mut gb) = loss_and_grad(&model);
    let mut losses = vec![loss];
    let mut stopped_early = false;
    for _ in 0..epochs {
        let mut next = model.clone();
        for c in 0..k {
            for (w, g) in next.weights[c].iter_mut().zip(&gw[c]) {
                *w -= lr * g / n;
            }
            next.bias[c] -= lr * gb[c] / n;
        }
        let (next_loss, next_gw, next_gb) = loss_and_grad(&next);
        if !next_loss.is_finite() || next_loss > loss + 1e-6 {
            stopped_early = true;
            break;
        }
        model = next;
        loss = next_loss;
        gw = next_gw;
        gb = next_gb;
        losses.push(loss);
    }
    Ok(FitReport {
        model,
        losses,
        stopped_early,
    })
}
