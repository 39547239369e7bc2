//! Classifiers the engine can query: a local linear-softmax model and an
//! HTTP client for a remote one.

mod linear;
mod remote;

pub use linear::{fit_logistic, FitReport, GradLoss, LinearSoftmaxModel};
pub use remote::{RemoteBackend, RemoteOptions, ServerInfo};

use crate::error::{Error, Result};
use crate::types::{AccessLevel, FeatureVector, ModelOutput};

/// A classifier reachable through its inputs and outputs only.
pub trait Backend: Send + Sync {
    /// Input dimension.
    fn dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn supports(&self, level: AccessLevel) -> bool;

    /// One output of kind `level` per input, in input order.
    fn predict(&self, batch: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>>;

    /// Gradient of `loss` with respect to the input, when the backend is differentiable.
    fn grad_input(&self, _x: &FeatureVector, _loss: GradLoss) -> Result<FeatureVector> {
        Err(Error::GradientsUnavailable)
    }

    /// Short human-readable description for logs and manifests.
    fn describe(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn supports(&self, level: AccessLevel) -> bool {
        (**self).supports(level)
    }

    fn predict(&self, batch: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>> {
        (**self).predict(batch, level)
    }

    fn grad_input(&self, x: &FeatureVector, loss: GradLoss) -> Result<FeatureVector> {
        (**self).grad_input(x, loss)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Restricts another backend to a single access level.
pub struct LevelGuard<B> {
    inner: B,
    level: AccessLevel,
}

impl<B: Backend> LevelGuard<B> {
    pub fn new(inner: B, level: AccessLevel) -> Result<Self> {
        if !inner.supports(level) {
            return Err(Error::Backend(format!(
                "{} does not support {level} access",
                inner.describe()
            )));
        }
        Ok(Self { inner, level })
    }

    pub fn level(&self) -> AccessLevel {
        self.level
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for LevelGuard<B> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn supports(&self, level: AccessLevel) -> bool {
        level == self.level
    }

    fn predict(&self, batch: &[FeatureVector], level: AccessLevel) -> Result<Vec<ModelOutput>> {
        if level != self.level {
            return Err(Error::AccessDenied);
        }
        self.inner.predict(batch, level)
    }

    fn grad_input(&self, x: &FeatureVector, loss: GradLoss) -> Result<FeatureVector> {
        self.inner.grad_input(x, loss)
    }

    fn describe(&self) -> String {
        format!("{} ({} only)", self.inner.describe(), self.level)
    }
}

pub(crate) fn check_dims(batch: &[FeatureVector], dim: usize) -> Result<()> {
    for x in batch {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
    }
    Ok(())
}
