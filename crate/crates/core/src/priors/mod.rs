//! Image priors: log-density and its gradient with respect to the image.

pub mod ar;
pub mod checkpoint;
pub mod gmrf;
pub mod histogram;
pub mod logistic;
pub mod oracle;
pub mod train;

pub use ar::{ar_conditional, ArConfig, ArPriorModel};
pub use gmrf::GaussianMrfPrior;
pub use histogram::HistogramModel;
pub use logistic::{discretized_logistic_logprob, relaxed_logprob, MixtureParams};
pub use oracle::{gaussian_mrf_map_oracle, OracleMode};
pub use train::{train_ar_prior, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::image::Image;

/// A differentiable image density.
///
/// `log_density` is the scoring density. `value_and_grad` returns a
/// differentiable surrogate of it together with its gradient; for continuous
/// densities the two coincide, for the autoregressive prior the surrogate is
/// the continuous relaxation of the discrete bin likelihood.
pub trait ImagePrior: Send + Sync {
    fn name(&self) -> &str;

    /// Side length of the square patches the prior scores natively, if any.
    fn patch_size(&self) -> Option<usize> {
        None
    }

    fn log_density(&self, image: &Image) -> Result<f64>;

    fn value_and_grad(&self, image: &Image) -> Result<(f64, Image)>;

    fn grad_log_density(&self, image: &Image) -> Result<Image> {
        Ok(self.value_and_grad(image)?.1)
    }

    fn surrogate_log_density(&self, image: &Image) -> Result<f64> {
        Ok(self.value_and_grad(image)?.0)
    }
}

pub(crate) fn check_finite(image: &Image) -> Result<()> {
    if image.is_finite() {
        Ok(())
    } else {
        Err(Error::Param("image contains non-finite values".into()))
    }
}

/// Flat density: zero gradient everywhere. Reduces every solver to its
/// constraint steps alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPrior;

impl ImagePrior for UniformPrior {
    fn name(&self) -> &str {
        "uniform"
    }

    fn log_density(&self, image: &Image) -> Result<f64> {
        check_finite(image)?;
        Ok(0.0)
    }

    fn value_and_grad(&self, image: &Image) -> Result<(f64, Image)> {
        check_finite(image)?;
        let (h, w, c) = image.shape();
        Ok((0.0, Image::zeros(h, w, c)))
    }
}

/// Log-density of `image` under `prior`.
pub fn log_density(prior: &dyn ImagePrior, image: &Image) -> Result<f64> {
    prior.log_density(image)
}

/// `∇_X log p(X)`.
pub fn grad_log_density(prior: &dyn ImagePrior, image: &Image) -> Result<Image> {
    prior.grad_log_density(image)
}
