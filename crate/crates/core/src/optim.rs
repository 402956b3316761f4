//! RMSProp.
//!
//! ```text
//! acc   <- rho * acc + (1 - rho) * g^2
//! theta <- theta - lr * g / (sqrt(acc) + eps)
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, rho: 0.9, eps: 1e-8 }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive"));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidConfig("rho must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Location of the first non-finite gradient entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFinite {
    pub group: usize,
    pub index: usize,
}

/// RMSProp over a fixed list of parameter groups. Accumulators are created
/// lazily on the first step from the gradient shapes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RmsProp {
    pub config: RmsPropConfig,
    pub accumulators: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, accumulators: Vec::new() })
    }

    /// One update of every group. Nothing is modified if any gradient entry
    /// is NaN or infinite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> core::result::Result<(), NonFinite> {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group count");
        for (group, g) in grads.iter().enumerate() {
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                return Err(NonFinite { group, index });
            }
        }
        if self.accumulators.is_empty() {
            self.accumulators = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        let RmsPropConfig { learning_rate, rho, eps } = self.config;
        for ((theta, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            assert_eq!(theta.len(), g.len(), "parameter/gradient shape");
            assert_eq!(acc.len(), g.len(), "accumulator shape");
            for ((t, &gi), a) in theta.iter_mut().zip(g.iter()).zip(acc.iter_mut()) {
                *a = rho * *a + (1.0 - rho) * gi * gi;
                *t -= learning_rate * gi / (libm::sqrt(*a) + eps);
            }
        }
        Ok(())
    }
}
