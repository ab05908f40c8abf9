//! Update rules for a single codebook row.
//!
//! Every rule ends with the projection `Π_Y`, so iterates never leave the
//! region. Accumulators are kept per center; a step on center `k` touches
//! only row `k` of each accumulator.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ProjectionRegion;
use crate::scalar::{ordered_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Sgd,
    Momentum,
    Nag,
    AdaGrad,
    RmsProp,
    Adam,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Sgd,
        Variant::Momentum,
        Variant::Nag,
        Variant::AdaGrad,
        Variant::RmsProp,
        Variant::Adam,
    ];

    /// Base learning rate used for each variant in the MNIST experiments.
    pub fn default_rate(self) -> f64 {
        match self {
            Variant::AdaGrad => 0.1,
            Variant::Adam => 0.01,
            _ => 0.001,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sgd => "sgd",
            Variant::Momentum => "momentum",
            Variant::Nag => "nag",
            Variant::AdaGrad => "adagrad",
            Variant::RmsProp => "rmsprop",
            Variant::Adam => "adam",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

/// How ADAM divides out the moment bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasCorrection {
    /// `m̄ = m / (1 − β₁)`, `v̄ = v / (1 − β₂)`.
    #[default]
    Literal,
    /// `m̄ = m / (1 − β₁^t)`, `v̄ = v / (1 − β₂^t)` with `t` the center's update count.
    PowerT,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams<T> {
    /// Heavy-ball / extrapolation multiplier `γ`.
    pub momentum: T,
    /// RMSProp averaging multiplier `β`.
    pub rms_decay: T,
    pub beta1: T,
    pub beta2: T,
    /// Smoothing term added under the square roots.
    pub epsilon: T,
    pub bias_correction: BiasCorrection,
}

impl<T: Scalar> Default for Hyperparams<T> {
    fn default() -> Self {
        Self {
            momentum: T::lit(0.9),
            rms_decay: T::lit(0.9),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            bias_correction: BiasCorrection::Literal,
        }
    }
}

impl<T: Scalar> Hyperparams<T> {
    /// Multipliers must lie in `[0, 1)`; `ε > 0`. The endpoint `0` is allowed
    /// so the accelerated and averaged rules can degenerate to their base rule.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: T| {
            if v >= T::zero() && v < T::one() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1)")))
            }
        };
        unit("momentum", self.momentum)?;
        unit("rms_decay", self.rms_decay)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Projected SGD step `Π_Y(y − ρ g)`.
pub fn step_sgd<T: Scalar>(
    position: &[T],
    gradient: &[T],
    rate: T,
    region: &ProjectionRegion<T>,
) -> Vec<T> {
    let mut out: Vec<T> = position
        .iter()
        .zip(gradient)
        .map(|(&y, &g)| y - rate * g)
        .collect();
    region.project_in_place(&mut out);
    out
}

/// Per-center accumulators for one update rule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    variant: Variant,
    hyper: Hyperparams<T>,
    dim: usize,
    /// Momentum: `y_k^{t−1}`. NAG: `ỹ_k^{t−1}`. Initialized to the starting
    /// positions so the first heavy-ball / extrapolation term vanishes.
    previous: Vec<T>,
    /// AdaGrad / RMSProp: element-wise `G_k`. ADAM: first moment `m_k`.
    accum: Vec<T>,
    /// ADAM: scalar second moment `v_k` per center.
    second_moment: Vec<T>,
    /// Updates applied to each center.
    steps: Vec<u64>,
}

impl<T: Scalar> OptimizerState<T> {
    /// State for `initial.len() / dim` centers starting at `initial` (row-major).
    pub fn new(variant: Variant, hyper: Hyperparams<T>, initial: &[T], dim: usize) -> Result<Self> {
        hyper.validate()?;
        if dim == 0 || initial.is_empty() || initial.len() % dim != 0 {
            return Err(Error::InvalidConfig("initial positions do not match dimension".into()));
        }
        let centers = initial.len() / dim;
        let needs_previous = matches!(variant, Variant::Momentum | Variant::Nag);
        let needs_accum = matches!(variant, Variant::AdaGrad | Variant::RmsProp | Variant::Adam);
        Ok(Self {
            variant,
            hyper,
            dim,
            previous: if needs_previous { initial.to_vec() } else { Vec::new() },
            accum: if needs_accum { vec![T::zero(); initial.len()] } else { Vec::new() },
            second_moment: if variant == Variant::Adam {
                vec![T::zero(); centers]
            } else {
                Vec::new()
            },
            steps: vec![0; centers],
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn hyperparams(&self) -> &Hyperparams<T> {
        &self.hyper
    }

    pub fn steps(&self, k: usize) -> u64 {
        self.steps[k]
    }

    /// AdaGrad / RMSProp `G_k`, or ADAM `m_k`.
    pub fn accumulator(&self, k: usize) -> &[T] {
        &self.accum[k * self.dim..(k + 1) * self.dim]
    }

    /// ADAM `v_k`.
    pub fn second_moment(&self, k: usize) -> T {
        self.second_moment[k]
    }

    /// Momentum `y_k^{t−1}` or NAG `ỹ_k^{t−1}`.
    pub fn previous(&self, k: usize) -> &[T] {
        &self.previous[k * self.dim..(k + 1) * self.dim]
    }

    /// Applies one update to center `k` in place and returns the effective
    /// step size (the nominal rate for SGD, Momentum and NAG; the mean
    /// per-coordinate adapted rate otherwise).
    pub fn step(
        &mut self,
        k: usize,
        position: &mut [T],
        gradient: &[T],
        rate: T,
        region: &ProjectionRegion<T>,
    ) -> T {
        debug_assert_eq!(position.len(), self.dim);
        debug_assert_eq!(gradient.len(), self.dim);
        self.steps[k] += 1;
        let row = k * self.dim..(k + 1) * self.dim;
        let h = self.hyper;
        let effective = match self.variant {
            Variant::Sgd => {
                for (y, &g) in position.iter_mut().zip(gradient) {
                    *y -= rate * g;
                }
                rate
            }
            Variant::Momentum => {
                let prev = &mut self.previous[row];
                for ((y, p), &g) in position.iter_mut().zip(prev.iter_mut()).zip(gradient) {
                    let current = *y;
                    *y = current + h.momentum * (current - *p) - rate * g;
                    *p = current;
                }
                rate
            }
            Variant::Nag => {
                let prev = &mut self.previous[row];
                for ((y, p), &g) in position.iter_mut().zip(prev.iter_mut()).zip(gradient) {
                    let extrapolated = *y - rate * g;
                    *y = extrapolated + h.momentum * (extrapolated - *p);
                    *p = extrapolated;
                }
                rate
            }
            Variant::AdaGrad | Variant::RmsProp => {
                let acc = &mut self.accum[row];
                let mut rate_sum = T::zero();
                for ((y, gk), &g) in position.iter_mut().zip(acc.iter_mut()).zip(gradient) {
                    *gk = if self.variant == Variant::AdaGrad {
                        *gk + g * g
                    } else {
                        h.rms_decay * *gk + (T::one() - h.rms_decay) * g * g
                    };
                    let scaled = rate / (*gk + h.epsilon).sqrt();
                    *y -= scaled * g;
                    rate_sum += scaled;
                }
                rate_sum / T::from_usize_lossy(self.dim)
            }
            Variant::Adam => {
                let m = &mut self.accum[row];
                let v = &mut self.second_moment[k];
                let grad_sq = ordered_sum(gradient.iter().map(|&g| g * g));
                *v = h.beta2 * *v + (T::one() - h.beta2) * grad_sq;
                let (c1, c2) = match h.bias_correction {
                    BiasCorrection::Literal => (T::one() - h.beta1, T::one() - h.beta2),
                    BiasCorrection::PowerT => {
                        let t = self.steps[k] as i32;
                        (T::one() - h.beta1.powi(t), T::one() - h.beta2.powi(t))
                    }
                };
                let v_hat = *v / c2;
                let scaled = rate / (v_hat + h.epsilon).sqrt();
                for ((y, mk), &g) in position.iter_mut().zip(m.iter_mut()).zip(gradient) {
                    *mk = h.beta1 * *mk + (T::one() - h.beta1) * g;
                    *y -= scaled * (*mk / c1);
                }
                scaled
            }
        };
        region.project_in_place(position);
        effective
    }
}
