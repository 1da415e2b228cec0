//! Mask-constrained filter learning by ADMM.
//!
//! Solves, per channel,
//!
//! ```text
//! min_h  ½ Σ_j (y_j − (M ⊙ h)ᵀ x(τ_j))² + λ/2 ‖h‖²
//! ```
//!
//! by splitting into a Fourier-domain variable `ĝ` and a spatial filter `h`
//! supported on the mask, linked by `ĝ = F(M ⊙ h)` with `F` the unnormalized
//! DFT. Each iteration updates `ĝ` per frequency in closed form, `h` in the
//! spatial domain, then the multiplier `ξ̂`, and grows the penalty `μ`
//! geometrically.

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::dcf::{channel_spectra, check_shape, closed_form_channel, FilterBank};
use crate::depth_mask::Mask;
use crate::features::FeatureStack;
use crate::fft::{real_inner, squared_norm, Fft2, Spectrum};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Initial penalty.
    pub mu0: f64,
    /// Penalty growth factor per iteration.
    pub beta: f64,
    pub iterations: usize,
    /// Upper bound on the penalty.
    pub mu_max: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            mu0: 5.0,
            beta: 3.0,
            iterations: 4,
            mu_max: 20.0,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu0 > 0.0) || !(self.beta >= 1.0) || self.iterations == 0 || !(self.mu_max >= self.mu0) {
            return Err(Error::Configuration(format!(
                "ADMM needs mu0 > 0, beta >= 1, mu_max >= mu0, iterations >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Iterate of one channel's solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub g_hat: Spectrum,
    /// Spatial filter, exactly zero off the mask.
    pub h: Array2<f64>,
    pub xi_hat: Spectrum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub channels: Vec<ChannelState>,
    pub mu: f64,
}

/// One line of the optional diagnostic trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
}

impl IterationRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{:e},{:e}", self.iteration, self.objective, self.residual)
    }
}

/// Relative constraint violation `‖ĝ − F(M ⊙ h)‖ / ‖ĝ‖` over all channels;
/// 0 when both sides vanish.
pub fn constraint_residual(state: &AdmmState, fft: &Fft2) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ch in &state.channels {
        let h_hat = fft.forward_real(ch.h.view());
        num += squared_norm(&(&ch.g_hat - &h_hat));
        den += squared_norm(&ch.g_hat);
    }
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// Augmented Lagrangian at the current iterate, divided by the number of
/// cells so it is on the scale of the spatial objective.
pub fn augmented_objective(
    state: &AdmmState,
    x_hat: &[Spectrum],
    y_hat: &Spectrum,
    lambda: f64,
    fft: &Fft2,
) -> f64 {
    let d = y_hat.len() as f64;
    let mut total = 0.0;
    for (ch, x) in state.channels.iter().zip(x_hat) {
        let h_hat = fft.forward_real(ch.h.view());
        let gap = &ch.g_hat - &h_hat;
        let mut data = 0.0;
        Zip::from(&ch.g_hat).and(x).and(y_hat).for_each(|g, x, y| data += (y - g.conj() * x).norm_sqr());
        total += 0.5 * data
            + 0.5 * lambda * d * ch.h.iter().map(|v| v * v).sum::<f64>()
            + real_inner(&ch.xi_hat, &gap)
            + 0.5 * state.mu * squared_norm(&gap);
    }
    total / d
}

/// `½ Σ_j (y_j − hᵀ x(τ_j))² + λ/2 ‖h‖²` summed over channels, for spatial
/// filters `h`.
pub fn masked_objective(h: &[Array2<f64>], x: &FeatureStack, y_hat: &Spectrum, lambda: f64, fft: &Fft2) -> f64 {
    let d = y_hat.len() as f64;
    let x_hat = channel_spectra(x, fft);
    h.iter()
        .zip(&x_hat)
        .map(|(h, x)| {
            let h_hat = fft.forward_real(h.view());
            let mut data = 0.0;
            Zip::from(&h_hat).and(x).and(y_hat).for_each(|hh, x, y| data += (y - hh.conj() * x).norm_sqr());
            0.5 * data / d + 0.5 * lambda * h.iter().map(|v| v * v).sum::<f64>()
        })
        .sum()
}

/// Result of a masked solve, with the final iterate and an optional trace.
#[derive(Debug, Clone)]
pub struct MaskedSolution {
    pub filter: FilterBank,
    pub state: AdmmState,
    pub trace: Vec<IterationRecord>,
}

pub fn solve_masked(
    x: &FeatureStack,
    y_hat: &Spectrum,
    mask: &Mask,
    lambda: f64,
    config: &AdmmConfig,
    h_init: Option<&FilterBank>,
    fft: &Fft2,
) -> Result<FilterBank> {
    Ok(solve_masked_detailed(x, y_hat, mask, lambda, config, h_init, fft, false)?.filter)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_masked_detailed(
    x: &FeatureStack,
    y_hat: &Spectrum,
    mask: &Mask,
    lambda: f64,
    config: &AdmmConfig,
    h_init: Option<&FilterBank>,
    fft: &Fft2,
    trace: bool,
) -> Result<MaskedSolution> {
    config.validate()?;
    check_shape(x, y_hat.dim())?;
    if mask.values.dim() != y_hat.dim() {
        return Err(Error::InvalidGeometry(format!(
            "mask grid {:?} does not match filter grid {:?}",
            mask.values.dim(),
            y_hat.dim()
        )));
    }
    if mask.active_cells() == 0 {
        return Err(Error::InvalidMask("mask has no active cells".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Configuration(format!("lambda must be >= 0, got {lambda}")));
    }
    if let Some(init) = h_init {
        if init.shape() != y_hat.dim() || init.channels() != x.channels() {
            return Err(Error::InvalidGeometry("warm-start filter does not match the features".into()));
        }
    }

    let m = mask.as_f64();
    let x_hat = channel_spectra(x, fft);

    let mut state = AdmmState {
        channels: (0..x.channels())
            .into_par_iter()
            .map(|k| {
                let start = match h_init {
                    Some(init) => init.h_hat[k].clone(),
                    None => closed_form_channel(&x_hat[k], y_hat, lambda)?,
                };
                let h = fft.inverse_real(&start) * &m;
                let g_hat = fft.forward_real(h.view());
                let xi_hat = Spectrum::zeros(g_hat.dim());
                Ok(ChannelState { g_hat, h, xi_hat })
            })
            .collect::<Result<Vec<_>>>()?,
        mu: config.mu0,
    };

    let mut records = Vec::new();
    if trace {
        records.push(IterationRecord {
            iteration: 0,
            objective: augmented_objective(&state, &x_hat, y_hat, lambda, fft),
            residual: constraint_residual(&state, fft),
        });
    }

    // F(M ⊙ h) per channel, carried from one iteration's multiplier step to
    // the next iteration's ĝ-update.
    let mut h_hats: Vec<Spectrum> = state.channels.iter().map(|ch| ch.g_hat.clone()).collect();
    for iteration in 1..=config.iterations {
        let mu = state.mu;
        state
            .channels
            .par_iter_mut()
            .zip(h_hats.par_iter_mut())
            .zip(x_hat.par_iter())
            .map(|((ch, hh), x)| iterate_channel(ch, hh, x, y_hat, &m, lambda, mu, fft, iteration))
            .collect::<Result<Vec<_>>>()?;
        state.mu = (state.mu * config.beta).min(config.mu_max);
        if trace {
            records.push(IterationRecord {
                iteration,
                objective: augmented_objective(&state, &x_hat, y_hat, lambda, fft),
                residual: constraint_residual(&state, fft),
            });
        }
    }

    Ok(MaskedSolution {
        filter: FilterBank {
            h_hat: h_hats,
            y_hat: y_hat.clone(),
            lambda,
        },
        state,
        trace: records,
    })
}

#[allow(clippy::too_many_arguments)]
fn iterate_channel(
    ch: &mut ChannelState,
    h_hat: &mut Spectrum,
    x_hat: &Spectrum,
    y_hat: &Spectrum,
    mask: &Array2<f64>,
    lambda: f64,
    mu: f64,
    fft: &Fft2,
    iteration: usize,
) -> Result<()> {
    // ĝ = (x̂ ⊙ conj(ŷ) + μ ĥ − ξ̂) / (|x̂|² + μ)
    Zip::from(&mut ch.g_hat)
        .and(x_hat)
        .and(y_hat)
        .and(&*h_hat)
        .and(&ch.xi_hat)
        .for_each(|g, &x, &y, &hh, &xi| {
            *g = (x * y.conj() + hh * mu - xi) / (x.norm_sqr() + mu);
        });

    // h = M ⊙ Re F⁻¹(μ ĝ + ξ̂) / (λ + μ)
    let mut rhs = Spectrum::zeros(ch.g_hat.dim());
    Zip::from(&mut rhs)
        .and(&ch.g_hat)
        .and(&ch.xi_hat)
        .for_each(|r, &g, &xi| *r = g * mu + xi);
    fft.inverse(&mut rhs);
    let scale = 1.0 / (lambda + mu);
    Zip::from(&mut ch.h)
        .and(&rhs)
        .and(mask)
        .for_each(|h, r, &m| *h = if m > 0.0 { r.re * scale } else { 0.0 });

    // ξ̂ ← ξ̂ + μ (ĝ − F(M ⊙ h))
    *h_hat = fft.forward_real(ch.h.view());
    Zip::from(&mut ch.xi_hat)
        .and(&ch.g_hat)
        .and(&*h_hat)
        .for_each(|xi, &g, &hh| *xi += (g - hh) * mu);

    let finite = |v: &Complex64| v.re.is_finite() && v.im.is_finite();
    if !ch.h.iter().all(|v| v.is_finite()) || !ch.g_hat.iter().all(finite) || !ch.xi_hat.iter().all(finite) {
        return Err(Error::NumericalFailure {
            iteration,
            reason: "non-finite ADMM iterate".into(),
        });
    }
    Ok(())
}
