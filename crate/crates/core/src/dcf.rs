//! Unmasked correlation filter machinery: desired output, closed-form
//! Fourier-domain training, response maps and exponential model averaging.
//!
//! Filters are stored as the DFT of a real spatial filter `h`. The response to
//! features `x` is the circular cross-correlation `r[τ] = Σ_n h[n] x[n + τ]`,
//! computed as `IFFT(Σ_c w_c conj(ĥ_c) ⊙ x̂_c)`.

use ndarray::{Array2, Axis, Zip};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::features::FeatureStack;
use crate::fft::{Fft2, Spectrum};
use crate::{Error, Result};

/// Per-channel Fourier-domain filters plus the desired output they were
/// trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub h_hat: Vec<Spectrum>,
    pub y_hat: Spectrum,
    pub lambda: f64,
}

impl FilterBank {
    pub fn channels(&self) -> usize {
        self.h_hat.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.y_hat.dim()
    }

    /// Spatial filters, one per channel.
    pub fn spatial(&self, fft: &Fft2) -> Vec<Array2<f64>> {
        self.h_hat.iter().map(|h| fft.inverse_real(h)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.h_hat.iter().map(crate::fft::squared_norm).sum::<f64>().sqrt()
    }
}

/// Response peak. `row`/`col` carry the sub-cell refined location in
/// `[0, rows)` / `[0, cols)` with circular wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: f64,
    pub col: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub values: Array2<f64>,
    pub peak: Peak,
}

impl ResponseMap {
    pub fn from_values(values: Array2<f64>) -> Self {
        let peak = locate_peak(&values);
        Self { values, peak }
    }

    /// Peak position as a signed displacement `(dy, dx)` in cells.
    pub fn displacement(&self) -> (f64, f64) {
        let (rows, cols) = self.values.dim();
        (wrap_signed(self.peak.row, rows), wrap_signed(self.peak.col, cols))
    }
}

fn wrap_signed(v: f64, n: usize) -> f64 {
    let n = n as f64;
    if v > n / 2.0 {
        v - n
    } else {
        v
    }
}

/// Integer argmax refined by independent 1D quadratic fits along rows and
/// columns.
fn locate_peak(values: &Array2<f64>) -> Peak {
    let (rows, cols) = values.dim();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for ((r, c), &v) in values.indexed_iter() {
        if v > best.2 {
            best = (r, c, v);
        }
    }
    let (r, c, v0) = best;
    let fit = |vm: f64, vp: f64| {
        let denom = vm - 2.0 * v0 + vp;
        if denom < 0.0 {
            (0.5 * (vm - vp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let dr = if rows >= 3 {
        fit(values[[(r + rows - 1) % rows, c]], values[[(r + 1) % rows, c]])
    } else {
        0.0
    };
    let dc = if cols >= 3 {
        fit(values[[r, (c + cols - 1) % cols]], values[[r, (c + 1) % cols]])
    } else {
        0.0
    };
    Peak {
        row: (r as f64 + dr).rem_euclid(rows as f64),
        col: (c as f64 + dc).rem_euclid(cols as f64),
        value: v0,
    }
}

/// Cell-scale spread of the desired output for a `rows x cols` grid.
pub fn desired_output_sigma(rows: usize, cols: usize) -> f64 {
    ((rows * cols) as f64).sqrt() / 16.0
}

/// Spatial periodic Gaussian with unit peak at `(0, 0)`.
pub fn desired_output_spatial(shape: (usize, usize), sigma: f64) -> Result<Array2<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::Configuration(format!("output sigma must be positive, got {sigma}")));
    }
    let (rows, cols) = shape;
    let denom = 2.0 * sigma * sigma;
    Ok(Array2::from_shape_fn(shape, |(r, c)| {
        let dr = r.min(rows - r) as f64;
        let dc = c.min(cols - c) as f64;
        (-(dr * dr + dc * dc) / denom).exp()
    }))
}

pub fn make_desired_output(shape: (usize, usize), sigma: f64, fft: &Fft2) -> Result<Spectrum> {
    let y = desired_output_spatial(shape, sigma)?;
    Ok(fft.forward_real(y.view()))
}

pub(crate) fn check_shape(x: &FeatureStack, shape: (usize, usize)) -> Result<()> {
    if x.shape() != shape {
        return Err(Error::InvalidGeometry(format!(
            "feature grid {:?} does not match filter grid {:?}",
            x.shape(),
            shape
        )));
    }
    Ok(())
}

pub(crate) fn channel_spectra(x: &FeatureStack, fft: &Fft2) -> Vec<Spectrum> {
    (0..x.channels())
        .into_par_iter()
        .map(|k| fft.forward_real(x.data.index_axis(Axis(0), k)))
        .collect()
}

/// Closed-form ridge solution of a single channel:
/// `ĥ = x̂ ⊙ conj(ŷ) / (|x̂|² + λ)`.
pub(crate) fn closed_form_channel(x_hat: &Spectrum, y_hat: &Spectrum, lambda: f64) -> Result<Spectrum> {
    let mut out = Spectrum::zeros(x_hat.dim());
    let mut singular = false;
    Zip::from(&mut out).and(x_hat).and(y_hat).for_each(|o, &x, &y| {
        let denom = x.norm_sqr() + lambda;
        if denom == 0.0 {
            singular = true;
            *o = Complex64::new(0.0, 0.0);
        } else {
            *o = x * y.conj() / denom;
        }
    });
    if singular {
        return Err(Error::NumericalFailure {
            iteration: 0,
            reason: "zero spectral energy with lambda = 0".into(),
        });
    }
    Ok(out)
}

/// Trains one independent filter per channel on a single sample.
pub fn train_closed_form(x: &FeatureStack, y_hat: &Spectrum, lambda: f64, fft: &Fft2) -> Result<FilterBank> {
    check_shape(x, y_hat.dim())?;
    if !(lambda >= 0.0) {
        return Err(Error::Configuration(format!("lambda must be >= 0, got {lambda}")));
    }
    let h_hat = channel_spectra(x, fft)
        .par_iter()
        .map(|x_hat| closed_form_channel(x_hat, y_hat, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(FilterBank {
        h_hat,
        y_hat: y_hat.clone(),
        lambda,
    })
}

pub fn uniform_weights(channels: usize) -> Vec<f64> {
    vec![1.0 / channels as f64; channels]
}

pub fn respond(filter: &FilterBank, x: &FeatureStack, weights: &[f64], fft: &Fft2) -> Result<ResponseMap> {
    check_shape(x, filter.shape())?;
    if x.channels() != filter.channels() {
        return Err(Error::InvalidGeometry(format!(
            "{} feature channels for {} filters",
            x.channels(),
            filter.channels()
        )));
    }
    respond_spectra(filter, &channel_spectra(x, fft), weights, fft)
}

pub(crate) fn respond_spectra(
    filter: &FilterBank,
    x_hat: &[Spectrum],
    weights: &[f64],
    fft: &Fft2,
) -> Result<ResponseMap> {
    if weights.len() != filter.channels() {
        return Err(Error::Configuration(format!(
            "{} channel weights for {} channels",
            weights.len(),
            filter.channels()
        )));
    }
    let mut acc = Spectrum::zeros(filter.shape());
    for ((h, x), &w) in filter.h_hat.iter().zip(x_hat).zip(weights) {
        Zip::from(&mut acc).and(h).and(x).for_each(|a, h, x| *a += h.conj() * x * w);
    }
    Ok(ResponseMap::from_values(fft.inverse_real(&acc)))
}

/// Exponential model averaging `ψ·new + (1 − ψ)·old`.
pub fn update_model(old: &FilterBank, new: &FilterBank, psi: f64) -> Result<FilterBank> {
    if old.shape() != new.shape() || old.channels() != new.channels() {
        return Err(Error::InvalidGeometry("filter banks differ in shape".into()));
    }
    if !(0.0..=1.0).contains(&psi) {
        return Err(Error::Configuration(format!("update rate {psi} outside [0, 1]")));
    }
    if psi == 1.0 {
        return Ok(new.clone());
    }
    if psi == 0.0 {
        return Ok(old.clone());
    }
    let h_hat = old
        .h_hat
        .iter()
        .zip(&new.h_hat)
        .map(|(o, n)| {
            let mut out = o.clone();
            Zip::from(&mut out).and(n).for_each(|o, &n| *o = n * psi + *o * (1.0 - psi));
            out
        })
        .collect();
    Ok(FilterBank {
        h_hat,
        y_hat: new.y_hat.clone(),
        lambda: new.lambda,
    })
}
