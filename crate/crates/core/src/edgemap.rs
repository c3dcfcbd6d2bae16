//! Edge-stopping function from the Gaussian-smoothed image gradient.
//!
//! The gradient of the mollified image is computed as the convolution of the
//! image with the gradient of the Gaussian, separably: derivative kernel along
//! one axis, smoothing kernel along the other. Samples beyond the boundary are
//! reflected about the boundary node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierParams {
    /// Gaussian standard deviation in domain units.
    pub sigma: f64,
    /// Kernel cut-off in multiples of `sigma`.
    pub truncation_radius: f64,
}

impl MollifierParams {
    pub const DEFAULT_TRUNCATION: f64 = 4.0;

    pub fn new(sigma: f64) -> Self {
        Self { sigma, truncation_radius: Self::DEFAULT_TRUNCATION }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Param(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.truncation_radius >= 2.0) {
            return Err(Error::Param(format!(
                "truncation radius must be at least 2, got {}",
                self.truncation_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeStopForm {
    /// `1 / (1 + lambda s^2)`
    Rational,
    /// `1 / sqrt(1 + lambda s^2)`
    #[default]
    InverseSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeStopParams {
    pub lambda: f64,
    pub form: EdgeStopForm,
}

impl Default for EdgeStopParams {
    fn default() -> Self {
        Self { lambda: 100.0, form: EdgeStopForm::InverseSqrt }
    }
}

impl EdgeStopParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Param(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Edge detector `g(s)`: 1 at `s = 0`, strictly decreasing towards 0.
pub fn edge_stop(s: f64, p: &EdgeStopParams) -> f64 {
    let q = 1.0 + p.lambda * s * s;
    match p.form {
        EdgeStopForm::Rational => 1.0 / q,
        EdgeStopForm::InverseSqrt => 1.0 / q.sqrt(),
    }
}

/// Node values of `g0` and their two-node averages on the finite-volume edges.
#[derive(Debug, Clone)]
pub struct EdgeMap {
    g0: GridField,
    /// Edge between `(i, j)` and `(i+1, j)`, indexed `j * N1 + i`.
    horizontal: Vec<f64>,
    /// Edge between `(i, j)` and `(i, j+1)`, indexed `j * (N1+1) + i`.
    vertical: Vec<f64>,
}

impl EdgeMap {
    pub fn from_node_values(g0: GridField) -> Result<Self> {
        if let Some(k) = g0.values().iter().position(|&g| !(g > 0.0 && g <= 1.0)) {
            return Err(Error::Param(format!("edge-stop value out of (0, 1] at flat index {k}")));
        }
        let spec = *g0.spec();
        let (n1, n2) = (spec.n1(), spec.n2());
        let mut horizontal = Vec::with_capacity(n1 * (n2 + 1));
        for j in 0..=n2 {
            for i in 0..n1 {
                horizontal.push(0.5 * (g0.at(i, j) + g0.at(i + 1, j)));
            }
        }
        let mut vertical = Vec::with_capacity((n1 + 1) * n2);
        for j in 0..n2 {
            for i in 0..=n1 {
                vertical.push(0.5 * (g0.at(i, j) + g0.at(i, j + 1)));
            }
        }
        Ok(Self { g0, horizontal, vertical })
    }

    /// Edge map with `g0 = 1` everywhere: pure curvature flow.
    pub fn uniform(spec: GridSpec) -> Self {
        Self::from_node_values(GridField::constant(spec, 1.0)).expect("constant 1 is in range")
    }

    pub fn spec(&self) -> &GridSpec {
        self.g0.spec()
    }

    pub fn g0(&self) -> &GridField {
        &self.g0
    }

    /// `g0` on the edge from `(i, j)` to `(i+1, j)`.
    #[inline]
    pub fn east(&self, i: usize, j: usize) -> f64 {
        self.horizontal[j * self.spec().n1() + i]
    }

    /// `g0` on the edge from `(i, j)` to `(i, j+1)`.
    #[inline]
    pub fn north(&self, i: usize, j: usize) -> f64 {
        self.vertical[j * self.spec().width() + i]
    }

    pub fn horizontal_edges(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn vertical_edges(&self) -> &[f64] {
        &self.vertical
    }
}

/// Sampled 1-D kernels for a given step.
struct Kernels {
    radius: usize,
    smooth: Vec<f64>,
    /// Convolution weights for the derivative: `out[n] = sum_k deriv[k] * f[n - k]`.
    deriv: Vec<f64>,
}

fn kernels(sigma: f64, truncation: f64, h: f64) -> Kernels {
    let radius = ((truncation * sigma / h).ceil() as usize).max(1);
    let offsets = || (-(radius as isize)..=radius as isize).map(|k| k as f64 * h);
    let gauss: Vec<f64> = offsets().map(|x| (-x * x / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = gauss.iter().sum();
    let smooth = gauss.iter().map(|g| g / total).collect();

    // derivative of the Gaussian, scaled so a unit-slope ramp has derivative 1
    let raw: Vec<f64> = offsets().zip(&gauss).map(|(x, g)| -x * g).collect();
    let moment: f64 = offsets().zip(&raw).map(|(x, d)| x * d).sum();
    let deriv = if moment.abs() > f64::MIN_POSITIVE {
        raw.iter().map(|d| -d / moment).collect()
    } else {
        // sigma far below the mesh step: plain central difference
        let mut d = vec![0.0; 2 * radius + 1];
        d[radius - 1] = 0.5 / h;
        d[radius + 1] = -0.5 / h;
        d
    };
    Kernels { radius, smooth, deriv }
}

/// Whole-sample symmetric reflection of `k` into `0..n`.
#[inline]
fn reflect(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = k.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Convolves along `x1` (`axis0 = true`) or `x2` with `weights` centred at `radius`.
fn convolve_axis(data: &[f64], w: usize, h: usize, weights: &[f64], radius: usize, along_x: bool) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(j, row)| {
        for (i, slot) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &wt) in weights.iter().enumerate() {
                let k = t as isize - radius as isize;
                // out[n] = sum_k wt[k] * f[n - k]
                let (si, sj) = if along_x {
                    (reflect(i as isize - k, w), j)
                } else {
                    (i, reflect(j as isize - k, h))
                };
                acc += wt * data[sj * w + si];
            }
            *slot = acc;
        }
    });
    out
}

/// Components of the gradient of the Gaussian-smoothed image at every node.
pub fn smoothed_gradient(i0: &GridField, m: &MollifierParams) -> Result<(GridField, GridField)> {
    m.validate()?;
    let spec = *i0.spec();
    for h in [spec.h1(), spec.h2()] {
        if m.sigma < 0.1 * h {
            log::warn!(
                "sigma {} is below a tenth of the mesh step {h}; smoothing degenerates",
                m.sigma
            );
        }
    }
    let (w, h) = (spec.width(), spec.height());
    let kx = kernels(m.sigma, m.truncation_radius, spec.h1());
    let ky = kernels(m.sigma, m.truncation_radius, spec.h2());

    let dx = convolve_axis(i0.values(), w, h, &kx.deriv, kx.radius, true);
    let gx = convolve_axis(&dx, w, h, &ky.smooth, ky.radius, false);
    let sx = convolve_axis(i0.values(), w, h, &kx.smooth, kx.radius, true);
    let gy = convolve_axis(&sx, w, h, &ky.deriv, ky.radius, false);
    Ok((GridField::new(spec, gx)?, GridField::new(spec, gy)?))
}

pub fn build_edge_map(i0: &GridField, m: &MollifierParams, p: &EdgeStopParams) -> Result<EdgeMap> {
    p.validate()?;
    let (gx, gy) = smoothed_gradient(i0, m)?;
    let g0: Vec<f64> = gx
        .values()
        .iter()
        .zip(gy.values())
        .map(|(a, b)| edge_stop((a * a + b * b).sqrt(), p))
        .collect();
    EdgeMap::from_node_values(GridField::new(*i0.spec(), g0)?)
}
