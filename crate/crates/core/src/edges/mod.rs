//! Grayscale frame to smoothed edge image.
//!
//! The pipeline runs denoising, local contrast equalization, sharpening,
//! edge-preserving filtering, Canny detection and finally a smoothing step
//! that spreads each edgel over its neighborhood.

mod canny;
mod filters;
mod io;
mod smoothing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use canny::{canny, EdgeMap};
pub use filters::{bilateral, clahe, denoise_nlm, gaussian_blur, sharpen};
pub use io::{read_gray, read_pgm, write_edge_pgm, write_gray_pgm, write_pgm_u8};
pub use smoothing::{smooth_edges_gaussian, smooth_edges_iedt};

/// 8-bit-range intensities stored as reals.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities in `[0, 255]`.
    pub pixels: Vec<f64>,
    /// Frame timestamp (s).
    pub t: f64,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, t: f64) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
            t,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64, t: f64) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
            t,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel with replicated borders.
    pub(crate) fn at(&self, x: i64, y: i64) -> f64 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.pixels[y * self.width + x]
    }

    pub(crate) fn with_pixels(&self, pixels: Vec<f64>) -> Self {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
            t: self.t,
        }
    }
}

/// Smoothed edge image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub t: f64,
}

/// Final smoothing applied to the binary Canny map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Smoothing {
    /// Gaussian blur with an odd kernel size.
    Gaussian { k: usize },
    /// `exp(-d / lambda)` of the distance to the nearest edgel.
    Iedt { lambda: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::Gaussian { k: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub canny_low: f64,
    pub canny_high: f64,
    pub smoothing: Smoothing,
    /// Relative clip limit, in multiples of the uniform bin height.
    pub clahe_clip: f64,
    /// Tiles per axis.
    pub clahe_tiles: usize,
    /// Filtering parameter `h` of non-local means; 0 disables it.
    pub nlm_strength: f64,
    pub nlm_patch_radius: usize,
    pub nlm_search_radius: usize,
    pub sharpen_amount: f64,
    pub sharpen_sigma: f64,
    pub bilateral_spatial_sigma: f64,
    pub bilateral_range_sigma: f64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            canny_low: 100.0,
            canny_high: 200.0,
            smoothing: Smoothing::default(),
            clahe_clip: 2.0,
            clahe_tiles: 8,
            nlm_strength: 10.0,
            nlm_patch_radius: 1,
            nlm_search_radius: 5,
            sharpen_amount: 0.5,
            sharpen_sigma: 1.0,
            bilateral_spatial_sigma: 2.0,
            bilateral_range_sigma: 25.0,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.canny_low < self.canny_high) {
            return Err(Error::invalid(format!(
                "canny thresholds must satisfy low < high, got ({}, {})",
                self.canny_low, self.canny_high
            )));
        }
        match self.smoothing {
            Smoothing::Gaussian { k } if k == 0 || k % 2 == 0 => {
                return Err(Error::invalid(format!("gaussian kernel size must be odd, got {k}")))
            }
            Smoothing::Iedt { lambda } if !(lambda > 0.0) => {
                return Err(Error::invalid(format!("iedt lambda must be > 0, got {lambda}")))
            }
            _ => {}
        }
        if self.clahe_tiles == 0 || !(self.clahe_clip > 0.0) {
            return Err(Error::invalid("clahe needs tiles >= 1 and clip > 0"));
        }
        if self.nlm_strength < 0.0 || self.sharpen_amount < 0.0 || !(self.sharpen_sigma > 0.0) {
            return Err(Error::invalid("denoise strength and sharpen amount must be >= 0"));
        }
        if !(self.bilateral_spatial_sigma > 0.0 && self.bilateral_range_sigma > 0.0) {
            return Err(Error::invalid("bilateral sigmas must be > 0"));
        }
        Ok(())
    }
}

/// Runs the full pipeline: denoise, CLAHE, sharpen, bilateral, Canny, smoothing.
pub fn extract_edges(img: &GrayImage, cfg: &EdgeConfig) -> Result<EdgeImage> {
    cfg.validate()?;
    let den = denoise_nlm(img, cfg.nlm_strength, cfg.nlm_patch_radius, cfg.nlm_search_radius);
    let eq = clahe(&den, cfg.clahe_clip, cfg.clahe_tiles)?;
    let sharp = sharpen(&eq, cfg.sharpen_amount, cfg.sharpen_sigma)?;
    let filtered = bilateral(&sharp, cfg.bilateral_spatial_sigma, cfg.bilateral_range_sigma)?;
    let map = canny(&filtered, cfg.canny_low, cfg.canny_high)?;
    match cfg.smoothing {
        Smoothing::Gaussian { k } => smooth_edges_gaussian(&map, k, img.t),
        Smoothing::Iedt { lambda } => smooth_edges_iedt(&map, lambda, img.t),
    }
}
