//! The fused noise-aware image quality score.
//!
//! Three complementary terms are combined into a single scalar:
//!
//! - a gradient term rewarding strong, uniformly distributed edge and
//!   texture information (log-mapped magnitudes aggregated over a grid of
//!   cells, mean-to-dispersion ratio),
//! - a global entropy term over the 256-bin intensity histogram,
//! - a noise level estimate from the absolute response of a 3×3 high-pass
//!   kernel over unsaturated homogeneous regions.
//!
//! The fusion is `f = α·l_gradient + (1−α)·l_entropy − β·σ_noise`, so noisy
//! frames are penalized even when they carry strong gradients.

use thiserror::Error;

use crate::imaging::{self, GradientField, Image};

/// The 3×3 noise estimation kernel. It annihilates constant and planar
/// patches, so its response on homogeneous regions is driven by noise alone.
pub const NOISE_KERNEL: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];

// Sum of squared kernel weights is 36, so the kernel response to unit-sigma
// Gaussian noise has standard deviation 6. Dividing by 6 makes the estimator
// report sigma in pixel-intensity units.
const KERNEL_RESPONSE_SIGMA: f64 = 6.0;

/// Tunable metric parameters. Defaults follow the reference operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    /// Activation threshold: gradient magnitudes below it map to zero.
    pub gamma: f64,
    /// Controls the shape of the log mapping.
    pub lambda: f64,
    /// Number of grid cells for the gradient statistics; a perfect square.
    pub n_cells: usize,
    /// Fraction of lowest-gradient pixels considered homogeneous.
    pub p: f64,
    /// Lower bound of unsaturated pixel values.
    pub tau_l: u8,
    /// Upper bound of unsaturated pixel values.
    pub tau_h: u8,
    /// Gradient term normalizer.
    pub k_g: f64,
    /// Entropy term normalizer (0.125 maps 8 bits onto [0, 1]).
    pub k_e: f64,
    /// Fusion weight between the gradient and entropy terms.
    pub alpha: f64,
    /// Weight of the noise penalty.
    pub beta: f64,
    /// Additive floor on the cell dispersion, capping the gradient score for
    /// perfectly uniform fields.
    pub s_floor: f64,
    /// Noise level substituted when the estimate is unavailable.
    pub sigma_max: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            gamma: 0.06,
            lambda: 1e3,
            n_cells: 100,
            p: 0.1,
            tau_l: 15,
            tau_h: 235,
            k_g: 2.0,
            k_e: 0.125,
            alpha: 0.4,
            beta: 0.4,
            s_floor: 1e-4,
            sigma_max: 25.0,
        }
    }
}

/// Configuration validation failure, naming the offending field.
#[derive(Debug, Error, PartialEq)]
#[error("invalid metric config: {field} {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

fn cfg_err(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        field,
        reason: reason.into(),
    }
}

impl MetricConfig {
    /// Checks all parameter invariants.
    // Negated comparisons here double as NaN rejection.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(cfg_err("gamma", "must be in [0, 1)"));
        }
        if !(self.lambda > 0.0) {
            return Err(cfg_err("lambda", "must be > 0"));
        }
        let side = (self.n_cells as f64).sqrt().round() as usize;
        if self.n_cells < 4 || side * side != self.n_cells {
            return Err(cfg_err("n_cells", "must be a perfect square >= 4"));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(cfg_err("p", "must be in (0, 1)"));
        }
        if self.tau_l >= self.tau_h {
            return Err(cfg_err("tau_l", "must be < tau_h"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(cfg_err("alpha", "must be in [0, 1]"));
        }
        if !(self.beta >= 0.0) {
            return Err(cfg_err("beta", "must be >= 0"));
        }
        if !(self.s_floor > 0.0) {
            return Err(cfg_err("s_floor", "must be > 0"));
        }
        if !(self.k_g > 0.0) {
            return Err(cfg_err("k_g", "must be > 0"));
        }
        if !(self.k_e > 0.0) {
            return Err(cfg_err("k_e", "must be > 0"));
        }
        if !(self.sigma_max >= 0.0) {
            return Err(cfg_err("sigma_max", "must be >= 0"));
        }
        Ok(())
    }

    /// Grid side length, `√n_cells`.
    pub fn grid_side(&self) -> usize {
        (self.n_cells as f64).sqrt().round() as usize
    }

    /// Applies a single `key=value` assignment. Keys match field names.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(field: &'static str, v: &str) -> Result<T, ConfigError> {
            v.parse()
                .map_err(|_| cfg_err(field, format!("cannot parse {v:?}")))
        }
        match key {
            "gamma" => self.gamma = num("gamma", value)?,
            "lambda" => self.lambda = num("lambda", value)?,
            "n_cells" => self.n_cells = num("n_cells", value)?,
            "p" => self.p = num("p", value)?,
            "tau_l" => self.tau_l = num("tau_l", value)?,
            "tau_h" => self.tau_h = num("tau_h", value)?,
            "k_g" => self.k_g = num("k_g", value)?,
            "k_e" => self.k_e = num("k_e", value)?,
            "alpha" => self.alpha = num("alpha", value)?,
            "beta" => self.beta = num("beta", value)?,
            "s_floor" => self.s_floor = num("s_floor", value)?,
            "sigma_max" => self.sigma_max = num("sigma_max", value)?,
            other => {
                return Err(ConfigError {
                    field: "key",
                    reason: format!("unknown key {other:?}"),
                })
            }
        }
        Ok(())
    }

    /// Parses the flat `key=value` text form (one assignment per line,
    /// `#` comments and blank lines allowed).
    pub fn from_key_values(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                field: "line",
                reason: format!("expected key=value, got {line:?}"),
            })?;
            cfg.set_key(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes to the flat `key=value` text form.
    pub fn to_key_values(&self) -> String {
        format!(
            "gamma={}\nlambda={}\nn_cells={}\np={}\ntau_l={}\ntau_h={}\nk_g={}\nk_e={}\nalpha={}\nbeta={}\ns_floor={}\nsigma_max={}\n",
            self.gamma,
            self.lambda,
            self.n_cells,
            self.p,
            self.tau_l,
            self.tau_h,
            self.k_g,
            self.k_e,
            self.alpha,
            self.beta,
            self.s_floor,
            self.sigma_max,
        )
    }
}

/// Outcome of the noise level estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseEstimate {
    /// Estimated noise standard deviation in 8-bit intensity units.
    Estimated(f64),
    /// No unsaturated homogeneous pixels were available (for example a fully
    /// saturated frame); callers substitute a configured worst case.
    Unestimable,
}

impl NoiseEstimate {
    pub fn is_estimable(&self) -> bool {
        matches!(self, NoiseEstimate::Estimated(_))
    }

    /// The estimate, or `fallback` when unestimable.
    pub fn value_or(&self, fallback: f64) -> f64 {
        match *self {
            NoiseEstimate::Estimated(v) => v,
            NoiseEstimate::Unestimable => fallback,
        }
    }
}

/// Per-term metric values plus the fused score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityBreakdown {
    pub l_gradient: f64,
    pub l_entropy: f64,
    /// Noise sigma actually used in the fusion (the substitute when the
    /// estimate was unavailable).
    pub sigma_noise: f64,
    pub fused: f64,
    /// True when `sigma_noise` is the configured substitute rather than an
    /// estimate.
    pub noise_unestimable: bool,
}

/// Errors from metric evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("image {width}x{height} is smaller than the {side}x{side} statistics grid")]
    GridExceedsImage {
        width: usize,
        height: usize,
        side: usize,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Maps a gradient magnitude to the amount of gradient information in
/// `[0, 1]`: `log(λ(g−γ)+1)/N_g` above the activation threshold, zero below,
/// with `N_g = log(λ(1−γ)+1)` so the maximum is exactly 1.
pub fn map_gradient(g: f64, cfg: &MetricConfig) -> f64 {
    debug_assert!((0.0..=1.0).contains(&g));
    if g < cfg.gamma {
        return 0.0;
    }
    let n_g = (cfg.lambda * (1.0 - cfg.gamma) + 1.0).ln();
    (cfg.lambda * (g - cfg.gamma) + 1.0).ln() / n_g
}

/// Gradient term: partitions the mapped-gradient image into
/// `√n_cells × √n_cells` cells, sums the information per cell, and returns
/// `k_g · mean / (stddev + s_floor)` over the cell sums. Large values mean
/// strong and uniformly distributed gradient information.
pub fn gradient_score(field: &GradientField, cfg: &MetricConfig) -> Result<f64, MetricError> {
    let side = cfg.grid_side();
    let (w, h) = (field.width(), field.height());
    if w < side || h < side {
        return Err(MetricError::GridExceedsImage {
            width: w,
            height: h,
            side,
        });
    }
    // Cell boundaries at round(k*w/side) tile the image exactly.
    let bound =
        |k: usize, extent: usize| ((k as f64 * extent as f64) / side as f64).round() as usize;
    let mut sums = vec![0.0f64; side * side];
    for cy in 0..side {
        let (y0, y1) = (bound(cy, h), bound(cy + 1, h));
        for cx in 0..side {
            let (x0, x1) = (bound(cx, w), bound(cx + 1, w));
            let mut acc = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    acc += map_gradient(field.value(x, y), cfg);
                }
            }
            sums[cy * side + cx] = acc;
        }
    }
    let n = sums.len() as f64;
    let mean = sums.iter().sum::<f64>() / n;
    // Population standard deviation: the cell count is fixed, not sampled.
    let var = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    Ok(cfg.k_g * mean / (var.sqrt() + cfg.s_floor))
}

/// Entropy term: `k_e` times the Shannon entropy (bits) of the 256-bin
/// intensity histogram. Empty bins contribute nothing.
pub fn entropy_score(img: &Image, cfg: &MetricConfig) -> f64 {
    assert_eq!(
        img.channels(),
        1,
        "entropy_score needs a single-channel image"
    );
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.data().len() as f64;
    let entropy: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    cfg.k_e * entropy
}

/// Noise term: estimated noise standard deviation in intensity units.
///
/// Per channel, the homogeneous mask keeps the fraction `p` of pixels with the
/// lowest gradient magnitude, the unsaturated mask keeps values in
/// `[tau_l, tau_h]`, and the estimate is the mean absolute response of
/// [`NOISE_KERNEL`] over the masked interior, scaled by `√(π/2)/6`. Channel
/// estimates of a color image are averaged. Returns
/// [`NoiseEstimate::Unestimable`] when no channel has a masked pixel.
pub fn noise_sigma(img: &Image, cfg: &MetricConfig) -> NoiseEstimate {
    let mut total = 0.0;
    let mut channels_estimated = 0usize;
    for c in 0..img.channels() {
        let chan = if img.channels() == 1 {
            img.clone()
        } else {
            img.channel(c)
        };
        if let Some(sigma) = channel_noise_sigma(&chan, cfg) {
            total += sigma;
            channels_estimated += 1;
        }
    }
    if channels_estimated == 0 {
        NoiseEstimate::Unestimable
    } else {
        NoiseEstimate::Estimated(total / channels_estimated as f64)
    }
}

// The estimator works on integer quantities throughout: the squared raw
// gradient (2gx)² + (2gy)² is a bounded integer, so the p-quantile comes
// from a counting histogram instead of a selection pass, and the kernel
// response is exact integer arithmetic. Results are bit-identical to the
// straightforward float pipeline (all intermediates are exactly
// representable) at a fraction of the cost.
fn channel_noise_sigma(chan: &Image, cfg: &MetricConfig) -> Option<f64> {
    let (w, h) = (chan.width(), chan.height());
    let data = chan.data();
    let n = w * h;

    // Squared raw central differences, replicate borders. Monotone in the
    // normalized gradient magnitude, so quantile thresholding on it selects
    // exactly the same homogeneous mask.
    let mut sq = vec![0u32; n];
    for y in 0..h {
        let row = &data[y * w..y * w + w];
        let up = &data[y.saturating_sub(1) * w..][..w];
        let down = &data[(y + 1).min(h - 1) * w..][..w];
        let out = &mut sq[y * w..y * w + w];
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let dx = row[xr] as i32 - row[xl] as i32;
            let dy = down[x] as i32 - up[x] as i32;
            out[x] = (dx * dx + dy * dy) as u32;
        }
    }

    // Nearest-rank p-quantile over the whole channel.
    const MAX_SQ: usize = 2 * 255 * 255;
    let mut hist = vec![0u32; MAX_SQ + 1];
    for &s in &sq {
        hist[s as usize] += 1;
    }
    let rank = ((cfg.p * n as f64).ceil() as usize).clamp(1, n);
    let mut cum = 0usize;
    let mut threshold = MAX_SQ as u32;
    for (value, &count) in hist.iter().enumerate() {
        cum += count as usize;
        if cum >= rank {
            threshold = value as u32;
            break;
        }
    }

    // Mean |kernel response| over unsaturated homogeneous interior pixels.
    // The inlined stencil is NOISE_KERNEL.
    let mut acc: u64 = 0;
    let mut count = 0usize;
    for y in 1..h - 1 {
        let up = &data[(y - 1) * w..(y - 1) * w + w];
        let row = &data[y * w..y * w + w];
        let down = &data[(y + 1) * w..(y + 1) * w + w];
        let sq_row = &sq[y * w..y * w + w];
        for x in 1..w - 1 {
            let v = row[x];
            if v < cfg.tau_l || v > cfg.tau_h || sq_row[x] > threshold {
                continue;
            }
            let cross = row[x - 1] as i32 + row[x + 1] as i32 + up[x] as i32 + down[x] as i32;
            let corners =
                up[x - 1] as i32 + up[x + 1] as i32 + down[x - 1] as i32 + down[x + 1] as i32;
            let response = 4 * row[x] as i32 - 2 * cross + corners;
            acc += response.unsigned_abs() as u64;
            count += 1;
        }
    }
    if count == 0 {
        return None;
    }
    let mean_abs = acc as f64 / count as f64;
    Some((std::f64::consts::PI / 2.0).sqrt() * mean_abs / KERNEL_RESPONSE_SIGMA)
}

/// Evaluates all three terms and fuses them:
/// `f = α·l_gradient + (1−α)·l_entropy − β·σ_noise`.
///
/// Gradient and entropy are computed on the grayscale image; the noise level
/// is estimated per channel of the original image. An unestimable noise level
/// is replaced by `sigma_max` and flagged in the breakdown.
pub fn evaluate(img: &Image, cfg: &MetricConfig) -> Result<QualityBreakdown, MetricError> {
    let gray = imaging::to_grayscale(img);
    let l_gradient = gradient_score(&imaging::gradient_magnitude(&gray), cfg)?;
    let l_entropy = entropy_score(&gray, cfg);
    let estimate = noise_sigma(img, cfg);
    let sigma_noise = estimate.value_or(cfg.sigma_max);
    let fused = cfg.alpha * l_gradient + (1.0 - cfg.alpha) * l_entropy - cfg.beta * sigma_noise;
    Ok(QualityBreakdown {
        l_gradient,
        l_entropy,
        sigma_noise,
        fused,
        noise_unestimable: !estimate.is_estimable(),
    })
}
