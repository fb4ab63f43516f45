//! Dense rotation estimation from a radial-integration descriptor.
//!
//! Each descriptor bin integrates intensity along one half-line from the frame
//! center out to `r_max`. Between two frames of a rotating sensor the
//! descriptor is circularly shifted, and the shift is recovered as the argmax
//! of the circular cross-correlation.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::frame::RadarFrame;
use crate::geometry::wrap_angle;

pub const DEFAULT_BINS: usize = 360;
pub const MIN_BINS: usize = 8;

/// Periodic radial-integration signature, one value per azimuth bin.
#[derive(Debug, Clone, PartialEq)]
pub struct LodeStarDescriptor {
    values: Vec<f64>,
}

impl LodeStarDescriptor {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_BINS {
            return Err(Error::InvalidParameter(format!(
                "descriptor needs at least {MIN_BINS} bins, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "descriptor values must be finite and non-negative".into(),
            ));
        }
        Ok(LodeStarDescriptor { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn bin_width(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    /// Value at a possibly negative or out-of-range bin index.
    pub fn at(&self, k: i64) -> f64 {
        self.values[k.rem_euclid(self.values.len() as i64) as usize]
    }

    /// Content moved toward increasing azimuth by `s` bins: `out[k] = self[k - s]`.
    pub fn shifted(&self, s: i64) -> Self {
        let n = self.values.len() as i64;
        LodeStarDescriptor {
            values: (0..n).map(|k| self.at(k - s)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        LodeStarDescriptor {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Radial line integral of bilinearly sampled intensity for each of `bins` azimuths.
///
/// Samples are taken every pixel from the center out to `r_max` inclusive, so
/// the image corners beyond `r_max` never contribute. Each bin averages
/// several rays spread across its width, at most half a pixel apart at
/// `r_max`; a single ray per bin would skip pixels at long range.
pub fn compute_descriptor(frame: &RadarFrame, bins: usize) -> Result<LodeStarDescriptor> {
    if bins < MIN_BINS {
        return Err(Error::InvalidParameter(format!(
            "descriptor needs at least {MIN_BINS} bins, got {bins}"
        )));
    }
    let c = frame.center() as f64;
    let steps = frame.center();
    let bin_width = TAU / bins as f64;
    let rays = ((TAU * c) / (0.5 * bins as f64)).ceil().max(1.0) as usize;
    let values = (0..bins)
        .map(|k| {
            let sum: f64 = (0..rays)
                .map(|j| {
                    let offset = ((j as f64 + 0.5) / rays as f64 - 0.5) * bin_width;
                    let (s, co) = (k as f64 * bin_width + offset).sin_cos();
                    (0..=steps)
                        .map(|i| {
                            let r = i as f64;
                            frame.sample_bilinear(c - r * s, c + r * co)
                        })
                        .sum::<f64>()
                })
                .sum();
            sum / rays as f64
        })
        .collect();
    Ok(LodeStarDescriptor { values })
}

/// `out[s] = Σ_k a[(k + s) mod A] · b[k]`, computed through the FFT.
pub fn circular_correlate(a: &LodeStarDescriptor, b: &LodeStarDescriptor) -> Result<Vec<f64>> {
    if a.bins() != b.bins() {
        return Err(Error::InvalidParameter(format!(
            "descriptor bin counts differ: {} vs {}",
            a.bins(),
            b.bins()
        )));
    }
    let n = a.bins();
    let mut planner = FftPlanner::<f64>::new();
    let forward: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut fa: Vec<Complex<f64>> = a.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut fb: Vec<Complex<f64>> = b.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut fa);
    forward.process(&mut fb);
    let mut spectrum: Vec<Complex<f64>> = fa
        .iter()
        .zip(&fb)
        .map(|(x, y)| x * y.conj())
        .collect();
    inverse.process(&mut spectrum);
    let scale = 1.0 / n as f64;
    Ok(spectrum.iter().map(|z| z.re * scale).collect())
}

/// Whether to refine the discrete correlation peak with a parabolic fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakRefinement {
    /// Bin-level argmax only.
    Off,
    #[default]
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationEstimate {
    /// Counter-clockwise sensor rotation from the previous to the current frame, radians.
    pub theta_l: f64,
    pub correlation_peak: f64,
    /// Mean-removed peak over the highest mean-removed local maximum not
    /// adjacent to it; 1 means no confidence.
    pub peak_ratio: f64,
    /// Discrete argmax shift in bins.
    pub peak_shift: usize,
}

impl RotationEstimate {
    fn degenerate() -> Self {
        RotationEstimate {
            theta_l: 0.0,
            correlation_peak: 0.0,
            peak_ratio: 1.0,
            peak_shift: 0,
        }
    }
}

/// Rotation of the current frame relative to the previous one.
///
/// The current descriptor is the previous one shifted toward increasing
/// azimuth by the sensor's counter-clockwise rotation, so the argmax of
/// `circular_correlate(curr, prev)` is that rotation in bins.
pub fn estimate_rotation(
    prev: &LodeStarDescriptor,
    curr: &LodeStarDescriptor,
    refinement: PeakRefinement,
) -> Result<RotationEstimate> {
    if prev.bins() != curr.bins() {
        return Err(Error::InvalidParameter(format!(
            "descriptor bin counts differ: {} vs {}",
            prev.bins(),
            curr.bins()
        )));
    }
    if prev.is_zero() || curr.is_zero() {
        return Ok(RotationEstimate::degenerate());
    }
    let corr = circular_correlate(curr, prev)?;
    let n = corr.len();

    // lowest index wins ties
    let mut best = 0;
    for (s, &v) in corr.iter().enumerate() {
        if v > corr[best] {
            best = s;
        }
    }
    let peak = corr[best];

    let offset = match refinement {
        PeakRefinement::Off => 0.0,
        PeakRefinement::Parabolic => {
            let ym = corr[(best + n - 1) % n];
            let yp = corr[(best + 1) % n];
            let denom = ym - 2.0 * peak + yp;
            if denom < 0.0 {
                (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        }
    };

    // Confidence is judged on the mean-removed correlation: subtracting the
    // constant DC product leaves the argmax unchanged but stops a bright,
    // feature-poor image from looking like a sharp match.
    let dc = prev.values().iter().sum::<f64>() * curr.values().iter().sum::<f64>() / n as f64;
    let centered = |s: usize| corr[s] - dc;

    let circular_distance = |s: usize| {
        let d = s.abs_diff(best);
        d.min(n - d)
    };
    let secondary = (0..n)
        .filter(|&s| circular_distance(s) > 1)
        .filter(|&s| corr[s] >= corr[(s + n - 1) % n] && corr[s] >= corr[(s + 1) % n])
        .map(centered)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
        .or_else(|| {
            (0..n)
                .filter(|&s| circular_distance(s) > 1)
                .map(centered)
                .reduce(f64::max)
        });
    let centered_peak = centered(best);
    let peak_ratio = match secondary {
        Some(_) if centered_peak <= 0.0 => 1.0,
        Some(second) if second > 0.0 => (centered_peak / second).max(1.0),
        Some(_) => f64::INFINITY,
        None => 1.0,
    };

    let theta_l = wrap_angle((best as f64 + offset) * prev.bin_width());
    Ok(RotationEstimate {
        theta_l,
        correlation_peak: peak,
        peak_ratio,
        peak_shift: best,
    })
}
