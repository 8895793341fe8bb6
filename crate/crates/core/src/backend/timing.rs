//! Serial versus overlapped wall-time model.

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimingModel {
    /// Load seconds per timestep.
    pub load_s: f64,
    /// Render seconds per timestep.
    pub render_s: f64,
    pub timesteps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub serial_s: f64,
    pub overlapped_s: f64,
    pub speedup: f64,
}

impl TimingModel {
    pub fn new(load_s: f64, render_s: f64, timesteps: usize) -> Result<Self, BackendError> {
        let m = TimingModel { load_s, render_s, timesteps };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.load_s >= 0.0 && self.render_s >= 0.0) || !self.load_s.is_finite() || !self.render_s.is_finite() {
            return Err(BackendError::Config(format!("negative or non-finite phase time in {self:?}")));
        }
        if self.timesteps == 0 {
            return Err(BackendError::Config("timing model needs at least one timestep".into()));
        }
        Ok(())
    }

    /// Upper bound on the overlap speedup, reached when load and render
    /// times are equal.
    pub fn speedup_bound(timesteps: usize) -> f64 {
        2.0 * timesteps as f64 / (timesteps as f64 + 1.0)
    }
}

pub fn predict(m: &TimingModel) -> Result<Prediction, BackendError> {
    m.validate()?;
    let n = m.timesteps as f64;
    let serial_s = n * (m.load_s + m.render_s);
    let overlapped_s = n * m.load_s.max(m.render_s) + m.load_s.min(m.render_s);
    let speedup = if overlapped_s == 0.0 { 1.0 } else { serial_s / overlapped_s };
    Ok(Prediction { serial_s, overlapped_s, speedup })
}

/// Sustained rate in megabits per second (10^6 bits) needed to move
/// `pixels` of `bytes_per_pixel` at `fps`.
pub fn required_rate_mbps(pixels: u64, bytes_per_pixel: u64, fps: f64) -> f64 {
    (pixels * bytes_per_pixel * 8) as f64 * fps / 1e6
}
