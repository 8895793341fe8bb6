use super::VolumeError;

/// One control point of a transfer function: straight (non-premultiplied)
/// RGBA at a scalar value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Breakpoint {
    pub value: f32,
    pub rgba: [f32; 4],
}

/// Piecewise-linear scalar-to-color map, clamped outside its range.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TransferFunction {
    breakpoints: Vec<Breakpoint>,
}

impl TransferFunction {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self, VolumeError> {
        if breakpoints.is_empty() {
            return Err(VolumeError::InvalidTransferFunction("no breakpoints".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].value > w[0].value) {
                return Err(VolumeError::InvalidTransferFunction(format!(
                    "breakpoint scalars not strictly increasing at {}",
                    w[1].value
                )));
            }
        }
        for b in &breakpoints {
            if !b.value.is_finite() || b.rgba.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(VolumeError::InvalidTransferFunction(format!(
                    "breakpoint at {} out of range",
                    b.value
                )));
            }
        }
        Ok(TransferFunction { breakpoints })
    }

    /// Transparent black at 0 rising to opaque white at 1.
    pub fn gray_ramp() -> Self {
        TransferFunction {
            breakpoints: vec![
                Breakpoint { value: 0.0, rgba: [0.0; 4] },
                Breakpoint { value: 1.0, rgba: [1.0; 4] },
            ],
        }
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    /// Straight RGBA for `scalar`.
    pub fn classify(&self, scalar: f32) -> [f32; 4] {
        let bps = &self.breakpoints;
        let first = bps[0];
        let last = bps[bps.len() - 1];
        if !(scalar > first.value) {
            return first.rgba;
        }
        if scalar >= last.value {
            return last.rgba;
        }
        let i = bps.partition_point(|b| b.value <= scalar);
        let (a, b) = (bps[i - 1], bps[i]);
        let t = (scalar - a.value) / (b.value - a.value);
        std::array::from_fn(|c| a.rgba[c] + t * (b.rgba[c] - a.rgba[c]))
    }
}

impl Default for TransferFunction {
    fn default() -> Self {
        TransferFunction::gray_ramp()
    }
}
