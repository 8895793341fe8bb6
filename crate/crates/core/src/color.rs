//! Premultiplied RGBA colors and the over operator.

use std::ops::{Add, Mul};

/// A premultiplied-alpha color with components nominally in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rgba(pub [f32; 4]);

impl Rgba {
    pub const TRANSPARENT: Rgba = Rgba([0.0; 4]);

    pub fn new(r: f32, g: f32, b: f32, a: f32) -> Self {
        Rgba([r, g, b, a])
    }

    /// Premultiplies a straight (non-premultiplied) color.
    pub fn from_straight(straight: [f32; 4]) -> Self {
        let a = straight[3];
        Rgba([straight[0] * a, straight[1] * a, straight[2] * a, a])
    }

    pub fn alpha(&self) -> f32 {
        self.0[3]
    }

    /// `self` composited in front of `back`: `self + (1 - alpha_self) * back`.
    #[inline]
    pub fn over(self, back: Rgba) -> Rgba {
        let k = 1.0 - self.0[3];
        Rgba([
            self.0[0] + k * back.0[0],
            self.0[1] + k * back.0[1],
            self.0[2] + k * back.0[2],
            self.0[3] + k * back.0[3],
        ])
    }

    pub fn max_abs_diff(&self, other: &Rgba) -> f32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// 8-bit quantization with clamping to `[0, 1]`.
    pub fn to_rgba8(&self) -> [u8; 4] {
        self.0.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    pub fn from_rgba8(px: [u8; 4]) -> Self {
        Rgba(px.map(|c| c as f32 / 255.0))
    }
}

impl Add for Rgba {
    type Output = Rgba;
    fn add(self, o: Rgba) -> Rgba {
        Rgba([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }
}

impl Mul<f32> for Rgba {
    type Output = Rgba;
    fn mul(self, k: f32) -> Rgba {
        Rgba(self.0.map(|c| c * k))
    }
}

/// Composites `layers` given in back-to-front order.
pub fn composite_back_to_front<I: IntoIterator<Item = Rgba>>(layers: I) -> Rgba {
    layers
        .into_iter()
        .fold(Rgba::TRANSPARENT, |acc, front| front.over(acc))
}
