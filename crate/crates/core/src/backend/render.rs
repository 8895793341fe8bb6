//! Orthographic, axis-aligned slab ray casting.

use crate::color::Rgba;
use crate::volume::{Axis, Dims, SlabAssignment, TransferFunction, Volume};

use super::BackendError;

/// Sign of the view direction along the decomposition axis. `Positive`
/// means rays travel toward increasing coordinates, so low indices are in
/// front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    #[default]
    Positive,
    Negative,
}

impl Direction {
    pub fn from_component(c: f64) -> Self {
        if c < 0.0 {
            Direction::Negative
        } else {
            Direction::Positive
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

/// Float premultiplied texture of one slab. Pixel `(u, v)` is at
/// `u + width * v`; `u` and `v` follow [`Axis::transverse`].
#[derive(Debug, Clone, PartialEq)]
pub struct SlabImage {
    pub axis: Axis,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgba>,
}

impl SlabImage {
    pub fn transparent(axis: Axis, width: usize, height: usize) -> Self {
        SlabImage { axis, width, height, pixels: vec![Rgba::TRANSPARENT; width * height] }
    }

    pub fn get(&self, u: usize, v: usize) -> Rgba {
        self.pixels[u + self.width * v]
    }

    pub fn to_rgba8(&self) -> Vec<u8> {
        self.pixels.iter().flat_map(|p| p.to_rgba8()).collect()
    }

    pub fn from_rgba8(axis: Axis, width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != width * height * 4 {
            return None;
        }
        let pixels = bytes
            .chunks_exact(4)
            .map(|c| Rgba::from_rgba8([c[0], c[1], c[2], c[3]]))
            .collect();
        Some(SlabImage { axis, width, height, pixels })
    }

    pub fn max_abs_diff(&self, other: &SlabImage) -> f32 {
        assert_eq!(self.pixels.len(), other.pixels.len(), "image size mismatch");
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f32::max)
    }

    /// Composites `self` in front of `back`, pixel by pixel.
    pub fn over(&self, back: &SlabImage) -> SlabImage {
        assert_eq!((self.width, self.height), (back.width, back.height), "image size mismatch");
        let pixels = self.pixels.iter().zip(&back.pixels).map(|(f, b)| f.over(*b)).collect();
        SlabImage { axis: self.axis, width: self.width, height: self.height, pixels }
    }
}

/// Casts one ray per transverse voxel through `slab` (its local voxels),
/// accumulating classified samples back to front.
pub fn render_slab(slab: &Volume, tf: &TransferFunction, axis: Axis, direction: Direction) -> Result<SlabImage, BackendError> {
    let dims = slab.dims();
    let depth = dims.get(axis);
    if depth == 0 || dims.voxel_count() == 0 {
        return Err(BackendError::EmptySlab);
    }
    let (ua, va) = axis.transverse();
    let (w, h) = (dims.get(ua), dims.get(va));
    let stride = [1, dims.nx, dims.nx * dims.ny];
    let (su, sv, sd) = (stride[ua.index()], stride[va.index()], stride[axis.index()]);
    let data = slab.data();

    let mut pixels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let base = u * su + v * sv;
            let mut acc = Rgba::TRANSPARENT;
            let mut step = |d: usize| {
                let sample = Rgba::from_straight(tf.classify(data[base + d * sd]));
                acc = sample.over(acc);
            };
            match direction {
                Direction::Positive => (0..depth).rev().for_each(&mut step),
                Direction::Negative => (0..depth).for_each(&mut step),
            }
            pixels.push(acc);
        }
    }
    Ok(SlabImage { axis, width: w, height: h, pixels })
}

/// Model-space quad for a slab: the full cross-section at its center plane.
/// `c1 - c0` spans texture u and `c3 - c0` spans texture v.
pub fn placement(dims: Dims, slab: &SlabAssignment) -> [[f32; 3]; 4] {
    let (ua, va) = slab.axis.transverse();
    let c = slab.center_plane() as f32;
    let eu = dims.get(ua) as f32;
    let ev = dims.get(va) as f32;
    let corner = |u: f32, v: f32| {
        let mut p = [0.0f32; 3];
        p[slab.axis.index()] = c;
        p[ua.index()] = u;
        p[va.index()] = v;
        p
    };
    [corner(0.0, 0.0), corner(eu, 0.0), corner(eu, ev), corner(0.0, ev)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{decompose, synthesize, Breakpoint, SynthKind};

    fn red_at_one() -> TransferFunction {
        TransferFunction::new(vec![
            Breakpoint { value: 0.0, rgba: [0.0; 4] },
            Breakpoint { value: 1.0, rgba: [1.0, 0.0, 0.0, 1.0] },
        ])
        .unwrap()
    }

    #[test]
    fn zero_slab_is_transparent() {
        let v = Volume::filled(Dims::new(3, 4, 5), 0.0);
        let img = render_slab(&v, &TransferFunction::gray_ramp(), Axis::Z, Direction::Positive).unwrap();
        assert_eq!((img.width, img.height), (3, 4));
        assert!(img.pixels.iter().all(|p| *p == Rgba::TRANSPARENT));
    }

    #[test]
    fn single_opaque_voxel() {
        let v = Volume::from_fn(Dims::new(1, 3, 3), |_, y, z| if (y, z) == (1, 2) { 1.0 } else { 0.0 });
        let img = render_slab(&v, &red_at_one(), Axis::X, Direction::Positive).unwrap();
        let opaque: Vec<_> = img.pixels.iter().enumerate().filter(|(_, p)| p.alpha() > 0.0).collect();
        assert_eq!(opaque.len(), 1);
        assert_eq!(opaque[0].0, 1 + 3 * 2);
        assert_eq!(*opaque[0].1, Rgba::new(1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn two_half_alpha_samples() {
        let tf = TransferFunction::new(vec![
            Breakpoint { value: 0.0, rgba: [0.5, 0.5, 0.5, 0.5] },
            Breakpoint { value: 1.0, rgba: [0.5, 0.5, 0.5, 0.5] },
        ])
        .unwrap();
        let v = Volume::filled(Dims::new(1, 1, 2), 0.3);
        let img = render_slab(&v, &tf, Axis::Z, Direction::Positive).unwrap();
        // 1 - (1 - 0.5)^2
        assert!((img.pixels[0].alpha() - 0.75).abs() < 1e-7);
    }

    #[test]
    fn direction_flips_occlusion() {
        // Opaque red at z=0, opaque green-ish at z=1 via a two-color map.
        let tf = TransferFunction::new(vec![
            Breakpoint { value: 0.0, rgba: [1.0, 0.0, 0.0, 1.0] },
            Breakpoint { value: 1.0, rgba: [0.0, 1.0, 0.0, 1.0] },
        ])
        .unwrap();
        let v = Volume::from_fn(Dims::new(1, 1, 2), |_, _, z| z as f32);
        let pos = render_slab(&v, &tf, Axis::Z, Direction::Positive).unwrap();
        let neg = render_slab(&v, &tf, Axis::Z, Direction::Negative).unwrap();
        assert_eq!(pos.pixels[0], Rgba::new(1.0, 0.0, 0.0, 1.0));
        assert_eq!(neg.pixels[0], Rgba::new(0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn slab_composite_matches_whole_volume() {
        let dims = Dims::cube(16);
        let vol = synthesize(SynthKind::GaussianBlob, dims, 1).load_local(0).unwrap();
        let tf = TransferFunction::gray_ramp();
        for axis in Axis::ALL {
            for dir in [Direction::Positive, Direction::Negative] {
                let whole = render_slab(&vol, &tf, axis, dir).unwrap();
                let mut slabs: Vec<_> = decompose(dims, axis, 3)
                    .unwrap()
                    .iter()
                    .map(|s| render_slab(&vol.extract_slab(s), &tf, axis, dir).unwrap())
                    .collect();
                if dir == Direction::Negative {
                    slabs.reverse();
                }
                // slabs are now front to back
                let mut acc = SlabImage::transparent(axis, whole.width, whole.height);
                for s in slabs.iter().rev() {
                    acc = s.over(&acc);
                }
                assert!(acc.max_abs_diff(&whole) <= 1e-5, "{axis} {dir:?}");
            }
        }
    }

    #[test]
    fn placement_is_center_plane_cross_section() {
        let dims = Dims::new(10, 20, 30);
        let s = &decompose(dims, Axis::X, 2).unwrap()[1];
        let q = placement(dims, s);
        assert_eq!(q, [[7.5, 0.0, 0.0], [7.5, 20.0, 0.0], [7.5, 20.0, 30.0], [7.5, 0.0, 30.0]]);
        let s = &decompose(dims, Axis::Y, 1).unwrap()[0];
        assert_eq!(placement(dims, s)[2], [10.0, 10.0, 30.0]);
    }

    #[test]
    fn rgba8_round_trip() {
        let img = SlabImage { axis: Axis::Y, width: 1, height: 2, pixels: vec![Rgba::new(0.0, 0.5, 1.0, 1.0), Rgba::TRANSPARENT] };
        let b = img.to_rgba8();
        assert_eq!(b, vec![0, 128, 255, 255, 0, 0, 0, 0]);
        let back = SlabImage::from_rgba8(Axis::Y, 1, 2, &b).unwrap();
        assert!(back.max_abs_diff(&img) < 1.0 / 255.0);
        assert!(SlabImage::from_rgba8(Axis::Y, 2, 2, &b).is_none());
    }
}
