//! Headless compositing of textured slab quads onto an orthographic raster.

use std::path::Path;

use crate::color::Rgba;
use crate::volume::Dims;

use super::scene::{SceneGraph, SlotContent};
use super::view::{dot, Mat3, ViewState};
use super::ViewerError;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgba>,
}

impl Raster {
    pub fn transparent(width: usize, height: usize) -> Self {
        Raster { width, height, pixels: vec![Rgba::TRANSPARENT; width * height] }
    }

    pub fn get(&self, i: usize, j: usize) -> Rgba {
        self.pixels[i + self.width * j]
    }

    pub fn max_abs_diff(&self, other: &Raster) -> f32 {
        self.check_size(other);
        self.pixels.iter().zip(&other.pixels).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f32::max)
    }

    /// Mean over pixels and channels of the absolute difference.
    pub fn mean_abs_diff(&self, other: &Raster) -> f64 {
        self.check_size(other);
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..4).map(move |c| (a.0[c] as f64 - b.0[c] as f64).abs()))
            .sum();
        sum / (4 * self.pixels.len()).max(1) as f64
    }

    fn check_size(&self, other: &Raster) {
        assert_eq!((self.width, self.height), (other.width, other.height), "raster size mismatch");
    }

    /// Composites over black and writes an 8-bit RGB PNG, row 0 at the top.
    pub fn save_png(&self, path: &Path) -> Result<(), ViewerError> {
        let mut img = image::RgbImage::new(self.width as u32, self.height as u32);
        for (j, row) in self.pixels.chunks(self.width).enumerate() {
            for (i, p) in row.iter().enumerate() {
                let c = p.to_rgba8();
                img.put_pixel(i as u32, (self.height - 1 - j) as u32, image::Rgb([c[0], c[1], c[2]]));
            }
        }
        img.save(path).map_err(|e| ViewerError::Snapshot(format!("{}: {e}", path.display())))
    }
}

/// Orthographic camera. Pixel `(i, j)` sees the ray through
/// `pivot + scale·((i + ½ − W/2)·right + (j + ½ − H/2)·up)` along the view
/// direction, where right, up and direction are the rows of `orientation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub orientation: Mat3,
    pub pivot: [f64; 3],
    pub width: usize,
    pub height: usize,
    /// Model units per pixel.
    pub scale: f64,
}

impl Camera {
    /// A 1:1 camera centered on a volume of `dims`.
    pub fn centered(view: &ViewState, dims: Dims, width: usize, height: usize) -> Self {
        Camera {
            orientation: *view.orientation(),
            pivot: [dims.nx as f64 / 2.0, dims.ny as f64 / 2.0, dims.nz as f64 / 2.0],
            width,
            height,
            scale: 1.0,
        }
    }

    /// Scales so the volume's bounding sphere fits the raster.
    pub fn fit(view: &ViewState, dims: Dims, width: usize, height: usize) -> Self {
        let diag = (dims.as_array().iter().map(|&n| (n * n) as f64).sum::<f64>()).sqrt();
        Camera { scale: diag / width.min(height).max(1) as f64, ..Camera::centered(view, dims, width, height) }
    }

    pub fn direction(&self) -> [f64; 3] {
        self.orientation[2]
    }
}

struct Quad<'a> {
    layer: &'a SlotContent,
    c0: [f64; 3],
    e1: [f64; 3],
    e2: [f64; 3],
    e1_sq: f64,
    e2_sq: f64,
    normal: [f64; 3],
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn quad_center(l: &SlotContent) -> [f64; 3] {
    let p = &l.light.placement;
    std::array::from_fn(|k| p.iter().map(|c| c[k] as f64).sum::<f64>() / 4.0)
}

/// Indices of `layers` in back-to-front order: descending distance of the
/// quad center along `direction`, ties broken by worker index.
pub fn depth_order(layers: &[&SlotContent], direction: [f64; 3]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..layers.len()).collect();
    let key: Vec<f64> = layers.iter().map(|l| dot(quad_center(l), direction)).collect();
    idx.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(layers[a].worker.cmp(&layers[b].worker)));
    idx
}

fn sample(l: &SlotContent, tx: f64, ty: f64) -> Rgba {
    let img = &l.image;
    let (w, h) = (img.width, img.height);
    let tx = tx.clamp(0.0, (w - 1) as f64);
    let ty = ty.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (tx.floor() as usize, ty.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = ((tx - x0 as f64) as f32, (ty - y0 as f64) as f32);
    img.get(x0, y0) * ((1.0 - fx) * (1.0 - fy))
        + img.get(x1, y0) * (fx * (1.0 - fy))
        + img.get(x0, y1) * ((1.0 - fx) * fy)
        + img.get(x1, y1) * (fx * fy)
}

/// Composites `layers` back to front with the over operator. Each layer's
/// texture is bilinearly resampled (clamped at the edges) where the pixel's
/// ray crosses its quad; elsewhere it contributes nothing.
pub fn composite_layers(layers: &[&SlotContent], camera: &Camera) -> Raster {
    let d = camera.direction();
    let [right, up, _] = camera.orientation;
    let quads: Vec<Quad> = depth_order(layers, d)
        .into_iter()
        .map(|i| layers[i])
        .filter(|l| l.image.width > 0 && l.image.height > 0)
        .filter_map(|layer| {
            let p = layer.light.placement.map(|c| c.map(f64::from));
            let e1 = sub(p[1], p[0]);
            let e2 = sub(p[3], p[0]);
            let normal = super::view::cross(e1, e2);
            (dot(normal, d).abs() > 1e-12).then(|| Quad { layer, c0: p[0], e1, e2, e1_sq: dot(e1, e1), e2_sq: dot(e2, e2), normal })
        })
        .collect();

    let (w, h) = (camera.width, camera.height);
    let mut out = Raster::transparent(w, h);
    for j in 0..h {
        let yv = (j as f64 + 0.5 - h as f64 / 2.0) * camera.scale;
        for i in 0..w {
            let xv = (i as f64 + 0.5 - w as f64 / 2.0) * camera.scale;
            let o: [f64; 3] = std::array::from_fn(|k| camera.pivot[k] + xv * right[k] + yv * up[k]);
            let mut acc = Rgba::TRANSPARENT;
            for q in &quads {
                let s = dot(sub(q.c0, o), q.normal) / dot(d, q.normal);
                let rel = sub(std::array::from_fn(|k| o[k] + s * d[k]), q.c0);
                let a = dot(rel, q.e1) / q.e1_sq;
                let b = dot(rel, q.e2) / q.e2_sq;
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                    continue;
                }
                let img = &q.layer.image;
                let c = sample(q.layer, a * img.width as f64 - 0.5, b * img.height as f64 - 0.5);
                acc = c.over(acc);
            }
            out.pixels[i + w * j] = acc;
        }
    }
    out
}

/// Composites whatever the scene's slots hold right now. Slots are read
/// under their locks only long enough to clone the `Arc`s.
pub fn composite(scene: &SceneGraph, camera: &Camera) -> Raster {
    let snap = scene.snapshot();
    let layers: Vec<&SlotContent> = snap.iter().map(|a| a.as_ref()).collect();
    composite_layers(&layers, camera)
}
