//! Off-axis degradation of slab compositing against a slice-by-slice
//! re-render.

use crate::backend::{placement, render_slab, Direction};
use crate::protocol::LightPayload;
use crate::volume::{decompose, Axis, TransferFunction, Volume};

use super::composite::{composite_layers, Camera, Raster};
use super::scene::SlotContent;
use super::view::{rotation, ViewState};
use super::ViewerError;

/// Renders `volume` as `workers` slabs along `axis`, the way the back end
/// would, as float layers ready for compositing.
pub fn slab_layers(volume: &Volume, tf: &TransferFunction, axis: Axis, workers: usize, direction: Direction) -> Result<Vec<SlotContent>, ViewerError> {
    let dims = volume.dims();
    let (ua, va) = axis.transverse();
    decompose(dims, axis, workers)?
        .iter()
        .map(|s| {
            let image = render_slab(&volume.extract_slab(s), tf, axis, direction)?;
            let light = LightPayload {
                frame: 0,
                width: dims.get(ua) as u32,
                height: dims.get(va) as u32,
                bytes_per_pixel: 4,
                axis,
                placement: placement(dims, s),
            };
            Ok(SlotContent::from_image(s.worker_index, light, image))
        })
        .collect()
}

/// Ground truth at any view: one layer per voxel slice along `axis`, placed
/// at the slice's center plane. Axis-aligned, it equals the single-slab
/// ray cast exactly.
pub fn reference_render(volume: &Volume, tf: &TransferFunction, axis: Axis, direction: Direction, camera: &Camera) -> Result<Raster, ViewerError> {
    let slices = slab_layers(volume, tf, axis, volume.dims().get(axis), direction)?;
    Ok(composite_layers(&slices.iter().collect::<Vec<_>>(), camera))
}

/// Mean absolute per-channel difference between the `workers`-slab
/// composite and the slice reference, viewing along z tilted by
/// `angle_degrees` about y. The decomposition stays on z at every angle.
pub fn artifact_error(volume: &Volume, tf: &TransferFunction, workers: usize, angle_degrees: f64) -> Result<f64, ViewerError> {
    let dims = volume.dims();
    let view = ViewState::new(rotation(Axis::Y, angle_degrees.to_radians()))?;
    let side = (dims.as_array().into_iter().max().unwrap() * 3).div_ceil(2);
    let camera = Camera::centered(&view, dims, side, side);
    let dir = Direction::from_component(camera.direction()[Axis::Z.index()]);
    let slabs = slab_layers(volume, tf, Axis::Z, workers, dir)?;
    let ibr = composite_layers(&slabs.iter().collect::<Vec<_>>(), &camera);
    let truth = reference_render(volume, tf, Axis::Z, dir, &camera)?;
    Ok(ibr.mean_abs_diff(&truth))
}
