//! Orientation state and best-axis selection.

use crate::protocol::Feedback;
use crate::volume::{choose_axis, Axis};

use super::ViewerError;

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Tolerance for `RᵀR = I`.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

pub fn transpose(a: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Proper rotation check: orthonormal within [`ORTHONORMAL_TOL`] and
/// determinant +1.
pub fn is_rotation(r: &Mat3) -> bool {
    if r.iter().flatten().any(|c| !c.is_finite()) {
        return false;
    }
    let rtr = mat_mul(&transpose(r), r);
    let ortho = (0..3).all(|i| (0..3).all(|j| (rtr[i][j] - IDENTITY[i][j]).abs() <= ORTHONORMAL_TOL));
    ortho && det(r) > 0.0
}

/// Rotation by `radians` about a principal axis (right-handed).
pub fn rotation(axis: Axis, radians: f64) -> Mat3 {
    let (s, c) = radians.sin_cos();
    match axis {
        Axis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        Axis::Y => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        Axis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// A model-to-view rotation whose view direction is `d` (normalized).
pub fn look_along(d: [f64; 3]) -> Result<Mat3, ViewerError> {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(ViewerError::InvalidOrientation("zero view direction".into()));
    }
    let f = d.map(|c| c / n);
    let helper = if f[1].abs() < 0.9 { [0.0, 1.0, 0.0] } else { [1.0, 0.0, 0.0] };
    let right = normalize(cross(helper, f));
    let up = cross(f, right);
    Ok([right, up, f])
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    a.map(|c| c / n)
}

/// Model-to-view rotation. The view looks along view-space +z, so the
/// model-space view direction is the third row.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewState {
    orientation: Mat3,
    best_axis: Axis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewUpdate {
    pub axis: Axis,
    /// Set when the best axis changed; the message to send upstream.
    pub feedback: Option<Feedback>,
}

impl Default for ViewState {
    fn default() -> Self {
        ViewState { orientation: IDENTITY, best_axis: Axis::Z }
    }
}

impl ViewState {
    pub fn new(orientation: Mat3) -> Result<Self, ViewerError> {
        let mut v = ViewState::default();
        v.update_view(orientation)?;
        Ok(v)
    }

    pub fn orientation(&self) -> &Mat3 {
        &self.orientation
    }

    pub fn direction(&self) -> [f64; 3] {
        self.orientation[2]
    }

    pub fn best_axis(&self) -> Axis {
        self.best_axis
    }

    /// Installs a new orientation and recomputes the best axis.
    pub fn update_view(&mut self, orientation: Mat3) -> Result<ViewUpdate, ViewerError> {
        if !is_rotation(&orientation) {
            return Err(ViewerError::InvalidOrientation(format!("{orientation:?} is not a rotation")));
        }
        let d = orientation[2];
        let axis = choose_axis(d).map_err(|e| ViewerError::InvalidOrientation(e.to_string()))?;
        self.orientation = orientation;
        let changed = axis != self.best_axis;
        self.best_axis = axis;
        Ok(ViewUpdate {
            axis,
            feedback: changed.then(|| Feedback { axis, direction: d.map(|c| c as f32) }),
        })
    }
}
