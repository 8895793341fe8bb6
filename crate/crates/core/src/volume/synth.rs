use std::fmt;
use std::str::FromStr;

use super::{Dims, Volume, VolumeDataset};

/// Synthetic dataset generators used for tests, examples and experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthKind {
    Constant(f32),
    /// Isotropic Gaussian centered on voxel `(nx/2, ny/2, nz/2)`.
    GaussianBlob,
    /// Gaussian whose center translates along x by a fixed step per timestep.
    MovingBlob,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthKind::Constant(v) => write!(f, "constant:{v}"),
            SynthKind::GaussianBlob => f.write_str("gaussian-blob"),
            SynthKind::MovingBlob => f.write_str("moving-blob"),
        }
    }
}

impl FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian-blob" => Ok(SynthKind::GaussianBlob),
            "moving-blob" => Ok(SynthKind::MovingBlob),
            _ => match s.strip_prefix("constant") {
                Some("") => Ok(SynthKind::Constant(0.0)),
                Some(rest) => rest
                    .trim_start_matches([':', '='])
                    .trim_matches(['(', ')'])
                    .parse()
                    .map(SynthKind::Constant)
                    .map_err(|e| format!("bad constant value: {e}")),
                None => Err(format!("unknown dataset kind {s:?}")),
            },
        }
    }
}

fn sigma(dims: Dims) -> f64 {
    (dims.nx.min(dims.ny).min(dims.nz) as f64 / 6.0).max(0.5)
}

/// Per-timestep translation of the moving blob along x, in voxels.
pub fn moving_blob_step(dims: Dims, timesteps: usize) -> f64 {
    dims.nx as f64 / (2.0 * timesteps.max(1) as f64)
}

/// Blob center (voxel index coordinates) at timestep `t`, or `None` for
/// kinds without one.
pub fn blob_center(kind: SynthKind, dims: Dims, t: usize, timesteps: usize) -> Option<[f64; 3]> {
    let mid = [(dims.nx / 2) as f64, (dims.ny / 2) as f64, (dims.nz / 2) as f64];
    match kind {
        SynthKind::Constant(_) => None,
        SynthKind::GaussianBlob => Some(mid),
        SynthKind::MovingBlob => Some([
            dims.nx as f64 / 4.0 + t as f64 * moving_blob_step(dims, timesteps),
            mid[1],
            mid[2],
        ]),
    }
}

/// Deterministic synthetic dataset held in memory.
pub fn synthesize(kind: SynthKind, dims: Dims, timesteps: usize) -> VolumeDataset {
    let timesteps = timesteps.max(1);
    let s2 = 2.0 * sigma(dims).powi(2);
    let frames = (0..timesteps)
        .map(|t| match blob_center(kind, dims, t, timesteps) {
            None => {
                let SynthKind::Constant(v) = kind else { unreachable!() };
                Volume::filled(dims, v)
            }
            Some(c) => Volume::from_fn(dims, |x, y, z| {
                let d2 = (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2);
                (-d2 / s2).exp() as f32
            }),
        })
        .collect();
    VolumeDataset::in_memory(frames).expect("synthetic frames are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_zero() {
        let ds = synthesize(SynthKind::Constant(0.0), Dims::cube(8), 1);
        assert!(ds.load_local(0).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blob_peaks_at_center() {
        let v = synthesize(SynthKind::GaussianBlob, Dims::cube(8), 1).load_local(0).unwrap();
        let (_, hi) = v.min_max();
        assert_eq!(v.get(4, 4, 4), hi);
        assert_eq!(hi, 1.0);
        let peaks = v.data().iter().filter(|&&x| x == hi).count();
        assert_eq!(peaks, 1);
    }

    #[test]
    fn moving_blob_steps_by_fixed_offset() {
        let dims = Dims::cube(8);
        let step = moving_blob_step(dims, 3);
        let centers: Vec<_> = (0..3)
            .map(|t| blob_center(SynthKind::MovingBlob, dims, t, 3).unwrap())
            .collect();
        for w in centers.windows(2) {
            assert!((w[1][0] - w[0][0] - step).abs() < 1e-12);
            assert_eq!(w[1][1], w[0][1]);
        }
        let ds = synthesize(SynthKind::MovingBlob, dims, 3);
        assert_ne!(ds.load_local(0).unwrap(), ds.load_local(1).unwrap());
    }

    #[test]
    fn deterministic() {
        let a = synthesize(SynthKind::MovingBlob, Dims::cube(6), 2);
        let b = synthesize(SynthKind::MovingBlob, Dims::cube(6), 2);
        assert_eq!(a.load_local(1).unwrap(), b.load_local(1).unwrap());
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("moving-blob".parse::<SynthKind>().unwrap(), SynthKind::MovingBlob);
        assert_eq!("constant:7".parse::<SynthKind>().unwrap(), SynthKind::Constant(7.0));
        assert_eq!("constant(2.5)".parse::<SynthKind>().unwrap(), SynthKind::Constant(2.5));
        assert!("noise".parse::<SynthKind>().is_err());
    }
}
