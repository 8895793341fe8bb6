use std::ops::Range;

use super::{Axis, Dims, VolumeError};

/// Object-order domain decompositions. Only [`Decomposition::Slab`] is
/// consumed by the renderer; shafts (two split axes) and blocks (three)
/// are listed for completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decomposition {
    Slab,
    Shaft,
    Block,
}

/// The contiguous range of slices along `axis` owned by one worker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlabAssignment {
    pub axis: Axis,
    pub worker_index: usize,
    pub range: Range<usize>,
}

impl SlabAssignment {
    pub fn len(&self) -> usize {
        self.range.end - self.range.start
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }

    /// Dimensions of the slab's voxel block.
    pub fn local_dims(&self, dims: Dims) -> Dims {
        dims.with(self.axis, self.len())
    }

    /// Model-space coordinate of the plane through the slab's center.
    /// Voxel `i` occupies `[i, i + 1)` along each axis.
    pub fn center_plane(&self) -> f64 {
        (self.range.start + self.range.end) as f64 / 2.0
    }
}

/// Splits `dims` along `axis` among `workers` slabs whose sizes differ by at
/// most one; the first `dim % workers` slabs take the extra slice.
pub fn decompose(dims: Dims, axis: Axis, workers: usize) -> Result<Vec<SlabAssignment>, VolumeError> {
    let slices = dims.get(axis);
    if workers == 0 || workers > slices {
        return Err(VolumeError::InvalidPartition { workers, slices });
    }
    let base = slices / workers;
    let extra = slices % workers;
    let mut lo = 0;
    Ok((0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let range = lo..lo + len;
            lo += len;
            SlabAssignment {
                axis,
                worker_index: w,
                range,
            }
        })
        .collect())
}

/// Axis of the largest-magnitude component; ties resolve X, then Y, then Z.
pub fn choose_axis(view_direction: [f64; 3]) -> Result<Axis, VolumeError> {
    if view_direction.iter().any(|c| !c.is_finite()) || view_direction.iter().all(|&c| c == 0.0) {
        return Err(VolumeError::InvalidView);
    }
    let mags = view_direction.map(f64::abs);
    let mut best = 0;
    for i in 1..3 {
        if mags[i] > mags[best] {
            best = i;
        }
    }
    Ok(Axis::from_index(best).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranges(v: &[SlabAssignment]) -> Vec<Range<usize>> {
        v.iter().map(|s| s.range.clone()).collect()
    }

    #[test]
    fn equal_split_of_field_grid() {
        let s = decompose(Dims::new(640, 256, 256), Axis::X, 4).unwrap();
        assert_eq!(ranges(&s), vec![0..160, 160..320, 320..480, 480..640]);
    }

    #[test]
    fn remainder_goes_first() {
        let s = decompose(Dims::new(7, 4, 4), Axis::X, 3).unwrap();
        assert_eq!(ranges(&s), vec![0..3, 3..5, 5..7]);
    }

    #[test]
    fn too_many_workers() {
        assert!(matches!(
            decompose(Dims::cube(4), Axis::X, 5),
            Err(VolumeError::InvalidPartition { workers: 5, slices: 4 })
        ));
        assert!(decompose(Dims::cube(4), Axis::X, 0).is_err());
    }

    #[test]
    fn axis_choice_examples() {
        assert_eq!(choose_axis([1.0, 0.0, 0.0]).unwrap(), Axis::X);
        assert_eq!(choose_axis([0.6, 0.7, 0.2]).unwrap(), Axis::Y);
        assert_eq!(choose_axis([std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2, 0.0]).unwrap(), Axis::X);
        assert_eq!(choose_axis([0.0, -0.5, 0.5]).unwrap(), Axis::Y);
        assert_eq!(choose_axis([0.0, 0.0, -2.0]).unwrap(), Axis::Z);
        assert!(choose_axis([0.0, 0.0, 0.0]).is_err());
        assert!(choose_axis([f64::NAN, 1.0, 0.0]).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_is_a_partition(n in 1usize..200, p_seed in 0usize..1000, axis in 0usize..3) {
            let axis = Axis::from_index(axis).unwrap();
            let dims = Dims::new(3, 5, 7).with(axis, n);
            let p = 1 + p_seed % n;
            let slabs = decompose(dims, axis, p).unwrap();
            prop_assert_eq!(slabs.len(), p);
            let mut next = 0;
            for (i, s) in slabs.iter().enumerate() {
                prop_assert_eq!(s.worker_index, i);
                prop_assert_eq!(s.range.start, next);
                prop_assert!(!s.is_empty());
                next = s.range.end;
            }
            prop_assert_eq!(next, n);
            let sizes: Vec<usize> = slabs.iter().map(SlabAssignment::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn axis_choice_is_scale_invariant(
            x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0, k in 1e-3f64..1e3
        ) {
            prop_assume!(x != 0.0 || y != 0.0 || z != 0.0);
            // Scaling can perturb exact ties by one ulp; skip near-ties.
            let m = [x.abs(), y.abs(), z.abs()];
            let mut s = m; s.sort_by(f64::total_cmp);
            prop_assume!(s[2] - s[1] > 1e-9 * s[2]);
            prop_assert_eq!(choose_axis([x, y, z]).unwrap(), choose_axis([k * x, k * y, k * z]).unwrap());
        }
    }
}
