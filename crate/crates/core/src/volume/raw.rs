//! Raw timestep files: bare little-endian f32, x-fastest, one file per
//! timestep, described by a `key=value` sidecar.

use std::fs;
use std::path::Path;

use super::{Dims, Volume, VolumeDataset, VolumeError, VolumeSource};

pub const DESCRIPTOR_FILE: &str = "volume.desc";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Descriptor {
    pub dims: Dims,
    pub timesteps: usize,
    /// File name pattern; `{t}` is replaced by the timestep index.
    pub pattern: String,
}

impl Descriptor {
    pub fn file_name(&self, t: usize) -> String {
        self.pattern.replace("{t}", &t.to_string())
    }

    pub fn to_text(&self) -> String {
        format!(
            "nx={}\nny={}\nnz={}\ntimesteps={}\npattern={}\n",
            self.dims.nx, self.dims.ny, self.dims.nz, self.timesteps, self.pattern
        )
    }

    pub fn parse(text: &str) -> Result<Self, VolumeError> {
        let mut nx = None;
        let mut ny = None;
        let mut nz = None;
        let mut timesteps = None;
        let mut pattern = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| VolumeError::Descriptor(format!("expected key=value, got {line:?}")))?;
            let num = || {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| VolumeError::Descriptor(format!("{k}: {e}")))
            };
            match k.trim() {
                "nx" => nx = Some(num()?),
                "ny" => ny = Some(num()?),
                "nz" => nz = Some(num()?),
                "timesteps" => timesteps = Some(num()?),
                "pattern" => pattern = Some(v.trim().to_string()),
                _ => {}
            }
        }
        let missing = |k: &str| VolumeError::Descriptor(format!("missing key {k}"));
        let dims = Dims::new(
            nx.ok_or_else(|| missing("nx"))?,
            ny.ok_or_else(|| missing("ny"))?,
            nz.ok_or_else(|| missing("nz"))?,
        );
        dims.validate()?;
        Ok(Descriptor {
            dims,
            timesteps: timesteps.ok_or_else(|| missing("timesteps"))?,
            pattern: pattern.ok_or_else(|| missing("pattern"))?,
        })
    }
}

/// Reads `dir/volume.desc` and returns a file-backed dataset.
pub fn read_descriptor(dir: &Path) -> Result<VolumeDataset, VolumeError> {
    let descriptor = Descriptor::parse(&fs::read_to_string(dir.join(DESCRIPTOR_FILE))?)?;
    Ok(VolumeDataset {
        dims: descriptor.dims,
        timesteps: descriptor.timesteps,
        source: VolumeSource::Files {
            dir: dir.to_path_buf(),
            descriptor,
        },
    })
}

/// Writes every timestep of `dataset` plus the descriptor into `dir`.
pub fn write_dataset(dataset: &VolumeDataset, dir: &Path) -> Result<Descriptor, VolumeError> {
    fs::create_dir_all(dir)?;
    let descriptor = Descriptor {
        dims: dataset.dims,
        timesteps: dataset.timesteps,
        pattern: "t{t}.raw".into(),
    };
    for t in 0..dataset.timesteps {
        let v: Volume = dataset.load_local(t)?;
        fs::write(dir.join(descriptor.file_name(t)), v.to_le_bytes())?;
    }
    fs::write(dir.join(DESCRIPTOR_FILE), descriptor.to_text())?;
    Ok(descriptor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{synthesize, SynthKind};

    #[test]
    fn write_then_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synthesize(SynthKind::MovingBlob, Dims::new(6, 5, 4), 2);
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_descriptor(dir.path()).unwrap();
        assert_eq!(back.dims, ds.dims);
        assert_eq!(back.timesteps, 2);
        assert_eq!(back.load_local(1).unwrap(), ds.load_local(1).unwrap());
        let bytes = std::fs::read(dir.path().join("t0.raw")).unwrap();
        assert_eq!(bytes.len(), 6 * 5 * 4 * 4);
        assert_eq!(&bytes[..4], &ds.load_local(0).unwrap().data()[0].to_le_bytes());
    }

    #[test]
    fn descriptor_errors() {
        assert!(Descriptor::parse("nx=1\nny=1\n").is_err());
        assert!(Descriptor::parse("nx=a").is_err());
        assert!(Descriptor::parse("nx=0\nny=1\nnz=1\ntimesteps=1\npattern=x").is_err());
    }
}
