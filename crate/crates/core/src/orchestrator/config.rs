use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::backend::Mode;
use crate::block_cache::DEFAULT_BLOCK_SIZE;
use crate::volume::{decompose, Axis, Dims, SynthKind};

use super::OrchestratorError;

/// What the run renders.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic { kind: SynthKind, dims: Dims },
    /// A directory of raw timestep files with a descriptor.
    Files(PathBuf),
}

/// One experiment: every component, its endpoints and the injected costs.
///
/// Ports of 0 are assigned by the OS. The text form is one `key = value`
/// per line, `#` starts a comment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub name: String,
    pub servers: usize,
    pub workers: usize,
    pub timesteps: usize,
    pub mode: Mode,
    pub inject_load: Duration,
    pub inject_render: Duration,
    pub host: String,
    /// Either empty (all ephemeral) or one port per server.
    pub cache_ports: Vec<u16>,
    pub viewer_port: u16,
    pub collector_port: u16,
    pub ui_port: Option<u16>,
    pub out_dir: PathBuf,
    pub block_size: u32,
    pub raster: (usize, usize),
    pub snapshot_every: Option<usize>,
    /// Keep cache blocks on disk under the output directory.
    pub persist_cache: bool,
    pub initial_axis: Axis,
    /// Hard limit on the rendering phase.
    pub timeout: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSpec::Synthetic { kind: SynthKind::MovingBlob, dims: Dims::cube(32) },
            name: "volume".into(),
            servers: 2,
            workers: 2,
            timesteps: 5,
            mode: Mode::Serial,
            inject_load: Duration::ZERO,
            inject_render: Duration::ZERO,
            host: "127.0.0.1".into(),
            cache_ports: Vec::new(),
            viewer_port: 0,
            collector_port: 0,
            ui_port: None,
            out_dir: PathBuf::from("run-out"),
            block_size: DEFAULT_BLOCK_SIZE,
            raster: (256, 256),
            snapshot_every: None,
            persist_cache: false,
            initial_axis: Axis::Z,
            timeout: Duration::from_secs(600),
        }
    }
}

/// Keys that may differ between two runs being compared.
pub const RUN_LOCAL_KEYS: [&str; 6] = ["mode", "out_dir", "cache_ports", "viewer_port", "collector_port", "ui_port"];

fn bad(key: &str, value: &str, why: impl std::fmt::Display) -> OrchestratorError {
    OrchestratorError::Config(format!("{key} = {value:?}: {why}"))
}

fn ms(d: Duration) -> String {
    format!("{}", d.as_secs_f64() * 1e3)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, OrchestratorError> {
        let mut c = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| OrchestratorError::Config(format!("line {}: expected key = value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    /// Reads a config file, then applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, OrchestratorError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OrchestratorError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = RunConfig::parse(&text)?;
        c.apply_overrides(overrides)?;
        Ok(c)
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), OrchestratorError> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| OrchestratorError::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), OrchestratorError> {
        let num = |v: &str| v.parse::<usize>().map_err(|e| bad(key, v, e));
        let port = |v: &str| v.parse::<u16>().map_err(|e| bad(key, v, e));
        let millis = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|m| m.is_finite() && *m >= 0.0)
                .map(|m| Duration::from_secs_f64(m / 1e3))
                .ok_or_else(|| bad(key, v, "expected non-negative milliseconds"))
        };
        match key {
            "dataset" => {
                self.dataset = match value.strip_prefix("files:") {
                    Some(dir) => DatasetSpec::Files(PathBuf::from(dir)),
                    None => {
                        let kind = value.parse::<SynthKind>().map_err(|e| bad(key, value, e))?;
                        let dims = match &self.dataset {
                            DatasetSpec::Synthetic { dims, .. } => *dims,
                            DatasetSpec::Files(_) => RunConfig::default().synthetic_dims(),
                        };
                        DatasetSpec::Synthetic { kind, dims }
                    }
                }
            }
            "dims" => {
                let d = value.parse::<Dims>().map_err(|e| bad(key, value, e))?;
                match &mut self.dataset {
                    DatasetSpec::Synthetic { dims, .. } => *dims = d,
                    DatasetSpec::Files(_) => return Err(bad(key, value, "dims only apply to synthetic datasets")),
                }
            }
            "name" => self.name = value.to_string(),
            "servers" => self.servers = num(value)?,
            "workers" => self.workers = num(value)?,
            "timesteps" => self.timesteps = num(value)?,
            "mode" => self.mode = value.parse().map_err(|e| bad(key, value, e))?,
            "inject_load_ms" => self.inject_load = millis(value)?,
            "inject_render_ms" => self.inject_render = millis(value)?,
            "host" => self.host = value.to_string(),
            "cache_ports" => {
                self.cache_ports = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|p| port(p.trim())).collect::<Result<_, _>>()?
                }
            }
            "viewer_port" => self.viewer_port = port(value)?,
            "collector_port" => self.collector_port = port(value)?,
            "ui_port" => self.ui_port = if value.is_empty() || value == "none" { None } else { Some(port(value)?) },
            "out_dir" => self.out_dir = PathBuf::from(value),
            "block_size" => self.block_size = value.parse().map_err(|e| bad(key, value, e))?,
            "raster" => {
                let (w, h) = value.split_once(['x', ',']).ok_or_else(|| bad(key, value, "expected WxH"))?;
                self.raster = (num(w.trim())?, num(h.trim())?);
            }
            "snapshot_every" => self.snapshot_every = match num(value)? {
                0 => None,
                k => Some(k),
            },
            "persist_cache" => self.persist_cache = value.parse().map_err(|e| bad(key, value, e))?,
            "initial_axis" => self.initial_axis = value.parse().map_err(|e| bad(key, value, e))?,
            "timeout_s" => {
                self.timeout = value
                    .parse::<f64>()
                    .ok()
                    .filter(|s| s.is_finite() && *s > 0.0)
                    .map(Duration::from_secs_f64)
                    .ok_or_else(|| bad(key, value, "expected positive seconds"))?
            }
            _ => return Err(OrchestratorError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn synthetic_dims(&self) -> Dims {
        match &self.dataset {
            DatasetSpec::Synthetic { dims, .. } => *dims,
            DatasetSpec::Files(_) => Dims::cube(32),
        }
    }

    /// Every setting as text, in the same form [`RunConfig::parse`] reads.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match &self.dataset {
            DatasetSpec::Synthetic { kind, dims } => {
                put("dataset", kind.to_string());
                put("dims", format!("{},{},{}", dims.nx, dims.ny, dims.nz));
            }
            DatasetSpec::Files(dir) => put("dataset", format!("files:{}", dir.display())),
        }
        put("name", self.name.clone());
        put("servers", self.servers.to_string());
        put("workers", self.workers.to_string());
        put("timesteps", self.timesteps.to_string());
        put("mode", self.mode.to_string());
        put("inject_load_ms", ms(self.inject_load));
        put("inject_render_ms", ms(self.inject_render));
        put("host", self.host.clone());
        put("cache_ports", self.cache_ports.iter().map(u16::to_string).collect::<Vec<_>>().join(","));
        put("viewer_port", self.viewer_port.to_string());
        put("collector_port", self.collector_port.to_string());
        put("ui_port", self.ui_port.map_or("none".into(), |p| p.to_string()));
        put("out_dir", self.out_dir.display().to_string());
        put("block_size", self.block_size.to_string());
        put("raster", format!("{}x{}", self.raster.0, self.raster.1));
        put("snapshot_every", self.snapshot_every.unwrap_or(0).to_string());
        put("persist_cache", self.persist_cache.to_string());
        put("initial_axis", self.initial_axis.to_string());
        put("timeout_s", self.timeout.as_secs_f64().to_string());
        m
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), OrchestratorError> {
        let err = |m: String| Err(OrchestratorError::Config(m));
        if self.servers == 0 || self.workers == 0 || self.timesteps == 0 {
            return err(format!(
                "servers, workers and timesteps must be at least 1 (got S={}, P={}, N={})",
                self.servers, self.workers, self.timesteps
            ));
        }
        if self.name.is_empty() || self.name.contains('@') {
            return err(format!("dataset name {:?} must be non-empty and free of '@'", self.name));
        }
        if !self.cache_ports.is_empty() && self.cache_ports.len() != self.servers {
            return err(format!("{} cache ports given for {} servers", self.cache_ports.len(), self.servers));
        }
        let mut seen = HashSet::new();
        let fixed = self
            .cache_ports
            .iter()
            .chain([&self.viewer_port, &self.collector_port])
            .chain(self.ui_port.iter())
            .filter(|&&p| p != 0);
        for &p in fixed {
            if !seen.insert(p) {
                return err(format!("port {p} is assigned to more than one component"));
            }
        }
        if self.block_size == 0 {
            return err("block size must be positive".into());
        }
        if self.raster.0 == 0 || self.raster.1 == 0 || self.snapshot_every == Some(0) {
            return err("raster size and snapshot interval must be positive".into());
        }
        if let DatasetSpec::Synthetic { dims, .. } = &self.dataset {
            dims.validate().map_err(|e| OrchestratorError::Config(e.to_string()))?;
            decompose(*dims, self.initial_axis, self.workers).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let c = RunConfig::parse(
            "# experiment\ndataset = gaussian-blob\ndims = 16,8,4\nservers=3\nworkers = 2\n\
             mode = overlapped\ninject_load_ms = 12.5\ncache_ports = 9001,9002,9003\nui_port = 9010\n",
        )
        .unwrap();
        assert_eq!(c.dataset, DatasetSpec::Synthetic { kind: SynthKind::GaussianBlob, dims: Dims::new(16, 8, 4) });
        assert_eq!(c.mode, Mode::Overlapped);
        assert_eq!(c.inject_load, Duration::from_micros(12_500));
        assert_eq!(c.cache_ports, vec![9001, 9002, 9003]);
        c.validate().unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn overrides_apply_after_file() {
        let mut c = RunConfig::parse("workers = 4\n").unwrap();
        c.apply_overrides(&["workers=1".into(), "dataset=files:/data/v".into()]).unwrap();
        assert_eq!(c.workers, 1);
        assert_eq!(c.dataset, DatasetSpec::Files("/data/v".into()));
        assert!(c.apply_overrides(&["dims=4".into()]).is_err());
        assert!(c.apply_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::parse("frobnicate = 1").is_err());
        assert!(RunConfig::parse("workers").is_err());
        assert!(RunConfig::parse("inject_load_ms = -3").is_err());
        for text in [
            "workers = 0",
            "servers = 0",
            "timesteps = 0",
            "viewer_port = 9000\ncollector_port = 9000",
            "servers = 2\ncache_ports = 9000",
            "servers = 1\ncache_ports = 9000\nui_port = 9000",
            "dims = 4\nworkers = 5",
            "name = a@b",
        ] {
            assert!(RunConfig::parse(text).unwrap().validate().is_err(), "{text}");
        }
    }
}
