use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use corridor::backend::{self, BackendConfig, Mode, SlabSource, ViewerEndpoint};
use corridor::block_cache::{CacheClient, CacheServer, Storage, StoreConfig, DEFAULT_BLOCK_SIZE};
use corridor::event_log::{self, AnalyzeOptions, Collector, Emitter, Sink};
use corridor::orchestrator::{self, RunConfig, RunReport};
use corridor::viewer::{Viewer, ViewerConfig};
use corridor::volume::{read_descriptor, synthesize, write_dataset, Axis, Dims, SynthKind};

/// Distributed volume visualization pipeline.
#[derive(Parser)]
#[command(name = "corridor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one block-cache server.
    Cached(CachedArgs),
    /// Block-cache client operations.
    Cachectl {
        #[command(subcommand)]
        op: CachectlOp,
    },
    /// Run back-end workers against a cached dataset.
    Backend(BackendArgs),
    /// Run the viewer core.
    Viewer(ViewerArgs),
    /// Run the event-log collector.
    Evlogd(EvlogdArgs),
    /// Inspect event logs.
    Evlog {
        #[command(subcommand)]
        op: EvlogOp,
    },
    /// Launch every component for one experiment.
    Run(RunArgs),
    /// Compare a serial and an overlapped run report.
    Compare { a: PathBuf, b: PathBuf },
    /// Write a synthetic dataset as raw files.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CachedArgs {
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    #[arg(long)]
    port: u16,
    /// Keep blocks on disk; in memory when absent.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CachectlOp {
    /// Stripe one file across the servers.
    Ingest {
        name: String,
        file: PathBuf,
        #[arg(long)]
        servers: String,
        #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: u32,
    },
    /// Ingest a raw dataset directory, one cache dataset per timestep.
    IngestVolume {
        name: String,
        dir: PathBuf,
        #[arg(long)]
        servers: String,
        #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: u32,
        /// Keep the stored scalars instead of rescaling to [0, 1].
        #[arg(long)]
        no_normalize: bool,
    },
    /// Print a catalog entry.
    Lookup {
        name: String,
        #[arg(long)]
        servers: String,
    },
}

#[derive(Args)]
struct LogArgs {
    /// Collector address for event records.
    #[arg(long)]
    evlog: Option<SocketAddr>,
    /// Write event records to a file instead.
    #[arg(long, conflicts_with = "evlog")]
    evlog_file: Option<PathBuf>,
}

impl LogArgs {
    fn emitter(&self, program: &str) -> Emitter {
        let host = std::env::var("HOSTNAME").unwrap_or_else(|_| "localhost".into());
        let sink = match (&self.evlog, &self.evlog_file) {
            (Some(addr), _) => Sink::Collector { addr: *addr, spool: PathBuf::from(format!("{program}-spool.log")) },
            (_, Some(path)) => Sink::File(path.clone()),
            _ => Sink::Null,
        };
        Emitter::new(host, program, sink)
    }
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long)]
    workers: usize,
    #[arg(long)]
    cache: String,
    #[arg(long)]
    viewer: String,
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "serial")]
    mode: Mode,
    /// Milliseconds each load is padded to.
    #[arg(long, default_value_t = 0)]
    inject_load: u64,
    /// Milliseconds each render is padded to.
    #[arg(long, default_value_t = 0)]
    inject_render: u64,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long, default_value = "z")]
    axis: Axis,
    /// Comma-separated worker indices hosted by this process.
    #[arg(long, value_delimiter = ',')]
    local_workers: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: u32,
    #[command(flatten)]
    log: LogArgs,
}

#[derive(Args)]
struct ViewerArgs {
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    #[arg(long)]
    workers: usize,
    #[arg(long)]
    ui_port: Option<u16>,
    #[arg(long)]
    headless_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    snapshot_every: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    /// Exit once every worker has connected and closed.
    #[arg(long)]
    exit_when_idle: bool,
    #[command(flatten)]
    log: LogArgs,
}

#[derive(Args)]
struct EvlogdArgs {
    #[arg(long, default_value = "0.0.0.0")]
    host: String,
    #[arg(long)]
    port: u16,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvlogOp {
    /// Per-frame phase timing and ordering check.
    Analyze {
        file: PathBuf,
        /// Write the full report as JSON to this path ("-" for stdout).
        #[arg(long)]
        report: Option<String>,
        /// Clock correction, `host=microseconds`; repeatable.
        #[arg(long = "offset")]
        offsets: Vec<String>,
    },
    /// Frame lifeline chart as SVG.
    Plot {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// `key=value` override applied after the file; repeatable.
    #[arg(long = "set")]
    overrides: Vec<String>,
    /// Run serial and overlapped and compare them.
    #[arg(long)]
    matrix: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "moving-blob")]
    kind: SynthKind,
    #[arg(long, default_value = "64,64,64")]
    dims: Dims,
    #[arg(long, default_value_t = 10)]
    timesteps: usize,
    #[arg(long)]
    out: PathBuf,
}

const SUBCOMMANDS: [&str; 6] = ["cached", "cachectl", "backend", "viewer", "evlogd", "evlog"];

/// Invoked through a link named after a subcommand, behave as that subcommand.
fn args() -> Vec<String> {
    let mut args: Vec<String> = std::env::args().collect();
    let prog = args
        .first()
        .and_then(|a| Path::new(a).file_stem())
        .map(|s| s.to_string_lossy().into_owned());
    if let Some(p) = prog.filter(|p| SUBCOMMANDS.contains(&p.as_str())) {
        args.insert(1, p);
    }
    args
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse_from(args()).command {
        Command::Cached(a) => {
            let storage = a.data_dir.map_or(Storage::Memory, Storage::Dir);
            let server = CacheServer::spawn((a.host.as_str(), a.port), storage)
                .with_context(|| format!("binding {}:{}", a.host, a.port))?;
            log::info!("cache server on {}", server.local_addr());
            server.wait();
        }
        Command::Cachectl { op } => cachectl(op)?,
        Command::Backend(a) => backend(a)?,
        Command::Viewer(a) => viewer(a)?,
        Command::Evlogd(a) => {
            let c = Collector::bind((a.host.as_str(), a.port), &a.out)?;
            log::info!("collecting on {} into {}", c.local_addr(), a.out.display());
            loop {
                thread::sleep(Duration::from_secs(10));
                log::debug!("{} records", c.records_so_far());
            }
        }
        Command::Evlog { op } => evlog(op)?,
        Command::Run(a) => {
            let config = RunConfig::load(&a.config, &a.overrides)?;
            if a.matrix {
                let (s, o, cmp) = orchestrator::run_matrix(&config)?;
                println!("{}", serde_json::to_string_pretty(&cmp)?);
                if !(s.passed() && o.passed()) {
                    bail!("checks failed; see the reports in {}", config.out_dir.display());
                }
            } else {
                let r = orchestrator::run(&config)?;
                println!("{}", serde_json::to_string_pretty(&r)?);
                if !r.passed() {
                    bail!("checks failed");
                }
            }
        }
        Command::Compare { a, b } => {
            let cmp = orchestrator::compare(&RunReport::read(&a)?, &RunReport::read(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&cmp)?);
        }
        Command::Synth(a) => {
            let ds = synthesize(a.kind, a.dims, a.timesteps);
            let desc = write_dataset(&ds, &a.out)?;
            println!("wrote {} timesteps of {} to {}", desc.timesteps, desc.dims, a.out.display());
        }
    }
    Ok(())
}

fn client(servers: &str, block_size: u32) -> Result<CacheClient> {
    let mut store = StoreConfig::parse_servers(servers)?;
    store.block_size = block_size;
    Ok(CacheClient::new(store)?)
}

fn cachectl(op: CachectlOp) -> Result<()> {
    match op {
        CachectlOp::Ingest { name, file, servers, block_size } => {
            let f = std::fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?;
            let e = client(&servers, block_size)?.ingest(&name, std::io::BufReader::new(f))?;
            println!("{} bytes in {} blocks", e.total_bytes, e.block_count);
        }
        CachectlOp::IngestVolume { name, dir, servers, block_size, no_normalize } => {
            let mut ds = read_descriptor(&dir)?;
            if !no_normalize {
                ds = ds.normalized()?;
            }
            SlabSource::ingest(&client(&servers, block_size)?, &name, &ds)?;
            println!("{} timesteps of {}", ds.timesteps, ds.dims);
        }
        CachectlOp::Lookup { name, servers } => {
            let e = client(&servers, DEFAULT_BLOCK_SIZE)?.lookup(&name)?;
            println!("{e:?}");
        }
    }
    Ok(())
}

fn backend(a: BackendArgs) -> Result<()> {
    let source = SlabSource::from_cache(&client(&a.cache, a.block_size)?, &a.dataset)?;
    let config = BackendConfig {
        workers: a.workers,
        timesteps: a.timesteps,
        mode: a.mode,
        inject_load: Duration::from_millis(a.inject_load),
        inject_render: Duration::from_millis(a.inject_render),
        initial_axis: a.axis,
        local_workers: a.local_workers,
        ..Default::default()
    };
    let em = a.log.emitter("backend");
    let report = backend::run(&config, source, &ViewerEndpoint::Tcp(a.viewer), &em)?;
    em.finish();
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(why) = report.aborted {
        bail!("back end aborted: {why}");
    }
    Ok(())
}

fn viewer(a: ViewerArgs) -> Result<()> {
    let ui_listen = a.ui_port.map(|p| {
        let host = a.listen.rsplit_once(':').map_or("127.0.0.1", |(h, _)| h);
        format!("{host}:{p}")
    });
    let em = a.log.emitter("viewer");
    let v = Viewer::start(
        ViewerConfig {
            listen: a.listen,
            workers: a.workers,
            raster: (a.width, a.height),
            ui_listen,
            headless_out: a.headless_out,
            snapshot_every: a.snapshot_every,
            ..Default::default()
        },
        em.clone(),
    )?;
    log::info!("viewer on {}", v.local_addr());
    if let Some(ui) = v.ui_addr() {
        log::info!("ui bridge on ws://{ui}");
    }
    while !(a.exit_when_idle && v.wait_idle(Duration::from_secs(1))) {
        if !a.exit_when_idle {
            thread::sleep(Duration::from_secs(1));
        }
    }
    let summary = v.shutdown();
    em.finish();
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn evlog(op: EvlogOp) -> Result<()> {
    match op {
        EvlogOp::Analyze { file, report, offsets } => {
            let records = event_log::read_log(&file)?;
            let mut opts = AnalyzeOptions::default();
            for o in offsets {
                let (h, us) = o.split_once('=').context("offset must be host=microseconds")?;
                opts.host_offsets_us.insert(h.to_string(), us.parse()?);
            }
            let r = event_log::analyze(&records, &opts);
            let serial = event_log::serial_violations(&records);
            println!(
                "{} frames, wall {:.3} s, mean load {}, mean render {}, overlap {}, {} ordering violations, {} serial-order violations",
                r.frames.len(),
                r.wall_time_s,
                fmt_s(r.mean_load_s),
                fmt_s(r.mean_render_s),
                r.overlap_fraction.map_or("n/a".into(), |f| format!("{f:.3}")),
                r.violations.len(),
                serial.len(),
            );
            match report.as_deref() {
                Some("-") => println!("{}", serde_json::to_string_pretty(&r)?),
                Some(path) => std::fs::write(path, serde_json::to_string_pretty(&r)?)?,
                None => {}
            }
        }
        EvlogOp::Plot { file, out } => {
            let p = event_log::plot(&event_log::read_log(&file)?, &out)?;
            println!("{} lifelines written to {}", p.polylines.len(), out.display());
        }
    }
    Ok(())
}

fn fmt_s(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |s| format!("{:.1} ms", s * 1e3))
}
