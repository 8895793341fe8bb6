//! Stripe a file over three in-memory cache servers and read it back in
//! ranges that cross block boundaries.

use anyhow::{ensure, Result};
use corridor::block_cache::{CacheClient, CacheServer, Storage, StoreConfig};

fn main() -> Result<()> {
    let servers: Vec<CacheServer> = (0..3)
        .map(|_| CacheServer::spawn("127.0.0.1:0", Storage::Memory))
        .collect::<std::io::Result<_>>()?;
    let addrs = servers.iter().map(|s| s.local_addr().to_string()).collect();
    let client = CacheClient::new(StoreConfig::new(addrs, 4096)?)?;

    let data: Vec<u8> = (0..100_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 24) as u8).collect();
    let entry = client.ingest_bytes("demo", &data)?;
    println!("{} bytes as {} blocks of {} over {} servers", entry.total_bytes, entry.block_count, entry.block_size, entry.stripe_count);

    let mut h = client.open("demo")?;
    for (off, len) in [(0u64, 10usize), (4090, 20), (12_000, 9000), (99_990, 10)] {
        let got = h.read(off, len)?;
        ensure!(got == data[off as usize..off as usize + len], "mismatch at {off}");
        println!("read {len:>5} bytes at {off:>6}: ok");
    }
    let batch = h.read_many(&[(1, 1), (50_000, 4096), (8191, 2)])?;
    println!("batched read of {} ranges: {} bytes", batch.len(), batch.iter().map(Vec::len).sum::<usize>());
    for (i, s) in servers.iter().enumerate() {
        println!("server {i} saw {} requests", s.access_log().len());
    }
    Ok(())
}
