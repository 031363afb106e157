//! Writes a synthetic OHLCV CSV whose close follows a known NARX teacher.
//!
//! ```text
//! cargo run -p narx --example synthetic_ohlcv -- out.csv [rows] [seed] [noise_fraction]
//! ```

use std::fs::File;
use std::io::BufWriter;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .ok_or("usage: synthetic_ohlcv OUT.csv [rows] [seed] [noise_fraction]")?;
    let rows = args.next().map_or(Ok(1000), |s| s.parse())?;
    let seed = args.next().map_or(Ok(17), |s| s.parse())?;
    let noise = args.next().map_or(Ok(0.02), |s| s.parse())?;
    let series = narx::synthetic::ohlcv(rows, seed, noise);
    narx::data::write_ohlcv(&series.frame, BufWriter::new(File::create(&path)?))?;
    eprintln!("wrote {rows} rows to {path} (noise std {:.3e})", series.noise_std);
    Ok(())
}
