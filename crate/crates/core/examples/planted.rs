//! Writes the planted-direction benchmark as loader-ready TSV files.
//!
//! ```text
//! cargo run --release -p mgkan --example planted -- OUT_DIR [SEED]
//! ```

use std::path::PathBuf;

use mgkan::synthetic::{planted, to_tsv, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: planted OUT_DIR [SEED]")?);
    let mut cfg = PlantedConfig::default();
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse()?;
    }
    let p = planted(&cfg)?;
    let (edges, features) = to_tsv(&p);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("edges.tsv"), edges)?;
    std::fs::write(dir.join("features.tsv"), features)?;
    println!("{} drugs, {} edges -> {}", p.graph.n_drugs(), p.graph.n_edges(), dir.display());
    Ok(())
}
