//! Simulate a small herd, write it as PGM files and read it back.
//!
//! cargo run --release --example generate_herd -- /tmp/herd

use herdmetric::coatgen::{generate_herd, load_herd, save_herd, HerdConfig};

fn main() -> herdmetric::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "herd_example".into());
    let config = HerdConfig::new(4, 20, 7);
    let herd = generate_herd(&config)?;

    for id in 0..config.num_identities as u32 {
        let first = herd.iter().find(|i| i.identity_id == id).unwrap();
        let mean = first.grid.data.iter().sum::<f64>() / first.grid.data.len() as f64;
        println!("identity {id} ({}): mean intensity {mean:.3}", first.source_tag);
    }

    let manifest = save_herd(dir.as_ref(), &config, &herd)?;
    let (_, loaded) = load_herd(dir.as_ref())?;
    println!(
        "wrote {} instances to {dir}; reloaded {} (PGM quantization only)",
        manifest.instances.len(),
        loaded.len()
    );
    Ok(())
}
