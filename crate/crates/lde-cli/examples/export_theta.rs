//! Regenerates assets/theta.ldec (the fixed perceptual-extractor weights).

use std::path::PathBuf;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("assets/theta.ldec"));
    let ck = lde_cli::commands::theta_checkpoint();
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out, ck.encode())?;
    println!("wrote {} ({} tensors)", out.display(), ck.tensors.len());
    Ok(())
}
