//! Regenerate the shipped corpus: `cargo run --example make_corpus -- <dir>`.

use std::path::PathBuf;

use helfrich::io::{write_labels, write_mesh};
use helfrich::shapes::standard_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus"));
    std::fs::create_dir_all(&dir)?;
    for entry in standard_corpus() {
        write_mesh(&dir.join(format!("{}.off", entry.name)), &entry.mesh)?;
        if let Some(labels) = &entry.labels {
            write_labels(&dir.join(format!("{}.labels", entry.name)), labels)?;
        }
        println!(
            "{:<18} V={:<6} F={}",
            entry.name,
            entry.mesh.n_vertices(),
            entry.mesh.n_faces()
        );
    }
    Ok(())
}
