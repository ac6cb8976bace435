//! Regenerates `maps/scenario*.map` from the map generator.

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("maps");
    for id in 0..poac_core::scenarios::BUNDLED_COUNT {
        let text = poac_core::scenarios::bundled_map_text(id).expect("bundled id");
        let path = dir.join(format!("scenario{id}.map"));
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
