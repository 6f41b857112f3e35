//! Regenerates the bundled assets: stroke-font files and the demo style
//! corpus. Run from the workspace root:
//!
//! ```bash
//! cargo run -p dsfusion --example gen_assets
//! ```

use dsfusion::demo::write_demo_corpus;
use dsfusion::glyph::builtin::builtin_fonts;
use dsfusion::glyph::save_stroke_font;

fn main() -> dsfusion::Result<()> {
    std::fs::create_dir_all("assets/fonts")?;
    for font in builtin_fonts() {
        let path = format!("assets/fonts/{}.strokefont", font.name);
        save_stroke_font(&font, &path)?;
        println!("wrote {path} ({} glyphs)", font.glyphs.len());
    }
    write_demo_corpus("assets/demo-style", 20260810, 25)?;
    println!("wrote assets/demo-style (25 images)");
    Ok(())
}
