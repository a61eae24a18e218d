//! Writes a synthetic style image and a toy-encoder text embedding.
//!
//!     cargo run --release -p stylestroke-cli --example demo_inputs -- DIR [CANVAS]
//!
//! The embedding is only meaningful for `--encoder toy` at the same canvas
//! size (the toy encoder's input size follows the canvas).

use std::path::PathBuf;

use stylestroke::demo;
use stylestroke::encoders::{EncoderChoice, Encoders};
use stylestroke::io::{encode_png, write_atomic};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: demo_inputs DIR [CANVAS]")?);
    let canvas: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(224);
    std::fs::create_dir_all(&dir)?;
    encode_png(&demo::style_image(256), &dir.join("style.png"))?;
    let choice = EncoderChoice::default();
    let encoders = Encoders::load(&choice, canvas)?;
    let text = demo::text_embedding(&*encoders.image)?;
    write_atomic(
        &dir.join("text.json"),
        text.to_json(&format!("{choice}@{canvas}"))?.as_bytes(),
    )?;
    encode_png(&demo::content_image(canvas), &dir.join("content.png"))?;
    println!("wrote style.png, content.png and text.json to {}", dir.display());
    Ok(())
}
