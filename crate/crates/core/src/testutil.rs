//! Fixtures shared by unit and integration tests across the workspace.

use std::path::Path;

use image::{ImageBuffer, Rgb};

/// PNG of a solid colour. Encoding is deterministic for a given input.
pub fn png_bytes(width: u32, height: u32, rgb: [u8; 3]) -> Vec<u8> {
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_pixel(width, height, Rgb(rgb));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("png encode");
    out.into_inner()
}

/// The 1x1 red test image.
pub fn red_pixel_png() -> Vec<u8> {
    png_bytes(1, 1, [255, 0, 0])
}

/// Writes `count` distinct single-colour frames named `frame_NNNNNN.png`.
pub fn write_frame_dir(dir: &Path, count: usize) {
    std::fs::create_dir_all(dir).expect("create frame dir");
    for i in 0..count {
        let shade = (i * 23 % 256) as u8;
        let png = png_bytes(2, 2, [shade, 255 - shade, (i % 7) as u8 * 30]);
        std::fs::write(dir.join(crate::captioning::frame_file_name(i)), png).expect("write frame");
    }
}
