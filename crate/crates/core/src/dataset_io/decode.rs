use std::path::Path;

use image::{ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

/// Decodes a PNG or JPEG into 8-bit RGB; gray sources are expanded to three channels.
pub fn decode_image(path: &Path) -> Result<ImageBuffer> {
    let decode_err = |source| Error::Decode {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let rgb = reader.decode().map_err(decode_err)?.into_rgb8();
    let (w, h) = rgb.dimensions();
    ImageBuffer::new(w, h, 3, rgb.into_raw())
}

/// Lossless PNG; one-channel buffers are written as 8-bit gray.
pub fn write_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let color = match img.channels() {
        1 => ExtendedColorType::L8,
        _ => ExtendedColorType::Rgb8,
    };
    image::save_buffer_with_format(
        path,
        img.data(),
        img.width(),
        img.height(),
        color,
        ImageFormat::Png,
    )
    .map_err(|source| Error::Encode {
        path: path.to_path_buf(),
        source,
    })
}
