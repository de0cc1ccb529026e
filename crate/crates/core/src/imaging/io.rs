//! 8-bit PNG reading and writing, grayscale or RGB only.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{ImageTensor, ImagingError};

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor, ImagingError> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ImagingError::MissingFile(path.to_path_buf()))
        }
        Err(source) => {
            return Err(ImagingError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let corrupt = |reason: String| ImagingError::CorruptStream {
        path: path.to_path_buf(),
        reason,
    };
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| corrupt(e.to_string()))?;
    let (width, height, depth, color) = {
        let info = reader.info();
        (info.width as usize, info.height as usize, info.bit_depth, info.color_type)
    };
    if depth != png::BitDepth::Eight {
        return Err(ImagingError::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: depth as u8,
        });
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(ImagingError::UnsupportedColorType {
                path: path.to_path_buf(),
                color: format!("{other:?}"),
            })
        }
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| corrupt(e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    let row = width * channels;
    let mut pixels = Vec::with_capacity(height * row);
    for line in bytes.chunks(frame.line_size).take(height) {
        pixels.extend(line[..row].iter().map(|&b| b as f64 / 255.0));
    }
    ImageTensor::new(height, width, channels, pixels)
}

pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| quantize(v)).collect();
    let color = if img.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    };
    write_png(path.as_ref(), img.width(), img.height(), color, &bytes)
}

/// Writes a boolean mask as a black/white grayscale PNG.
pub fn save_mask(mask: &[bool], height: usize, width: usize, path: impl AsRef<Path>) -> Result<(), ImagingError> {
    assert_eq!(mask.len(), height * width, "mask size mismatch");
    let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path.as_ref(), width, height, png::ColorType::Grayscale, &bytes)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<(), ImagingError> {
    let io_err = |source| ImagingError::Io {
        path: path.to_path_buf(),
        source,
    };
    let enc_err = |e: png::EncodingError| ImagingError::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let file = File::create(path).map_err(io_err)?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(enc_err)?;
    writer.write_image_data(bytes).map_err(enc_err)?;
    writer.finish().map_err(enc_err)
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
