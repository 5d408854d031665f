//! Image and label-map files.
//!
//! Images are read as 8- or 16-bit grayscale or RGB (alpha is dropped) and
//! normalized to `[0, 1]`. Written images are 8-bit with `round(v * 255)`
//! quantization after clamping to `[0, 1]`. Label maps are written as
//! indexed PNGs whose palette index is `label - 1`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use aitvseg::{ImageGrid, LabelMap, MultiChannelImage};
use image::DynamicImage;

use crate::CliError;

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

fn planar(rows: usize, cols: usize, samples: &[f64], channels: usize) -> Result<Vec<ImageGrid>, CliError> {
    (0..channels)
        .map(|c| {
            let data = samples.iter().skip(c).step_by(channels).copied().collect();
            ImageGrid::new(rows, cols, data).map_err(CliError::from)
        })
        .collect()
}

pub fn read_image(path: &Path) -> Result<MultiChannelImage, CliError> {
    let img = image::open(path).map_err(|e| io_error(path, e))?;
    let (cols, rows) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_)
    );
    let eight_bit = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_)
    );
    let (samples, channels): (Vec<f64>, usize) = match (gray, eight_bit) {
        (true, true) => (img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(), 1),
        (true, false) => (img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(), 1),
        (false, true) => (img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(), 3),
        (false, false) => (img.to_rgb16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(), 3),
    };
    let mut planes = planar(rows, cols, &samples, channels)?;
    if channels == 1 {
        Ok(MultiChannelImage::gray(planes.pop().expect("one plane")))
    } else {
        let b = planes.pop().expect("blue");
        let g = planes.pop().expect("green");
        let r = planes.pop().expect("red");
        Ok(MultiChannelImage::rgb(r, g, b)?)
    }
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a gray or RGB image as an 8-bit PNG.
pub fn write_image(path: &Path, img: &MultiChannelImage) -> Result<(), CliError> {
    let (rows, cols) = img.shape();
    let d = img.num_channels();
    let color = match d {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => {
            return Err(CliError::Runtime(format!(
                "cannot write a {d}-channel image to {}",
                path.display()
            )))
        }
    };
    let mut data = Vec::with_capacity(rows * cols * d);
    for idx in 0..rows * cols {
        data.extend(img.pixel(idx).into_iter().map(quantize));
    }
    write_png(path, rows, cols, color, None, &data)
}

fn palette(k: usize) -> Vec<u8> {
    (0..k)
        .flat_map(|i| {
            let v = if k == 1 { 0 } else { ((i * 255) as f64 / (k - 1) as f64).round() as u8 };
            [v, v, v]
        })
        .collect()
}

/// Indexed 8-bit PNG with `index = label - 1` and a gray-ramp palette.
pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<(), CliError> {
    let k = labels.num_labels();
    if k > 256 {
        return Err(CliError::Runtime(format!("{k} labels do not fit an 8-bit palette")));
    }
    let data: Vec<u8> = labels.as_slice().iter().map(|&l| (l - 1) as u8).collect();
    write_png(
        path,
        labels.rows(),
        labels.cols(),
        png::ColorType::Indexed,
        Some(palette(k)),
        &data,
    )
}

fn write_png(
    path: &Path,
    rows: usize,
    cols: usize,
    color: png::ColorType,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<(), CliError> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), cols as u32, rows as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    if let Some(p) = palette {
        enc.set_palette(p);
    }
    let mut writer = enc.write_header().map_err(|e| io_error(path, e))?;
    writer.write_image_data(data).map_err(|e| io_error(path, e))?;
    writer.finish().map_err(|e| io_error(path, e))
}

/// Reads a label map. Each distinct pixel value (palette index, gray level or
/// RGB triple) becomes one label, numbered by first appearance in row-major
/// order.
pub fn read_labels(path: &Path) -> Result<LabelMap, CliError> {
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let (rows, cols, keys) = if is_png {
        read_png_keys(path)?
    } else {
        let img = image::open(path).map_err(|e| io_error(path, e))?;
        let (cols, rows) = (img.width() as usize, img.height() as usize);
        let rgb = img.to_rgb16().into_raw();
        let keys = rgb
            .chunks_exact(3)
            .map(|p| (p[0] as u64) << 32 | (p[1] as u64) << 16 | p[2] as u64)
            .collect();
        (rows, cols, keys)
    };
    LabelMap::from_values(rows, cols, &keys).map_err(CliError::from)
}

/// Raw PNG samples without palette expansion, one key per pixel.
fn read_png_keys(path: &Path) -> Result<(usize, usize, Vec<u64>), CliError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| io_error(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| io_error(path, "image too large"))?];
    let info = reader.next_frame(&mut buf).map_err(|e| io_error(path, e))?;
    let (cols, rows) = (info.width as usize, info.height as usize);
    let samples = info.color_type.samples();
    let bits = info.bit_depth as usize;
    // Alpha carries no label information.
    let used = match samples {
        2 => 1,
        s => s.min(3),
    };
    let mut keys = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = &buf[r * info.line_size..(r + 1) * info.line_size];
        for c in 0..cols {
            let mut key = 0u64;
            for s in 0..used {
                let idx = c * samples + s;
                let v = match bits {
                    16 => u16::from_be_bytes([line[2 * idx], line[2 * idx + 1]]) as u64,
                    8 => line[idx] as u64,
                    _ => {
                        let per_byte = 8 / bits;
                        let byte = line[idx / per_byte];
                        let shift = 8 - bits * (idx % per_byte + 1);
                        ((byte >> shift) & ((1 << bits) - 1) as u8) as u64
                    }
                };
                key = key << 16 | v;
            }
            keys.push(key);
        }
    }
    Ok((rows, cols, keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quantized(rows: usize, cols: usize, levels: &[u8]) -> ImageGrid {
        ImageGrid::new(rows, cols, levels.iter().map(|&v| v as f64 / 255.0).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gray_round_trip(rows in 1usize..9, cols in 1usize..9, seed in any::<u64>()) {
            let levels: Vec<u8> = (0..rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 7) >> 13) as u8).collect();
            let img = MultiChannelImage::gray(quantized(rows, cols, &levels));
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("g.png");
            write_image(&path, &img).unwrap();
            prop_assert_eq!(read_image(&path).unwrap(), img);
        }

        #[test]
        fn label_round_trip(rows in 1usize..9, cols in 1usize..9, k in 1u32..6, seed in any::<u64>()) {
            let raw: Vec<u32> = (0..rows * cols).map(|i| (seed.rotate_left(i as u32) % k as u64) as u32 + 1).collect();
            let Ok(labels) = LabelMap::new(rows, cols, raw) else { return Ok(()) };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("l.png");
            write_labels(&path, &labels).unwrap();
            let back = read_labels(&path).unwrap();
            // Renumbering by first appearance is a relabeling of the same partition.
            let keys: Vec<u64> = labels.as_slice().iter().map(|&l| l as u64).collect();
            prop_assert_eq!(back, LabelMap::from_values(rows, cols, &keys).unwrap());
        }
    }

    #[test]
    fn rgb_round_trip() {
        let r = quantized(2, 2, &[0, 255, 128, 7]);
        let g = quantized(2, 2, &[1, 2, 3, 4]);
        let b = quantized(2, 2, &[250, 0, 64, 32]);
        let img = MultiChannelImage::rgb(r, g, b).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn sixteen_bit_gray_is_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g16.png");
        let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(2, 1, vec![0u16, 65535]).unwrap();
        buf.save(&path).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.channel(0).as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn gray_label_png_is_read_by_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let buf = image::GrayImage::from_raw(3, 1, vec![200, 10, 200]).unwrap();
        buf.save(&path).unwrap();
        let labels = read_labels(&path).unwrap();
        assert_eq!(labels.as_slice(), &[1, 2, 1]);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_image(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(0.5), 128);
    }
}
