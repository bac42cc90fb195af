//! PNG / PPM reading and PNG writing.
//!
//! Channels are mapped `v / 255` on load and `round_half_up(clamp(v) * 255)`
//! on save.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader, RgbImage};
use thiserror::Error;

use crate::image::ImageF;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: not a PNG or binary PPM file")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: failed to decode: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: unsupported bit depth ({detail}); only 8-bit channels are accepted")]
    UnsupportedBitDepth { path: PathBuf, detail: String },
    #[error("{path}: unsupported color model ({detail}); only RGB is accepted")]
    UnsupportedColorModel { path: PathBuf, detail: String },
    #[error("cannot write {path}: {message}")]
    Unwritable { path: PathBuf, message: String },
}

/// Loads an 8-bit RGB PNG or P6 PPM.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF, ImageIoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ImageIoError::Unreadable {
        path: path.to_owned(),
        source,
    })?;
    let reader = ImageReader::new(BufReader::new(file))
        .with_guessed_format()
        .map_err(|source| ImageIoError::Unreadable {
            path: path.to_owned(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        _ => {
            return Err(ImageIoError::UnsupportedFormat {
                path: path.to_owned(),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| ImageIoError::Decode {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let rgb = match decoded {
        DynamicImage::ImageRgb8(rgb) => rgb,
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgb32F(_) => {
            return Err(ImageIoError::UnsupportedBitDepth {
                path: path.to_owned(),
                detail: format!("{:?}", decoded.color()),
            })
        }
        other => {
            let color = other.color();
            return Err(if color.bytes_per_pixel() / color.channel_count() > 1 {
                ImageIoError::UnsupportedBitDepth {
                    path: path.to_owned(),
                    detail: format!("{color:?}"),
                }
            } else {
                ImageIoError::UnsupportedColorModel {
                    path: path.to_owned(),
                    detail: format!("{color:?}"),
                }
            });
        }
    };
    Ok(from_rgb8(&rgb))
}

/// Converts an 8-bit buffer with the `v / 255` map.
pub fn from_rgb8(rgb: &RgbImage) -> ImageF {
    let (w, h) = rgb.dimensions();
    let data = rgb
        .pixels()
        .map(|p| p.0.map(|v| v as f64 / 255.0))
        .collect();
    ImageF::new(h as usize, w as usize, data)
}

/// Quantizes one channel value: clamp to `[0, 1]`, scale, round half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn to_rgb8(img: &ImageF) -> RgbImage {
    let raw: Vec<u8> = img
        .pixels()
        .iter()
        .flat_map(|p| p.map(quantize))
        .collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer size matches dimensions")
}

/// Writes an 8-bit PNG. The file is written to a temporary sibling and
/// renamed into place.
pub fn save_image(img: &ImageF, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
    let path = path.as_ref();
    let unwritable = |message: String| ImageIoError::Unwritable {
        path: path.to_owned(),
        message,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| unwritable(e.to_string()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        to_rgb8(img)
            .write_to(&mut w, ImageFormat::Png)
            .map_err(|e| unwritable(e.to_string()))?;
    }
    tmp.persist(path).map_err(|e| unwritable(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_half_up() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn every_byte_survives_the_round_trip() {
        for b in 0..=255u8 {
            let v = b as f64 / 255.0;
            assert_eq!(quantize(v), b);
        }
        // Any value in [0,1] lands within half a step of its byte.
        for i in 0..=10_000 {
            let v = i as f64 / 10_000.0;
            let back = quantize(v) as f64 / 255.0;
            assert!((back - v).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = ImageF::from_fn(3, 4, |y, x| {
            [(y * 4 + x) as f64 / 11.0, 0.5, ((x * 7 + y) % 5) as f64 / 4.3]
        });
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.dims(), (3, 4));
        assert!(back.max_abs_diff(&img.clamp01()) <= 1.0 / 255.0);
    }

    #[test]
    fn one_pixel_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        RgbImage::from_raw(1, 1, vec![255, 0, 128])
            .unwrap()
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn black_ppm() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ppm");
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([0u8; 12]);
        std::fs::write(&path, bytes).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn rejects_sixteen_bit_and_gray() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("deep.png");
        image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(1, 1, vec![1u16, 2, 3])
            .unwrap()
            .save(&p16)
            .unwrap();
        assert!(matches!(
            load_image(&p16),
            Err(ImageIoError::UnsupportedBitDepth { .. })
        ));

        let pg = dir.path().join("gray.png");
        image::GrayImage::from_raw(1, 1, vec![9]).unwrap().save(&pg).unwrap();
        assert!(matches!(
            load_image(&pg),
            Err(ImageIoError::UnsupportedColorModel { .. })
        ));

        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(ImageIoError::Unreadable { .. })
        ));

        let txt = dir.path().join("notes.png");
        std::fs::write(&txt, b"hello").unwrap();
        assert!(load_image(&txt).is_err());
    }

    #[test]
    fn unwritable_path_is_reported() {
        let img = ImageF::filled(1, 1, [0.5; 3]);
        let err = save_image(&img, "/nonexistent-dir/for/sure/x.png").unwrap_err();
        assert!(matches!(err, ImageIoError::Unwritable { .. }));
    }
}
