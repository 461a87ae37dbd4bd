//! 8-bit images and binary masks on disk.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

/// Interleaved 8-bit samples, one or three channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    channels: u8,
    samples: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, channels: u8, samples: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Value(format!("{channels} channels; only 1 or 3 are supported")));
        }
        if samples.len() != width as usize * height as usize * channels as usize {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height}x{channels} image",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn from_gray(gray: &Grid<u8>) -> Self {
        Self {
            width: gray.width() as u32,
            height: gray.height() as u32,
            channels: 1,
            samples: gray.as_slice().to_vec(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    /// Luminance (BT.601 weights for RGB) in the 0..=255 range.
    pub fn luminance<S: Scalar>(&self) -> Grid<S> {
        let (w, h) = (self.width as usize, self.height as usize);
        match self.channels {
            1 => Grid::from_vec(h, w, self.samples.iter().map(|v| S::of(f64::from(*v))).collect())
                .expect("sample count checked at construction"),
            _ => {
                let values = self
                    .samples
                    .chunks_exact(3)
                    .map(|p| {
                        S::of(0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
                    })
                    .collect();
                Grid::from_vec(h, w, values).expect("sample count checked at construction")
            }
        }
    }
}

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::open(path)?;
    Ok(match img {
        DynamicImage::ImageLuma8(g) => {
            let (w, h) = g.dimensions();
            ImageBuffer::new(w, h, 1, g.into_raw())?
        }
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            let g = img.to_luma8();
            let (w, h) = g.dimensions();
            ImageBuffer::new(w, h, 1, g.into_raw())?
        }
        other => {
            let rgb = other.to_rgb8();
            let (w, h) = rgb.dimensions();
            ImageBuffer::new(w, h, 3, rgb.into_raw())?
        }
    })
}

pub fn write_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match img.channels {
        1 => GrayImage::from_raw(img.width, img.height, img.samples.clone())
            .expect("sample count checked at construction")
            .save(path)?,
        _ => RgbImage::from_raw(img.width, img.height, img.samples.clone())
            .expect("sample count checked at construction")
            .save(path)?,
    }
    Ok(())
}

fn mask_bytes(mask: &Grid<bool>) -> Vec<u8> {
    mask.as_slice().iter().map(|v| if *v { 255 } else { 0 }).collect()
}

/// Writes a mask as an 8-bit grayscale PNG with values 0 and 255.
pub fn write_mask_png(mask: &Grid<bool>, path: impl AsRef<Path>) -> Result<()> {
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask_bytes(mask))
        .expect("mask buffer has width*height bytes")
        .save(path.as_ref())?;
    Ok(())
}

/// Writes a mask as binary PGM (P5, maxval 255).
pub fn write_mask_pgm(mask: &Grid<bool>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask_bytes(mask));
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Reads any image as a mask: luminance above 127 is foreground.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Grid<bool>> {
    let img = read_png(path)?;
    Ok(img.luminance::<f32>().map(|v| *v > 127.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sample_counts() {
        assert!(ImageBuffer::new(2, 2, 1, vec![0; 3]).is_err());
        assert!(ImageBuffer::new(2, 2, 4, vec![0; 16]).is_err());
    }

    #[test]
    fn mask_png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mask = Grid::from_fn(5, 7, |i, j| (i + j) % 3 == 0);
        let png = dir.path().join("m.png");
        write_mask_png(&mask, &png).unwrap();
        assert_eq!(read_mask_png(&png).unwrap(), mask);

        let pgm = dir.path().join("m.pgm");
        write_mask_pgm(&mask, &pgm).unwrap();
        let bytes = fs::read(&pgm).unwrap();
        assert!(bytes.starts_with(b"P5\n7 5\n255\n"));
        assert_eq!(bytes.len(), 11 + 35);
    }

    #[test]
    fn rgb_luminance() {
        let img = ImageBuffer::new(1, 1, 3, vec![255, 255, 255]).unwrap();
        assert!((img.luminance::<f64>()[(0, 0)] - 255.0).abs() < 1e-9);
    }
}
