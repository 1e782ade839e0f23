//! Equirectangular rasters: PNG and raw-float I/O, longitude rotation,
//! viewport extraction and resizing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::camera::{nfov_sampling_grid, NFoVCamera};
use crate::autodiff::kernels::{bilinear_taps, GridCoord};
use crate::error::{Error, Result};

/// H×W×C float raster under the crate's longitude/latitude pixel convention.
/// PNG-backed images hold values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct EquirectImage {
    pub w: usize,
    pub h: usize,
    pub c: usize,
    pub data: Vec<f32>,
}

impl EquirectImage {
    pub fn new(w: usize, h: usize, c: usize) -> Self {
        EquirectImage { w, h, c, data: vec![0.0; w * h * c] }
    }

    pub fn from_data(w: usize, h: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != w * h * c {
            return Err(Error::InvalidArg(format!(
                "image {w}x{h}x{c} expects {} samples, got {}",
                w * h * c,
                data.len()
            )));
        }
        Ok(EquirectImage { w, h, c, data })
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let base = (v * self.w + u) * self.c;
        &self.data[base..base + self.c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, u: usize, v: usize) -> &mut [f32] {
        let base = (v * self.w + u) * self.c;
        &mut self.data[base..base + self.c]
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        EquirectImage::from_data(w, h, 3, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if self.c != 3 {
            return Err(Error::InvalidArg(format!("PNG output needs 3 channels, have {}", self.c)));
        }
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = image::RgbImage::from_raw(self.w as u32, self.h as u32, bytes)
            .ok_or_else(|| Error::InvalidArg("raster dimensions do not match buffer".into()))?;
        buf.save(path)?;
        Ok(())
    }

    /// Raw dump: W, H, C as little-endian 32-bit integers, then the samples
    /// as little-endian f32. Bit-exact, used by tests and as the ingestion
    /// format for externally computed feature maps.
    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for dim in [self.w as u32, self.h as u32, self.c as u32] {
            out.write_all(&dim.to_le_bytes())?;
        }
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut dims = [0u8; 12];
        reader.read_exact(&mut dims)?;
        let w = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
        let c = u32::from_le_bytes(dims[8..12].try_into().unwrap()) as usize;
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        if bytes.len() != w * h * c * 4 {
            return Err(Error::InvalidArg(format!(
                "raw dump payload is {} bytes, expected {}",
                bytes.len(),
                w * h * c * 4
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        EquirectImage::from_data(w, h, c, data)
    }

    /// Bilinear resize with longitude wrap. Used by the benchmark harness.
    pub fn resize(&self, new_w: usize, new_h: usize) -> EquirectImage {
        let mut out = EquirectImage::new(new_w, new_h, self.c);
        for v in 0..new_h {
            // Map pixel centers between the two latitude grids.
            let src_v = (v as f64 + 0.5) * self.h as f64 / new_h as f64 - 0.5;
            for u in 0..new_w {
                let src_u = (u as f64 + 0.5) * self.w as f64 / new_w as f64 - 0.5;
                let taps = bilinear_taps(GridCoord::new(0, src_u, src_v), self.h, self.w);
                let mut acc = vec![0.0f64; self.c];
                for (row, col, wt) in taps {
                    for (a, &s) in acc.iter_mut().zip(self.pixel(col, row)) {
                        *a += wt * s as f64;
                    }
                }
                for (o, a) in out.pixel_mut(u, v).iter_mut().zip(acc) {
                    *o = a as f32;
                }
            }
        }
        out
    }
}

/// Cyclic column shift: column `shift` of the input becomes column 0 of the
/// output, i.e. the view rotates toward higher longitudes. Lossless.
pub fn rotate_longitude(img: &EquirectImage, shift_px: usize) -> EquirectImage {
    let shift = shift_px % img.w;
    let mut out = EquirectImage::new(img.w, img.h, img.c);
    let row_len = img.w * img.c;
    let split = shift * img.c;
    for v in 0..img.h {
        let src = &img.data[v * row_len..(v + 1) * row_len];
        let dst = &mut out.data[v * row_len..(v + 1) * row_len];
        dst[..row_len - split].copy_from_slice(&src[split..]);
        dst[row_len - split..].copy_from_slice(&src[..split]);
    }
    out
}

/// Extract the camera's viewport raster (out_h × out_w × C) by bilinear
/// sampling with longitude wrap and latitude clamp.
pub fn extract_nfov(img: &EquirectImage, cam: &NFoVCamera) -> EquirectImage {
    let grid = nfov_sampling_grid(cam, img.w, img.h);
    let mut out = EquirectImage::new(cam.out_w, cam.out_h, img.c);
    for (coord, px) in grid.iter().zip(out.data.chunks_mut(img.c)) {
        let taps = bilinear_taps(*coord, img.h, img.w);
        let mut acc = vec![0.0f64; img.c];
        for (row, col, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            for (a, &s) in acc.iter_mut().zip(img.pixel(col, row)) {
                *a += wt * s as f64;
            }
        }
        for (o, a) in px.iter_mut().zip(acc) {
            *o = a as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dir_to_pix, SphericalDir};

    fn ramp_image(w: usize, h: usize) -> EquirectImage {
        let mut img = EquirectImage::new(w, h, 3);
        for v in 0..h {
            for u in 0..w {
                let px = img.pixel_mut(u, v);
                px[0] = (u as f32 * 37.0 + v as f32 * 11.0).sin() * 0.5 + 0.5;
                px[1] = (u as f32 * 0.31).cos() * 0.5 + 0.5;
                px[2] = v as f32 / h as f32;
            }
        }
        img
    }

    #[test]
    fn rotation_by_zero_and_full_width_is_identity() {
        let img = ramp_image(32, 16);
        assert_eq!(rotate_longitude(&img, 0), img);
        assert_eq!(rotate_longitude(&img, 32), img);
    }

    #[test]
    fn rotations_compose_modulo_width() {
        let img = ramp_image(24, 12);
        let ab = rotate_longitude(&rotate_longitude(&img, 9), 20);
        let once = rotate_longitude(&img, 29 % 24);
        assert_eq!(ab, once);
    }

    #[test]
    fn extraction_of_constant_image_is_constant() {
        let mut img = EquirectImage::new(64, 32, 3);
        img.data.iter_mut().for_each(|v| *v = 0.25);
        let cam = NFoVCamera::with_aspect(
            SphericalDir::new(200.0, 10.0).unwrap(),
            65.5,
            16,
            12,
        )
        .unwrap();
        let out = extract_nfov(&img, &cam);
        assert!(out.data.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn extraction_commutes_with_integer_rotation_exactly() {
        let (w, h) = (512, 256);
        let img = ramp_image(w, h);
        let shift = 40usize;
        let cam_a = NFoVCamera::with_aspect(
            SphericalDir::new(180.0, -20.0).unwrap(),
            65.5,
            32,
            24,
        )
        .unwrap();
        let cam_b = NFoVCamera::with_aspect(
            SphericalDir::new(180.0 + shift as f64 * 360.0 / w as f64, -20.0).unwrap(),
            65.5,
            32,
            24,
        )
        .unwrap();
        // Rotating the image left by `shift` puts the content of longitude
        // lon+shift*360/W at longitude lon.
        let rotated = rotate_longitude(&img, shift);
        let a = extract_nfov(&rotated, &cam_a);
        let b = extract_nfov(&img, &cam_b);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn center_pixel_equals_bilinear_sample_at_camera_center() {
        let (w, h) = (72, 36);
        let img = ramp_image(w, h);
        let cam = NFoVCamera::with_aspect(
            SphericalDir::new(137.0, 9.0).unwrap(),
            60.0,
            5,
            5,
        )
        .unwrap();
        let out = extract_nfov(&img, &cam);
        let (u, v) = dir_to_pix(cam.center, w, h);
        let taps = bilinear_taps(GridCoord::new(0, u, v), h, w);
        for ch in 0..3 {
            let expect: f64 = taps
                .iter()
                .map(|&(row, col, wt)| wt * img.pixel(col, row)[ch] as f64)
                .sum();
            let got = out.pixel(2, 2)[ch];
            assert!((got as f64 - expect).abs() < 1e-6, "channel {ch}");
        }
    }

    #[test]
    fn raw_dump_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        let img = ramp_image(20, 10);
        img.save_raw(&path).unwrap();
        let back = EquirectImage::load_raw(&path).unwrap();
        assert_eq!(back.w, 20);
        assert_eq!(back.h, 10);
        for (a, b) in img.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
