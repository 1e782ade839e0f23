//! Equirectangular ↔ spherical ↔ perspective transforms.
//!
//! Conventions used throughout the crate:
//! - pixel (u, v) of a W×H equirect image has longitude (u+0.5)/W·360 and
//!   latitude 90 − (v+0.5)/H·180 (pixel centers; column 0 is longitude 0,
//!   the panorama center sits at longitude 180);
//! - longitude wraps (column W ≡ column 0), latitude clamps at the poles;
//! - cameras yaw about the vertical axis after pitching, so changing only
//!   the longitude of a camera slides its footprint horizontally.

mod camera;
mod grid;
mod image;

pub use camera::{nfov_mask, nfov_sampling_grid, NFoVCamera};
pub use grid::{candidate_grid, CandidateGrid, GRID_LATS_DEG, GRID_LONS_DEG, GRID_SIZE};
pub use image::{extract_nfov, rotate_longitude, EquirectImage};

use crate::error::{Error, Result};

/// A direction on the sphere: longitude in [0, 360), latitude in [−90, +90],
/// both degrees. Out-of-range latitudes are an error, never clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalDir {
    lon: f64,
    lat: f64,
}

impl SphericalDir {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        if !lon.is_finite() || !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidArg(format!(
                "invalid spherical direction lon={lon} lat={lat}"
            )));
        }
        Ok(SphericalDir { lon: lon.rem_euclid(360.0), lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    /// Unit vector with +Z at the north pole and longitude 0 along +X.
    pub fn to_unit(&self) -> [f64; 3] {
        let (slon, clon) = sincos_deg(self.lon);
        let (slat, clat) = sincos_deg(self.lat);
        [clat * clon, clat * slon, slat]
    }

    pub fn from_unit(v: [f64; 3]) -> Self {
        let lon = v[1].atan2(v[0]).to_degrees().rem_euclid(360.0);
        let lat = v[2].atan2(v[0].hypot(v[1])).to_degrees();
        SphericalDir { lon, lat: lat.clamp(-90.0, 90.0) }
    }
}

/// Sign-symmetric sine/cosine in degrees: sin is structurally odd and cos
/// structurally even regardless of libm internals, which the exact mirror
/// identities on masks depend on.
pub(crate) fn sincos_deg(deg: f64) -> (f64, f64) {
    let rad = deg.abs().to_radians();
    let s = rad.sin();
    let c = rad.cos();
    (if deg < 0.0 { -s } else { s }, c)
}

/// Pixel center (u, v) of a W×H equirect image to a direction.
/// Accepts fractional coordinates in [0, W) × [0, H).
pub fn pix_to_dir(u: f64, v: f64, w: usize, h: usize) -> Result<SphericalDir> {
    if !(0.0..w as f64).contains(&u) || !(0.0..h as f64).contains(&v) {
        return Err(Error::InvalidArg(format!(
            "pixel ({u}, {v}) outside {w}x{h} image"
        )));
    }
    let lon = (u + 0.5) * 360.0 / w as f64;
    let lat = 90.0 - (v + 0.5) * 180.0 / h as f64;
    SphericalDir::new(lon, lat)
}

/// Inverse of [`pix_to_dir`]. Longitude maps into [−0.5, W−0.5); callers
/// sampling the image wrap it modulo W.
pub fn dir_to_pix(dir: SphericalDir, w: usize, h: usize) -> (f64, f64) {
    let u = dir.lon * w as f64 / 360.0 - 0.5;
    let v = (90.0 - dir.lat) * h as f64 / 180.0 - 0.5;
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_center_faces_longitude_180() {
        let d = pix_to_dir(36.0 - 0.5, 18.0 - 0.5, 72, 36).unwrap();
        assert!((d.lon() - 180.0).abs() < 1e-12);
        assert!(d.lat().abs() < 1e-12);
    }

    #[test]
    fn last_column_sits_just_below_360() {
        let d = pix_to_dir(71.5, 0.0, 72, 36).unwrap();
        assert!(d.lon() < 360.0);
        assert!(d.lon() > 355.0);
    }

    #[test]
    fn out_of_range_pixels_are_rejected() {
        assert!(pix_to_dir(-0.5, 0.0, 72, 36).is_err());
        assert!(pix_to_dir(0.0, 36.0, 72, 36).is_err());
    }

    #[test]
    fn latitude_out_of_range_is_an_error_not_a_clamp() {
        assert!(SphericalDir::new(10.0, 90.5).is_err());
        assert!(SphericalDir::new(10.0, -91.0).is_err());
    }

    #[test]
    fn unit_vector_round_trip() {
        for &(lon, lat) in &[(0.0, 0.0), (90.0, 45.0), (180.0, -30.0), (359.0, 89.0)] {
            let d = SphericalDir::new(lon, lat).unwrap();
            let back = SphericalDir::from_unit(d.to_unit());
            assert!((back.lon() - lon).abs() < 1e-9, "{lon} {lat}");
            assert!((back.lat() - lat).abs() < 1e-9, "{lon} {lat}");
        }
    }
}
