//! Perspective viewport cameras over the sphere: sampling grids for
//! extraction and frustum masks for evaluation.

use super::{sincos_deg, SphericalDir};
use crate::autodiff::kernels::GridCoord;
use crate::error::{Error, Result};

/// A perspective viewport: center direction, angular extents and the output
/// raster resolution used when extracting pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NFoVCamera {
    pub center: SphericalDir,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub out_w: usize,
    pub out_h: usize,
}

impl NFoVCamera {
    pub fn new(
        center: SphericalDir,
        hfov_deg: f64,
        vfov_deg: f64,
        out_w: usize,
        out_h: usize,
    ) -> Result<Self> {
        for fov in [hfov_deg, vfov_deg] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(Error::InvalidArg(format!("field of view {fov} outside (0, 180)")));
            }
        }
        if out_w == 0 || out_h == 0 {
            return Err(Error::InvalidArg("camera output resolution must be positive".into()));
        }
        Ok(NFoVCamera { center, hfov_deg, vfov_deg, out_w, out_h })
    }

    /// Derive the vertical extent from the raster aspect:
    /// tan(vfov/2) = tan(hfov/2) * out_h / out_w.
    pub fn with_aspect(center: SphericalDir, hfov_deg: f64, out_w: usize, out_h: usize) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::InvalidArg(format!("field of view {hfov_deg} outside (0, 180)")));
        }
        let tan_h = (hfov_deg / 2.0).to_radians().tan();
        let tan_v = tan_h * out_h as f64 / out_w as f64;
        let vfov_deg = 2.0 * tan_v.atan().to_degrees();
        NFoVCamera::new(center, hfov_deg, vfov_deg, out_w, out_h)
    }

    pub fn tan_half(&self) -> (f64, f64) {
        (
            (self.hfov_deg / 2.0).to_radians().tan(),
            (self.vfov_deg / 2.0).to_radians().tan(),
        )
    }
}

/// Perspective ray for a normalized image-plane offset (x right, y down),
/// in the camera's yaw-aligned frame (pitch applied, yaw not). Returns the
/// longitude offset from the camera center and the absolute latitude, degrees.
fn ray_lon_lat(x: f64, y: f64, sin_pitch: f64, cos_pitch: f64) -> (f64, f64) {
    // Camera basis in the yaw-aligned frame: forward (c,0,s), right (0,1,0),
    // down (s,0,-c). Ray = forward + x*right + y*down.
    let fwd = cos_pitch + y * sin_pitch;
    let side = x;
    let up = sin_pitch - y * cos_pitch;
    let dlon = side.atan2(fwd).to_degrees();
    let lat = up.atan2(fwd.hypot(side)).to_degrees();
    (dlon, lat)
}

/// Sampling grid of a camera over a W×H equirect image, row-major
/// out_h × out_w. Horizontal coordinates keep the camera's integer column
/// anchor split from the fractional offset so grids of cameras that differ
/// by whole pixels in longitude are exact column shifts of one another.
pub fn nfov_sampling_grid(cam: &NFoVCamera, w: usize, h: usize) -> Vec<GridCoord> {
    let (tan_h, tan_v) = cam.tan_half();
    let (sp, cp) = sincos_deg(cam.center.lat());

    // Continuous pixel coordinate of the camera's longitude.
    let anchor = cam.center.lon() * w as f64 / 360.0 - 0.5;
    let col = anchor.floor();
    let residue = anchor - col;

    let mut grid = Vec::with_capacity(cam.out_w * cam.out_h);
    for i in 0..cam.out_h {
        let y = tan_v * (2.0 * (i as f64 + 0.5) / cam.out_h as f64 - 1.0);
        for j in 0..cam.out_w {
            let x = tan_h * (2.0 * (j as f64 + 0.5) / cam.out_w as f64 - 1.0);
            let (dlon, lat) = ray_lon_lat(x, y, sp, cp);
            let u_frac = residue + dlon * w as f64 / 360.0;
            let v = (90.0 - lat) * h as f64 / 180.0 - 0.5;
            grid.push(GridCoord::new(col as i64, u_frac, v));
        }
    }
    grid
}

/// Frustum test of every pixel of a W×H equirect image: true where the pixel
/// direction has a positive forward component and falls within both angular
/// extents. Row-major H×W.
pub fn nfov_mask(cam: &NFoVCamera, w: usize, h: usize) -> Vec<bool> {
    let (tan_h, tan_v) = cam.tan_half();
    let (sp, cp) = sincos_deg(cam.center.lat());
    let lon_px = cam.center.lon() * w as f64 / 360.0;
    let lat_step = 180.0 / h as f64;
    let lon_step = 360.0 / w as f64;

    let mut mask = vec![false; w * h];
    for v in 0..h {
        let lat = 90.0 - (v as f64 + 0.5) * lat_step;
        let (sl, cl) = sincos_deg(lat);
        for u in 0..w {
            let dlon = ((u as f64 + 0.5) - lon_px) * lon_step;
            let (sd, cd) = sincos_deg(wrap_half(dlon));
            let horiz = cl * cd;
            let fwd = horiz * cp + sl * sp;
            let side = cl * sd;
            let down = horiz * sp - sl * cp;
            mask[v * w + u] = fwd > 0.0 && side.abs() <= fwd * tan_h && down.abs() <= fwd * tan_v;
        }
    }
    mask
}

/// Wrap a longitude difference into [-180, 180]. Keeps |x| small for the
/// trig without disturbing values already in range.
fn wrap_half(dlon: f64) -> f64 {
    let mut d = dlon % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dir_to_pix;

    fn cam(lon: f64, lat: f64, hfov: f64) -> NFoVCamera {
        NFoVCamera::with_aspect(SphericalDir::new(lon, lat).unwrap(), hfov, 4, 3).unwrap()
    }

    #[test]
    fn aspect_constructor_ties_the_tangents() {
        let c = cam(180.0, 0.0, 60.0);
        let (th, tv) = c.tan_half();
        assert!((tv - th * 3.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn fov_bounds_are_enforced() {
        let center = SphericalDir::new(0.0, 0.0).unwrap();
        assert!(NFoVCamera::new(center, 0.0, 60.0, 4, 3).is_err());
        assert!(NFoVCamera::new(center, 60.0, 180.0, 4, 3).is_err());
    }

    #[test]
    fn center_ray_of_odd_grid_lands_on_dir_to_pix() {
        let c = NFoVCamera::with_aspect(
            SphericalDir::new(123.0, -17.0).unwrap(),
            65.5,
            5,
            5,
        )
        .unwrap();
        let (w, h) = (72, 36);
        let grid = nfov_sampling_grid(&c, w, h);
        let mid = &grid[2 * 5 + 2];
        let (eu, ev) = dir_to_pix(c.center, w, h);
        assert!((mid.u(w) - eu.rem_euclid(w as f64)).abs() < 1e-9);
        assert!((mid.v - ev).abs() < 1e-9);
    }

    #[test]
    fn equator_row_matches_closed_form_projection() {
        // At latitude 0 the horizontal offset of a ray is just atan(x):
        // u = lon_px + atan(x) * W / 360.
        let c = NFoVCamera::with_aspect(SphericalDir::new(180.0, 0.0).unwrap(), 60.0, 8, 1)
            .unwrap();
        let (w, h) = (360, 180);
        // vfov of an 8x1 raster is tiny, so row 0 is essentially the equator.
        let grid = nfov_sampling_grid(&c, w, h);
        let tan_h = (30.0f64).to_radians().tan();
        for j in 0..8 {
            let x = tan_h * (2.0 * (j as f64 + 0.5) / 8.0 - 1.0);
            let expect_u = (180.0 + x.atan().to_degrees()) * w as f64 / 360.0 - 0.5;
            let got = grid[j].u(w);
            assert!(
                (got - expect_u).abs() < 1e-6,
                "col {j}: got {got}, expected {expect_u}"
            );
        }
        // The full-width extremes sit hfov/2 = 30 degrees out: u offset W*30/360.
        let corner = ray_lon_lat(tan_h, 0.0, 0.0, 1.0).0;
        assert!((corner - 30.0).abs() < 1e-12);
    }

    #[test]
    fn longitude_shift_moves_grid_exactly() {
        let (w, h) = (512, 256);
        let a = cam(180.0, 25.0, 65.5);
        let shift = 32.0; // pixels
        let b = cam(180.0 + shift * 360.0 / w as f64, 25.0, 65.5);
        let ga = nfov_sampling_grid(&a, w, h);
        let gb = nfov_sampling_grid(&b, w, h);
        for (pa, pb) in ga.iter().zip(&gb) {
            assert_eq!(pa.col + shift as i64, pb.col);
            assert_eq!(pa.u_frac.to_bits(), pb.u_frac.to_bits());
            assert_eq!(pa.v.to_bits(), pb.v.to_bits());
        }
    }

    #[test]
    fn mask_contains_center_excludes_antipode() {
        let (w, h) = (72, 36);
        let c = cam(90.0, 15.0, 65.5);
        let mask = nfov_mask(&c, w, h);
        let (cu, cv) = dir_to_pix(c.center, w, h);
        let (cu, cv) = (cu.round() as usize % w, cv.round() as usize);
        assert!(mask[cv * w + cu]);
        let au = (cu + w / 2) % w;
        let av = h - 1 - cv;
        assert!(!mask[av * w + au]);
    }

    #[test]
    fn mask_rotation_equivariance_is_exact() {
        let (w, h) = (144, 72); // 12 | 144
        let shift = w / 12;
        let a = cam(60.0, -15.0, 65.5);
        let b = cam(90.0, -15.0, 65.5);
        let ma = nfov_mask(&a, w, h);
        let mb = nfov_mask(&b, w, h);
        for v in 0..h {
            for u in 0..w {
                assert_eq!(mb[v * w + (u + shift) % w], ma[v * w + u], "at ({u},{v})");
            }
        }
    }

    #[test]
    fn mask_mirror_symmetry_is_exact() {
        let (w, h) = (96, 48);
        let up = cam(200.0, 30.0, 65.5);
        let down = cam(200.0, -30.0, 65.5);
        let mu = nfov_mask(&up, w, h);
        let md = nfov_mask(&down, w, h);
        for v in 0..h {
            for u in 0..w {
                assert_eq!(mu[v * w + u], md[(h - 1 - v) * w + u], "at ({u},{v})");
            }
        }
    }

    #[test]
    fn mask_area_constant_across_grid_longitudes() {
        let (w, h) = (144, 72);
        let count = |lon: f64| nfov_mask(&cam(lon, 15.0, 65.5), w, h).iter().filter(|&&b| b).count();
        let first = count(0.0);
        for k in 1..12 {
            assert_eq!(count(30.0 * k as f64), first, "lon {}", 30 * k);
        }
    }
}
