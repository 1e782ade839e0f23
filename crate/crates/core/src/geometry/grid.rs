//! The fixed 60-pose candidate set: five latitude rings of twelve longitudes.

use super::camera::NFoVCamera;
use super::SphericalDir;
use crate::error::{Error, Result};

pub const GRID_LATS_DEG: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];
pub const GRID_LONS_DEG: [f64; 12] = [
    0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0, 210.0, 240.0, 270.0, 300.0, 330.0,
];
pub const GRID_SIZE: usize = 60;
pub const LONS_PER_RING: usize = 12;

/// Ordered candidate cameras. The canonical grid is latitude-major: index
/// ring*12 + lon_step with rings ascending from -30° and longitudes from 0°
/// in 30° steps. Reduced grids are supported for miniature configurations;
/// the canonical one always has exactly 60 entries.
#[derive(Clone, Debug)]
pub struct CandidateGrid {
    cameras: Vec<NFoVCamera>,
}

impl CandidateGrid {
    /// The full 60-candidate grid with a shared field of view and raster size.
    pub fn canonical(hfov_deg: f64, out_w: usize, out_h: usize) -> Result<Self> {
        let mut cameras = Vec::with_capacity(GRID_SIZE);
        for &lat in &GRID_LATS_DEG {
            for &lon in &GRID_LONS_DEG {
                let center = SphericalDir::new(lon, lat)?;
                cameras.push(NFoVCamera::with_aspect(center, hfov_deg, out_w, out_h)?);
            }
        }
        Ok(CandidateGrid { cameras })
    }

    /// Arbitrary pose list, used by reduced test configurations.
    pub fn custom(cameras: Vec<NFoVCamera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::InvalidArg("candidate grid cannot be empty".into()));
        }
        Ok(CandidateGrid { cameras })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, index: usize) -> &NFoVCamera {
        &self.cameras[index]
    }

    pub fn cameras(&self) -> impl Iterator<Item = &NFoVCamera> {
        self.cameras.iter()
    }

    /// Index of the candidate whose center matches (lon, lat) exactly.
    pub fn index_of(&self, lon: f64, lat: f64) -> Option<usize> {
        self.cameras
            .iter()
            .position(|c| c.center.lon() == lon && c.center.lat() == lat)
    }

    /// The panorama-center candidate (longitude 180, latitude 0).
    pub fn center_index(&self) -> Option<usize> {
        self.index_of(180.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_grid_has_sixty_distinct_poses() {
        let grid = CandidateGrid::canonical(65.5, 4, 3).unwrap();
        assert_eq!(grid.len(), GRID_SIZE);
        let mut seen = std::collections::BTreeSet::new();
        for cam in grid.cameras() {
            let key = (cam.center.lon().to_bits(), cam.center.lat().to_bits());
            assert!(seen.insert(key), "duplicate pose {:?}", cam.center);
        }
    }

    #[test]
    fn ordering_is_latitude_major() {
        let grid = CandidateGrid::canonical(65.5, 4, 3).unwrap();
        // (lon 0, lat 0) is the first entry of the middle ring.
        assert_eq!(grid.index_of(0.0, 0.0), Some(24));
        assert_eq!(grid.camera(0).center.lat(), -30.0);
        assert_eq!(grid.camera(0).center.lon(), 0.0);
        assert_eq!(grid.camera(59).center.lat(), 30.0);
        assert_eq!(grid.camera(59).center.lon(), 330.0);
    }

    #[test]
    fn center_candidate_faces_the_panorama_middle() {
        let grid = CandidateGrid::canonical(65.5, 4, 3).unwrap();
        let idx = grid.center_index().unwrap();
        assert_eq!(idx, 30);
        assert_eq!(grid.camera(idx).center.lon(), 180.0);
        assert_eq!(grid.camera(idx).center.lat(), 0.0);
    }
}
