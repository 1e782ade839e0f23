//! Candidate viewport features, generated either directly on an encoded
//! feature map (the fast path used by the model) or by extracting and
//! encoding pixel rasters per candidate (the reference path kept for the
//! efficiency comparison).

use crate::autodiff::kernels::GridCoord;
use crate::autodiff::{Real, Tape, TensorId};
use crate::error::{Error, Result};
use crate::geometry::{extract_nfov, nfov_sampling_grid, CandidateGrid, EquirectImage, NFoVCamera};

/// Precomputed sampling positions of every candidate over a feature map of a
/// given spatial size. Feature maps inherit the equirect convention of the
/// panorama they encode, scaled to their own width and height, so the same
/// projection math applies.
#[derive(Clone, Debug)]
pub struct GlimpseSampler {
    coords: Vec<GridCoord>,
    n_candidates: usize,
    samples_per_candidate: usize,
    fmap_w: usize,
    fmap_h: usize,
}

impl GlimpseSampler {
    pub fn new(grid: &CandidateGrid, fmap_w: usize, fmap_h: usize, g: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::InvalidArg("glimpse resolution must be at least 1".into()));
        }
        let mut coords = Vec::with_capacity(grid.len() * g * g);
        for cam in grid.cameras() {
            let sampling_cam = NFoVCamera::new(cam.center, cam.hfov_deg, cam.vfov_deg, g, g)?;
            coords.extend(nfov_sampling_grid(&sampling_cam, fmap_w, fmap_h));
        }
        Ok(GlimpseSampler {
            coords,
            n_candidates: grid.len(),
            samples_per_candidate: g * g,
            fmap_w,
            fmap_h,
        })
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    /// Candidate features from a feature map on the tape: bilinear-sample a
    /// g×g grid per candidate and average-pool it to one d-vector. Fully
    /// differentiable into the feature map. With `flatten` the g² samples
    /// are kept side by side instead (a g²·d vector per candidate).
    pub fn features<T: Real>(
        &self,
        tape: &mut Tape<T>,
        fmap: TensorId,
        flatten: bool,
    ) -> Result<TensorId> {
        let shape = tape.shape(fmap);
        if shape.len() != 3 || shape[0] != self.fmap_h || shape[1] != self.fmap_w {
            return Err(Error::ShapeMismatch {
                op: "glimpse_features",
                lhs: shape.to_vec(),
                rhs: vec![self.fmap_h, self.fmap_w],
            });
        }
        let d = shape[2];
        let sampled = tape.grid_sample(fmap, &self.coords)?;
        if flatten {
            tape.reshape(sampled, vec![self.n_candidates, self.samples_per_candidate * d])
        } else {
            tape.mean_rows(sampled, self.samples_per_candidate)
        }
    }
}

/// Reference path: extract every candidate's raster at pixel level and encode
/// each independently. `encoder` maps an out_h×out_w×C raster to a d-vector.
pub fn pixel_space_features<F>(
    pano: &EquirectImage,
    grid: &CandidateGrid,
    mut encoder: F,
) -> Result<Vec<Vec<f32>>>
where
    F: FnMut(&EquirectImage) -> Result<Vec<f32>>,
{
    let mut features = Vec::with_capacity(grid.len());
    for cam in grid.cameras() {
        let raster = extract_nfov(pano, cam);
        features.push(encoder(&raster)?);
    }
    Ok(features)
}
