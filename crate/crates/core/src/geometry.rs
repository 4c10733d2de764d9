//! Scan geometry: the voxel grid and the set of rays sampled per z-slice.
//!
//! The grid is centred on the origin. Voxel `(ix, iy)` of a slice covers
//! `[x0 + ix*edge, x0 + (ix+1)*edge) x [y0 + iy*edge, y0 + (iy+1)*edge)` with
//! `x0 = -nx*edge/2`, `y0 = -ny*edge/2`. Images are stored row-major with `iy`
//! as the row index, slices outermost.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Voxel grid shared by every slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Voxel edge length (length units).
    pub voxel: f64,
}

impl ImageGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, voxel: f64) -> Self {
        ImageGrid { nx, ny, nz, voxel }
    }

    pub fn voxels_per_slice(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_min(&self) -> f64 {
        -(self.nx as f64) * self.voxel / 2.0
    }

    pub fn y_min(&self) -> f64 {
        -(self.ny as f64) * self.voxel / 2.0
    }

    /// Length of the in-plane diagonal of one slice.
    pub fn diagonal(&self) -> f64 {
        let w = self.nx as f64 * self.voxel;
        let h = self.ny as f64 * self.voxel;
        w.hypot(h)
    }

    /// Centre of voxel `(ix, iy)` in length units.
    pub fn voxel_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x_min() + (ix as f64 + 0.5) * self.voxel,
            self.y_min() + (iy as f64 + 0.5) * self.voxel,
        )
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.ny + iy) * self.nx + ix
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Config(format!(
                "grid dimensions must be nonzero, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if !(self.voxel.is_finite() && self.voxel > 0.0) {
            return Err(Error::Config(format!(
                "voxel edge must be finite and positive, got {}",
                self.voxel
            )));
        }
        Ok(())
    }
}

/// Beam arrangement within one slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Beam {
    Parallel,
    /// Flat-detector fan beam.
    Fan {
        source_to_center: f64,
        source_to_detector: f64,
    },
}

/// A straight line segment from `start` to `end` in slice coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl Ray {
    pub fn new(start: (f64, f64), end: (f64, f64)) -> Self {
        Ray { start, end }
    }

    pub fn length(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGeometry {
    pub grid: ImageGrid,
    pub detectors: usize,
    /// Centre-to-centre spacing of detector bins (length units, measured on
    /// the detector for fan beams).
    pub detector_spacing: f64,
    /// View angles in radians.
    pub angles: Vec<f64>,
    pub beam: Beam,
}

impl ScanGeometry {
    /// Evenly spaced parallel-beam views over `[0, pi)`.
    pub fn parallel(
        grid: ImageGrid,
        views: usize,
        detectors: usize,
        detector_spacing: f64,
    ) -> Self {
        let angles = (0..views).map(|k| PI * k as f64 / views as f64).collect();
        ScanGeometry {
            grid,
            detectors,
            detector_spacing,
            angles,
            beam: Beam::Parallel,
        }
    }

    /// Evenly spaced fan-beam views over a full turn.
    pub fn fan(
        grid: ImageGrid,
        views: usize,
        detectors: usize,
        detector_spacing: f64,
        source_to_center: f64,
        source_to_detector: f64,
    ) -> Self {
        let angles = (0..views)
            .map(|k| 2.0 * PI * k as f64 / views as f64)
            .collect();
        ScanGeometry {
            grid,
            detectors,
            detector_spacing,
            angles,
            beam: Beam::Fan {
                source_to_center,
                source_to_detector,
            },
        }
    }

    /// Desk-scale fan-beam scan: 64x64 grid of 1 mm voxels, 60 views,
    /// 96 detector bins.
    pub fn default_fan() -> Self {
        ScanGeometry::fan(ImageGrid::new(64, 64, 1, 1.0), 60, 96, 2.0, 200.0, 400.0)
    }

    pub fn views(&self) -> usize {
        self.angles.len()
    }

    pub fn rays_per_slice(&self) -> usize {
        self.views() * self.detectors
    }

    pub fn ray_count(&self) -> usize {
        self.rays_per_slice() * self.grid.nz
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.nx < 4 || self.grid.ny < 4 {
            return Err(Error::Config(format!(
                "grid must be at least 4x4 in-plane, got {}x{}",
                self.grid.nx, self.grid.ny
            )));
        }
        if self.angles.is_empty() {
            return Err(Error::Config("geometry has zero views".into()));
        }
        if self.detectors == 0 {
            return Err(Error::Config("geometry has zero detectors".into()));
        }
        if !(self.detector_spacing.is_finite() && self.detector_spacing > 0.0) {
            return Err(Error::Config(format!(
                "detector spacing must be finite and positive, got {}",
                self.detector_spacing
            )));
        }
        if let Some(k) = self.angles.iter().position(|a| !a.is_finite()) {
            return Err(Error::Config(format!("view angle {k} is not finite")));
        }
        if let Beam::Fan {
            source_to_center,
            source_to_detector,
        } = self.beam
        {
            if !(source_to_center.is_finite() && source_to_center > 0.0) {
                return Err(Error::Config(format!(
                    "source-to-center distance must be positive, got {source_to_center}"
                )));
            }
            if !(source_to_detector.is_finite() && source_to_detector > source_to_center) {
                return Err(Error::Config(format!(
                    "source-to-detector distance {source_to_detector} must exceed source-to-center {source_to_center}"
                )));
            }
        }
        Ok(())
    }

    /// Rays of one slice, ordered view-major then detector bin.
    pub fn slice_rays(&self) -> Vec<Ray> {
        let half = self.grid.diagonal();
        let mut rays = Vec::with_capacity(self.rays_per_slice());
        for &theta in &self.angles {
            let (s, c) = theta.sin_cos();
            // detector axis and the direction orthogonal to it
            let axis = (c, s);
            let normal = (-s, c);
            for bin in 0..self.detectors {
                let offset =
                    (bin as f64 + 0.5 - self.detectors as f64 / 2.0) * self.detector_spacing;
                let ray = match self.beam {
                    Beam::Parallel => {
                        let p = (offset * axis.0, offset * axis.1);
                        Ray::new(
                            (p.0 - 2.0 * half * normal.0, p.1 - 2.0 * half * normal.1),
                            (p.0 + 2.0 * half * normal.0, p.1 + 2.0 * half * normal.1),
                        )
                    }
                    Beam::Fan {
                        source_to_center,
                        source_to_detector,
                    } => {
                        let src = (-source_to_center * normal.0, -source_to_center * normal.1);
                        let det_center = (
                            src.0 + source_to_detector * normal.0,
                            src.1 + source_to_detector * normal.1,
                        );
                        Ray::new(
                            src,
                            (
                                det_center.0 + offset * axis.0,
                                det_center.1 + offset * axis.1,
                            ),
                        )
                    }
                };
                rays.push(ray);
            }
        }
        rays
    }
}
