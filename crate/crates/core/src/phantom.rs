//! Piecewise-constant phantoms and Poisson transmission simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{check_len, Error, Result};
use crate::geometry::ImageGrid;
use crate::model::{predicted_means, AttenuationImage, TransmissionData};
use crate::projector::SystemMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Ellipse {
        center: (f64, f64),
        semi_axes: (f64, f64),
        rotation: f64,
    },
    Rectangle {
        center: (f64, f64),
        half_extents: (f64, f64),
        rotation: f64,
    },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (center, rotation) = match *self {
            Shape::Ellipse {
                center, rotation, ..
            }
            | Shape::Rectangle {
                center, rotation, ..
            } => (center, rotation),
        };
        // coordinates in the primitive's own frame
        let (s, c) = rotation.sin_cos();
        let (dx, dy) = (x - center.0, y - center.1);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        match *self {
            Shape::Ellipse {
                semi_axes: (a, b), ..
            } => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
            Shape::Rectangle {
                half_extents: (a, b),
                ..
            } => u.abs() <= a && v.abs() <= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    /// Attenuation inside the primitive (inverse length units).
    pub value: f64,
}

/// Primitives painted in order over a constant background; later primitives
/// overwrite earlier ones. Applied identically to every z-slice.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhantomSpec {
    pub background: f64,
    pub primitives: Vec<Primitive>,
}

impl PhantomSpec {
    /// The default desk-scale phantom for a 64 mm field of view: a large
    /// disk, two small high-attenuation squares, and a low-contrast disk.
    pub fn default_desk() -> Self {
        let rect = |cx, cy, half, value| Primitive {
            shape: Shape::Rectangle {
                center: (cx, cy),
                half_extents: (half, half),
                rotation: 0.0,
            },
            value,
        };
        PhantomSpec {
            background: 0.0,
            primitives: vec![
                Primitive {
                    shape: Shape::Ellipse {
                        center: (0.0, 0.0),
                        semi_axes: (26.0, 26.0),
                        rotation: 0.0,
                    },
                    value: 0.02,
                },
                rect(-11.0, 8.0, 3.0, 0.1),
                rect(12.0, -7.0, 2.5, 0.1),
                Primitive {
                    shape: Shape::Ellipse {
                        center: (5.0, 13.0),
                        semi_axes: (5.0, 5.0),
                        rotation: 0.0,
                    },
                    value: 0.025,
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background.is_finite() && self.background >= 0.0) {
            return Err(Error::Invalid(format!(
                "background {} must be >= 0",
                self.background
            )));
        }
        for (k, p) in self.primitives.iter().enumerate() {
            if !(p.value.is_finite() && p.value >= 0.0) {
                return Err(Error::Invalid(format!(
                    "primitive {k} attenuation {} must be >= 0",
                    p.value
                )));
            }
            let (a, b) = match p.shape {
                Shape::Ellipse { semi_axes, .. } => semi_axes,
                Shape::Rectangle { half_extents, .. } => half_extents,
            };
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::Invalid(format!(
                    "primitive {k} has non-positive extent"
                )));
            }
        }
        Ok(())
    }
}

/// Voxel value is that of the last primitive containing the voxel centre.
pub fn rasterize_phantom(spec: &PhantomSpec, grid: &ImageGrid) -> Result<AttenuationImage> {
    spec.validate()?;
    grid.validate()?;
    let mut slice = Vec::with_capacity(grid.voxels_per_slice());
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.voxel_center(ix, iy);
            let v = spec
                .primitives
                .iter()
                .rev()
                .find(|p| p.shape.contains(x, y))
                .map_or(spec.background, |p| p.value);
            slice.push(v);
        }
    }
    let values = slice.repeat(grid.nz);
    AttenuationImage::new(*grid, values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum IncidentCounts {
    Uniform(f64),
    PerRay(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub incident: IncidentCounts,
    pub seed: u64,
    /// When false the data equal the predicted means exactly.
    pub noise: bool,
}

impl SimulationSpec {
    pub fn incident_vector(&self, rays: usize) -> Result<Vec<f64>> {
        let v = match &self.incident {
            IncidentCounts::Uniform(i0) => vec![*i0; rays],
            IncidentCounts::PerRay(v) => {
                check_len("incident counts", rays, v.len())?;
                v.clone()
            }
        };
        if let Some(y) = v.iter().position(|&i| !(i.is_finite() && i > 0.0)) {
            return Err(Error::Invalid(format!(
                "incident count I0({y}) = {} must be > 0",
                v[y]
            )));
        }
        Ok(v)
    }
}

/// Transmission data for `truth` under Beer's law, optionally with Poisson
/// noise. Rays are sampled sequentially in index order from a ChaCha8 stream
/// seeded with `sim.seed`.
pub fn simulate_counts(
    truth: &AttenuationImage,
    h: &SystemMatrix,
    sim: &SimulationSpec,
) -> Result<TransmissionData> {
    let incident = sim.incident_vector(h.rows())?;
    let line = h.forward_project(&truth.values)?;
    let means = predicted_means(&incident, &line)?;
    let counts = if sim.noise {
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
        means
            .iter()
            .enumerate()
            .map(|(y, &q)| {
                let dist = Poisson::new(q).map_err(|e| Error::Numerical {
                    context: "Poisson sampling",
                    index: y,
                    detail: e.to_string(),
                })?;
                Ok(dist.sample(&mut rng))
            })
            .collect::<Result<Vec<f64>>>()?
    } else {
        means
    };
    TransmissionData::new(counts, incident)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid32() -> ImageGrid {
        ImageGrid::new(32, 32, 1, 1.0)
    }

    #[test]
    fn empty_phantom_is_background() {
        let img = rasterize_phantom(&PhantomSpec::default(), &grid32()).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn covering_rectangle_gives_constant_image() {
        let spec = PhantomSpec {
            background: 0.0,
            primitives: vec![Primitive {
                shape: Shape::Rectangle {
                    center: (0.0, 0.0),
                    half_extents: (16.0, 16.0),
                    rotation: 0.0,
                },
                value: 0.2,
            }],
        };
        let img = rasterize_phantom(&spec, &grid32()).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.2));
    }

    #[test]
    fn centered_disk_area() {
        let r = 10.0;
        let spec = PhantomSpec {
            background: 0.0,
            primitives: vec![Primitive {
                shape: Shape::Ellipse {
                    center: (0.0, 0.0),
                    semi_axes: (r, r),
                    rotation: 0.0,
                },
                value: 0.4,
            }],
        };
        let grid = grid32();
        let img = rasterize_phantom(&spec, &grid).unwrap();
        let inside = img.values.iter().filter(|&&v| v == 0.4).count();
        // independent count of voxel centres inside the circle
        let mut oracle = 0usize;
        for iy in 0..32 {
            for ix in 0..32 {
                let x = ix as f64 - 15.5;
                let y = iy as f64 - 15.5;
                if x * x + y * y <= r * r {
                    oracle += 1;
                }
            }
        }
        assert_eq!(inside, oracle);
        let area = std::f64::consts::PI * r * r;
        assert!((inside as f64 - area).abs() <= 4.0, "{inside} vs {area}");
    }

    #[test]
    fn painter_order_and_rotation() {
        let square = |value, rotation| Primitive {
            shape: Shape::Rectangle {
                center: (0.0, 0.0),
                half_extents: (4.0, 1.0),
                rotation,
            },
            value,
        };
        let spec = PhantomSpec {
            background: 0.01,
            primitives: vec![square(0.3, 0.0), square(0.5, std::f64::consts::FRAC_PI_2)],
        };
        let img = rasterize_phantom(&spec, &grid32()).unwrap();
        let g = grid32();
        // centre voxel covered by both: later wins
        assert_eq!(img.values[g.index(16, 16, 0)], 0.5);
        // along x only the first (unrotated) bar
        assert_eq!(img.values[g.index(19, 16, 0)], 0.3);
        // along y only the rotated bar
        assert_eq!(img.values[g.index(16, 19, 0)], 0.5);
        assert_eq!(img.values[0], 0.01);
    }

    #[test]
    fn negative_attenuation_rejected() {
        let spec = PhantomSpec {
            background: -0.1,
            primitives: vec![],
        };
        assert!(rasterize_phantom(&spec, &grid32()).is_err());
    }

    fn point_problem(rays: usize, length: f64) -> (AttenuationImage, SystemMatrix) {
        let rows: Vec<Vec<(usize, f64)>> = (0..rays).map(|_| vec![(0, length)]).collect();
        let h = SystemMatrix::from_rows(1, &rows).unwrap();
        let img = AttenuationImage::new(ImageGrid::new(1, 1, 1, 1.0), vec![1.0]).unwrap();
        (img, h)
    }

    #[test]
    fn noiseless_zero_image_returns_incident() {
        let (mut img, h) = point_problem(5, 1.0);
        img.values[0] = 0.0;
        let sim = SimulationSpec {
            incident: IncidentCounts::PerRay(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            seed: 0,
            noise: false,
        };
        let data = simulate_counts(&img, &h, &sim).unwrap();
        assert_eq!(data.counts(), data.incident());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let (img, h) = point_problem(200, 0.3);
        let sim = SimulationSpec {
            incident: IncidentCounts::Uniform(50.0),
            seed: 11,
            noise: true,
        };
        let a = simulate_counts(&img, &h, &sim).unwrap();
        let b = simulate_counts(&img, &h, &sim).unwrap();
        assert_eq!(a, b);
        let c = simulate_counts(&img, &h, &SimulationSpec { seed: 12, ..sim }).unwrap();
        assert_ne!(a.counts(), c.counts());
    }

    #[test]
    fn poisson_mean_within_three_standard_errors() {
        let (img, h) = point_problem(10_000, 0.5);
        let sim = SimulationSpec {
            incident: IncidentCounts::Uniform(1e4),
            seed: 2024,
            noise: true,
        };
        let data = simulate_counts(&img, &h, &sim).unwrap();
        let n = data.len() as f64;
        let lambda = 1e4 * (-0.5f64).exp();
        let mean = data.counts().iter().sum::<f64>() / n;
        let se = (lambda / n).sqrt();
        assert!((mean - lambda).abs() < 3.0 * se, "mean {mean} vs {lambda}");
        assert!(data.counts().iter().all(|d| d.fract() == 0.0));
        let var = data
            .counts()
            .iter()
            .map(|d| (d - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        // variance of the sample variance for Poisson is about 2 lambda^2 / n
        assert!((var / mean - 1.0).abs() < 0.1, "dispersion {}", var / mean);
    }

    #[test]
    fn low_mean_sampling_matches_poisson() {
        let (img, h) = point_problem(20_000, 1.0);
        let sim = SimulationSpec {
            incident: IncidentCounts::Uniform(3.0 * std::f64::consts::E),
            seed: 5,
            noise: true,
        };
        let data = simulate_counts(&img, &h, &sim).unwrap();
        let n = data.len() as f64;
        let mean = data.counts().iter().sum::<f64>() / n;
        assert!((mean - 3.0).abs() < 3.0 * (3.0 / n).sqrt());
        let zeros = data.counts().iter().filter(|&&d| d == 0.0).count() as f64 / n;
        let p0 = (-3.0f64).exp();
        assert!((zeros - p0).abs() < 4.0 * (p0 * (1.0 - p0) / n).sqrt());
    }
}
