//! Beer's-law mean model and the I-divergence objective.

use crate::error::{check_len, Error, Result};
use crate::geometry::ImageGrid;

/// Measured and incident counts, one entry per ray.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionData {
    counts: Vec<f64>,
    incident: Vec<f64>,
}

impl TransmissionData {
    pub fn new(counts: Vec<f64>, incident: Vec<f64>) -> Result<Self> {
        check_len("transmission data", incident.len(), counts.len())?;
        if let Some(y) = counts.iter().position(|&d| !(d.is_finite() && d >= 0.0)) {
            return Err(Error::Invalid(format!(
                "count d({y}) = {} is negative or non-finite",
                counts[y]
            )));
        }
        if let Some(y) = incident.iter().position(|&i| !(i.is_finite() && i > 0.0)) {
            return Err(Error::Invalid(format!(
                "incident count I0({y}) = {} is not strictly positive",
                incident[y]
            )));
        }
        Ok(TransmissionData { counts, incident })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn incident(&self) -> &[f64] {
        &self.incident
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Linear attenuation coefficients on the voxel grid (inverse length units).
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationImage {
    pub grid: ImageGrid,
    pub values: Vec<f64>,
}

impl AttenuationImage {
    pub fn new(grid: ImageGrid, values: Vec<f64>) -> Result<Self> {
        check_len("attenuation image", grid.len(), values.len())?;
        if let Some(x) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: "attenuation image",
                index: x,
                detail: "value is not finite".into(),
            });
        }
        Ok(AttenuationImage { grid, values })
    }

    pub fn constant(grid: ImageGrid, value: f64) -> Self {
        AttenuationImage {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn slice(&self, z: usize) -> &[f64] {
        let n = self.grid.voxels_per_slice();
        &self.values[z * n..(z + 1) * n]
    }

    /// Clamp negative voxels to zero, returning what was clipped.
    pub fn clamp_nonnegative(&mut self) -> ClampReport {
        let mut report = ClampReport::default();
        for v in &mut self.values {
            if *v < 0.0 {
                report.clipped += 1;
                report.total += -*v;
                report.max = report.max.max(-*v);
                *v = 0.0;
            }
        }
        report
    }
}

/// Summary of negative values removed by [`AttenuationImage::clamp_nonnegative`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampReport {
    pub clipped: usize,
    /// Largest clipped magnitude.
    pub max: f64,
    /// Sum of clipped magnitudes.
    pub total: f64,
}

/// `q(y) = I0(y) exp(-l(y))`.
pub fn predicted_means(incident: &[f64], line_integrals: &[f64]) -> Result<Vec<f64>> {
    check_len("predicted means", incident.len(), line_integrals.len())?;
    incident
        .iter()
        .zip(line_integrals)
        .enumerate()
        .map(|(y, (&i0, &l))| {
            if !l.is_finite() {
                return Err(Error::Numerical {
                    context: "predicted means",
                    index: y,
                    detail: format!("line integral {l} is not finite"),
                });
            }
            let q = i0 * (-l).exp();
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::Numerical {
                    context: "predicted means",
                    index: y,
                    detail: format!("mean {q} out of range for line integral {l}"),
                });
            }
            Ok(q)
        })
        .collect()
}

/// `I(d||q) = sum d log(d/q) - d + q`, with `0 log 0 = 0`.
///
/// Summation is sequential in ray order so the value is reproducible.
pub fn i_divergence(counts: &[f64], means: &[f64]) -> Result<f64> {
    check_len("I-divergence", counts.len(), means.len())?;
    let mut total = 0.0;
    for (y, (&d, &q)) in counts.iter().zip(means).enumerate() {
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Numerical {
                context: "I-divergence",
                index: y,
                detail: format!("mean {q} is not strictly positive"),
            });
        }
        let log_term = if d == 0.0 { 0.0 } else { d * (d / q).ln() };
        total += log_term - d + q;
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn beer_law_scalars() {
        assert_eq!(
            predicted_means(&[3.0, 7.0], &[0.0, 0.0]).unwrap(),
            vec![3.0, 7.0]
        );
        let q = predicted_means(&[10.0, 10.0], &[0.5, 0.7]).unwrap();
        assert_relative_eq!(q[0], 6.065_306_597_126_334, max_relative = 1e-14);
        assert_relative_eq!(q[1], 4.965_853_037_914_095, max_relative = 1e-14);
    }

    #[test]
    fn non_finite_line_integral_names_ray() {
        match predicted_means(&[1.0, 1.0], &[0.0, f64::NAN]) {
            Err(Error::Numerical { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn divergence_scalars() {
        assert_eq!(i_divergence(&[1.5, 2.0], &[1.5, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(
            i_divergence(&[2.0], &[1.0]).unwrap(),
            2.0 * 2f64.ln() - 1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            i_divergence(&[2.0], &[1.0]).unwrap(),
            0.386_294_361_119_890_6,
            max_relative = 1e-14
        );
        assert_eq!(i_divergence(&[0.0], &[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn nonpositive_mean_rejected() {
        assert!(matches!(
            i_divergence(&[1.0], &[0.0]),
            Err(Error::Numerical { .. })
        ));
        assert!(matches!(
            i_divergence(&[1.0], &[-2.0]),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn transmission_data_validation() {
        assert!(TransmissionData::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(TransmissionData::new(vec![-1.0], vec![1.0]).is_err());
        assert!(TransmissionData::new(vec![1.0], vec![0.0]).is_err());
        assert!(TransmissionData::new(vec![0.0, 2.5], vec![1.0, 4.0]).is_ok());
    }

    #[test]
    fn clamp_reports_clipped_values() {
        let grid = ImageGrid::new(2, 2, 1, 1.0);
        let mut img = AttenuationImage::new(grid, vec![0.1, -0.2, 0.0, -0.05]).unwrap();
        let r = img.clamp_nonnegative();
        assert_eq!(r.clipped, 2);
        assert_relative_eq!(r.max, 0.2);
        assert_relative_eq!(r.total, 0.25);
        assert_eq!(img.values, vec![0.1, 0.0, 0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn divergence_nonnegative(pairs in prop::collection::vec((0.0f64..100.0, 0.01f64..100.0), 1..40)) {
            let (d, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(i_divergence(&d, &q).unwrap() >= 0.0);
        }

        #[test]
        fn more_attenuation_fewer_counts(i0 in 1.0f64..1e6, l in 0.0f64..20.0, dl in 1e-6f64..5.0) {
            let a = predicted_means(&[i0], &[l]).unwrap()[0];
            let b = predicted_means(&[i0], &[l + dl]).unwrap()[0];
            prop_assert!(b < a);
        }
    }
}
