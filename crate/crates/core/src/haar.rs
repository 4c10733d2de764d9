//! Orthonormal multilevel 2D Haar transform, applied independently per slice.
//!
//! Coefficients use the Mallat layout on the same `ny x nx` array as the
//! slice. At level `l` the detail bands occupy the three outer quadrants of
//! the `(ny >> (l-1)) x (nx >> (l-1))` corner, and the approximation band of
//! the coarsest level sits in the top-left `(ny >> L) x (nx >> L)` corner.
//! For a 2x2 block `[[a, b], [c, d]]` (rows `r`, `r+1`; columns `c`, `c+1`):
//!
//! * approx     = (a + b + c + d) / 2
//! * horizontal = (a + b - c - d) / 2   (difference across rows)
//! * vertical   = (a - b + c - d) / 2   (difference across columns)
//! * diagonal   = (a - b - c + d) / 2

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subband {
    Approx,
    Horizontal,
    Vertical,
    Diagonal,
}

impl Subband {
    pub const DETAILS: [Subband; 3] = [Subband::Horizontal, Subband::Vertical, Subband::Diagonal];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subband::Approx => "a",
            Subband::Horizontal => "h",
            Subband::Vertical => "v",
            Subband::Diagonal => "d",
        }
    }
}

impl fmt::Display for Subband {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Subband::Approx),
            "h" => Ok(Subband::Horizontal),
            "v" => Ok(Subband::Vertical),
            "d" => Ok(Subband::Diagonal),
            _ => Err(Error::Format(format!("unknown subband {s:?}"))),
        }
    }
}

/// Position of one coefficient: slice, level, subband, and `(i, j)` = (row,
/// column) inside the subband.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoeffIndex {
    pub slice: usize,
    pub level: usize,
    pub band: Subband,
    pub i: usize,
    pub j: usize,
}

/// Shape of a coefficient volume: `nz` slices of `ny x nx`, depth `levels`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientLayout {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub levels: usize,
}

impl CoefficientLayout {
    pub fn new(nx: usize, ny: usize, nz: usize, levels: usize) -> Result<Self> {
        let block = 1usize.checked_shl(levels as u32).unwrap_or(0);
        if nx == 0
            || ny == 0
            || nz == 0
            || block == 0
            || !nx.is_multiple_of(block)
            || !ny.is_multiple_of(block)
        {
            return Err(Error::Config(format!(
                "{nx}x{ny} slices are not divisible by 2^{levels}"
            )));
        }
        Ok(CoefficientLayout { nx, ny, nz, levels })
    }

    pub fn per_slice(&self) -> usize {
        self.nx * self.ny
    }

    pub fn len(&self) -> usize {
        self.per_slice() * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Subband dimensions `(rows, cols)` at `level`.
    pub fn band_shape(&self, level: usize) -> (usize, usize) {
        (self.ny >> level, self.nx >> level)
    }

    pub fn approx_count(&self) -> usize {
        let (h, w) = self.band_shape(self.levels);
        h * w
    }

    pub fn is_valid(&self, c: &CoeffIndex) -> bool {
        let level_ok = match c.band {
            Subband::Approx => c.level == self.levels,
            _ => c.level >= 1 && c.level <= self.levels,
        };
        let (h, w) = self.band_shape(c.level.min(self.levels));
        c.slice < self.nz && level_ok && c.i < h && c.j < w
    }

    pub fn flat(&self, c: &CoeffIndex) -> usize {
        let (h, w) = self.band_shape(c.level);
        let (row, col) = match c.band {
            Subband::Approx => (c.i, c.j),
            Subband::Vertical => (c.i, c.j + w),
            Subband::Horizontal => (c.i + h, c.j),
            Subband::Diagonal => (c.i + h, c.j + w),
        };
        c.slice * self.per_slice() + row * self.nx + col
    }

    pub fn index(&self, flat: usize) -> CoeffIndex {
        let slice = flat / self.per_slice();
        let rem = flat % self.per_slice();
        let (row, col) = (rem / self.nx, rem % self.nx);
        let (h, w) = self.band_shape(self.levels);
        if row < h && col < w {
            return CoeffIndex {
                slice,
                level: self.levels,
                band: Subband::Approx,
                i: row,
                j: col,
            };
        }
        let mut level = self.levels;
        loop {
            let (h, w) = self.band_shape(level - 1);
            if row < h && col < w {
                break;
            }
            level -= 1;
        }
        let (h, w) = self.band_shape(level);
        let band = match (row >= h, col >= w) {
            (true, false) => Subband::Horizontal,
            (false, true) => Subband::Vertical,
            _ => Subband::Diagonal,
        };
        CoeffIndex {
            slice,
            level,
            band,
            i: row % h,
            j: col % w,
        }
    }
}

/// Wavelet coefficients of a whole volume in Mallat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub layout: CoefficientLayout,
    pub values: Vec<f64>,
}

impl WaveletCoefficients {
    pub fn zeros(layout: CoefficientLayout) -> Self {
        WaveletCoefficients {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn get(&self, c: &CoeffIndex) -> f64 {
        self.values[self.layout.flat(c)]
    }

    pub fn set(&mut self, c: &CoeffIndex, v: f64) {
        let k = self.layout.flat(c);
        self.values[k] = v;
    }

    /// Analysis of a full volume (slices stored consecutively).
    pub fn from_image(layout: CoefficientLayout, image: &[f64]) -> Result<Self> {
        check_len("wavelet analysis", layout.len(), image.len())?;
        let mut values = image.to_vec();
        for slice in values.chunks_mut(layout.per_slice()) {
            dwt2_in_place(slice, layout.nx, layout.ny, layout.levels);
        }
        Ok(WaveletCoefficients { layout, values })
    }

    /// Synthesis `Omega beta` of the full volume.
    pub fn to_image(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for slice in out.chunks_mut(self.layout.per_slice()) {
            idwt2_in_place(slice, self.layout.nx, self.layout.ny, self.layout.levels);
        }
        out
    }
}

/// Forward transform of one `ny x nx` slice.
pub fn dwt2(slice: &[f64], nx: usize, ny: usize, levels: usize) -> Result<Vec<f64>> {
    CoefficientLayout::new(nx, ny, 1, levels)?;
    check_len("dwt2 slice", nx * ny, slice.len())?;
    let mut out = slice.to_vec();
    dwt2_in_place(&mut out, nx, ny, levels);
    Ok(out)
}

/// Inverse of [`dwt2`].
pub fn idwt2(coeffs: &[f64], nx: usize, ny: usize, levels: usize) -> Result<Vec<f64>> {
    CoefficientLayout::new(nx, ny, 1, levels)?;
    check_len("idwt2 coefficients", nx * ny, coeffs.len())?;
    let mut out = coeffs.to_vec();
    idwt2_in_place(&mut out, nx, ny, levels);
    Ok(out)
}

fn dwt2_in_place(data: &mut [f64], nx: usize, ny: usize, levels: usize) {
    let mut scratch = vec![0.0; nx.max(ny)];
    for level in 1..=levels {
        let (h, w) = (ny >> (level - 1), nx >> (level - 1));
        for r in 0..h {
            let row = &mut data[r * nx..r * nx + w];
            analyze(row, &mut scratch[..w]);
        }
        for c in 0..w {
            let mut col: Vec<f64> = (0..h).map(|r| data[r * nx + c]).collect();
            analyze(&mut col, &mut scratch[..h]);
            for r in 0..h {
                data[r * nx + c] = col[r];
            }
        }
    }
}

fn idwt2_in_place(data: &mut [f64], nx: usize, ny: usize, levels: usize) {
    let mut scratch = vec![0.0; nx.max(ny)];
    for level in (1..=levels).rev() {
        let (h, w) = (ny >> (level - 1), nx >> (level - 1));
        for c in 0..w {
            let mut col: Vec<f64> = (0..h).map(|r| data[r * nx + c]).collect();
            synthesize(&mut col, &mut scratch[..h]);
            for r in 0..h {
                data[r * nx + c] = col[r];
            }
        }
        for r in 0..h {
            let row = &mut data[r * nx..r * nx + w];
            synthesize(row, &mut scratch[..w]);
        }
    }
}

// [x0, x1, ...] -> [lows..., highs...]
fn analyze(v: &mut [f64], scratch: &mut [f64]) {
    let half = v.len() / 2;
    for k in 0..half {
        let (a, b) = (v[2 * k], v[2 * k + 1]);
        scratch[k] = (a + b) * FRAC_1_SQRT_2;
        scratch[half + k] = (a - b) * FRAC_1_SQRT_2;
    }
    v.copy_from_slice(scratch);
}

fn synthesize(v: &mut [f64], scratch: &mut [f64]) {
    let half = v.len() / 2;
    for k in 0..half {
        let (lo, hi) = (v[k], v[half + k]);
        scratch[2 * k] = (lo + hi) * FRAC_1_SQRT_2;
        scratch[2 * k + 1] = (lo - hi) * FRAC_1_SQRT_2;
    }
    v.copy_from_slice(scratch);
}

/// The basis image `Omega e_z` as `(voxel index within the volume, weight)`,
/// in row-major voxel order.
///
/// A level-`l` coefficient is supported on a `2^l x 2^l` block with weights
/// `+-2^-l`: uniform for the approximation band, split into halves across
/// rows (horizontal), columns (vertical), or both (diagonal) for details.
pub fn basis_footprint(layout: &CoefficientLayout, z: usize) -> Vec<(usize, f64)> {
    let c = layout.index(z);
    let side = 1usize << c.level;
    let half = side / 2;
    let weight = 1.0 / side as f64;
    let (r0, c0) = (c.i * side, c.j * side);
    let base = c.slice * layout.per_slice();
    let mut out = Vec::with_capacity(side * side);
    for dr in 0..side {
        for dc in 0..side {
            let top = dr < half;
            let left = dc < half;
            let sign = match c.band {
                Subband::Approx => 1.0,
                Subband::Horizontal => {
                    if top {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Subband::Vertical => {
                    if left {
                        1.0
                    } else {
                        -1.0
                    }
                }
                Subband::Diagonal => {
                    if top == left {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            out.push((base + (r0 + dr) * layout.nx + c0 + dc, sign * weight));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constant_slice_has_zero_details() {
        for levels in 0..=3 {
            let c = 0.37;
            let out = dwt2(&vec![c; 64], 8, 8, levels).unwrap();
            let layout = CoefficientLayout::new(8, 8, 1, levels).unwrap();
            for (k, v) in out.iter().enumerate() {
                if layout.index(k).band == Subband::Approx {
                    assert_relative_eq!(*v, c * (1u32 << levels) as f64, max_relative = 1e-14);
                } else {
                    assert!(v.abs() < 1e-15, "level {levels} coeff {k} = {v}");
                }
            }
        }
    }

    // explicit orthonormal 4x4 Haar matrix acting on [a, b, c, d]
    fn haar_matrix() -> [[f64; 4]; 4] {
        [
            [0.5, 0.5, 0.5, 0.5],   // approx
            [0.5, -0.5, 0.5, -0.5], // vertical
            [0.5, 0.5, -0.5, -0.5], // horizontal
            [0.5, -0.5, -0.5, 0.5], // diagonal
        ]
    }

    #[test]
    fn two_by_two_matches_matrix_oracle() {
        let x = [1.3, -0.4, 2.2, 0.9];
        let out = dwt2(&x, 2, 2, 1).unwrap();
        let m = haar_matrix();
        let expect: Vec<f64> = m
            .iter()
            .map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum())
            .collect();
        // Mallat layout of a 2x2: [approx, vertical; horizontal, diagonal]
        for k in 0..4 {
            assert_relative_eq!(out[k], expect[k], epsilon = 1e-15);
        }
        // inverse of a single approx coefficient is a uniform block of 1/2
        let img = idwt2(&[1.0, 0.0, 0.0, 0.0], 2, 2, 1).unwrap();
        for v in img {
            assert_relative_eq!(v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_image() {
        assert!(idwt2(&[0.0; 64], 8, 8, 3)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_dimensions_rejected() {
        assert!(matches!(dwt2(&[0.0; 36], 6, 6, 2), Err(Error::Config(_))));
        assert!(matches!(
            idwt2(&[0.0; 10], 4, 4, 1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn flat_index_round_trip() {
        let layout = CoefficientLayout::new(16, 8, 2, 3).unwrap();
        for k in 0..layout.len() {
            let c = layout.index(k);
            assert!(layout.is_valid(&c));
            assert_eq!(layout.flat(&c), k);
        }
    }

    #[test]
    fn footprints_match_synthesis_of_unit_vectors() {
        let layout = CoefficientLayout::new(8, 8, 1, 3).unwrap();
        for z in 0..layout.len() {
            let mut e = vec![0.0; 64];
            e[z] = 1.0;
            let img = idwt2(&e, 8, 8, 3).unwrap();
            let fp = basis_footprint(&layout, z);
            let mut dense = vec![0.0; 64];
            for &(x, w) in &fp {
                dense[x] = w;
            }
            for x in 0..64 {
                assert!((img[x] - dense[x]).abs() < 1e-15, "z={z} x={x}");
            }
        }
    }

    #[test]
    fn footprint_shapes() {
        let layout = CoefficientLayout::new(8, 8, 1, 3).unwrap();
        let approx = basis_footprint(&layout, 0);
        assert_eq!(approx.len(), 64);
        assert!(approx.iter().all(|&(_, w)| w == 0.125));

        let z = layout.flat(&CoeffIndex {
            slice: 0,
            level: 1,
            band: Subband::Horizontal,
            i: 1,
            j: 2,
        });
        let fp = basis_footprint(&layout, z);
        assert_eq!(fp.len(), 4);
        assert!(fp.iter().all(|&(_, w)| w.abs() == 0.5));
        assert_eq!(fp.iter().map(|&(_, w)| w).sum::<f64>(), 0.0);
        let voxels: Vec<usize> = fp.iter().map(|&(x, _)| x).collect();
        assert_eq!(voxels, vec![2 * 8 + 4, 2 * 8 + 5, 3 * 8 + 4, 3 * 8 + 5]);
    }

    #[test]
    fn same_level_footprints_disjoint() {
        let layout = CoefficientLayout::new(16, 16, 1, 3).unwrap();
        for level in 1..=3 {
            let (h, w) = layout.band_shape(level);
            let mut seen = vec![false; 256];
            for i in 0..h {
                for j in 0..w {
                    let z = layout.flat(&CoeffIndex {
                        slice: 0,
                        level,
                        band: Subband::Diagonal,
                        i,
                        j,
                    });
                    for (x, _) in basis_footprint(&layout, z) {
                        assert!(!seen[x]);
                        seen[x] = true;
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    proptest! {
        #[test]
        fn perfect_reconstruction_and_parseval(values in prop::collection::vec(-10.0f64..10.0, 256), levels in 0usize..=4) {
            let coeffs = dwt2(&values, 16, 16, levels).unwrap();
            let norm_x: f64 = values.iter().map(|v| v * v).sum();
            let norm_c: f64 = coeffs.iter().map(|v| v * v).sum();
            prop_assert!((norm_x - norm_c).abs() <= 1e-12 * norm_x.max(1e-300));
            let back = idwt2(&coeffs, 16, 16, levels).unwrap();
            for (a, b) in back.iter().zip(&values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
