//! Sparse system matrix of exact ray/voxel intersection lengths.
//!
//! Rows are rays, columns are voxels. Each row is produced by a Siddon-style
//! traversal: the parametric crossings of the ray with the x and y grid planes
//! are merged in order, and every positive-length segment between consecutive
//! crossings is attributed to the voxel containing its midpoint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::geometry::{ImageGrid, Ray, ScanGeometry};

const CACHE_MAGIC: &[u8; 4] = b"WAMH";
const CACHE_VERSION: u32 = 1;

/// Row-major sparse matrix with a column-major copy for back projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    // transpose
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    t_values: Vec<f64>,
}

impl SystemMatrix {
    /// Assemble from CSR arrays. Columns within a row must be strictly
    /// increasing and all values strictly positive.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("system matrix row pointers", rows + 1, row_ptr.len())?;
        check_len("system matrix values", col_idx.len(), values.len())?;
        if row_ptr[0] != 0 || row_ptr[rows] != values.len() {
            return Err(Error::Format("row pointers do not span the entries".into()));
        }
        for r in 0..rows {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            if lo > hi {
                return Err(Error::Format(format!("row pointer decreases at row {r}")));
            }
            for k in lo..hi {
                if col_idx[k] as usize >= cols {
                    return Err(Error::Format(format!(
                        "column index {} out of range in row {r}",
                        col_idx[k]
                    )));
                }
                if k > lo && col_idx[k] <= col_idx[k - 1] {
                    return Err(Error::Format(format!("columns not increasing in row {r}")));
                }
                if !(values[k].is_finite() && values[k] > 0.0) {
                    return Err(Error::Invalid(format!(
                        "system matrix entry ({r}, {}) = {} is not strictly positive",
                        col_idx[k], values[k]
                    )));
                }
            }
        }
        let (col_ptr, row_idx, t_values) = transpose(rows, cols, &row_ptr, &col_idx, &values);
        Ok(SystemMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            t_values,
        })
    }

    /// Build from per-row `(column, value)` lists; zeros are dropped.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            let mut row: Vec<(usize, f64)> =
                row.iter().copied().filter(|&(_, v)| v != 0.0).collect();
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                col_idx.push(
                    u32::try_from(c)
                        .map_err(|_| Error::Invalid(format!("column {c} too large")))?,
                );
                values.push(v);
            }
            row_ptr.push(values.len());
        }
        SystemMatrix::from_csr(rows.len(), cols, row_ptr, col_idx, values)
    }

    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let cols = dense.first().map_or(0, Vec::len);
        let rows: Vec<Vec<(usize, f64)>> = dense
            .iter()
            .map(|r| r.iter().copied().enumerate().collect())
            .collect();
        SystemMatrix::from_rows(cols, &rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn column(&self, c: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.col_ptr[c], self.col_ptr[c + 1]);
        (&self.row_idx[lo..hi], &self.t_values[lo..hi])
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).1.iter().sum()
    }

    /// `H x`: one line integral per ray.
    pub fn forward_project(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len("forward projection", self.cols, image.len())?;
        Ok((0..self.rows)
            .into_par_iter()
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter()
                    .zip(vals)
                    .map(|(&c, &h)| h * image[c as usize])
                    .sum()
            })
            .collect())
    }

    /// `H^T w`: one value per voxel.
    pub fn back_project(&self, weights: &[f64]) -> Result<Vec<f64>> {
        check_len("back projection", self.rows, weights.len())?;
        Ok((0..self.cols)
            .into_par_iter()
            .map(|c| {
                let (rows, vals) = self.column(c);
                rows.iter()
                    .zip(vals)
                    .map(|(&r, &h)| h * weights[r as usize])
                    .sum()
            })
            .collect())
    }

    /// Persist the CSR arrays in the `WAMH` cache format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        for n in [self.rows, self.cols, self.nnz()] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        for &p in &self.row_ptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.col_idx {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SystemMatrix::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format(
                "not a system matrix cache (bad magic)".into(),
            ));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != CACHE_VERSION {
            return Err(Error::Format(format!(
                "unsupported cache version {version}"
            )));
        }
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        let nnz = read_u64(r)? as usize;
        let row_ptr = (0..=rows)
            .map(|_| read_u64(r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let col_idx = (0..nnz)
            .map(|_| read_array(r).map(u32::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..nnz)
            .map(|_| read_array(r).map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        SystemMatrix::from_csr(rows, cols, row_ptr, col_idx, values)
    }
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    read_array(r).map(u64::from_le_bytes)
}

fn transpose(
    rows: usize,
    cols: usize,
    row_ptr: &[usize],
    col_idx: &[u32],
    values: &[f64],
) -> (Vec<usize>, Vec<u32>, Vec<f64>) {
    let mut col_ptr = vec![0usize; cols + 1];
    for &c in col_idx {
        col_ptr[c as usize + 1] += 1;
    }
    for c in 0..cols {
        col_ptr[c + 1] += col_ptr[c];
    }
    let mut next = col_ptr.clone();
    let mut row_idx = vec![0u32; values.len()];
    let mut t_values = vec![0.0; values.len()];
    for r in 0..rows {
        for k in row_ptr[r]..row_ptr[r + 1] {
            let c = col_idx[k] as usize;
            row_idx[next[c]] = r as u32;
            t_values[next[c]] = values[k];
            next[c] += 1;
        }
    }
    (col_ptr, row_idx, t_values)
}

/// Intersection lengths of `ray` with the voxels of one slice of `grid`,
/// as `(in-slice voxel index, length)` sorted by voxel index.
pub fn trace_ray(grid: &ImageGrid, ray: &Ray) -> Vec<(usize, f64)> {
    let (x0, y0) = (grid.x_min(), grid.y_min());
    let (x1, y1) = (
        x0 + grid.nx as f64 * grid.voxel,
        y0 + grid.ny as f64 * grid.voxel,
    );
    let (px, py) = ray.start;
    let (dx, dy) = (ray.end.0 - px, ray.end.1 - py);
    let length = ray.length();
    if length == 0.0 {
        return Vec::new();
    }

    // clip the parameter range [0, 1] to the grid box
    let mut a_lo = 0.0f64;
    let mut a_hi = 1.0f64;
    for (p, d, lo, hi) in [(px, dx, x0, x1), (py, dy, y0, y1)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return Vec::new();
            }
        } else {
            let (ta, tb) = ((lo - p) / d, (hi - p) / d);
            a_lo = a_lo.max(ta.min(tb));
            a_hi = a_hi.min(ta.max(tb));
        }
    }
    if a_hi <= a_lo {
        return Vec::new();
    }

    let crossings = |p: f64, d: f64, origin: f64, n: usize| -> Vec<f64> {
        if d == 0.0 {
            return Vec::new();
        }
        let mut out: Vec<f64> = (0..=n)
            .map(|k| (origin + k as f64 * grid.voxel - p) / d)
            .filter(|&a| a > a_lo && a < a_hi)
            .collect();
        if d < 0.0 {
            out.reverse();
        }
        out
    };
    let ax = crossings(px, dx, x0, grid.nx);
    let ay = crossings(py, dy, y0, grid.ny);

    let mut alphas = Vec::with_capacity(ax.len() + ay.len() + 2);
    alphas.push(a_lo);
    let (mut i, mut j) = (0, 0);
    while i < ax.len() || j < ay.len() {
        if j >= ay.len() || (i < ax.len() && ax[i] <= ay[j]) {
            alphas.push(ax[i]);
            i += 1;
        } else {
            alphas.push(ay[j]);
            j += 1;
        }
    }
    alphas.push(a_hi);

    let mut row: Vec<(usize, f64)> = Vec::with_capacity(alphas.len());
    for w in alphas.windows(2) {
        let seg = w[1] - w[0];
        if seg <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let ix = (((px + mid * dx) - x0) / grid.voxel).floor();
        let iy = (((py + mid * dy) - y0) / grid.voxel).floor();
        let ix = (ix.max(0.0) as usize).min(grid.nx - 1);
        let iy = (iy.max(0.0) as usize).min(grid.ny - 1);
        let voxel = iy * grid.nx + ix;
        let len = seg * length;
        if len > 0.0 {
            row.push((voxel, len));
        }
    }
    row.sort_by_key(|&(v, _)| v);
    row.dedup_by(|next, kept| {
        if next.0 == kept.0 {
            kept.1 += next.1;
            true
        } else {
            false
        }
    });
    row
}

/// Trace every ray of the geometry. Slices are independent 2D problems, so the
/// matrix is block diagonal with one identical block per slice.
pub fn build_system_matrix(geometry: &ScanGeometry) -> Result<SystemMatrix> {
    geometry.validate()?;
    let grid = geometry.grid;
    let slice_rows: Vec<Vec<(usize, f64)>> = geometry
        .slice_rays()
        .par_iter()
        .map(|ray| trace_ray(&grid, ray))
        .collect();
    let per_slice = grid.voxels_per_slice();
    let mut rows = Vec::with_capacity(slice_rows.len() * grid.nz);
    for z in 0..grid.nz {
        rows.extend(slice_rows.iter().map(|r| {
            r.iter()
                .map(|&(v, h)| (v + z * per_slice, h))
                .collect::<Vec<_>>()
        }));
    }
    SystemMatrix::from_rows(grid.len(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> SystemMatrix {
        SystemMatrix::from_dense(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap()
    }

    #[test]
    fn axis_aligned_ray_through_unit_voxel() {
        let grid = ImageGrid::new(1, 1, 1, 1.0);
        let row = trace_ray(&grid, &Ray::new((-2.0, 0.0), (2.0, 0.0)));
        assert_eq!(row, vec![(0, 1.0)]);
    }

    #[test]
    fn diagonal_ray_through_unit_voxel() {
        let grid = ImageGrid::new(1, 1, 1, 1.0);
        let row = trace_ray(&grid, &Ray::new((-1.0, -1.0), (1.0, 1.0)));
        assert_eq!(row.len(), 1);
        assert_relative_eq!(row[0].1, std::f64::consts::SQRT_2, max_relative = 1e-14);
    }

    #[test]
    fn horizontal_ray_through_lower_row_of_2x2() {
        // voxels 0 and 1 form the lower row (y in [-edge, 0))
        let edge = 0.75;
        let grid = ImageGrid::new(2, 2, 1, edge);
        let row = trace_ray(&grid, &Ray::new((-5.0, -0.3), (5.0, -0.3)));
        assert_eq!(row.len(), 2);
        assert_eq!(row[0].0, 0);
        assert_eq!(row[1].0, 1);
        assert_relative_eq!(row[0].1, edge, max_relative = 1e-14);
        assert_relative_eq!(row[1].1, edge, max_relative = 1e-14);
        assert_relative_eq!(row[0].1 + row[1].1, 2.0 * edge, max_relative = 1e-14);
    }

    #[test]
    fn ray_missing_grid_is_empty() {
        let grid = ImageGrid::new(4, 4, 1, 1.0);
        assert!(trace_ray(&grid, &Ray::new((-10.0, 5.0), (10.0, 5.0))).is_empty());
        assert!(trace_ray(&grid, &Ray::new((3.0, -10.0), (3.0, 10.0))).is_empty());
    }

    #[test]
    fn dense_toy_products() {
        let h = toy();
        assert_eq!(h.forward_project(&[0.5, 0.2]).unwrap(), vec![0.5, 0.7]);
        assert_eq!(h.forward_project(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(h.back_project(&[1.0, 2.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(h.back_project(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let a = h.forward_project(&[1.5, 0.6]).unwrap();
        let b = h.forward_project(&[0.5, 0.2]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(*x, 3.0 * y, max_relative = 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let h = toy();
        assert!(matches!(
            h.forward_project(&[1.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            h.back_project(&[1.0, 2.0, 3.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn nonpositive_entries_rejected() {
        let r = SystemMatrix::from_csr(1, 2, vec![0, 1], vec![0], vec![-1.0]);
        assert!(r.is_err());
    }

    #[test]
    fn fan_matrix_invariants() {
        let g = ScanGeometry::fan(ImageGrid::new(16, 16, 2, 0.5), 12, 24, 0.8, 30.0, 60.0);
        let h = build_system_matrix(&g).unwrap();
        assert_eq!(h.rows(), 12 * 24 * 2);
        assert_eq!(h.cols(), 16 * 16 * 2);
        let diag = g.grid.diagonal();
        for r in 0..h.rows() {
            assert!(h.row(r).1.iter().all(|&v| v > 0.0));
            assert!(h.row_sum(r) <= diag * (1.0 + 1e-12), "row {r}");
        }
        // block diagonal: slice 1 rows only touch slice 1 voxels
        let per = 16 * 16;
        for r in 12 * 24..h.rows() {
            assert!(h.row(r).0.iter().all(|&c| c as usize >= per));
        }
        assert_eq!(h, build_system_matrix(&g).unwrap());
    }

    #[test]
    fn adjoint_identity_on_random_vectors() {
        let g = ScanGeometry::parallel(ImageGrid::new(16, 16, 1, 1.0), 20, 24, 1.0);
        let h = build_system_matrix(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x: Vec<f64> = (0..h.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..h.rows()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let hx = h.forward_project(&x).unwrap();
            let hty = h.back_project(&y).unwrap();
            let lhs: f64 = hx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&hty).map(|(a, b)| a * b).sum();
            let norm = hx.iter().map(|v| v * v).sum::<f64>().sqrt()
                * y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((lhs - rhs).abs() / norm < 1e-12);
        }
    }

    #[test]
    fn cache_file_round_trip() {
        let g = ScanGeometry::parallel(ImageGrid::new(8, 8, 1, 1.0), 6, 10, 1.0);
        let h = build_system_matrix(&g).unwrap();
        let mut buf = Vec::new();
        h.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WAMH");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(
            u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize,
            h.rows()
        );
        assert_eq!(
            u64::from_le_bytes(buf[16..24].try_into().unwrap()) as usize,
            h.cols()
        );
        assert_eq!(
            u64::from_le_bytes(buf[24..32].try_into().unwrap()) as usize,
            h.nnz()
        );
        let expected_len = 32 + 8 * (h.rows() + 1) + 4 * h.nnz() + 8 * h.nnz();
        assert_eq!(buf.len(), expected_len);
        let back = SystemMatrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, h);
        buf[0] = b'X';
        assert!(matches!(
            SystemMatrix::read_from(&mut buf.as_slice()),
            Err(Error::Format(_))
        ));
    }
}
