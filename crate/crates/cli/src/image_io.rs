//! Image files: lossless raw `f64` volumes and 16-bit PGM slices for viewing.
//!
//! Raw layout, little-endian: magic `WAMI`, `u32` version, `u64` nx, ny, nz,
//! then `nx * ny * nz` values in row-major slice order.
//!
//! PGM slices are plain `P2` with maxval 65535, linearly scaled from the
//! slice minimum to its maximum, written with +y up (the last image row
//! first). The scale is recorded in a sidecar `<name>.range` holding
//! `min = ...` and `max = ...`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};

const MAGIC: &[u8; 4] = b"WAMI";
const VERSION: u32 = 1;
const PGM_MAX: f64 = 65535.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub values: Vec<f64>,
}

impl Volume {
    pub fn slice(&self, z: usize) -> &[f64] {
        let per = self.nx * self.ny;
        &self.values[z * per..(z + 1) * per]
    }

    pub fn same_shape(&self, other: &Volume) -> bool {
        (self.nx, self.ny, self.nz) == (other.nx, other.ny, other.nz)
    }
}

pub fn write_raw(path: &Path, v: &Volume) -> Result<()> {
    ensure!(
        v.values.len() == v.nx * v.ny * v.nz,
        "volume size does not match its dimensions"
    );
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for d in [v.nx, v.ny, v.nz] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for x in &v.values {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<Volume> {
    let mut r =
        BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    ensure!(&magic == MAGIC, "{} is not a raw image", path.display());
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    ensure!(
        version == VERSION,
        "{}: unsupported raw image version {version}",
        path.display()
    );
    let mut dims = [0usize; 3];
    let mut b8 = [0u8; 8];
    for d in &mut dims {
        r.read_exact(&mut b8)?;
        *d = usize::try_from(u64::from_le_bytes(b8))?;
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .context("raw image dimensions overflow")?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    ensure!(
        bytes.len() == n * 8,
        "{}: expected {} bytes of data, found {}",
        path.display(),
        n * 8,
        bytes.len()
    );
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Volume {
        nx: dims[0],
        ny: dims[1],
        nz: dims[2],
        values,
    })
}

pub fn range_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("range")
}

pub fn write_pgm(path: &Path, slice: &[f64], nx: usize, ny: usize) -> Result<()> {
    ensure!(
        slice.len() == nx * ny,
        "slice size does not match its dimensions"
    );
    let min = slice.iter().copied().fold(f64::INFINITY, f64::min);
    let max = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "P2\n{nx} {ny}\n65535")?;
    for row in (0..ny).rev() {
        let line: Vec<String> = slice[row * nx..(row + 1) * nx]
            .iter()
            .map(|&v| {
                let level = if span > 0.0 {
                    ((v - min) / span * PGM_MAX).round()
                } else {
                    0.0
                };
                (level as u32).to_string()
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    std::fs::write(range_path(path), format!("min = {min:e}\nmax = {max:e}\n"))?;
    Ok(())
}

/// Read a slice written by [`write_pgm`], undoing the scaling with the
/// sidecar range. Values are exact only to the 16-bit quantisation step.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("opening {}", path.display()))?;
    let mut tokens = text.split_whitespace();
    ensure!(
        tokens.next() == Some("P2"),
        "{} is not a plain PGM",
        path.display()
    );
    let mut next_num = |what: &str| -> Result<usize> {
        tokens
            .next()
            .with_context(|| format!("missing {what}"))?
            .parse::<usize>()
            .with_context(|| format!("bad {what}"))
    };
    let nx = next_num("width")?;
    let ny = next_num("height")?;
    let maxval = next_num("maxval")? as f64;
    let mut levels = Vec::with_capacity(nx * ny);
    for _ in 0..nx * ny {
        levels.push(next_num("pixel")? as f64);
    }

    let range = std::fs::read_to_string(range_path(path))?;
    let mut min = None;
    let mut max = None;
    for line in range.lines() {
        match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("min", v)) => min = Some(v.parse::<f64>()?),
            Some(("max", v)) => max = Some(v.parse::<f64>()?),
            _ => bail!("bad range line {line:?}"),
        }
    }
    let (min, max) = (
        min.context("range has no min")?,
        max.context("range has no max")?,
    );
    let mut values = vec![0.0; nx * ny];
    for (k, level) in levels.into_iter().enumerate() {
        let (r, c) = (ny - 1 - k / nx, k % nx);
        values[r * nx + c] = min + level / maxval * (max - min);
    }
    Ok((nx, ny, values))
}
