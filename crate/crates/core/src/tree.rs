//! The active coefficient set, kept closed under the quadtree parent relation.
//!
//! Approximation coefficients are always active. Detail coefficients are
//! activated as triples (horizontal, vertical, diagonal at one level and
//! position). A triple at level `l < L` may be active only if the triple at
//! `(l + 1, i / 2, j / 2)` is.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::haar::{CoeffIndex, CoefficientLayout, Subband, WaveletCoefficients};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveTree {
    layout: CoefficientLayout,
    // [slice][level - 1][i * cols + j]
    triples: Vec<Vec<Vec<bool>>>,
}

impl ActiveTree {
    /// Approximation roots only.
    pub fn approx_only(layout: CoefficientLayout) -> Self {
        let triples = (0..layout.nz)
            .map(|_| {
                (1..=layout.levels)
                    .map(|l| {
                        let (h, w) = layout.band_shape(l);
                        vec![false; h * w]
                    })
                    .collect()
            })
            .collect();
        ActiveTree { layout, triples }
    }

    /// Every coefficient active.
    pub fn full(layout: CoefficientLayout) -> Self {
        let mut t = ActiveTree::approx_only(layout);
        for slice in &mut t.triples {
            for level in slice {
                level.fill(true);
            }
        }
        t
    }

    pub fn layout(&self) -> &CoefficientLayout {
        &self.layout
    }

    pub fn triple_active(&self, slice: usize, level: usize, i: usize, j: usize) -> bool {
        let (_, w) = self.layout.band_shape(level);
        self.triples[slice][level - 1][i * w + j]
    }

    pub fn is_active(&self, c: &CoeffIndex) -> bool {
        match c.band {
            Subband::Approx => true,
            _ => self.triple_active(c.slice, c.level, c.i, c.j),
        }
    }

    /// Activate the triple at `(slice, level, i, j)` and any missing ancestors.
    pub fn activate(&mut self, slice: usize, level: usize, i: usize, j: usize) -> usize {
        let mut added = 0;
        let (mut i, mut j) = (i, j);
        for l in level..=self.layout.levels {
            let (_, w) = self.layout.band_shape(l);
            let cell = &mut self.triples[slice][l - 1][i * w + j];
            if !*cell {
                *cell = true;
                added += 3;
            }
            i /= 2;
            j /= 2;
        }
        added
    }

    pub fn len(&self) -> usize {
        let details: usize = self
            .triples
            .iter()
            .flatten()
            .map(|lv| lv.iter().filter(|&&a| a).count())
            .sum();
        self.layout.approx_count() * self.layout.nz + 3 * details
    }

    /// Never true: approximation roots are always present.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Active coefficients in a fixed order: per slice, approximation band
    /// row-major, then detail triples from the coarsest level down.
    pub fn active_indices(&self) -> Vec<CoeffIndex> {
        let l = &self.layout;
        let mut out = Vec::with_capacity(self.len());
        for slice in 0..l.nz {
            let (h, w) = l.band_shape(l.levels);
            for i in 0..h {
                for j in 0..w {
                    out.push(CoeffIndex {
                        slice,
                        level: l.levels,
                        band: Subband::Approx,
                        i,
                        j,
                    });
                }
            }
            for level in (1..=l.levels).rev() {
                let (h, w) = l.band_shape(level);
                for i in 0..h {
                    for j in 0..w {
                        if self.triples[slice][level - 1][i * w + j] {
                            for band in Subband::DETAILS {
                                out.push(CoeffIndex {
                                    slice,
                                    level,
                                    band,
                                    i,
                                    j,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn active_flat(&self) -> Vec<usize> {
        self.active_indices()
            .iter()
            .map(|c| self.layout.flat(c))
            .collect()
    }

    /// Structural closure check: every active triple below the coarsest
    /// level has an active parent.
    pub fn is_closed(&self) -> bool {
        let l = &self.layout;
        (0..l.nz).all(|s| {
            (1..l.levels).all(|level| {
                let (h, w) = l.band_shape(level);
                (0..h).all(|i| {
                    (0..w).all(|j| {
                        !self.triple_active(s, level, i, j)
                            || self.triple_active(s, level + 1, i / 2, j / 2)
                    })
                })
            })
        })
    }

    /// True when every coefficient active in `other` is active here.
    pub fn contains(&self, other: &ActiveTree) -> bool {
        self.layout == other.layout
            && self
                .triples
                .iter()
                .flatten()
                .flatten()
                .zip(other.triples.iter().flatten().flatten())
                .all(|(&a, &b)| a || !b)
    }

    /// Text manifest: a header comment, then one `slice level band i j` line
    /// per active coefficient.
    pub fn to_manifest(&self) -> String {
        let l = &self.layout;
        let mut s = format!(
            "# nx={} ny={} nz={} levels={}\n",
            l.nx, l.ny, l.nz, l.levels
        );
        for c in self.active_indices() {
            let _ = writeln!(s, "{} {} {} {} {}", c.slice, c.level, c.band, c.i, c.j);
        }
        s
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty tree manifest".into()))?;
        let mut dims = [None; 4];
        for field in header.trim_start_matches('#').split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad manifest header field {field:?}")))?;
            let slot = match key {
                "nx" => 0,
                "ny" => 1,
                "nz" => 2,
                "levels" => 3,
                _ => {
                    return Err(Error::Format(format!(
                        "unknown manifest header key {key:?}"
                    )))
                }
            };
            dims[slot] = Some(
                value
                    .parse::<usize>()
                    .map_err(|e| Error::Format(format!("manifest header {key}: {e}")))?,
            );
        }
        let [Some(nx), Some(ny), Some(nz), Some(levels)] = dims else {
            return Err(Error::Format(
                "manifest header must name nx, ny, nz, levels".into(),
            ));
        };
        let layout = CoefficientLayout::new(nx, ny, nz, levels)?;
        let mut tree = ActiveTree::approx_only(layout);
        for (n, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Format(format!("manifest line {}: {msg}", n + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(format!("expected 5 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
            let c = CoeffIndex {
                slice: num(f[0])?,
                level: num(f[1])?,
                band: f[2].parse().map_err(|e: Error| bad(e.to_string()))?,
                i: num(f[3])?,
                j: num(f[4])?,
            };
            if !layout.is_valid(&c) {
                return Err(bad(format!("coefficient {c:?} outside the layout")));
            }
            if c.band != Subband::Approx {
                let (_, w) = layout.band_shape(c.level);
                tree.triples[c.slice][c.level - 1][c.i * w + c.j] = true;
            }
        }
        if !tree.is_closed() {
            return Err(Error::Format(
                "manifest describes a tree that is not parent-closed".into(),
            ));
        }
        Ok(tree)
    }
}

/// Outcome of one expansion step.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub tree: ActiveTree,
    /// Pixels of the z-summed image above the threshold.
    pub marked_pixels: usize,
    /// Coefficients newly activated.
    pub added: usize,
}

/// Grow the tree by one level where the image is bright.
///
/// The coefficients are synthesized to image space, summed over slices, and
/// every pixel whose summed value exceeds `threshold_factor` times the
/// maximum is marked. For each marked pixel the coarsest inactive detail
/// triple whose support contains it is activated, in every slice. If the
/// maximum is not positive nothing is marked.
pub fn expand_tree(
    tree: &ActiveTree,
    beta: &WaveletCoefficients,
    threshold_factor: f64,
) -> Result<Expansion> {
    let layout = *tree.layout();
    if beta.layout != layout {
        return Err(Error::Invalid(
            "coefficients and tree have different layouts".into(),
        ));
    }
    if !threshold_factor.is_finite() {
        return Err(Error::Config(format!(
            "threshold factor {threshold_factor} is not finite"
        )));
    }
    let image = beta.to_image();
    let per = layout.per_slice();
    let mut summed = vec![0.0; per];
    for slice in image.chunks(per) {
        for (s, v) in summed.iter_mut().zip(slice) {
            *s += v;
        }
    }
    let max = summed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut next = tree.clone();
    let mut marked = 0;
    let mut added = 0;
    if max > 0.0 {
        let threshold = threshold_factor * max;
        for (p, &v) in summed.iter().enumerate() {
            if v <= threshold {
                continue;
            }
            marked += 1;
            let (row, col) = (p / layout.nx, p % layout.nx);
            for slice in 0..layout.nz {
                // decide against the incoming tree so one call expands one level
                let level = (1..=layout.levels)
                    .rev()
                    .find(|&l| !tree.triple_active(slice, l, row >> l, col >> l));
                if let Some(l) = level {
                    added += next.activate(slice, l, row >> l, col >> l);
                }
            }
        }
    }
    Ok(Expansion {
        tree: next,
        marked_pixels: marked,
        added,
    })
}
