//! Alternating minimization over an adaptive set of Haar coefficients.
//!
//! The image is `mu = Omega beta`. Each iteration works with the composite
//! columns `phi(. | z)` of `Phi = H Omega` for the active coefficients only:
//!
//! * `q_hat(y) = I0(y) exp(-sum_z phi(y|z) beta(z))`, shared by all updates;
//! * `Z0 = max_y sum_{z active} |phi(y|z)|`;
//! * `b_plus(z)` / `b_minus(z)`: back projections of `q_hat` through the
//!   positive / negative entries of `phi(. | z)`;
//! * each active coefficient jumps to the zero of the one-dimensional
//!   surrogate gradient
//!   `b - b_plus exp(-Z0 (beta - beta_hat)) - b_minus exp(Z0 (beta - beta_hat))`.
//!
//! With `Sum_z |phi(y|z)| / Z0 <= 1` for every ray, the convex decomposition
//! makes the summed surrogate an upper bound on the I-divergence that touches
//! it at `beta_hat`, so the objective cannot increase.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::columns::{SparseColumn, WaveletSystemColumns};
use crate::error::{check_len, Error, Result};
use crate::geometry::ImageGrid;
use crate::haar::{CoefficientLayout, WaveletCoefficients};
use crate::model::{
    i_divergence, predicted_means, AttenuationImage, ClampReport, TransmissionData,
};
use crate::projector::SystemMatrix;
use crate::record::ConvergenceRecord;
use crate::tree::{expand_tree, ActiveTree};

/// Result of solving one coefficient's first-order condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientUpdate {
    Updated(f64),
    /// `b_plus = b_minus = 0`: no ray sees the coefficient.
    Skipped,
    /// The sign pattern admits no positive root; the coefficient is kept.
    NoRoot,
}

/// Closed-form minimizer of the one-dimensional surrogate.
///
/// With `u = exp(-Z0 (beta - beta_hat))` the first-order condition becomes
/// `b_plus u^2 - b u + b_minus = 0`. Since `b_minus <= 0 <= b_plus` there is
/// at most one positive root. It is evaluated without cancellation:
/// `(b + s) / (2 b_plus)` for `b >= 0` and `2 b_minus / (b - s)` for `b < 0`,
/// where `s = sqrt(b^2 - 4 b_plus b_minus)`. The second form also covers
/// `b_plus = 0`.
pub fn solve_coefficient_update(
    b: f64,
    b_plus: f64,
    b_minus: f64,
    z0: f64,
    beta_hat: f64,
) -> CoefficientUpdate {
    if b_plus == 0.0 && b_minus == 0.0 {
        return CoefficientUpdate::Skipped;
    }
    let s = (b * b - 4.0 * b_plus * b_minus).sqrt();
    let u = if b >= 0.0 {
        if b_plus <= 0.0 {
            return CoefficientUpdate::NoRoot;
        }
        (b + s) / (2.0 * b_plus)
    } else {
        if b_minus >= 0.0 {
            return CoefficientUpdate::NoRoot;
        }
        2.0 * b_minus / (b - s)
    };
    if !(u > 0.0 && u.is_finite()) {
        return CoefficientUpdate::NoRoot;
    }
    let beta = beta_hat - u.ln() / z0;
    if beta.is_finite() {
        CoefficientUpdate::Updated(beta)
    } else {
        CoefficientUpdate::NoRoot
    }
}

/// Derivative of the coefficient's surrogate at `beta`.
pub fn surrogate_gradient(
    b: f64,
    b_plus: f64,
    b_minus: f64,
    z0: f64,
    beta_hat: f64,
    beta: f64,
) -> f64 {
    let t = z0 * (beta - beta_hat);
    b - b_plus * (-t).exp() - b_minus * t.exp()
}

/// Per-coefficient statistics for the current iteration, aligned with
/// [`WamState::active`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurrogateStats {
    pub b: Vec<f64>,
    pub b_plus: Vec<f64>,
    pub b_minus: Vec<f64>,
    pub z0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WamCounters {
    /// Coefficient root solves attempted (one per active coefficient per iteration).
    pub coefficient_updates: u64,
    /// Column nonzeros visited while accumulating `b_plus` / `b_minus`.
    pub column_work: u64,
    pub skipped: u64,
    pub no_root: u64,
}

#[derive(Debug, Clone)]
pub struct WamState {
    pub beta: WaveletCoefficients,
    pub tree: ActiveTree,
    active: Vec<usize>,
    /// `b(z) = sum_y d(y) phi(y|z)`, filled in as coefficients become active.
    data_backprojection: HashMap<usize, f64>,
    pub stats: SurrogateStats,
    pub line_integrals: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub iteration: usize,
    pub counters: WamCounters,
}

impl WamState {
    /// Flat indices of the active coefficients, in update order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn data_backprojection(&self, z: usize) -> Option<f64> {
        self.data_backprojection.get(&z).copied()
    }
}

/// When and how strongly to grow the active tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionSchedule {
    /// Expand after this many completed iterations.
    pub at: Vec<usize>,
    pub threshold_factor: f64,
}

impl Default for ExpansionSchedule {
    fn default() -> Self {
        ExpansionSchedule {
            at: vec![64, 128, 256],
            threshold_factor: 0.1,
        }
    }
}

impl ExpansionSchedule {
    pub fn none() -> Self {
        ExpansionSchedule {
            at: Vec::new(),
            threshold_factor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionEvent {
    pub iteration: usize,
    pub marked_pixels: usize,
    pub added: usize,
    pub tree: ActiveTree,
}

#[derive(Debug, Clone)]
pub struct WamRun {
    pub records: Vec<ConvergenceRecord>,
    pub expansions: Vec<ExpansionEvent>,
}

pub struct WaveletAm<'a> {
    h: &'a SystemMatrix,
    data: &'a TransmissionData,
    grid: ImageGrid,
    layout: CoefficientLayout,
    columns: WaveletSystemColumns,
}

impl<'a> WaveletAm<'a> {
    pub fn new(
        h: &'a SystemMatrix,
        data: &'a TransmissionData,
        grid: ImageGrid,
        levels: usize,
    ) -> Result<Self> {
        WaveletAm::with_column_cap(h, data, grid, levels, None)
    }

    pub fn with_column_cap(
        h: &'a SystemMatrix,
        data: &'a TransmissionData,
        grid: ImageGrid,
        levels: usize,
        cap: Option<usize>,
    ) -> Result<Self> {
        grid.validate()?;
        check_len("wavelet AM data", h.rows(), data.len())?;
        check_len("wavelet AM grid", h.cols(), grid.len())?;
        let layout = CoefficientLayout::new(grid.nx, grid.ny, grid.nz, levels)?;
        Ok(WaveletAm {
            h,
            data,
            grid,
            layout,
            columns: WaveletSystemColumns::with_capacity(layout, cap),
        })
    }

    pub fn layout(&self) -> &CoefficientLayout {
        &self.layout
    }

    pub fn columns(&self) -> &WaveletSystemColumns {
        &self.columns
    }

    /// State with the approximation roots active and `beta = init`
    /// (zero when `None`).
    pub fn init_state(&self, init: Option<WaveletCoefficients>) -> Result<WamState> {
        self.init_state_with_tree(init, ActiveTree::approx_only(self.layout))
    }

    pub fn init_state_with_tree(
        &self,
        init: Option<WaveletCoefficients>,
        tree: ActiveTree,
    ) -> Result<WamState> {
        let beta = init.unwrap_or_else(|| WaveletCoefficients::zeros(self.layout));
        if beta.layout != self.layout || *tree.layout() != self.layout {
            return Err(Error::Config(
                "initial coefficients or tree do not match the solver layout".into(),
            ));
        }
        let mut state = WamState {
            beta,
            tree,
            active: Vec::new(),
            data_backprojection: HashMap::new(),
            stats: SurrogateStats::default(),
            line_integrals: Vec::new(),
            q_hat: Vec::new(),
            iteration: 0,
            counters: WamCounters::default(),
        };
        self.refresh_tree(&mut state)?;
        Ok(state)
    }

    fn active_columns(&self, active: &[usize]) -> Vec<Arc<SparseColumn>> {
        active
            .par_iter()
            .map(|&z| self.columns.phi_column(z, self.h))
            .collect()
    }

    /// Recompute everything that depends on the active set: the update
    /// order, `b(z)` for newly active coefficients, `Z0`, and the line
    /// integrals (resynchronised from `beta`).
    fn refresh_tree(&self, state: &mut WamState) -> Result<()> {
        state.active = state.tree.active_flat();
        let cols = self.active_columns(&state.active);
        let counts = self.data.counts();
        let missing: Vec<(usize, f64)> = state
            .active
            .par_iter()
            .zip(&cols)
            .filter(|(z, _)| !state.data_backprojection.contains_key(z))
            .map(|(&z, col)| (z, col.iter().map(|(y, v)| counts[y] * v).sum()))
            .collect();
        state.data_backprojection.extend(missing);
        state.stats.b = state
            .active
            .iter()
            .map(|z| state.data_backprojection[z])
            .collect();

        let mut row_abs = vec![0.0; self.h.rows()];
        for col in &cols {
            for (y, v) in col.iter() {
                row_abs[y] += v.abs();
            }
        }
        let z0 = row_abs.iter().copied().fold(0.0, f64::max);
        if z0.is_nan() || z0 <= 0.0 {
            return Err(Error::Config(
                "no ray intersects any active coefficient".into(),
            ));
        }
        state.stats.z0 = z0;

        let image = state.beta.to_image();
        state.line_integrals = self.h.forward_project(&image)?;
        state.q_hat = predicted_means(self.data.incident(), &state.line_integrals)?;
        Ok(())
    }

    pub fn objective(&self, state: &WamState) -> Result<f64> {
        i_divergence(self.data.counts(), &state.q_hat)
    }

    /// One simultaneous update of every active coefficient from a shared
    /// `q_hat`.
    pub fn iterate(&self, state: &mut WamState) -> Result<()> {
        let cols = self.active_columns(&state.active);
        let q = &state.q_hat;
        let (b_plus, b_minus): (Vec<f64>, Vec<f64>) = cols
            .par_iter()
            .map(|col| {
                let (mut pos, mut neg) = (0.0, 0.0);
                for (y, v) in col.iter() {
                    if v > 0.0 {
                        pos += q[y] * v;
                    } else {
                        neg += q[y] * v;
                    }
                }
                (pos, neg)
            })
            .unzip();
        state.counters.column_work += cols.iter().map(|c| c.nnz() as u64).sum::<u64>();
        state.stats.b_plus = b_plus;
        state.stats.b_minus = b_minus;

        let z0 = state.stats.z0;
        let updates: Vec<CoefficientUpdate> = (0..state.active.len())
            .into_par_iter()
            .map(|k| {
                let z = state.active[k];
                solve_coefficient_update(
                    state.stats.b[k],
                    state.stats.b_plus[k],
                    state.stats.b_minus[k],
                    z0,
                    state.beta.values[z],
                )
            })
            .collect();

        // scatter in active order so the line integrals are reproducible
        for ((&z, col), update) in state.active.iter().zip(&cols).zip(&updates) {
            state.counters.coefficient_updates += 1;
            match *update {
                CoefficientUpdate::Updated(next) => {
                    let delta = next - state.beta.values[z];
                    state.beta.values[z] = next;
                    if delta != 0.0 {
                        for (y, v) in col.iter() {
                            state.line_integrals[y] += v * delta;
                        }
                    }
                }
                CoefficientUpdate::Skipped => state.counters.skipped += 1,
                CoefficientUpdate::NoRoot => state.counters.no_root += 1,
            }
        }
        state.q_hat =
            predicted_means(self.data.incident(), &state.line_integrals).map_err(|e| match e {
                Error::Numerical { index, detail, .. } => Error::Numerical {
                    context: "wavelet AM predicted means",
                    index,
                    detail: format!("{detail} (iteration {})", state.iteration + 1),
                },
                other => other,
            })?;
        state.iteration += 1;
        Ok(())
    }

    /// Grow the tree with the thresholded-image policy and refresh the
    /// surrogate statistics for the enlarged set.
    pub fn expand(&self, state: &mut WamState, threshold_factor: f64) -> Result<ExpansionEvent> {
        let e = expand_tree(&state.tree, &state.beta, threshold_factor)?;
        state.tree = e.tree;
        self.refresh_tree(state)?;
        Ok(ExpansionEvent {
            iteration: state.iteration,
            marked_pixels: e.marked_pixels,
            added: e.added,
            tree: state.tree.clone(),
        })
    }

    /// Run `iterations` updates, expanding the tree whenever the number of
    /// completed iterations hits an entry of the schedule.
    pub fn run(
        &self,
        state: &mut WamState,
        iterations: usize,
        schedule: &ExpansionSchedule,
        log_every: usize,
    ) -> Result<WamRun> {
        let start = Instant::now();
        let mut records = vec![ConvergenceRecord {
            iter: state.iteration,
            objective: self.objective(state)?,
            elapsed_s: 0.0,
            active_set: state.active.len(),
            cum_updates: state.counters.coefficient_updates,
        }];
        let mut expansions = Vec::new();
        for k in 1..=iterations {
            if schedule.at.contains(&state.iteration) && state.iteration > 0 {
                expansions.push(self.expand(state, schedule.threshold_factor)?);
            }
            self.iterate(state)?;
            if k % log_every.max(1) == 0 || k == iterations {
                records.push(ConvergenceRecord {
                    iter: state.iteration,
                    objective: self.objective(state)?,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    active_set: state.active.len(),
                    cum_updates: state.counters.coefficient_updates,
                });
            }
        }
        Ok(WamRun {
            records,
            expansions,
        })
    }

    /// `Omega beta` without any clamping.
    pub fn raw_image(&self, state: &WamState) -> Result<AttenuationImage> {
        AttenuationImage::new(self.grid, state.beta.to_image())
    }

    /// Output image: `Omega beta` clamped at zero, with the clamp reported.
    pub fn final_image(&self, state: &WamState) -> Result<(AttenuationImage, ClampReport)> {
        let mut img = self.raw_image(state)?;
        let report = img.clamp_nonnegative();
        Ok((img, report))
    }
}
