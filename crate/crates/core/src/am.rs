//! Unregularized alternating minimization in the voxel domain.
//!
//! Each iteration back projects the current predicted means and moves every
//! voxel by `ln(b_hat / b) / Z0`, where `b = H^T d` is fixed and
//! `Z0 = max_y sum_x h(y|x)`.

use std::time::Instant;

use crate::error::{check_len, Error, Result};
use crate::geometry::ImageGrid;
use crate::model::{i_divergence, predicted_means, AttenuationImage, TransmissionData};
use crate::projector::SystemMatrix;
use crate::record::ConvergenceRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmOptions {
    /// Clamp each update at zero. Disable to obtain the raw surrogate
    /// minimizer.
    pub clamp_nonnegative: bool,
}

impl Default for AmOptions {
    fn default() -> Self {
        AmOptions {
            clamp_nonnegative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmState {
    pub mu: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub iteration: usize,
    /// `b(x) = sum_y d(y) h(y|x)`.
    pub data_backprojection: Vec<f64>,
    pub z0: f64,
}

pub struct AlternatingMinimization<'a> {
    h: &'a SystemMatrix,
    data: &'a TransmissionData,
    options: AmOptions,
}

impl<'a> AlternatingMinimization<'a> {
    pub fn new(
        h: &'a SystemMatrix,
        data: &'a TransmissionData,
        options: AmOptions,
    ) -> Result<Self> {
        check_len("AM data", h.rows(), data.len())?;
        Ok(AlternatingMinimization { h, data, options })
    }

    pub fn init_state(&self, init: &[f64]) -> Result<AmState> {
        check_len("AM initial image", self.h.cols(), init.len())?;
        let z0 = (0..self.h.rows())
            .map(|r| self.h.row_sum(r))
            .fold(0.0, f64::max);
        if z0 <= 0.0 {
            return Err(Error::Config("no ray intersects the image".into()));
        }
        let line = self.h.forward_project(init)?;
        let q_hat = predicted_means(self.data.incident(), &line)?;
        Ok(AmState {
            mu: init.to_vec(),
            q_hat,
            iteration: 0,
            data_backprojection: self.h.back_project(self.data.counts())?,
            z0,
        })
    }

    pub fn objective(&self, state: &AmState) -> Result<f64> {
        i_divergence(self.data.counts(), &state.q_hat)
    }

    pub fn iterate(&self, state: &mut AmState) -> Result<()> {
        let b_hat = self.h.back_project(&state.q_hat)?;
        for (x, ((mu, &b), &bh)) in state
            .mu
            .iter_mut()
            .zip(&state.data_backprojection)
            .zip(&b_hat)
            .enumerate()
        {
            // voxels without data support keep their value
            if b <= 0.0 || bh <= 0.0 {
                continue;
            }
            let mut next = *mu + (bh / b).ln() / state.z0;
            if self.options.clamp_nonnegative {
                next = next.max(0.0);
            }
            if !next.is_finite() {
                return Err(Error::Numerical {
                    context: "AM voxel update",
                    index: x,
                    detail: format!("update produced {next}"),
                });
            }
            *mu = next;
        }
        let line = self.h.forward_project(&state.mu)?;
        state.q_hat = predicted_means(self.data.incident(), &line)?;
        state.iteration += 1;
        Ok(())
    }

    /// Run `iterations` updates, logging iteration 0 and then every
    /// `log_every` iterations plus the last.
    pub fn run(
        &self,
        state: &mut AmState,
        iterations: usize,
        log_every: usize,
    ) -> Result<Vec<ConvergenceRecord>> {
        let n = self.h.cols();
        let start = Instant::now();
        let mut records = vec![ConvergenceRecord {
            iter: state.iteration,
            objective: self.objective(state)?,
            elapsed_s: 0.0,
            active_set: n,
            cum_updates: 0,
        }];
        let mut updates = 0u64;
        for k in 1..=iterations {
            self.iterate(state)?;
            updates += n as u64;
            if k % log_every.max(1) == 0 || k == iterations {
                records.push(ConvergenceRecord {
                    iter: state.iteration,
                    objective: self.objective(state)?,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    active_set: n,
                    cum_updates: updates,
                });
            }
        }
        Ok(records)
    }

    pub fn image(&self, state: &AmState, grid: ImageGrid) -> Result<AttenuationImage> {
        AttenuationImage::new(grid, state.mu.clone())
    }
}
