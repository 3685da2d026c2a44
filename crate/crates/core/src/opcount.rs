//! Multiplication counts for the τ recipes, predicted and measured.
//!
//! The headline terms are the leading-order counts; secondary terms cover
//! the right-hand-side solves, block assembly and the final products with
//! `t`. Additions are not counted.

use serde::{Deserialize, Serialize};

use crate::angmom::index::block_size;
use crate::error::{MsError, Result};
use crate::partitioned_solver::{phase, PartitionScheme, SolverMode, TauResult};
use crate::scalar::Real;

/// Partition angular momentum, one for all sites or one per site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LPtSpec {
    Uniform(usize),
    PerSite(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    pub n_sc: usize,
    pub l_max: usize,
    pub l_pt: LPtSpec,
    /// Kept fraction of `B`.
    pub p: f64,
    /// Cost of one sparse multiplication relative to one dense one.
    pub c_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    TauCol { site0: usize },
    TauDiag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMode {
    Standard,
    ExactSchur,
    Ours,
    Zhang,
}

impl From<SolverMode> for CostMode {
    fn from(m: SolverMode) -> Self {
        match m {
            SolverMode::StandardDense => CostMode::Standard,
            SolverMode::ExactSchur => CostMode::ExactSchur,
            SolverMode::OursDenseB | SolverMode::OursSparseB { .. } => CostMode::Ours,
            SolverMode::Zhang => CostMode::Zhang,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NopPrediction {
    pub headline: f64,
    pub secondary: f64,
}

impl NopPrediction {
    pub fn total(&self) -> f64 {
        self.headline + self.secondary
    }
}

impl CostModel {
    pub fn new(n_sc: usize, l_max: usize, l_pt: LPtSpec, p: f64, c_s: f64) -> Result<Self> {
        let m = Self {
            n_sc,
            l_max,
            l_pt,
            p,
            c_s,
        };
        m.validate()?;
        Ok(m)
    }

    /// `l_max = 6`, `l_pt = 3`, `p = 0.01`, `c_s = 3`.
    pub fn reference(n_sc: usize) -> Self {
        Self {
            n_sc,
            l_max: 6,
            l_pt: LPtSpec::Uniform(3),
            p: 0.01,
            c_s: 3.0,
        }
    }

    /// Model matching a partition; `p` from the solver mode.
    pub fn from_scheme(scheme: &PartitionScheme, mode: SolverMode, c_s: f64) -> Result<Self> {
        Self::new(
            scheme.n_sites(),
            scheme.l_max(),
            LPtSpec::PerSite(scheme.l_pt_map().to_vec()),
            mode.p(),
            c_s,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_s >= 1.0) || !self.c_s.is_finite() {
            return Err(MsError::Domain(format!("c_s = {} must be >= 1", self.c_s)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(MsError::Domain(format!("p = {} must lie in (0, 1]", self.p)));
        }
        match &self.l_pt {
            LPtSpec::Uniform(l) if *l > self.l_max => {
                Err(MsError::Domain(format!("l_pt = {l} exceeds l_max = {}", self.l_max)))
            }
            LPtSpec::PerSite(v) if v.len() != self.n_sc => Err(MsError::Dimension(format!(
                "{} per-site l_pt values for {} sites",
                v.len(),
                self.n_sc
            ))),
            LPtSpec::PerSite(v) if v.iter().any(|&l| l > self.l_max) => {
                Err(MsError::Domain(format!("an l_pt exceeds l_max = {}", self.l_max)))
            }
            _ => Ok(()),
        }
    }

    fn l_pt_of(&self, site: usize) -> usize {
        match &self.l_pt {
            LPtSpec::Uniform(l) => *l,
            LPtSpec::PerSite(v) => v[site],
        }
    }

    pub fn nl(&self) -> f64 {
        block_size(self.l_max) as f64
    }

    /// `(n_s, n_b)` channel counts of one site.
    pub fn site_sizes(&self, site: usize) -> (f64, f64) {
        let ns = block_size(self.l_pt_of(site)) as f64;
        (ns, self.nl() - ns)
    }

    pub fn a(&self) -> f64 {
        (0..self.n_sc).map(|i| self.site_sizes(i).0).sum()
    }

    pub fn b(&self) -> f64 {
        (0..self.n_sc).map(|i| self.site_sizes(i).1).sum()
    }

    pub fn dim(&self) -> f64 {
        self.n_sc as f64 * self.nl()
    }
}

/// Average forward+backward cost of a unit-vector solve.
fn unit_solve(n: f64) -> f64 {
    2.0 * n * n / 3.0
}

/// Predicted multiplications for one (task, mode) pair.
pub fn predict_nop_detailed(model: &CostModel, task: Task, mode: CostMode) -> Result<NopPrediction> {
    model.validate()?;
    let (a, b, n, nl) = (model.a(), model.b(), model.dim(), model.nl());
    let nsc = model.n_sc as f64;
    let sparse_ab = model.c_s * model.p * a * a * b;
    if let Task::TauCol { site0 } = task {
        if site0 >= model.n_sc {
            return Err(MsError::Invalid(format!("site {site0} out of range")));
        }
    }
    let out = match (task, mode) {
        (Task::TauCol { .. }, CostMode::Standard) => NopPrediction {
            headline: n * n * n / 3.0,
            secondary: nl * unit_solve(n) + n * nl * nl,
        },
        (Task::TauDiag, CostMode::Standard) => NopPrediction {
            headline: n * n * n,
            secondary: nsc * nl * nl * nl,
        },
        (task, CostMode::ExactSchur) => NopPrediction {
            headline: n * n * n,
            secondary: match task {
                Task::TauCol { .. } => n * nl * nl,
                Task::TauDiag => nsc * nl * nl * nl,
            },
        },
        (Task::TauCol { site0 }, CostMode::Ours) => {
            let (ns0, nb0) = model.site_sizes(site0);
            NopPrediction {
                headline: a * a * a / 3.0 + sparse_ab,
                secondary: ns0 * unit_solve(a) + nb0 * a * a + b * a * nl + n * nl * nl,
            }
        }
        (Task::TauDiag, CostMode::Ours) => {
            let blocks: f64 = (0..model.n_sc)
                .map(|i| {
                    let (ns, nb) = model.site_sizes(i);
                    nb * a * (ns + nb)
                })
                .sum();
            NopPrediction {
                headline: a * a * a + sparse_ab,
                secondary: sparse_ab + blocks + nsc * nl * nl * nl,
            }
        }
        (Task::TauCol { site0 }, CostMode::Zhang) => {
            let (ns0, nb0) = model.site_sizes(site0);
            NopPrediction {
                headline: a * a * a / 3.0,
                secondary: ns0 * unit_solve(a) + nb0 * a * a + n * nl * nl,
            }
        }
        (Task::TauDiag, CostMode::Zhang) => {
            let blocks: f64 = (0..model.n_sc)
                .map(|i| {
                    let (ns, nb) = model.site_sizes(i);
                    ns * a * nb
                })
                .sum();
            NopPrediction {
                headline: a * a * a,
                secondary: blocks + nsc * nl * nl * nl,
            }
        }
    };
    Ok(out)
}

/// Leading-order count.
pub fn predict_nop(model: &CostModel, task: Task, mode: CostMode) -> Result<f64> {
    Ok(predict_nop_detailed(model, task, mode)?.headline)
}

/// `N_op(ours) / N_op(standard)` from the headline counts.
pub fn headline_ratio(model: &CostModel, task: Task) -> Result<f64> {
    Ok(predict_nop(model, task, CostMode::Ours)? / predict_nop(model, task, CostMode::Standard)?)
}

/// Headline-plus-secondary count in the units the solver counts
/// (each sparse multiplication counted once, so `c_s` is forced to 1).
pub fn predict_counted(model: &CostModel, task: Task, mode: CostMode) -> Result<f64> {
    let unit = CostModel {
        c_s: 1.0,
        ..model.clone()
    };
    Ok(predict_nop_detailed(&unit, task, mode)?.total())
}

/// Multiplications recorded during a solve.
pub fn measure_nop<T: Real>(result: &TauResult<T>) -> u64 {
    result.ops.mults
}

/// Time per sparse `B` multiplication over time per LU multiplication, from
/// the phase timings of one solve. `None` without a timed `B` product.
pub fn measured_c_s<T: Real>(result: &TauResult<T>) -> Option<f64> {
    let bp = result.phase(phase::B_PRODUCT)?;
    let f = result.phase(phase::FACTOR)?;
    if bp.mults == 0 || f.mults == 0 || f.nanos == 0 {
        return None;
    }
    let per_b = bp.nanos as f64 / bp.mults as f64;
    let per_f = f.nanos as f64 / f.mults as f64;
    Some(per_b / per_f)
}

/// `|measured − predicted| / predicted`.
pub fn relative_deviation(measured: u64, predicted: f64) -> f64 {
    (measured as f64 - predicted).abs() / predicted
}
