//! Scattering-path operator `τ = (I − t g)⁻¹ t` by dense LU, by exact block
//! inversion, and by the partitioned approximation with `D ≈ I`.
//!
//! Channels with `l <= l_pt` of all sites form the `a` block and the rest
//! the `b` block. The approximate modes never build `D`; Zhang's mode
//! truncates `t` above `l_pt` while forming `M`, and the final
//! multiplication by `t` uses the full site matrices.

pub mod partition;
pub mod schur;
pub mod sparse;

use std::time::Instant;

use num_complex::Complex;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, OpCounter};
use crate::propagator::StructureConstants;
use crate::scalar::Real;

pub use partition::{
    assemble_blocks, assemble_m, partition, reassemble, truncate_t, zhang_blocks, PartitionScheme,
    PartitionedM,
};
pub use schur::{approx_inverse_blocks, exact_schur_inverse, InverseBlocks};
pub use sparse::{sparse_stats, sparsify_b, sparsify_b_per_block, SparseMatrix, SparseStats, SparsityScope};

use schur::factor_checked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverMode {
    StandardDense,
    ExactSchur,
    OursDenseB,
    OursSparseB { p: f64 },
    Zhang,
}

impl SolverMode {
    pub fn label(&self) -> String {
        match self {
            SolverMode::StandardDense => "standard".into(),
            SolverMode::ExactSchur => "exact-schur".into(),
            SolverMode::OursDenseB => "ours".into(),
            SolverMode::OursSparseB { p } => format!("ours-sparse-p{p}"),
            SolverMode::Zhang => "zhang".into(),
        }
    }

    /// Kept fraction of `B` (1 for every mode without thresholding).
    pub fn p(&self) -> f64 {
        match self {
            SolverMode::OursSparseB { p } => *p,
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SolverMode::OursSparseB { p } = self {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(MsError::Domain(format!("kept fraction p = {p} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Extra knobs for the thresholded mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Reuse this `|B|` threshold instead of selecting the top `p`.
    pub reuse_threshold: Option<f64>,
    pub scope: SparsityScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauKind {
    Column { site0: usize },
    Diagonal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TauValues<T: Real> {
    /// `τ^{i0}` stacked over `i`: `(N (l_max+1)²) × (l_max+1)²`, composite rows.
    Column(DenseMatrix<T>),
    /// `τ^{ii}` per site.
    Diagonal(Vec<DenseMatrix<T>>),
}

impl<T: Real> TauValues<T> {
    fn flat(&self) -> Vec<Complex<T>> {
        match self {
            TauValues::Column(m) => m.as_slice().to_vec(),
            TauValues::Diagonal(v) => v.iter().flat_map(|m| m.as_slice().iter().copied()).collect(),
        }
    }

    fn shape(&self) -> Vec<(usize, usize)> {
        match self {
            TauValues::Column(m) => vec![(m.rows(), m.cols())],
            TauValues::Diagonal(v) => v.iter().map(|m| (m.rows(), m.cols())).collect(),
        }
    }
}

/// Counted multiplications and time of one solver phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStat {
    pub name: String,
    pub mults: u64,
    pub nanos: u128,
}

#[derive(Debug, Clone)]
pub struct TauResult<T: Real> {
    pub which: TauKind,
    pub mode: SolverMode,
    pub values: TauValues<T>,
    pub ops: OpCounter,
    pub phases: Vec<PhaseStat>,
    pub wall_ms: f64,
    pub rcond: f64,
    pub sparse: Option<SparseStats>,
}

impl<T: Real> TauResult<T> {
    /// The `(l_max+1)²` block `τ^{ii}` (diagonal results) or `τ^{i0}`
    /// (column results).
    pub fn site_block(&self, i: usize) -> DenseMatrix<T> {
        match &self.values {
            TauValues::Column(m) => {
                let nl = m.cols();
                m.block(i * nl, 0, nl, nl)
            }
            TauValues::Diagonal(v) => v[i].clone(),
        }
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseStat> {
        self.phases.iter().find(|p| p.name == name)
    }
}

struct Phases {
    list: Vec<PhaseStat>,
    total: OpCounter,
}

impl Phases {
    fn new() -> Self {
        Self {
            list: Vec::new(),
            total: OpCounter::new(),
        }
    }

    fn run<R>(&mut self, name: &str, f: impl FnOnce(&mut OpCounter) -> Result<R>) -> Result<R> {
        let mut ops = OpCounter::new();
        let start = Instant::now();
        let out = f(&mut ops)?;
        let nanos = start.elapsed().as_nanos();
        self.total.merge(&ops);
        match self.list.iter_mut().find(|p| p.name == name) {
            Some(p) => {
                p.mults += ops.mults;
                p.nanos += nanos;
            }
            None => self.list.push(PhaseStat {
                name: name.to_string(),
                mults: ops.mults,
                nanos,
            }),
        }
        Ok(out)
    }
}

/// Phase names used in [`TauResult::phases`].
pub mod phase {
    pub const B_PRODUCT: &str = "b-product";
    pub const FACTOR: &str = "factor";
    pub const SOLVE: &str = "solve";
    pub const BLOCKS: &str = "blocks";
    pub const T_MULTIPLY: &str = "t-multiply";
}

/// Per-site `t` and the structure constants at one energy.
#[derive(Debug, Clone)]
pub struct ScatteringSystem<T: Real> {
    scheme: PartitionScheme,
    t_sites: Vec<DenseMatrix<T>>,
    g: StructureConstants<T>,
}

enum BSource<T: Real> {
    Dense,
    Sparse(SparseMatrix<T>),
}

impl<T: Real> ScatteringSystem<T> {
    pub fn new(scheme: PartitionScheme, t_sites: Vec<DenseMatrix<T>>, g: StructureConstants<T>) -> Result<Self> {
        if scheme.n_sites() != g.n_sites() || scheme.l_max() != g.l_max() {
            return Err(MsError::Dimension(format!(
                "partition for {} sites / l_max {} but g for {} sites / l_max {}",
                scheme.n_sites(),
                scheme.l_max(),
                g.n_sites(),
                g.l_max()
            )));
        }
        let nl = scheme.nl();
        if t_sites.len() != scheme.n_sites() || t_sites.iter().any(|t| t.rows() != nl || t.cols() != nl) {
            return Err(MsError::Dimension("t-matrices do not match the partition".into()));
        }
        Ok(Self { scheme, t_sites, g })
    }

    pub fn scheme(&self) -> &PartitionScheme {
        &self.scheme
    }

    pub fn t_sites(&self) -> &[DenseMatrix<T>] {
        &self.t_sites
    }

    pub fn g(&self) -> &StructureConstants<T> {
        &self.g
    }

    pub fn assemble_m(&self) -> Result<DenseMatrix<T>> {
        assemble_m(&self.t_sites, &self.g)
    }

    fn site_composite(&self, site: usize) -> Vec<usize> {
        let nl = self.scheme.nl();
        (site * nl..(site + 1) * nl).collect()
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.scheme.n_sites() {
            return Err(MsError::Invalid(format!(
                "site {site} out of range (cluster has {})",
                self.scheme.n_sites()
            )));
        }
        Ok(())
    }

    fn b_source(
        &self,
        blocks: &PartitionedM<T>,
        mode: SolverMode,
        opts: &SolveOptions,
    ) -> Result<(BSource<T>, Option<SparseStats>)> {
        let SolverMode::OursSparseB { p } = mode else {
            return Ok((BSource::Dense, None));
        };
        let (sp, thr) = match (opts.scope, opts.reuse_threshold) {
            (_, Some(th)) => sparsify_b(&blocks.b, p, Some(th))?,
            (SparsityScope::Global, None) => sparsify_b(&blocks.b, p, None)?,
            (SparsityScope::PerBlock, None) => {
                let rows: Vec<_> = (0..self.scheme.n_sites()).map(|i| self.scheme.small_range(i)).collect();
                let cols: Vec<_> = (0..self.scheme.n_sites()).map(|i| self.scheme.large_range(i)).collect();
                sparsify_b_per_block(&blocks.b, p, &rows, &cols)?
            }
        };
        let stats = sparse_stats(&sp, p, thr, opts.reuse_threshold.is_some());
        Ok((BSource::Sparse(sp), Some(stats)))
    }

    /// `τ^{i0}` for all `i`.
    pub fn tau_col(&self, site0: usize, mode: SolverMode, opts: &SolveOptions) -> Result<TauResult<T>> {
        self.check_site(site0)?;
        mode.validate()?;
        let start = Instant::now();
        let mut ph = Phases::new();
        let sc = &self.scheme;
        let nl = sc.nl();
        let t0 = &self.t_sites[site0];
        let mut sparse_info = None;
        let (column, rcond) = match mode {
            SolverMode::StandardDense => {
                let m = self.assemble_m()?;
                let (lu, rc) = ph.run(phase::FACTOR, |o| factor_checked(&m, "M = I - t g", o))?;
                let cols = ph.run(phase::SOLVE, |o| Ok(lu.solve_unit_columns(&self.site_composite(site0), o)))?;
                (cols, rc)
            }
            SolverMode::ExactSchur => {
                let blocks = assemble_blocks(&self.t_sites, &self.g, sc, true)?;
                let inv = ph.run(phase::FACTOR, |o| exact_schur_inverse(&blocks, o))?;
                let full = inv.assemble(sc)?;
                let all: Vec<usize> = (0..sc.dim()).collect();
                (full.select(&all, &self.site_composite(site0)), inv.rcond)
            }
            SolverMode::OursDenseB | SolverMode::OursSparseB { .. } | SolverMode::Zhang => {
                let blocks = if mode == SolverMode::Zhang {
                    zhang_blocks(&self.t_sites, &self.g, sc)?
                } else {
                    assemble_blocks(&self.t_sites, &self.g, sc, false)?
                };
                let (bsrc, stats) = self.b_source(&blocks, mode, opts)?;
                sparse_info = stats;
                let small = if mode == SolverMode::Zhang {
                    blocks.a.clone()
                } else {
                    let bc = ph.run(phase::B_PRODUCT, |o| match &bsrc {
                        BSource::Sparse(sp) => sp.mul_dense(&blocks.c, o),
                        BSource::Dense => blocks.b.matmul(&blocks.c, o),
                    })?;
                    blocks.a.sub(&bc)?
                };
                let (lu, rc) = ph.run(phase::FACTOR, |o| factor_checked(&small, "A - B C", o))?;
                let s0 = sc.small_range(site0);
                let b0 = sc.large_range(site0);
                let x = ph.run(phase::SOLVE, |o| Ok(lu.solve_unit_columns(&s0.clone().collect::<Vec<_>>(), o)))?;
                let b_cols = match &bsrc {
                    BSource::Sparse(sp) => sp.column_block(b0.clone()),
                    BSource::Dense => blocks.b.block(0, b0.start, sc.a(), b0.len()),
                };
                let y = ph.run(phase::SOLVE, |o| lu.solve(&b_cols, o))?;
                let col = ph.run(phase::BLOCKS, |o| {
                    column_from_blocks(sc, &blocks.c, &x, &y, b0.clone(), mode == SolverMode::Zhang, o)
                })?;
                (sc.unpermute_rows(&col)?, rc)
            }
        };
        let tau = ph.run(phase::T_MULTIPLY, |o| column.matmul(t0, o))?;
        debug_assert_eq!(tau.cols(), nl);
        Ok(TauResult {
            which: TauKind::Column { site0 },
            mode,
            values: TauValues::Column(tau),
            ops: ph.total,
            phases: ph.list,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            rcond,
            sparse: sparse_info,
        })
    }

    /// `τ^{00}`.
    pub fn tau00(&self, mode: SolverMode, opts: &SolveOptions) -> Result<DenseMatrix<T>> {
        Ok(self.tau_col(0, mode, opts)?.site_block(0))
    }

    /// `τ^{ii}` for every site.
    pub fn tau_site_diagonal(&self, mode: SolverMode, opts: &SolveOptions) -> Result<TauResult<T>> {
        mode.validate()?;
        let start = Instant::now();
        let mut ph = Phases::new();
        let sc = &self.scheme;
        let nl = sc.nl();
        let ns = sc.n_sites();
        let mut sparse_info = None;
        let (diag_inv, rcond): (Vec<DenseMatrix<T>>, f64) = match mode {
            SolverMode::StandardDense => {
                let m = self.assemble_m()?;
                let (lu, rc) = ph.run(phase::FACTOR, |o| factor_checked(&m, "M = I - t g", o))?;
                let inv = ph.run(phase::SOLVE, |o| Ok(lu.inverse(o)))?;
                ((0..ns).map(|i| inv.block(i * nl, i * nl, nl, nl)).collect(), rc)
            }
            SolverMode::ExactSchur => {
                let blocks = assemble_blocks(&self.t_sites, &self.g, sc, true)?;
                let inv = ph.run(phase::FACTOR, |o| exact_schur_inverse(&blocks, o))?;
                let full = inv.assemble(sc)?;
                ((0..ns).map(|i| full.block(i * nl, i * nl, nl, nl)).collect(), inv.rcond)
            }
            SolverMode::OursDenseB | SolverMode::OursSparseB { .. } | SolverMode::Zhang => {
                let zhang = mode == SolverMode::Zhang;
                let blocks = if zhang {
                    zhang_blocks(&self.t_sites, &self.g, sc)?
                } else {
                    assemble_blocks(&self.t_sites, &self.g, sc, false)?
                };
                let (bsrc, stats) = self.b_source(&blocks, mode, opts)?;
                sparse_info = stats;
                let small = if zhang {
                    blocks.a.clone()
                } else {
                    let bc = ph.run(phase::B_PRODUCT, |o| match &bsrc {
                        BSource::Sparse(sp) => sp.mul_dense(&blocks.c, o),
                        BSource::Dense => blocks.b.matmul(&blocks.c, o),
                    })?;
                    blocks.a.sub(&bc)?
                };
                let (lu, rc) = ph.run(phase::FACTOR, |o| factor_checked(&small, "A - B C", o))?;
                let a_inv = ph.run(phase::SOLVE, |o| Ok(lu.inverse(o)))?;
                let mut out = Vec::with_capacity(ns);
                for i in 0..ns {
                    let blk = self.diagonal_block(&blocks, &bsrc, &a_inv, i, zhang, &mut ph)?;
                    out.push(blk);
                }
                (out, rc)
            }
        };
        let mut taus = Vec::with_capacity(ns);
        for (i, inv) in diag_inv.iter().enumerate() {
            taus.push(ph.run(phase::T_MULTIPLY, |o| inv.matmul(&self.t_sites[i], o))?);
        }
        Ok(TauResult {
            which: TauKind::Diagonal,
            mode,
            values: TauValues::Diagonal(taus),
            ops: ph.total,
            phases: ph.list,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            rcond,
            sparse: sparse_info,
        })
    }

    /// `(M⁻¹)^{ii}` in site-local `L` order from the approximate relations.
    fn diagonal_block(
        &self,
        blocks: &PartitionedM<T>,
        bsrc: &BSource<T>,
        a_inv: &DenseMatrix<T>,
        site: usize,
        zhang: bool,
        ph: &mut Phases,
    ) -> Result<DenseMatrix<T>> {
        let sc = &self.scheme;
        let nl = sc.nl();
        let si = sc.small_range(site);
        let bi = sc.large_range(site);
        let (ns_i, nb_i) = (si.len(), bi.len());
        let a_dim = sc.a();
        let minus = -Complex::<T>::one();
        let mut out = DenseMatrix::zeros(nl, nl);
        out.set_block(0, 0, &a_inv.block(si.start, si.start, ns_i, ns_i));
        if nb_i == 0 {
            return Ok(out);
        }
        if zhang {
            // 𝒝^{ii} = −(A⁻¹)[s_i, :] B[:, b_i]; 𝒞 = 0; 𝒟 = I
            let rows = a_inv.block(si.start, 0, ns_i, a_dim);
            let bb = ph.run(phase::BLOCKS, |o| {
                rows.matmul(&blocks.b.block(0, bi.start, a_dim, nb_i), o)
            })?;
            out.set_block(0, ns_i, &bb.scale(minus));
            for k in 0..nb_i {
                out[(ns_i + k, ns_i + k)] = Complex::one();
            }
            return Ok(out);
        }
        // W = 𝒜 B[:, b_i]
        let w = ph.run(phase::B_PRODUCT, |o| match bsrc {
            BSource::Sparse(sp) => sp.left_mul_columns(a_inv, bi.clone(), o),
            BSource::Dense => a_inv.matmul(&blocks.b.block(0, bi.start, a_dim, nb_i), o),
        })?;
        let c_rows = blocks.c.block(bi.start, 0, nb_i, a_dim);
        let (c_blk, d_blk) = ph.run(phase::BLOCKS, |o| {
            let c_blk = c_rows.matmul(&a_inv.block(0, si.start, a_dim, ns_i), o)?.scale(minus);
            let d_blk = DenseMatrix::identity(nb_i).add(&c_rows.matmul(&w, o)?)?;
            Ok((c_blk, d_blk))
        })?;
        out.set_block(0, ns_i, &w.block(si.start, 0, ns_i, nb_i).scale(minus));
        out.set_block(ns_i, 0, &c_blk);
        out.set_block(ns_i, ns_i, &d_blk);
        Ok(out)
    }
}

/// Columns of `M⁻¹` belonging to one site, in partitioned row order and
/// site-local column order: `[X, −Y; −C X, I + C Y]` with
/// `X = 𝒜[:, s0]` and `Y = 𝒜 B[:, b0]`. Zhang's blocks have `C = 0`.
fn column_from_blocks<T: Real>(
    sc: &PartitionScheme,
    c: &DenseMatrix<T>,
    x: &DenseMatrix<T>,
    y: &DenseMatrix<T>,
    b0: std::ops::Range<usize>,
    zhang: bool,
    ops: &mut OpCounter,
) -> Result<DenseMatrix<T>> {
    let (a, n) = (sc.a(), sc.dim());
    let (ns0, nb0) = (x.cols(), y.cols());
    let minus = -Complex::<T>::one();
    let mut col = DenseMatrix::zeros(n, ns0 + nb0);
    col.set_block(0, 0, x);
    col.set_block(0, ns0, &y.scale(minus));
    if !zhang && sc.b() > 0 {
        col.set_block(a, 0, &c.matmul(x, ops)?.scale(minus));
        col.set_block(a, ns0, &c.matmul(y, ops)?);
    }
    for (k, r) in b0.enumerate() {
        col[(a + r, ns0 + k)] = col[(a + r, ns0 + k)] + Complex::one();
    }
    Ok(col)
}

impl PartitionScheme {
    /// Rows from partitioned to composite order.
    pub fn unpermute_rows<T: Real>(&self, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if m.rows() != self.dim() {
            return Err(MsError::Dimension(format!(
                "matrix has {} rows, partition expects {}",
                m.rows(),
                self.dim()
            )));
        }
        let cols: Vec<usize> = (0..m.cols()).collect();
        Ok(m.select(self.inverse_permutation(), &cols))
    }
}

/// Elementwise deviation of one τ result from a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub max_abs: f64,
    pub frobenius_rel: f64,
}

pub fn error_metrics<T: Real>(approx: &TauResult<T>, reference: &TauResult<T>) -> Result<ErrorMetrics> {
    if approx.which != reference.which || approx.values.shape() != reference.values.shape() {
        return Err(MsError::Dimension("τ results have different shapes".into()));
    }
    let (x, y) = (approx.values.flat(), reference.values.flat());
    let mut max_abs = 0.0f64;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (a, b) in x.iter().zip(&y) {
        let d = (a - b).norm().to_f64_lossy();
        max_abs = max_abs.max(d);
        num += d * d;
        den += b.norm_sqr().to_f64_lossy();
    }
    let frobenius_rel = if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ErrorMetrics { max_abs, frobenius_rel })
}

/// One row of the solver's JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: String,
    pub l_max: usize,
    pub l_pt_map: Vec<usize>,
    pub p: f64,
    /// `[Re, Im]` in Hartree.
    pub energy: [f64; 2],
    pub max_abs: f64,
    pub frobenius_rel: f64,
    pub nop_predicted: f64,
    pub nop_measured: u64,
    pub wall_ms: f64,
    pub rcond: f64,
}
