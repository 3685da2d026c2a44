//! `M = I − t g` and its split into small-l / large-l blocks.

use std::ops::Range;

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::angmom::block_size;
use crate::cluster::Cluster;
use crate::error::{MsError, Result};
use crate::linalg::{DenseMatrix, OpCounter};
use crate::propagator::StructureConstants;
use crate::scalar::Real;

/// Permutation gathering the `l <= l_pt(site)` channels of every site first
/// (dimension `a`), then all remaining channels (dimension `b`).
///
/// Composite indices are `site * (l_max+1)² + L`. Within a site the small
/// channels are a prefix of the `L` order, so the site-local order of a
/// partitioned site block is the plain `L` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionScheme {
    l_max: usize,
    l_pt: Vec<usize>,
    perm: Vec<usize>,
    inv: Vec<usize>,
    a: usize,
    b: usize,
    small_start: Vec<usize>,
    large_start: Vec<usize>,
}

impl PartitionScheme {
    pub fn new(l_max: usize, l_pt: Vec<usize>) -> Result<Self> {
        if l_pt.is_empty() {
            return Err(MsError::Invalid("partition needs at least one site".into()));
        }
        if let Some((site, &lp)) = l_pt.iter().enumerate().find(|(_, &lp)| lp > l_max) {
            return Err(MsError::Invalid(format!(
                "l_pt = {lp} of site {site} exceeds l_max = {l_max}"
            )));
        }
        let nl = block_size(l_max);
        let mut small_start = Vec::with_capacity(l_pt.len());
        let mut large_start = Vec::with_capacity(l_pt.len());
        let (mut a, mut b) = (0, 0);
        for &lp in &l_pt {
            small_start.push(a);
            large_start.push(b);
            a += block_size(lp);
            b += nl - block_size(lp);
        }
        let n = a + b;
        let mut perm = vec![0; n];
        for (site, &lp) in l_pt.iter().enumerate() {
            let ns = block_size(lp);
            for o in 0..nl {
                let pos = if o < ns {
                    small_start[site] + o
                } else {
                    a + large_start[site] + (o - ns)
                };
                perm[pos] = site * nl + o;
            }
        }
        let mut inv = vec![0; n];
        for (pos, &orig) in perm.iter().enumerate() {
            inv[orig] = pos;
        }
        Ok(Self {
            l_max,
            l_pt,
            perm,
            inv,
            a,
            b,
            small_start,
            large_start,
        })
    }

    pub fn uniform(n_sites: usize, l_max: usize, l_pt: usize) -> Result<Self> {
        Self::new(l_max, vec![l_pt; n_sites])
    }

    /// Per-site `l_pt` taken from the species table.
    pub fn from_cluster(cluster: &Cluster, l_max: usize) -> Result<Self> {
        Self::new(l_max, (0..cluster.n_sites()).map(|i| cluster.l_pt(i)).collect())
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn l_pt(&self, site: usize) -> usize {
        self.l_pt[site]
    }

    pub fn l_pt_map(&self) -> &[usize] {
        &self.l_pt
    }

    pub fn n_sites(&self) -> usize {
        self.l_pt.len()
    }

    /// Channels per site, `(l_max+1)²`.
    pub fn nl(&self) -> usize {
        block_size(self.l_max)
    }

    pub fn a(&self) -> usize {
        self.a
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.a + self.b
    }

    /// Site's rows/columns inside the `a` block.
    pub fn small_range(&self, site: usize) -> Range<usize> {
        let s = self.small_start[site];
        s..s + block_size(self.l_pt[site])
    }

    /// Site's rows/columns inside the `b` block (offsets from `a`).
    pub fn large_range(&self, site: usize) -> Range<usize> {
        let s = self.large_start[site];
        s..s + self.nl() - block_size(self.l_pt[site])
    }

    /// Partitioned position → composite index.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Composite index → partitioned position.
    pub fn inverse_permutation(&self) -> &[usize] {
        &self.inv
    }

    fn small_positions(&self) -> &[usize] {
        &self.perm[..self.a]
    }

    fn large_positions(&self) -> &[usize] {
        &self.perm[self.a..]
    }

    /// Matrix in composite order from one in partitioned order.
    pub fn unpermute<T: Real>(&self, m: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.check_dim(m)?;
        Ok(m.select(&self.inv, &self.inv))
    }

    fn check_dim<T: Real>(&self, m: &DenseMatrix<T>) -> Result<()> {
        if m.rows() != self.dim() || m.cols() != self.dim() {
            return Err(MsError::Dimension(format!(
                "matrix is {}x{}, partition expects {}",
                m.rows(),
                m.cols(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn check_inputs<T: Real>(t_sites: &[DenseMatrix<T>], g: &StructureConstants<T>) -> Result<()> {
    let nl = block_size(g.l_max());
    if t_sites.len() != g.n_sites() {
        return Err(MsError::Dimension(format!(
            "{} t-matrices for {} sites",
            t_sites.len(),
            g.n_sites()
        )));
    }
    for (i, t) in t_sites.iter().enumerate() {
        if t.rows() != nl || t.cols() != nl {
            return Err(MsError::Dimension(format!(
                "t-matrix of site {i} is {}x{}, expected {nl}x{nl}",
                t.rows(),
                t.cols()
            )));
        }
    }
    Ok(())
}

/// `M = I − t g` in composite order, `t` block-diagonal over sites.
pub fn assemble_m<T: Real>(t_sites: &[DenseMatrix<T>], g: &StructureConstants<T>) -> Result<DenseMatrix<T>> {
    check_inputs(t_sites, g)?;
    let nl = block_size(g.l_max());
    let n = nl * t_sites.len();
    let gm = g.matrix();
    let mut m = DenseMatrix::identity(n);
    let mut scratch = OpCounter::new();
    for (i, t) in t_sites.iter().enumerate() {
        let rows = gm.block(i * nl, 0, nl, n);
        let tg = t.matmul(&rows, &mut scratch)?;
        for r in 0..nl {
            let dst = m.row_mut(i * nl + r);
            for (d, &v) in dst.iter_mut().zip(tg.row(r)) {
                *d = *d - v;
            }
        }
    }
    Ok(m)
}

/// Blocks of `M` in partitioned order. `d` is materialized only when an
/// exact treatment asks for it.
#[derive(Debug, Clone)]
pub struct PartitionedM<T: Real> {
    pub a: DenseMatrix<T>,
    pub b: DenseMatrix<T>,
    pub c: DenseMatrix<T>,
    pub d: Option<DenseMatrix<T>>,
}

/// Extracts the blocks of an assembled `M`.
pub fn partition<T: Real>(m: &DenseMatrix<T>, scheme: &PartitionScheme) -> Result<PartitionedM<T>> {
    scheme.check_dim(m)?;
    let s = scheme.small_positions();
    let l = scheme.large_positions();
    Ok(PartitionedM {
        a: m.select(s, s),
        b: m.select(s, l),
        c: m.select(l, s),
        d: Some(m.select(l, l)),
    })
}

/// Puts `[A B; C D]` back into composite order.
pub fn reassemble<T: Real>(p: &PartitionedM<T>, scheme: &PartitionScheme) -> Result<DenseMatrix<T>> {
    let d = p
        .d
        .as_ref()
        .ok_or_else(|| MsError::Invalid("reassembly needs the D block".into()))?;
    let (a, n) = (scheme.a(), scheme.dim());
    let mut part = DenseMatrix::zeros(n, n);
    part.set_block(0, 0, &p.a);
    part.set_block(0, a, &p.b);
    part.set_block(a, 0, &p.c);
    part.set_block(a, a, d);
    Ok(part.select(scheme.inverse_permutation(), scheme.inverse_permutation()))
}

/// Rows `rows` (composite) of `M = I − t g`, restricted to columns `cols`
/// (composite), without assembling the rest of `M`.
fn m_rows<T: Real>(
    t_sites: &[DenseMatrix<T>],
    g: &StructureConstants<T>,
    rows: &[usize],
    cols: &[usize],
) -> Result<DenseMatrix<T>> {
    let nl = block_size(g.l_max());
    let gm = g.matrix();
    let mut out = DenseMatrix::zeros(rows.len(), cols.len());
    let mut scratch = OpCounter::new();
    // group consecutive rows by site
    let mut start = 0;
    while start < rows.len() {
        let site = rows[start] / nl;
        let mut end = start;
        while end < rows.len() && rows[end] / nl == site {
            end += 1;
        }
        let local: Vec<usize> = rows[start..end].iter().map(|r| r % nl).collect();
        let all_l: Vec<usize> = (0..nl).collect();
        let t_part = t_sites[site].select(&local, &all_l);
        let g_rows: Vec<usize> = (0..nl).map(|o| site * nl + o).collect();
        let g_part = gm.select(&g_rows, cols);
        let tg = t_part.matmul(&g_part, &mut scratch)?;
        for (k, &r) in rows[start..end].iter().enumerate() {
            let dst = out.row_mut(start + k);
            for (c, (d, &v)) in dst.iter_mut().zip(tg.row(k)).enumerate() {
                *d = if cols[c] == r { Complex::<T>::one() - v } else { -v };
            }
        }
        start = end;
    }
    Ok(out)
}

/// Builds `A`, `B`, `C` (and `D` if `with_d`) directly from `t` and `g`.
/// `A = I − t_sf g_fs'` keeps the full internal `L` sum.
pub fn assemble_blocks<T: Real>(
    t_sites: &[DenseMatrix<T>],
    g: &StructureConstants<T>,
    scheme: &PartitionScheme,
    with_d: bool,
) -> Result<PartitionedM<T>> {
    check_inputs(t_sites, g)?;
    if scheme.n_sites() != g.n_sites() || scheme.l_max() != g.l_max() {
        return Err(MsError::Dimension("partition scheme does not match g".into()));
    }
    let s = scheme.small_positions();
    let l = scheme.large_positions();
    let top = m_rows(t_sites, g, s, scheme.permutation())?;
    let a = top.block(0, 0, s.len(), s.len());
    let b = top.block(0, s.len(), s.len(), l.len());
    let (c, d) = if with_d {
        let bottom = m_rows(t_sites, g, l, scheme.permutation())?;
        (
            bottom.block(0, 0, l.len(), s.len()),
            Some(bottom.block(0, s.len(), l.len(), l.len())),
        )
    } else {
        (m_rows(t_sites, g, l, s)?, None)
    };
    Ok(PartitionedM { a, b, c, d })
}

/// `t` with every element having `l > l_pt` or `l' > l_pt` set to zero.
pub fn truncate_t<T: Real>(t: &DenseMatrix<T>, l_pt: usize) -> DenseMatrix<T> {
    let ns = block_size(l_pt);
    DenseMatrix::from_fn(t.rows(), t.cols(), |r, c| {
        if r < ns && c < ns {
            t[(r, c)]
        } else {
            Complex::zero()
        }
    })
}

/// Blocks of Zhang's approximation: `t` truncated above `l_pt`, so
/// `A = I − t_ss g_ss`, `B = −t_ss g_sb`, `C = 0` and `D = I` (left implicit).
pub fn zhang_blocks<T: Real>(
    t_sites: &[DenseMatrix<T>],
    g: &StructureConstants<T>,
    scheme: &PartitionScheme,
) -> Result<PartitionedM<T>> {
    check_inputs(t_sites, g)?;
    let truncated: Vec<_> = t_sites
        .iter()
        .enumerate()
        .map(|(i, t)| truncate_t(t, scheme.l_pt(i)))
        .collect();
    let mut p = assemble_blocks(&truncated, g, scheme, false)?;
    p.c = DenseMatrix::zeros(scheme.b(), scheme.a());
    Ok(p)
}
