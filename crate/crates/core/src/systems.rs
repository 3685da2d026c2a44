//! Bundled test systems: clusters with per-species scatterers, evaluated at
//! one energy into the site data and the scattering system.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::angmom::{ComplexWaveNumber, GauntTable};
use crate::cluster::{
    build_diamond, build_fcc, build_honeycomb_with_empty_cells, build_shells, Cluster, Species,
    BOHR_PER_ANGSTROM,
};
use crate::error::{MsError, Result};
use crate::partitioned_solver::{PartitionScheme, ScatteringSystem};
use crate::propagator::structure_constants_with_table;
use crate::scalar::{Cplx, Real};
use crate::single_site::{
    solve_radial_regular, synthetic_anisotropic_t, wronskian_matrices, PotentialPreset, RadialPotential,
    RadialSolution, SiteMatrices, DEFAULT_MESH_POINTS,
};

/// Random symmetric channel coupling added on top of a spherical `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anisotropy {
    pub strength: f64,
    pub decay: f64,
    /// Site `i` uses `seed + i`.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesModel {
    pub id: usize,
    pub potential: PotentialPreset,
    #[serde(default)]
    pub anisotropy: Option<Anisotropy>,
    /// Radius of the DOS integration sphere; defaults to `R_b`.
    #[serde(default)]
    pub r_in: Option<f64>,
}

impl SpeciesModel {
    pub fn r_in(&self) -> f64 {
        self.r_in.unwrap_or_else(|| self.potential.rb())
    }
}

/// Radial solutions and scattering matrices of one site at one energy.
#[derive(Debug, Clone)]
pub struct SiteScatterer<T: Real> {
    pub potential: RadialPotential<T>,
    /// Regular solutions for `l = 0..=l_max`.
    pub regular: Vec<RadialSolution<T>>,
    pub matrices: SiteMatrices<T>,
    pub r_in: T,
    /// `t` is a spherical-potential `t` with no added coupling.
    pub spherical: bool,
}

#[derive(Debug, Clone)]
pub struct TestSystem {
    pub name: String,
    pub cluster: Cluster,
    pub l_max: usize,
    pub models: Vec<SpeciesModel>,
    pub npts: usize,
}

impl TestSystem {
    pub fn new(name: &str, cluster: Cluster, l_max: usize, models: Vec<SpeciesModel>, npts: usize) -> Result<Self> {
        for sp in cluster.species_table() {
            let Some(m) = models.iter().find(|m| m.id == sp.id) else {
                return Err(MsError::Invalid(format!("species {} has no scatterer model", sp.id)));
            };
            if (m.potential.rb() - sp.rb).abs() > 1e-12 * sp.rb {
                return Err(MsError::Invalid(format!(
                    "species {}: potential radius {} differs from bounding radius {}",
                    sp.id,
                    m.potential.rb(),
                    sp.rb
                )));
            }
            if !(m.r_in() > 0.0 && m.r_in() <= sp.rb) {
                return Err(MsError::Domain(format!("species {}: r_in must lie in (0, R_b]", sp.id)));
            }
            if sp.l_pt > l_max {
                return Err(MsError::Domain(format!(
                    "species {}: l_pt = {} exceeds l_max = {l_max}",
                    sp.id, sp.l_pt
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            cluster,
            l_max,
            models,
            npts,
        })
    }

    pub fn scheme(&self) -> Result<PartitionScheme> {
        PartitionScheme::from_cluster(&self.cluster, self.l_max)
    }

    pub fn model_of(&self, site: usize) -> &SpeciesModel {
        let id = self.cluster.species_of(site).id;
        self.models
            .iter()
            .find(|m| m.id == id)
            .expect("models checked at construction")
    }

    /// Site data for every site; species share one radial solve.
    pub fn scatterers<T: Real>(&self, energy: Cplx<T>) -> Result<Vec<SiteScatterer<T>>> {
        let mut per_species: BTreeMap<usize, SiteScatterer<T>> = BTreeMap::new();
        for m in &self.models {
            let potential = m.potential.build::<T>(self.npts)?;
            let regular = (0..=self.l_max)
                .map(|l| solve_radial_regular(&potential, l, energy))
                .collect::<Result<Vec<_>>>()?;
            let matrices = if potential.is_identically_zero() {
                SiteMatrices::from_potential(&potential, self.l_max, energy)?
            } else {
                let (e_mat, s_mat) = wronskian_matrices(&regular, potential.rb())?;
                let t_mat = crate::single_site::t_matrix(&e_mat, &s_mat, energy)?;
                SiteMatrices {
                    l_max: self.l_max,
                    energy,
                    e_mat,
                    s_mat,
                    t_mat,
                }
            };
            per_species.insert(
                m.id,
                SiteScatterer {
                    potential,
                    regular,
                    matrices,
                    r_in: T::lit(m.r_in()),
                    spherical: true,
                },
            );
        }
        (0..self.cluster.n_sites())
            .map(|i| {
                let model = self.model_of(i);
                let base = per_species[&model.id].clone();
                match model.anisotropy {
                    None => Ok(base),
                    Some(an) => {
                        let t = synthetic_anisotropic_t(
                            &base.matrices.t_mat,
                            T::lit(an.strength),
                            T::lit(an.decay),
                            an.seed.wrapping_add(i as u64),
                        )?;
                        Ok(SiteScatterer {
                            matrices: base.matrices.with_t(t)?,
                            spherical: false,
                            ..base
                        })
                    }
                }
            })
            .collect()
    }

    /// Scattering system and site data at one energy.
    pub fn at_energy<T: Real>(
        &self,
        energy: Cplx<T>,
        table: &GauntTable<T>,
    ) -> Result<(ScatteringSystem<T>, Vec<SiteScatterer<T>>)> {
        if table.l_max() != self.l_max {
            return Err(MsError::Dimension(format!(
                "Gaunt table for l_max {} used with l_max {}",
                table.l_max(),
                self.l_max
            )));
        }
        let sites = self.scatterers(energy)?;
        let kappa = ComplexWaveNumber::from_energy(energy)?;
        let g = structure_constants_with_table(&self.cluster, kappa, table)?;
        let t = sites.iter().map(|s| s.matrices.t_mat.clone()).collect();
        Ok((ScatteringSystem::new(self.scheme()?, t, g)?, sites))
    }

    /// As [`TestSystem::at_energy`], building the Gaunt table.
    pub fn system_at<T: Real>(&self, energy: Cplx<T>) -> Result<ScatteringSystem<T>> {
        Ok(self.at_energy(energy, &GauntTable::new(self.l_max)?)?.0)
    }
}

/// `n` points from `start` to `stop` (Hartree) with constant imaginary part.
pub fn energy_grid(start: f64, stop: f64, n: usize, im: f64) -> Result<Vec<Complex<f64>>> {
    if n == 0 || !(stop > start) && n > 1 || !start.is_finite() || !stop.is_finite() || !(im >= 0.0) {
        return Err(MsError::Domain(format!(
            "energy grid needs start < stop, n >= 1 and Im E >= 0 (got {start}, {stop}, {n}, {im})"
        )));
    }
    if n == 1 {
        return Ok(vec![Complex::new(start, im)]);
    }
    let de = (stop - start) / (n - 1) as f64;
    Ok((0..n).map(|k| Complex::new(start + de * k as f64, im)).collect())
}

/// Lattice constant of the fcc test cluster (3.61 Å).
pub const FCC_LATTICE_BOHR: f64 = 3.61 * BOHR_PER_ANGSTROM;
/// Lattice constant of the diamond test cluster (5.43 Å).
pub const DIAMOND_LATTICE_BOHR: f64 = 5.43 * BOHR_PER_ANGSTROM;
/// Bond length of the honeycomb test sheet.
pub const HONEYCOMB_BOND_BOHR: f64 = 2.68;

/// Central atom and its 12 nearest neighbours of an fcc lattice, touching
/// square wells, `l_max = 4`, `l_pt = 2`.
pub fn fcc_square_well() -> TestSystem {
    let a = FCC_LATTICE_BOHR;
    let nn = a / 2f64.sqrt();
    let rb = nn / 2.0;
    let sp = Species { id: 0, l_pt: 2, rb };
    let cluster = build_fcc(a, nn * 1.01, sp).expect("fcc geometry");
    let model = SpeciesModel {
        id: 0,
        potential: PotentialPreset::SquareWell { v0: -0.5, rb },
        anisotropy: None,
        r_in: None,
    };
    TestSystem::new("fcc-13", cluster, 4, vec![model], DEFAULT_MESH_POINTS).expect("fcc system")
}

/// Diamond-lattice atom with two neighbour shells (17 sites), touching
/// square wells, `l_max = 4`, `l_pt = 2`.
pub fn diamond_square_well() -> TestSystem {
    let a = DIAMOND_LATTICE_BOHR;
    let nn = a * 3f64.sqrt() / 4.0;
    let rb = nn / 2.0;
    let sp = Species { id: 0, l_pt: 2, rb };
    let cluster = build_diamond(a, a / 2f64.sqrt() * 1.01, sp).expect("diamond geometry");
    let model = SpeciesModel {
        id: 0,
        potential: PotentialPreset::SquareWell { v0: -0.4, rb },
        anisotropy: None,
        r_in: None,
    };
    TestSystem::new("diamond-17", cluster, 4, vec![model], DEFAULT_MESH_POINTS).expect("diamond system")
}

/// Honeycomb sheet (10 atoms) with 11 empty cells: 3 in hexagon centres and
/// 8 stacked above and below the central atom and its neighbours. Atoms
/// carry square wells with synthetic anisotropic coupling (`l_pt = 3`);
/// empty cells carry shallow wells (`l_pt = 2`). `l_max = 4`.
pub fn honeycomb_with_empty_cells() -> TestSystem {
    let bond = HONEYCOMB_BOND_BOHR;
    let rb_atom = bond / 2.0;
    let rb_ec = 1.3;
    let atom = Species {
        id: 0,
        l_pt: 3,
        rb: rb_atom,
    };
    let ec = Species { id: 1, l_pt: 2, rb: rb_ec };
    let cluster = build_honeycomb_with_empty_cells(bond, 3f64.sqrt() * bond * 1.01, 3.2, bond * 1.01, atom, ec)
        .expect("honeycomb geometry");
    let models = vec![
        SpeciesModel {
            id: 0,
            potential: PotentialPreset::SquareWell { v0: -1.2, rb: rb_atom },
            anisotropy: Some(Anisotropy {
                strength: 0.5,
                decay: 0.3,
                seed: 17,
            }),
            r_in: None,
        },
        SpeciesModel {
            id: 1,
            potential: PotentialPreset::SquareWell { v0: -0.1, rb: rb_ec },
            anisotropy: None,
            r_in: None,
        },
    ];
    TestSystem::new("honeycomb-ec-21", cluster, 4, models, DEFAULT_MESH_POINTS).expect("honeycomb system")
}

/// One site with `V ≡ 0`.
pub fn free_site(rb: f64, l_max: usize) -> Result<TestSystem> {
    let cluster = build_shells(&[[0.0; 3]], Species { id: 0, l_pt: 0, rb })?;
    let model = SpeciesModel {
        id: 0,
        potential: PotentialPreset::Zero { rb },
        anisotropy: None,
        r_in: None,
    };
    TestSystem::new("free-site", cluster, l_max, vec![model], DEFAULT_MESH_POINTS)
}

/// Looks up a bundled system by name.
pub fn bundled(name: &str) -> Option<TestSystem> {
    match name {
        "fcc-13" | "fcc" => Some(fcc_square_well()),
        "diamond-17" | "diamond" => Some(diamond_square_well()),
        "honeycomb-ec-21" | "honeycomb" => Some(honeycomb_with_empty_cells()),
        _ => None,
    }
}
