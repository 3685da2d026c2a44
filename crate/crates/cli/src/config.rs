//! Run configuration: one JSON document, validated in full before any
//! computation starts.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mskit::cluster::{
    build_diamond, build_fcc, build_honeycomb_with_empty_cells, build_shells, load_cluster, Cluster, LengthUnit,
    Species,
};
use mskit::dos::DosForm;
use mskit::partitioned_solver::SolverMode;
use mskit::single_site::{load_potential, PotentialPreset, DEFAULT_MESH_POINTS};
use mskit::systems::{bundled, Anisotropy, SpeciesModel, TestSystem};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Largest accepted `l_max`.
pub const L_MAX_CAP: usize = 12;
/// Largest accepted number of grid points.
pub const GRID_CAP: usize = 100_000;

fn bohr() -> LengthUnit {
    LengthUnit::Bohr
}

/// Where the sites come from. Generators place species 0 on every site,
/// except `honeycomb`, which puts atoms in species 0 and empty cells in 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClusterSpec {
    /// `fcc-13`, `diamond-17` or `honeycomb-ec-21`, with their own species.
    Bundled(String),
    Fcc {
        lattice_a: f64,
        radius: f64,
        #[serde(default = "bohr")]
        unit: LengthUnit,
    },
    Diamond {
        lattice_a: f64,
        radius: f64,
        #[serde(default = "bohr")]
        unit: LengthUnit,
    },
    Honeycomb {
        bond: f64,
        radius: f64,
        ec_height: f64,
        stack_radius: f64,
        #[serde(default = "bohr")]
        unit: LengthUnit,
    },
    Sites {
        positions: Vec<[f64; 3]>,
        #[serde(default = "bohr")]
        unit: LengthUnit,
    },
    /// Cluster file, relative paths resolved against the config directory.
    File(PathBuf),
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec::Bundled("fcc-13".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSource {
    SquareWell { v0: f64, rb: f64 },
    Zero { rb: f64 },
    /// Potential file, relative paths resolved against the config directory.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisotropyConfig {
    pub strength: f64,
    pub decay: f64,
    /// Defaults to the top-level `seed`.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub id: usize,
    pub l_pt: usize,
    pub potential: PotentialSource,
    #[serde(default)]
    pub anisotropy: Option<AnisotropyConfig>,
    #[serde(default)]
    pub r_in: Option<f64>,
}

/// Real parts `start, start + step, ...` up to `stop`, in Hartree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyGridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub im: f64,
}

impl Default for EnergyGridConfig {
    fn default() -> Self {
        Self {
            start: 0.05,
            stop: 1.5,
            step: 0.05,
            im: 0.01,
        }
    }
}

impl EnergyGridConfig {
    fn count(&self) -> usize {
        ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn points(&self) -> Vec<Complex<f64>> {
        (0..self.count())
            .map(|k| Complex::new(self.start + k as f64 * self.step, self.im))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Standard,
    ExactSchur,
    /// Sparse `B` with the configured `p`; dense `B` when `p = 1`.
    Ours,
    OursDense,
    Zhang,
}

impl ModeName {
    pub fn solver_mode(self, p: f64) -> SolverMode {
        match self {
            ModeName::Standard => SolverMode::StandardDense,
            ModeName::ExactSchur => SolverMode::ExactSchur,
            ModeName::Ours if p < 1.0 => SolverMode::OursSparseB { p },
            ModeName::Ours | ModeName::OursDense => SolverMode::OursDenseB,
            ModeName::Zhang => SolverMode::Zhang,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskConfig {
    /// `τ^{i0}` for all `i`, reported as the `τ^{00}` block.
    Column,
    /// `τ^{ii}` for all `i`.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cluster: ClusterSpec,
    /// Required unless the cluster is bundled.
    pub species: Vec<SpeciesConfig>,
    pub l_max: usize,
    pub energy: EnergyGridConfig,
    pub modes: Vec<ModeName>,
    /// Kept fraction of `B` for `ours`.
    pub p: f64,
    /// Extra `ours` runs at these `p` in `bench`.
    pub p_sweep: Vec<f64>,
    /// Sparse-to-dense multiplication cost used for predicted ratios.
    pub c_s: f64,
    /// Gaussian DOS broadening in Hartree; 0 disables it.
    pub sigma: f64,
    pub task: TaskConfig,
    pub site0: usize,
    pub dos_form: DosForm,
    pub mesh_points: usize,
    /// Timed repetitions per bench entry; the fastest is kept.
    pub repeats: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cluster: ClusterSpec::default(),
            species: Vec::new(),
            l_max: 4,
            energy: EnergyGridConfig::default(),
            modes: vec![ModeName::Standard, ModeName::Ours, ModeName::Zhang],
            p: 0.01,
            p_sweep: Vec::new(),
            c_s: 3.0,
            sigma: 0.0,
            task: TaskConfig::Column,
            site0: 0,
            dos_form: DosForm::Stable,
            mesh_points: DEFAULT_MESH_POINTS,
            repeats: 3,
            output: None,
            seed: 0,
        }
    }
}

/// Validated configuration with everything needed to run.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub hash: String,
    pub system: TestSystem,
    pub grid: Vec<Complex<f64>>,
    pub modes: Vec<SolverMode>,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("config field `{field}`: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("{v} must be positive and finite")))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok((Self::from_json(&text)?, base))
    }

    fn check_scalars(&self) -> Result<(), CliError> {
        if self.l_max > L_MAX_CAP {
            return Err(field_err("l_max", format!("{} exceeds the cap {L_MAX_CAP}", self.l_max)));
        }
        let e = &self.energy;
        for (name, v) in [("energy.start", e.start), ("energy.stop", e.stop), ("energy.im", e.im)] {
            if !v.is_finite() {
                return Err(field_err(name, "must be finite"));
            }
        }
        positive("energy.step", e.step)?;
        if e.stop < e.start {
            return Err(field_err("energy.stop", format!("{} is below energy.start = {}", e.stop, e.start)));
        }
        if e.im < 0.0 {
            return Err(field_err("energy.im", "must be non-negative"));
        }
        if (e.stop - e.start) / e.step >= GRID_CAP as f64 {
            return Err(field_err("energy.step", format!("grid exceeds {GRID_CAP} points")));
        }
        if e.points().iter().any(|z| z.norm() == 0.0) {
            return Err(field_err("energy", "grid contains E = 0"));
        }
        if self.modes.is_empty() {
            return Err(field_err("modes", "at least one mode is required"));
        }
        let unique: BTreeSet<String> = self.modes.iter().map(|m| format!("{m:?}")).collect();
        if unique.len() != self.modes.len() {
            return Err(field_err("modes", "duplicate entries"));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(field_err("p", format!("{} must lie in (0, 1]", self.p)));
        }
        for (k, p) in self.p_sweep.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(field_err(&format!("p_sweep[{k}]"), format!("{p} must lie in (0, 1]")));
            }
        }
        if !(self.c_s >= 1.0 && self.c_s.is_finite()) {
            return Err(field_err("c_s", format!("{} must be >= 1", self.c_s)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(field_err("sigma", "must be non-negative and finite"));
        }
        if self.mesh_points < 8 {
            return Err(field_err("mesh_points", "needs at least 8 points"));
        }
        if self.repeats == 0 {
            return Err(field_err("repeats", "must be at least 1"));
        }
        Ok(())
    }

    fn build_cluster(&self, base: &Path) -> Result<Cluster, CliError> {
        let placeholder = Species { id: 0, l_pt: 0, rb: 1.0 };
        let built = match &self.cluster {
            ClusterSpec::Bundled(name) => {
                return bundled(name)
                    .map(|s| s.cluster)
                    .ok_or_else(|| field_err("cluster.bundled", format!("unknown system '{name}'")))
            }
            ClusterSpec::Fcc { lattice_a, radius, unit } => {
                positive("cluster.fcc.lattice_a", *lattice_a)?;
                build_fcc(lattice_a * unit.to_bohr(), radius * unit.to_bohr(), placeholder)
            }
            ClusterSpec::Diamond { lattice_a, radius, unit } => {
                positive("cluster.diamond.lattice_a", *lattice_a)?;
                build_diamond(lattice_a * unit.to_bohr(), radius * unit.to_bohr(), placeholder)
            }
            ClusterSpec::Honeycomb {
                bond,
                radius,
                ec_height,
                stack_radius,
                unit,
            } => {
                let s = unit.to_bohr();
                build_honeycomb_with_empty_cells(
                    bond * s,
                    radius * s,
                    ec_height * s,
                    stack_radius * s,
                    placeholder,
                    Species { id: 1, ..placeholder },
                )
            }
            ClusterSpec::Sites { positions, unit } => {
                let s = unit.to_bohr();
                let pts: Vec<[f64; 3]> = positions.iter().map(|p| p.map(|x| x * s)).collect();
                build_shells(&pts, placeholder)
            }
            ClusterSpec::File(path) => load_cluster(resolve(base, path)),
        };
        built.map_err(|e| field_err("cluster", e))
    }

    fn species_models(&self, base: &Path) -> Result<(Vec<Species>, Vec<SpeciesModel>), CliError> {
        let mut seen = BTreeSet::new();
        let mut table = Vec::new();
        let mut models = Vec::new();
        for (k, sp) in self.species.iter().enumerate() {
            let f = |name: &str| format!("species[{k}].{name}");
            if !seen.insert(sp.id) {
                return Err(field_err(&f("id"), format!("duplicate species id {}", sp.id)));
            }
            if sp.l_pt > self.l_max {
                return Err(field_err(&f("l_pt"), format!("{} exceeds l_max = {}", sp.l_pt, self.l_max)));
            }
            let potential = match &sp.potential {
                PotentialSource::SquareWell { v0, rb } => {
                    positive(&f("potential.square_well.rb"), *rb)?;
                    if !v0.is_finite() {
                        return Err(field_err(&f("potential.square_well.v0"), "must be finite"));
                    }
                    PotentialPreset::SquareWell { v0: *v0, rb: *rb }
                }
                PotentialSource::Zero { rb } => {
                    positive(&f("potential.zero.rb"), *rb)?;
                    PotentialPreset::Zero { rb: *rb }
                }
                PotentialSource::File(path) => {
                    let v = load_potential::<f64>(resolve(base, path))
                        .map_err(|e| field_err(&f("potential.file"), e))?;
                    PotentialPreset::tabulate(&v)
                }
            };
            let rb = potential.rb();
            if let Some(r_in) = sp.r_in {
                if !(r_in > 0.0 && r_in <= rb) {
                    return Err(field_err(&f("r_in"), format!("{r_in} must lie in (0, {rb}]")));
                }
            }
            let anisotropy = match &sp.anisotropy {
                None => None,
                Some(a) => {
                    if !(a.strength >= 0.0 && a.strength.is_finite()) {
                        return Err(field_err(&f("anisotropy.strength"), "must be non-negative"));
                    }
                    if !(a.decay >= 0.0 && a.decay.is_finite()) {
                        return Err(field_err(&f("anisotropy.decay"), "must be non-negative"));
                    }
                    Some(Anisotropy {
                        strength: a.strength,
                        decay: a.decay,
                        seed: a.seed.unwrap_or(self.seed),
                    })
                }
            };
            table.push(Species { id: sp.id, l_pt: sp.l_pt, rb });
            models.push(SpeciesModel {
                id: sp.id,
                potential,
                anisotropy,
                r_in: sp.r_in,
            });
        }
        Ok((table, models))
    }

    fn build_system(&self, base: &Path) -> Result<TestSystem, CliError> {
        let cluster = self.build_cluster(base)?;
        let (name, cluster, models) = match (&self.cluster, self.species.is_empty()) {
            (ClusterSpec::Bundled(name), true) => {
                let sys = bundled(name).expect("checked by build_cluster");
                for sp in sys.cluster.species_table() {
                    if sp.l_pt > self.l_max {
                        return Err(field_err("l_max", format!("below the bundled l_pt = {}", sp.l_pt)));
                    }
                }
                (sys.name, sys.cluster, sys.models)
            }
            (_, true) => return Err(field_err("species", "required unless the cluster is bundled")),
            (spec, false) => {
                let (table, models) = self.species_models(base)?;
                for s in cluster.species_table() {
                    if !table.iter().any(|t| t.id == s.id) {
                        return Err(field_err("species", format!("no entry for cluster species {}", s.id)));
                    }
                }
                let used: BTreeSet<usize> = cluster.sites().iter().map(|s| s.species).collect();
                let table: Vec<Species> = table.into_iter().filter(|t| used.contains(&t.id)).collect();
                let models = models.into_iter().filter(|m| used.contains(&m.id)).collect();
                let cluster = cluster.with_species(table).map_err(|e| field_err("species", e))?;
                let name = match spec {
                    ClusterSpec::Bundled(n) => n.clone(),
                    ClusterSpec::Fcc { .. } => "fcc".into(),
                    ClusterSpec::Diamond { .. } => "diamond".into(),
                    ClusterSpec::Honeycomb { .. } => "honeycomb".into(),
                    ClusterSpec::Sites { .. } => "sites".into(),
                    ClusterSpec::File(_) => "file".into(),
                };
                (name, cluster, models)
            }
        };
        TestSystem::new(&name, cluster, self.l_max, models, self.mesh_points).map_err(|e| field_err("species", e))
    }

    /// SHA-256 over the canonical config (defaults filled in) and the bytes
    /// of every referenced file.
    fn hash(&self, base: &Path) -> Result<String, CliError> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        let mut files = Vec::new();
        if let ClusterSpec::File(p) = &self.cluster {
            files.push(resolve(base, p));
        }
        for sp in &self.species {
            if let PotentialSource::File(p) = &sp.potential {
                files.push(resolve(base, p));
            }
        }
        for f in files {
            let bytes =
                std::fs::read(&f).map_err(|e| CliError::Config(format!("cannot read {}: {e}", f.display())))?;
            h.update(&bytes);
        }
        Ok(format!("{:x}", h.finalize()))
    }

    /// Checks every field, loads referenced files and builds the system.
    pub fn validate(self, base: &Path) -> Result<Run, CliError> {
        self.check_scalars()?;
        let system = self.build_system(base)?;
        if self.site0 >= system.cluster.n_sites() {
            return Err(field_err(
                "site0",
                format!("{} out of range for {} sites", self.site0, system.cluster.n_sites()),
            ));
        }
        let hash = self.hash(base)?;
        let grid = self.energy.points();
        let modes = self.modes.iter().map(|m| m.solver_mode(self.p)).collect();
        Ok(Run {
            config: self,
            hash,
            system,
            grid,
            modes,
        })
    }
}
