//! Cluster geometry: scattering sites, species table, generators and the
//! line-oriented cluster file format.
//!
//! Lengths are Bohr internally. The file header carries an explicit unit tag
//! and Å input is converted on load.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MsError, Result};

pub const BOHR_PER_ANGSTROM: f64 = 1.0 / 0.529_177_210_903;

/// Sites closer than this (Bohr) are treated as coincident.
pub const MIN_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub position: [f64; 3],
    pub species: usize,
    pub is_empty_cell: bool,
}

/// Per-species partition angular momentum and bounding-sphere radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub id: usize,
    pub l_pt: usize,
    pub rb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    Bohr,
    Angstrom,
}

impl LengthUnit {
    pub fn to_bohr(self) -> f64 {
        match self {
            LengthUnit::Bohr => 1.0,
            LengthUnit::Angstrom => BOHR_PER_ANGSTROM,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            LengthUnit::Bohr => "bohr",
            LengthUnit::Angstrom => "angstrom",
        }
    }
}

/// Immutable set of scattering sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    sites: Vec<Site>,
    species: Vec<Species>,
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Cluster {
    pub fn new(sites: Vec<Site>, species: Vec<Species>) -> Result<Self> {
        if sites.is_empty() {
            return Err(MsError::Invalid("no sites".into()));
        }
        let mut ids = BTreeSet::new();
        for sp in &species {
            if !(sp.rb > 0.0) || !sp.rb.is_finite() {
                return Err(MsError::Invalid(format!(
                    "species {} has non-positive bounding radius {}",
                    sp.id, sp.rb
                )));
            }
            if !ids.insert(sp.id) {
                return Err(MsError::Invalid(format!("species {} defined twice", sp.id)));
            }
        }
        for (i, s) in sites.iter().enumerate() {
            if !s.position.iter().all(|x| x.is_finite()) {
                return Err(MsError::Invalid(format!("site {i} has non-finite position")));
            }
            if !ids.contains(&s.species) {
                return Err(MsError::Invalid(format!(
                    "site {i} refers to undefined species {}",
                    s.species
                )));
            }
        }
        for i in 0..sites.len() {
            for j in 0..i {
                if distance(sites[i].position, sites[j].position) < MIN_SEPARATION {
                    return Err(MsError::Invalid(format!("sites {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { sites, species })
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn species_table(&self) -> &[Species] {
        &self.species
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn species_of(&self, site: usize) -> &Species {
        let id = self.sites[site].species;
        self.species
            .iter()
            .find(|s| s.id == id)
            .expect("species validated at construction")
    }

    pub fn l_pt(&self, site: usize) -> usize {
        self.species_of(site).l_pt
    }

    pub fn position(&self, site: usize) -> [f64; 3] {
        self.sites[site].position
    }

    /// Largest partition angular momentum over the species actually used.
    pub fn max_l_pt(&self) -> usize {
        (0..self.n_sites()).map(|i| self.l_pt(i)).max().unwrap_or(0)
    }

    pub fn min_pair_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.sites.len() {
            for j in 0..i {
                let d = distance(self.sites[i].position, self.sites[j].position);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.sites.len() as f64;
        let mut c = [0.0; 3];
        for s in &self.sites {
            for k in 0..3 {
                c[k] += s.position[k] / n;
            }
        }
        c
    }

    /// Same cluster with a different species table (e.g. another `l_pt`).
    pub fn with_species(&self, species: Vec<Species>) -> Result<Self> {
        Self::new(self.sites.clone(), species)
    }

    /// Copy with every site position mapped through `f`.
    pub fn map_positions(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Self> {
        let sites = self
            .sites
            .iter()
            .map(|s| Site {
                position: f(s.position),
                ..*s
            })
            .collect();
        Self::new(sites, self.species.clone())
    }
}

fn lattice_points(
    lattice_a: f64,
    radius: f64,
    basis: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    if !(lattice_a > 0.0) {
        return Err(MsError::Domain(format!("lattice constant {lattice_a} must be positive")));
    }
    if !(radius >= 0.0) {
        return Err(MsError::Domain(format!("cluster radius {radius} is negative")));
    }
    let n = (radius / lattice_a).ceil() as i64 + 1;
    let tol = 1e-9 * lattice_a;
    let mut pts = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            for k in -n..=n {
                for b in basis {
                    let p = [
                        (i as f64 + b[0]) * lattice_a,
                        (j as f64 + b[1]) * lattice_a,
                        (k as f64 + b[2]) * lattice_a,
                    ];
                    if distance(p, [0.0; 3]) <= radius + tol {
                        pts.push(p);
                    }
                }
            }
        }
    }
    // origin first, then by shell distance, then lexicographically
    pts.sort_by(|a, b| {
        let da = distance(*a, [0.0; 3]);
        let db = distance(*b, [0.0; 3]);
        da.partial_cmp(&db)
            .unwrap()
            .then(a.partial_cmp(b).unwrap())
    });
    Ok(pts)
}

fn sites_of(points: Vec<[f64; 3]>, species: usize, empty: bool) -> Vec<Site> {
    points
        .into_iter()
        .map(|position| Site {
            position,
            species,
            is_empty_cell: empty,
        })
        .collect()
}

/// All fcc lattice points within `cluster_radius` of the origin (which is a
/// lattice point and comes first).
pub fn build_fcc(lattice_a: f64, cluster_radius: f64, species: Species) -> Result<Cluster> {
    let basis = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
    let pts = lattice_points(lattice_a, cluster_radius, &basis)?;
    Cluster::new(sites_of(pts, species.id, false), vec![species])
}

/// Diamond lattice (fcc plus the `(¼,¼,¼)` basis) within `cluster_radius`,
/// centred on an atom.
pub fn build_diamond(lattice_a: f64, cluster_radius: f64, species: Species) -> Result<Cluster> {
    let basis = [
        [0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
        [0.5, 0.5, 0.0],
        [0.25, 0.25, 0.25],
        [0.25, 0.75, 0.75],
        [0.75, 0.25, 0.75],
        [0.75, 0.75, 0.25],
    ];
    let pts = lattice_points(lattice_a, cluster_radius, &basis)?;
    Cluster::new(sites_of(pts, species.id, false), vec![species])
}

/// Explicit site list sharing one species.
pub fn build_shells(positions: &[[f64; 3]], species: Species) -> Result<Cluster> {
    Cluster::new(sites_of(positions.to_vec(), species.id, false), vec![species])
}

/// Planar honeycomb sheet (bond length `bond`, in the xy plane) of atoms
/// within `radius` of the central atom, with empty cells at the hexagon
/// centres inside the same radius and above/below each atom closer than
/// `stack_radius` at height `±ec_height`.
pub fn build_honeycomb_with_empty_cells(
    bond: f64,
    radius: f64,
    ec_height: f64,
    stack_radius: f64,
    atom: Species,
    empty: Species,
) -> Result<Cluster> {
    if !(bond > 0.0) || !(radius >= 0.0) || !(ec_height > 0.0) {
        return Err(MsError::Domain("honeycomb lengths must be positive".into()));
    }
    let a1 = [1.5 * bond, 3f64.sqrt() / 2.0 * bond, 0.0];
    let a2 = [1.5 * bond, -(3f64.sqrt()) / 2.0 * bond, 0.0];
    let n = (radius / bond).ceil() as i64 + 2;
    let tol = 1e-9 * bond;
    let mut atoms = Vec::new();
    let mut centres = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let o = [
                i as f64 * a1[0] + j as f64 * a2[0],
                i as f64 * a1[1] + j as f64 * a2[1],
                0.0,
            ];
            for p in [o, [o[0] + bond, o[1], 0.0]] {
                if distance(p, [0.0; 3]) <= radius + tol {
                    atoms.push(p);
                }
            }
            let h = [o[0] - bond, o[1], 0.0];
            if distance(h, [0.0; 3]) <= radius + tol {
                centres.push(h);
            }
        }
    }
    let by_distance = |v: &mut Vec<[f64; 3]>| {
        v.sort_by(|a, b| {
            distance(*a, [0.0; 3])
                .partial_cmp(&distance(*b, [0.0; 3]))
                .unwrap()
                .then(a.partial_cmp(b).unwrap())
        })
    };
    by_distance(&mut atoms);
    by_distance(&mut centres);
    let mut sites = sites_of(atoms.clone(), atom.id, false);
    sites.extend(sites_of(centres, empty.id, true));
    for p in atoms.iter().filter(|p| distance(**p, [0.0; 3]) <= stack_radius + tol) {
        for z in [ec_height, -ec_height] {
            sites.push(Site {
                position: [p[0], p[1], z],
                species: empty.id,
                is_empty_cell: true,
            });
        }
    }
    Cluster::new(sites, vec![atom, empty])
}

/// Renders the cluster file format (always written in Bohr).
pub fn format_cluster(cluster: &Cluster) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "nsites {} unit {}",
        cluster.n_sites(),
        LengthUnit::Bohr.tag()
    );
    for sp in cluster.species_table() {
        let _ = writeln!(out, "species {} lpt {} rb {}", sp.id, sp.l_pt, sp.rb);
    }
    for s in cluster.sites() {
        let p = s.position;
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            p[0],
            p[1],
            p[2],
            s.species,
            u8::from(s.is_empty_cell)
        );
    }
    out
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| MsError::Parse {
        line,
        msg: format!("cannot parse {what} from '{tok}'"),
    })
}

/// Parses the cluster file format. Blank lines and `#` comments are skipped.
pub fn parse_cluster(text: &str) -> Result<Cluster> {
    let mut header: Option<(usize, LengthUnit)> = None;
    let mut species = Vec::new();
    let mut sites = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "nsites" => {
                if toks.len() != 4 || toks[2] != "unit" {
                    return Err(MsError::Parse {
                        line,
                        msg: "expected 'nsites <N> unit <bohr|angstrom>'".into(),
                    });
                }
                let n: usize = parse_num(toks[1], line, "site count")?;
                let unit = match toks[3] {
                    "bohr" => LengthUnit::Bohr,
                    "angstrom" => LengthUnit::Angstrom,
                    other => {
                        return Err(MsError::Parse {
                            line,
                            msg: format!("unknown unit '{other}'"),
                        })
                    }
                };
                header = Some((n, unit));
            }
            "species" => {
                if toks.len() != 6 || toks[2] != "lpt" || toks[4] != "rb" {
                    return Err(MsError::Parse {
                        line,
                        msg: "expected 'species <id> lpt <int> rb <float>'".into(),
                    });
                }
                species.push((
                    line,
                    parse_num::<usize>(toks[1], line, "species id")?,
                    parse_num::<usize>(toks[3], line, "lpt")?,
                    parse_num::<f64>(toks[5], line, "rb")?,
                ));
            }
            _ => {
                if header.is_none() {
                    return Err(MsError::Parse {
                        line,
                        msg: "site line before 'nsites' header".into(),
                    });
                }
                if toks.len() != 5 {
                    return Err(MsError::Parse {
                        line,
                        msg: format!("expected 'x y z species_id is_empty', got {} fields", toks.len()),
                    });
                }
                let x = parse_num::<f64>(toks[0], line, "x")?;
                let y = parse_num::<f64>(toks[1], line, "y")?;
                let z = parse_num::<f64>(toks[2], line, "z")?;
                let sp = parse_num::<usize>(toks[3], line, "species id")?;
                let empty = match toks[4] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(MsError::Parse {
                            line,
                            msg: format!("is_empty must be 0 or 1, got '{other}'"),
                        })
                    }
                };
                sites.push((line, [x, y, z], sp, empty));
            }
        }
    }
    let (n, unit) = header.ok_or(MsError::Parse {
        line: 0,
        msg: "no sites".into(),
    })?;
    if sites.is_empty() {
        return Err(MsError::Parse {
            line: 0,
            msg: "no sites".into(),
        });
    }
    if sites.len() != n {
        return Err(MsError::Parse {
            line: sites.last().map_or(0, |s| s.0),
            msg: format!("header declares {n} sites, found {}", sites.len()),
        });
    }
    let scale = unit.to_bohr();
    let species = species
        .into_iter()
        .map(|(_, id, l_pt, rb)| Species {
            id,
            l_pt,
            rb: rb * scale,
        })
        .collect();
    let sites = sites
        .into_iter()
        .map(|(_, p, species, is_empty_cell)| Site {
            position: [p[0] * scale, p[1] * scale, p[2] * scale],
            species,
            is_empty_cell,
        })
        .collect();
    Cluster::new(sites, species)
}

pub fn load_cluster(path: impl AsRef<Path>) -> Result<Cluster> {
    parse_cluster(&std::fs::read_to_string(path)?)
}

pub fn save_cluster(cluster: &Cluster, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_cluster(cluster))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CU: Species = Species { id: 0, l_pt: 2, rb: 2.6 };

    #[test]
    fn fcc_counts_match_copper_clusters() {
        let a = 3.61 * BOHR_PER_ANGSTROM;
        let c8 = build_fcc(a, 8.0 * BOHR_PER_ANGSTROM, CU).unwrap();
        assert_eq!(c8.n_sites(), 177);
        let c11 = build_fcc(a, 11.0 * BOHR_PER_ANGSTROM, CU).unwrap();
        assert_eq!(c11.n_sites(), 459);
        assert_eq!(c11.position(0), [0.0; 3]);
    }

    #[test]
    fn tiny_radius_keeps_only_origin() {
        let a = 6.8;
        let c = build_fcc(a, a / 2f64.sqrt() * 0.99, CU).unwrap();
        assert_eq!(c.n_sites(), 1);
        assert!(build_fcc(a, -1.0, CU).is_err());
    }

    #[test]
    fn fcc_first_shell_has_thirteen_sites() {
        let a = 6.8;
        let c = build_fcc(a, a / 2f64.sqrt() * 1.01, CU).unwrap();
        assert_eq!(c.n_sites(), 13);
    }

    #[test]
    fn fcc_count_monotone_and_centred() {
        let a = 6.8;
        let mut last = 0;
        for k in 0..40 {
            let c = build_fcc(a, 0.5 * k as f64, CU).unwrap();
            assert!(c.n_sites() >= last);
            last = c.n_sites();
            let g = c.centroid();
            assert!(g.iter().all(|x| x.abs() < 1e-9));
            if let Some(d) = c.min_pair_distance() {
                assert!(d >= MIN_SEPARATION);
            }
        }
    }

    #[test]
    fn diamond_first_shells() {
        let a = 10.26;
        // centre + 4 nearest neighbours at a√3/4
        let c = build_diamond(a, a * 3f64.sqrt() / 4.0 * 1.01, CU).unwrap();
        assert_eq!(c.n_sites(), 5);
        // + 12 second neighbours at a/√2
        let c = build_diamond(a, a / 2f64.sqrt() * 1.01, CU).unwrap();
        assert_eq!(c.n_sites(), 17);
    }

    #[test]
    fn honeycomb_layout() {
        let atom = Species { id: 0, l_pt: 3, rb: 1.6 };
        let ec = Species { id: 1, l_pt: 2, rb: 1.6 };
        let d = 2.68;
        let c = build_honeycomb_with_empty_cells(d, 1.05 * d * 3f64.sqrt(), 2.5, 1.05 * d, atom, ec)
            .unwrap();
        let atoms = c.sites().iter().filter(|s| !s.is_empty_cell).count();
        let ecs = c.n_sites() - atoms;
        assert_eq!(atoms, 10);
        // 3 hexagon centres + 2 x (centre atom + 3 neighbours)
        assert_eq!(ecs, 3 + 8);
        assert!(c.min_pair_distance().unwrap() > 1.0);
    }

    #[test]
    fn shells_and_duplicates() {
        let single = build_shells(&[[0.0; 3]], CU).unwrap();
        assert_eq!(single.n_sites(), 1);
        let dimer = build_shells(&[[0.0; 3], [0.0, 0.0, 4.0]], CU).unwrap();
        assert_eq!(dimer.n_sites(), 2);
        assert!(build_shells(&[[0.0; 3], [0.0, 0.0, 1e-9]], CU).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let c = build_fcc(6.8, 7.0, CU).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        save_cluster(&c, &path).unwrap();
        assert_eq!(load_cluster(&path).unwrap(), c);
    }

    #[test]
    fn angstrom_input_converted() {
        let text = "nsites 2 unit angstrom\nspecies 0 lpt 1 rb 1.0\n0 0 0 0 0\n0 0 1 0 1\n";
        let c = parse_cluster(text).unwrap();
        assert!((c.position(1)[2] - BOHR_PER_ANGSTROM).abs() < 1e-12);
        assert!((c.species_of(0).rb - BOHR_PER_ANGSTROM).abs() < 1e-12);
        assert!(c.sites()[1].is_empty_cell);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "nsites 2 unit bohr\nspecies 0 lpt 1 rb 1.0\n0 0 0 0 0\n0 0 0\n";
        match parse_cluster(text) {
            Err(MsError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_has_no_sites() {
        let err = parse_cluster("").unwrap_err();
        assert!(err.to_string().contains("no sites"));
    }
}
