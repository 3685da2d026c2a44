//! `compare`: numeric diff of two output directories.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::{CliError, Status};

const REL_TOL: f64 = 1e-10;

/// Timing and provenance differ between otherwise identical runs.
const IGNORED: [&str; 4] = ["wall_ms", "toolkit", "version", "config_hash"];

#[derive(Default)]
struct Diff {
    max_rel: f64,
    mismatches: Vec<String>,
}

impl Diff {
    fn number(&mut self, at: &str, a: f64, b: f64) {
        if a == b || (a.is_nan() && b.is_nan()) {
            return;
        }
        let rel = (a - b).abs() / a.abs().max(b.abs());
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        self.max_rel = self.max_rel.max(rel);
        if rel > REL_TOL {
            self.mismatch(format!("{at}: {a:e} vs {b:e}"));
        }
    }

    fn mismatch(&mut self, msg: String) {
        self.mismatches.push(msg);
    }
}

fn listing(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeSet::new();
    for entry in rd {
        let entry = entry.map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".csv") || name.ends_with(".json") {
            out.insert(name);
        }
    }
    Ok(out)
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn field(d: &mut Diff, at: &str, a: &str, b: &str) {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => d.number(at, x, y),
        _ if a == b => {}
        _ => d.mismatch(format!("{at}: `{a}` vs `{b}`")),
    }
}

fn csv(d: &mut Diff, a: &str, b: &str) {
    let (la, lb) = (data_lines(a), data_lines(b));
    if la.len() != lb.len() {
        d.mismatch(format!("{} vs {} rows", la.len(), lb.len()));
        return;
    }
    let header: Vec<&str> = la.first().map(|h| h.split(',').collect()).unwrap_or_default();
    for (row, (ra, rb)) in la.iter().zip(&lb).enumerate() {
        let (fa, fb): (Vec<&str>, Vec<&str>) = (ra.split(',').collect(), rb.split(',').collect());
        if fa.len() != fb.len() {
            d.mismatch(format!("row {row}: {} vs {} fields", fa.len(), fb.len()));
            continue;
        }
        for (c, (x, y)) in fa.iter().zip(&fb).enumerate() {
            let name = header.get(c).copied().unwrap_or("?");
            if !IGNORED.contains(&name) {
                field(d, &format!("row {row} {name}"), x, y);
            }
        }
    }
}

fn json(d: &mut Diff, at: &str, a: &Value, b: &Value) {
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let keys: BTreeSet<&String> = ma.keys().chain(mb.keys()).collect();
            for k in keys.into_iter().filter(|k| !IGNORED.contains(&k.as_str())) {
                match (ma.get(k), mb.get(k)) {
                    (Some(x), Some(y)) => json(d, &format!("{at}.{k}"), x, y),
                    _ => d.mismatch(format!("{at}.{k}: present on one side only")),
                }
            }
        }
        (Value::Array(va), Value::Array(vb)) if va.len() == vb.len() => {
            for (i, (x, y)) in va.iter().zip(vb).enumerate() {
                json(d, &format!("{at}[{i}]"), x, y);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            d.number(at, x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
        }
        _ if a == b => {}
        _ => d.mismatch(format!("{at}: {a} vs {b}")),
    }
}

fn diff_file(left: &Path, right: &Path, name: &str) -> Result<Diff, CliError> {
    let read = |dir: &Path| {
        fs::read_to_string(dir.join(name)).map_err(|e| CliError::Config(format!("{}: {e}", dir.join(name).display())))
    };
    let (a, b) = (read(left)?, read(right)?);
    let mut d = Diff::default();
    if name.ends_with(".json") {
        let parse = |s: &str| serde_json::from_str::<Value>(s).map_err(|e| CliError::Config(format!("{name}: {e}")));
        json(&mut d, "", &parse(&a)?, &parse(&b)?);
    } else {
        csv(&mut d, &a, &b);
    }
    Ok(d)
}

pub fn run(left: &Path, right: &Path) -> Result<Status, CliError> {
    let (ln, rn) = (listing(left)?, listing(right)?);
    let mut differing = 0;
    println!("{:<28} {:>12}  result", "file", "max_rel");
    for name in ln.union(&rn) {
        if !(ln.contains(name) && rn.contains(name)) {
            differing += 1;
            let side = if ln.contains(name) { "left" } else { "right" };
            println!("{name:<28} {:>12}  ONLY IN {side}", "-");
            continue;
        }
        let d = diff_file(left, right, name)?;
        let ok = d.mismatches.is_empty();
        println!("{name:<28} {:>12.3e}  {}", d.max_rel, if ok { "SAME" } else { "DIFFERENT" });
        for m in d.mismatches.iter().take(5) {
            println!("    {m}");
        }
        if d.mismatches.len() > 5 {
            println!("    ... {} more", d.mismatches.len() - 5);
        }
        differing += usize::from(!ok);
    }
    if differing == 0 {
        println!("outputs agree within relative tolerance {REL_TOL:e}");
        Ok(Status::Complete)
    } else {
        Err(CliError::Verification(format!("{differing} file(s) differ")))
    }
}
