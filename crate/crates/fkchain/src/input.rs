//! Input files. Schema errors carry a JSON pointer to the offending field.
//!
//! * models: `{"kind": "explicit" | "torus" | "path" | "tree" | "stable_grid", ...}` with
//!   matrices as `[[from, to, value], ...]` triplet lists;
//! * measures and functions: `{"<state>": value, ...}`, absent states are 0;
//! * jump weights: `[[from, to, value], ...]`, an entry whose mirror is absent is mirrored.

use std::collections::BTreeMap;
use std::path::Path;

use fkchain_core::model::Boundary;
use fkchain_core::spectral::SweepFamily;
use fkchain_core::{JumpPerturbation, ModelSpec, SmoothMeasure, SymmetricChain};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{Map, Value};
use serde_path_to_error::Segment;

use crate::error::{CliError, CliResult};

fn pointer(path: &serde_path_to_error::Path) -> String {
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } | Segment::Enum { variant: key } => {
                out.push_str(&key.replace('~', "~0").replace('/', "~1"))
            }
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn schema(file: &Path, pointer: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Schema {
        file: file.to_path_buf(),
        pointer: pointer.into(),
        message: message.into(),
    }
}

/// Parses `text` as a `T`, reporting failures against `file`.
pub fn parse_json<T: DeserializeOwned>(file: &Path, text: &str) -> CliResult<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let ptr = pointer(e.path());
        schema(file, ptr, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| schema(file, "", e.to_string()))?;
    Ok(value)
}

pub fn read_json<T: DeserializeOwned>(file: &Path) -> CliResult<T> {
    parse_json(file, &read_text(file)?)
}

// Internally tagged enums buffer their input, which loses the error position. These mirrors
// read the same documents rewritten to `{"<kind>": {...}}` so field errors keep their path.

#[derive(Deserialize)]
#[serde(remote = "ModelSpec", rename_all = "snake_case", deny_unknown_fields)]
enum ModelDef {
    Explicit {
        m: Vec<f64>,
        q: Vec<(usize, usize, f64)>,
        k: Vec<f64>,
        #[serde(default)]
        repair: bool,
    },
    Torus {
        n: usize,
        rate: f64,
        #[serde(default)]
        killing: f64,
        #[serde(default)]
        normalize_mass: bool,
    },
    Path {
        n: usize,
        rate: f64,
        boundary: Boundary,
        #[serde(default)]
        normalize_mass: bool,
    },
    Tree {
        degree: usize,
        depth: usize,
        boundary: Boundary,
        #[serde(default)]
        rate: Option<f64>,
    },
    StableGrid {
        side: usize,
        dim: usize,
        alpha: f64,
        c: f64,
        radius: f64,
        boundary: Boundary,
    },
}

#[derive(Deserialize)]
#[serde(remote = "SweepFamily", rename_all = "snake_case", deny_unknown_fields)]
enum SweepFamilyDef {
    Path {
        rate: f64,
        boundary: Boundary,
    },
    Torus {
        rate: f64,
        #[serde(default)]
        killing: f64,
    },
    Tree {
        degree: usize,
        boundary: Boundary,
        #[serde(default)]
        rate: Option<f64>,
    },
    StableGrid {
        dim: usize,
        alpha: f64,
        c: f64,
        radius: f64,
        boundary: Boundary,
    },
}

fn parse_tagged<T>(
    file: &Path,
    text: &str,
    de: impl FnOnce(serde_path_to_error::Deserializer<'_, '_, Value>) -> Result<T, serde_json::Error>,
) -> CliResult<T> {
    let value: Value = parse_json(file, text)?;
    let Value::Object(mut fields) = value else {
        return Err(schema(file, "", "expected an object"));
    };
    let kind = match fields.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(schema(file, "/kind", "expected a string")),
        None => return Err(schema(file, "", "missing field `kind`")),
    };
    let mut outer = Map::new();
    outer.insert(kind, Value::Object(fields));
    let mut track = serde_path_to_error::Track::new();
    let d = serde_path_to_error::Deserializer::new(Value::Object(outer), &mut track);
    de(d).map_err(|e| {
        let path = track.path();
        let full = pointer(&path);
        // Drop the variant segment, the remaining path is relative to the document.
        let ptr = match full.get(1..).and_then(|p| p.find('/')) {
            Some(i) => full[i + 1..].to_string(),
            None => "/kind".to_string(),
        };
        schema(file, ptr, e.to_string())
    })
}

pub fn parse_model(file: &Path, text: &str) -> CliResult<ModelSpec> {
    parse_tagged(file, text, |d| ModelDef::deserialize(d))
}

pub fn parse_family(file: &Path, text: &str) -> CliResult<SweepFamily> {
    parse_tagged(file, text, |d| SweepFamilyDef::deserialize(d))
}

fn read_text(file: &Path) -> CliResult<String> {
    std::fs::read_to_string(file).map_err(|e| CliError::io(file, e))
}

pub fn load_family(file: &Path) -> CliResult<SweepFamily> {
    parse_family(file, &read_text(file)?)
}

/// Reads a model and builds the chain it describes.
pub fn load_model(file: &Path) -> CliResult<(ModelSpec, SymmetricChain)> {
    let spec = parse_model(file, &read_text(file)?)?;
    let chain = spec.build().map_err(|e| schema(file, "", e.to_string()))?;
    Ok((spec, chain))
}

/// The explicit description of `chain`, which rebuilds it exactly.
pub fn explicit_model(chain: &SymmetricChain) -> ModelSpec {
    ModelSpec::Explicit {
        m: chain.mass().to_vec(),
        q: chain.rates().triplets(),
        k: chain.killing().to_vec(),
        repair: false,
    }
}

fn state_map(file: &Path, map: BTreeMap<String, f64>, n: usize) -> CliResult<Vec<f64>> {
    let mut out = vec![0.0; n];
    for (key, v) in map {
        let ptr = format!("/{key}");
        let x: usize = key
            .trim()
            .parse()
            .map_err(|_| schema(file, &ptr, "state ids must be non-negative integers"))?;
        if x >= n {
            return Err(schema(
                file,
                &ptr,
                format!("state {x} out of range for {n} states"),
            ));
        }
        if !v.is_finite() {
            return Err(schema(file, &ptr, "value must be finite"));
        }
        out[x] = v;
    }
    Ok(out)
}

pub fn parse_measure(file: &Path, text: &str, n: usize) -> CliResult<SmoothMeasure> {
    let atoms = state_map(file, parse_json(file, text)?, n)?;
    Ok(SmoothMeasure::new(atoms)?)
}

pub fn load_measure(file: &Path, n: usize) -> CliResult<SmoothMeasure> {
    parse_measure(file, &read_text(file)?, n)
}

pub fn load_function(file: &Path, n: usize) -> CliResult<Vec<f64>> {
    state_map(file, read_json(file)?, n)
}

/// `{"<state>": atom}` for the nonzero atoms.
pub fn measure_json(mu: &SmoothMeasure) -> BTreeMap<usize, f64> {
    mu.atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(i, a)| (i, *a))
        .collect()
}

pub fn parse_jump(file: &Path, text: &str, n: usize) -> CliResult<JumpPerturbation> {
    let triplets: Vec<(usize, usize, f64)> = parse_json(file, text)?;
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, &(x, y, v)) in triplets.iter().enumerate() {
        let ptr = format!("/{i}");
        if x >= n || y >= n {
            return Err(schema(
                file,
                &ptr,
                format!("state out of range for {n} states"),
            ));
        }
        if x == y {
            return Err(schema(file, &ptr, "jump weights have no diagonal"));
        }
        if !v.is_finite() {
            return Err(schema(file, &ptr, "value must be finite"));
        }
        if entries.insert((x, y), v).is_some() {
            return Err(schema(file, &ptr, format!("duplicate entry ({x}, {y})")));
        }
    }
    let mirrored: Vec<_> = entries
        .iter()
        .filter(|(k, _)| !entries.contains_key(&(k.1, k.0)))
        .map(|(k, v)| ((k.1, k.0), *v))
        .collect();
    entries.extend(mirrored);
    Ok(JumpPerturbation::from_triplets(
        n,
        entries.into_iter().map(|((x, y), v)| (x, y, v)),
    )?)
}

pub fn load_jump(file: &Path, n: usize) -> CliResult<JumpPerturbation> {
    parse_jump(file, &read_text(file)?, n)
}

/// The stored entries of `f` as triplets.
pub fn jump_json(f: &JumpPerturbation) -> Vec<(usize, usize, f64)> {
    f.matrix().triplets()
}
