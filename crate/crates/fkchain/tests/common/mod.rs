//! Random instances for the integration tests, drawn from fixed ChaCha streams.
#![allow(dead_code)]

use std::collections::BTreeMap;

use fkchain_core::pathsim::{path_rng, uniform, PathRng};
use fkchain_core::{JumpPerturbation, ModelSpec, SmoothMeasure, SymmetricChain};

pub struct Gen {
    rng: PathRng,
}

impl Gen {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            rng: path_rng(seed, stream),
        }
    }

    pub fn unit(&mut self) -> f64 {
        uniform(&mut self.rng)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Uniform on `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    pub fn coin(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

/// Connected chain on `n` states: a random spanning tree plus extra edges, conductances in
/// `[0.2, 2]`, masses in `[0.5, 2]`. With `killed`, about a third of the states (and at least
/// one) get killing in `[0.05, 1]`.
pub fn random_chain(g: &mut Gen, n: usize, killed: bool) -> SymmetricChain {
    let m: Vec<f64> = (0..n).map(|_| g.range(0.5, 2.0)).collect();
    let mut edges = BTreeMap::new();
    for x in 1..n {
        let parent = g.index(x);
        edges.insert((parent, x), g.range(0.2, 2.0));
    }
    let density = g.range(0.0, 0.3);
    for x in 0..n {
        for y in x + 1..n {
            if !edges.contains_key(&(x, y)) && g.coin(density) {
                edges.insert((x, y), g.range(0.2, 2.0));
            }
        }
    }
    let q = edges
        .iter()
        .flat_map(|(&(x, y), &c)| [(x, y, c / m[x]), (y, x, c / m[y])])
        .collect();
    let mut k = vec![0.0; n];
    if killed {
        for v in k.iter_mut() {
            if g.coin(0.3) {
                *v = g.range(0.05, 1.0);
            }
        }
        let x = g.index(n);
        k[x] = g.range(0.1, 1.0);
    }
    ModelSpec::Explicit {
        m,
        q,
        k,
        repair: false,
    }
    .build()
    .expect("random chain is valid")
}

/// Atoms `m[x] v[x]` with `v` uniform on `[lo, hi]` at about half the states (and at least one),
/// zero elsewhere.
pub fn random_measure(g: &mut Gen, chain: &SymmetricChain, lo: f64, hi: f64) -> SmoothMeasure {
    let m = chain.mass();
    let mut atoms: Vec<f64> = m
        .iter()
        .map(|&mx| {
            if g.coin(0.5) {
                mx * g.range(lo, hi)
            } else {
                0.0
            }
        })
        .collect();
    let x = g.index(atoms.len());
    atoms[x] = m[x] * g.range(lo, hi);
    SmoothMeasure::new(atoms).unwrap()
}

/// Symmetric jump weight on the edges of `chain`, uniform on `[lo, hi]`.
pub fn random_jump(g: &mut Gen, chain: &SymmetricChain, lo: f64, hi: f64) -> JumpPerturbation {
    let triplets: Vec<_> = chain
        .rates()
        .triplets()
        .into_iter()
        .filter(|&(x, y, _)| x < y)
        .flat_map(|(x, y, _)| {
            let v = g.range(lo, hi);
            [(x, y, v), (y, x, v)]
        })
        .collect();
    JumpPerturbation::from_triplets(chain.n(), triplets).unwrap()
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}
