//! Built-in model families and the explicit model description.

use alloc::vec;
use alloc::vec::Vec;

use crate::chain::SymmetricChain;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// How a truncated model treats the edges it cuts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Boundary {
    /// Severed edges become killing at the same rate.
    Dirichlet,
    /// Severed edges are dropped; the truncation stays conservative.
    Reflecting,
}

/// A model description. Each variant builds one validated [`SymmetricChain`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum ModelSpec {
    /// Masses, `(from, to, rate)` triplets and killing rates.
    Explicit {
        m: Vec<f64>,
        q: Vec<(usize, usize, f64)>,
        k: Vec<f64>,
        #[cfg_attr(feature = "serde", serde(default))]
        repair: bool,
    },
    /// Nearest-neighbour walk on the cycle of `n` states.
    Torus {
        n: usize,
        rate: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        killing: f64,
        #[cfg_attr(feature = "serde", serde(default))]
        normalize_mass: bool,
    },
    /// Nearest-neighbour walk on `{0, ..., n-1}`.
    Path {
        n: usize,
        rate: f64,
        boundary: Boundary,
        #[cfg_attr(feature = "serde", serde(default))]
        normalize_mass: bool,
    },
    /// Ball of radius `depth` in the `degree`-regular tree, states in breadth-first order from the
    /// root. Each edge carries `rate` (default `1/degree`, the simple random walk).
    Tree {
        degree: usize,
        depth: usize,
        boundary: Boundary,
        #[cfg_attr(feature = "serde", serde(default))]
        rate: Option<f64>,
    },
    /// Stable-like kernel `q[x][y] = c / |x - y|^{dim + alpha}` for `0 < |x - y| <= radius`
    /// on the box `{0, ..., side-1}^dim`, `dim` in `{1, 2}`.
    StableGrid {
        side: usize,
        dim: usize,
        alpha: f64,
        c: f64,
        radius: f64,
        boundary: Boundary,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<SymmetricChain> {
        match self {
            ModelSpec::Explicit { m, q, k, repair } => {
                let n = m.len();
                for &(i, j, _) in q {
                    for idx in [i, j] {
                        if idx >= n {
                            return Err(Error::StateOutOfRange { index: idx, n });
                        }
                    }
                }
                SymmetricChain::new(
                    m.clone(),
                    CsrMatrix::from_triplets(n, q.iter().copied()),
                    k.clone(),
                    *repair,
                )
            }
            ModelSpec::Torus {
                n,
                rate,
                killing,
                normalize_mass,
            } => {
                positive("rate", *rate)?;
                let n = *n;
                let mut t = Vec::new();
                if n >= 2 {
                    let edges = if n == 2 { 1 } else { n };
                    for i in 0..edges {
                        let j = (i + 1) % n;
                        t.push((i, j, *rate));
                        t.push((j, i, *rate));
                    }
                }
                SymmetricChain::new(
                    mass(n, *normalize_mass),
                    CsrMatrix::from_triplets(n, t),
                    vec![*killing; n],
                    false,
                )
            }
            ModelSpec::Path {
                n,
                rate,
                boundary,
                normalize_mass,
            } => {
                positive("rate", *rate)?;
                let n = *n;
                let mut t = Vec::new();
                for i in 0..n.saturating_sub(1) {
                    t.push((i, i + 1, *rate));
                    t.push((i + 1, i, *rate));
                }
                let mut k = vec![0.0; n];
                if *boundary == Boundary::Dirichlet && n > 0 {
                    k[0] += rate;
                    k[n - 1] += rate;
                }
                SymmetricChain::new(
                    mass(n, *normalize_mass),
                    CsrMatrix::from_triplets(n, t),
                    k,
                    false,
                )
            }
            ModelSpec::Tree {
                degree,
                depth,
                boundary,
                rate,
            } => {
                if *degree < 2 {
                    return Err(Error::InvalidParameter(
                        "tree degree must be at least 2".into(),
                    ));
                }
                let rate = rate.unwrap_or(1.0 / *degree as f64);
                positive("rate", rate)?;
                let levels = tree_levels(*degree, *depth);
                let n = levels.len();
                let parents = tree_parents(*degree, *depth);
                let mut t = Vec::with_capacity(2 * n);
                for (v, p) in parents.iter().enumerate().skip(1) {
                    t.push((v, *p, rate));
                    t.push((*p, v, rate));
                }
                let mut k = vec![0.0; n];
                if *boundary == Boundary::Dirichlet {
                    let severed = if *depth == 0 { *degree } else { degree - 1 };
                    for (v, &l) in levels.iter().enumerate() {
                        if l == *depth {
                            k[v] = severed as f64 * rate;
                        }
                    }
                }
                SymmetricChain::new(vec![1.0; n], CsrMatrix::from_triplets(n, t), k, false)
            }
            ModelSpec::StableGrid {
                side,
                dim,
                alpha,
                c,
                radius,
                boundary,
            } => stable_grid(*side, *dim, *alpha, *c, *radius, *boundary),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn mass(n: usize, normalize: bool) -> Vec<f64> {
    let w = if normalize && n > 0 {
        1.0 / n as f64
    } else {
        1.0
    };
    vec![w; n]
}

/// Parent of every vertex of the tree ball (root's parent is itself), breadth-first order.
fn tree_parents(degree: usize, depth: usize) -> Vec<usize> {
    let mut parents = vec![0usize];
    let mut frontier = vec![0usize];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &v in &frontier {
            let children = if v == 0 { degree } else { degree - 1 };
            for _ in 0..children {
                parents.push(v);
                next.push(parents.len() - 1);
            }
        }
        frontier = next;
    }
    parents
}

/// Distance from the root of every vertex of the tree ball, breadth-first order.
pub fn tree_levels(degree: usize, depth: usize) -> Vec<usize> {
    let parents = tree_parents(degree, depth);
    let mut levels = vec![0usize; parents.len()];
    for v in 1..parents.len() {
        levels[v] = levels[parents[v]] + 1;
    }
    levels
}

fn stable_grid(
    side: usize,
    dim: usize,
    alpha: f64,
    c: f64,
    radius: f64,
    boundary: Boundary,
) -> Result<SymmetricChain> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::InvalidParameter(
            "stable grid dimension must be 1 or 2".into(),
        ));
    }
    positive("c", c)?;
    positive("radius", radius)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(alloc::format!(
            "stable index alpha must lie in (0, 2), got {alpha}"
        )));
    }
    let n = side.pow(dim as u32);
    let coords = |i: usize| -> (i64, i64) {
        if dim == 1 {
            (i as i64, 0)
        } else {
            ((i % side) as i64, (i / side) as i64)
        }
    };
    let r = libm::floor(radius) as i64;
    let exponent = dim as f64 + alpha;
    let kernel = |dx: i64, dy: i64| -> Option<f64> {
        let d2 = (dx * dx + dy * dy) as f64;
        let d = libm::sqrt(d2);
        (d2 > 0.0 && d <= radius).then(|| c / libm::pow(d, exponent))
    };
    let inside = |x: i64, y: i64| {
        x >= 0
            && y >= 0
            && (x as usize) < side
            && (dim == 1 && y == 0 || dim == 2 && (y as usize) < side)
    };
    let mut t = Vec::new();
    let mut k = vec![0.0; n];
    let dy_range = if dim == 1 { 0..=0 } else { -r..=r };
    for i in 0..n {
        let (x, y) = coords(i);
        for dy in dy_range.clone() {
            for dx in -r..=r {
                let Some(w) = kernel(dx, dy) else { continue };
                let (u, v) = (x + dx, y + dy);
                if inside(u, v) {
                    let j = if dim == 1 {
                        u as usize
                    } else {
                        u as usize + side * v as usize
                    };
                    t.push((i, j, w));
                } else if boundary == Boundary::Dirichlet {
                    k[i] += w;
                }
            }
        }
    }
    SymmetricChain::new(vec![1.0; n], CsrMatrix::from_triplets(n, t), k, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_is_conservative() {
        let c = ModelSpec::Torus {
            n: 4,
            rate: 1.0,
            killing: 0.0,
            normalize_mass: false,
        }
        .build()
        .unwrap();
        assert!(c.is_conservative());
        assert!(c.generator().row_sums().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn dirichlet_tree_kills_exactly_at_leaves() {
        let spec = ModelSpec::Tree {
            degree: 3,
            depth: 8,
            boundary: Boundary::Dirichlet,
            rate: None,
        };
        let c = spec.build().unwrap();
        let levels = tree_levels(3, 8);
        assert_eq!(c.n(), 1 + 3 * ((1 << 8) - 1));
        // Construction oracle: every vertex of a 3-regular tree has 3 neighbours; the leaf's
        // missing neighbours (2 of them) reappear as killing at the severed-edge rate 1/3 each.
        let jumps = c.jump_rates();
        for v in 0..c.n() {
            let neighbours = c.rates().row(v).count();
            let missing = 3 - neighbours;
            assert_eq!(c.killing()[v] > 0.0, levels[v] == 8);
            assert!((c.killing()[v] - missing as f64 / 3.0).abs() < 1e-15);
            assert!((jumps[v] + c.killing()[v] - 1.0).abs() < 1e-15);
        }
        let refl = ModelSpec::Tree {
            degree: 3,
            depth: 8,
            boundary: Boundary::Reflecting,
            rate: None,
        }
        .build()
        .unwrap();
        assert!(refl.is_conservative());
    }

    #[test]
    fn path_and_grid_boundaries() {
        let p = ModelSpec::Path {
            n: 5,
            rate: 2.0,
            boundary: Boundary::Dirichlet,
            normalize_mass: true,
        }
        .build()
        .unwrap();
        assert_eq!(p.killing(), &[2.0, 0.0, 0.0, 0.0, 2.0]);
        assert!((p.mass().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = ModelSpec::StableGrid {
            side: 6,
            dim: 1,
            alpha: 1.0,
            c: 1.0,
            radius: 2.0,
            boundary: Boundary::Dirichlet,
        }
        .build()
        .unwrap();
        // Interior state 2 loses nothing; state 0 loses the jumps to -1 and -2.
        assert_eq!(g.killing()[2], 0.0);
        assert!((g.killing()[0] - (1.0 + 1.0 / 4.0)).abs() < 1e-15);
        assert!((g.rates().get(0, 2) - 0.25).abs() < 1e-15);
        let g2 = ModelSpec::StableGrid {
            side: 4,
            dim: 2,
            alpha: 0.5,
            c: 1.0,
            radius: 1.5,
            boundary: Boundary::Reflecting,
        }
        .build()
        .unwrap();
        assert_eq!(g2.n(), 16);
        assert!(g2.is_conservative());
    }
}
