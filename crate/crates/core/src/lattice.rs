//! Index arithmetic on the square lattice `[N]^d` and its centered variant
//! `[±R]^d`, boundary sets and friction-site presets.
//!
//! Sites are flattened lexicographically: the last coordinate runs fastest,
//! so flat order and lexicographic order of multi-indices coincide. Flat
//! indices are zero-based; coordinates use the physical labels (`1..=n` for
//! corner labeling, `-R..=R` for centered labeling).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("lattice dimension must be at least 1")]
    ZeroDimension,
    #[error("lattice side length must be at least 1")]
    ZeroSide,
    #[error("side {n} in dimension {d} overflows the flat index range")]
    Overflow { d: usize, n: usize },
    #[error("centered labeling needs an odd side length, got {0}")]
    EvenCenteredSide(usize),
    #[error("preset `{tag}` needs {need}, lattice has dimension {d}")]
    IncompatiblePreset {
        tag: SiteTag,
        need: &'static str,
        d: usize,
    },
    #[error("site {0:?} lies outside the lattice")]
    SiteOutOfRange(Vec<i64>),
    #[error("site {0:?} has the wrong number of coordinates")]
    WrongArity(Vec<i64>),
    #[error("flat index {index} out of range for {len} sites")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate site {0:?}")]
    DuplicateSite(Vec<i64>),
    #[error("friction strength must be positive and finite, got {0}")]
    BadGamma(f64),
    #[error("{sites} sites but {gammas} friction strengths")]
    GammaCount { sites: usize, gammas: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    /// Coordinates `1..=n`.
    Corner,
    /// Coordinates `-r..=r` with `n = 2r + 1`.
    Centered,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatticeShape {
    d: usize,
    n: usize,
    labeling: Labeling,
    len: usize,
}

pub fn build_shape(d: usize, n: usize, centered: bool) -> Result<LatticeShape, LatticeError> {
    let labeling = if centered {
        Labeling::Centered
    } else {
        Labeling::Corner
    };
    LatticeShape::new(d, n, labeling)
}

impl LatticeShape {
    pub fn new(d: usize, n: usize, labeling: Labeling) -> Result<Self, LatticeError> {
        if d == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if n == 0 {
            return Err(LatticeError::ZeroSide);
        }
        if labeling == Labeling::Centered && n % 2 == 0 {
            return Err(LatticeError::EvenCenteredSide(n));
        }
        let exp = u32::try_from(d).map_err(|_| LatticeError::Overflow { d, n })?;
        let len = n
            .checked_pow(exp)
            .filter(|&l| i64::try_from(l).is_ok())
            .ok_or(LatticeError::Overflow { d, n })?;
        Ok(Self { d, n, labeling, len })
    }

    /// Centered lattice `[±r]^d`, i.e. side `2r + 1`.
    pub fn centered(d: usize, r: usize) -> Result<Self, LatticeError> {
        let n = r
            .checked_mul(2)
            .and_then(|x| x.checked_add(1))
            .ok_or(LatticeError::Overflow { d, n: r })?;
        Self::new(d, n, Labeling::Centered)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn labeling(&self) -> Labeling {
        self.labeling
    }

    /// A single site per axis: valid for scalar sanity checks, but there
    /// are no interaction edges.
    pub fn is_degenerate(&self) -> bool {
        self.n == 1
    }

    /// Smallest and largest coordinate label along every axis.
    pub fn coord_bounds(&self) -> (i64, i64) {
        let n = self.n as i64;
        match self.labeling {
            Labeling::Corner => (1, n),
            Labeling::Centered => (-(n - 1) / 2, (n - 1) / 2),
        }
    }

    pub fn multi(&self, index: usize) -> Result<Vec<i64>, LatticeError> {
        if index >= self.len {
            return Err(LatticeError::IndexOutOfRange {
                index,
                len: self.len,
            });
        }
        let (lo, _) = self.coord_bounds();
        let mut out = vec![0; self.d];
        let mut rest = index;
        for c in out.iter_mut().rev() {
            *c = lo + (rest % self.n) as i64;
            rest /= self.n;
        }
        Ok(out)
    }

    pub fn flat(&self, site: &[i64]) -> Result<usize, LatticeError> {
        if site.len() != self.d {
            return Err(LatticeError::WrongArity(site.to_vec()));
        }
        let (lo, hi) = self.coord_bounds();
        let mut index = 0usize;
        for &c in site {
            if c < lo || c > hi {
                return Err(LatticeError::SiteOutOfRange(site.to_vec()));
            }
            index = index * self.n + (c - lo) as usize;
        }
        Ok(index)
    }

    /// Nearest-neighbour pairs `(i, j)` with `i < j`, in flat order of `i`
    /// and then of the axis.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.d * self.len);
        for i in 0..self.len {
            let mut stride = 1;
            for _ in 0..self.d {
                let pos = (i / stride) % self.n;
                if pos + 1 < self.n {
                    out.push((i, i + stride));
                }
                stride *= self.n;
            }
        }
        out.sort_unstable();
        out
    }

    pub fn is_boundary(&self, site: &[i64]) -> bool {
        let (lo, hi) = self.coord_bounds();
        site.iter().any(|&c| c == lo || c == hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteTag {
    Boundary,
    Corners,
    EdgeCenters,
    OppositeEdges,
    TerminalEnds,
    SingleEnd,
    Custom,
}

impl fmt::Display for SiteTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SiteTag::Boundary => "boundary",
            SiteTag::Corners => "corners",
            SiteTag::EdgeCenters => "edge_centers",
            SiteTag::OppositeEdges => "opposite_edges",
            SiteTag::TerminalEnds => "terminal_ends",
            SiteTag::SingleEnd => "single_end",
            SiteTag::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for SiteTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "boundary" => SiteTag::Boundary,
            "corners" => SiteTag::Corners,
            "edge_centers" => SiteTag::EdgeCenters,
            "opposite_edges" => SiteTag::OppositeEdges,
            "terminal_ends" => SiteTag::TerminalEnds,
            "single_end" => SiteTag::SingleEnd,
            "custom" => SiteTag::Custom,
            other => return Err(format!("unknown site preset `{other}`")),
        })
    }
}

/// Ordered, duplicate-free set of flat site indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSet {
    sites: Vec<usize>,
    tag: SiteTag,
}

impl SiteSet {
    pub fn new(shape: &LatticeShape, mut sites: Vec<usize>, tag: SiteTag) -> Result<Self, LatticeError> {
        for &s in &sites {
            if s >= shape.len() {
                return Err(LatticeError::IndexOutOfRange {
                    index: s,
                    len: shape.len(),
                });
            }
        }
        sites.sort_unstable();
        if let Some(w) = sites.windows(2).find(|w| w[0] == w[1]) {
            return Err(LatticeError::DuplicateSite(shape.multi(w[0])?));
        }
        Ok(Self { sites, tag })
    }

    pub fn from_multis(shape: &LatticeShape, multis: &[Vec<i64>], tag: SiteTag) -> Result<Self, LatticeError> {
        let flat = multis
            .iter()
            .map(|m| shape.flat(m))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(shape, flat, tag)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn tag(&self) -> SiteTag {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }
}

pub fn boundary_sites(shape: &LatticeShape) -> SiteSet {
    let sites = (0..shape.len())
        .filter(|&k| shape.is_boundary(&shape.multi(k).expect("index in range")))
        .collect();
    SiteSet {
        sites,
        tag: SiteTag::Boundary,
    }
}

/// Friction sites together with their strengths `γ_i`, aligned with
/// `set.sites()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrictionSites {
    set: SiteSet,
    gammas: Vec<f64>,
}

impl FrictionSites {
    pub fn new(set: SiteSet, gammas: Vec<f64>) -> Result<Self, LatticeError> {
        if set.len() != gammas.len() {
            return Err(LatticeError::GammaCount {
                sites: set.len(),
                gammas: gammas.len(),
            });
        }
        if let Some(&g) = gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(LatticeError::BadGamma(g));
        }
        Ok(Self { set, gammas })
    }

    pub fn uniform(set: SiteSet, gamma: f64) -> Result<Self, LatticeError> {
        let gammas = vec![gamma; set.len()];
        Self::new(set, gammas)
    }

    pub fn set(&self) -> &SiteSet {
        &self.set
    }

    pub fn sites(&self) -> &[usize] {
        self.set.sites()
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.set.sites().iter().copied().zip(self.gammas.iter().copied())
    }

    /// Friction strength at `site`, zero when the site is undamped.
    pub fn gamma_at(&self, site: usize) -> f64 {
        match self.set.sites().binary_search(&site) {
            Ok(k) => self.gammas[k],
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.gammas.iter().sum()
    }
}

pub fn friction_preset(shape: &LatticeShape, tag: SiteTag, gamma: f64) -> Result<FrictionSites, LatticeError> {
    let d = shape.dim();
    let (lo, hi) = shape.coord_bounds();
    let needs = |ok: bool, need: &'static str| {
        if ok {
            Ok(())
        } else {
            Err(LatticeError::IncompatiblePreset { tag, need, d })
        }
    };
    let multis: Vec<Vec<i64>> = match tag {
        SiteTag::Boundary => {
            return FrictionSites::uniform(boundary_sites(shape), gamma);
        }
        SiteTag::Corners => vec![vec![lo; d], vec![hi; d]],
        SiteTag::EdgeCenters => {
            needs(d >= 2, "dimension at least 2")?;
            let c = match shape.labeling() {
                Labeling::Corner => (shape.side() as i64 + 1) / 2,
                Labeling::Centered => 0,
            };
            let mut a = vec![c; d];
            let mut b = vec![c; d];
            a[0] = lo;
            b[0] = hi;
            vec![a, b]
        }
        SiteTag::OppositeEdges => {
            needs(d >= 2, "dimension at least 2")?;
            let sites = (0..shape.len())
                .filter(|&k| {
                    let m = shape.multi(k).expect("index in range");
                    m[0] == lo || m[0] == hi
                })
                .collect();
            return FrictionSites::uniform(SiteSet::new(shape, sites, tag)?, gamma);
        }
        SiteTag::TerminalEnds => {
            needs(d == 1, "dimension 1")?;
            vec![vec![lo], vec![hi]]
        }
        SiteTag::SingleEnd => {
            needs(d == 1, "dimension 1")?;
            vec![vec![lo]]
        }
        SiteTag::Custom => {
            return Err(LatticeError::IncompatiblePreset {
                tag,
                need: "an explicit site list",
                d,
            })
        }
    };
    let mut multis = multis;
    multis.dedup();
    FrictionSites::uniform(SiteSet::from_multis(shape, &multis, tag)?, gamma)
}
