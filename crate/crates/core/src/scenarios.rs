//! Homogeneous, impurity and disordered networks, plus the localisation
//! and level-spacing diagnostics used to study them.

use std::time::Instant;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cli::SweepRecord;
use crate::lattice::{friction_preset, FrictionSites, LatticeError, LatticeShape, SiteSet, SiteTag};
use crate::operators::{build_generator, build_schrodinger, Interaction, NetworkSpec, OperatorError};
use crate::spectra::{
    eig_symmetric, spectral_gap_direct, spectral_gap_pencil, EigenSystem, GapMethod, QuadraticPencil, SpectraError,
    SpectralGapResult,
};
use crate::wigner::{find_gap_wigner, min_singular_value, GapPolicy, Reference, WignerContext, WignerError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("impurity lattices need an even side, got {0}")]
    OddSide(usize),
    #[error("interaction disorder is only supported on a chain")]
    InteractionNeedsChain,
    #[error("scenario.friction is required for lattices of dimension two or more")]
    MissingFriction,
    #[error("only {0} sites above the amplitude floor, need at least 4")]
    TooFewSites(usize),
    #[error("window of side {window} does not fit in the reference system of side {big}")]
    WindowTooLarge { window: usize, big: usize },
    #[error("validation failed: smallest singular value {sigma:e} exceeds {bound:e}")]
    Unvalidated { sigma: f64, bound: f64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Wigner(#[from] WignerError),
}

/// Uniform physical parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Uniform {
    pub eta: f64,
    pub xi: f64,
    pub mass: f64,
    pub gamma: f64,
}

impl Default for Uniform {
    fn default() -> Self {
        Self {
            eta: 1.0,
            xi: 1.0,
            mass: 1.0,
            gamma: 1.0,
        }
    }
}

pub fn scenario_homogeneous(d: usize, n: usize, p: &Uniform, tag: SiteTag) -> Result<NetworkSpec, ScenarioError> {
    let shape = LatticeShape::new(d, n, crate::lattice::Labeling::Corner)?;
    let friction = friction_preset(&shape, tag, p.gamma)?;
    Ok(NetworkSpec::builder(shape)
        .mass(p.mass)
        .pin(p.eta)
        .interaction(Interaction::Uniform(p.xi))
        .friction(friction)
        .build()?)
}

fn default_ends(d: usize) -> SiteTag {
    if d == 1 {
        SiteTag::TerminalEnds
    } else {
        SiteTag::Corners
    }
}

/// A network with one weakened pinning site at `c_d(N) = (N/2, …, N/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Impurity {
    pub spec: NetworkSpec,
    /// Flat index of the impurity.
    pub center: usize,
    /// Whether `η_center + 2d + ε ≤ η_bulk` holds.
    pub margin_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpurityParams {
    pub eta_bulk: f64,
    pub eta_center: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub gamma: f64,
}

impl Default for ImpurityParams {
    fn default() -> Self {
        Self {
            eta_bulk: 10.0,
            eta_center: 5.0,
            epsilon: 1.0,
            xi: 1.0,
            gamma: 1.0,
        }
    }
}

pub fn scenario_impurity(d: usize, n: usize, p: &ImpurityParams) -> Result<Impurity, ScenarioError> {
    if n % 2 == 1 {
        return Err(ScenarioError::OddSide(n));
    }
    let shape = LatticeShape::new(d, n, crate::lattice::Labeling::Corner)?;
    let center = shape.flat(&vec![(n / 2) as i64; d])?;
    let mut eta = vec![p.eta_bulk; shape.len()];
    eta[center] = p.eta_center;
    let margin_ok = p.eta_center + 2.0 * d as f64 + p.epsilon <= p.eta_bulk;
    if !margin_ok {
        warn!(
            "impurity margin violated: {} + {} + {} > {}",
            p.eta_center,
            2 * d,
            p.epsilon,
            p.eta_bulk
        );
    }
    let friction = friction_preset(&shape, default_ends(d), p.gamma)?;
    let spec = NetworkSpec::builder(shape)
        .pinning(eta)
        .interaction(Interaction::Uniform(p.xi))
        .friction(friction)
        .build()?;
    Ok(Impurity { spec, center, margin_ok })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderTarget {
    Pinning,
    Mass,
    Interaction,
}

impl DisorderTarget {
    fn salt(self) -> u64 {
        match self {
            DisorderTarget::Pinning => 0x7069_6e6e_696e_6701,
            DisorderTarget::Mass => 0x6d61_7373_0000_0002,
            DisorderTarget::Interaction => 0x696e_7465_7261_6303,
        }
    }
}

/// `X_i = λ_dis · U(0,1)`, applied as `η_i = base + X_i`,
/// `m_i = 1/(base + X_i)` or `ξ_i = base + X_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    pub target: DisorderTarget,
    #[serde(default = "one")]
    pub base: f64,
    #[serde(default = "one")]
    pub strength: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl DisorderSpec {
    pub fn new(target: DisorderTarget, seed: u64) -> Self {
        Self {
            target,
            base: 1.0,
            strength: 1.0,
            seed,
            gamma: 1.0,
        }
    }

    /// The uniform variate attached to a lattice point. It depends only on
    /// the seed, the target and the coordinates, never on the lattice size.
    pub fn variate(&self, coords: &[i64]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.target.salt());
        let stream = coords
            .iter()
            .enumerate()
            .fold(0u64, |acc, (a, &c)| acc | (((c + (1 << 20)) as u64) << (21 * a)));
        rng.set_stream(stream);
        rng.random::<f64>()
    }

    fn value(&self, coords: &[i64]) -> f64 {
        self.base + self.strength * self.variate(coords)
    }
}

/// Disordered network on the centred box `[−N, N]^d`, damped at the
/// extremal corners (the two chain ends when `d = 1`).
pub fn scenario_disorder(d: usize, n: usize, ds: &DisorderSpec) -> Result<NetworkSpec, ScenarioError> {
    let shape = LatticeShape::centered(d, n)?;
    let coords: Vec<Vec<i64>> = (0..shape.len()).map(|i| shape.multi(i)).collect::<Result<_, _>>()?;
    let friction = friction_preset(&shape, default_ends(d), ds.gamma)?;
    let mut builder = NetworkSpec::builder(shape.clone()).friction(friction);
    match ds.target {
        DisorderTarget::Pinning => builder = builder.pinning(coords.iter().map(|c| ds.value(c)).collect()),
        DisorderTarget::Mass => builder = builder.masses(coords.iter().map(|c| 1.0 / ds.value(c)).collect()),
        DisorderTarget::Interaction => {
            if d != 1 {
                return Err(ScenarioError::InteractionNeedsChain);
            }
            // edge (i, i+1) is keyed by its left end
            let xi = coords[..coords.len() - 1].iter().map(|c| ds.value(c)).collect();
            builder = builder.interaction(Interaction::PerEdge(xi));
        }
    }
    Ok(builder.build()?)
}

/// A randomized network for identity and cross-method checks: a chain
/// (probability 0.6, `N ∈ 2..=32`) or a square (`N ∈ 2..=6`), log-uniform
/// parameters on `[0.1, 10]` jittered by ±10% per site, and one to four
/// damped sites with log-uniform friction.
pub fn random_spec(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n) = if rng.random_bool(0.6) {
        (1, rng.random_range(2..=32))
    } else {
        (2, rng.random_range(2..=6))
    };
    let shape = LatticeShape::new(d, n, crate::lattice::Labeling::Corner).expect("valid shape");
    let len = shape.len();
    let log_uniform = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-1.0..=1.0));
    let jittered = |rng: &mut ChaCha8Rng, count: usize| {
        let base = log_uniform(rng);
        (0..count)
            .map(|_| base * (1.0 + rng.random_range(-0.1..=0.1)))
            .collect::<Vec<f64>>()
    };
    let eta = jittered(&mut rng, len);
    let masses = jittered(&mut rng, len);
    let interaction = if d == 1 {
        Interaction::PerEdge(jittered(&mut rng, len - 1))
    } else {
        Interaction::Uniform(log_uniform(&mut rng))
    };
    let count = rng.random_range(1..=4usize).min(len);
    let mut sites: Vec<usize> = Vec::new();
    while sites.len() < count {
        let s = rng.random_range(0..len);
        if !sites.contains(&s) {
            sites.push(s);
        }
    }
    sites.sort_unstable();
    let gammas = (0..count).map(|_| log_uniform(&mut rng)).collect();
    let set = SiteSet::new(&shape, sites, SiteTag::Custom).expect("distinct in-range sites");
    let friction = FrictionSites::new(set, gammas).expect("positive friction");
    NetworkSpec::builder(shape)
        .pinning(eta)
        .masses(masses)
        .interaction(interaction)
        .friction(friction)
        .build()
        .expect("positive parameters")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacingReport {
    pub n: usize,
    pub spacing: f64,
    pub threshold: f64,
    pub event: bool,
}

/// Smallest gap between consecutive eigenvalues of `b`, compared with
/// the threshold `N^{−2d−2}`.
pub fn min_level_spacing(b: &DMatrix<f64>, n: usize, d: usize) -> Result<SpacingReport, ScenarioError> {
    let values = eig_symmetric(b)?.values;
    let spacing = values
        .as_slice()
        .windows(2)
        .map(|w| (w[1] - w[0]).max(0.0))
        .fold(f64::INFINITY, f64::min);
    let spacing = if spacing.is_finite() { spacing } else { 0.0 };
    let threshold = (n as f64).powi(-(2 * d as i32) - 2);
    Ok(SpacingReport {
        n,
        spacing,
        threshold,
        event: spacing < threshold,
    })
}

/// Exponential profile `|φ(n)| ≈ A e^{−D|n − m₀|}` fitted by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalizationFit {
    pub center: usize,
    /// `D`, present only when `r2 ≥ 0.9`.
    pub rate: Option<f64>,
    pub raw_rate: f64,
    pub r2: f64,
    /// Weight `Σ φ²` outside the box of half the side around the centre.
    pub tail_mass: f64,
}

pub const FIT_FLOOR: f64 = 1e-14;

pub fn localization_fit(phi: &DVector<f64>, shape: &LatticeShape, center: usize) -> Result<LocalizationFit, ScenarioError> {
    let c = shape.multi(center)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut tail = 0.0;
    let half = shape.side() as f64 / 4.0;
    for (i, &v) in phi.iter().enumerate() {
        let m = shape.multi(i)?;
        let dist = m
            .iter()
            .zip(&c)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let box_dist = m.iter().zip(&c).map(|(a, b)| (a - b).abs()).max().unwrap_or(0) as f64;
        if box_dist > half {
            tail += v * v;
        }
        if v.abs() > FIT_FLOOR {
            xs.push(dist);
            ys.push(v.abs().ln());
        }
    }
    if xs.len() < 4 {
        return Err(ScenarioError::TooFewSites(xs.len()));
    }
    let line = least_squares(&xs, &ys);
    let norm = phi.norm_squared();
    Ok(LocalizationFit {
        center,
        rate: (line.r2 >= 0.9).then_some(-line.slope),
        raw_rate: -line.slope,
        r2: line.r2,
        tail_mass: (tail / norm).clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Line {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Line { slope, intercept, r2 }
}

/// Which eigenvector of the reference system is followed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSelector {
    Ground,
    /// The state carrying the most weight inside the smallest window.
    MostConcentrated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionEntry {
    pub n: usize,
    /// `None` when the window spectrum clusters around the target.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionReport {
    pub n_big: usize,
    pub entries: Vec<RestrictionEntry>,
}

impl RestrictionReport {
    /// Deviations decrease along the windows, allowing 10% slack.
    pub fn decreasing(&self) -> bool {
        let devs: Vec<f64> = self.entries.iter().filter_map(|e| e.deviation).collect();
        devs.windows(2).all(|w| w[1] <= 1.1 * w[0])
    }
}

/// A family of networks indexed by size, with the site every window is
/// centred on.
pub trait WindowFamily {
    fn build(&self, n: usize) -> Result<NetworkSpec, ScenarioError>;
    fn center(&self, n: usize) -> Vec<i64>;
}

pub struct ImpurityFamily(pub ImpurityParams);

impl WindowFamily for ImpurityFamily {
    fn build(&self, n: usize) -> Result<NetworkSpec, ScenarioError> {
        Ok(scenario_impurity(1, n, &self.0)?.spec)
    }

    fn center(&self, n: usize) -> Vec<i64> {
        vec![(n / 2) as i64]
    }
}

pub struct DisorderFamily(pub DisorderSpec);

impl WindowFamily for DisorderFamily {
    fn build(&self, n: usize) -> Result<NetworkSpec, ScenarioError> {
        scenario_disorder(1, n, &self.0)
    }

    fn center(&self, _: usize) -> Vec<i64> {
        vec![0]
    }
}

/// Restricts an eigenvector of a large system to windows of side `n`
/// around the common centre and compares it with the nearest eigenvector
/// of the window operator itself.
pub fn restricted_eigenvector_check<F: WindowFamily>(
    family: &F,
    n_big: usize,
    windows: &[usize],
    selector: StateSelector,
) -> Result<RestrictionReport, ScenarioError> {
    let big = family.build(n_big)?;
    let big_shape = big.shape().clone();
    let big_center = family.center(n_big);
    let big_es = eig_symmetric(&build_schrodinger(&big))?;

    let embed = |n: usize| -> Result<(NetworkSpec, Vec<usize>), ScenarioError> {
        let spec = family.build(n)?;
        let c = family.center(n);
        let map = (0..spec.len())
            .map(|i| {
                let m = spec.shape().multi(i)?;
                let shifted: Vec<i64> = m.iter().zip(&c).zip(&big_center).map(|((x, a), b)| x - a + b).collect();
                big_shape.flat(&shifted).map_err(|_| ScenarioError::WindowTooLarge {
                    window: spec.shape().side(),
                    big: big_shape.side(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((spec, map))
    };

    let target = match selector {
        StateSelector::Ground => 0,
        StateSelector::MostConcentrated => {
            let smallest = *windows.iter().min().unwrap_or(&n_big);
            let (_, map) = embed(smallest)?;
            (0..big_es.len())
                .max_by(|&a, &b| {
                    let wa: f64 = map.iter().map(|&s| big_es.vectors[(s, a)].powi(2)).sum();
                    let wb: f64 = map.iter().map(|&s| big_es.vectors[(s, b)].powi(2)).sum();
                    wa.total_cmp(&wb)
                })
                .unwrap_or(0)
        }
    };
    let phi = big_es.vectors.column(target);
    let lambda = big_es.values[target];

    let mut entries = Vec::new();
    for &n in windows {
        let (spec, map) = embed(n)?;
        let mut restricted = DVector::from_iterator(map.len(), map.iter().map(|&s| phi[s]));
        let norm = restricted.norm();
        if norm == 0.0 {
            entries.push(RestrictionEntry { n, deviation: None });
            continue;
        }
        restricted /= norm;
        let es = eig_symmetric(&build_schrodinger(&spec))?;
        entries.push(RestrictionEntry {
            n,
            deviation: nearest_deviation(&es, &restricted, lambda),
        });
    }
    Ok(RestrictionReport { n_big, entries })
}

fn nearest_deviation(es: &EigenSystem, x: &DVector<f64>, lambda: f64) -> Option<f64> {
    let mut order: Vec<usize> = (0..es.len()).collect();
    order.sort_by(|&a, &b| (es.values[a] - lambda).abs().total_cmp(&(es.values[b] - lambda).abs()));
    let best = order[0];
    if let Some(&next) = order.get(1) {
        if (es.values[next] - es.values[best]).abs() <= 1e-8 * es.values[best].abs().max(1.0) {
            return None;
        }
    }
    let v = es.vectors.column(best);
    let plus = (x - v).norm();
    let minus = (x + v).norm();
    Some(plus.min(minus))
}

/// `λ₂(B) − λ₁(B)`.
pub fn schrodinger_gap(spec: &NetworkSpec) -> Result<f64, ScenarioError> {
    let v = eig_symmetric(&build_schrodinger(spec))?.values;
    Ok(if v.len() > 1 { v[1] - v[0] } else { f64::INFINITY })
}

/// Gap by the requested method. The Wigner route locates every eigenvalue
/// and, for systems up to `VALIDATE_LIMIT` sites, checks the attaining one
/// against the smallest singular value of `Ω − ω`.
pub fn compute_gap(spec: &NetworkSpec, method: GapMethod) -> Result<(SpectralGapResult, Vec<String>), ScenarioError> {
    let mut flags = Vec::new();
    let result = match method {
        GapMethod::Direct => spectral_gap_direct(&build_generator(spec)?)?,
        GapMethod::Pencil => spectral_gap_pencil(&QuadraticPencil::from_bundle(&build_generator(spec)?))?,
        GapMethod::Wigner => {
            let ctx = WignerContext::from_spec(spec, Reference::Top)?;
            let found = find_gap_wigner(&ctx, GapPolicy::Global)?;
            if found.dark_modes > 0 {
                flags.push("dark".to_string());
            }
            if spec.len() <= VALIDATE_LIMIT {
                let omega = build_generator(spec)?.omega;
                let sigma = min_singular_value(&omega, found.result.attaining);
                let bound = 1e-6 * omega.norm();
                if sigma > bound {
                    return Err(ScenarioError::Unvalidated { sigma, bound });
                }
            }
            found.result
        }
    };
    Ok((result, flags))
}

pub const VALIDATE_LIMIT: usize = 600;

/// A family of networks parametrised by dimension, side and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    Homogeneous {
        #[serde(default = "one")]
        eta: f64,
        #[serde(default = "one")]
        xi: f64,
        #[serde(default = "one")]
        mass: f64,
        #[serde(default = "one")]
        gamma: f64,
        /// Required for `d ≥ 2`; chains default to damping both ends.
        #[serde(default)]
        friction: Option<SiteTag>,
    },
    Impurity {
        #[serde(default = "ten")]
        eta_bulk: f64,
        #[serde(default = "five")]
        eta_center: f64,
        #[serde(default = "one")]
        epsilon: f64,
        #[serde(default = "one")]
        xi: f64,
        #[serde(default = "one")]
        gamma: f64,
    },
    Disorder {
        target: DisorderTarget,
        #[serde(default = "one")]
        base: f64,
        #[serde(default = "one")]
        strength: f64,
        #[serde(default = "one")]
        gamma: f64,
    },
}

fn ten() -> f64 {
    10.0
}

fn five() -> f64 {
    5.0
}

impl Scenario {
    pub fn homogeneous(friction: Option<SiteTag>) -> Self {
        let p = Uniform::default();
        Scenario::Homogeneous {
            eta: p.eta,
            xi: p.xi,
            mass: p.mass,
            gamma: p.gamma,
            friction,
        }
    }

    pub fn impurity() -> Self {
        let p = ImpurityParams::default();
        Scenario::Impurity {
            eta_bulk: p.eta_bulk,
            eta_center: p.eta_center,
            epsilon: p.epsilon,
            xi: p.xi,
            gamma: p.gamma,
        }
    }

    pub fn disorder(target: DisorderTarget) -> Self {
        Scenario::Disorder {
            target,
            base: 1.0,
            strength: 1.0,
            gamma: 1.0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::Homogeneous { .. } => "homogeneous",
            Scenario::Impurity { .. } => "impurity",
            Scenario::Disorder { .. } => "disorder",
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Scenario::Homogeneous { friction: Some(f), .. } => format!("homogeneous_{f}"),
            Scenario::Homogeneous { friction: None, .. } => "homogeneous".to_string(),
            Scenario::Impurity { .. } => "impurity".to_string(),
            Scenario::Disorder { target, .. } => format!("disorder_{}", serde_plain(target)),
        }
    }

    /// Whether the realisation depends on the seed.
    pub fn is_random(&self) -> bool {
        matches!(self, Scenario::Disorder { .. })
    }

    pub fn build(&self, d: usize, n: usize, seed: u64) -> Result<(NetworkSpec, Vec<String>), ScenarioError> {
        match *self {
            Scenario::Homogeneous {
                eta,
                xi,
                mass,
                gamma,
                friction,
            } => {
                let tag = match (friction, d) {
                    (Some(t), _) => t,
                    (None, 1) => SiteTag::TerminalEnds,
                    (None, _) => return Err(ScenarioError::MissingFriction),
                };
                let p = Uniform { eta, xi, mass, gamma };
                Ok((scenario_homogeneous(d, n, &p, tag)?, Vec::new()))
            }
            Scenario::Impurity {
                eta_bulk,
                eta_center,
                epsilon,
                xi,
                gamma,
            } => {
                let p = ImpurityParams {
                    eta_bulk,
                    eta_center,
                    epsilon,
                    xi,
                    gamma,
                };
                let imp = scenario_impurity(d, n, &p)?;
                let flags = if imp.margin_ok {
                    Vec::new()
                } else {
                    vec!["margin".to_string()]
                };
                Ok((imp.spec, flags))
            }
            Scenario::Disorder {
                target,
                base,
                strength,
                gamma,
            } => {
                let ds = DisorderSpec {
                    target,
                    base,
                    strength,
                    seed,
                    gamma,
                };
                Ok((scenario_disorder(d, n, &ds)?, Vec::new()))
            }
        }
    }
}

fn serde_plain(t: &DisorderTarget) -> &'static str {
    match t {
        DisorderTarget::Pinning => "pinning",
        DisorderTarget::Mass => "mass",
        DisorderTarget::Interaction => "interaction",
    }
}

/// Worker-count override for sweeps.
pub const WORKERS_ENV: &str = "CHAINGAP_WORKERS";

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|k| k.get()).unwrap_or(1))
}

/// One record per `(N, seed)`, computed in parallel and returned sorted by
/// `(N, seed)`. Failures are recorded in the row and do not stop the sweep.
pub fn run_sweep(scenario: &Scenario, d: usize, ns: &[usize], seeds: &[u64], method: GapMethod) -> Vec<SweepRecord> {
    let seeds: Vec<u64> = if scenario.is_random() && !seeds.is_empty() {
        seeds.to_vec()
    } else {
        vec![0]
    };
    let jobs: Vec<(usize, u64)> = ns.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let run = || -> Vec<SweepRecord> { jobs.par_iter().map(|&(n, seed)| sweep_one(scenario, d, n, seed, method)).collect() };
    let mut records = match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    records.sort_by_key(|r| (r.n, r.seed));
    records
}

fn sweep_one(scenario: &Scenario, d: usize, n: usize, seed: u64, method: GapMethod) -> SweepRecord {
    let start = Instant::now();
    let outcome = scenario
        .build(d, n, seed)
        .and_then(|(spec, mut flags)| compute_gap(&spec, method).map(|(r, f)| {
            flags.extend(f);
            (r, flags)
        }));
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut record = SweepRecord {
        scenario: scenario.tag(),
        d,
        n,
        seed,
        method,
        gap: f64::NAN,
        re: f64::NAN,
        im: f64::NAN,
        wall_ms,
        flags: String::new(),
    };
    match outcome {
        Ok((r, flags)) => {
            record.gap = r.gap;
            record.re = r.attaining.re;
            record.im = r.attaining.im;
            record.flags = flags.join(";");
        }
        Err(e) => record.flags = format!("error:{}", e.to_string().replace([',', '\n'], " ")),
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::analytic_eigenpairs_homogeneous;

    #[test]
    fn homogeneous_examples() {
        let p = Uniform::default();
        let s = scenario_homogeneous(1, 16, &p, SiteTag::TerminalEnds).unwrap();
        assert_eq!(s.friction().sites(), &[0, 15]);
        assert_eq!(scenario_homogeneous(2, 8, &p, SiteTag::Corners).unwrap().friction().len(), 2);
        assert_eq!(scenario_homogeneous(2, 8, &p, SiteTag::OppositeEdges).unwrap().friction().len(), 16);
    }

    #[test]
    fn impurity_layout() {
        let imp = scenario_impurity(1, 32, &ImpurityParams::default()).unwrap();
        assert!(imp.margin_ok);
        assert_eq!(imp.center, 15);
        assert_eq!(imp.spec.pinning()[15], 5.0);
        assert_eq!(imp.spec.pinning().iter().filter(|&&x| x == 10.0).count(), 31);
        assert_eq!(scenario_impurity(1, 7, &ImpurityParams::default()), Err(ScenarioError::OddSide(7)));
        let tight = ImpurityParams {
            eta_bulk: 6.0,
            ..ImpurityParams::default()
        };
        assert!(!scenario_impurity(1, 8, &tight).unwrap().margin_ok);
    }

    #[test]
    fn impurity_b_gap_is_uniform() {
        let p = ImpurityParams::default();
        for n in [8, 16, 32, 64] {
            let g = schrodinger_gap(&scenario_impurity(1, n, &p).unwrap().spec).unwrap();
            assert!(g >= p.epsilon, "N = {n}: {g}");
        }
    }

    #[test]
    fn disorder_is_reproducible_and_nested() {
        let ds = DisorderSpec::new(DisorderTarget::Pinning, 42);
        let a = scenario_disorder(1, 16, &ds).unwrap();
        let b = scenario_disorder(1, 16, &ds).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.pinning().iter().all(|&x| (1.0..2.0).contains(&x)));
        let small = scenario_disorder(1, 4, &ds).unwrap();
        assert_eq!(small.pinning(), &a.pinning()[12..21]);
        let other = scenario_disorder(1, 16, &DisorderSpec::new(DisorderTarget::Pinning, 43)).unwrap();
        assert_ne!(other.pinning(), a.pinning());
    }

    #[test]
    fn disorder_targets() {
        let m = scenario_disorder(1, 5, &DisorderSpec::new(DisorderTarget::Mass, 1)).unwrap();
        assert!(m.masses().iter().all(|&x| x > 0.5 && x <= 1.0));
        let x = scenario_disorder(1, 5, &DisorderSpec::new(DisorderTarget::Interaction, 1)).unwrap();
        assert!(matches!(x.interaction(), Interaction::PerEdge(v) if v.len() == 10));
        assert_eq!(
            scenario_disorder(2, 3, &DisorderSpec::new(DisorderTarget::Interaction, 1)),
            Err(ScenarioError::InteractionNeedsChain)
        );
    }

    #[test]
    fn spacing_examples() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let r = min_level_spacing(&b, 3, 1).unwrap();
        assert_eq!(r.spacing, 1.0);
        assert!(!r.event);

        let s = scenario_homogeneous(1, 16, &Uniform::default(), SiteTag::TerminalEnds).unwrap();
        let r = min_level_spacing(&build_schrodinger(&s), 16, 1).unwrap();
        let v = analytic_eigenpairs_homogeneous(1, 16, 1.0, 1.0).values;
        let expect = v.as_slice().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        assert!((r.spacing - expect).abs() < 1e-12);
        assert_eq!(r.threshold, 16f64.powi(-4));
    }

    #[test]
    fn synthetic_exponential_profile() {
        let shape = LatticeShape::centered(1, 10).unwrap();
        let phi = DVector::from_fn(21, |i, _| 0.3 * (-((i as f64) - 10.0).abs()).exp());
        let fit = localization_fit(&phi, &shape, 10).unwrap();
        assert!((fit.rate.unwrap() - 1.0).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&fit.tail_mass));
    }

    #[test]
    fn delocalized_state_is_rejected() {
        let s = scenario_homogeneous(1, 32, &Uniform::default(), SiteTag::TerminalEnds).unwrap();
        let es = eig_symmetric(&build_schrodinger(&s)).unwrap();
        // the lowest nonconstant mode: a single cosine arch
        let fit = localization_fit(&es.vectors.column(1).into_owned(), s.shape(), 0).unwrap();
        assert!(fit.rate.is_none(), "r2 = {}", fit.r2);
        let tiny = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let shape = LatticeShape::new(1, 5, crate::lattice::Labeling::Corner).unwrap();
        assert_eq!(localization_fit(&tiny, &shape, 0), Err(ScenarioError::TooFewSites(1)));
    }

    #[test]
    fn impurity_ground_state_is_localized() {
        let imp = scenario_impurity(1, 32, &ImpurityParams::default()).unwrap();
        let es = eig_symmetric(&build_schrodinger(&imp.spec)).unwrap();
        let fit = localization_fit(&es.vectors.column(0).into_owned(), imp.spec.shape(), imp.center).unwrap();
        assert!(fit.r2 >= 0.98);
        assert!(fit.rate.unwrap() > 0.0);
    }

    #[test]
    fn restriction_identity_window() {
        let fam = ImpurityFamily(ImpurityParams::default());
        let r = restricted_eigenvector_check(&fam, 32, &[32], StateSelector::Ground).unwrap();
        assert!(r.entries[0].deviation.unwrap() < 1e-12);
        assert!(matches!(
            restricted_eigenvector_check(&fam, 16, &[32], StateSelector::Ground),
            Err(ScenarioError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn random_specs_are_valid_and_deterministic() {
        for seed in 0..50 {
            let s = random_spec(seed);
            assert_eq!(s, random_spec(seed));
            assert!((1..=4).contains(&s.friction().len()));
        }
    }

    #[test]
    fn sweep_rows_are_sorted() {
        let sc = Scenario::disorder(DisorderTarget::Pinning);
        let rows = run_sweep(&sc, 1, &[3, 2], &[5, 1], GapMethod::Direct);
        let keys: Vec<(usize, u64)> = rows.iter().map(|r| (r.n, r.seed)).collect();
        assert_eq!(keys, vec![(2, 1), (2, 5), (3, 1), (3, 5)]);
        assert!(rows.iter().all(|r| r.gap > 0.0 && r.flags.is_empty()));
    }

    #[test]
    fn sweep_captures_failures() {
        let sc = Scenario::impurity();
        let rows = run_sweep(&sc, 1, &[7, 8], &[], GapMethod::Direct);
        assert!(rows[0].flags.starts_with("error:") && rows[0].gap.is_nan());
        assert!(rows[1].gap > 0.0);
    }
}
