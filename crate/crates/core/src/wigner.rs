//! Low-rank reduction of the generator to the friction sites.
//!
//! Write `𝒜 = iΩ = 𝒜₀ + iA_I A_Iᵀ`, where `𝒜₀` is the undamped
//! (Hermitian) part and `A_I` collects `√γ_a e_a` for the damped sites.
//! With `K = m^{-1/2} B m^{-1/2} = Σ s_j² v_j v_jᵀ` the compressed resolvent
//! is
//!
//! ```text
//! R̃(z) = A_Iᵀ (z − 𝒜₀)⁻¹ A_I = Σ_j z / (z² − s_j²) · w_j w_jᵀ,   w_j(a) = √γ_a v_j(a)
//! ```
//!
//! and `det(z − 𝒜) = Π_j (z² − s_j²) · det(I − iR̃(z))`. Eigenvalues of `𝒜`
//! away from the poles are the points where `R̃(z)` has eigenvalue `−i`;
//! an eigenvalue `z` of `𝒜` is the eigenvalue `ω = −iz` of `Ω`, so the
//! spectral gap is `min Im z`.
//!
//! Everything is evaluated in a shifted frame `z = base + t` with the
//! differences `z ∓ s_j` formed from `base ∓ s_j` first, so roots lying
//! `10⁻⁴⁰` away from a pole keep full relative accuracy.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::FrictionSites;
use crate::operators::{build_schrodinger, mass_symmetrized, NetworkSpec, OperatorError};
use crate::spectra::{
    chain_mode, eig_symmetric, eig_tridiagonal, homogeneous_vector, EigenSystem, GapMethod, SpectraError,
    SpectralGapResult,
};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WignerError {
    #[error("no friction sites")]
    EmptyFriction,
    #[error("{z} lies within {tol:e} of a pole")]
    PoleProximity { z: C64, tol: f64 },
    #[error("pole at {pole} lies on the contour of radius {radius:e}")]
    PoleOnContour { pole: f64, radius: f64 },
    #[error("determinant nearly vanishes on the contour at {point}")]
    ContourDegenerate { point: C64 },
    #[error("winding number {0} is not an integer")]
    NonIntegerWinding(f64),
    #[error("winding number did not stabilise under contour refinement")]
    CountUnstable,
    #[error("no root in the ball of radius {radius:e} after enlarging it")]
    EmptyBall { radius: f64 },
    #[error("ball of radius {radius:e} holds {count} roots")]
    DegenerateCluster { count: i64, radius: f64 },
    #[error("the scalar reduction needs a chain damped at both ends only")]
    NotTwoEndChain,
    #[error("the scalar reduction needs equal friction at both ends, got {0} and {1}")]
    UnequalEnds(f64, f64),
    #[error("chain modes lack the reflection parity the scalar reduction relies on")]
    NoParity,
    #[error("reference {0} is not a pole of the unperturbed resolvent")]
    ReferenceNotPole(f64),
    #[error("root iteration did not converge ({0})")]
    NoConvergence(&'static str),
    #[error("root search lost roots: imaginary parts sum to {found}, friction trace is {expected}")]
    TraceDefect { found: f64, expected: f64 },
    #[error("stiffness is not positive definite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Which unperturbed frequency the rescaled variable `λ = z − λ_ref` is
/// centred on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Top,
    Bottom,
    Value(f64),
}

#[derive(Debug, Clone)]
struct Cluster {
    s: f64,
    members: Vec<usize>,
    /// Rank of the residue `Σ_{j∈c} w_j w_jᵀ`; `members.len() - rank` modes
    /// never feel the friction.
    rank: usize,
    /// Nonzero eigenvalues of the residue, used as first-order root shifts.
    shifts: Vec<f64>,
}

/// Eigen-data of the undamped network restricted to the friction sites.
#[derive(Debug, Clone)]
pub struct WignerContext {
    s: Vec<f64>,
    w: DMatrix<f64>,
    wc: DMatrix<C64>,
    gammas: Vec<f64>,
    sites: Vec<usize>,
    clusters: Vec<Cluster>,
    cluster_of: Vec<usize>,
    lambda_ref: f64,
}

/// Relative tolerance under which two frequencies count as one pole.
pub const CLUSTER_TOL: f64 = 1e-12;

impl WignerContext {
    /// Builds the context from the eigenpairs of `K`. On a chain the
    /// vectors are computed componentwise-accurately.
    pub fn from_spec(spec: &NetworkSpec, reference: Reference) -> Result<Self, WignerError> {
        let b = build_schrodinger(spec);
        let masses = DVector::from_column_slice(spec.masses());
        let k = mass_symmetrized(&b, &masses);
        let es = if spec.shape().dim() == 1 {
            let n = k.nrows();
            let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
            let off: Vec<f64> = (0..n.saturating_sub(1)).map(|i| k[(i, i + 1)]).collect();
            eig_tridiagonal(&diag, &off)?
        } else {
            eig_symmetric(&k)?
        };
        Self::from_eigensystem(&es, spec.friction(), reference)
    }

    /// `es` holds the eigenpairs of `K` (not of `√K`).
    pub fn from_eigensystem(es: &EigenSystem, friction: &FrictionSites, reference: Reference) -> Result<Self, WignerError> {
        if friction.is_empty() {
            return Err(WignerError::EmptyFriction);
        }
        let min = es.values.min();
        if !(min > 0.0) {
            return Err(WignerError::NotPositive(min));
        }
        let s: Vec<f64> = es.values.iter().map(|x| x.sqrt()).collect();
        let sites = friction.sites().to_vec();
        let gammas = friction.gammas().to_vec();
        let w = DMatrix::from_fn(sites.len(), s.len(), |a, j| gammas[a].sqrt() * es.vectors[(sites[a], j)]);
        let wc = w.map(|x| C64::new(x, 0.0));

        let mut clusters: Vec<Cluster> = Vec::new();
        let mut cluster_of = vec![0; s.len()];
        for j in 0..s.len() {
            match clusters.last_mut() {
                Some(c) if (s[j] - c.s).abs() <= CLUSTER_TOL * s[j].max(1.0) => c.members.push(j),
                _ => clusters.push(Cluster {
                    s: s[j],
                    members: vec![j],
                    rank: 0,
                    shifts: Vec::new(),
                }),
            }
            cluster_of[j] = clusters.len() - 1;
        }
        for c in &mut clusters {
            let cols = DMatrix::from_fn(w.nrows(), c.members.len(), |a, k| w[(a, c.members[k])]);
            let gram = cols.transpose() * &cols;
            let eigs = SymmetricEigen::new(gram).eigenvalues;
            let top = eigs.iter().copied().fold(0.0, f64::max);
            c.shifts = eigs
                .iter()
                .copied()
                .filter(|&e| e > 0.0 && e > 1e-10 * top)
                .map(|e| 0.5 * e)
                .collect();
            c.rank = c.shifts.len();
        }

        let mut ctx = Self {
            s,
            w,
            wc,
            gammas,
            sites,
            clusters,
            cluster_of,
            lambda_ref: 0.0,
        };
        ctx.lambda_ref = ctx.resolve(reference);
        Ok(ctx)
    }

    fn resolve(&self, r: Reference) -> f64 {
        match r {
            Reference::Top => *self.s.last().expect("nonempty"),
            Reference::Bottom => self.s[0],
            Reference::Value(x) => x,
        }
    }

    pub fn with_reference(mut self, r: Reference) -> Self {
        self.lambda_ref = self.resolve(r);
        self
    }

    pub fn lambda_ref(&self) -> f64 {
        self.lambda_ref
    }

    /// Unperturbed frequencies `s_j`, ascending.
    pub fn frequencies(&self) -> &[f64] {
        &self.s
    }

    /// Rescaled poles `μ_j = s_j − λ_ref`.
    pub fn mu(&self) -> Vec<f64> {
        self.s.iter().map(|s| s - self.lambda_ref).collect()
    }

    /// Residue vector `w_j` restricted to the friction sites.
    pub fn residue(&self, j: usize) -> DVector<f64> {
        self.w.column(j).into_owned()
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn rank(&self) -> usize {
        self.sites.len()
    }

    /// Number of modes whose eigenspace contains vectors vanishing on every
    /// friction site. Each gives a purely imaginary eigenvalue of `Ω`.
    pub fn dark_modes(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len() - c.rank).sum()
    }

    fn nearest_cluster(&self, x: f64) -> usize {
        let k = self.clusters.partition_point(|c| c.s < x);
        match (k.checked_sub(1), self.clusters.get(k)) {
            (Some(a), Some(b)) if (x - self.clusters[a].s).abs() <= (b.s - x).abs() => a,
            (Some(a), None) => a,
            _ => k,
        }
    }

    /// `a_c = z/(z² − s_c²)` and its derivative per cluster, for
    /// `z = base + t`.
    fn coefficients(&self, base: f64, t: C64) -> Result<Vec<(C64, C64, C64, C64)>, WignerError> {
        let z = t + base;
        self.clusters
            .iter()
            .map(|c| {
                let zm = t + (base - c.s);
                let zp = t + (base + c.s);
                if zm == C64::new(0.0, 0.0) || zp == C64::new(0.0, 0.0) {
                    return Err(WignerError::PoleProximity { z, tol: 0.0 });
                }
                let d = zm * zp;
                let a = z / d;
                let da = -(d + 2.0 * c.s * c.s) / (d * d);
                Ok((a, da, zm, zp))
            })
            .collect()
    }

    fn assemble(&self, coeff: &[C64]) -> DMatrix<C64> {
        let mut scaled = self.wc.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= coeff[self.cluster_of[j]];
        }
        &scaled * self.wc.transpose()
    }

    fn r_frame(&self, base: f64, t: C64) -> Result<DMatrix<C64>, WignerError> {
        let co = self.coefficients(base, t)?;
        let a: Vec<C64> = co.iter().map(|c| c.0).collect();
        Ok(self.assemble(&a))
    }

    fn check_pole_distance(&self, z: C64) -> Result<(), WignerError> {
        let tol = 1e-12;
        for c in &self.clusters {
            if (z - c.s).norm() < tol || (z + c.s).norm() < tol {
                return Err(WignerError::PoleProximity { z, tol });
            }
        }
        Ok(())
    }

    /// `R̃(z)` in the original variable.
    pub fn evaluate_r_tilde(&self, z: C64) -> Result<DMatrix<C64>, WignerError> {
        self.check_pole_distance(z)?;
        self.r_frame(0.0, z)
    }

    /// `R(λ) = R̃(λ + λ_ref)` in the rescaled variable.
    pub fn evaluate_r(&self, lambda: C64) -> Result<DMatrix<C64>, WignerError> {
        self.check_pole_distance(lambda + self.lambda_ref)?;
        self.r_frame(self.lambda_ref, lambda)
    }

    /// `det(I − iR̃(z))`.
    pub fn wigner_det(&self, z: C64) -> Result<C64, WignerError> {
        let r = self.evaluate_r_tilde(z)?;
        Ok(identity_minus_i(&r).determinant())
    }

    /// `det(z − 𝒜₀) = Π_j (z² − s_j²)`.
    pub fn unperturbed_det(&self, z: C64) -> C64 {
        self.s.iter().map(|s| (z - s) * (z + s)).product()
    }

    /// Logarithmic derivative of `det(z − 𝒜)` with the friction-blind
    /// factors `(z² − s_c²)^{dark}` removed, at `z = base + t`.
    fn log_derivative(&self, base: f64, t: C64) -> Result<C64, WignerError> {
        let co = self.coefficients(base, t)?;
        let a: Vec<C64> = co.iter().map(|c| c.0).collect();
        let da: Vec<C64> = co.iter().map(|c| c.1).collect();
        let m = identity_minus_i(&self.assemble(&a));
        let dm = self.assemble(&da) * (-I);
        let lu = m.lu();
        let x = lu.solve(&dm).ok_or(WignerError::NoConvergence("singular Wigner matrix"))?;
        let mut l = x.trace();
        for (c, &(_, _, zm, zp)) in self.clusters.iter().zip(&co) {
            if c.rank > 0 {
                l += c.rank as f64 * (zm.inv() + zp.inv());
            }
        }
        Ok(l)
    }

    /// `det(I − iR(λ)) · Π_{|μ_c| < r} (λ − μ_c)^{m_c}`, analytic in the
    /// ball of radius `r` around `λ_ref`.
    fn local_determinant(&self, lambda: C64, radius: f64) -> Result<C64, WignerError> {
        let m = identity_minus_i(&self.r_frame(self.lambda_ref, lambda)?);
        let mut det = m.determinant();
        for c in &self.clusters {
            let mu = c.s - self.lambda_ref;
            if mu.abs() < radius {
                det *= (lambda - mu).powu(c.members.len() as u32);
            }
        }
        Ok(det)
    }
}

fn identity_minus_i(r: &DMatrix<C64>) -> DMatrix<C64> {
    let n = r.nrows();
    DMatrix::identity(n, n) - r * I
}

/// Disc in the complex plane, sampled at `points` contour nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoucheBall {
    pub center: C64,
    pub radius: f64,
    pub points: usize,
}

impl RoucheBall {
    pub fn new(radius: f64) -> Self {
        Self {
            center: C64::new(0.0, 0.0),
            radius,
            points: 512,
        }
    }

    fn node(&self, k: usize, points: usize) -> C64 {
        self.center + C64::from_polar(self.radius, 2.0 * PI * k as f64 / points as f64)
    }
}

/// Number of zeros of `det F` inside the ball, from the winding of its
/// phase along the boundary.
///
/// The contour is sampled at `ball.points` nodes and again at twice as
/// many; both counts must agree. Phase steps above `π/2` trigger further
/// refinement.
pub fn argument_principle_count<F>(f: F, ball: &RoucheBall) -> Result<i64, WignerError>
where
    F: Fn(C64) -> Result<DMatrix<C64>, WignerError>,
{
    let det = |z: C64| f(z).map(|m| m.determinant());
    let mut points = ball.points.max(8);
    let mut previous: Option<i64> = None;
    while points <= 1 << 18 {
        match winding(&det, ball, points)? {
            Some(count) => {
                if previous == Some(count) {
                    return Ok(count);
                }
                previous = Some(count);
            }
            None => previous = None,
        }
        points *= 2;
    }
    Err(WignerError::CountUnstable)
}

fn winding<D>(det: &D, ball: &RoucheBall, points: usize) -> Result<Option<i64>, WignerError>
where
    D: Fn(C64) -> Result<C64, WignerError>,
{
    let values = (0..points)
        .map(|k| det(ball.node(k, points)))
        .collect::<Result<Vec<_>, _>>()?;
    let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for (k, v) in values.iter().enumerate() {
        if !(v.norm() > 1e-13 * max) || !v.re.is_finite() || !v.im.is_finite() {
            return Err(WignerError::ContourDegenerate {
                point: ball.node(k, points),
            });
        }
    }
    let mut total = 0.0;
    for k in 0..points {
        let step = (values[(k + 1) % points] / values[k]).arg();
        if step.abs() > PI / 2.0 {
            return Ok(None);
        }
        total += step;
    }
    let turns = total / (2.0 * PI);
    if (turns - turns.round()).abs() > 1e-6 {
        return Err(WignerError::NonIntegerWinding(turns));
    }
    Ok(Some(turns.round() as i64))
}

/// How the Rouché ball around the reference pole is sized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    /// `α/2 · max_a |v_ref(a)|²` over the friction sites.
    EdgeAmplitude,
    /// `α/2 · Σ_a γ_a |v_ref(a)|²`, the norm of the rank-one residue.
    ResidueNorm,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapPolicy {
    /// Every eigenvalue of `𝒜` is located by simultaneous iteration; the
    /// result is the true spectral gap.
    Global,
    /// The single eigenvalue inside a Rouché ball around the reference pole,
    /// i.e. the branch emanating from the reference mode.
    Ball { radius: Radius },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGap {
    pub result: SpectralGapResult,
    /// Eigenvalue of `𝒜` in the original variable.
    pub root: C64,
    /// Ball radius and root count, for the ball policy.
    pub ball: Option<(f64, i64)>,
    pub dark_modes: usize,
}

/// Initial `α` of the radius rule, doubled at most three times.
pub const ALPHA: f64 = 8.0;

pub fn find_gap_wigner(ctx: &WignerContext, policy: GapPolicy) -> Result<WignerGap, WignerError> {
    match policy {
        GapPolicy::Global => global_gap(ctx),
        GapPolicy::Ball { radius } => ball_gap(ctx, radius),
    }
}

fn gap_result(root: C64, residual: f64) -> SpectralGapResult {
    let gap = root.im.max(0.0);
    SpectralGapResult {
        gap,
        attaining: C64::new(gap, root.re.abs()),
        method: GapMethod::Wigner,
        residual,
    }
}

fn reference_cluster(ctx: &WignerContext) -> Result<usize, WignerError> {
    let c = ctx.nearest_cluster(ctx.lambda_ref);
    let s = ctx.clusters[c].s;
    if (s - ctx.lambda_ref).abs() > CLUSTER_TOL * s.max(1.0) {
        return Err(WignerError::ReferenceNotPole(ctx.lambda_ref));
    }
    Ok(c)
}

/// Radius of the ball for `rule` and scale `alpha`.
pub fn ball_radius(ctx: &WignerContext, rule: Radius, alpha: f64) -> Result<f64, WignerError> {
    if let Radius::Fixed(r) = rule {
        return Ok(r);
    }
    let c = &ctx.clusters[reference_cluster(ctx)?];
    let weight = |a: usize| -> f64 { c.members.iter().map(|&j| ctx.w[(a, j)].powi(2)).sum() };
    let amp = match rule {
        Radius::EdgeAmplitude => (0..ctx.rank())
            .map(|a| weight(a) / ctx.gammas[a])
            .fold(0.0, f64::max),
        Radius::ResidueNorm => (0..ctx.rank()).map(weight).sum(),
        Radius::Fixed(_) => unreachable!(),
    };
    Ok(alpha / 2.0 * amp)
}

/// Root count in the ball of radius `radius` around the reference pole.
pub fn ball_count(ctx: &WignerContext, radius: f64) -> Result<i64, WignerError> {
    for c in &ctx.clusters {
        let mu = c.s - ctx.lambda_ref;
        if (mu.abs() - radius).abs() <= 1e-12 * radius.max(f64::MIN_POSITIVE) {
            return Err(WignerError::PoleOnContour { pole: mu, radius });
        }
    }
    let ball = RoucheBall::new(radius);
    argument_principle_count(
        |l| ctx.local_determinant(l, radius).map(|d| DMatrix::from_element(1, 1, d)),
        &ball,
    )
}

fn ball_gap(ctx: &WignerContext, rule: Radius) -> Result<WignerGap, WignerError> {
    let rc = reference_cluster(ctx)?;
    let mut alpha = ALPHA;
    let mut attempt = 0;
    let (radius, count) = loop {
        let radius = ball_radius(ctx, rule, alpha)?;
        let count = ball_count(ctx, radius)?;
        debug!("Rouché ball: alpha = {alpha}, radius = {radius:e}, count = {count}");
        if count > 0 || attempt == 3 || matches!(rule, Radius::Fixed(_)) {
            break (radius, count);
        }
        alpha *= 2.0;
        attempt += 1;
    };
    match count {
        0 => return Err(WignerError::EmptyBall { radius }),
        1 => {}
        k => return Err(WignerError::DegenerateCluster { count: k, radius }),
    }
    let cluster = &ctx.clusters[rc];
    let base = ctx.lambda_ref;
    let mu = cluster.s - base;
    if cluster.rank < cluster.members.len() {
        // the single root is a mode that never sees the friction
        let root = C64::new(cluster.s, 0.0);
        return Ok(WignerGap {
            result: gap_result(root, 0.0),
            root,
            ball: Some((radius, count)),
            dark_modes: ctx.dark_modes(),
        });
    }
    let start = C64::new(mu, cluster.shifts.iter().copied().fold(0.0, f64::max));
    let (t, residual) = newton(ctx, base, start, Some(radius))?;
    let root = t + base;
    Ok(WignerGap {
        result: gap_result(root, residual),
        root,
        ball: Some((radius, count)),
        dark_modes: ctx.dark_modes(),
    })
}

/// Newton iteration on `det(z − 𝒜)` in the frame `z = base + t`.
fn newton(ctx: &WignerContext, base: f64, start: C64, radius: Option<f64>) -> Result<(C64, f64), WignerError> {
    let mut t = start;
    let mut last = f64::INFINITY;
    for _ in 0..100 {
        let l = ctx.log_derivative(base, t)?;
        let mut step = l.inv();
        if !(step.re.is_finite() && step.im.is_finite()) {
            break;
        }
        if let Some(r) = radius {
            while (t - step).norm() > r && step.norm() > 1e-300 {
                step *= 0.5;
            }
        }
        t -= step;
        last = step.norm() / t.norm().max(f64::MIN_POSITIVE);
        if last <= 4.0 * f64::EPSILON {
            return Ok((t, last));
        }
    }
    if last <= 1e-8 {
        Ok((t, last))
    } else {
        Err(WignerError::NoConvergence("Newton refinement"))
    }
}

fn off_poles(ctx: &WignerContext, z: C64) -> bool {
    ctx.check_pole_distance(z).is_ok()
}

/// All non-dark eigenvalues of `𝒜` by Aberth–Ehrlich iteration, then
/// polished one by one in the frame of their nearest pole.
pub fn all_roots(ctx: &WignerContext) -> Result<Vec<C64>, WignerError> {
    let mut z: Vec<C64> = Vec::new();
    for (ci, c) in ctx.clusters.iter().enumerate() {
        for (k, &e) in c.shifts.iter().enumerate() {
            let jitter = 1e-7 * (1.0 + c.s) * (1.0 + ((ci * 31 + k * 17) % 101) as f64 / 101.0);
            z.push(C64::new(c.s + jitter, e + jitter));
            z.push(C64::new(-c.s - 0.5 * jitter, e + 0.7 * jitter));
        }
    }
    let deg = z.len();
    let mut done = vec![false; deg];
    for _ in 0..2000 {
        let mut moved = false;
        for k in 0..deg {
            if done[k] {
                continue;
            }
            let l = match ctx.log_derivative(0.0, z[k]) {
                Ok(l) => l,
                // a singular Wigner matrix away from the poles means the
                // iterate sits on a root
                Err(_) if off_poles(ctx, z[k]) => {
                    done[k] = true;
                    continue;
                }
                Err(_) => {
                    // landed on a pole: nudge off it
                    let scale = 1.0 + z[k].norm();
                    z[k] += C64::new(1e-9, 1e-9) * scale;
                    moved = true;
                    continue;
                }
            };
            let newton = l.inv();
            let repulsion: C64 = (0..deg).filter(|&m| m != k).map(|m| (z[k] - z[m]).inv()).sum();
            let step = newton / (ONE - newton * repulsion);
            if !(step.re.is_finite() && step.im.is_finite()) {
                continue;
            }
            z[k] -= step;
            if step.norm() <= 1e-14 * (1.0 + z[k].norm()) {
                done[k] = true;
            } else {
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    if done.iter().any(|d| !d) {
        return Err(WignerError::NoConvergence("simultaneous root iteration"));
    }
    z.iter()
        .map(|&root| {
            let c = &ctx.clusters[ctx.nearest_cluster(root.re.abs())];
            let base = if root.re >= 0.0 { c.s } else { -c.s };
            // an iterate sitting exactly on the pole restarts from the
            // first-order shifts
            let starts = std::iter::once(root - base).chain(c.shifts.iter().map(|&e| C64::new(0.0, e)));
            for t0 in starts {
                if let Ok((t, _)) = newton(ctx, base, t0, None) {
                    if (t + base - root).norm() <= 1e-6 * (1.0 + root.norm()) {
                        return Ok(t + base);
                    }
                }
            }
            Ok(root)
        })
        .collect()
}

fn global_gap(ctx: &WignerContext) -> Result<WignerGap, WignerError> {
    let roots = all_roots(ctx)?;
    let expected: f64 = ctx.gammas.iter().sum();
    let found: f64 = roots.iter().map(|z| z.im).sum();
    if (found - expected).abs() > 1e-6 * expected.max(1.0) {
        return Err(WignerError::TraceDefect { found, expected });
    }
    let dark = ctx.dark_modes();
    if dark > 0 {
        let c = ctx.clusters.iter().find(|c| c.rank < c.members.len()).expect("dark cluster");
        let root = C64::new(c.s, 0.0);
        return Ok(WignerGap {
            result: gap_result(root, 0.0),
            root,
            ball: None,
            dark_modes: dark,
        });
    }
    let best = roots
        .iter()
        .copied()
        .min_by(|a, b| {
            let tol = 1e-12 * a.im.abs().max(b.im.abs());
            if (a.im - b.im).abs() <= tol {
                a.re.abs().total_cmp(&b.re.abs())
            } else {
                a.im.total_cmp(&b.im)
            }
        })
        .ok_or(WignerError::EmptyFriction)?;
    let c = &ctx.clusters[ctx.nearest_cluster(best.re.abs())];
    let base = if best.re >= 0.0 { c.s } else { -c.s };
    let residual = ctx
        .log_derivative(base, best - base)
        .map(|l| (l.inv().norm() / (best - base).norm().max(f64::MIN_POSITIVE)).min(1.0))
        .unwrap_or(0.0);
    Ok(WignerGap {
        result: gap_result(best, residual),
        root: best,
        ball: None,
        dark_modes: 0,
    })
}

/// Smallest singular value of `A − σI`, estimated by inverse iteration on
/// `(A − σI)ᴴ(A − σI)`.
pub fn min_singular_value(a: &DMatrix<f64>, shift: C64) -> f64 {
    let n = a.nrows();
    let mut m = a.map(|x| C64::new(x, 0.0));
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.clone().lu();
    let luh = m.adjoint().lu();
    let mut x = DVector::from_fn(n, |i, _| C64::new(1.0 + (i % 7) as f64 / 7.0, 0.0));
    x /= C64::new(x.norm(), 0.0);
    let mut sigma = f64::INFINITY;
    for _ in 0..8 {
        let y = match lu.solve(&x) {
            Some(y) => y,
            None => return 0.0,
        };
        let z = match luh.solve(&y) {
            Some(z) => z,
            None => return 0.0,
        };
        let norm = z.norm();
        if !(norm.is_finite()) || norm == 0.0 {
            return 0.0;
        }
        sigma = (1.0 / norm).sqrt();
        x = z / C64::new(norm, 0.0);
    }
    sigma
}

/// The scalar reduction for a chain damped at its two ends with equal
/// strengths.
///
/// For the reflection sector containing the top mode, `u = (1, ±1)/√2` is
/// an eigenvector of `R(λ)` with eigenvalue `r(λ)`, and `(R + i)u = 0` is
/// equivalent to `f(λ) + g(λ) = 0` where `f + g = 2λ(r(λ) + i)`:
///
/// ```text
/// f(λ) = νλ,   ν = 2i − Σ_{k≠top} C v_k²/μ_k + Σ_k C v_k²/σ_k
/// g(λ) = C [ v_top² − λ² Σ_{k≠top} v_k²/μ_k² − Σ_{k≠top} v_k² λ³/(μ_k²(μ_k − λ))
///            − λ² Σ_k v_k²/σ_k² + Σ_k v_k² λ³/(σ_k²(σ_k + λ)) ]
/// ```
///
/// with `C = γ_1 + γ_N`, `v_k = v_k(1)`, `μ_k = s_k − s_top` and
/// `σ_k = s_top + s_k`, sums running over the sector.
#[derive(Debug, Clone)]
pub struct ScalarFg {
    c: f64,
    top: f64,
    others: Vec<(f64, f64)>,
    mirrors: Vec<(f64, f64)>,
    nu: C64,
}

impl ScalarFg {
    pub fn new(ctx: &WignerContext) -> Result<Self, WignerError> {
        let n = ctx.s.len();
        if ctx.rank() != 2 || ctx.sites != [0, n - 1] || n < 2 {
            return Err(WignerError::NotTwoEndChain);
        }
        let (g1, gn) = (ctx.gammas[0], ctx.gammas[1]);
        if (g1 - gn).abs() > 1e-14 * g1.max(gn) {
            return Err(WignerError::UnequalEnds(g1, gn));
        }
        let c = g1 + gn;
        let s_top = ctx.lambda_ref;
        let top = n - 1;
        if (ctx.s[top] - s_top).abs() > CLUSTER_TOL * s_top.max(1.0) {
            return Err(WignerError::ReferenceNotPole(s_top));
        }
        let v = |k: usize, a: usize| ctx.w[(a, k)] / ctx.gammas[a].sqrt();
        let parity = |k: usize| -> Result<f64, WignerError> {
            let (x, y) = (v(k, 0), v(k, 1));
            let sign = if x * y >= 0.0 { 1.0 } else { -1.0 };
            if (y - sign * x).abs() > 1e-9 * x.abs().max(y.abs()).max(1e-300) && x.abs().max(y.abs()) > 1e-300 {
                return Err(WignerError::NoParity);
            }
            Ok(sign)
        };
        let sector = parity(top)?;
        let mut others = Vec::new();
        let mut mirrors = Vec::new();
        for k in 0..n {
            let p = parity(k)?;
            let vk2 = v(k, 0).powi(2);
            if p != sector || vk2 == 0.0 {
                continue;
            }
            if k != top {
                others.push((ctx.s[k] - s_top, vk2));
            }
            mirrors.push((s_top + ctx.s[k], vk2));
        }
        let mut nu = 2.0 * I;
        for &(mu, v2) in &others {
            nu -= c * v2 / mu;
        }
        for &(sigma, v2) in &mirrors {
            nu += c * v2 / sigma;
        }
        Ok(Self {
            c,
            top: v(top, 0).powi(2),
            others,
            mirrors,
            nu,
        })
    }

    pub fn nu(&self) -> C64 {
        self.nu
    }

    pub fn f(&self, lambda: C64) -> C64 {
        self.nu * lambda
    }

    pub fn g(&self, lambda: C64) -> Result<C64, WignerError> {
        let l2 = lambda * lambda;
        let l3 = l2 * lambda;
        let mut acc = C64::new(self.top, 0.0);
        for &(mu, v2) in &self.others {
            if lambda == C64::new(mu, 0.0) {
                return Err(WignerError::PoleProximity { z: lambda, tol: 0.0 });
            }
            acc -= v2 * l2 / (mu * mu) + v2 * l3 / (mu * mu * (mu - lambda));
        }
        for &(sigma, v2) in &self.mirrors {
            acc += -v2 * l2 / (sigma * sigma) + v2 * l3 / (sigma * sigma * (sigma + lambda));
        }
        Ok(acc * self.c)
    }

    fn g_prime(&self, lambda: C64) -> C64 {
        let l2 = lambda * lambda;
        let l3 = l2 * lambda;
        let mut acc = C64::new(0.0, 0.0);
        for &(mu, v2) in &self.others {
            let d = mu - lambda;
            acc -= v2 * 2.0 * lambda / (mu * mu) + v2 * (3.0 * l2 * d + l3) / (mu * mu * d * d);
        }
        for &(sigma, v2) in &self.mirrors {
            let d = sigma + lambda;
            acc += -v2 * 2.0 * lambda / (sigma * sigma) + v2 * (3.0 * l2 * d - l3) / (sigma * sigma * d * d);
        }
        acc * self.c
    }

    /// Root of `f + g` by Newton's method from `−g(0)/ν`.
    pub fn root(&self) -> Result<C64, WignerError> {
        let mut l = -self.g(C64::new(0.0, 0.0))? / self.nu;
        for _ in 0..100 {
            let h = self.f(l) + self.g(l)?;
            let dh = self.nu + self.g_prime(l);
            let step = h / dh;
            l -= step;
            if step.norm() <= 4.0 * f64::EPSILON * l.norm() {
                return Ok(l);
            }
        }
        Err(WignerError::NoConvergence("scalar Newton"))
    }
}

/// `(f(λ), g(λ))` of the scalar reduction.
pub fn scalar_fg(ctx: &WignerContext, lambda: C64) -> Result<(C64, C64), WignerError> {
    let fg = ScalarFg::new(ctx)?;
    Ok((fg.f(lambda), fg.g(lambda)?))
}

/// Operator-norm data for the rank-one residue of the top mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaReport {
    pub n: usize,
    pub norm: f64,
    pub entry_max: f64,
    pub max_row_sum: f64,
}

impl ThetaReport {
    /// `‖Θ‖ ≤ √rows · ‖Θ‖_∞`.
    pub fn row_bound(&self, rows: usize) -> f64 {
        (rows as f64).sqrt() * self.max_row_sum
    }
}

/// `Θ = Σ_± Σ_{a,b} √(γ_aγ_b) ⟨V^±, e_a⟩⟨e_b, V^±⟩ e_a ⊗ e_b` for the top
/// mode `V^± = (v, ±iv)/√2`, i.e. `Θ_ab = √(γ_aγ_b) v(a) v(b)`.
pub fn theta_matrix(top: &DVector<f64>, friction: &FrictionSites) -> DMatrix<f64> {
    let w: Vec<f64> = friction.iter().map(|(s, g)| g.sqrt() * top[s]).collect();
    DMatrix::from_fn(w.len(), w.len(), |a, b| w[a] * w[b])
}

pub fn theta_report(n: usize, theta: &DMatrix<f64>) -> ThetaReport {
    let norm = if theta.is_empty() {
        0.0
    } else {
        SymmetricEigen::new(theta.clone())
            .eigenvalues
            .iter()
            .map(|x| x.abs())
            .fold(0.0, f64::max)
    };
    let max_row_sum = theta
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    ThetaReport {
        n,
        norm,
        entry_max: theta.amax(),
        max_row_sum,
    }
}

/// `Θ_N` for a homogeneous square lattice of side `n`, using the
/// closed-form top mode.
pub fn theta_norm(n: usize, friction: &FrictionSites) -> ThetaReport {
    let top = homogeneous_vector(&[n - 1, n - 1], n);
    theta_report(n, &theta_matrix(&top, friction))
}

/// `Θ` from the reference mode of a context.
pub fn theta_from_context(ctx: &WignerContext) -> Result<ThetaReport, WignerError> {
    let c = &ctx.clusters[reference_cluster(ctx)?];
    let mut theta = DMatrix::zeros(ctx.rank(), ctx.rank());
    for &j in &c.members {
        let w = ctx.w.column(j);
        theta += w * w.transpose();
    }
    Ok(theta_report(ctx.s.len(), &theta))
}

/// `|v_N(1)|²` of the top chain mode.
pub fn top_edge_weight(n: usize) -> f64 {
    chain_mode(n - 1, 0, n).powi(2)
}
