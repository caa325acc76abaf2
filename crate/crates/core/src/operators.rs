//! Network descriptions and assembly of the Schrödinger operator `B`,
//! its square root, and the generator blocks `M` and `Ω`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::lattice::{FrictionSites, LatticeShape, SiteSet, SiteTag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("{field}[{index}] = {value} must be positive and finite")]
    NonPositive {
        field: &'static str,
        index: usize,
        value: f64,
    },
    #[error("{field} has {got} entries, expected {expected}")]
    Length {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("per-edge interaction strengths are only supported on a chain")]
    PerEdgeNeedsChain,
    #[error("friction site {0} lies outside the lattice")]
    FrictionOutOfRange(usize),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("symmetric eigensolver did not converge")]
    EigenFailure,
}

/// Nearest-neighbour coupling `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Interaction {
    Uniform(f64),
    /// One strength per edge `(i, i+1)` of a chain.
    PerEdge(Vec<f64>),
}

impl Interaction {
    fn strength(&self, edge: usize) -> f64 {
        match self {
            Interaction::Uniform(x) => *x,
            Interaction::PerEdge(v) => v[edge],
        }
    }
}

/// Complete physical description of one oscillator network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    shape: LatticeShape,
    masses: Vec<f64>,
    pinning: Vec<f64>,
    interaction: Interaction,
    friction: FrictionSites,
    temperatures: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NetworkSpecBuilder {
    shape: LatticeShape,
    masses: Vec<f64>,
    pinning: Vec<f64>,
    interaction: Interaction,
    friction: Option<FrictionSites>,
    temperatures: Option<Vec<f64>>,
}

impl NetworkSpecBuilder {
    pub fn mass(mut self, m: f64) -> Self {
        self.masses = vec![m; self.shape.len()];
        self
    }

    pub fn masses(mut self, m: Vec<f64>) -> Self {
        self.masses = m;
        self
    }

    pub fn pin(mut self, eta: f64) -> Self {
        self.pinning = vec![eta; self.shape.len()];
        self
    }

    pub fn pinning(mut self, eta: Vec<f64>) -> Self {
        self.pinning = eta;
        self
    }

    pub fn interaction(mut self, xi: Interaction) -> Self {
        self.interaction = xi;
        self
    }

    pub fn friction(mut self, f: FrictionSites) -> Self {
        self.friction = Some(f);
        self
    }

    /// Bath temperatures `1/β_i`, one per friction site.
    pub fn temperatures(mut self, t: Vec<f64>) -> Self {
        self.temperatures = Some(t);
        self
    }

    pub fn build(self) -> Result<NetworkSpec, OperatorError> {
        let n = self.shape.len();
        let friction = match self.friction {
            Some(f) => f,
            None => FrictionSites::new(
                SiteSet::new(&self.shape, Vec::new(), SiteTag::Custom).expect("empty set"),
                Vec::new(),
            )
            .expect("empty set"),
        };
        let temperatures = self
            .temperatures
            .unwrap_or_else(|| vec![1.0; friction.len()]);
        check_len("masses", &self.masses, n)?;
        check_len("pinning", &self.pinning, n)?;
        check_len("temperatures", &temperatures, friction.len())?;
        check_positive("masses", &self.masses)?;
        check_positive("pinning", &self.pinning)?;
        check_positive("temperatures", &temperatures)?;
        match &self.interaction {
            Interaction::Uniform(x) => check_positive("interaction", std::slice::from_ref(x))?,
            Interaction::PerEdge(v) => {
                if self.shape.dim() != 1 {
                    return Err(OperatorError::PerEdgeNeedsChain);
                }
                check_len("interaction", v, n.saturating_sub(1))?;
                check_positive("interaction", v)?;
            }
        }
        if let Some(&s) = friction.sites().iter().find(|&&s| s >= n) {
            return Err(OperatorError::FrictionOutOfRange(s));
        }
        Ok(NetworkSpec {
            shape: self.shape,
            masses: self.masses,
            pinning: self.pinning,
            interaction: self.interaction,
            friction,
            temperatures,
        })
    }
}

fn check_len(field: &'static str, v: &[f64], expected: usize) -> Result<(), OperatorError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(OperatorError::Length {
            field,
            expected,
            got: v.len(),
        })
    }
}

fn check_positive(field: &'static str, v: &[f64]) -> Result<(), OperatorError> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        None => Ok(()),
        Some(index) => Err(OperatorError::NonPositive {
            field,
            index,
            value: v[index],
        }),
    }
}

impl NetworkSpec {
    /// Unit masses, pinning and interaction, no friction.
    pub fn builder(shape: LatticeShape) -> NetworkSpecBuilder {
        let n = shape.len();
        NetworkSpecBuilder {
            shape,
            masses: vec![1.0; n],
            pinning: vec![1.0; n],
            interaction: Interaction::Uniform(1.0),
            friction: None,
            temperatures: None,
        }
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn pinning(&self) -> &[f64] {
        &self.pinning
    }

    pub fn interaction(&self) -> &Interaction {
        &self.interaction
    }

    pub fn friction(&self) -> &FrictionSites {
        &self.friction
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.temperatures
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn uniform_masses(&self) -> bool {
        self.masses.iter().all(|&m| m == self.masses[0])
    }

    /// Copy with the bath temperatures replaced.
    pub fn with_temperatures(&self, t: Vec<f64>) -> Result<Self, OperatorError> {
        check_len("temperatures", &t, self.friction.len())?;
        check_positive("temperatures", &t)?;
        Ok(Self {
            temperatures: t,
            ..self.clone()
        })
    }

    /// Copy with different friction sites; temperatures reset to 1.
    pub fn with_friction(&self, friction: FrictionSites) -> Result<Self, OperatorError> {
        let t = vec![1.0; friction.len()];
        NetworkSpec::builder(self.shape.clone())
            .masses(self.masses.clone())
            .pinning(self.pinning.clone())
            .interaction(self.interaction.clone())
            .friction(friction)
            .temperatures(t)
            .build()
    }

    /// Friction strengths as a dense diagonal.
    pub fn gamma_diagonal(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.len());
        for (s, gamma) in self.friction.iter() {
            g[s] = gamma;
        }
        g
    }

    /// `1/√m_i` per site.
    pub fn inv_sqrt_masses(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.masses.iter().map(|m| 1.0 / m.sqrt()))
    }
}

/// `B = Σ ξ_ij L_ij + diag(η)` with the Neumann (free-end) Laplacian. No
/// positivity is enforced here, which allows `η = 0` in checks.
pub fn schrodinger_matrix(shape: &LatticeShape, pinning: &[f64], interaction: &Interaction) -> DMatrix<f64> {
    let n = shape.len();
    let mut b = DMatrix::from_diagonal(&DVector::from_column_slice(pinning));
    for (i, j) in shape.edges() {
        // in 1D the edge (i, i+1) is numbered by i
        let xi = interaction.strength(i);
        b[(i, i)] += xi;
        b[(j, j)] += xi;
        b[(i, j)] -= xi;
        b[(j, i)] -= xi;
    }
    debug_assert_eq!(b.nrows(), n);
    b
}

pub fn build_schrodinger(spec: &NetworkSpec) -> DMatrix<f64> {
    schrodinger_matrix(&spec.shape, &spec.pinning, &spec.interaction)
}

/// Symmetric positive-definite square root through the spectral
/// decomposition.
pub fn matrix_sqrt_spd(b: &DMatrix<f64>) -> Result<DMatrix<f64>, OperatorError> {
    let n = b.nrows();
    let eig = SymmetricEigen::try_new(b.clone(), f64::EPSILON, 100 * n.max(10)).ok_or(OperatorError::EigenFailure)?;
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(OperatorError::NotPositiveDefinite(min));
    }
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[k].sqrt();
    }
    let root = &scaled * q.transpose();
    Ok((&root + root.transpose()) * 0.5)
}

/// Assembled matrices for one network.
#[derive(Debug, Clone)]
pub struct OperatorBundle {
    pub b: DMatrix<f64>,
    pub sqrt_b: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub masses: DVector<f64>,
    /// `[[Γ, -m⁻¹], [B, 0]]`
    pub m: DMatrix<f64>,
    /// `[[Γ, -m^{-1/2}√B], [√B m^{-1/2}, 0]]`
    pub omega: DMatrix<f64>,
}

pub fn build_generator(spec: &NetworkSpec) -> Result<OperatorBundle, OperatorError> {
    let n = spec.len();
    let b = build_schrodinger(spec);
    let sqrt_b = matrix_sqrt_spd(&b)?;
    let gamma = spec.gamma_diagonal();
    let masses = DVector::from_column_slice(spec.masses());
    let inv_sqrt_m = spec.inv_sqrt_masses();

    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = gamma[i];
        omega[(i, i)] = gamma[i];
        m[(i, n + i)] = -1.0 / masses[i];
    }
    m.view_mut((n, 0), (n, n)).copy_from(&b);
    for i in 0..n {
        for j in 0..n {
            omega[(i, n + j)] = -inv_sqrt_m[i] * sqrt_b[(i, j)];
            omega[(n + i, j)] = sqrt_b[(i, j)] * inv_sqrt_m[j];
        }
    }
    Ok(OperatorBundle {
        b,
        sqrt_b,
        gamma,
        masses,
        m,
        omega,
    })
}

impl OperatorBundle {
    pub fn len(&self) -> usize {
        self.b.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Mass-symmetrised stiffness `K = m^{-1/2} B m^{-1/2}`.
    pub fn k_matrix(&self) -> DMatrix<f64> {
        mass_symmetrized(&self.b, &self.masses)
    }

    /// `m⁻¹B`, the stiffness of the quadratic pencil.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let mut s = self.b.clone();
        for (i, mut row) in s.row_iter_mut().enumerate() {
            row /= self.masses[i];
        }
        s
    }

    pub fn friction_trace(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

pub fn mass_symmetrized(b: &DMatrix<f64>, masses: &DVector<f64>) -> DMatrix<f64> {
    let s = masses.map(|m| 1.0 / m.sqrt());
    DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| s[i] * b[(i, j)] * s[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_shape, friction_preset};
    use approx::assert_relative_eq;

    fn chain(n: usize) -> LatticeShape {
        build_shape(1, n, false).unwrap()
    }

    fn sym_eigs(a: &DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Entrywise Jacobi form for a chain with uniform coupling.
    fn jacobi(n: usize, eta: &[f64], xi: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let ends = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
                eta[i] + if n == 1 { 0.0 } else { ends * xi }
            } else if i.abs_diff(j) == 1 {
                -xi
            } else {
                0.0
            }
        })
    }

    #[test]
    fn two_site_chain() {
        let spec = NetworkSpec::builder(chain(2)).build().unwrap();
        let b = build_schrodinger(&spec);
        assert_eq!(b, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
    }

    #[test]
    fn free_laplacian_spectrum() {
        let b = schrodinger_matrix(&chain(3), &[0.0; 3], &Interaction::Uniform(1.0));
        let e = sym_eigs(&b);
        for (x, y) in e.iter().zip([0.0, 1.0, 3.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn square_is_kronecker_sum() {
        let shape = build_shape(2, 2, false).unwrap();
        let spec = NetworkSpec::builder(shape).build().unwrap();
        let b = build_schrodinger(&spec);
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let id = DMatrix::<f64>::identity(2, 2);
        let ks = l.kronecker(&id) + id.kronecker(&l) + DMatrix::identity(4, 4);
        assert_eq!(b, ks);
        let e = sym_eigs(&b);
        for (x, y) in e.iter().zip([1.0, 3.0, 3.0, 5.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_matches_jacobi_form() {
        for n in [1, 2, 3, 7] {
            let eta: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
            let b = schrodinger_matrix(&chain(n), &eta, &Interaction::Uniform(0.7));
            assert_relative_eq!(b, jacobi(n, &eta, 0.7), epsilon = 1e-14);
        }
    }

    #[test]
    fn per_edge_chain() {
        let spec = NetworkSpec::builder(chain(3))
            .interaction(Interaction::PerEdge(vec![1.0, 2.0]))
            .build()
            .unwrap();
        let b = build_schrodinger(&spec);
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 4.0, -2.0, 0.0, -2.0, 3.0]);
        assert_eq!(b, expect);
    }

    #[test]
    fn spec_validation() {
        let shape = chain(3);
        let err = NetworkSpec::builder(shape.clone()).pinning(vec![1.0, 0.0, 1.0]).build();
        assert_eq!(
            err.unwrap_err(),
            OperatorError::NonPositive {
                field: "pinning",
                index: 1,
                value: 0.0
            }
        );
        assert!(matches!(
            NetworkSpec::builder(shape.clone()).masses(vec![1.0]).build(),
            Err(OperatorError::Length { field: "masses", .. })
        ));
        assert!(NetworkSpec::builder(shape.clone())
            .interaction(Interaction::Uniform(-1.0))
            .build()
            .is_err());
        let sq = build_shape(2, 3, false).unwrap();
        assert_eq!(
            NetworkSpec::builder(sq)
                .interaction(Interaction::PerEdge(vec![1.0; 12]))
                .build()
                .unwrap_err(),
            OperatorError::PerEdgeNeedsChain
        );
        let f = friction_preset(&shape, SiteTag::TerminalEnds, 1.0).unwrap();
        assert!(NetworkSpec::builder(shape).friction(f).temperatures(vec![1.0]).build().is_err());
    }

    #[test]
    fn sqrt_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(matrix_sqrt_spd(&id).unwrap(), id, epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = matrix_sqrt_spd(&d).unwrap();
        assert_relative_eq!(r, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), epsilon = 1e-14);

        let b = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let r = matrix_sqrt_spd(&b).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DVector::from_vec(vec![s, s]);
        let minus = DVector::from_vec(vec![s, -s]);
        assert_relative_eq!(&r * &plus, plus.clone(), epsilon = 1e-14);
        assert_relative_eq!(&r * &minus, minus * 3f64.sqrt(), epsilon = 1e-14);
        assert!(((&r * &r - &b).norm() / b.norm()) <= 1e-10);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let b = schrodinger_matrix(&chain(3), &[0.0; 3], &Interaction::Uniform(1.0));
        assert!(matches!(matrix_sqrt_spd(&b), Err(OperatorError::NotPositiveDefinite(_))));
    }

    #[test]
    fn scalar_generator() {
        let shape = chain(1);
        let f = friction_preset(&shape, SiteTag::SingleEnd, 2.0).unwrap();
        let spec = NetworkSpec::builder(shape).friction(f).build().unwrap();
        let g = build_generator(&spec).unwrap();
        assert_eq!(g.m, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 1.0, 0.0]));
        assert_eq!(g.omega, g.m);
    }

    #[test]
    fn two_site_generator() {
        let shape = chain(2);
        let f = friction_preset(&shape, SiteTag::TerminalEnds, 1.0).unwrap();
        let spec = NetworkSpec::builder(shape).friction(f).build().unwrap();
        let g = build_generator(&spec).unwrap();
        assert_eq!(g.m.shape(), (4, 4));
        assert_eq!(g.m.view((0, 0), (2, 2)), DMatrix::<f64>::identity(2, 2));
        assert_eq!(g.m.view((0, 2), (2, 2)), -DMatrix::<f64>::identity(2, 2));
        assert_eq!(g.m.view((2, 0), (2, 2)), g.b);
        assert_eq!(g.m.trace(), 2.0);
        assert_eq!(g.omega.trace(), 2.0);
    }

    #[test]
    fn temperatures_leave_matrices_alone() {
        let shape = build_shape(2, 3, false).unwrap();
        let f = friction_preset(&shape, SiteTag::Corners, 1.5).unwrap();
        let spec = NetworkSpec::builder(shape).friction(f).build().unwrap();
        let hot = spec.with_temperatures(vec![10.0, 0.1]).unwrap();
        let (a, b) = (build_generator(&spec).unwrap(), build_generator(&hot).unwrap());
        assert_eq!(a.m, b.m);
        assert_eq!(a.omega, b.omega);
    }

    #[test]
    fn omega_is_friction_plus_skew() {
        let shape = chain(5);
        let f = friction_preset(&shape, SiteTag::TerminalEnds, 0.5).unwrap();
        let spec = NetworkSpec::builder(shape)
            .masses(vec![1.0, 2.0, 0.5, 1.5, 3.0])
            .friction(f)
            .build()
            .unwrap();
        let g = build_generator(&spec).unwrap();
        let sym = (&g.omega + g.omega.transpose()) * 0.5;
        let mut expect = DMatrix::zeros(10, 10);
        expect[(0, 0)] = 0.5;
        expect[(4, 4)] = 0.5;
        assert_relative_eq!(sym, expect, epsilon = 1e-14);
        let k = g.k_matrix();
        assert_relative_eq!(k.clone(), k.transpose(), epsilon = 0.0);
    }
}
