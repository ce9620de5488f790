//! Exact 2×2 operator algebra for a single qubit.
//!
//! Operators are `nalgebra` 2×2 complex matrices in the basis `(|e⟩, |g⟩)`, so
//! `σz = diag(1, -1)` and `σ− = |g⟩⟨e|`. Superoperators act on operators
//! vectorized by **column stacking**: `vec(ρ) = (ρ00, ρ10, ρ01, ρ11)`, with
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.
//!
//! Hermiticity-preserving maps also have a real representation, [`PauliMap`],
//! acting on Pauli coordinates `v_i = Tr[σ_i ρ]` with `σ_0 = I`. The Monte
//! Carlo kernels work in that representation: the trace is `v[0]`, the Bloch
//! vector of a normalized state is `v[1..4]`, and adjoint maps are transposes.

use nalgebra::{Complex, DMatrix, DVector, Matrix2, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Operator = Matrix2<C64>;
/// Pauli coordinates `(Tr ρ, Tr σx ρ, Tr σy ρ, Tr σz ρ)` of a Hermitian operator.
pub type PauliCoords = Vector4<f64>;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;
const PURE_TOL: f64 = 1e-8;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity() -> Operator {
    Operator::identity()
}

pub fn sigma_x() -> Operator {
    Operator::new(c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.))
}

pub fn sigma_y() -> Operator {
    Operator::new(c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.))
}

pub fn sigma_z() -> Operator {
    Operator::new(c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.))
}

/// Lowering operator `|g⟩⟨e|`.
pub fn sigma_minus() -> Operator {
    Operator::new(c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.))
}

/// `[I, σx, σy, σz]`.
pub fn pauli_basis() -> [Operator; 4] {
    [identity(), sigma_x(), sigma_y(), sigma_z()]
}

/// Largest entrywise deviation of `a` from its conjugate transpose.
pub fn hermiticity_error(a: &Operator) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn symmetrize(a: &Operator) -> Operator {
    (a + a.adjoint()) * c(0.5, 0.)
}

/// Eigenvalues of a Hermitian 2×2 operator, ascending.
pub fn hermitian_eigenvalues(a: &Operator) -> [f64; 2] {
    let mean = 0.5 * (a[(0, 0)].re + a[(1, 1)].re);
    let half_diff = 0.5 * (a[(0, 0)].re - a[(1, 1)].re);
    let radius = (half_diff * half_diff + a[(0, 1)].norm_sqr()).sqrt();
    [mean - radius, mean + radius]
}

pub fn to_pauli(a: &Operator) -> PauliCoords {
    let basis = pauli_basis();
    PauliCoords::from_fn(|i, _| (basis[i] * a).trace().re)
}

pub fn from_pauli(v: &PauliCoords) -> Operator {
    let basis = pauli_basis();
    let mut out = Operator::zeros();
    for (sigma, &coef) in basis.iter().zip(v.iter()) {
        out += sigma * c(0.5 * coef, 0.);
    }
    out
}

/// Whether the density matrix carries unit trace or a likelihood-bearing scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Normalized,
    Unnormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const ORIGIN: BlochVector = BlochVector { x: 0., y: 0., z: 0. };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm_squared(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Purity `(1 + |r|²)/2` of the state with this Bloch vector.
    pub fn purity(&self) -> f64 {
        0.5 * (1.0 + self.norm_squared())
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Pauli coordinates of the normalized state.
    pub fn to_pauli(&self) -> PauliCoords {
        PauliCoords::new(1.0, self.x, self.y, self.z)
    }

    /// Bloch vector of the state `v / v[0]`.
    pub fn from_pauli(v: &PauliCoords) -> Self {
        Self::new(v[1] / v[0], v[2] / v[0], v[3] / v[0])
    }

    pub fn distance(&self, other: &BlochVector) -> f64 {
        (self.as_vector() - other.as_vector()).norm()
    }
}

/// A 2×2 Hermitian positive semidefinite operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: Operator,
    role: Role,
}

impl DensityMatrix {
    pub fn new(entries: Operator, role: Role) -> Result<Self> {
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let herm = hermiticity_error(&entries);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(herm));
        }
        let entries = symmetrize(&entries);
        let trace = entries.trace().re;
        if role == Role::Normalized && (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized(trace));
        }
        let min_eig = hermitian_eigenvalues(&entries)[0];
        if min_eig < -PSD_TOL * scale {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { entries, role })
    }

    pub fn from_bloch(b: BlochVector) -> Result<Self> {
        Self::new(from_pauli(&b.to_pauli()), Role::Normalized)
    }

    /// Builds from Pauli coordinates without validation; `v[0]` is the trace.
    pub(crate) fn from_pauli_unchecked(v: &PauliCoords, role: Role) -> Self {
        Self {
            entries: from_pauli(v),
            role,
        }
    }

    pub fn excited() -> Self {
        Self {
            entries: Operator::new(c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)),
            role: Role::Normalized,
        }
    }

    pub fn ground() -> Self {
        Self {
            entries: Operator::new(c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)),
            role: Role::Normalized,
        }
    }

    pub fn maximally_mixed() -> Self {
        Self {
            entries: identity() * c(0.5, 0.),
            role: Role::Normalized,
        }
    }

    pub fn entries(&self) -> &Operator {
        &self.entries
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn pauli(&self) -> PauliCoords {
        to_pauli(&self.entries)
    }

    /// Divides by the trace; fails for a zero-trace (probability-zero) operator.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(Error::NotNormalized(tr));
        }
        Ok(Self {
            entries: self.entries / c(tr, 0.),
            role: Role::Normalized,
        })
    }

    fn require_normalized(&self) -> Result<()> {
        match self.role {
            Role::Normalized => Ok(()),
            Role::Unnormalized => Err(Error::NotNormalized(self.trace())),
        }
    }
}

/// Positive operator encoding the likelihood of a future record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectOperator {
    entries: Operator,
}

impl EffectOperator {
    pub fn identity() -> Self {
        Self { entries: identity() }
    }

    pub fn new(entries: Operator) -> Result<Self> {
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let herm = hermiticity_error(&entries);
        if herm > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian(herm));
        }
        let entries = symmetrize(&entries);
        let min_eig = hermitian_eigenvalues(&entries)[0];
        if min_eig < -PSD_TOL * scale {
            return Err(Error::NotPositive(min_eig));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_pauli_unchecked(e: &PauliCoords) -> Self {
        Self {
            entries: from_pauli(e),
        }
    }

    pub fn entries(&self) -> &Operator {
        &self.entries
    }

    pub fn pauli(&self) -> PauliCoords {
        to_pauli(&self.entries)
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.entries)
    }

    /// `Tr[E ρ]`.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        (self.entries * rho.entries()).trace().re
    }
}

pub fn bloch_from_rho(rho: &DensityMatrix) -> Result<BlochVector> {
    rho.require_normalized()?;
    let v = rho.pauli();
    Ok(BlochVector::new(v[1], v[2], v[3]))
}

/// `Tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    (rho.entries() * rho.entries()).trace().re
}

/// Fidelity `Tr[ρ_T ρ_c]` against a pure reference state.
pub fn fidelity_pure(reference: &DensityMatrix, rho: &DensityMatrix) -> Result<f64> {
    reference.require_normalized()?;
    rho.require_normalized()?;
    let p = purity(reference);
    if (p - 1.0).abs() > PURE_TOL {
        return Err(Error::NotPure(p));
    }
    Ok((reference.entries() * rho.entries()).trace().re.clamp(0.0, 1.0))
}

/// Linear map on 2×2 operators in column-stacked Liouville form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Superoperator {
    matrix: Matrix4<C64>,
}

pub fn vectorize(a: &Operator) -> Vector4<C64> {
    Vector4::new(a[(0, 0)], a[(1, 0)], a[(0, 1)], a[(1, 1)])
}

pub fn unvectorize(v: &Vector4<C64>) -> Operator {
    Operator::new(v[0], v[2], v[1], v[3])
}

impl Superoperator {
    pub fn from_matrix(matrix: Matrix4<C64>) -> Self {
        Self { matrix }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn zero() -> Self {
        Self::from_matrix(Matrix4::zeros())
    }

    pub fn identity() -> Self {
        Self::from_matrix(Matrix4::identity())
    }

    /// `ρ ↦ A ρ B`.
    pub fn two_sided(a: &Operator, b: &Operator) -> Self {
        Self::from_matrix(b.transpose().kronecker(a))
    }

    /// `ρ ↦ A ρ A†`.
    pub fn sandwich(a: &Operator) -> Self {
        Self::two_sided(a, &a.adjoint())
    }

    pub fn left(a: &Operator) -> Self {
        Self::two_sided(a, &identity())
    }

    pub fn right(b: &Operator) -> Self {
        Self::two_sided(&identity(), b)
    }

    /// `ρ ↦ -i[H, ρ]`.
    pub fn hamiltonian(h: &Operator) -> Self {
        let minus_i = c(0., -1.);
        Self::from_matrix((Self::left(h).matrix - Self::right(h).matrix) * minus_i)
    }

    /// `ρ ↦ rate (a ρ a† − ½{a†a, ρ})`.
    pub fn dissipator(a: &Operator, rate: f64) -> Self {
        let ada = a.adjoint() * a;
        let half = c(0.5, 0.);
        let m = Self::sandwich(a).matrix - (Self::left(&ada).matrix + Self::right(&ada).matrix) * half;
        Self::from_matrix(m * c(rate, 0.))
    }

    pub fn apply(&self, a: &Operator) -> Operator {
        unvectorize(&(self.matrix * vectorize(a)))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Self {
        Self::from_matrix(self.matrix * other.matrix)
    }

    pub fn add(&self, other: &Superoperator) -> Self {
        Self::from_matrix(self.matrix + other.matrix)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_matrix(self.matrix * c(s, 0.))
    }

    /// Hilbert–Schmidt adjoint: `Tr[A† S(B)] = Tr[(S† A)† B]`.
    pub fn adjoint(&self) -> Self {
        Self::from_matrix(self.matrix.adjoint())
    }

    /// `exp(self · t)`.
    pub fn exp(&self, t: f64) -> Self {
        Self::from_matrix((self.matrix * c(t, 0.)).exp())
    }

    /// Real representation on Pauli coordinates. Only meaningful for
    /// Hermiticity-preserving maps; the imaginary residue is discarded.
    pub fn to_pauli_map(&self) -> PauliMap {
        let basis = pauli_basis();
        let mut m = Matrix4::<f64>::zeros();
        for j in 0..4 {
            let image = self.apply(&basis[j]);
            for i in 0..4 {
                m[(i, j)] = 0.5 * (basis[i] * image).trace().re;
            }
        }
        PauliMap(m)
    }
}

/// Hermiticity-preserving map in Pauli coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliMap(pub Matrix4<f64>);

impl PauliMap {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    #[inline]
    pub fn apply(&self, v: &PauliCoords) -> PauliCoords {
        self.0 * v
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &PauliMap) -> Self {
        Self(self.0 * other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0 * s)
    }

    /// Adjoint map acting on effect coordinates.
    pub fn adjoint(&self) -> Self {
        Self(self.0.transpose())
    }
}

/// A Lindblad channel `rate · 𝒟[operator]`.
#[derive(Clone, Copy, Debug)]
pub struct Channel {
    pub operator: Operator,
    pub rate: f64,
}

/// Generator of `dρ/dt = -i[(Ω/2)σx, ρ] + Σ_k rate_k 𝒟[c_k]ρ`.
pub fn liouvillian(omega: f64, channels: &[Channel]) -> Result<Superoperator> {
    let h = sigma_x() * c(0.5 * omega, 0.);
    let mut generator = Superoperator::hamiltonian(&h);
    for ch in channels {
        if ch.rate < 0.0 {
            return Err(Error::NegativeRate(ch.rate));
        }
        generator = generator.add(&Superoperator::dissipator(&ch.operator, ch.rate));
    }
    Ok(generator)
}

/// Driven qubit decaying through `σ−` at the given total rate.
pub fn qubit_liouvillian(omega: f64, gamma: f64) -> Result<Superoperator> {
    liouvillian(
        omega,
        &[Channel {
            operator: sigma_minus(),
            rate: gamma,
        }],
    )
}

/// Unique fixed point of `generator`, by least squares on `{Lρ = 0, Tr ρ = 1}`.
pub fn steady_state(generator: &Superoperator) -> Result<DensityMatrix> {
    let l = generator.matrix();
    let svd = DMatrix::from_fn(4, 4, |i, j| l[(i, j)]).svd(false, false);
    let max_sv = svd.singular_values.max();
    let kernel_dim = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= 1e-10 * max_sv.max(1.0))
        .count();
    if kernel_dim != 1 {
        return Err(Error::DegenerateKernel(kernel_dim));
    }
    // Augmented rows: L (4 rows) and the trace functional on vec(ρ).
    let a = DMatrix::from_fn(5, 4, |i, j| {
        if i < 4 {
            l[(i, j)]
        } else if j == 0 || j == 3 {
            c(1., 0.)
        } else {
            c(0., 0.)
        }
    });
    let mut b = DVector::from_element(5, c(0., 0.));
    b[4] = c(1., 0.);
    let x = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Config(format!("steady-state solve failed: {e}")))?;
    let rho = unvectorize(&Vector4::new(x[0], x[1], x[2], x[3]));
    let rho = symmetrize(&rho);
    let tr = rho.trace().re;
    DensityMatrix::new(rho / c(tr, 0.), Role::Normalized)
}

/// `exp(L τ)` applied to `a`. Hermitian inputs come back exactly Hermitian.
pub fn propagate(generator: &Superoperator, a: &Operator, tau: f64) -> Result<Operator> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    let out = generator.exp(tau).apply(a);
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermiticity_error(a) <= HERMITIAN_TOL * scale {
        Ok(symmetrize(&out))
    } else {
        Ok(out)
    }
}

/// Propagates a state under the Lindblad generator.
pub fn propagate_state(generator: &Superoperator, rho: &DensityMatrix, tau: f64) -> Result<DensityMatrix> {
    let out = propagate(generator, rho.entries(), tau)?;
    Ok(DensityMatrix {
        entries: out,
        role: rho.role(),
    })
}

/// Trace distance `½‖ρ − σ‖₁`; for qubits half the Bloch distance.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    let d = a.entries() - b.entries();
    let [l0, l1] = hermitian_eigenvalues(&d);
    0.5 * (l0.abs() + l1.abs())
}

/// Symmetric 3×3 Bloch covariance embedded as `¼ Σ C_ij σ_i ⊗ σ_j`.
pub fn bloch_covariance_to_operator(cov: &Matrix3<f64>) -> Matrix4<C64> {
    let basis = pauli_basis();
    let mut out = Matrix4::<C64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            out += basis[i + 1].kronecker(&basis[j + 1]) * c(0.25 * cov[(i, j)], 0.);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_state(seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if v.norm() <= 1.0 {
                return DensityMatrix::from_bloch(BlochVector::from_vector(&v)).unwrap();
            }
        }
    }

    #[test]
    fn bloch_of_basis_states() {
        let g = bloch_from_rho(&DensityMatrix::ground()).unwrap();
        assert_eq!((g.x, g.y, g.z), (0.0, 0.0, -1.0));
        let m = bloch_from_rho(&DensityMatrix::maximally_mixed()).unwrap();
        assert_eq!(m, BlochVector::ORIGIN);
    }

    #[test]
    fn unnormalized_input_rejected() {
        let rho = DensityMatrix::new(identity(), Role::Unnormalized).unwrap();
        assert!(bloch_from_rho(&rho).is_err());
        assert!(DensityMatrix::new(identity(), Role::Normalized).is_err());
    }

    #[test]
    fn construction_validates_hermiticity_and_positivity() {
        let mut m = identity() * c(0.5, 0.);
        m[(0, 1)] = c(0.1, 0.);
        assert!(matches!(DensityMatrix::new(m, Role::Normalized), Err(Error::NotHermitian(_))));
        let neg = Operator::new(c(1.5, 0.), c(0., 0.), c(0., 0.), c(-0.5, 0.));
        assert!(matches!(DensityMatrix::new(neg, Role::Normalized), Err(Error::NotPositive(_))));
    }

    #[test]
    fn purity_values() {
        assert_abs_diff_eq!(purity(&DensityMatrix::excited()), 1.0);
        assert_abs_diff_eq!(purity(&DensityMatrix::maximally_mixed()), 0.5);
        let b = BlochVector::new(0.6, 0.0, 0.8);
        assert_abs_diff_eq!(purity(&DensityMatrix::from_bloch(b).unwrap()), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn fidelity_cases() {
        let e = DensityMatrix::excited();
        let g = DensityMatrix::ground();
        assert_abs_diff_eq!(fidelity_pure(&e, &e).unwrap(), 1.0);
        assert_abs_diff_eq!(fidelity_pure(&e, &g).unwrap(), 0.0);
        assert_abs_diff_eq!(fidelity_pure(&e, &DensityMatrix::maximally_mixed()).unwrap(), 0.5);
        assert!(matches!(
            fidelity_pure(&DensityMatrix::maximally_mixed(), &e),
            Err(Error::NotPure(_))
        ));
    }

    #[test]
    fn zero_generator() {
        let l = qubit_liouvillian(0.0, 0.0).unwrap();
        assert_eq!(*l.matrix(), Matrix4::zeros());
        assert!(matches!(steady_state(&l), Err(Error::DegenerateKernel(4))));
    }

    #[test]
    fn negative_rate_rejected() {
        let ch = Channel {
            operator: sigma_minus(),
            rate: -1.0,
        };
        assert!(matches!(liouvillian(1.0, &[ch]), Err(Error::NegativeRate(_))));
    }

    #[test]
    fn liouvillian_matches_direct_operator_arithmetic() {
        let (omega, g_o, g_u) = (5.0, 0.5, 0.5);
        let l = liouvillian(
            omega,
            &[
                Channel { operator: sigma_minus(), rate: g_o },
                Channel { operator: sigma_minus(), rate: g_u },
            ],
        )
        .unwrap();
        let sm = sigma_minus();
        let sp = sm.adjoint();
        let h = sigma_x() * c(omega / 2.0, 0.);
        for seed in 0..20 {
            let rho = *random_state(seed).entries();
            let comm = (h * rho - rho * h) * c(0., -1.);
            let diss = (sm * rho * sp - (sp * sm * rho + rho * sp * sm) * c(0.5, 0.)) * c(g_o + g_u, 0.);
            let direct = comm + diss;
            let via = l.apply(&rho);
            assert!((direct - via).iter().all(|z| z.norm() < 1e-12));
            assert!(via.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn steady_state_at_omega_five() {
        let rho = steady_state(&qubit_liouvillian(5.0, 1.0).unwrap()).unwrap();
        let b = bloch_from_rho(&rho).unwrap();
        assert_abs_diff_eq!(b.x, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b.y, 10.0 / 51.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b.z, -1.0 / 51.0, epsilon = 1e-10);
        assert_abs_diff_eq!(purity(&rho), 2702.0 / 5202.0, epsilon = 1e-10);
    }

    #[test]
    fn steady_state_pure_decay_and_strong_drive() {
        let g = bloch_from_rho(&steady_state(&qubit_liouvillian(0.0, 1.0).unwrap()).unwrap()).unwrap();
        assert_abs_diff_eq!(g.z, -1.0, epsilon = 1e-10);
        let s = bloch_from_rho(&steady_state(&qubit_liouvillian(500.0, 1.0).unwrap()).unwrap()).unwrap();
        assert!(s.y.abs() < 1e-2 && s.z.abs() < 1e-2);
    }

    #[test]
    fn steady_state_satisfies_bloch_fixed_point() {
        for &(omega, gamma) in &[(5.0, 1.0), (1.3, 0.7), (0.2, 2.0)] {
            let b = bloch_from_rho(&steady_state(&qubit_liouvillian(omega, gamma).unwrap()).unwrap()).unwrap();
            assert!((-gamma / 2.0 * b.y - omega * b.z).abs() < 1e-10);
            assert!((omega * b.y - gamma * (b.z + 1.0)).abs() < 1e-10);
            assert!(b.x.abs() < 1e-10);
        }
    }

    #[test]
    fn propagate_zero_time_and_negative_time() {
        let l = qubit_liouvillian(5.0, 1.0).unwrap();
        let rho = *random_state(3).entries();
        let out = propagate(&l, &rho, 0.0).unwrap();
        assert!((out - rho).iter().all(|z| z.norm() < 1e-15));
        assert!(matches!(propagate(&l, &rho, -1.0), Err(Error::NegativeTime(_))));
    }

    #[test]
    fn propagate_converges_to_steady_state() {
        let l = qubit_liouvillian(5.0, 1.0).unwrap();
        let ss = steady_state(&l).unwrap();
        let out = propagate_state(&l, &DensityMatrix::excited(), 60.0).unwrap();
        assert!(trace_distance(&out, &ss) < 1e-8);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pauli_map_round_trip() {
        let l = qubit_liouvillian(5.0, 1.0).unwrap();
        let step = l.exp(0.3);
        let r = step.to_pauli_map();
        for seed in 0..5 {
            let rho = random_state(seed);
            let direct = to_pauli(&step.apply(rho.entries()));
            let via = r.apply(&rho.pauli());
            assert!((direct - via).norm() < 1e-13);
        }
        // adjoint in Pauli coordinates is the transpose
        let adj = step.adjoint().to_pauli_map();
        assert!((adj.0 - r.0.transpose()).norm() < 1e-13);
    }

    #[test]
    fn operator_covariance_embedding_recovers_bloch_variances() {
        let cov = Matrix3::new(0.2, 0.01, 0.0, 0.01, 0.3, 0.02, 0.0, 0.02, 0.4);
        let op = bloch_covariance_to_operator(&cov);
        let yy = sigma_y().kronecker(&sigma_y());
        assert_abs_diff_eq!((yy * op).trace().re, 0.3, epsilon = 1e-14);
        let xz = sigma_x().kronecker(&sigma_z());
        assert_abs_diff_eq!((xz * op).trace().re, 0.0, epsilon = 1e-14);
    }
}
