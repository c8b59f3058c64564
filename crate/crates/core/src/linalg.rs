//! Dense complex linear algebra and seeded random sampling.
//!
//! Composite indices follow the system-slow convention: the pair `(i, b)` of a
//! system index and a bath index maps to the flat index `i * d_b + b`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Threshold on the relative anti-Hermitian part accepted by the eigensolvers.
pub const HERMITIAN_TOL: f64 = 1e-10;

const EIG_EPS: f64 = f64::EPSILON;
const MAX_SWEEPS: usize = 10_000;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// Column vector `|k⟩` of the computational basis.
pub fn basis_ket(dim: usize, k: usize) -> DVector<C64> {
    let mut v = DVector::zeros(dim);
    v[k] = ONE;
    v
}

/// `|u⟩⟨v|`.
pub fn outer(u: &DVector<C64>, v: &DVector<C64>) -> ComplexMatrix {
    u * v.adjoint()
}

/// Matrix unit `|i⟩⟨j|` of size `dim`.
pub fn matrix_unit(dim: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim, dim);
    m[(i, j)] = ONE;
    m
}

pub fn diag(values: &[C64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Builds a matrix from row-major entries.
pub fn from_rows(rows: usize, cols: usize, entries: &[C64]) -> Result<ComplexMatrix> {
    if entries.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "{} entries for a {rows}x{cols} matrix",
            entries.len()
        )));
    }
    if entries
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::NonFinite);
    }
    Ok(ComplexMatrix::from_row_slice(rows, cols, entries))
}

pub fn is_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.norm()
}

pub fn trace(m: &ComplexMatrix) -> C64 {
    m.trace()
}

/// Standard Kronecker product `a ⊗ b`; the index of `a` is the slow one.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

fn check_bipartite(m: &ComplexMatrix, ds: usize, db: usize) -> Result<()> {
    let n = ds * db;
    if ds == 0 || db == 0 || m.nrows() != n || m.ncols() != n {
        return Err(Error::Dimension(format!(
            "expected a {n}x{n} operator for d_s={ds}, d_b={db}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `Tr_B`: entries `Σ_b m[(i,b),(j,b)]`.
pub fn partial_trace_bath(m: &ComplexMatrix, ds: usize, db: usize) -> Result<ComplexMatrix> {
    check_bipartite(m, ds, db)?;
    Ok(ComplexMatrix::from_fn(ds, ds, |i, j| {
        (0..db).map(|b| m[(i * db + b, j * db + b)]).sum()
    }))
}

/// `Tr_S`: entries `Σ_i m[(i,a),(i,b)]`.
pub fn partial_trace_system(m: &ComplexMatrix, ds: usize, db: usize) -> Result<ComplexMatrix> {
    check_bipartite(m, ds, db)?;
    Ok(ComplexMatrix::from_fn(db, db, |a, b| {
        (0..ds).map(|i| m[(i * db + a, i * db + b)]).sum()
    }))
}

/// The bath block `(⟨i| ⊗ I) m (|j⟩ ⊗ I)`.
pub fn bath_block(m: &ComplexMatrix, db: usize, i: usize, j: usize) -> ComplexMatrix {
    m.view((i * db, j * db), (db, db)).into_owned()
}

/// `(⟨ψ| ⊗ I_S)`-style contraction over the bath: returns the system operator
/// `⟨ψ_bra| U |ψ_ket⟩` with matrix elements `Σ_{a,b} ψ_bra[a]* U[(m,a),(n,b)] ψ_ket[b]`.
pub fn bath_matrix_element(
    u: &ComplexMatrix,
    ds: usize,
    db: usize,
    bra: &DVector<C64>,
    ket: &DVector<C64>,
) -> ComplexMatrix {
    ComplexMatrix::from_fn(ds, ds, |m, n| {
        let mut acc = ZERO;
        for a in 0..db {
            let ba = bra[a].conj();
            if ba == ZERO {
                continue;
            }
            for b in 0..db {
                acc += ba * u[(m * db + a, n * db + b)] * ket[b];
            }
        }
        acc
    })
}

pub fn require_square(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// `‖h − h†‖_F / max(1, ‖h‖_F)`.
pub fn hermiticity_deviation(h: &ComplexMatrix) -> f64 {
    (h - h.adjoint()).norm() / h.norm().max(1.0)
}

/// `‖U†U − I‖_F`.
pub fn unitarity_deviation(u: &ComplexMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows())).norm()
}

pub fn require_unitary(u: &ComplexMatrix, tol: f64) -> Result<()> {
    require_square(u)?;
    let deviation = unitarity_deviation(u);
    if deviation > tol {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl Spectrum {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let d = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| C64::new(x, 0.0)),
        );
        &self.eigenvectors * ComplexMatrix::from_diagonal(&d) * self.eigenvectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn vector(&self, k: usize) -> DVector<C64> {
        self.eigenvectors.column(k).into_owned()
    }
}

/// Rotates a vector so that its largest-magnitude component is real positive.
fn fix_phase(v: &mut DVector<C64>) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (k, z) in v.iter().enumerate() {
        // Strictly greater keeps the first of near-ties, up to rounding.
        if z.norm() > best_abs * (1.0 + 1e-12) {
            best = k;
            best_abs = z.norm();
        }
    }
    if best_abs > 0.0 {
        let phase = v[best].conj() / best_abs;
        for z in v.iter_mut() {
            *z *= phase;
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix after symmetrizing `(h + h†)/2`.
pub fn spectral_decompose(h: &ComplexMatrix) -> Result<Spectrum> {
    require_square(h)?;
    if !is_finite(h) {
        return Err(Error::NonFinite);
    }
    let deviation = hermiticity_deviation(h);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let sym = (h + h.adjoint()).scale(0.5);
    let n = sym.nrows();
    let eig = SymmetricEigen::try_new(sym, EIG_EPS, MAX_SWEEPS)
        .ok_or(Error::NoConvergence("Hermitian eigensolver"))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut v);
        eigenvectors.set_column(dst, &v);
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// `m = Σ_α s_α |x_α⟩⟨y_α|` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Columns `|x_α⟩`.
    pub left: ComplexMatrix,
    pub singular_values: Vec<f64>,
    /// Columns `|y_α⟩`.
    pub right: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.left.nrows(), self.right.nrows());
        for (k, &s) in self.singular_values.iter().enumerate() {
            out += (self.left.column(k) * self.right.column(k).adjoint()).scale(s);
        }
        out
    }
}

/// Singular values below this fraction of `‖m‖_F` are reported as zero.
const SVD_RANK_TOL: f64 = 1e-12;

/// Square SVD through the Hermitian dilation `[[0, m], [m†, 0]]`, whose
/// eigenpairs are `±s` with vectors `(x, ±y)/√2`. Vectors for vanishing
/// singular values complete `left` and `right` to unitaries.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    require_square(m)?;
    if !is_finite(m) {
        return Err(Error::NonFinite);
    }
    let n = m.nrows();
    let mut dil = ComplexMatrix::zeros(2 * n, 2 * n);
    dil.view_mut((0, n), (n, n)).copy_from(m);
    dil.view_mut((n, 0), (n, n)).copy_from(&m.adjoint());
    let spec = spectral_decompose(&dil)?;
    let cutoff = SVD_RANK_TOL * m.norm();

    let mut left = ComplexMatrix::zeros(n, n);
    let mut right = ComplexMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for k in 0..n {
        let s = spec.eigenvalues[k];
        if s <= cutoff {
            break;
        }
        let v = spec.eigenvectors.column(k);
        let x = v.rows(0, n).into_owned();
        let y = v.rows(n, n).into_owned();
        let (nx, ny) = (x.norm(), y.norm());
        left.set_column(k, &x.unscale(nx));
        right.set_column(k, &y.unscale(ny));
        singular_values.push(s);
    }
    let rank = singular_values.len();
    for cols in [&mut left, &mut right] {
        complete_orthonormal(cols, rank)?;
    }
    singular_values.resize(n, 0.0);
    Ok(Svd {
        left,
        singular_values,
        right,
    })
}

/// Fills columns `rank..` with an orthonormal basis of the complement of the
/// first `rank` columns.
fn complete_orthonormal(cols: &mut ComplexMatrix, rank: usize) -> Result<()> {
    let n = cols.nrows();
    if rank == n {
        return Ok(());
    }
    let filled = cols.columns(0, rank).into_owned();
    let complement = identity(n) - &filled * filled.adjoint();
    let spec = spectral_decompose(&complement)?;
    for k in 0..(n - rank) {
        cols.set_column(rank + k, &spec.eigenvectors.column(k));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdVerdict {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// PSD test with the tolerance scaled by `max(1, Tr|m|)`.
pub fn is_psd(m: &ComplexMatrix, tol: f64) -> Result<PsdVerdict> {
    let spec = spectral_decompose(m)?;
    let trace_norm: f64 = spec.eigenvalues.iter().map(|x| x.abs()).sum();
    let min_eigenvalue = spec.min();
    Ok(PsdVerdict {
        is_psd: min_eigenvalue >= -tol * trace_norm.max(1.0),
        min_eigenvalue,
    })
}

/// Seeded generator; identical `(seed, stream)` pairs give identical draws.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Standard complex normal, `E|z|² = 1`.
    pub fn complex_gaussian(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(self.gaussian() * s, self.gaussian() * s)
    }

    pub fn ginibre(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        // Row-major fill so the draw order does not depend on storage layout.
        let entries: Vec<C64> = (0..rows * cols).map(|_| self.complex_gaussian()).collect();
        ComplexMatrix::from_row_slice(rows, cols, &entries)
    }

    /// Haar-random unit vector.
    pub fn unit_vector(&mut self, dim: usize) -> DVector<C64> {
        loop {
            let v = DVector::from_iterator(dim, (0..dim).map(|_| self.complex_gaussian()));
            let n = v.norm();
            if n > 1e-8 {
                return v.unscale(n);
            }
        }
    }

    /// Random Hermitian matrix with Gaussian entries.
    pub fn hermitian(&mut self, dim: usize) -> ComplexMatrix {
        let g = self.ginibre(dim, dim);
        (&g + g.adjoint()).scale(0.5)
    }
}

/// Haar-random unitary: QR of a Ginibre matrix with the phases of `diag(R)` removed.
pub fn haar_unitary(dim: usize, rng: &mut RandomSource) -> ComplexMatrix {
    assert!(dim >= 1, "haar_unitary needs dim >= 1");
    loop {
        let z = rng.ginibre(dim, dim);
        let qr = z.qr();
        let r = qr.r();
        if (0..dim).any(|k| r[(k, k)].norm() < 1e-12) {
            continue;
        }
        let mut q = qr.q();
        for k in 0..dim {
            let phase = r[(k, k)] / r[(k, k)].norm();
            let mut col = q.column_mut(k);
            col *= phase;
        }
        return q;
    }
}

/// `G G† / Tr(G G†)` with `G` a `dim × rank` Ginibre draw.
pub fn random_density(dim: usize, rank: usize, rng: &mut RandomSource) -> Result<ComplexMatrix> {
    if dim == 0 || rank == 0 || rank > dim {
        return Err(Error::InvalidParameter(format!(
            "rank {rank} out of range for dimension {dim}"
        )));
    }
    let g = rng.ginibre(dim, rank);
    let rho = &g * g.adjoint();
    let tr = rho.trace().re;
    let mut rho = rho.unscale(tr);
    // Exact Hermiticity for downstream solvers.
    rho = (&rho + rho.adjoint()).scale(0.5);
    Ok(rho)
}

/// Pure state `|ψ⟩⟨ψ|` from a Haar-random vector.
pub fn random_pure(dim: usize, rng: &mut RandomSource) -> ComplexMatrix {
    let v = rng.unit_vector(dim);
    outer(&v, &v)
}

/// Conjugates every system factor: `(V ⊗ I) m (V† ⊗ I)`.
pub fn conjugate_system(m: &ComplexMatrix, v: &ComplexMatrix, db: usize) -> ComplexMatrix {
    let w = kron(v, &identity(db));
    &w * m * w.adjoint()
}

/// Von Neumann entropy in bits with `0 log 0 = 0`.
pub fn entropy_bits(rho: &ComplexMatrix) -> Result<f64> {
    let spec = spectral_decompose(rho)?;
    Ok(spec
        .eigenvalues
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.log2())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_x() -> ComplexMatrix {
        from_rows(2, 2, &[ZERO, ONE, ONE, ZERO]).unwrap()
    }

    #[test]
    fn kron_identity_and_diagonal() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let a = diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        let b = diag(&[c(3.0, 0.0), c(4.0, 0.0)]);
        let expect = diag(&[c(3.0, 0.0), c(4.0, 0.0), c(6.0, 0.0), c(8.0, 0.0)]);
        assert_eq!(kron(&a, &b), expect);
    }

    #[test]
    fn kron_mixed_product() {
        let mut rng = RandomSource::new(1, 0);
        for _ in 0..20 {
            let (a, b, cc, d) = (
                rng.ginibre(2, 2),
                rng.ginibre(2, 2),
                rng.ginibre(2, 2),
                rng.ginibre(2, 2),
            );
            let lhs = kron(&a, &b) * kron(&cc, &d);
            let rhs = kron(&(&a * &cc), &(&b * &d));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_cases() {
        let mut rng = RandomSource::new(2, 0);
        let rs = random_density(3, 3, &mut rng).unwrap();
        let rb = random_density(2, 1, &mut rng).unwrap();
        let joint = kron(&rs, &rb);
        assert!((partial_trace_bath(&joint, 3, 2).unwrap() - &rs).norm() < 1e-12);
        assert!((partial_trace_system(&joint, 3, 2).unwrap() - &rb).norm() < 1e-12);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = DVector::from_column_slice(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let bell = outer(&psi, &psi);
        let reduced = partial_trace_bath(&bell, 2, 2).unwrap();
        assert!((reduced - identity(2).scale(0.5)).norm() < 1e-15);

        let m = rng.ginibre(6, 6);
        let t = partial_trace_bath(&m, 2, 3).unwrap();
        assert!((t.trace() - m.trace()).norm() < 1e-12);
        assert!(partial_trace_bath(&m, 4, 2).is_err());
    }

    #[test]
    fn spectral_examples() {
        let s = spectral_decompose(&identity(2)).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 1.0]);

        let s = spectral_decompose(&pauli_x()).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((s.eigenvalues[1] + 1.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = s.vector(0);
        assert!((plus[0] - c(h, 0.0)).norm() < 1e-14);
        assert!((plus[1] - c(h, 0.0)).norm() < 1e-14);
        let minus = s.vector(1);
        assert!((minus[0] * minus[1]).re < 0.0);
    }

    #[test]
    fn spectral_rejects_bad_input() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            spectral_decompose(&m),
            Err(Error::NotSquare { .. })
        ));
        let nh = from_rows(2, 2, &[ONE, ONE, ZERO, ONE]).unwrap();
        assert!(matches!(
            spectral_decompose(&nh),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn eigenvector_phase_is_fixed() {
        let mut rng = RandomSource::new(9, 3);
        let h = rng.hermitian(4);
        let s = spectral_decompose(&h).unwrap();
        for k in 0..4 {
            let v = s.vector(k);
            let big = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let top = v.iter().find(|z| z.norm() >= big * (1.0 - 1e-12)).unwrap();
            assert!(top.im.abs() < 1e-14 && top.re > 0.0);
        }
    }

    #[test]
    fn svd_examples() {
        let s = svd(&identity(3)).unwrap();
        assert!(s.singular_values.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let m = matrix_unit(2, 0, 1);
        let s = svd(&m).unwrap();
        assert!((s.singular_values[0] - 1.0).abs() < 1e-15);
        assert!(s.singular_values[1].abs() < 1e-15);
        assert!((s.left[(0, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((s.right[(1, 0)].norm() - 1.0).abs() < 1e-15);
        assert!((s.reconstruct() - m).norm() < 1e-15);
    }

    #[test]
    fn svd_of_rank_one_and_adjoint() {
        let mut rng = RandomSource::new(17, 0);
        for n in 2..5 {
            for _ in 0..50 {
                let x = rng.unit_vector(n);
                let y = rng.unit_vector(n);
                let m = outer(&x, &y).scale(1.0 + rng.uniform())
                    + rng.ginibre(n, n).scale(1e-3 * rng.below(2) as f64);
                for a in [m.clone(), m.adjoint()] {
                    let s = svd(&a).unwrap();
                    assert!((s.reconstruct() - &a).norm() < 1e-13 * a.norm().max(1.0));
                    assert!(unitarity_deviation(&s.left) < 1e-12);
                    assert!(unitarity_deviation(&s.right) < 1e-12);
                }
                let s1 = svd(&m).unwrap().singular_values;
                let s2 = svd(&m.adjoint()).unwrap().singular_values;
                for (p, q) in s1.iter().zip(&s2) {
                    assert!((p - q).abs() < 1e-13);
                }
            }
        }
        assert!(svd(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn psd_examples() {
        let v = is_psd(&identity(4), 1e-9).unwrap();
        assert!(v.is_psd);
        assert!((v.min_eigenvalue - 1.0).abs() < 1e-15);

        let v = is_psd(&diag(&[ONE, c(-1e-6, 0.0)]), 1e-9).unwrap();
        assert!(!v.is_psd);
        assert!((v.min_eigenvalue + 1e-6).abs() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = DVector::from_column_slice(&[c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let v = is_psd(&outer(&psi, &psi), 1e-9).unwrap();
        assert!(v.is_psd);
        assert!(v.min_eigenvalue.abs() < 1e-15);
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        for dim in 1..=6 {
            let u = haar_unitary(dim, &mut RandomSource::new(42, dim as u64));
            assert!(unitarity_deviation(&u) < 1e-12);
            let again = haar_unitary(dim, &mut RandomSource::new(42, dim as u64));
            assert_eq!(u, again);
        }
        let a = haar_unitary(3, &mut RandomSource::new(42, 0));
        let b = haar_unitary(3, &mut RandomSource::new(42, 1));
        assert_ne!(a, b);
    }

    #[test]
    fn random_density_contract() {
        let mut rng = RandomSource::new(5, 0);
        let pure = random_density(4, 1, &mut rng).unwrap();
        assert!(((&pure * &pure).trace().re - 1.0).abs() < 1e-10);
        for rank in 1..=4 {
            let rho = random_density(4, rank, &mut rng).unwrap();
            assert!((rho.trace() - ONE).norm() < 1e-12);
            let spec = spectral_decompose(&rho).unwrap();
            assert!(spec.min() >= -1e-12);
            let numerical_rank = spec.eigenvalues.iter().filter(|&&x| x > 1e-10).count();
            assert_eq!(numerical_rank, rank);
        }
        assert!(random_density(3, 0, &mut rng).is_err());
        assert!(random_density(3, 4, &mut rng).is_err());
        let a = random_density(3, 2, &mut RandomSource::new(77, 1)).unwrap();
        let b = random_density(3, 2, &mut RandomSource::new(77, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn entropy_of_simple_states() {
        assert!(entropy_bits(&identity(2).scale(0.5)).unwrap() - 1.0 < 1e-14);
        assert!(entropy_bits(&matrix_unit(2, 0, 0)).unwrap().abs() < 1e-14);
    }
}
