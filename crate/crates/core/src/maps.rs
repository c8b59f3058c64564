//! Operator-sum maps `σ ↦ Σ_α w_α L_α σ R_α†`, the map induced on the system by
//! a joint unitary acting on a correlated state, Choi matrices and Kraus forms.

use crate::error::{Error, Result};
use crate::linalg::{
    self, basis_ket, bath_matrix_element, identity, matrix_unit, spectral_decompose, svd,
    ComplexMatrix, C64, I, ZERO,
};
use crate::states::{BlockDecomposition, CqForm, TraceTag, STATE_TOL};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Singular values and bath eigenvalues below this are dropped.
pub const TERM_CUTOFF: f64 = 1e-14;
/// Verdict threshold for Hermiticity preservation and trace preservation.
pub const PROPERTY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapFlavor {
    /// Independent left and right elements.
    General,
    /// `left == right`, real weights.
    Hermitian,
    /// Hermitian with nonnegative weights.
    Kraus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapTerm {
    pub weight: f64,
    /// `out_dim × in_dim`.
    pub left: ComplexMatrix,
    /// `out_dim × in_dim`.
    pub right: ComplexMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSumMap {
    pub terms: Vec<MapTerm>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub flavor: MapFlavor,
}

impl OperatorSumMap {
    pub fn new(in_dim: usize, out_dim: usize, flavor: MapFlavor) -> Self {
        Self {
            terms: Vec::new(),
            in_dim,
            out_dim,
            flavor,
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::new(dim, dim, MapFlavor::Kraus);
        m.push_hermitian(1.0, identity(dim))
            .expect("identity term is well formed");
        m
    }

    fn check_shape(&self, op: &ComplexMatrix) -> Result<()> {
        if op.nrows() != self.out_dim || op.ncols() != self.in_dim {
            return Err(Error::Dimension(format!(
                "operation element is {}x{}, map is {}->{}",
                op.nrows(),
                op.ncols(),
                self.in_dim,
                self.out_dim
            )));
        }
        Ok(())
    }

    /// Adds `w L σ R†`. Only allowed on general-flavored maps.
    pub fn push(&mut self, weight: f64, left: ComplexMatrix, right: ComplexMatrix) -> Result<()> {
        if self.flavor != MapFlavor::General {
            return Err(Error::InvalidParameter(
                "independent left/right elements need a general-flavored map".into(),
            ));
        }
        self.check_shape(&left)?;
        self.check_shape(&right)?;
        self.terms.push(MapTerm {
            weight,
            left,
            right,
        });
        Ok(())
    }

    /// Adds `w E σ E†`.
    pub fn push_hermitian(&mut self, weight: f64, element: ComplexMatrix) -> Result<()> {
        self.check_shape(&element)?;
        if self.flavor == MapFlavor::Kraus && weight < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "Kraus weights must be nonnegative, got {weight}"
            )));
        }
        self.terms.push(MapTerm {
            weight,
            left: element.clone(),
            right: element,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Matrix of the map on the matrix-unit basis: column `i·in + j` holds
    /// `Φ[|i⟩⟨j|]` flattened row-major.
    pub fn superoperator(&self) -> ComplexMatrix {
        let (n, m) = (self.in_dim, self.out_dim);
        let mut out = ComplexMatrix::zeros(m * m, n * n);
        for t in &self.terms {
            let w = C64::new(t.weight, 0.0);
            for i in 0..n {
                for j in 0..n {
                    for a in 0..m {
                        let la = t.left[(a, i)] * w;
                        if la == ZERO {
                            continue;
                        }
                        for b in 0..m {
                            out[(a * m + b, i * n + j)] += la * t.right[(b, j)].conj();
                        }
                    }
                }
            }
        }
        out
    }
}

/// `Σ w L σ R†`.
pub fn apply_map(m: &OperatorSumMap, sigma: &ComplexMatrix) -> Result<ComplexMatrix> {
    if sigma.nrows() != m.in_dim || sigma.ncols() != m.in_dim {
        return Err(Error::Dimension(format!(
            "input is {}x{}, map expects {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            m.in_dim,
            m.in_dim
        )));
    }
    let mut out = ComplexMatrix::zeros(m.out_dim, m.out_dim);
    for t in &m.terms {
        out += (&t.left * sigma * t.right.adjoint()).scale(t.weight);
    }
    Ok(out)
}

/// `(1/d) Σ_ij |i⟩⟨j| ⊗ Φ[|i⟩⟨j|]`, row index `(i, k) ↦ i·out_dim + k`.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    pub matrix: ComplexMatrix,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl ChoiMatrix {
    /// The block `Φ[|i⟩⟨j|] / d`.
    pub fn block(&self, i: usize, j: usize) -> ComplexMatrix {
        let m = self.out_dim;
        self.matrix.view((i * m, j * m), (m, m)).into_owned()
    }
}

/// Column-stacked element: `vec[i·out + k] = E[k, i]`.
fn vectorize(e: &ComplexMatrix) -> DVector<C64> {
    let (out, inn) = (e.nrows(), e.ncols());
    DVector::from_fn(out * inn, |r, _| e[(r % out, r / out)])
}

fn unvectorize(v: &DVector<C64>, out: usize, inn: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(out, inn, |k, i| v[i * out + k])
}

pub fn choi_matrix(m: &OperatorSumMap) -> ChoiMatrix {
    let n = m.in_dim * m.out_dim;
    let mut out = ComplexMatrix::zeros(n, n);
    for t in &m.terms {
        let a = vectorize(&t.left);
        let b = vectorize(&t.right);
        out += (a * b.adjoint()).scale(t.weight);
    }
    ChoiMatrix {
        matrix: out.unscale(m.in_dim as f64),
        in_dim: m.in_dim,
        out_dim: m.out_dim,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapProperties {
    pub hermitian_preserving: bool,
    pub trace_preserving: bool,
    /// Largest relative anti-Hermitian part of `Φ[H]` over a Hermitian basis.
    pub hermiticity_residue: f64,
    /// `‖Σ w R†L − I‖_F`.
    pub trace_deviation: f64,
}

/// Hermitian operator basis: `|i⟩⟨i|`, `|i⟩⟨j| + |j⟩⟨i|`, `i(|i⟩⟨j| − |j⟩⟨i|)`.
pub fn hermitian_basis(dim: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        out.push(matrix_unit(dim, i, i));
        for j in (i + 1)..dim {
            out.push(matrix_unit(dim, i, j) + matrix_unit(dim, j, i));
            out.push((matrix_unit(dim, i, j) - matrix_unit(dim, j, i)) * I);
        }
    }
    out
}

pub fn map_properties(m: &OperatorSumMap) -> MapProperties {
    let mut residue: f64 = 0.0;
    for h in hermitian_basis(m.in_dim) {
        let y = apply_map(m, &h).expect("basis has the input dimension");
        let anti = (&y - y.adjoint()).norm() * 0.5;
        residue = residue.max(anti / y.norm().max(1.0));
    }
    let trace_deviation = if m.in_dim == m.out_dim {
        let mut acc = ComplexMatrix::zeros(m.in_dim, m.in_dim);
        for t in &m.terms {
            acc += (t.right.adjoint() * &t.left).scale(t.weight);
        }
        (acc - identity(m.in_dim)).norm()
    } else {
        f64::INFINITY
    };
    MapProperties {
        hermitian_preserving: residue <= PROPERTY_TOL,
        trace_preserving: trace_deviation <= PROPERTY_TOL,
        hermiticity_residue: residue,
        trace_deviation,
    }
}

fn require_hermitian_preserving(m: &OperatorSumMap) -> Result<()> {
    let props = map_properties(m);
    if !props.hermitian_preserving {
        return Err(Error::NotHermitianPreserving {
            residue: props.hermiticity_residue,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CpVerdict {
    pub is_cp: bool,
    pub min_choi_eigenvalue: f64,
}

/// Choi positivity test; the map must preserve Hermiticity.
pub fn is_cp(m: &OperatorSumMap, tol: f64) -> Result<CpVerdict> {
    require_hermitian_preserving(m)?;
    let choi = choi_matrix(m);
    let v = linalg::is_psd(&choi.matrix, tol)?;
    Ok(CpVerdict {
        is_cp: v.is_psd,
        min_choi_eigenvalue: v.min_eigenvalue,
    })
}

/// Minimum Choi eigenvalue without the Hermiticity-preservation precheck.
pub fn min_choi_eigenvalue(m: &OperatorSumMap) -> Result<f64> {
    Ok(spectral_decompose(&choi_matrix(m).matrix)?.min())
}

fn require_joint_unitary(u: &ComplexMatrix, ds: usize, db: usize) -> Result<()> {
    let n = ds * db;
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::Dimension(format!(
            "unitary is {}x{}, expected {n}x{n}",
            u.nrows(),
            u.ncols()
        )));
    }
    linalg::require_unitary(u, STATE_TOL)
}

/// The linear map `ρ_S(0) ↦ Tr_B[U ρ_SB U†]` of an SL-class state.
///
/// Each unit-trace block `φ_ij = Σ_α s_α |x_α⟩⟨y_α|` contributes, for every bath
/// basis vector `|ψ_k⟩`, the pair `(√s_α ⟨ψ_k|U|x_α⟩ P_i, √s_α ⟨ψ_k|U|y_α⟩ P_j)`.
/// The result is general-flavored; Hermiticity is checked, not assumed.
pub fn induced_map(d: &BlockDecomposition, u: &ComplexMatrix) -> Result<OperatorSumMap> {
    d.require_sl()?;
    let (ds, db) = (d.ds(), d.db());
    require_joint_unitary(u, ds, db)?;
    let mut map = OperatorSumMap::new(ds, ds, MapFlavor::General);
    let bath_basis: Vec<DVector<C64>> = (0..db).map(|k| basis_ket(db, k)).collect();
    for i in 0..ds {
        let vi = d.basis_vector(i);
        for j in 0..ds {
            if d.tag(i, j) != TraceTag::One {
                continue;
            }
            let vj = d.basis_vector(j);
            let dec = svd(d.bath_op(i, j))?;
            for (alpha, &s) in dec.singular_values.iter().enumerate() {
                if s <= TERM_CUTOFF {
                    continue;
                }
                let root = s.sqrt();
                let x = dec.left.column(alpha).into_owned();
                let y = dec.right.column(alpha).into_owned();
                for psi in &bath_basis {
                    let v = bath_matrix_element(u, ds, db, psi, &x);
                    let w = bath_matrix_element(u, ds, db, psi, &y);
                    let left = (&v * &vi * vi.adjoint()).scale(root);
                    let right = (&w * &vj * vj.adjoint()).scale(root);
                    map.push(1.0, left, right)?;
                }
            }
        }
    }
    Ok(map)
}

/// Kraus form of the dynamics of a classical–quantum state: for each block,
/// `E_ij^α = ⟨β_i|U|λ_j^α⟩ Π_α` weighted by the bath eigenvalue `λ_j^α`.
pub fn kraus_from_vqd(cq: &CqForm, u: &ComplexMatrix) -> Result<OperatorSumMap> {
    let (ds, db) = (cq.ds, cq.db);
    require_joint_unitary(u, ds, db)?;
    let mut map = OperatorSumMap::new(ds, ds, MapFlavor::Kraus);
    for block in &cq.blocks {
        let spec = spectral_decompose(&block.bath)?;
        for (j, &lambda) in spec.eigenvalues.iter().enumerate() {
            if lambda <= TERM_CUTOFF {
                continue;
            }
            let ket = spec.vector(j);
            for i in 0..db {
                let e = bath_matrix_element(u, ds, db, &basis_ket(db, i), &ket) * &block.projector;
                map.push_hermitian(lambda, e)?;
            }
        }
    }
    Ok(map)
}

/// Splits a Hermiticity-preserving map into `Φ = Φ₊ − Φ₋` with both parts CP,
/// using the positive and negative eigenpairs of its Choi matrix.
pub fn cp_difference(m: &OperatorSumMap) -> Result<(OperatorSumMap, OperatorSumMap)> {
    require_hermitian_preserving(m)?;
    let choi = choi_matrix(m);
    let h = (&choi.matrix + choi.matrix.adjoint()).scale(0.5);
    let spec = spectral_decompose(&h)?;
    let scale: f64 = spec
        .eigenvalues
        .iter()
        .map(|x| x.abs())
        .sum::<f64>()
        .max(1.0);
    let cutoff = TERM_CUTOFF * scale;
    let mut plus = OperatorSumMap::new(m.in_dim, m.out_dim, MapFlavor::Kraus);
    let mut minus = OperatorSumMap::new(m.in_dim, m.out_dim, MapFlavor::Kraus);
    for (k, &mu) in spec.eigenvalues.iter().enumerate() {
        if mu.abs() <= cutoff {
            continue;
        }
        let e = unvectorize(&spec.vector(k), m.out_dim, m.in_dim);
        let weight = mu.abs() * m.in_dim as f64;
        if mu > 0.0 {
            plus.push_hermitian(weight, e)?;
        } else {
            minus.push_hermitian(weight, e)?;
        }
    }
    Ok((plus, minus))
}

/// `σ ↦ σᵀ` on a qubit as `½(σ + XσX + ZσZ − YσY)`.
pub fn qubit_transpose() -> OperatorSumMap {
    let o = C64::new(1.0, 0.0);
    let x = linalg::from_rows(2, 2, &[ZERO, o, o, ZERO]).expect("2x2");
    let y = linalg::from_rows(2, 2, &[ZERO, -I, I, ZERO]).expect("2x2");
    let z = linalg::from_rows(2, 2, &[o, ZERO, ZERO, -o]).expect("2x2");
    let mut m = OperatorSumMap::new(2, 2, MapFlavor::Hermitian);
    for (w, e) in [(0.5, identity(2)), (0.5, x), (0.5, z), (-0.5, y)] {
        m.push_hermitian(w, e).expect("2x2 elements");
    }
    m
}

/// `σ ↦ Tr[σ] I/d`.
pub fn completely_depolarizing(dim: usize) -> OperatorSumMap {
    let mut m = OperatorSumMap::new(dim, dim, MapFlavor::Kraus);
    for a in 0..dim {
        for b in 0..dim {
            m.push_hermitian(1.0 / dim as f64, matrix_unit(dim, a, b))
                .expect("square elements");
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_unitary, kron, random_density, RandomSource, ONE};
    use crate::states::{
        decompose, evolve, generate_state, is_vqd, BipartiteState, StateKind, StateParams,
        StructuralOutcome,
    };

    fn bell_projector(d: usize) -> ComplexMatrix {
        let mut v = DVector::zeros(d * d);
        for i in 0..d {
            v[i * d + i] = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        }
        &v * v.adjoint()
    }

    #[test]
    fn identity_map_choi_is_bell_projector() {
        let m = OperatorSumMap::identity(2);
        assert!((choi_matrix(&m).matrix - bell_projector(2)).norm() < 1e-15);
        let v = is_cp(&m, 1e-9).unwrap();
        assert!(v.is_cp);
    }

    #[test]
    fn depolarizing_choi() {
        let m = completely_depolarizing(2);
        assert!((choi_matrix(&m).matrix - identity(4).scale(0.25)).norm() < 1e-15);
        let mut rng = RandomSource::new(1, 0);
        let s = random_density(2, 2, &mut rng).unwrap();
        assert!((apply_map(&m, &s).unwrap() - identity(2).scale(0.5)).norm() < 1e-14);
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let t = qubit_transpose();
        let mut rng = RandomSource::new(2, 0);
        let s = rng.ginibre(2, 2);
        assert!((apply_map(&t, &s).unwrap() - s.transpose()).norm() < 1e-14);
        let v = is_cp(&t, 1e-9).unwrap();
        assert!(!v.is_cp);
        // Choi of the transpose is SWAP/2, whose smallest eigenvalue is -1/2.
        assert!((v.min_choi_eigenvalue + 0.5).abs() < 1e-14);
    }

    #[test]
    fn apply_map_identity_and_linearity() {
        let mut rng = RandomSource::new(3, 0);
        let s = rng.ginibre(3, 3);
        assert_eq!(apply_map(&OperatorSumMap::identity(3), &s).unwrap(), s);

        let d = decompose(
            &generate_state(StateKind::SlGeneric, &StateParams::new(2, 2), &mut rng).unwrap(),
        );
        let m = induced_map(&d, &haar_unitary(4, &mut rng)).unwrap();
        let (s1, s2) = (rng.hermitian(2), rng.hermitian(2));
        let (a, b) = (0.7, -1.3);
        let lhs = apply_map(&m, &(s1.scale(a) + s2.scale(b))).unwrap();
        let rhs = apply_map(&m, &s1).unwrap().scale(a) + apply_map(&m, &s2).unwrap().scale(b);
        assert!((lhs - rhs).norm() < 1e-12);
        assert!(apply_map(&m, &identity(3)).is_err());
    }

    #[test]
    fn asymmetric_single_term_is_not_hermitian_preserving() {
        let mut m = OperatorSumMap::new(2, 2, MapFlavor::General);
        m.push(1.0, matrix_unit(2, 0, 0), matrix_unit(2, 0, 1))
            .unwrap();
        let p = map_properties(&m);
        assert!(!p.hermitian_preserving);
        assert!(matches!(
            is_cp(&m, 1e-9),
            Err(Error::NotHermitianPreserving { .. })
        ));
        assert!(cp_difference(&m).is_err());
    }

    #[test]
    fn push_checks_shape_and_flavor() {
        let mut m = OperatorSumMap::new(2, 2, MapFlavor::Kraus);
        assert!(m.push_hermitian(-1.0, identity(2)).is_err());
        assert!(m.push_hermitian(1.0, identity(3)).is_err());
        assert!(m.push(1.0, identity(2), identity(2)).is_err());
    }

    #[test]
    fn induced_map_reproduces_dynamics() {
        let mut rng = RandomSource::new(4, 0);
        for (ds, db) in [(2, 2), (2, 3), (3, 2)] {
            for _ in 0..10 {
                let state =
                    generate_state(StateKind::SlGeneric, &StateParams::new(ds, db), &mut rng)
                        .unwrap();
                let u = haar_unitary(ds * db, &mut rng);
                let d = decompose(&state);
                let m = induced_map(&d, &u).unwrap();
                let out = apply_map(&m, &state.reduced_system()).unwrap();
                assert!((out - evolve(&state, &u).unwrap()).norm() < 1e-10);
                let p = map_properties(&m);
                assert!(p.hermitian_preserving, "residue {}", p.hermiticity_residue);
            }
        }
    }

    #[test]
    fn induced_map_of_product_state() {
        let mut rng = RandomSource::new(5, 0);
        let rs = random_density(2, 2, &mut rng).unwrap();
        let rb = random_density(3, 2, &mut rng).unwrap();
        let state = BipartiteState::new(kron(&rs, &rb), 2, 3).unwrap();
        let d = decompose(&state);

        let u = haar_unitary(6, &mut rng);
        let m = induced_map(&d, &u).unwrap();
        let sigma = random_density(2, 2, &mut rng).unwrap();
        let direct =
            linalg::partial_trace_bath(&(&u * kron(&sigma, &rb) * u.adjoint()), 2, 3).unwrap();
        assert!((apply_map(&m, &sigma).unwrap() - direct).norm() < 1e-12);

        let us = haar_unitary(2, &mut rng);
        let ub = haar_unitary(3, &mut rng);
        let m = induced_map(&d, &kron(&us, &ub)).unwrap();
        assert!((apply_map(&m, &sigma).unwrap() - &us * &sigma * us.adjoint()).norm() < 1e-12);
        assert!(is_cp(&m, 1e-9).unwrap().is_cp);
    }

    #[test]
    fn induced_map_rejects_bad_input() {
        let d = decompose(&crate::states::bell_state());
        assert!(matches!(
            induced_map(&d, &identity(4)),
            Err(Error::NotSl(..))
        ));
        let mut rng = RandomSource::new(6, 0);
        let s = generate_state(StateKind::Product, &StateParams::new(2, 2), &mut rng).unwrap();
        assert!(matches!(
            induced_map(&decompose(&s), &identity(4).scale(2.0)),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn choi_trace_is_one_for_trace_preserving_maps() {
        let mut rng = RandomSource::new(7, 0);
        for _ in 0..10 {
            let s = generate_state(StateKind::Product, &StateParams::new(3, 2), &mut rng).unwrap();
            let m = induced_map(&decompose(&s), &haar_unitary(6, &mut rng)).unwrap();
            assert!(map_properties(&m).trace_preserving);
            assert!((choi_matrix(&m).matrix.trace() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn kraus_from_cq_state() {
        let mut rng = RandomSource::new(8, 0);
        for _ in 0..10 {
            let state = generate_state(StateKind::Cq, &StateParams::new(3, 2), &mut rng).unwrap();
            let d = decompose(&state);
            let v = is_vqd(&d).unwrap();
            let form = v.form().unwrap();
            let u = haar_unitary(6, &mut rng);
            let k = kraus_from_vqd(form, &u).unwrap();
            assert_eq!(k.flavor, MapFlavor::Kraus);
            let out = apply_map(&k, &state.reduced_system()).unwrap();
            assert!((out - evolve(&state, &u).unwrap()).norm() < 1e-10);
            assert!(map_properties(&k).trace_deviation < 1e-10);
            assert!(
                linalg::is_psd(&choi_matrix(&k).matrix, 1e-10)
                    .unwrap()
                    .is_psd
            );
        }
    }

    #[test]
    fn kraus_for_product_state_and_identity() {
        let mut rng = RandomSource::new(9, 0);
        let s = generate_state(StateKind::Product, &StateParams::new(2, 2), &mut rng).unwrap();
        let StructuralOutcome::Cp(form) =
            crate::states::structural_cp_form(&decompose(&s)).unwrap()
        else {
            panic!()
        };
        assert_eq!(form.blocks.len(), 1);
        let k = kraus_from_vqd(&form, &identity(4)).unwrap();
        let sigma = rng.ginibre(2, 2);
        assert!((apply_map(&k, &sigma).unwrap() - &sigma).norm() < 1e-12);
    }

    #[test]
    fn cp_difference_examples() {
        let (plus, minus) = cp_difference(&OperatorSumMap::identity(2)).unwrap();
        assert_eq!(plus.len(), 1);
        assert!(minus.is_empty());
        assert!(
            (plus.superoperator() - OperatorSumMap::identity(2).superoperator()).norm() < 1e-12
        );

        let t = qubit_transpose();
        let (plus, minus) = cp_difference(&t).unwrap();
        assert!(!plus.is_empty() && !minus.is_empty());
        for h in hermitian_basis(2) {
            let diff = apply_map(&plus, &h).unwrap() - apply_map(&minus, &h).unwrap();
            assert!((diff - apply_map(&t, &h).unwrap()).norm() < 1e-10);
        }
    }
}
