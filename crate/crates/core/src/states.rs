//! Bipartite states, their block decomposition `ρ = Σ ϱ_ij |i⟩⟨j| ⊗ φ_ij`,
//! SL classification, block structure and the classical–quantum tests.

use crate::error::{Error, Result};
use crate::linalg::{
    self, basis_ket, bath_block, identity, kron, outer, partial_trace_bath, partial_trace_system,
    random_density, spectral_decompose, ComplexMatrix, RandomSource, C64, ONE, ZERO,
};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const STATE_TOL: f64 = 1e-10;
pub const STATE_PSD_TOL: f64 = 1e-9;
pub const BASIS_TOL: f64 = 1e-12;
/// `|Tr B_ij|` above this marks a unit-trace block.
pub const TRACE_ZERO_TOL: f64 = 1e-10;
/// Frobenius distance under which two bath operators are considered equal.
pub const CONSTANT_PHI_TOL: f64 = 1e-10;
/// Blocks with smaller weight carry no support and are dropped.
pub const MIN_BLOCK_WEIGHT: f64 = 1e-12;
pub const BATH_PSD_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;
pub const CLASSICAL_RESIDUAL_TOL: f64 = 1e-10;
const REFINE_RETRIES: usize = 8;
/// Fixed seed for the internal degeneracy refinement draws.
const REFINE_SEED: u64 = 0x5eed_cafe;

/// A joint system–bath density matrix together with the system basis `{|i⟩}`
/// in which it is decomposed.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    matrix: ComplexMatrix,
    ds: usize,
    db: usize,
    basis: ComplexMatrix,
}

impl BipartiteState {
    /// Validates the state and uses the computational basis.
    pub fn new(matrix: ComplexMatrix, ds: usize, db: usize) -> Result<Self> {
        Self::with_basis(matrix, ds, db, identity(ds))
    }

    pub fn with_basis(
        matrix: ComplexMatrix,
        ds: usize,
        db: usize,
        basis: ComplexMatrix,
    ) -> Result<Self> {
        let n = ds * db;
        if ds == 0 || db == 0 {
            return Err(Error::Dimension(
                "subsystem dimensions must be positive".into(),
            ));
        }
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Dimension(format!(
                "state is {}x{} but d_s*d_b = {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if basis.nrows() != ds || basis.ncols() != ds {
            return Err(Error::Dimension(format!(
                "basis is {}x{} but d_s = {ds}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if !linalg::is_finite(&matrix) || !linalg::is_finite(&basis) {
            return Err(Error::NonFinite);
        }
        let herm = linalg::hermiticity_deviation(&matrix);
        if herm > STATE_TOL {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {herm:.3e} > {STATE_TOL:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > STATE_TOL {
            return Err(Error::InvalidState(format!(
                "trace is {:.12} {:+.3e}i, expected 1",
                tr.re, tr.im
            )));
        }
        let psd = linalg::is_psd(&matrix, STATE_PSD_TOL)?;
        if !psd.is_psd {
            return Err(Error::InvalidState(format!(
                "not positive semidefinite (minimum eigenvalue {:.3e})",
                psd.min_eigenvalue
            )));
        }
        let unit = linalg::unitarity_deviation(&basis);
        if unit > BASIS_TOL {
            return Err(Error::InvalidState(format!(
                "basis is not unitary (deviation {unit:.3e} > {BASIS_TOL:e})"
            )));
        }
        Ok(Self {
            matrix,
            ds,
            db,
            basis,
        })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn ds(&self) -> usize {
        self.ds
    }

    pub fn db(&self) -> usize {
        self.db
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    /// Same joint state declared in another system basis.
    pub fn in_basis(&self, basis: ComplexMatrix) -> Result<Self> {
        Self::with_basis(self.matrix.clone(), self.ds, self.db, basis)
    }

    pub fn reduced_system(&self) -> ComplexMatrix {
        partial_trace_bath(&self.matrix, self.ds, self.db).expect("dimensions validated")
    }

    pub fn reduced_bath(&self) -> ComplexMatrix {
        partial_trace_system(&self.matrix, self.ds, self.db).expect("dimensions validated")
    }

    fn has_computational_basis(&self) -> bool {
        self.basis == identity(self.ds)
    }

    /// The joint matrix expressed in the declared system basis, `(V† ⊗ I) ρ (V ⊗ I)`.
    fn matrix_in_basis(&self) -> ComplexMatrix {
        if self.has_computational_basis() {
            self.matrix.clone()
        } else {
            linalg::conjugate_system(&self.matrix, &self.basis.adjoint(), self.db)
        }
    }
}

/// `ρ_S(t) = Tr_B[U ρ U†]`.
pub fn evolve(state: &BipartiteState, u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = state.ds * state.db;
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::Dimension(format!(
            "unitary is {}x{}, state is {n}x{n}",
            u.nrows(),
            u.ncols()
        )));
    }
    linalg::require_unitary(u, STATE_TOL)?;
    partial_trace_bath(&(u * &state.matrix * u.adjoint()), state.ds, state.db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceTag {
    /// `Tr φ_ij = 1`.
    One,
    /// `φ_ij ≠ 0` but traceless: violates the SL condition.
    ZeroTraceless,
    /// `φ_ij = 0`.
    ZeroBlock,
}

/// The data `(ϱ_ij, φ_ij)` of a state in a fixed system basis.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    ds: usize,
    db: usize,
    basis: ComplexMatrix,
    /// Joint matrix in the declared basis.
    rotated: ComplexMatrix,
    coeffs: ComplexMatrix,
    bath_ops: Vec<ComplexMatrix>,
    tags: Vec<TraceTag>,
    zero_threshold: f64,
}

impl BlockDecomposition {
    pub fn ds(&self) -> usize {
        self.ds
    }

    pub fn db(&self) -> usize {
        self.db
    }

    pub fn basis(&self) -> &ComplexMatrix {
        &self.basis
    }

    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    pub fn coeffs(&self) -> &ComplexMatrix {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> C64 {
        self.coeffs[(i, j)]
    }

    pub fn bath_op(&self, i: usize, j: usize) -> &ComplexMatrix {
        &self.bath_ops[i * self.ds + j]
    }

    pub fn tag(&self, i: usize, j: usize) -> TraceTag {
        self.tags[i * self.ds + j]
    }

    pub fn is_nonzero(&self, i: usize, j: usize) -> bool {
        self.tag(i, j) != TraceTag::ZeroBlock
    }

    /// Basis vector `|i⟩` of the declared basis, in computational coordinates.
    pub fn basis_vector(&self, i: usize) -> DVector<C64> {
        self.basis.column(i).into_owned()
    }

    /// `P_i = |i⟩⟨i|` in computational coordinates.
    pub fn projector(&self, i: usize) -> ComplexMatrix {
        let v = self.basis_vector(i);
        outer(&v, &v)
    }

    /// First index pair (row-major) tagged traceless-nonzero.
    pub fn first_non_sl(&self) -> Option<(usize, usize)> {
        let k = self
            .tags
            .iter()
            .position(|t| *t == TraceTag::ZeroTraceless)?;
        Some((k / self.ds, k % self.ds))
    }

    pub fn is_sl(&self) -> bool {
        self.first_non_sl().is_none()
    }

    pub fn require_sl(&self) -> Result<()> {
        match self.first_non_sl() {
            Some((i, j)) => Err(Error::NotSl(i, j)),
            None => Ok(()),
        }
    }

    /// `Σ ϱ_ij |i⟩⟨j| ⊗ φ_ij` in computational coordinates.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let (ds, db) = (self.ds, self.db);
        let mut m = ComplexMatrix::zeros(ds * db, ds * db);
        for i in 0..ds {
            for j in 0..ds {
                if self.tag(i, j) == TraceTag::ZeroBlock {
                    continue;
                }
                let block = self.bath_op(i, j) * self.coeff(i, j);
                m.view_mut((i * db, j * db), (db, db)).copy_from(&block);
            }
        }
        if self.basis == identity(ds) {
            m
        } else {
            linalg::conjugate_system(&m, &self.basis, db)
        }
    }

    /// `Σ_i ϱ_ii φ_ii`.
    pub fn reduced_bath(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.db, self.db);
        for i in 0..self.ds {
            if self.is_nonzero(i, i) {
                out += self.bath_op(i, i) * self.coeff(i, i);
            }
        }
        out
    }

    /// `ρ_S` in the declared basis: `ϱ_ij` on unit-trace entries, zero elsewhere.
    pub fn reduced_system_in_basis(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.ds, self.ds, |i, j| match self.tag(i, j) {
            TraceTag::One => self.coeff(i, j),
            _ => ZERO,
        })
    }

    /// Joint matrix in the declared basis.
    pub fn rotated_matrix(&self) -> &ComplexMatrix {
        &self.rotated
    }
}

/// Default threshold for declaring a bath block zero: `1e-12 ‖ρ‖_F`.
pub fn default_zero_threshold(state: &BipartiteState) -> f64 {
    1e-12 * state.matrix.norm()
}

pub fn decompose(state: &BipartiteState) -> BlockDecomposition {
    decompose_with_threshold(state, default_zero_threshold(state))
}

pub fn decompose_with_threshold(state: &BipartiteState, zero_threshold: f64) -> BlockDecomposition {
    let (ds, db) = (state.ds, state.db);
    let rotated = state.matrix_in_basis();
    let mut coeffs = ComplexMatrix::zeros(ds, ds);
    let mut bath_ops = Vec::with_capacity(ds * ds);
    let mut tags = Vec::with_capacity(ds * ds);
    for i in 0..ds {
        for j in 0..ds {
            let raw = bath_block(&rotated, db, i, j);
            let norm = raw.norm();
            let tr = raw.trace();
            let (coeff, op, tag) = if norm <= zero_threshold {
                (ZERO, ComplexMatrix::zeros(db, db), TraceTag::ZeroBlock)
            } else if tr.norm() > TRACE_ZERO_TOL {
                (tr, raw.map(|z| z / tr), TraceTag::One)
            } else {
                (
                    C64::new(norm, 0.0),
                    raw.unscale(norm),
                    TraceTag::ZeroTraceless,
                )
            };
            coeffs[(i, j)] = coeff;
            bath_ops.push(op);
            tags.push(tag);
        }
    }
    BlockDecomposition {
        ds,
        db,
        basis: state.basis.clone(),
        rotated,
        coeffs,
        bath_ops,
        tags,
        zero_threshold,
    }
}

/// True iff every bath block either has unit trace or vanishes.
pub fn is_sl(d: &BlockDecomposition) -> bool {
    d.is_sl()
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockVerdict {
    /// All nonzero bath operators in the block coincide. `None` when the block
    /// carries no nonzero entry at all.
    Constant {
        representative: Option<ComplexMatrix>,
    },
    /// `offending` differs from the block's first nonzero entry `reference`.
    NonConstant {
        reference: (usize, usize),
        offending: (usize, usize),
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Sorted system indices `D^(α)`.
    pub indices: Vec<usize>,
    pub verdict: BlockVerdict,
}

#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub blocks: Vec<Block>,
    basis: ComplexMatrix,
}

impl BlockPartition {
    /// `Π_α = Σ_{i∈D^(α)} |i⟩⟨i|` in computational coordinates.
    pub fn projector(&self, alpha: usize) -> ComplexMatrix {
        let ds = self.basis.nrows();
        let mut p = ComplexMatrix::zeros(ds, ds);
        for &i in &self.blocks[alpha].indices {
            let v = self.basis.column(i).into_owned();
            p += outer(&v, &v);
        }
        p
    }

    pub fn index_sets(&self) -> Vec<Vec<usize>> {
        self.blocks.iter().map(|b| b.indices.clone()).collect()
    }
}

/// Connected components of the supermatrix `[φ_ij]` and a constant-φ verdict
/// for each.
pub fn find_blocks(d: &BlockDecomposition) -> Result<BlockPartition> {
    d.require_sl()?;
    let ds = d.ds;
    let mut uf = UnionFind::new(ds);
    for i in 0..ds {
        for j in (i + 1)..ds {
            if d.is_nonzero(i, j) || d.is_nonzero(j, i) {
                uf.union(i, j);
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..ds {
        let root = uf.find(i);
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => groups.push((root, vec![i])),
        }
    }
    let blocks = groups
        .into_iter()
        .map(|(_, indices)| {
            let verdict = block_verdict(d, &indices);
            Block { indices, verdict }
        })
        .collect();
    Ok(BlockPartition {
        blocks,
        basis: d.basis.clone(),
    })
}

fn block_verdict(d: &BlockDecomposition, indices: &[usize]) -> BlockVerdict {
    let mut reference: Option<(usize, usize)> = None;
    for &i in indices {
        for &j in indices {
            if !d.is_nonzero(i, j) {
                continue;
            }
            match reference {
                None => reference = Some((i, j)),
                Some((ri, rj)) => {
                    if (d.bath_op(i, j) - d.bath_op(ri, rj)).norm() > CONSTANT_PHI_TOL {
                        return BlockVerdict::NonConstant {
                            reference: (ri, rj),
                            offending: (i, j),
                        };
                    }
                }
            }
        }
    }
    // Prefer a diagonal entry as representative: it is exactly Hermitian.
    let representative = indices
        .iter()
        .find(|&&i| d.is_nonzero(i, i))
        .map(|&i| d.bath_op(i, i).clone())
        .or_else(|| reference.map(|(i, j)| d.bath_op(i, j).clone()));
    BlockVerdict::Constant { representative }
}

/// One term `p_α ρ_S^(α) ⊗ ρ_B^(α)` of a classical–quantum form.
#[derive(Debug, Clone)]
pub struct CqBlock {
    pub indices: Vec<usize>,
    pub weight: f64,
    /// `Π_α ρ_S(0) Π_α / p_α`, computational coordinates.
    pub system: ComplexMatrix,
    pub bath: ComplexMatrix,
    /// `Π_α`, computational coordinates.
    pub projector: ComplexMatrix,
    /// Rank-one refinement `(p_α^k, |k⟩)` with `Σ_k |k⟩⟨k| = Π_α`; filled by [`is_vqd`].
    pub refined: Vec<(f64, DVector<C64>)>,
}

#[derive(Debug, Clone)]
pub struct CqForm {
    pub ds: usize,
    pub db: usize,
    pub blocks: Vec<CqBlock>,
}

impl CqForm {
    /// `Σ_α p_α ρ_S^(α) ⊗ ρ_B^(α)`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.ds * self.db;
        let mut m = ComplexMatrix::zeros(n, n);
        for b in &self.blocks {
            m += kron(&b.system, &b.bath).scale(b.weight);
        }
        m
    }

    /// `Σ_α p_α ρ_S^(α)`.
    pub fn reduced_system(&self) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.ds, self.ds);
        for b in &self.blocks {
            m += b.system.scale(b.weight);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuralFailure {
    NonConstant {
        block: usize,
        reference: (usize, usize),
        offending: (usize, usize),
    },
    BathNotPositive {
        block: usize,
        min_eigenvalue: f64,
    },
}

impl fmt::Display for StructuralFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonConstant {
                block,
                reference,
                offending,
            } => write!(
                f,
                "block {block}: phi{:?} differs from phi{:?}",
                offending, reference
            ),
            Self::BathNotPositive {
                block,
                min_eigenvalue,
            } => write!(
                f,
                "block {block}: bath state has eigenvalue {min_eigenvalue:.3e}"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub enum StructuralOutcome {
    Cp(CqForm),
    Failure(StructuralFailure),
}

impl StructuralOutcome {
    pub fn is_cp(&self) -> bool {
        matches!(self, Self::Cp(_))
    }
}

/// Checks that the supermatrix is block-constant with positive bath blocks and,
/// if so, assembles `ρ_SB = Σ_α p_α ρ_S^(α) ⊗ ρ_B^(α)`.
pub fn structural_cp_form(d: &BlockDecomposition) -> Result<StructuralOutcome> {
    let partition = find_blocks(d)?;
    let rho_s_basis = d.reduced_system_in_basis();
    let mut blocks = Vec::new();
    for (alpha, block) in partition.blocks.iter().enumerate() {
        let representative = match &block.verdict {
            BlockVerdict::NonConstant {
                reference,
                offending,
            } => {
                return Ok(StructuralOutcome::Failure(StructuralFailure::NonConstant {
                    block: alpha,
                    reference: *reference,
                    offending: *offending,
                }))
            }
            BlockVerdict::Constant { representative } => representative,
        };
        let weight: f64 = block.indices.iter().map(|&i| rho_s_basis[(i, i)].re).sum();
        let Some(bath) = representative else {
            continue;
        };
        let bath = (bath + bath.adjoint()).scale(0.5);
        let min_eig = spectral_decompose(&bath)?.min();
        if min_eig < -BATH_PSD_TOL {
            return Ok(StructuralOutcome::Failure(
                StructuralFailure::BathNotPositive {
                    block: alpha,
                    min_eigenvalue: min_eig,
                },
            ));
        }
        if weight <= MIN_BLOCK_WEIGHT {
            continue;
        }
        let mut sys_basis = ComplexMatrix::zeros(d.ds, d.ds);
        for &i in &block.indices {
            for &j in &block.indices {
                sys_basis[(i, j)] = rho_s_basis[(i, j)] / weight;
            }
        }
        let system = &d.basis * sys_basis * d.basis.adjoint();
        blocks.push(CqBlock {
            indices: block.indices.clone(),
            weight,
            system,
            bath,
            projector: partition.projector(alpha),
            refined: Vec::new(),
        });
    }
    Ok(StructuralOutcome::Cp(CqForm {
        ds: d.ds,
        db: d.db,
        blocks,
    }))
}

/// `‖Σ_k (|k⟩⟨k| ⊗ I) ρ (|k⟩⟨k| ⊗ I) − ρ‖_F` for the given system kets.
pub fn classical_projection_residual(
    matrix: &ComplexMatrix,
    db: usize,
    kets: &[DVector<C64>],
) -> f64 {
    let n = matrix.nrows();
    let mut projected = ComplexMatrix::zeros(n, n);
    let id = identity(db);
    for k in kets {
        let p = kron(&outer(k, k), &id);
        projected += &p * matrix * &p;
    }
    (projected - matrix).norm()
}

/// Splits sorted-descending eigenvalues into runs with gaps below [`DEGENERACY_GAP`].
fn degenerate_clusters(eigenvalues: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=eigenvalues.len() {
        if k == eigenvalues.len() || eigenvalues[k - 1] - eigenvalues[k] >= DEGENERACY_GAP {
            out.push(start..k);
            start = k;
        }
    }
    out
}

/// Rotates each degenerate cluster of `vectors` (columns, computational
/// coordinates) onto the eigenbasis of `⟨e_m| Tr_B[ρ (I ⊗ O)] |e_n⟩` for a
/// random Hermitian bath observable `O`.
fn refine_degenerate(
    matrix: &ComplexMatrix,
    ds: usize,
    db: usize,
    vectors: &ComplexMatrix,
    eigenvalues: &[f64],
    rng: &mut RandomSource,
) -> Result<ComplexMatrix> {
    let mut out = vectors.clone();
    let clusters: Vec<_> = degenerate_clusters(eigenvalues)
        .into_iter()
        .filter(|r| r.len() > 1)
        .collect();
    if clusters.is_empty() {
        return Ok(out);
    }
    let observable = rng.hermitian(db);
    let weighted = partial_trace_bath(&(matrix * kron(&identity(ds), &observable)), ds, db)?;
    for range in clusters {
        let sub = vectors.columns(range.start, range.len()).into_owned();
        let m = sub.adjoint() * &weighted * &sub;
        let m = (&m + m.adjoint()).scale(0.5);
        let spec = spectral_decompose(&m)?;
        let rotated = sub * spec.eigenvectors;
        out.columns_mut(range.start, range.len())
            .copy_from(&rotated);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct VqdOutcome {
    pub vqd: bool,
    pub structural: StructuralOutcome,
    /// Classical-projection residual of the final refinement, when computed.
    pub residual: Option<f64>,
}

impl VqdOutcome {
    pub fn form(&self) -> Option<&CqForm> {
        match &self.structural {
            StructuralOutcome::Cp(f) if self.vqd => Some(f),
            _ => None,
        }
    }
}

type RefinedKets = Vec<(f64, DVector<C64>)>;

/// Vanishing-discord test in the declared basis: the structural form must exist
/// and the state must be invariant under the rank-one measurement built from
/// the eigenvectors of each `ρ_S^(α)`.
pub fn is_vqd(d: &BlockDecomposition) -> Result<VqdOutcome> {
    let structural = structural_cp_form(d)?;
    let StructuralOutcome::Cp(mut form) = structural else {
        return Ok(VqdOutcome {
            vqd: false,
            structural,
            residual: None,
        });
    };
    let (ds, db) = (d.ds, d.db);
    let matrix = d.reconstruct();
    let covered: Vec<usize> = form.blocks.iter().flat_map(|b| b.indices.clone()).collect();
    let dropped: Vec<DVector<C64>> = (0..ds)
        .filter(|i| !covered.contains(i))
        .map(|i| d.basis_vector(i))
        .collect();

    let mut best: Option<(f64, Vec<RefinedKets>)> = None;
    for attempt in 0..REFINE_RETRIES {
        let mut rng = RandomSource::new(REFINE_SEED, attempt as u64);
        let mut refined_all = Vec::with_capacity(form.blocks.len());
        let mut kets = dropped.clone();
        for block in &form.blocks {
            let idx = &block.indices;
            // ρ_S^(α) restricted to the block, in the declared basis.
            let sub_basis = ComplexMatrix::from_fn(ds, idx.len(), |r, c| d.basis[(r, idx[c])]);
            let local = sub_basis.adjoint() * &block.system * &sub_basis;
            let spec = spectral_decompose(&local)?;
            let vectors = &sub_basis * &spec.eigenvectors;
            let vectors =
                refine_degenerate(&matrix, ds, db, &vectors, &spec.eigenvalues, &mut rng)?;
            let refined: Vec<(f64, DVector<C64>)> = (0..idx.len())
                .map(|k| {
                    let v = vectors.column(k).into_owned();
                    let p = (v.adjoint() * &block.system * &v)[(0, 0)].re;
                    (p, v)
                })
                .collect();
            kets.extend(refined.iter().map(|(_, v)| v.clone()));
            refined_all.push(refined);
        }
        let residual = classical_projection_residual(&matrix, db, &kets);
        let better = best.as_ref().is_none_or(|(r, _)| residual < *r);
        if better {
            best = Some((residual, refined_all));
        }
        if residual <= CLASSICAL_RESIDUAL_TOL {
            break;
        }
    }
    let (residual, refined_all) = best.expect("at least one attempt");
    for (block, refined) in form.blocks.iter_mut().zip(refined_all) {
        block.refined = refined;
    }
    Ok(VqdOutcome {
        vqd: residual <= CLASSICAL_RESIDUAL_TOL,
        structural: StructuralOutcome::Cp(form),
        residual: Some(residual),
    })
}

/// Searches for a system basis in which the state is classical–quantum.
///
/// Candidates come from the eigenvectors of `ρ_S`, with degenerate eigenspaces
/// split by a random bath observable; a candidate is returned only if
/// [`is_vqd`] accepts the state in that basis.
pub fn find_cq_basis(state: &BipartiteState) -> Option<ComplexMatrix> {
    let (ds, db) = (state.ds, state.db);
    let rho_s = state.reduced_system();
    let spec = spectral_decompose(&rho_s).ok()?;
    let has_degeneracy = degenerate_clusters(&spec.eigenvalues)
        .iter()
        .any(|r| r.len() > 1);
    let attempts = if has_degeneracy { REFINE_RETRIES } else { 1 };
    for attempt in 0..attempts {
        let mut rng = RandomSource::new(REFINE_SEED ^ 0xb45e, attempt as u64);
        let Ok(candidate) = refine_degenerate(
            &state.matrix,
            ds,
            db,
            &spec.eigenvectors,
            &spec.eigenvalues,
            &mut rng,
        ) else {
            continue;
        };
        // Re-orthonormalize against accumulated rounding.
        let candidate = candidate.qr().q();
        let Ok(rotated) = state.in_basis(candidate.clone()) else {
            continue;
        };
        let d = decompose(&rotated);
        if !d.is_sl() {
            continue;
        }
        if matches!(is_vqd(&d), Ok(o) if o.vqd) {
            return Some(candidate);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    Product,
    Cq,
    SlGeneric,
    SeparableDiscordant,
    EntangledPure,
}

impl StateKind {
    pub const ALL: [StateKind; 5] = [
        StateKind::Product,
        StateKind::Cq,
        StateKind::SlGeneric,
        StateKind::SeparableDiscordant,
        StateKind::EntangledPure,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StateKind::Product => "product",
            StateKind::Cq => "cq",
            StateKind::SlGeneric => "sl-generic",
            StateKind::SeparableDiscordant => "separable-discordant",
            StateKind::EntangledPure => "entangled-pure",
        }
    }

    /// Families with vanishing discord by construction.
    pub fn is_classical(self) -> bool {
        matches!(self, StateKind::Product | StateKind::Cq)
    }
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown state kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateParams {
    pub ds: usize,
    pub db: usize,
    /// Rank of system factors; full rank when `None`.
    pub system_rank: Option<usize>,
    /// Rank of bath factors; full rank when `None`.
    pub bath_rank: Option<usize>,
    /// Number of classical blocks for `cq`; drawn uniformly from `1..=d_s` when `None`.
    pub blocks: Option<usize>,
}

impl StateParams {
    pub fn new(ds: usize, db: usize) -> Self {
        Self {
            ds,
            db,
            system_rank: None,
            bath_rank: None,
            blocks: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ds < 1 || self.db < 1 {
            return Err(Error::InvalidParameter(
                "dimensions must be positive".into(),
            ));
        }
        if self.ds * self.db > 64 {
            return Err(Error::InvalidParameter(format!(
                "total dimension {} exceeds 64",
                self.ds * self.db
            )));
        }
        if let Some(r) = self.system_rank {
            if r == 0 || r > self.ds {
                return Err(Error::InvalidParameter(format!(
                    "system rank {r} out of range"
                )));
            }
        }
        if let Some(r) = self.bath_rank {
            if r == 0 || r > self.db {
                return Err(Error::InvalidParameter(format!(
                    "bath rank {r} out of range"
                )));
            }
        }
        if let Some(b) = self.blocks {
            if b == 0 || b > self.ds {
                return Err(Error::InvalidParameter(format!(
                    "block count {b} out of range"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a state of the requested family in the computational basis.
pub fn generate_state(
    kind: StateKind,
    params: &StateParams,
    rng: &mut RandomSource,
) -> Result<BipartiteState> {
    params.validate()?;
    let (ds, db) = (params.ds, params.db);
    let bath_rank = params.bath_rank.unwrap_or(db);
    let matrix = match kind {
        StateKind::Product => {
            let rs = random_density(ds, params.system_rank.unwrap_or(ds), rng)?;
            let rb = random_density(db, bath_rank, rng)?;
            kron(&rs, &rb)
        }
        StateKind::Cq => cq_matrix(params, rng)?,
        StateKind::SlGeneric => return sl_generic_draw(params, rng).map(|(s, _)| s),
        StateKind::SeparableDiscordant => separable_discordant_matrix(params, rng)?,
        StateKind::EntangledPure => {
            let psi = rng.unit_vector(ds * db);
            outer(&psi, &psi)
        }
    };
    let matrix = (&matrix + matrix.adjoint()).scale(0.5);
    BipartiteState::new(matrix, ds, db)
}

fn cq_matrix(params: &StateParams, rng: &mut RandomSource) -> Result<ComplexMatrix> {
    let (ds, db) = (params.ds, params.db);
    let n_blocks = params.blocks.unwrap_or_else(|| 1 + rng.below(ds));
    // Random composition of ds into n_blocks positive parts via sorted cut points.
    let mut cuts: Vec<usize> = (1..ds).collect();
    for k in 0..cuts.len() {
        let j = k + rng.below(cuts.len() - k);
        cuts.swap(k, j);
    }
    let mut cuts: Vec<usize> = cuts.into_iter().take(n_blocks - 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(ds);

    let raw: Vec<f64> = (0..n_blocks).map(|_| 0.1 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let mut m = ComplexMatrix::zeros(ds * db, ds * db);
    for (alpha, w) in raw.iter().enumerate() {
        let (lo, hi) = (bounds[alpha], bounds[alpha + 1]);
        let size = hi - lo;
        let rank = params.system_rank.map_or(size, |r| r.min(size));
        let local = random_density(size, rank, rng)?;
        let mut system = ComplexMatrix::zeros(ds, ds);
        system.view_mut((lo, lo), (size, size)).copy_from(&local);
        let bath = random_density(db, params.bath_rank.unwrap_or(db), rng)?;
        m += kron(&system, &bath).scale(w / total);
    }
    Ok(m)
}

fn separable_discordant_matrix(
    params: &StateParams,
    rng: &mut RandomSource,
) -> Result<ComplexMatrix> {
    let (ds, db) = (params.ds, params.db);
    if ds < 2 || db < 2 {
        return Err(Error::InvalidParameter(
            "separable-discordant states need d_s, d_b >= 2".into(),
        ));
    }
    // Two system pure states with overlap angle in [π/8, 3π/8].
    let psi0 = rng.unit_vector(ds);
    let perp = orthogonal_unit(&psi0, rng);
    let theta = std::f64::consts::PI * (0.125 + 0.25 * rng.uniform());
    let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.uniform());
    let psi1 = psi0.scale(theta.cos()) + perp * (phase * theta.sin());

    // Nearly orthogonal bath flags, each mixed with a random full-rank state.
    let b0 = rng.unit_vector(db);
    let b1 = orthogonal_unit(&b0, rng);
    let bath = |b: &DVector<C64>, rng: &mut RandomSource| -> Result<ComplexMatrix> {
        let eps = 0.25 * rng.uniform();
        let noise = random_density(db, params.bath_rank.unwrap_or(db), rng)?;
        Ok(outer(b, b).scale(1.0 - eps) + noise.scale(eps))
    };
    let rho0 = bath(&b0, rng)?;
    let rho1 = bath(&b1, rng)?;
    let p = 0.3 + 0.4 * rng.uniform();
    Ok(kron(&outer(&psi0, &psi0), &rho0).scale(p)
        + kron(&outer(&psi1, &psi1), &rho1).scale(1.0 - p))
}

fn orthogonal_unit(v: &DVector<C64>, rng: &mut RandomSource) -> DVector<C64> {
    loop {
        let w = rng.unit_vector(v.len());
        let w = &w - v * v.dotc(&w);
        let n = w.norm();
        if n > 1e-6 {
            return w.unscale(n);
        }
    }
}

/// Full-rank random state, re-drawn until it is SL with every bath-block trace
/// at least `10 × zero_threshold`. Returns the accepted state and the number of
/// rejected draws.
pub fn sl_generic_draw(
    params: &StateParams,
    rng: &mut RandomSource,
) -> Result<(BipartiteState, usize)> {
    params.validate()?;
    let (ds, db) = (params.ds, params.db);
    let mut rejected = 0;
    loop {
        let rho = random_density(ds * db, ds * db, rng)?;
        let state = BipartiteState::new(rho, ds, db)?;
        let d = decompose(&state);
        let margin = 10.0 * d.zero_threshold;
        let traces_ok = (0..ds).all(|i| {
            (0..ds).all(|j| bath_block(state.matrix(), db, i, j).trace().norm() >= margin)
        });
        if traces_ok && d.is_sl() {
            return Ok((state, rejected));
        }
        rejected += 1;
        if rejected > 10_000 {
            return Err(Error::InvalidParameter(
                "sl-generic sampler rejected 10000 consecutive draws".into(),
            ));
        }
    }
}

/// `(|00⟩ + |11⟩)/√2` projector on two qubits.
pub fn bell_state() -> BipartiteState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let psi = DVector::from_column_slice(&[C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)]);
    BipartiteState::new(outer(&psi, &psi), 2, 2).expect("Bell state is valid")
}

/// Werner mixture `w |Φ+⟩⟨Φ+| + (1 − w) I/4`.
pub fn werner_state(w: f64) -> BipartiteState {
    let bell = bell_state().matrix;
    let m = bell.scale(w) + identity(4).scale((1.0 - w) / 4.0);
    BipartiteState::new(m, 2, 2).expect("Werner state is valid")
}

/// `Σ_k p_k |k⟩⟨k| ⊗ ρ_k` in the computational basis.
pub fn classical_quantum_state(weights: &[f64], baths: &[ComplexMatrix]) -> Result<BipartiteState> {
    let ds = weights.len();
    if ds == 0 || baths.len() != ds {
        return Err(Error::InvalidParameter("one bath state per weight".into()));
    }
    let db = baths[0].nrows();
    let mut m = ComplexMatrix::zeros(ds * db, ds * db);
    for (k, (&p, rb)) in weights.iter().zip(baths).enumerate() {
        let ket = basis_ket(ds, k);
        m += kron(&outer(&ket, &ket), rb).scale(p);
    }
    BipartiteState::new(m, ds, db)
}
