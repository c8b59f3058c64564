//! Necessity machinery (adversarial unitaries, `(k,l)`-sector principal
//! submatrices of the Choi matrix, the trace-functional witness), a two-qubit
//! discord estimate, and the seeded Monte-Carlo campaign.

use crate::error::{Error, Result};
use crate::linalg::{
    self, conjugate_system, entropy_bits, haar_unitary, identity, kron, outer, spectral_decompose,
    ComplexMatrix, RandomSource, C64, I, ONE, ZERO,
};
use crate::maps::{induced_map, min_choi_eigenvalue, OperatorSumMap};
use crate::states::{
    decompose, generate_state, is_vqd, BipartiteState, BlockDecomposition, StateKind, StateParams,
    TraceTag,
};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// A certificate needs a Choi eigenvalue below `-VIOLATION_TOL`.
pub const VIOLATION_TOL: f64 = 1e-7;
/// CP is confirmed when the smallest Choi eigenvalue is at least `-CP_TOL`.
pub const CP_TOL: f64 = 1e-9;
/// Hermitian/unitary tolerance for the `A` matrices.
pub const WITNESS_TOL: f64 = 1e-12;
pub const WITNESS_ZERO: f64 = 1e-12;
pub const WITNESS_TRACE: f64 = 1e-10;
/// Environment variable capping campaign worker threads.
pub const THREADS_ENV: &str = "DISCORD_GATE_THREADS";

/// How the bath operator `A` is chosen.
#[derive(Debug, Clone)]
pub enum ASpec {
    /// `A = I − 2|ψ⟩⟨ψ|` with a Haar-random `|ψ⟩` on a bath of this dimension.
    RandomReflection(usize),
    /// `A = I − 2|ψ⟩⟨ψ|` for the given (normalized here) vector.
    Reflection(DVector<C64>),
    /// Any Hermitian unitary.
    Explicit(ComplexMatrix),
}

/// `U = (I⊗I − i X⊗A)/√2`, `X` the permutation swapping `k` and `l`.
/// `u` is expressed in the declared system basis.
#[derive(Debug, Clone)]
pub struct AdversarialUnitary {
    pub k: usize,
    pub l: usize,
    pub a: ComplexMatrix,
    pub u: ComplexMatrix,
}

impl AdversarialUnitary {
    /// The unitary in computational coordinates for a system basis `V`.
    pub fn in_frame(&self, basis: &ComplexMatrix) -> ComplexMatrix {
        conjugate_system(&self.u, basis, self.a.nrows())
    }
}

fn reflection(psi: &DVector<C64>) -> Result<ComplexMatrix> {
    let n = psi.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidParameter(
            "reflection vector must be nonzero".into(),
        ));
    }
    let psi = psi.unscale(n);
    Ok(identity(psi.len()) - outer(&psi, &psi).scale(2.0))
}

pub fn adversarial_unitary(
    k: usize,
    l: usize,
    ds: usize,
    spec: ASpec,
    rng: &mut RandomSource,
) -> Result<AdversarialUnitary> {
    if k == l || k >= ds || l >= ds {
        return Err(Error::InvalidParameter(format!(
            "need distinct system indices below {ds}, got ({k}, {l})"
        )));
    }
    let a = match spec {
        ASpec::RandomReflection(db) => reflection(&rng.unit_vector(db))?,
        ASpec::Reflection(psi) => reflection(&psi)?,
        ASpec::Explicit(a) => {
            linalg::require_square(&a)?;
            let herm = (&a - a.adjoint()).norm();
            if herm > WITNESS_TOL {
                return Err(Error::NotHermitian { deviation: herm });
            }
            linalg::require_unitary(&a, WITNESS_TOL)?;
            a
        }
    };
    let db = a.nrows();
    let mut x = identity(ds);
    x[(k, k)] = ZERO;
    x[(l, l)] = ZERO;
    x[(k, l)] = ONE;
    x[(l, k)] = ONE;
    let u = (identity(ds * db) - kron(&x, &a) * I).unscale(std::f64::consts::SQRT_2);
    linalg::require_unitary(&u, WITNESS_TOL)?;
    Ok(AdversarialUnitary { k, l, a, u })
}

/// Which of `φ_kk`, `φ_kl`, `φ_ll` have unit trace (the others vanish).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PklTags {
    pub kk: bool,
    pub kl: bool,
    pub ll: bool,
}

impl PklTags {
    pub const ALL_ONE: PklTags = PklTags {
        kk: true,
        kl: true,
        ll: true,
    };
}

/// The bracketed 4×4 matrix over the `(k,k), (k,l), (l,k), (l,l)` sector,
/// without prefactor.
pub fn pkl_bracket(a: f64, b: C64, c: f64, tags: PklTags) -> ComplexMatrix {
    let t = |on: bool| if on { ONE } else { ZERO };
    let (tkk, tkl, tll) = (t(tags.kk), t(tags.kl), t(tags.ll));
    let (ia, ib, ic) = (I * a, I * b, I * c);
    let ibc = I * b.conj();
    linalg::from_rows(
        4,
        4,
        &[
            tkk, ia, ib, tkl, //
            -ia, tkk, tkl, -ib, //
            -ibc, tkl, tll, -ic, //
            tkl, ibc, ic, tll,
        ],
    )
    .expect("4x4 entries are finite")
}

/// Prefactor relating [`pkl_bracket`] to the Choi principal submatrix scaled
/// by `d_S`.
pub const PKL_PREFACTOR: f64 = 0.5;

/// Inputs `(a, b, c)` and tags of the sector `(k, l)` for a given `A`.
pub fn pkl_parameters(
    d: &BlockDecomposition,
    k: usize,
    l: usize,
    a_op: &ComplexMatrix,
) -> (f64, C64, f64, PklTags) {
    let on = |i, j| d.tag(i, j) == TraceTag::One;
    let tr = |i, j| {
        if on(i, j) {
            (a_op * d.bath_op(i, j)).trace()
        } else {
            ZERO
        }
    };
    let tags = PklTags {
        kk: on(k, k),
        kl: on(k, l),
        ll: on(l, l),
    };
    (tr(k, k).re, tr(k, l), tr(l, l).re, tags)
}

/// Closed-form `d_S · Choi` restricted to the `(k,l)` sector for the induced
/// map of `d` under `adv`.
pub fn principal_submatrix_pkl(
    d: &BlockDecomposition,
    adv: &AdversarialUnitary,
) -> Result<ComplexMatrix> {
    d.require_sl()?;
    if adv.a.nrows() != d.db() || adv.k.max(adv.l) >= d.ds() {
        return Err(Error::Dimension(
            "adversarial unitary does not fit the state".into(),
        ));
    }
    let (a, b, c, tags) = pkl_parameters(d, adv.k, adv.l, &adv.a);
    Ok(pkl_bracket(a, b, c, tags).scale(PKL_PREFACTOR))
}

/// `d_S · Choi` of `map` over the `(k,l)` sector, with inputs and outputs taken
/// in the system basis `basis`.
pub fn choi_principal_submatrix(
    map: &OperatorSumMap,
    basis: &ComplexMatrix,
    k: usize,
    l: usize,
) -> Result<ComplexMatrix> {
    let idx = [(k, k), (k, l), (l, k), (l, l)];
    let v = |i: usize| basis.column(i).into_owned();
    let mut out = ComplexMatrix::zeros(4, 4);
    for (r, &(i, p)) in idx.iter().enumerate() {
        for (s, &(j, q)) in idx.iter().enumerate() {
            let y = crate::maps::apply_map(map, &outer(&v(i), &v(j)))?;
            out[(r, s)] = v(p).dotc(&(&y * v(q)));
        }
    }
    Ok(out)
}

fn hermitian_eigs(m: &ComplexMatrix) -> Vec<f64> {
    let mut e = spectral_decompose(m)
        .expect("small Hermitian eigenproblem")
        .eigenvalues;
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

fn sub2(m: &ComplexMatrix, r: usize, s: usize) -> ComplexMatrix {
    let idx = [r, s];
    ComplexMatrix::from_fn(2, 2, |x, y| m[(idx[x], idx[y])])
}

/// Numeric versus closed-form eigenvalues of a 2×2 sector, descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorCheck {
    pub numeric: [f64; 2],
    pub closed_form: [f64; 2],
    pub max_error: f64,
}

impl SectorCheck {
    fn new(m: &ComplexMatrix, closed: [f64; 2]) -> Self {
        let e = hermitian_eigs(m);
        let numeric = [e[0], e[1]];
        let max_error = (numeric[0] - closed[0])
            .abs()
            .max((numeric[1] - closed[1]).abs());
        Self {
            numeric,
            closed_form: closed,
            max_error,
        }
    }
}

/// The rotated sector when all three tags are one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotatedSectorReport {
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
    /// `1 ± √(1+|β|²)`.
    pub e14: SectorCheck,
    /// `1 ± √(1+|γ|²)`.
    pub e23: SectorCheck,
    /// Measured against `±|δ|`.
    pub e24: SectorCheck,
    /// The printed `±|α|²`, recorded and never asserted.
    pub e24_printed: [f64; 2],
    /// Whether the printed form happens to match the numeric spectrum.
    pub e24_printed_matches: bool,
}

/// Sector with a vanishing diagonal bath block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegenerateSectorReport {
    /// Rows/columns 2 and 4 of the bracket divided by 4, against
    /// `(1 ± √(1+4|b|²))/8`; only when exactly one diagonal tag is one.
    pub mixed: Option<SectorCheck>,
    /// Rows/columns 2 and 4 of the bracket, against `±|b|`; only when both
    /// diagonal tags vanish.
    pub both_zero: Option<SectorCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmatrixReport {
    pub a: f64,
    pub b: C64,
    pub c: f64,
    pub tags: PklTags,
    pub rotated: Option<RotatedSectorReport>,
    pub degenerate: Option<DegenerateSectorReport>,
}

impl SubmatrixReport {
    /// Worst disagreement among the asserted closed forms.
    pub fn max_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        if let Some(r) = &self.rotated {
            worst = worst
                .max(r.e14.max_error)
                .max(r.e23.max_error)
                .max(r.e24.max_error);
        }
        if let Some(d) = &self.degenerate {
            for s in [&d.mixed, &d.both_zero].into_iter().flatten() {
                worst = worst.max(s.max_error);
            }
        }
        worst
    }
}

/// `Q = (I + iσ_y)/√2`.
fn q_rotation() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    linalg::from_rows(
        2,
        2,
        &[
            C64::new(h, 0.0),
            C64::new(h, 0.0),
            C64::new(-h, 0.0),
            C64::new(h, 0.0),
        ],
    )
    .expect("2x2")
}

pub fn submatrix_eig_checks(a: f64, b: C64, c: f64, tags: PklTags) -> SubmatrixReport {
    let p = pkl_bracket(a, b, c, tags);
    let rotated = (tags == PklTags::ALL_ONE).then(|| {
        // Reorder to (1,4,3,2), then rotate each 2×2 half by Q.
        let order = [0, 3, 2, 1];
        let reordered = ComplexMatrix::from_fn(4, 4, |r, s| p[(order[r], order[s])]);
        let q = q_rotation();
        let mut qq = ComplexMatrix::zeros(4, 4);
        qq.view_mut((0, 0), (2, 2)).copy_from(&q);
        qq.view_mut((2, 2), (2, 2)).copy_from(&q);
        let pp = &qq * reordered * qq.adjoint();

        let bc = b.conj();
        let ac = C64::new(a, 0.0);
        let cc = C64::new(c, 0.0);
        let alpha = (ac + b + bc + cc) * 0.5;
        let beta = (ac + bc - b - cc) * 0.5;
        let gamma = (cc - b + bc - ac) * 0.5;
        let delta = (bc - ac + b - cc) * 0.5;
        let plus_minus = |x: f64| [1.0 + (1.0 + x * x).sqrt(), 1.0 - (1.0 + x * x).sqrt()];
        let e24 = SectorCheck::new(&sub2(&pp, 1, 3), [delta.norm(), -delta.norm()]);
        let printed = [alpha.norm_sqr(), -alpha.norm_sqr()];
        let printed_matches = (e24.numeric[0] - printed[0]).abs() <= 1e-10
            && (e24.numeric[1] - printed[1]).abs() <= 1e-10;
        RotatedSectorReport {
            alpha,
            beta,
            gamma,
            delta,
            e14: SectorCheck::new(&sub2(&pp, 0, 3), plus_minus(beta.norm())),
            e23: SectorCheck::new(&sub2(&pp, 1, 2), plus_minus(gamma.norm())),
            e24,
            e24_printed: printed,
            e24_printed_matches: printed_matches,
        }
    });
    let degenerate = (!tags.kk || !tags.ll).then(|| {
        let s = sub2(&p, 1, 3);
        let r = (1.0 + 4.0 * b.norm_sqr()).sqrt();
        DegenerateSectorReport {
            mixed: (tags.kk != tags.ll)
                .then(|| SectorCheck::new(&s.unscale(4.0), [(1.0 + r) / 8.0, (1.0 - r) / 8.0])),
            both_zero: (!tags.kk && !tags.ll).then(|| SectorCheck::new(&s, [b.norm(), -b.norm()])),
        }
    });
    SubmatrixReport {
        a,
        b,
        c,
        tags,
        rotated,
        degenerate,
    }
}

/// A Hermitian unitary `A` with `Tr[AX] ≠ 0`, or `None` when `X` vanishes.
pub fn lemma_a_witness(x: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = x.nrows();
    if x.norm() <= WITNESS_ZERO {
        return None;
    }
    if x.trace().norm() > WITNESS_TRACE {
        return Some(identity(n));
    }
    let re = (x + x.adjoint()).scale(0.5);
    let im = (x - x.adjoint()) * C64::new(0.0, -0.5);
    let mut best: Option<(f64, DVector<C64>)> = None;
    for h in [re, im] {
        let spec = spectral_decompose(&h).ok()?;
        for k in 0..n {
            let v = spec.vector(k);
            let score = v.dotc(&(x * &v)).norm();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, v));
            }
        }
    }
    let (_, psi) = best?;
    reflection(&psi).ok()
}

/// How a certificate's unitary was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    Witness,
    RandomReflection,
    HaarFallback,
}

/// A stored `(state, unitary, Choi eigenvalue)` triple witnessing non-CP dynamics.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub state_label: String,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    /// Joint unitary in computational coordinates.
    pub unitary: ComplexMatrix,
    pub min_choi_eigenvalue: f64,
    /// Sector in the declared basis; `None` for Haar fallback draws.
    pub pair: Option<(usize, usize)>,
    /// Eigenvalues of `d_S · Choi` over the sector, descending.
    pub submatrix_eigenvalues: Vec<f64>,
    pub attempts: usize,
    pub strategy: SearchStrategy,
}

/// Full result of a violation search.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub certificate: Option<Certificate>,
    pub attempts: usize,
    /// Draws with smallest Choi eigenvalue inside `(-VIOLATION_TOL, -CP_TOL)`.
    pub marginal: usize,
    pub lowest_eigenvalue: f64,
}

/// Smallest Choi eigenvalue of the map induced on `state` by `u` (computational frame).
pub fn induced_min_eigenvalue(d: &BlockDecomposition, u: &ComplexMatrix) -> Result<f64> {
    min_choi_eigenvalue(&induced_map(d, u)?)
}

/// Rebuilds the induced map from the stored unitary.
pub fn replay_certificate(state: &BipartiteState, cert: &Certificate) -> Result<f64> {
    induced_min_eigenvalue(&decompose(state), &cert.unitary)
}

struct Candidate {
    u: ComplexMatrix,
    pair: Option<(usize, usize)>,
    strategy: SearchStrategy,
}

fn witness_candidates(d: &BlockDecomposition) -> Vec<(usize, usize, ComplexMatrix)> {
    let ds = d.ds();
    let mut out = Vec::new();
    for k in 0..ds {
        for l in (k + 1)..ds {
            if d.tag(k, l) != TraceTag::One {
                continue;
            }
            let (pkk, pkl, plk, pll) = (
                d.bath_op(k, k),
                d.bath_op(k, l),
                d.bath_op(l, k),
                d.bath_op(l, l),
            );
            let mut xs = Vec::new();
            if d.tag(k, k) == TraceTag::One && d.tag(l, l) == TraceTag::One {
                xs.push((pkl + plk - pkk - pll).scale(0.5));
                xs.push(pkk - pll);
                xs.push((pkl - plk) * C64::new(0.0, -0.5));
            } else {
                xs.push(pkl.clone());
            }
            for x in xs {
                if let Some(a) = lemma_a_witness(&x) {
                    out.push((k, l, a));
                }
            }
        }
    }
    out
}

/// Contrapositive search for a non-CP induced map. Witness-built `A` for every
/// coupled sector first, then random reflections swept over all sectors, then
/// Haar-random joint unitaries once half the budget is spent.
pub fn search_cp_violation(
    state: &BipartiteState,
    budget: usize,
    rng: &mut RandomSource,
) -> Result<SearchOutcome> {
    let d = decompose(state);
    d.require_sl()?;
    let (ds, db) = (d.ds(), d.db());
    let pairs: Vec<(usize, usize)> = (0..ds)
        .flat_map(|k| ((k + 1)..ds).map(move |l| (k, l)))
        .collect();
    let witnesses = witness_candidates(&d);
    let mut outcome = SearchOutcome {
        certificate: None,
        attempts: 0,
        marginal: 0,
        lowest_eigenvalue: f64::INFINITY,
    };
    let mut witness_iter = witnesses.into_iter();
    let mut sweep: Vec<(usize, usize)> = Vec::new();
    let mut reflection_a: Option<ComplexMatrix> = None;
    while outcome.attempts < budget {
        let cand = if let Some((k, l, a)) = witness_iter.next() {
            let adv = adversarial_unitary(k, l, ds, ASpec::Explicit(a), rng)?;
            Candidate {
                u: adv.in_frame(d.basis()),
                pair: Some((k, l)),
                strategy: SearchStrategy::Witness,
            }
        } else if 2 * outcome.attempts < budget && !pairs.is_empty() {
            if sweep.is_empty() {
                sweep = pairs.iter().rev().copied().collect();
                reflection_a = Some(reflection(&rng.unit_vector(db))?);
            }
            let (k, l) = sweep.pop().expect("sweep refilled above");
            let a = reflection_a.clone().expect("set with the sweep");
            let adv = adversarial_unitary(k, l, ds, ASpec::Explicit(a), rng)?;
            Candidate {
                u: adv.in_frame(d.basis()),
                pair: Some((k, l)),
                strategy: SearchStrategy::RandomReflection,
            }
        } else {
            Candidate {
                u: haar_unitary(ds * db, rng),
                pair: None,
                strategy: SearchStrategy::HaarFallback,
            }
        };
        outcome.attempts += 1;
        let map = induced_map(&d, &cand.u)?;
        let min = min_choi_eigenvalue(&map)?;
        outcome.lowest_eigenvalue = outcome.lowest_eigenvalue.min(min);
        if min < -VIOLATION_TOL {
            let submatrix_eigenvalues = match cand.pair {
                Some((k, l)) => hermitian_eigs(&choi_principal_submatrix(&map, d.basis(), k, l)?),
                None => Vec::new(),
            };
            outcome.certificate = Some(Certificate {
                state_label: String::new(),
                seed: Some(rng.seed()),
                stream: Some(rng.stream()),
                unitary: cand.u,
                min_choi_eigenvalue: min,
                pair: cand.pair,
                submatrix_eigenvalues,
                attempts: outcome.attempts,
                strategy: cand.strategy,
            });
            return Ok(outcome);
        }
        if min < -CP_TOL {
            outcome.marginal += 1;
        }
    }
    Ok(outcome)
}

pub fn find_cp_violation(
    state: &BipartiteState,
    budget: usize,
    rng: &mut RandomSource,
) -> Result<Option<Certificate>> {
    Ok(search_cp_violation(state, budget, rng)?.certificate)
}

fn bloch_projector(theta: f64, phi: f64) -> ComplexMatrix {
    let (s, c) = (theta.sin(), theta.cos());
    let n = [s * phi.cos(), s * phi.sin(), c];
    let half = 0.5;
    linalg::from_rows(
        2,
        2,
        &[
            C64::new(half * (1.0 + n[2]), 0.0),
            C64::new(half * n[0], -half * n[1]),
            C64::new(half * n[0], half * n[1]),
            C64::new(half * (1.0 - n[2]), 0.0),
        ],
    )
    .expect("finite")
}

/// `Σ_k p_k S(ρ_B|k)` for the measurement along the Bloch direction `(θ, φ)`.
fn conditional_entropy(blocks: &[[ComplexMatrix; 2]; 2], theta: f64, phi: f64) -> f64 {
    let p0 = bloch_projector(theta, phi);
    let p1 = identity(2) - &p0;
    let mut total = 0.0;
    for proj in [p0, p1] {
        // Tr_S[(Π ⊗ I) ρ] = Σ_ij Π_ji B_ij
        let mut cond = blocks[0][0].scale(0.0);
        for i in 0..2 {
            for j in 0..2 {
                cond += &blocks[i][j] * proj[(j, i)];
            }
        }
        let cond = (&cond + cond.adjoint()).scale(0.5);
        let p = cond.trace().re;
        if p > 1e-15 {
            total += p * entropy_bits(&cond.unscale(p)).unwrap_or(0.0);
        }
    }
    total
}

/// Discord (bits) of a qubit-system state with respect to projective
/// measurements on the system: `S(ρ_S) − S(ρ) + min Σ_k p_k S(ρ_B|k)`,
/// searched on a `grid × grid` Bloch-hemisphere grid then refined by pattern
/// search. Clipped at zero.
pub fn discord_oracle(state: &BipartiteState, grid: usize, refine_iters: usize) -> Result<f64> {
    if state.ds() != 2 {
        return Err(Error::InvalidParameter(format!(
            "discord oracle needs a qubit system, got d_s = {}",
            state.ds()
        )));
    }
    if grid < 16 {
        return Err(Error::InvalidParameter(format!(
            "grid must be at least 16, got {grid}"
        )));
    }
    let db = state.db();
    let rho = state.matrix();
    let blocks = [
        [
            linalg::bath_block(rho, db, 0, 0),
            linalg::bath_block(rho, db, 0, 1),
        ],
        [
            linalg::bath_block(rho, db, 1, 0),
            linalg::bath_block(rho, db, 1, 1),
        ],
    ];
    let base = entropy_bits(&state.reduced_system())? - entropy_bits(rho)?;
    let f = |t: f64, p: f64| conditional_entropy(&blocks, t, p);

    let pi = std::f64::consts::PI;
    let (dt, dp) = (0.5 * pi / (grid - 1) as f64, 2.0 * pi / grid as f64);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..grid {
        let t = dt * i as f64;
        for j in 0..grid {
            let p = dp * j as f64;
            let v = f(t, p);
            if v < best.0 {
                best = (v, t, p);
            }
        }
    }
    let (mut v, mut t, mut p) = best;
    let mut step = dt.max(dp);
    for _ in 0..refine_iters {
        let mut moved = false;
        for (a, b) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let cand = f(t + a, p + b);
            if cand < v {
                (v, t, p) = (cand, t + a, p + b);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok((base + v).max(0.0))
}

/// Worst errors of the `(k,l)`-sector algebra over random draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    pub draws: usize,
    /// Formula versus Choi extraction, random SL states and adversarial `U`.
    pub max_pkl_error: f64,
    pub max_e14_error: f64,
    pub max_e23_error: f64,
    /// Against `±|δ|`.
    pub max_e24_error: f64,
    pub max_mixed_tag_error: f64,
    pub max_zero_tag_error: f64,
    /// Draws where the printed `±|α|²` disagrees with the numeric `(2,4)` spectrum.
    pub e24_printed_mismatches: usize,
}

/// Audits the sector algebra on `draws` random states (families and dims
/// cycled) and random `(a, b, c)`.
pub fn pkl_algebra_check(seed: u64, draws: usize) -> Result<AlgebraReport> {
    const STREAM_BASE: u64 = 0xA16E_B4A0 << 32;
    let kinds = [
        StateKind::Product,
        StateKind::Cq,
        StateKind::SlGeneric,
        StateKind::SeparableDiscordant,
    ];
    let dims = [(2, 2), (2, 3), (3, 2), (3, 3)];
    let mut rep = AlgebraReport {
        draws,
        max_pkl_error: 0.0,
        max_e14_error: 0.0,
        max_e23_error: 0.0,
        max_e24_error: 0.0,
        max_mixed_tag_error: 0.0,
        max_zero_tag_error: 0.0,
        e24_printed_mismatches: 0,
    };
    for n in 0..draws {
        let mut rng = RandomSource::new(seed, STREAM_BASE | n as u64);
        let (ds, db) = dims[n % dims.len()];
        let kind = kinds[(n / dims.len()) % kinds.len()];
        let state = generate_state(kind, &StateParams::new(ds, db), &mut rng)?;
        let d = decompose(&state);
        let k = rng.below(ds);
        let l = (k + 1 + rng.below(ds - 1)) % ds;
        let adv = adversarial_unitary(k, l, ds, ASpec::RandomReflection(db), &mut rng)?;
        let formula = principal_submatrix_pkl(&d, &adv)?;
        let map = induced_map(&d, &adv.in_frame(d.basis()))?;
        let direct = choi_principal_submatrix(&map, d.basis(), k, l)?;
        rep.max_pkl_error = rep.max_pkl_error.max((formula - direct).norm());

        let mut sym = || 2.0 * rng.uniform() - 1.0;
        let (a, c) = (sym(), sym());
        let b = C64::new(sym(), sym());
        let full = submatrix_eig_checks(a, b, c, PklTags::ALL_ONE);
        let rot = full.rotated.expect("all tags one");
        rep.max_e14_error = rep.max_e14_error.max(rot.e14.max_error);
        rep.max_e23_error = rep.max_e23_error.max(rot.e23.max_error);
        rep.max_e24_error = rep.max_e24_error.max(rot.e24.max_error);
        if !rot.e24_printed_matches {
            rep.e24_printed_mismatches += 1;
        }
        let mixed = submatrix_eig_checks(
            a,
            b,
            0.0,
            PklTags {
                kk: true,
                kl: true,
                ll: false,
            },
        );
        let zero = submatrix_eig_checks(
            0.0,
            b,
            0.0,
            PklTags {
                kk: false,
                kl: true,
                ll: false,
            },
        );
        if let Some(m) = mixed.degenerate.and_then(|x| x.mixed) {
            rep.max_mixed_tag_error = rep.max_mixed_tag_error.max(m.max_error);
        }
        if let Some(z) = zero.degenerate.and_then(|x| x.both_zero) {
            rep.max_zero_tag_error = rep.max_zero_tag_error.max(z.max_error);
        }
    }
    Ok(rep)
}

/// Campaign parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub families: Vec<StateKind>,
    pub dims: Vec<(usize, usize)>,
    pub n_states: usize,
    pub n_unitaries: usize,
    pub budget: usize,
    pub seed: u64,
    pub cp_tol: f64,
    pub violation_tol: f64,
    /// Random draws for the sector-algebra audit; 0 skips it.
    pub algebra_draws: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            families: StateKind::ALL.to_vec(),
            dims: vec![(2, 2)],
            n_states: 20,
            n_unitaries: 10,
            budget: 500,
            seed: 0,
            cp_tol: CP_TOL,
            violation_tol: VIOLATION_TOL,
            algebra_draws: 200,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.families.is_empty() {
            return bad("no families selected".into());
        }
        if self.dims.is_empty() {
            return bad("no dimensions selected".into());
        }
        if self.n_states == 0 || self.budget == 0 {
            return bad("n_states and budget must be positive".into());
        }
        if self.families.iter().any(|f| f.is_classical()) && self.n_unitaries == 0 {
            return bad("sufficiency families need n_unitaries > 0".into());
        }
        if !(self.cp_tol > 0.0 && self.violation_tol >= self.cp_tol) {
            return bad("tolerances must satisfy 0 < cp_tol <= violation_tol".into());
        }
        for &(ds, db) in &self.dims {
            StateParams::new(ds, db).validate()?;
            if self.families.contains(&StateKind::SeparableDiscordant) && (ds < 2 || db < 2) {
                return bad(format!(
                    "separable-discordant needs dims >= 2x2, got {ds}x{db}"
                ));
            }
        }
        if self.families.len() >= 1 << 16 || self.dims.len() >= 1 << 16 || self.n_states >= 1 << 32
        {
            return bad("campaign too large for stream ids".into());
        }
        Ok(())
    }
}

/// Random-stream id of one trial.
pub fn trial_stream(family_idx: usize, dims_idx: usize, state_idx: usize) -> u64 {
    ((family_idx as u64) << 48) | ((dims_idx as u64) << 32) | state_idx as u64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FamilyTally {
    pub tested: usize,
    pub cp_confirmed: usize,
    pub violations_found: usize,
    pub unresolved: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    CpConfirmed,
    ViolationFound,
    Unresolved,
}

/// Per-state record; `anomaly` is set whenever the result contradicts the
/// family's expected side of the equivalence or could not be classified.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub family: String,
    pub dim_s: usize,
    pub dim_b: usize,
    pub state_index: usize,
    pub seed: u64,
    pub stream: u64,
    pub outcome: Outcome,
    /// Smallest Choi eigenvalue seen; `None` if no map was built.
    pub min_choi_eigenvalue: Option<f64>,
    pub attempts: usize,
    pub pair: Option<(usize, usize)>,
    pub anomaly: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub family: String,
    pub tally: FamilyTally,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub config: CampaignConfig,
    pub families: Vec<FamilyReport>,
    pub trials: Vec<TrialRecord>,
    pub anomalies: usize,
    pub algebra: Option<AlgebraReport>,
    /// Run-dependent values; excluded from reproducibility comparisons.
    pub metadata: ReportMetadata,
}

impl VerificationReport {
    pub fn tally(&self, kind: StateKind) -> Option<FamilyTally> {
        self.families
            .iter()
            .find(|f| f.family == kind.name())
            .map(|f| f.tally)
    }
}

fn run_trial(config: &CampaignConfig, fi: usize, di: usize, si: usize) -> TrialRecord {
    let kind = config.families[fi];
    let (ds, db) = config.dims[di];
    let stream = trial_stream(fi, di, si);
    let mut rng = RandomSource::new(config.seed, stream);
    let mut rec = TrialRecord {
        family: kind.name().to_string(),
        dim_s: ds,
        dim_b: db,
        state_index: si,
        seed: config.seed,
        stream,
        outcome: Outcome::Unresolved,
        min_choi_eigenvalue: None,
        attempts: 0,
        pair: None,
        anomaly: None,
    };
    let state = match generate_state(kind, &StateParams::new(ds, db), &mut rng) {
        Ok(s) => s,
        Err(e) => {
            rec.anomaly = Some(format!("generation failed: {e}"));
            return rec;
        }
    };
    let d = decompose(&state);
    if kind.is_classical() {
        let mut lowest = f64::INFINITY;
        for _ in 0..config.n_unitaries {
            let u = haar_unitary(ds * db, &mut rng);
            match induced_min_eigenvalue(&d, &u) {
                Ok(m) => lowest = lowest.min(m),
                Err(e) => {
                    rec.anomaly = Some(format!("induced map failed: {e}"));
                    return rec;
                }
            }
            rec.attempts += 1;
        }
        rec.min_choi_eigenvalue = Some(lowest);
        if lowest >= -config.cp_tol {
            rec.outcome = Outcome::CpConfirmed;
        } else if lowest < -config.violation_tol {
            rec.outcome = Outcome::ViolationFound;
            rec.anomaly = Some("non-CP dynamics from a vanishing-discord state".into());
        } else {
            rec.anomaly = Some("marginal Choi spectrum".into());
        }
        return rec;
    }
    if !d.is_sl() {
        rec.anomaly = Some("non-SL draw; necessity search not applicable".into());
        return rec;
    }
    match search_cp_violation(&state, config.budget, &mut rng) {
        Ok(out) => {
            rec.attempts = out.attempts;
            match out.certificate {
                Some(cert) => {
                    rec.outcome = Outcome::ViolationFound;
                    rec.min_choi_eigenvalue = Some(cert.min_choi_eigenvalue);
                    rec.pair = cert.pair;
                }
                None => {
                    rec.min_choi_eigenvalue = out
                        .lowest_eigenvalue
                        .is_finite()
                        .then_some(out.lowest_eigenvalue);
                    let vqd = is_vqd(&d).map(|v| v.vqd).unwrap_or(false);
                    if vqd && out.marginal == 0 {
                        rec.outcome = Outcome::CpConfirmed;
                    } else {
                        rec.anomaly = Some(format!(
                            "no certificate within budget ({} marginal draws)",
                            out.marginal
                        ));
                    }
                }
            }
        }
        Err(e) => rec.anomaly = Some(format!("search failed: {e}")),
    }
    rec
}

/// Number of worker threads honoring [`THREADS_ENV`].
pub fn campaign_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs the bidirectional campaign. Trials are independent and seeded by
/// `(seed, trial_stream(..))`, so the report does not depend on scheduling.
pub fn monte_carlo_verify(config: &CampaignConfig) -> Result<VerificationReport> {
    config.validate()?;
    let started = Instant::now();
    let started_unix_seconds = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let jobs: Vec<(usize, usize, usize)> = (0..config.families.len())
        .flat_map(|f| {
            (0..config.dims.len()).flat_map(move |d| (0..config.n_states).map(move |s| (f, d, s)))
        })
        .collect();
    let threads = campaign_threads();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(f, d, s)| run_trial(config, f, d, s))
            .collect()
    });

    let mut families = Vec::new();
    for kind in &config.families {
        let mut tally = FamilyTally::default();
        for t in trials.iter().filter(|t| t.family == kind.name()) {
            tally.tested += 1;
            match t.outcome {
                Outcome::CpConfirmed => tally.cp_confirmed += 1,
                Outcome::ViolationFound => tally.violations_found += 1,
                Outcome::Unresolved => tally.unresolved += 1,
            }
        }
        families.push(FamilyReport {
            family: kind.name().to_string(),
            tally,
        });
    }
    let algebra = if config.algebra_draws > 0 {
        Some(pkl_algebra_check(config.seed, config.algebra_draws)?)
    } else {
        None
    };
    let anomalies = trials.iter().filter(|t| t.anomaly.is_some()).count();
    for t in trials.iter().filter(|t| t.anomaly.is_some()) {
        log::warn!(
            "{} {}x{} #{} (seed {}, stream {:#x}): {}",
            t.family,
            t.dim_s,
            t.dim_b,
            t.state_index,
            t.seed,
            t.stream,
            t.anomaly.as_deref().unwrap_or_default()
        );
    }
    Ok(VerificationReport {
        config: config.clone(),
        families,
        trials,
        anomalies,
        algebra,
        metadata: ReportMetadata {
            started_unix_seconds,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            threads,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::choi_matrix;
    use crate::states::{bell_state, StateParams};

    #[test]
    fn adversarial_unitary_basics() {
        let mut rng = RandomSource::new(1, 0);
        let adv = adversarial_unitary(0, 2, 3, ASpec::RandomReflection(2), &mut rng).unwrap();
        assert!(linalg::unitarity_deviation(&adv.u) < 1e-12);
        assert!((&adv.a * &adv.a - identity(2)).norm() < 1e-12);
        assert!(adversarial_unitary(1, 1, 3, ASpec::RandomReflection(2), &mut rng).is_err());
        assert!(adversarial_unitary(0, 3, 3, ASpec::RandomReflection(2), &mut rng).is_err());
        let bad = linalg::diag(&[ONE, C64::new(2.0, 0.0)]);
        assert!(adversarial_unitary(0, 1, 2, ASpec::Explicit(bad), &mut rng).is_err());

        let a = adversarial_unitary(
            0,
            1,
            2,
            ASpec::Reflection(linalg::basis_ket(2, 0)),
            &mut rng,
        )
        .unwrap();
        assert_eq!(&a.a * &a.a, identity(2));
    }

    #[test]
    fn pkl_matches_choi_for_product_state() {
        let mut rng = RandomSource::new(2, 0);
        let s = generate_state(StateKind::Product, &StateParams::new(2, 2), &mut rng).unwrap();
        let d = decompose(&s);
        let adv = adversarial_unitary(0, 1, 2, ASpec::RandomReflection(2), &mut rng).unwrap();
        let (a, b, c, tags) = pkl_parameters(&d, 0, 1, &adv.a);
        assert_eq!(tags, PklTags::ALL_ONE);
        assert!((a - c).abs() < 1e-12 && (b - C64::new(a, 0.0)).norm() < 1e-12);
        let formula = principal_submatrix_pkl(&d, &adv).unwrap();
        let map = induced_map(&d, &adv.in_frame(d.basis())).unwrap();
        let direct = choi_principal_submatrix(&map, d.basis(), 0, 1).unwrap();
        assert!((formula - direct).norm() < 1e-12);
    }

    #[test]
    fn choi_submatrix_extraction_matches_choi_entries() {
        let mut rng = RandomSource::new(3, 0);
        let s = generate_state(StateKind::SlGeneric, &StateParams::new(3, 2), &mut rng).unwrap();
        let d = decompose(&s);
        let map = induced_map(&d, &haar_unitary(6, &mut rng)).unwrap();
        let choi = choi_matrix(&map).matrix.scale(3.0);
        let (k, l) = (0, 2);
        let sub = choi_principal_submatrix(&map, d.basis(), k, l).unwrap();
        let idx = [k * 3 + k, k * 3 + l, l * 3 + k, l * 3 + l];
        for r in 0..4 {
            for c in 0..4 {
                assert!((sub[(r, c)] - choi[(idx[r], idx[c])]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn block_diagonal_pair_has_zero_b() {
        let mut rng = RandomSource::new(4, 0);
        let p0 = linalg::random_density(2, 2, &mut rng).unwrap();
        let p1 = linalg::random_density(2, 2, &mut rng).unwrap();
        let s = crate::states::classical_quantum_state(&[0.4, 0.6], &[p0, p1]).unwrap();
        let d = decompose(&s);
        let adv = adversarial_unitary(0, 1, 2, ASpec::RandomReflection(2), &mut rng).unwrap();
        let (_, b, _, tags) = pkl_parameters(&d, 0, 1, &adv.a);
        assert_eq!(b, ZERO);
        assert!(!tags.kl);
        let formula = principal_submatrix_pkl(&d, &adv).unwrap();
        let map = induced_map(&d, &adv.in_frame(d.basis())).unwrap();
        assert!(
            (formula - choi_principal_submatrix(&map, d.basis(), 0, 1).unwrap()).norm() < 1e-12
        );
    }

    #[test]
    fn pkl_requires_sl() {
        let mut rng = RandomSource::new(5, 0);
        let adv = adversarial_unitary(0, 1, 2, ASpec::RandomReflection(2), &mut rng).unwrap();
        assert!(matches!(
            principal_submatrix_pkl(&decompose(&bell_state()), &adv),
            Err(Error::NotSl(..))
        ));
    }

    #[test]
    fn eig_checks_simple_case() {
        let r = submatrix_eig_checks(0.3, ZERO, 0.3, PklTags::ALL_ONE);
        let rot = r.rotated.as_ref().unwrap();
        assert!(rot.beta.norm() < 1e-15 && rot.gamma.norm() < 1e-15);
        assert!((rot.e14.numeric[0] - 2.0).abs() < 1e-12 && rot.e14.numeric[1].abs() < 1e-12);
        assert!(r.degenerate.is_none());
        assert!(r.max_error() < 1e-10);
    }

    #[test]
    fn eig_checks_degenerate_tags() {
        let b = C64::new(0.3, -0.4);
        let mixed = submatrix_eig_checks(
            0.2,
            b,
            0.0,
            PklTags {
                kk: true,
                kl: true,
                ll: false,
            },
        );
        assert!(mixed.rotated.is_none());
        let m = mixed.degenerate.as_ref().unwrap().mixed.as_ref().unwrap();
        assert!(m.max_error < 1e-12);
        let zero = submatrix_eig_checks(
            0.0,
            b,
            0.0,
            PklTags {
                kk: false,
                kl: true,
                ll: false,
            },
        );
        let z = zero
            .degenerate
            .as_ref()
            .unwrap()
            .both_zero
            .as_ref()
            .unwrap();
        assert!((z.numeric[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn witness_examples() {
        assert!(lemma_a_witness(&ComplexMatrix::zeros(2, 2)).is_none());
        let x = linalg::from_rows(2, 2, &[ZERO, ONE, ONE, ZERO]).unwrap();
        let a = lemma_a_witness(&x).unwrap();
        assert!((&a * &a - identity(2)).norm() < 1e-12);
        assert!((&a * &x).trace().norm() > 1.0);
        let a = lemma_a_witness(&identity(3)).unwrap();
        assert_eq!(a, identity(3));
    }

    #[test]
    fn search_certifies_discordant_and_not_cq() {
        let mut rng = RandomSource::new(6, 0);
        for kind in [StateKind::SeparableDiscordant, StateKind::SlGeneric] {
            let s = generate_state(kind, &StateParams::new(2, 2), &mut rng).unwrap();
            let cert = find_cp_violation(&s, 500, &mut rng)
                .unwrap()
                .expect("certificate");
            assert!(cert.min_choi_eigenvalue < -VIOLATION_TOL);
            let replay = replay_certificate(&s, &cert).unwrap();
            assert!((replay - cert.min_choi_eigenvalue).abs() < 1e-12);
            assert_eq!(cert.submatrix_eigenvalues.len(), 4);
        }
        let s = generate_state(StateKind::Cq, &StateParams::new(3, 2), &mut rng).unwrap();
        let out = search_cp_violation(&s, 60, &mut rng).unwrap();
        assert!(out.certificate.is_none());
        assert_eq!(out.attempts, 60);
        assert!(find_cp_violation(&bell_state(), 10, &mut rng).is_err());
    }

    #[test]
    fn discord_oracle_examples() {
        assert!((discord_oracle(&bell_state(), 256, 60).unwrap() - 1.0).abs() < 1e-3);
        let mut rng = RandomSource::new(7, 0);
        for kind in [StateKind::Product, StateKind::Cq] {
            let s = generate_state(kind, &StateParams::new(2, 3), &mut rng).unwrap();
            assert!(discord_oracle(&s, 32, 80).unwrap() <= 1e-6);
        }
        let s = generate_state(
            StateKind::SeparableDiscordant,
            &StateParams::new(2, 2),
            &mut rng,
        )
        .unwrap();
        assert!(discord_oracle(&s, 32, 80).unwrap() > 0.01);
        let s = generate_state(StateKind::Product, &StateParams::new(3, 2), &mut rng).unwrap();
        assert!(discord_oracle(&s, 32, 10).is_err());
        assert!(discord_oracle(&bell_state(), 8, 10).is_err());
    }

    #[test]
    fn campaign_tallies_and_determinism() {
        let config = CampaignConfig {
            families: StateKind::ALL.to_vec(),
            dims: vec![(2, 2), (2, 3)],
            n_states: 4,
            n_unitaries: 3,
            budget: 100,
            seed: 11,
            ..CampaignConfig::default()
        };
        let r1 = monte_carlo_verify(&config).unwrap();
        let r2 = monte_carlo_verify(&config).unwrap();
        assert_eq!(r1.trials, r2.trials);
        assert_eq!(r1.families, r2.families);
        assert_eq!(r1.algebra, r2.algebra);
        let alg = r1.algebra.as_ref().unwrap();
        assert!(alg.max_pkl_error < 1e-10 && alg.max_e24_error < 1e-10);
        for f in &r1.families {
            let t = f.tally;
            assert_eq!(t.tested, 8);
            assert_eq!(t.cp_confirmed + t.violations_found + t.unresolved, t.tested);
        }
        assert_eq!(r1.tally(StateKind::Cq).unwrap().violations_found, 0);
        assert_eq!(
            r1.tally(StateKind::SeparableDiscordant)
                .unwrap()
                .violations_found,
            8
        );

        let bad = CampaignConfig {
            families: vec![],
            ..CampaignConfig::default()
        };
        assert!(monte_carlo_verify(&bad).is_err());
    }
}
