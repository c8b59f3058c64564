use crate::files::{encode, load_state, load_unitary, EncodedMatrix};
use crate::Failure;
use discord_gate::linalg::RandomSource;
use discord_gate::maps::{induced_map, min_choi_eigenvalue};
use discord_gate::states::{
    decompose, find_blocks, find_cq_basis, is_vqd, BipartiteState, StructuralOutcome,
};
use discord_gate::verify::{discord_oracle, search_cp_violation, Certificate, SearchStrategy};
use serde::Serialize;
use std::path::PathBuf;

pub const DISCORD_GRID: usize = 64;
pub const DISCORD_REFINE: usize = 80;

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub state: PathBuf,
    pub unitaries: Vec<PathBuf>,
    pub tol: f64,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitaryResult {
    pub index: usize,
    /// `None` when the state is not SL and no induced map exists.
    pub choi_min_eig: Option<f64>,
    pub is_cp: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateRecord {
    pub pair: Option<(usize, usize)>,
    pub min_choi_eigenvalue: f64,
    pub submatrix_eigenvalues: Vec<f64>,
    pub attempts: usize,
    pub strategy: SearchStrategy,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub unitary: EncodedMatrix,
}

impl From<&Certificate> for CertificateRecord {
    fn from(c: &Certificate) -> Self {
        Self {
            pair: c.pair,
            min_choi_eigenvalue: c.min_choi_eigenvalue,
            submatrix_eigenvalues: c.submatrix_eigenvalues.clone(),
            attempts: c.attempts,
            strategy: c.strategy,
            seed: c.seed,
            stream: c.stream,
            unitary: encode(&c.unitary),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchSummary {
    pub budget: usize,
    pub attempts: usize,
    pub marginal: usize,
    pub lowest_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisVerdict {
    pub label: Option<String>,
    pub dim_s: usize,
    pub dim_b: usize,
    pub sl: bool,
    /// First traceless nonzero bath block when not SL.
    pub non_sl_pair: Option<(usize, usize)>,
    pub blocks: Option<Vec<Vec<usize>>>,
    pub structural_cp: Option<bool>,
    pub structural_failure: Option<String>,
    pub vqd: Option<bool>,
    pub cq_basis_found: bool,
    pub discord_estimate: Option<f64>,
    pub unitaries: Vec<UnitaryResult>,
    pub certificates: Vec<CertificateRecord>,
    pub search: Option<SearchSummary>,
    /// Structural CP form and the classical-projection test agree.
    pub consistent: bool,
    pub anomalies: Vec<String>,
}

pub fn analyze_state(
    state: &BipartiteState,
    label: Option<String>,
    unitaries: &[discord_gate::ComplexMatrix],
    opts: &AnalyzeOptions,
) -> Result<AnalysisVerdict, Failure> {
    let internal = |e: discord_gate::Error| Failure::Internal(e.to_string());
    let d = decompose(state);
    let mut v = AnalysisVerdict {
        label,
        dim_s: state.ds(),
        dim_b: state.db(),
        sl: d.is_sl(),
        non_sl_pair: d.first_non_sl(),
        blocks: None,
        structural_cp: None,
        structural_failure: None,
        vqd: None,
        cq_basis_found: find_cq_basis(state).is_some(),
        discord_estimate: None,
        unitaries: Vec::new(),
        certificates: Vec::new(),
        search: None,
        consistent: true,
        anomalies: Vec::new(),
    };
    if state.ds() == 2 {
        v.discord_estimate =
            Some(discord_oracle(state, DISCORD_GRID, DISCORD_REFINE).map_err(internal)?);
    }
    if !v.sl {
        v.unitaries = (0..unitaries.len())
            .map(|index| UnitaryResult {
                index,
                choi_min_eig: None,
                is_cp: None,
            })
            .collect();
        return Ok(v);
    }

    v.blocks = Some(find_blocks(&d).map_err(internal)?.index_sets());
    let vqd = is_vqd(&d).map_err(internal)?;
    v.structural_cp = Some(vqd.structural.is_cp());
    if let StructuralOutcome::Failure(f) = &vqd.structural {
        v.structural_failure = Some(f.to_string());
    }
    v.vqd = Some(vqd.vqd);
    v.consistent = vqd.vqd == vqd.structural.is_cp();
    if !v.consistent {
        v.anomalies
            .push("structural CP form and classical-projection test disagree".into());
    }

    for (index, u) in unitaries.iter().enumerate() {
        let min = min_choi_eigenvalue(&induced_map(&d, u).map_err(internal)?).map_err(internal)?;
        let cp = min >= -opts.tol;
        if vqd.vqd && !cp {
            v.anomalies.push(format!(
                "unitary {index}: non-CP dynamics from a vanishing-discord state"
            ));
        }
        v.unitaries.push(UnitaryResult {
            index,
            choi_min_eig: Some(min),
            is_cp: Some(cp),
        });
    }

    if !vqd.vqd {
        let mut rng = RandomSource::new(opts.seed, 0);
        let out = search_cp_violation(state, opts.budget, &mut rng).map_err(internal)?;
        v.search = Some(SearchSummary {
            budget: opts.budget,
            attempts: out.attempts,
            marginal: out.marginal,
            lowest_eigenvalue: out
                .lowest_eigenvalue
                .is_finite()
                .then_some(out.lowest_eigenvalue),
        });
        match &out.certificate {
            Some(c) => v.certificates.push(c.into()),
            None => v
                .anomalies
                .push("discordant state without a non-CP certificate".into()),
        }
    }
    Ok(v)
}

pub fn run(opts: &AnalyzeOptions) -> Result<AnalysisVerdict, Failure> {
    let (file, state) = load_state(&opts.state)?;
    let n = state.ds() * state.db();
    let unitaries = opts
        .unitaries
        .iter()
        .map(|p| load_unitary(p, n))
        .collect::<Result<Vec<_>, _>>()?;
    let label = file.metadata.and_then(|m| m.label);
    analyze_state(&state, label, &unitaries, opts)
}

fn opt<T: std::fmt::Display>(x: &Option<T>) -> String {
    x.as_ref().map_or("n/a".into(), |v| v.to_string())
}

pub fn human_readable(v: &AnalysisVerdict) -> String {
    let mut out = String::new();
    let mut line = |k: &str, val: String| out.push_str(&format!("{k:<16} {val}\n"));
    line("state", opt(&v.label));
    line("dims", format!("{}x{}", v.dim_s, v.dim_b));
    line("sl", v.sl.to_string());
    if let Some((i, j)) = v.non_sl_pair {
        line(
            "non-sl block",
            format!("({i}, {j}); block analysis skipped"),
        );
    }
    if let Some(b) = &v.blocks {
        line("blocks", format!("{b:?}"));
    }
    line("structural cp", opt(&v.structural_cp));
    if let Some(f) = &v.structural_failure {
        line("failure", f.clone());
    }
    line("vqd", opt(&v.vqd));
    line("cq basis found", v.cq_basis_found.to_string());
    line(
        "discord",
        v.discord_estimate
            .map_or("n/a".into(), |d| format!("{d:.6e}")),
    );
    for u in &v.unitaries {
        line(
            &format!("unitary {}", u.index),
            match u.choi_min_eig {
                Some(m) => format!("min choi eigenvalue {m:.6e} (cp: {})", opt(&u.is_cp)),
                None => "no induced map (state not SL)".into(),
            },
        );
    }
    if let Some(s) = &v.search {
        line("search", format!("{} of {} attempts", s.attempts, s.budget));
    }
    for c in &v.certificates {
        line(
            "certificate",
            format!(
                "min choi eigenvalue {:.6e}, sector {}, {:?}",
                c.min_choi_eigenvalue,
                c.pair.map_or("n/a".into(), |(k, l)| format!("({k}, {l})")),
                c.strategy
            ),
        );
    }
    for a in &v.anomalies {
        line("anomaly", a.clone());
    }
    out
}
