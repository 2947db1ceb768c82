//! The state family `|ψ_N⟩ = C(N+M−1, N)^{−1/2} Σ_{|n|=N} |n, n⟩` over an
//! idler and a signal register, its pair-creation recursion, and the
//! single-photon-loss identity `â_{S_j}|ψ_N⟩ = √(N/(N+M−1)) â†_{I_j}|ψ_{N−1}⟩`.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::combinatorics::{binomial, compositions, count_compositions, BigCount};
use crate::error::{Error, Result, AMPLITUDE_CAP};
use crate::fock_core::{
    apply_annihilate, apply_create, scale_add, ModeVector, Register, RegisterSet, SparseState,
};

/// `N` photons over two registers of `M` modes each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PsiParams {
    photons: usize,
    modes: usize,
}

impl PsiParams {
    pub fn new(photons: usize, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::ZeroModes);
        }
        Ok(PsiParams { photons, modes })
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Same mode count with a different photon number.
    pub fn with_photons(&self, photons: usize) -> PsiParams {
        PsiParams { photons, ..*self }
    }

    /// Number of terms in `|ψ_N⟩`.
    pub fn term_count(&self) -> BigCount {
        count_compositions(self.photons, self.modes).expect("modes ≥ 1")
    }

    /// Fails with [`Error::CapExceeded`] when `|ψ_N⟩` cannot be materialized.
    pub fn check_cap(&self) -> Result<usize> {
        let count = self.term_count();
        match count.to_usize() {
            Some(n) if n <= AMPLITUDE_CAP => Ok(n),
            _ => Err(Error::CapExceeded {
                what: "|psi_N>",
                photons: self.photons,
                modes: self.modes,
                required: count.to_string(),
            }),
        }
    }
}

/// `C_N = N!·(N+M−1)!/(M−1)!`, the squared norm of `(Â†)^N|vac⟩`.
pub fn normalization_c(params: PsiParams) -> BigCount {
    let n = params.photons as u64;
    let m = params.modes as u64;
    // N!·(N+M−1)!/(M−1)! = (N!)² · C(N+M−1, N)
    let mut fact = BigCount::one();
    for i in 2..=n {
        fact = fact * BigCount::from(i);
    }
    fact.clone() * fact * binomial(n + m - 1, n)
}

/// Builds `|ψ_N⟩` term by term from the composition set.
pub fn build_psi_direct(params: PsiParams) -> Result<SparseState> {
    let count = params.check_cap()?;
    let amp = Complex64::new((count as f64).sqrt().recip(), 0.0);
    let vectors: Vec<ModeVector> = compositions(params.photons, params.modes)?.collect();
    SparseState::from_terms(
        RegisterSet::IdlerSignal,
        vectors.iter().map(|v| (vec![v, v], amp)),
    )
}

/// `Â† = Σᵢ â†_{S_i} â†_{I_i}` applied to a state holding both idler and signal registers.
pub fn pair_create(state: &SparseState) -> Result<SparseState> {
    let one = Complex64::new(1.0, 0.0);
    let mut pieces = Vec::with_capacity(state.modes());
    for i in 0..state.modes() {
        let idler = apply_create(state, Register::Idler, i)?;
        pieces.push(apply_create(&idler, Register::Signal, i)?);
    }
    let terms: Vec<(Complex64, &SparseState)> = pieces.iter().map(|p| (one, p)).collect();
    scale_add(&terms)
}

/// `|ψ_0⟩, …, |ψ_N⟩` generated from vacuum by
/// `|ψ_n⟩ = Â†|ψ_{n−1}⟩ / (√n·√(n+M−1))`.
pub fn psi_ladder(params: PsiParams, registers: RegisterSet) -> Result<Vec<SparseState>> {
    params.check_cap()?;
    let m = params.modes;
    let mut out = Vec::with_capacity(params.photons + 1);
    out.push(SparseState::vacuum(m, registers));
    for n in 1..=params.photons {
        let raised = pair_create(out.last().unwrap())?;
        let scale = ((n as f64).sqrt() * ((n + m - 1) as f64).sqrt()).recip();
        out.push(raised.scaled(Complex64::new(scale, 0.0)));
    }
    Ok(out)
}

pub fn build_psi_recursive(params: PsiParams) -> Result<SparseState> {
    Ok(psi_ladder(params, RegisterSet::IdlerSignal)?.pop().unwrap())
}

/// `â_{S_j}|ψ_N⟩` through the ladder operators.
pub fn annihilate_signal(params: PsiParams, mode: usize) -> Result<SparseState> {
    if mode >= params.modes {
        return Err(Error::ModeOutOfRange {
            mode,
            modes: params.modes,
        });
    }
    apply_annihilate(&build_psi_direct(params)?, Register::Signal, mode)
}

/// `‖ â_{S_j}|ψ_N⟩ − √(N/(N+M−1)) â†_{I_j}|ψ_{N−1}⟩ ‖`, identically zero.
pub fn annihilation_identity_residual(params: PsiParams, mode: usize) -> Result<f64> {
    if params.photons == 0 {
        return Err(Error::ShapeMismatch(
            "annihilation identity needs at least one photon".into(),
        ));
    }
    let lhs = annihilate_signal(params, mode)?;
    let n = params.photons as f64;
    let coeff = (n / (n + params.modes as f64 - 1.0)).sqrt();
    let prev = build_psi_direct(params.with_photons(params.photons - 1))?;
    let rhs = apply_create(&prev, Register::Idler, mode)?;
    let diff = scale_add(&[
        (Complex64::new(1.0, 0.0), &lhs),
        (Complex64::new(-coeff, 0.0), &rhs),
    ])?;
    Ok(diff.norm())
}

/// `[â_{R_j}, Â†]|x⟩ = â_{R_j}Â†|x⟩ − Â†â_{R_j}|x⟩`.
pub fn pair_commutator(
    state: &SparseState,
    register: Register,
    mode: usize,
) -> Result<SparseState> {
    let ab = apply_annihilate(&pair_create(state)?, register, mode)?;
    let ba = pair_create(&apply_annihilate(state, register, mode)?)?;
    scale_add(&[
        (Complex64::new(1.0, 0.0), &ab),
        (Complex64::new(-1.0, 0.0), &ba),
    ])
}

/// Reduced density matrix of the idler register, `ρ_I = Tr_S |x⟩⟨x|`, as a
/// sparse map `(row, column) → element`.
pub fn idler_reduced_density(
    state: &SparseState,
) -> Result<BTreeMap<(ModeVector, ModeVector), Complex64>> {
    if state.registers() != RegisterSet::IdlerSignal {
        return Err(Error::ShapeMismatch(
            "reduced density expects an idler–signal state".into(),
        ));
    }
    let mut by_signal: BTreeMap<ModeVector, Vec<(ModeVector, Complex64)>> = BTreeMap::new();
    for (key, amp) in state.iter() {
        let parts = state.split_key(key);
        by_signal
            .entry(parts[1].clone())
            .or_default()
            .push((parts[0].clone(), *amp));
    }
    let mut rho = BTreeMap::new();
    for column in by_signal.values() {
        for (row_i, a) in column {
            for (col_i, b) in column {
                *rho.entry((row_i.clone(), col_i.clone())).or_default() += a * b.conj();
            }
        }
    }
    Ok(rho)
}
