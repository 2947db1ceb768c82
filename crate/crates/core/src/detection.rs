//! Target detection with the projective test `{P̂, 1−P̂}`, where `P̂` projects
//! onto every loss component that still carries at least one signal photon.
//!
//! Closed forms:
//!
//! * missed detection `P_MD = (1−η)^N`, independent of `M`;
//! * false alarm `P_FA = Σ_{k=1..N} p̃_k ∏_{j<k} (N−j)/(N+M−1−j)`, where `p̃_k`
//!   is the probability of one particular `k`-photon noise arrangement.
//!
//! The trace oracles evaluate `Tr[P̂ρ]` on materialized states for small
//! instances and are independent of both formulas.
//!
//! The `k`-photon coefficient equals `C(N−k+M−1, M−1)/C(N+M−1, M−1)`. A
//! closed-form derivation that counts noise arrangements with
//! `C(k+M−1, k)` instead does not reproduce these coefficients; the trace
//! oracle settles it in favor of the product form used here.

use num_complex::Complex64;

use crate::combinatorics::{compositions, falling_ratio_terms, LogProb};
use crate::error::{Error, Result, AMPLITUDE_CAP};
use crate::fock_core::{
    inner_product, scale_add, slices_by_background, ModeVector, RegisterSet, SparseState,
};
use crate::loss_channel::{absorbed_arrangements, beamsplitter_oracle, phi_component, LossParams};
use crate::psi_family::PsiParams;

/// Reflectivity at which the projector components are generated. The
/// normalized components do not depend on it.
pub const REFERENCE_ETA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    /// Identical thermal state in every mode with mean photon number `nbar`.
    Thermal { nbar: f64 },
    /// `values[i]` is `p̃_{i+1}`; missing entries are zero.
    Table(Vec<f64>),
}

/// Probability `p̃_k` of one specific environment arrangement holding `k`
/// photons over `modes` modes.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    kind: NoiseKind,
    modes: usize,
}

impl NoiseModel {
    pub fn thermal(nbar: f64, modes: usize) -> Result<Self> {
        if !nbar.is_finite() || nbar < 0.0 {
            return Err(Error::InvalidNoise(format!("mean photon number {nbar}")));
        }
        if modes == 0 {
            return Err(Error::ZeroModes);
        }
        Ok(NoiseModel {
            kind: NoiseKind::Thermal { nbar },
            modes,
        })
    }

    pub fn table(values: Vec<f64>, modes: usize) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidNoise(format!("table entry {bad}")));
        }
        if modes == 0 {
            return Err(Error::ZeroModes);
        }
        Ok(NoiseModel {
            kind: NoiseKind::Table(values),
            modes,
        })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Same noise law over a different mode count. Tables are reused as-is.
    pub fn with_modes(&self, modes: usize) -> NoiseModel {
        NoiseModel {
            kind: self.kind.clone(),
            modes,
        }
    }

    /// `p̃_k`. For thermal noise `(1−x)^M x^k` with `x = n̄/(1+n̄)`; for a
    /// table, `p̃_0` is not recorded and reads as zero.
    pub fn ptilde(&self, k: usize) -> LogProb {
        match &self.kind {
            NoiseKind::Thermal { nbar } => {
                if *nbar == 0.0 {
                    return if k == 0 { LogProb::ONE } else { LogProb::ZERO };
                }
                // ln(1−x) = −ln(1+n̄), ln x = ln n̄ − ln(1+n̄)
                let ln_1p = nbar.ln_1p();
                LogProb::from_ln(-(self.modes as f64) * ln_1p + k as f64 * (nbar.ln() - ln_1p))
            }
            NoiseKind::Table(values) => match k {
                0 => LogProb::ZERO,
                _ => values
                    .get(k - 1)
                    .map_or(LogProb::ZERO, |&v| LogProb::from_value(v)),
            },
        }
    }

    fn check_modes(&self, params: PsiParams) -> Result<()> {
        if self.modes != params.modes() {
            return Err(Error::ShapeMismatch(format!(
                "noise model over {} modes, state over {}",
                self.modes,
                params.modes()
            )));
        }
        Ok(())
    }
}

/// `p̃_k` of a thermal model as a plain float.
pub fn thermal_ptilde(model: &NoiseModel, k: usize) -> Result<f64> {
    match model.kind {
        NoiseKind::Thermal { .. } => Ok(model.ptilde(k).value()),
        NoiseKind::Table(_) => Err(Error::InvalidNoise("not a thermal model".into())),
    }
}

/// `P_MD = (1−η)^N`.
pub fn p_md_closed(params: PsiParams, eta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidEta(eta));
    }
    let n = params.photons();
    Ok(match i32::try_from(n) {
        Ok(n) => (1.0 - eta).powi(n),
        Err(_) => (n as f64 * (-eta).ln_1p()).exp(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FalseAlarmTerm {
    /// Noise photons picked up.
    pub k: usize,
    /// Weight of `p̃_k`.
    pub coefficient: LogProb,
    /// `coefficient · p̃_k`.
    pub contribution: LogProb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FalseAlarm {
    pub total: LogProb,
    pub terms: Vec<FalseAlarmTerm>,
}

impl FalseAlarm {
    pub fn value(&self) -> f64 {
        self.total.value()
    }
}

/// Coefficients of `p̃_1, …, p̃_N`.
pub fn false_alarm_coefficients(params: PsiParams) -> Vec<LogProb> {
    falling_ratio_terms(params.photons(), params.modes())
}

pub fn p_fa_closed(params: PsiParams, noise: &NoiseModel) -> Result<FalseAlarm> {
    noise.check_modes(params)?;
    let mut total = LogProb::ZERO;
    let terms = false_alarm_coefficients(params)
        .into_iter()
        .enumerate()
        .map(|(i, coefficient)| {
            let k = i + 1;
            let contribution = coefficient * noise.ptilde(k);
            total = total + contribution;
            FalseAlarmTerm {
                k,
                coefficient,
                contribution,
            }
        })
        .collect();
    Ok(FalseAlarm { total, terms })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionReport {
    pub p_fa_closed: f64,
    pub p_fa_terms: Vec<FalseAlarmTerm>,
    pub p_md_closed: f64,
    pub p_fa_oracle: Option<f64>,
    pub p_md_oracle: Option<f64>,
}

/// Closed forms, plus the trace oracles when `with_oracles` is set.
pub fn detection_report(
    params: PsiParams,
    eta: f64,
    noise: &NoiseModel,
    with_oracles: bool,
) -> Result<DetectionReport> {
    let fa = p_fa_closed(params, noise)?;
    let (p_fa_oracle, p_md_oracle) = if with_oracles {
        (
            Some(p_fa_oracle(params, noise)?),
            Some(p_md_oracle(params, eta)?),
        )
    } else {
        (None, None)
    };
    Ok(DetectionReport {
        p_fa_closed: fa.value(),
        p_fa_terms: fa.terms,
        p_md_closed: p_md_closed(params, eta)?,
        p_fa_oracle,
        p_md_oracle,
    })
}

/// Range of returned signal photons the projector accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhotonWindow {
    pub min_returned: usize,
    pub max_returned: usize,
}

impl PhotonWindow {
    /// `[1, N]`: any outcome with at least one returned photon.
    pub fn full(params: PsiParams) -> Self {
        PhotonWindow {
            min_returned: 1,
            max_returned: params.photons(),
        }
    }

    pub fn contains(&self, returned: usize) -> bool {
        (self.min_returned..=self.max_returned).contains(&returned)
    }
}

/// `P̂ = Σ |φ_{N_A}⟩⟨φ_{N_A}|` over the components whose returned photon count
/// `N − |N_A|` lies in the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    components: Vec<(ModeVector, SparseState)>,
}

impl Projector {
    pub fn build(params: PsiParams, window: PhotonWindow, reference_eta: f64) -> Result<Self> {
        let loss = LossParams::new(reference_eta, params)?;
        let mut components = Vec::new();
        for absorbed in absorbed_arrangements(params)? {
            if window.contains(params.photons() - absorbed.total()) {
                let (_, state) = phi_component(loss, &absorbed)?;
                components.push((absorbed, state));
            }
        }
        Ok(Projector { components })
    }

    /// The default test projector: full window at [`REFERENCE_ETA`].
    pub fn standard(params: PsiParams) -> Result<Self> {
        Self::build(params, PhotonWindow::full(params), REFERENCE_ETA)
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[(ModeVector, SparseState)] {
        &self.components
    }

    /// `⟨x|P̂|x⟩ = Σ |⟨φ|x⟩|²`.
    pub fn expectation(&self, state: &SparseState) -> Result<f64> {
        let mut acc = 0.0;
        for (_, phi) in &self.components {
            acc += inner_product(phi, state)?.norm_sqr();
        }
        Ok(acc)
    }

    /// `P̂|x⟩`.
    pub fn apply(&self, state: &SparseState) -> Result<SparseState> {
        let coeffs: Vec<Complex64> = self
            .components
            .iter()
            .map(|(_, phi)| inner_product(phi, state))
            .collect::<Result<_>>()?;
        let mut terms: Vec<(Complex64, &SparseState)> = vec![(Complex64::new(0.0, 0.0), state)];
        terms.extend(
            coeffs
                .into_iter()
                .zip(self.components.iter().map(|(_, s)| s)),
        );
        scale_add(&terms)
    }
}

/// `Tr[P̂ ρ_abs]` where the idler is `|ψ_N⟩` traced down to its uniform
/// marginal and the signal register is replaced by environment noise:
/// `ρ_abs = Σ_{|n|=N} Σ_{N_B} C(N+M−1,N)^{−1} p̃_{|N_B|} |n, N_B⟩⟨n, N_B|`.
///
/// Only `|N_B| ≤ N` is materialized since `P̂` acts on at most `N` signal photons.
pub fn p_fa_oracle(params: PsiParams, noise: &NoiseModel) -> Result<f64> {
    noise.check_modes(params)?;
    let (n, m) = (params.photons(), params.modes());
    let idlers = params.check_cap()?;
    let noise_vectors = crate::combinatorics::count_compositions(n, m + 1)?;
    let ensemble = noise_vectors
        .to_usize()
        .and_then(|v| v.checked_mul(idlers))
        .filter(|&e| e <= AMPLITUDE_CAP);
    if ensemble.is_none() {
        return Err(Error::CapExceeded {
            what: "noise ensemble",
            photons: n,
            modes: m,
            required: (noise_vectors * crate::combinatorics::BigCount::from(idlers as u64))
                .to_string(),
        });
    }

    let projector = Projector::standard(params)?;
    let idler_weight = 1.0 / idlers as f64;
    let mut total = 0.0;
    for idler in compositions(n, m)? {
        for k in 1..=n {
            let p = noise.ptilde(k).value();
            if p == 0.0 {
                continue;
            }
            for env in compositions(k, m)? {
                let ket = SparseState::basis(RegisterSet::IdlerSignal, &[&idler, &env])?;
                total += idler_weight * p * projector.expectation(&ket)?;
            }
        }
    }
    Ok(total)
}

/// `1 − Tr[P̂ ρ_pres]` with `ρ_pres` obtained by tracing the environment out
/// of the beamsplitter oracle state.
pub fn p_md_oracle(params: PsiParams, eta: f64) -> Result<f64> {
    let loss = LossParams::new(eta, params)?;
    let projector = Projector::standard(params)?;
    let mut detected = 0.0;
    for (_, slice) in slices_by_background(&beamsplitter_oracle(loss)?)? {
        detected += projector.expectation(&slice)?;
    }
    Ok(1.0 - detected)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Baselines {
    /// `1/M`: one copy of the single-photon state.
    pub single_copy: f64,
    /// `N/M`: `N` copies, valid for `N ≪ M`.
    pub n_copies: f64,
    /// Set when `N ≥ M`, where `N/M` no longer approximates anything.
    pub out_of_regime: bool,
}

pub fn single_photon_baselines(params: PsiParams) -> Baselines {
    let m = params.modes() as f64;
    Baselines {
        single_copy: 1.0 / m,
        n_copies: params.photons() as f64 / m,
        out_of_regime: params.photons() >= params.modes(),
    }
}
