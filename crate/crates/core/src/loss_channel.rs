//! Signal attenuation through a beamsplitter of reflectivity `η`.
//!
//! The returned idler–signal state is an incoherent mixture of orthonormal
//! components `|φ_{N_A}⟩`, one per arrangement `N_A` of photons left in the
//! environment. Each component is `(â†_I)^{N_A}|ψ_{N−|N_A|}⟩` normalized; only
//! the weights depend on `η`.

use num_complex::Complex64;

use crate::combinatorics::{binomial, compositions, count_compositions, BigCount};
use crate::error::{Error, Result, AMPLITUDE_CAP};
use crate::fock_core::{
    apply_create, scale_add, slices_by_background, ModeVector, Register, RegisterSet, SparseState,
};
use crate::psi_family::{build_psi_direct, psi_ladder, PsiParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParams {
    eta: f64,
    psi: PsiParams,
}

impl LossParams {
    /// `eta` must lie in `[0, 1]`; the endpoints are the lossless and fully absorbing limits.
    pub fn new(eta: f64, psi: PsiParams) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidEta(eta));
        }
        Ok(LossParams { eta, psi })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn psi(&self) -> PsiParams {
        self.psi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    /// Photons left in the environment, per mode.
    pub absorbed: ModeVector,
    pub weight: f64,
    /// Normalized idler–signal state.
    pub state: SparseState,
}

/// Pure-state ensemble standing in for a density matrix.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MixtureComponents {
    pub components: Vec<MixtureComponent>,
}

impl MixtureComponents {
    pub fn total_weight(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Components with non-zero weight.
    pub fn effective(&self) -> impl Iterator<Item = &MixtureComponent> {
        self.components.iter().filter(|c| c.weight > 0.0)
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Largest entry of `G − I` where `G` is the Gram matrix of the component states.
    pub fn gram_deviation(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate() {
                let g = crate::fock_core::inner_product(&a.state, &b.state)?;
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - Complex64::new(target, 0.0)).norm());
            }
        }
        Ok(worst)
    }
}

fn check_absorbed(psi: PsiParams, n_a: &ModeVector) -> Result<usize> {
    if n_a.modes() != psi.modes() {
        return Err(Error::ShapeMismatch(format!(
            "absorbed vector has {} modes, state has {}",
            n_a.modes(),
            psi.modes()
        )));
    }
    let absorbed = n_a.total();
    if absorbed > psi.photons() {
        return Err(Error::AbsorbedExceedsPhotons {
            absorbed,
            photons: psi.photons(),
        });
    }
    Ok(absorbed)
}

/// Probability that the environment holds exactly `n_a`:
///
/// `η^{N−a}(1−η)^a · C(N+M−1,N)^{−1} · Σ_{|n|=N−a} ∏ᵢ C(nᵢ+aᵢ, aᵢ)`
///
/// with the sum accumulated exactly and converted to `f64` once.
pub fn phi_norm_sq(loss: LossParams, n_a: &ModeVector) -> Result<f64> {
    let psi = loss.psi;
    let absorbed = check_absorbed(psi, n_a)?;
    let returned = psi.photons() - absorbed;
    psi.with_photons(returned).check_cap()?;

    let mut sum = BigCount::zero();
    for n_s in compositions(returned, psi.modes())? {
        let mut term = BigCount::one();
        for (&s, &a) in n_s.counts().iter().zip(n_a.counts()) {
            term = term * binomial((s + a) as u64, a as u64);
        }
        sum = sum + term;
    }
    let norm = binomial(
        (psi.photons() + psi.modes() - 1) as u64,
        psi.photons() as u64,
    );
    let combinatorial = sum.ratio_to_f64(&norm);
    Ok(powi(loss.eta, returned) * powi(1.0 - loss.eta, absorbed) * combinatorial)
}

fn powi(x: f64, n: usize) -> f64 {
    match i32::try_from(n) {
        Ok(n) => x.powi(n),
        Err(_) => x.powf(n as f64),
    }
}

/// Normalized `|φ_{N_A}⟩ ∝ (â†_I)^{N_A}|ψ_{N−|N_A|}⟩`; independent of `η`.
pub fn phi_state(psi: PsiParams, n_a: &ModeVector) -> Result<SparseState> {
    let absorbed = check_absorbed(psi, n_a)?;
    let mut state = build_psi_direct(psi.with_photons(psi.photons() - absorbed))?;
    for (mode, &count) in n_a.counts().iter().enumerate() {
        for _ in 0..count {
            state = apply_create(&state, Register::Idler, mode)?;
        }
    }
    Ok(state.normalized())
}

/// `(weight, normalized state)` of the component labeled `n_a`.
pub fn phi_component(loss: LossParams, n_a: &ModeVector) -> Result<(f64, SparseState)> {
    Ok((phi_norm_sq(loss, n_a)?, phi_state(loss.psi, n_a)?))
}

/// Every absorbed arrangement with `|N_A| ≤ N`, grouped by total and in
/// composition order within each total.
pub fn absorbed_arrangements(psi: PsiParams) -> Result<Vec<ModeVector>> {
    let all = count_compositions(psi.photons(), psi.modes() + 1)?;
    if all.to_usize().is_none_or(|n| n > AMPLITUDE_CAP) {
        return Err(Error::CapExceeded {
            what: "absorbed arrangements",
            photons: psi.photons(),
            modes: psi.modes(),
            required: all.to_string(),
        });
    }
    let mut out = Vec::new();
    for a in 0..=psi.photons() {
        out.extend(compositions(a, psi.modes())?);
    }
    Ok(out)
}

/// The returned state as the full ensemble `{(w_{N_A}, |φ_{N_A}⟩)}`.
pub fn rho_pres_components(loss: LossParams) -> Result<MixtureComponents> {
    let mut components = Vec::new();
    for absorbed in absorbed_arrangements(loss.psi)? {
        let (weight, state) = phi_component(loss, &absorbed)?;
        components.push(MixtureComponent {
            absorbed,
            weight,
            state,
        });
    }
    Ok(MixtureComponents { components })
}

/// Number of amplitudes in the three-register beamsplitter output:
/// `Σ_{|n|=N} ∏(nᵢ+1) = C(N+2M−1, N)`.
pub fn oracle_size(psi: PsiParams) -> BigCount {
    binomial(
        (psi.photons() + 2 * psi.modes() - 1) as u64,
        psi.photons() as u64,
    )
}

/// Exact idler–signal–background pure state after the beamsplitter.
///
/// `|ψ_N⟩ ⊗ |0⟩_B` is generated from vacuum by the pair-creation recursion;
/// each signal mode holding `s` photons, `(â†_S)^s/√s!`, is then rebuilt by
/// applying `√η â†_S + √(1−η) â†_B` `s` times to that mode's vacuum.
pub fn beamsplitter_oracle(loss: LossParams) -> Result<SparseState> {
    let psi = loss.psi;
    let size = oracle_size(psi);
    if size.to_usize().is_none_or(|n| n > AMPLITUDE_CAP) {
        return Err(Error::CapExceeded {
            what: "beamsplitter oracle state",
            photons: psi.photons(),
            modes: psi.modes(),
            required: size.to_string(),
        });
    }
    let mut state = psi_ladder(psi, RegisterSet::IdlerSignalBackground)?
        .pop()
        .unwrap();
    for mode in 0..psi.modes() {
        state = mix_mode(&state, mode, loss.eta)?;
    }
    Ok(state)
}

fn mix_mode(state: &SparseState, mode: usize, eta: f64) -> Result<SparseState> {
    let m = state.modes();
    let reflect = Complex64::new(eta.sqrt(), 0.0);
    let leak = Complex64::new((1.0 - eta).sqrt(), 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut pieces = Vec::with_capacity(state.len());
    for (key, amp) in state.iter() {
        let mut parts = state.split_key(key);
        let s = parts[1].counts()[mode];
        if parts[2].counts()[mode] != 0 {
            return Err(Error::ShapeMismatch(
                "beamsplitter input must have an empty background mode".into(),
            ));
        }
        let mut signal = parts[1].counts().to_vec();
        signal[mode] = 0;
        parts[1] = ModeVector::new(signal);
        let refs: Vec<&ModeVector> = parts.iter().collect();
        let inv_sqrt_fact = (1..=s).map(|i| (i as f64).sqrt()).product::<f64>().recip();
        let mut piece = SparseState::basis(state.registers(), &refs)?.scaled(amp * inv_sqrt_fact);
        for _ in 0..s {
            let to_signal = apply_create(&piece, Register::Signal, mode)?;
            let to_background = apply_create(&piece, Register::Background, mode)?;
            piece = scale_add(&[(reflect, &to_signal), (leak, &to_background)])?;
        }
        pieces.push(piece);
    }
    if pieces.is_empty() {
        return Ok(SparseState::zero(m, state.registers()));
    }
    let terms: Vec<(Complex64, &SparseState)> = pieces.iter().map(|p| (one, p)).collect();
    scale_add(&terms)
}

/// Groups a beamsplitter output by its background key: `(N_A, weight, normalized state)`
/// for every arrangement with non-zero weight.
pub fn decompose_by_environment(
    state: &SparseState,
) -> Result<Vec<(ModeVector, f64, SparseState)>> {
    Ok(slices_by_background(state)?
        .into_iter()
        .map(|(b, slice)| {
            let w = slice.norm_sqr();
            (b, w, slice.normalized())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn loss(n: usize, m: usize, eta: f64) -> LossParams {
        LossParams::new(eta, PsiParams::new(n, m).unwrap()).unwrap()
    }

    fn mv(c: &[usize]) -> ModeVector {
        ModeVector::new(c.to_vec())
    }

    /// Closed form of the factorial sum: it does not depend on how `N_A` is
    /// arranged, only on its total `a`.
    fn norm_by_total(n: usize, m: usize, a: usize, eta: f64) -> f64 {
        let c = binomial((n + m - 1) as u64, (n - a) as u64)
            .ratio_to_f64(&binomial((n + m - 1) as u64, n as u64));
        eta.powi((n - a) as i32) * (1.0 - eta).powi(a as i32) * c
    }

    #[test]
    fn norm_examples() {
        assert_abs_diff_eq!(
            phi_norm_sq(loss(1, 2, 0.5), &mv(&[1, 0])).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        for n in 1..=4 {
            for m in 1..=3 {
                let eta = 0.35;
                let full: f64 = compositions(n, m)
                    .unwrap()
                    .map(|v| phi_norm_sq(loss(n, m, eta), &v).unwrap())
                    .sum();
                assert_abs_diff_eq!(full, (1.0 - eta).powi(n as i32), epsilon = 1e-14);
                for v in compositions(2.min(n), m).unwrap() {
                    assert_eq!(
                        phi_norm_sq(loss(n, m, 1.0), &v).unwrap() == 0.0,
                        v.total() > 0
                    );
                }
            }
        }
    }

    #[test]
    fn norm_matches_closed_form() {
        for n in 0..=5 {
            for m in 1..=4 {
                for &eta in &[0.1, 0.3, 0.5, 0.9] {
                    for v in absorbed_arrangements(PsiParams::new(n, m).unwrap()).unwrap() {
                        let got = phi_norm_sq(loss(n, m, eta), &v).unwrap();
                        let want = norm_by_total(n, m, v.total(), eta);
                        assert!(
                            (got - want).abs() <= 1e-14 * want.max(1e-300),
                            "{n} {m} {v}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn norm_errors() {
        assert!(matches!(
            phi_norm_sq(loss(1, 2, 0.5), &mv(&[1, 1])),
            Err(Error::AbsorbedExceedsPhotons {
                absorbed: 2,
                photons: 1
            })
        ));
        assert!(matches!(
            phi_norm_sq(loss(1, 2, 0.5), &mv(&[1])),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(LossParams::new(1.5, PsiParams::new(1, 1).unwrap()).is_err());
        assert!(LossParams::new(f64::NAN, PsiParams::new(1, 1).unwrap()).is_err());
    }

    #[test]
    fn component_examples() {
        let l = loss(3, 2, 0.6);
        let (w, s) = phi_component(l, &mv(&[0, 0])).unwrap();
        assert_abs_diff_eq!(w, 0.6f64.powi(3), epsilon = 1e-15);
        assert!(s.max_abs_diff(&build_psi_direct(l.psi()).unwrap()) < 1e-15);

        let (_, s) = phi_component(loss(1, 2, 0.4), &mv(&[1, 0])).unwrap();
        let e1 =
            SparseState::basis(RegisterSet::IdlerSignal, &[&mv(&[1, 0]), &mv(&[0, 0])]).unwrap();
        assert!(s.max_abs_diff(&e1) < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let mix = rho_pres_components(loss(1, 2, 0.5)).unwrap();
        let got: Vec<(String, f64)> = mix
            .components
            .iter()
            .map(|c| (c.absorbed.to_string(), c.weight))
            .collect();
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].0, "0,0");
        assert_abs_diff_eq!(got[0].1, 0.5, epsilon = 1e-15);
        assert_eq!((got[1].0.as_str(), got[2].0.as_str()), ("1,0", "0,1"));
        assert_abs_diff_eq!(got[1].1, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(got[2].1, 0.25, epsilon = 1e-15);

        let lossless = rho_pres_components(loss(3, 2, 1.0)).unwrap();
        let eff: Vec<_> = lossless.effective().collect();
        assert_eq!(eff.len(), 1);
        assert!(eff[0].absorbed.is_zero());
        assert_abs_diff_eq!(eff[0].weight, 1.0, epsilon = 1e-15);

        let dark = rho_pres_components(loss(3, 2, 0.0)).unwrap();
        assert!(dark.effective().all(|c| c.absorbed.total() == 3));
        assert_abs_diff_eq!(dark.total_weight(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn orthonormal_components() {
        let mix = rho_pres_components(loss(3, 3, 0.5)).unwrap();
        assert_eq!(mix.len(), 20);
        assert!(mix.gram_deviation().unwrap() < 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let l = loss(2, 3, 1.0);
        let out = beamsplitter_oracle(l).unwrap();
        let psi = build_psi_direct(l.psi()).unwrap();
        let slices = slices_by_background(&out).unwrap();
        assert_eq!(slices.len(), 1);
        assert!(slices[0].0.is_zero());
        assert!(slices[0].1.max_abs_diff(&psi) < 1e-14);

        let out = beamsplitter_oracle(loss(1, 2, 0.5)).unwrap();
        let (e1, z) = (mv(&[1, 0]), mv(&[0, 0]));
        let kept = SparseState::basis(RegisterSet::IdlerSignalBackground, &[&e1, &e1, &z]).unwrap();
        let lost = SparseState::basis(RegisterSet::IdlerSignalBackground, &[&e1, &z, &e1]).unwrap();
        let want = (0.5f64 / 2.0).sqrt();
        for k in [kept, lost] {
            let (key, _) = k.iter().next().unwrap();
            assert_abs_diff_eq!(out.amplitude(key).re, want, epsilon = 1e-15);
        }
        assert_eq!(out.len() as u64, 4);
        assert_eq!(oracle_size(PsiParams::new(1, 2).unwrap()), 4);
    }

    #[test]
    fn oracle_decomposes_into_components() {
        for n in 0..=3 {
            for m in 1..=3 {
                for &eta in &[0.2, 0.5, 0.8] {
                    let l = loss(n, m, eta);
                    let groups =
                        decompose_by_environment(&beamsplitter_oracle(l).unwrap()).unwrap();
                    assert_eq!(groups.len(), absorbed_arrangements(l.psi()).unwrap().len());
                    for (absorbed, w, state) in groups {
                        let (cw, cs) = phi_component(l, &absorbed).unwrap();
                        assert!((w - cw).abs() < 1e-12);
                        assert!(state.max_abs_diff(&cs) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_cap() {
        assert!(matches!(
            beamsplitter_oracle(loss(20, 20, 0.5)),
            Err(Error::CapExceeded { .. })
        ));
    }
}
