//! Sparse photon-number states over two or three M-mode registers.
//!
//! A basis ket is a [`BasisKey`]: the per-mode photon counts of every register
//! packed into one `u16` slice in canonical register order. States map keys to
//! complex amplitudes and are never stored densely.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{Error, Result, AMPLITUDE_CAP};

/// Amplitudes with magnitude below this are dropped after every linear operation.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Per-mode photon counts for one register.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeVector(Vec<usize>);

impl ModeVector {
    pub fn new(counts: Vec<usize>) -> Self {
        ModeVector(counts)
    }

    pub fn zeros(modes: usize) -> Self {
        ModeVector(vec![0; modes])
    }

    /// Single photon in `mode`.
    pub fn unit(modes: usize, mode: usize) -> Self {
        let mut v = vec![0; modes];
        v[mode] = 1;
        ModeVector(v)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Display for ModeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Register {
    Idler,
    Signal,
    Background,
}

impl fmt::Display for Register {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Register::Idler => "I",
            Register::Signal => "S",
            Register::Background => "B",
        })
    }
}

/// Which registers a state spans, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegisterSet {
    IdlerSignal,
    IdlerSignalBackground,
}

impl RegisterSet {
    pub fn registers(self) -> &'static [Register] {
        match self {
            RegisterSet::IdlerSignal => &[Register::Idler, Register::Signal],
            RegisterSet::IdlerSignalBackground => {
                &[Register::Idler, Register::Signal, Register::Background]
            }
        }
    }

    pub fn count(self) -> usize {
        self.registers().len()
    }

    pub fn index_of(self, register: Register) -> Option<usize> {
        self.registers().iter().position(|&r| r == register)
    }
}

/// Packed per-register counts. Ordering is descending lexicographic over the
/// packed slice, which puts `(N,0,…)` before `(0,…,N)` and matches the order
/// compositions are enumerated in.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasisKey {
    counts: Box<[u16]>,
}

impl BasisKey {
    /// One [`ModeVector`] per register, all of the same length.
    pub fn from_parts(parts: &[&ModeVector]) -> Result<Self> {
        let modes = parts.first().map_or(0, |p| p.modes());
        let mut counts = Vec::with_capacity(parts.len() * modes);
        for part in parts {
            if part.modes() != modes {
                return Err(Error::ShapeMismatch(format!(
                    "register vectors of length {} and {}",
                    modes,
                    part.modes()
                )));
            }
            for &c in part.counts() {
                counts.push(u16::try_from(c).map_err(|_| Error::OccupancyOverflow { count: c })?);
            }
        }
        Ok(BasisKey {
            counts: counts.into_boxed_slice(),
        })
    }

    pub fn packed(&self) -> &[u16] {
        &self.counts
    }

    pub fn part(&self, index: usize, modes: usize) -> ModeVector {
        ModeVector::new(
            self.counts[index * modes..(index + 1) * modes]
                .iter()
                .map(|&c| c as usize)
                .collect(),
        )
    }
}

impl Ord for BasisKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other.counts.cmp(&self.counts)
    }
}

impl PartialOrd for BasisKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse pure state. Operations return new states.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseState {
    modes: usize,
    registers: RegisterSet,
    amplitudes: BTreeMap<BasisKey, Complex64>,
}

impl SparseState {
    pub fn zero(modes: usize, registers: RegisterSet) -> Self {
        SparseState {
            modes,
            registers,
            amplitudes: BTreeMap::new(),
        }
    }

    pub fn vacuum(modes: usize, registers: RegisterSet) -> Self {
        let zeros = ModeVector::zeros(modes);
        let parts: Vec<&ModeVector> = vec![&zeros; registers.count()];
        let key = BasisKey::from_parts(&parts).expect("vacuum key is valid");
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(key, Complex64::new(1.0, 0.0));
        SparseState {
            modes,
            registers,
            amplitudes,
        }
    }

    /// Single basis ket with amplitude 1; one vector per register.
    pub fn basis(registers: RegisterSet, parts: &[&ModeVector]) -> Result<Self> {
        Self::from_terms(registers, [(parts.to_vec(), Complex64::new(1.0, 0.0))])
    }

    /// Builds a state from `(per-register vectors, amplitude)` terms; repeated keys add up.
    pub fn from_terms<'a, I>(registers: RegisterSet, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<&'a ModeVector>, Complex64)>,
    {
        let mut modes = None;
        let mut amplitudes: BTreeMap<BasisKey, Complex64> = BTreeMap::new();
        for (parts, amp) in terms {
            if parts.len() != registers.count() {
                return Err(Error::ShapeMismatch(format!(
                    "{} register vectors given for {} registers",
                    parts.len(),
                    registers.count()
                )));
            }
            let m = parts[0].modes();
            if *modes.get_or_insert(m) != m {
                return Err(Error::ShapeMismatch("mixed mode counts".into()));
            }
            *amplitudes.entry(BasisKey::from_parts(&parts)?).or_default() += amp;
            check_cap(amplitudes.len(), 0, m)?;
        }
        let modes = modes.ok_or_else(|| Error::ShapeMismatch("no terms".into()))?;
        if modes == 0 {
            return Err(Error::ZeroModes);
        }
        let mut state = SparseState {
            modes,
            registers,
            amplitudes,
        };
        state.prune();
        Ok(state)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn registers(&self) -> RegisterSet {
        self.registers
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitude(&self, key: &BasisKey) -> Complex64 {
        self.amplitudes.get(key).copied().unwrap_or_default()
    }

    /// Terms in canonical key order.
    pub fn iter(&self) -> impl Iterator<Item = (&BasisKey, &Complex64)> {
        self.amplitudes.iter()
    }

    /// The per-register vectors of a key in this state.
    pub fn split_key(&self, key: &BasisKey) -> Vec<ModeVector> {
        (0..self.registers.count())
            .map(|i| key.part(i, self.modes))
            .collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Largest imaginary part among the stored amplitudes.
    pub fn max_imag(&self) -> f64 {
        self.amplitudes
            .values()
            .map(|a| a.im.abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> SparseState {
        let mut out = self.clone();
        for a in out.amplitudes.values_mut() {
            *a *= c;
        }
        out.prune();
        out
    }

    /// Unit-norm copy; the zero state is returned unchanged.
    pub fn normalized(&self) -> SparseState {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(Complex64::new(1.0 / n, 0.0))
    }

    /// Largest per-amplitude difference against `other` over the union of keys.
    pub fn max_abs_diff(&self, other: &SparseState) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, a) in &self.amplitudes {
            worst = worst.max((a - other.amplitude(k)).norm());
        }
        for (k, b) in &other.amplitudes {
            if !self.amplitudes.contains_key(k) {
                worst = worst.max(b.norm());
            }
        }
        worst
    }

    fn slot(&self, register: Register, mode: usize) -> Result<usize> {
        let idx = self
            .registers
            .index_of(register)
            .ok_or(Error::MissingRegister(register))?;
        if mode >= self.modes {
            return Err(Error::ModeOutOfRange {
                mode,
                modes: self.modes,
            });
        }
        Ok(idx * self.modes + mode)
    }

    fn prune(&mut self) {
        self.amplitudes.retain(|_, a| a.norm() >= PRUNE_THRESHOLD);
    }

    fn check_shape(&self, other: &SparseState) -> Result<()> {
        if self.modes != other.modes || self.registers != other.registers {
            return Err(Error::ShapeMismatch(format!(
                "{:?} over {} modes vs {:?} over {} modes",
                self.registers, self.modes, other.registers, other.modes
            )));
        }
        Ok(())
    }

    /// Writes one tab-separated line per term: each register's counts comma-joined,
    /// then the real and imaginary amplitude at 17 significant digits.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (key, amp) in &self.amplitudes {
            for part in self.split_key(key) {
                write!(out, "{part}\t")?;
            }
            writeln!(out, "{:.16e}\t{:.16e}", amp.re, amp.im)?;
        }
        Ok(())
    }

    pub fn dump_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("dump is ASCII")
    }
}

fn check_cap(len: usize, photons: usize, modes: usize) -> Result<()> {
    if len > AMPLITUDE_CAP {
        return Err(Error::CapExceeded {
            what: "sparse state",
            photons,
            modes,
            required: len.to_string(),
        });
    }
    Ok(())
}

fn shift_mode(
    state: &SparseState,
    register: Register,
    mode: usize,
    raise: bool,
) -> Result<SparseState> {
    let slot = state.slot(register, mode)?;
    let mut amplitudes = BTreeMap::new();
    for (key, amp) in &state.amplitudes {
        let n = key.counts[slot];
        let (new_n, factor) = if raise {
            let next = n.checked_add(1).ok_or(Error::OccupancyOverflow {
                count: n as usize + 1,
            })?;
            (next, f64::from(next).sqrt())
        } else {
            if n == 0 {
                continue;
            }
            (n - 1, f64::from(n).sqrt())
        };
        let mut counts = key.counts.clone();
        counts[slot] = new_n;
        amplitudes.insert(BasisKey { counts }, amp * factor);
    }
    let mut out = SparseState {
        modes: state.modes,
        registers: state.registers,
        amplitudes,
    };
    out.prune();
    Ok(out)
}

/// `â†` on `mode` of `register`: `|…n…⟩ → √(n+1) |…n+1…⟩`.
pub fn apply_create(state: &SparseState, register: Register, mode: usize) -> Result<SparseState> {
    shift_mode(state, register, mode, true)
}

/// `â` on `mode` of `register`: `|…n…⟩ → √n |…n−1…⟩`, vacuum terms vanish.
pub fn apply_annihilate(
    state: &SparseState,
    register: Register,
    mode: usize,
) -> Result<SparseState> {
    shift_mode(state, register, mode, false)
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product(a: &SparseState, b: &SparseState) -> Result<Complex64> {
    a.check_shape(b)?;
    let mut acc = Complex64::new(0.0, 0.0);
    if a.len() <= b.len() {
        for (k, x) in &a.amplitudes {
            if let Some(y) = b.amplitudes.get(k) {
                acc += x.conj() * y;
            }
        }
    } else {
        for (k, y) in &b.amplitudes {
            if let Some(x) = a.amplitudes.get(k) {
                acc += x.conj() * y;
            }
        }
    }
    Ok(acc)
}

/// `Σ cᵢ |xᵢ⟩` with sub-threshold amplitudes pruned afterwards.
pub fn scale_add(terms: &[(Complex64, &SparseState)]) -> Result<SparseState> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::ShapeMismatch("empty linear combination".into()))?;
    let mut out = SparseState::zero(first.modes, first.registers);
    for (c, s) in terms {
        out.check_shape(s)?;
        for (k, a) in &s.amplitudes {
            *out.amplitudes.entry(k.clone()).or_default() += c * a;
        }
        check_cap(out.amplitudes.len(), 0, out.modes)?;
    }
    out.prune();
    Ok(out)
}

/// Splits a three-register state by its background key: for every background
/// vector present, the unnormalized idler–signal slice that accompanies it.
pub fn slices_by_background(state: &SparseState) -> Result<Vec<(ModeVector, SparseState)>> {
    if state.registers != RegisterSet::IdlerSignalBackground {
        return Err(Error::MissingRegister(Register::Background));
    }
    let m = state.modes;
    let mut groups: BTreeMap<BasisKey, SparseState> = BTreeMap::new();
    for (key, amp) in &state.amplitudes {
        let b = BasisKey {
            counts: key.counts[2 * m..].into(),
        };
        let is = BasisKey {
            counts: key.counts[..2 * m].into(),
        };
        groups
            .entry(b)
            .or_insert_with(|| SparseState::zero(m, RegisterSet::IdlerSignal))
            .amplitudes
            .insert(is, *amp);
    }
    Ok(groups.into_iter().map(|(b, s)| (b.part(0, m), s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mv(c: &[usize]) -> ModeVector {
        ModeVector::new(c.to_vec())
    }

    fn ket(i: &[usize], s: &[usize]) -> SparseState {
        SparseState::basis(RegisterSet::IdlerSignal, &[&mv(i), &mv(s)]).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn create_on_vacuum() {
        let vac = SparseState::vacuum(2, RegisterSet::IdlerSignal);
        let out = apply_create(&vac, Register::Idler, 0).unwrap();
        assert_eq!(out, ket(&[1, 0], &[0, 0]));
    }

    #[test]
    fn create_scales_by_sqrt_n_plus_one() {
        let out = apply_create(&ket(&[2, 0], &[0, 0]), Register::Idler, 0).unwrap();
        let want = ket(&[3, 0], &[0, 0]).scaled(c(3f64.sqrt()));
        assert_eq!(out, want);
    }

    #[test]
    fn create_is_linear() {
        let a = ket(&[1, 0], &[0, 1]);
        let b = ket(&[0, 2], &[1, 0]);
        let sup = scale_add(&[(c(0.6), &a), (Complex64::new(0.0, 0.8), &b)]).unwrap();
        let lhs = apply_create(&sup, Register::Signal, 1).unwrap();
        let rhs = scale_add(&[
            (c(0.6), &apply_create(&a, Register::Signal, 1).unwrap()),
            (
                Complex64::new(0.0, 0.8),
                &apply_create(&b, Register::Signal, 1).unwrap(),
            ),
        ])
        .unwrap();
        assert!(lhs.max_abs_diff(&rhs) < 1e-15);
    }

    #[test]
    fn annihilate_examples() {
        let vac = SparseState::vacuum(2, RegisterSet::IdlerSignal);
        assert!(apply_annihilate(&vac, Register::Signal, 0)
            .unwrap()
            .is_empty());

        let out = apply_annihilate(&ket(&[0, 0], &[0, 2]), Register::Signal, 1).unwrap();
        assert_eq!(out, ket(&[0, 0], &[0, 1]).scaled(c(2f64.sqrt())));

        for n in 0..6 {
            let k = ket(&[n, 1], &[0, 0]);
            let num = apply_create(
                &apply_annihilate(&k, Register::Idler, 0).unwrap(),
                Register::Idler,
                0,
            )
            .unwrap();
            if n == 0 {
                assert!(num.is_empty());
            } else {
                assert!(num.max_abs_diff(&k.scaled(c(n as f64))) < 1e-14);
            }
        }
    }

    #[test]
    fn ladder_errors() {
        let s = ket(&[1, 0], &[0, 0]);
        assert_eq!(
            apply_create(&s, Register::Background, 0),
            Err(Error::MissingRegister(Register::Background))
        );
        assert_eq!(
            apply_annihilate(&s, Register::Idler, 2),
            Err(Error::ModeOutOfRange { mode: 2, modes: 2 })
        );
        let full = ket(&[u16::MAX as usize], &[0]);
        assert!(matches!(
            apply_create(&full, Register::Idler, 0),
            Err(Error::OccupancyOverflow { .. })
        ));
        assert!(matches!(
            SparseState::basis(RegisterSet::IdlerSignal, &[&mv(&[70_000]), &mv(&[0])]),
            Err(Error::OccupancyOverflow { .. })
        ));
    }

    #[test]
    fn inner_products() {
        let vac = SparseState::vacuum(3, RegisterSet::IdlerSignal);
        assert_eq!(inner_product(&vac, &vac).unwrap(), c(1.0));

        let a = ket(&[1, 0], &[1, 0]).scaled(Complex64::new(0.0, 1.0));
        let b = ket(&[1, 0], &[1, 0]);
        // conjugate-linear in the first argument
        assert_eq!(inner_product(&a, &b).unwrap(), Complex64::new(0.0, -1.0));

        let three = SparseState::vacuum(2, RegisterSet::IdlerSignalBackground);
        assert!(matches!(
            inner_product(&b, &three),
            Err(Error::ShapeMismatch(_))
        ));
        let other_m = SparseState::vacuum(3, RegisterSet::IdlerSignal);
        assert!(inner_product(&b, &other_m).is_err());
    }

    #[test]
    fn scale_add_examples() {
        let x = ket(&[1, 0], &[1, 0]);
        let y = ket(&[0, 1], &[0, 1]);
        assert_eq!(scale_add(&[(c(1.0), &x), (c(0.0), &y)]).unwrap(), x);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let doubled = scale_add(&[(c(h), &x), (c(h), &x)]).unwrap();
        assert_abs_diff_eq!(
            doubled.amplitude(x.iter().next().unwrap().0).re,
            2f64.sqrt(),
            epsilon = 1e-15
        );

        let (al, be) = (Complex64::new(0.3, 0.4), Complex64::new(-0.5, 0.1));
        let sup = scale_add(&[(al, &x), (be, &y)]).unwrap();
        assert_abs_diff_eq!(
            sup.norm_sqr(),
            al.norm_sqr() + be.norm_sqr(),
            epsilon = 1e-15
        );

        assert!(scale_add(&[]).is_err());
        let three = SparseState::vacuum(2, RegisterSet::IdlerSignalBackground);
        assert!(scale_add(&[(c(1.0), &x), (c(1.0), &three)]).is_err());
    }

    #[test]
    fn cancellation_is_pruned() {
        let x = ket(&[1, 0], &[1, 0]);
        let out = scale_add(&[(c(1.0), &x), (c(-1.0), &x)]).unwrap();
        assert!(out.is_empty());
        let tiny = x.scaled(c(1e-16));
        assert!(tiny.is_empty());
    }

    #[test]
    fn key_order_is_descending_lexicographic() {
        let keys: Vec<BasisKey> = [[0, 2], [2, 0], [1, 1]]
            .iter()
            .map(|v| BasisKey::from_parts(&[&mv(v), &mv(v)]).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        let firsts: Vec<u16> = sorted.iter().map(|k| k.packed()[0]).collect();
        assert_eq!(firsts, vec![2, 1, 0]);
    }

    #[test]
    fn dump_format() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = scale_add(&[
            (c(h), &ket(&[0, 1], &[0, 1])),
            (Complex64::new(0.0, -h), &ket(&[1, 0], &[1, 0])),
        ])
        .unwrap();
        let dump = s.dump_string();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "1,0\t1,0\t0.0000000000000000e0\t-7.0710678118654757e-1"
        );
        assert_eq!(
            lines[1],
            "0,1\t0,1\t7.0710678118654757e-1\t0.0000000000000000e0"
        );
    }

    #[test]
    fn background_slices() {
        let z = mv(&[0, 0]);
        let e0 = mv(&[1, 0]);
        let e1 = mv(&[0, 1]);
        let s = SparseState::from_terms(
            RegisterSet::IdlerSignalBackground,
            [
                (vec![&e0, &e0, &z], c(0.5)),
                (vec![&e0, &z, &e0], c(0.5)),
                (vec![&e1, &z, &e1], c(0.5)),
                (vec![&e1, &e1, &z], c(0.5)),
            ],
        )
        .unwrap();
        let slices = slices_by_background(&s).unwrap();
        let labels: Vec<String> = slices.iter().map(|(b, _)| b.to_string()).collect();
        assert_eq!(labels, vec!["1,0", "0,1", "0,0"]);
        for (_, slice) in &slices {
            assert_eq!(slice.registers(), RegisterSet::IdlerSignal);
        }
        assert_abs_diff_eq!(slices[2].1.norm_sqr(), 0.5, epsilon = 1e-15);
        assert!(slices_by_background(&ket(&[1], &[1])).is_err());
    }
}
