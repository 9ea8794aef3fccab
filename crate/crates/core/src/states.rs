//! Two-qubit polarization states.
//!
//! Density matrices are written in the ordered product basis
//! `{|HH⟩, |HV⟩, |VH⟩, |VV⟩}`, first qubit Alice's. The diagonal basis is
//! `|D⟩ = (|H⟩ + |V⟩)/√2`, `|A⟩ = (|H⟩ − |V⟩)/√2`.

use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_range, Error, Result};

/// Numerical tolerance for density-matrix invariants.
pub const STATE_TOLERANCE: f64 = 1e-12;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Local measurement basis. Bit 0 is `H` (resp. `D`), bit 1 is `V` (resp. `A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    /// Rectilinear basis, `Z`.
    HV,
    /// Diagonal basis, `X`.
    AD,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::HV, Basis::AD];

    pub fn index(self) -> usize {
        match self {
            Basis::HV => 0,
            Basis::AD => 1,
        }
    }

    pub fn from_index(i: usize) -> Basis {
        if i == 0 {
            Basis::HV
        } else {
            Basis::AD
        }
    }

    pub fn state(self, bit: u8) -> Vector2<Complex64> {
        match (self, bit) {
            (Basis::HV, 0) => Vector2::new(c(1.0), c(0.0)),
            (Basis::HV, _) => Vector2::new(c(0.0), c(1.0)),
            (Basis::AD, 0) => Vector2::new(c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)),
            (Basis::AD, _) => Vector2::new(c(FRAC_1_SQRT_2), c(-FRAC_1_SQRT_2)),
        }
    }

    pub fn projector(self, bit: u8) -> Matrix2<Complex64> {
        let v = self.state(bit);
        v * v.adjoint()
    }
}

/// The four Bell states. The source nominally emits `PsiPlus`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    #[default]
    PsiPlus,
    PsiMinus,
    PhiPlus,
    PhiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn vector(self) -> Vector4<Complex64> {
        let s = FRAC_1_SQRT_2;
        let (hh, hv, vh, vv) = match self {
            BellState::PhiPlus => (s, 0.0, 0.0, s),
            BellState::PhiMinus => (s, 0.0, 0.0, -s),
            BellState::PsiPlus => (0.0, s, s, 0.0),
            BellState::PsiMinus => (0.0, s, -s, 0.0),
        };
        Vector4::new(c(hh), c(hv), c(vh), c(vv))
    }

    /// Whether ideal outcomes in `basis` agree (`true`) or are opposite (`false`).
    pub fn correlated_in(self, basis: Basis) -> bool {
        match (self, basis) {
            (BellState::PhiPlus, _) => true,
            (BellState::PsiMinus, _) => false,
            (BellState::PsiPlus, Basis::HV) => false,
            (BellState::PsiPlus, Basis::AD) => true,
            (BellState::PhiMinus, Basis::HV) => true,
            (BellState::PhiMinus, Basis::AD) => false,
        }
    }
}

/// A 4×4 density matrix on Alice's and Bob's polarization qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<Complex64>,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace and positivity to [`STATE_TOLERANCE`].
    pub fn from_matrix(rho: Matrix4<Complex64>) -> Result<Self> {
        let state = Self { rho };
        state.check_invariants()?;
        Ok(state)
    }

    pub fn bell(which: BellState) -> Self {
        let v = which.vector();
        Self {
            rho: v * v.adjoint(),
        }
    }

    /// `(|HV⟩ + |VH⟩)/√2`.
    pub fn bell_psi_plus() -> Self {
        Self::bell(BellState::PsiPlus)
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix4::identity() * c(0.25),
        }
    }

    /// `((4F − 1)/3)·|Ψ+⟩⟨Ψ+| + ((1 − F)/3)·I`.
    pub fn werner(fidelity: f64) -> Result<Self> {
        Self::werner_around(BellState::PsiPlus, fidelity)
    }

    /// Werner state of fidelity `F` with respect to an arbitrary Bell state.
    pub fn werner_around(target: BellState, fidelity: f64) -> Result<Self> {
        ensure_range("fidelity", fidelity, 0.25, 1.0, "[1/4, 1]")?;
        let weight = (4.0 * fidelity - 1.0) / 3.0;
        let noise = (1.0 - fidelity) / 3.0;
        let psi = Self::bell(target).rho;
        Ok(Self {
            rho: psi * c(weight) + Matrix4::identity() * c(noise),
        })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    /// `⟨β|ρ|β⟩` for a Bell state `β`.
    pub fn fidelity_with(&self, target: BellState) -> f64 {
        let v = target.vector();
        (v.adjoint() * self.rho * v)[(0, 0)].re
    }

    /// Fidelity with `|Ψ+⟩`.
    pub fn fidelity(&self) -> f64 {
        self.fidelity_with(BellState::PsiPlus)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.rho);
        let mut out = [0.0; 4];
        for (o, v) in out.iter_mut().zip(eig.eigenvalues.iter()) {
            *o = *v;
        }
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn check_invariants(&self) -> Result<()> {
        let herm = (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > STATE_TOLERANCE {
            return Err(Error::Domain {
                name: "hermiticity defect",
                value: herm,
                range: "<= 1e-12",
            });
        }
        let trace_defect = (self.rho.trace() - c(1.0)).norm();
        if trace_defect > STATE_TOLERANCE {
            return Err(Error::Domain {
                name: "trace",
                value: self.rho.trace().re,
                range: "1 ± 1e-12",
            });
        }
        let min_eig = self.eigenvalues()[0];
        if min_eig < -STATE_TOLERANCE {
            return Err(Error::Domain {
                name: "minimum eigenvalue",
                value: min_eig,
                range: ">= -1e-12",
            });
        }
        Ok(())
    }

    /// Applies the local unitary `U_a ⊗ U_b`.
    pub fn transform(&self, alice: &Matrix2<Complex64>, bob: &Matrix2<Complex64>) -> Self {
        let u = alice.kronecker(bob);
        Self {
            rho: u * self.rho * u.adjoint(),
        }
    }

    /// The matrix expressed in the product basis `{|b0 b0⟩, |b0 b1⟩, |b1 b0⟩, |b1 b1⟩}` of `basis`.
    pub fn in_basis(&self, basis: Basis) -> Matrix4<Complex64> {
        let change = Matrix2::from_rows(&[basis.state(0).adjoint(), basis.state(1).adjoint()]);
        self.transform(&change, &change).rho
    }

    /// Born-rule probability `Tr(ρ · Π_a ⊗ Π_b)` of the outcome pair `(bit_a, bit_b)`.
    pub fn outcome_probability(&self, basis_a: Basis, bit_a: u8, basis_b: Basis, bit_b: u8) -> f64 {
        let proj = basis_a
            .projector(bit_a)
            .kronecker(&basis_b.projector(bit_b));
        (self.rho * proj).trace().re.max(0.0)
    }

    /// `[[P(0,0), P(0,1)], [P(1,0), P(1,1)]]` for the basis pair.
    pub fn outcome_probabilities(&self, basis_a: Basis, basis_b: Basis) -> [[f64; 2]; 2] {
        let mut p = [[0.0; 2]; 2];
        for (a, row) in p.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.outcome_probability(basis_a, a as u8, basis_b, b as u8);
            }
        }
        p
    }
}

/// Born-rule outcome distributions for all four basis pairs of one state,
/// computed once and sampled many times.
#[derive(Debug, Clone)]
pub struct BornTable {
    // cumulative distribution over outcomes (0,0), (0,1), (1,0), (1,1)
    cumulative: [[[f64; 4]; 2]; 2],
}

impl BornTable {
    pub fn new(state: &TwoQubitState) -> Self {
        let mut cumulative = [[[0.0; 4]; 2]; 2];
        for ba in Basis::ALL {
            for bb in Basis::ALL {
                let p = state.outcome_probabilities(ba, bb);
                let flat = [p[0][0], p[0][1], p[1][0], p[1][1]];
                let total: f64 = flat.iter().sum();
                let mut acc = 0.0;
                let cdf = &mut cumulative[ba.index()][bb.index()];
                for (k, slot) in cdf.iter_mut().enumerate() {
                    acc += flat[k] / total;
                    *slot = acc;
                }
                cdf[3] = 1.0;
            }
        }
        Self { cumulative }
    }

    pub fn sample<R: Rng + ?Sized>(&self, basis_a: Basis, basis_b: Basis, rng: &mut R) -> (u8, u8) {
        let u: f64 = rng.random();
        let cdf = &self.cumulative[basis_a.index()][basis_b.index()];
        let k = cdf.iter().position(|&edge| u < edge).unwrap_or(3);
        ((k >> 1) as u8, (k & 1) as u8)
    }
}

/// Samples a joint outcome of measuring Alice's qubit in `basis_a` and Bob's in `basis_b`.
pub fn joint_measure<R: Rng + ?Sized>(
    state: &TwoQubitState,
    basis_a: Basis,
    basis_b: Basis,
    rng: &mut R,
) -> (u8, u8) {
    BornTable::new(state).sample(basis_a, basis_b, rng)
}

fn paulis() -> [Matrix2<Complex64>; 4] {
    let i = Complex64::i();
    [
        Matrix2::identity(),
        Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0)),
        Matrix2::new(c(0.0), -i, i, c(0.0)),
        Matrix2::new(c(1.0), c(0.0), c(0.0), c(-1.0)),
    ]
}

/// Projects the inner pair of `left ⊗ right` onto `outcome`, returning the
/// unnormalized state of the outer pair (Alice's qubit of `left`, Bob's of `right`).
fn project_inner(
    left: &Matrix4<Complex64>,
    right: &Matrix4<Complex64>,
    outcome: &Vector4<Complex64>,
) -> Matrix4<Complex64> {
    let mut out = Matrix4::zeros();
    for a in 0..2 {
        for b in 0..2 {
            for a2 in 0..2 {
                for b2 in 0..2 {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r1 in 0..2 {
                        for r2 in 0..2 {
                            let bra = outcome[2 * r1 + r2].conj();
                            if bra == c(0.0) {
                                continue;
                            }
                            for s1 in 0..2 {
                                for s2 in 0..2 {
                                    let ket = outcome[2 * s1 + s2];
                                    acc += bra
                                        * ket
                                        * left[(2 * a + r1, 2 * a2 + s1)]
                                        * right[(2 * r2 + b, 2 * s2 + b2)];
                                }
                            }
                        }
                    }
                    out[(2 * a + b, 2 * a2 + b2)] = acc;
                }
            }
        }
    }
    out
}

/// Pauli correction on Alice's qubit for each Bell-measurement outcome, chosen so
/// that swapping two `|Ψ+⟩` links yields `|Ψ+⟩`.
fn swap_corrections() -> &'static [Matrix2<Complex64>; 4] {
    static TABLE: OnceLock<[Matrix2<Complex64>; 4]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let psi = TwoQubitState::bell_psi_plus().rho;
        let target = BellState::PsiPlus.vector();
        let id = Matrix2::identity();
        let mut table = [Matrix2::identity(); 4];
        for (slot, outcome) in table.iter_mut().zip(BellState::ALL) {
            let post = project_inner(&psi, &psi, &outcome.vector());
            let (best, _) = paulis()
                .into_iter()
                .map(|p| {
                    let u = p.kronecker(&id);
                    let corrected = u * post * u.adjoint();
                    let overlap = (target.adjoint() * corrected * target)[(0, 0)].re;
                    (p, overlap)
                })
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .expect("four candidates");
            *slot = best;
        }
        table
    })
}

/// Deterministic entanglement swap: Bell measurement on the inner qubits,
/// Pauli correction on Alice's qubit, outcomes marginalized.
pub fn swap(left: &TwoQubitState, right: &TwoQubitState) -> TwoQubitState {
    let id = Matrix2::identity();
    let mut rho = Matrix4::zeros();
    for (outcome, correction) in BellState::ALL.iter().zip(swap_corrections()) {
        let post = project_inner(&left.rho, &right.rho, &outcome.vector());
        let u = correction.kronecker(&id);
        rho += u * post * u.adjoint();
    }
    let trace = rho.trace();
    TwoQubitState { rho: rho / trace }
}

/// Swaps a chain of links left to right.
pub fn swap_chain(links: &[TwoQubitState]) -> Option<TwoQubitState> {
    let (first, rest) = links.split_first()?;
    Some(
        rest.iter()
            .fold(first.clone(), |acc, next| swap(&acc, next)),
    )
}

/// Werner-state relation between fidelity and per-basis error rate.
pub fn qber_from_fidelity(fidelity: f64) -> Result<f64> {
    ensure_range("fidelity", fidelity, 0.25, 1.0, "[1/4, 1]")?;
    Ok((1.0 - fidelity) * 2.0 / 3.0)
}

pub fn fidelity_from_qber(qber: f64) -> Result<f64> {
    ensure_range("qber", qber, 0.0, 0.5, "[0, 1/2]")?;
    Ok(1.0 - 1.5 * qber)
}

pub fn visibility_from_qber(qber: f64) -> Result<f64> {
    ensure_range("qber", qber, 0.0, 0.5, "[0, 1/2]")?;
    Ok(1.0 - 2.0 * qber)
}

pub fn qber_from_visibility(visibility: f64) -> Result<f64> {
    ensure_range("visibility", visibility, 0.0, 1.0, "[0, 1]")?;
    Ok((1.0 - visibility) / 2.0)
}

/// Fidelity from the error rates measured in the X, Y and Z bases.
pub fn fidelity_from_three_basis_qber(qx: f64, qy: f64, qz: f64) -> Result<f64> {
    ensure_range("qber_x", qx, 0.0, 0.5, "[0, 1/2]")?;
    ensure_range("qber_y", qy, 0.0, 0.5, "[0, 1/2]")?;
    ensure_range("qber_z", qz, 0.0, 0.5, "[0, 1/2]")?;
    Ok(1.0 - (qx + qy + qz) / 2.0)
}

/// Fidelity, visibility and QBER of one Werner state, kept mutually consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityScalars {
    pub fidelity: f64,
    pub visibility: f64,
    pub qber: f64,
}

impl FidelityScalars {
    pub fn from_fidelity(fidelity: f64) -> Result<Self> {
        let qber = qber_from_fidelity(fidelity)?;
        Ok(Self {
            fidelity,
            visibility: 1.0 - 2.0 * qber,
            qber,
        })
    }

    pub fn from_visibility(visibility: f64) -> Result<Self> {
        let qber = qber_from_visibility(visibility)?;
        Ok(Self {
            fidelity: fidelity_from_qber(qber)?,
            visibility,
            qber,
        })
    }
}
