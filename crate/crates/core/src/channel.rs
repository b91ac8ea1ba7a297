//! Completely positive maps and instruments: Kraus/Choi conversions,
//! CPTP verification, seeded random sampling and Stinespring purification.
//!
//! Choi operators follow the double-ket convention of [`crate::tensor`]:
//! the Choi of a map `E: in -> out` is `sum_k |K_k>><<K_k|` over the space
//! `in (x) out`, so trace preservation reads `tr_out(Choi) = 1_in`.

use ndarray::Array2;
use rand::Rng;

use crate::error::Error;
use crate::linalg;
use crate::rng::stream_rng;
use crate::tensor::{double_ket, LabeledOperator, Subsystem};
use crate::tol;
use crate::{Result, C64};

#[derive(Debug, Clone)]
enum Repr {
    Kraus(Vec<Array2<C64>>),
    Choi(Array2<C64>),
}

/// A completely positive map with declared input and output dimensions,
/// held as a Kraus list or as a Choi operator.
#[derive(Debug, Clone)]
pub struct Channel {
    in_dim: usize,
    out_dim: usize,
    repr: Repr,
}

impl Channel {
    /// Channel from Kraus operators (each `out_dim x in_dim`).
    pub fn from_kraus(in_dim: usize, out_dim: usize, kraus: Vec<Array2<C64>>) -> Result<Self> {
        if kraus.is_empty() {
            return Err(Error::ShapeMismatch("empty Kraus list".into()));
        }
        for k in &kraus {
            if k.dim() != (out_dim, in_dim) {
                return Err(Error::ShapeMismatch(format!(
                    "Kraus operator is {}x{}, expected {}x{}",
                    k.nrows(),
                    k.ncols(),
                    out_dim,
                    in_dim
                )));
            }
        }
        Ok(Self { in_dim, out_dim, repr: Repr::Kraus(kraus) })
    }

    /// Channel from a Choi operator over `in (x) out`.
    pub fn from_choi(in_dim: usize, out_dim: usize, choi: Array2<C64>) -> Result<Self> {
        let d = in_dim * out_dim;
        if choi.dim() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "Choi operator is {}x{}, expected {d}x{d}",
                choi.nrows(),
                choi.ncols()
            )));
        }
        Ok(Self { in_dim, out_dim, repr: Repr::Choi(choi) })
    }

    /// The identity channel on dimension `d`.
    pub fn identity(d: usize) -> Self {
        Self::from_kraus(d, d, vec![Array2::eye(d)]).expect("identity Kraus shape")
    }

    /// Unitary conjugation channel.
    pub fn unitary(u: Array2<C64>) -> Result<Self> {
        if u.nrows() != u.ncols() {
            return Err(Error::ShapeMismatch("unitary channel needs a square matrix".into()));
        }
        let d = u.nrows();
        Self::from_kraus(d, d, vec![u])
    }

    /// Completely depolarizing qubit channel (Kraus set: Paulis over 2).
    pub fn depolarizing_qubit() -> Self {
        let half = C64::new(0.5, 0.0);
        let kraus = pauli_matrices().into_iter().map(|p| p.mapv(|z| z * half)).collect();
        Self::from_kraus(2, 2, kraus).expect("depolarizing Kraus shape")
    }

    /// Qubit amplitude damping with decay probability `gamma` (non-unital
    /// for any positive `gamma`).
    pub fn amplitude_damping(gamma: f64) -> Self {
        let g = gamma.clamp(0.0, 1.0);
        let mut k0 = Array2::<C64>::zeros((2, 2));
        k0[[0, 0]] = C64::new(1.0, 0.0);
        k0[[1, 1]] = C64::new((1.0 - g).sqrt(), 0.0);
        let mut k1 = Array2::<C64>::zeros((2, 2));
        k1[[0, 1]] = C64::new(g.sqrt(), 0.0);
        Self::from_kraus(2, 2, vec![k0, k1]).expect("damping Kraus shape")
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Kraus operators; extracted from the Choi operator when necessary.
    pub fn kraus(&self) -> Result<Vec<Array2<C64>>> {
        match &self.repr {
            Repr::Kraus(k) => Ok(k.clone()),
            Repr::Choi(c) => choi_to_kraus_data(c, self.in_dim, self.out_dim),
        }
    }

    /// The Choi operator over `in (x) out` as a raw matrix.
    pub fn choi(&self) -> Array2<C64> {
        match &self.repr {
            Repr::Choi(c) => c.clone(),
            Repr::Kraus(kraus) => {
                let d = self.in_dim * self.out_dim;
                let mut choi = Array2::<C64>::zeros((d, d));
                for k in kraus {
                    let v = double_ket(k, "in", "out");
                    let amps = v.amplitudes();
                    for i in 0..d {
                        for j in 0..d {
                            choi[[i, j]] += amps[i] * amps[j].conj();
                        }
                    }
                }
                choi
            }
        }
    }

    /// The Choi operator with named subsystems.
    pub fn choi_labeled(&self, in_label: &str, out_label: &str) -> LabeledOperator {
        LabeledOperator::square(
            vec![
                Subsystem::new(in_label, self.in_dim),
                Subsystem::new(out_label, self.out_dim),
            ],
            self.choi(),
        )
        .expect("choi shape is consistent")
    }

    /// Apply the map to a density matrix.
    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        if rho.dim() != (self.in_dim, self.in_dim) {
            return Err(Error::DimensionMismatch(format!(
                "state is {}x{}, channel input is {}",
                rho.nrows(),
                rho.ncols(),
                self.in_dim
            )));
        }
        let mut out = Array2::<C64>::zeros((self.out_dim, self.out_dim));
        for k in self.kraus()? {
            let kr = k.dot(rho);
            out = out + kr.dot(&linalg::adjoint(&k));
        }
        Ok(out)
    }

    /// CPTP diagnostics: eigenvalue floor of the Choi operator and the
    /// largest deviation of `sum_k K_k^dag K_k` (equivalently `tr_out Choi`)
    /// from the identity.
    pub fn cptp_report(&self) -> CptpReport {
        let choi = self.choi();
        let cp_floor = linalg::min_eigenvalue(&choi);
        // tr_out of the Choi over in (x) out
        let mut marginal = Array2::<C64>::zeros((self.in_dim, self.in_dim));
        for i in 0..self.in_dim {
            for j in 0..self.in_dim {
                for o in 0..self.out_dim {
                    marginal[[i, j]] += choi[[i * self.out_dim + o, j * self.out_dim + o]];
                }
            }
        }
        let tp_deviation = linalg::deviation_from_identity(&marginal);
        CptpReport { cp_eigenvalue_floor: cp_floor, tp_deviation }
    }

    /// True when the map is CPTP within the default tolerance.
    pub fn is_cptp(&self) -> bool {
        self.cptp_report().ok(tol::DEFAULT_TOL)
    }

    /// Stinespring purification: a unitary `U` on ancilla (x) system, with
    /// the ancilla initialized in |0>, such that every Kraus operator is
    /// recovered as `K_i = (<i| (x) 1) U (|0> (x) 1)`. The ancilla dimension
    /// is the smallest power of two at or above the Kraus rank.
    pub fn purify(&self) -> Result<Purification> {
        if self.in_dim != self.out_dim {
            return Err(Error::DimensionMismatch(
                "purification to a square unitary needs in_dim == out_dim".into(),
            ));
        }
        let report = self.cptp_report();
        if !report.ok(tol::DEFAULT_TOL) {
            return Err(Error::NotCptp(format!(
                "cp floor {:.3e}, tp deviation {:.3e}",
                report.cp_eigenvalue_floor, report.tp_deviation
            )));
        }
        let kraus = self.kraus()?;
        let d = self.in_dim;
        let anc_dim = kraus.len().next_power_of_two();
        // isometry V = sum_i |i>_anc (x) K_i : columns indexed by system input
        let mut v = Array2::<C64>::zeros((anc_dim * d, d));
        for (i, k) in kraus.iter().enumerate() {
            for o in 0..d {
                for j in 0..d {
                    v[[i * d + o, j]] = k[[o, j]];
                }
            }
        }
        let unitary = linalg::complete_unitary(&v);
        Ok(Purification { unitary, anc_dim, sys_dim: d })
    }
}

/// Result of a CPTP check, with the raw diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct CptpReport {
    /// Smallest eigenvalue of the Choi operator (>= 0 for a CP map).
    pub cp_eigenvalue_floor: f64,
    /// Largest absolute entry of `tr_out(Choi) - 1`.
    pub tp_deviation: f64,
}

impl CptpReport {
    pub fn ok(&self, tolerance: f64) -> bool {
        self.cp_eigenvalue_floor >= -tolerance && self.tp_deviation <= tolerance
    }
}

/// A dilation of a CPTP map to a unitary on ancilla (x) system.
#[derive(Debug, Clone)]
pub struct Purification {
    /// Unitary over ancilla (x) system, ancilla as the most significant factor.
    pub unitary: Array2<C64>,
    pub anc_dim: usize,
    pub sys_dim: usize,
}

impl Purification {
    /// The dilation unitary as a labeled operator.
    pub fn labeled(&self, anc_label: &str, sys_label: &str) -> LabeledOperator {
        LabeledOperator::square(
            vec![
                Subsystem::new(anc_label, self.anc_dim),
                Subsystem::new(sys_label, self.sys_dim),
            ],
            self.unitary.clone(),
        )
        .expect("purification shape is consistent")
    }

    /// Kraus operator recovered from the dilation for ancilla outcome `i`.
    pub fn kraus_operator(&self, i: usize) -> Array2<C64> {
        let d = self.sys_dim;
        let mut k = Array2::<C64>::zeros((d, d));
        for o in 0..d {
            for j in 0..d {
                k[[o, j]] = self.unitary[[i * d + o, j]];
            }
        }
        k
    }
}

/// Choi operator of a channel as a labeled operator over `in (x) out`.
pub fn kraus_to_choi(c: &Channel) -> LabeledOperator {
    c.choi_labeled("in", "out")
}

/// Kraus decomposition of a Choi operator via eigendecomposition, dropping
/// eigenvalues below the extraction cutoff.
pub fn choi_to_kraus(choi: &Array2<C64>, in_dim: usize, out_dim: usize) -> Result<Channel> {
    let kraus = choi_to_kraus_data(choi, in_dim, out_dim)?;
    Channel::from_kraus(in_dim, out_dim, kraus)
}

fn choi_to_kraus_data(
    choi: &Array2<C64>,
    in_dim: usize,
    out_dim: usize,
) -> Result<Vec<Array2<C64>>> {
    let d = in_dim * out_dim;
    if choi.dim() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "Choi operator is {}x{}, expected {d}x{d}",
            choi.nrows(),
            choi.ncols()
        )));
    }
    let (vals, vecs) = linalg::eigh(choi);
    let floor = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if floor < -tol::DEFAULT_TOL {
        return Err(Error::NotPsd(floor));
    }
    let mut kraus = Vec::new();
    for (k, &v) in vals.iter().enumerate() {
        if v <= tol::KRAUS_EIG_CUTOFF {
            continue;
        }
        let scale = v.sqrt();
        let mut m = Array2::<C64>::zeros((out_dim, in_dim));
        for i in 0..in_dim {
            for o in 0..out_dim {
                m[[o, i]] = vecs[[i * out_dim + o, k]] * scale;
            }
        }
        kraus.push(m);
    }
    if kraus.is_empty() {
        // zero map: keep a single zero Kraus operator so shapes stay defined
        kraus.push(Array2::<C64>::zeros((out_dim, in_dim)));
    }
    Ok(kraus)
}

/// Seeded random CPTP map: a Stinespring isometry drawn by orthonormalizing
/// a complex Gaussian matrix, split into `kraus_rank` Kraus blocks.
pub fn random_cptp(seed: u64, in_dim: usize, out_dim: usize, kraus_rank: usize) -> Result<Channel> {
    if kraus_rank == 0 {
        return Err(Error::OutOfRange("kraus_rank must be at least 1".into()));
    }
    if kraus_rank * out_dim < in_dim {
        return Err(Error::DimensionMismatch(
            "kraus_rank * out_dim must be at least in_dim for an isometry".into(),
        ));
    }
    let mut rng = stream_rng(seed, 0);
    random_cptp_with(&mut rng, in_dim, out_dim, kraus_rank)
}

/// Same as [`random_cptp`] but drawing from a caller-provided generator.
pub fn random_cptp_with(
    rng: &mut impl Rng,
    in_dim: usize,
    out_dim: usize,
    kraus_rank: usize,
) -> Result<Channel> {
    let v = linalg::orthonormalize(&linalg::ginibre(kraus_rank * out_dim, in_dim, rng));
    let mut kraus = Vec::with_capacity(kraus_rank);
    for i in 0..kraus_rank {
        let mut k = Array2::<C64>::zeros((out_dim, in_dim));
        for o in 0..out_dim {
            for j in 0..in_dim {
                k[[o, j]] = v[[i * out_dim + o, j]];
            }
        }
        kraus.push(k);
    }
    Channel::from_kraus(in_dim, out_dim, kraus)
}

/// A finite list of CP maps tagged with classical outcomes, summing to a
/// CPTP map.
#[derive(Debug, Clone)]
pub struct Instrument {
    in_dim: usize,
    out_dim: usize,
    elements: Vec<InstrumentElement>,
}

/// One outcome branch of an instrument, as a Kraus list (hence CP by
/// construction; trace-non-increasing is implied by the summed TP check).
#[derive(Debug, Clone)]
pub struct InstrumentElement {
    pub outcome: usize,
    pub kraus: Vec<Array2<C64>>,
}

impl Instrument {
    pub fn new(in_dim: usize, out_dim: usize, elements: Vec<InstrumentElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::ShapeMismatch("instrument needs at least one outcome".into()));
        }
        for e in &elements {
            for k in &e.kraus {
                if k.dim() != (out_dim, in_dim) {
                    return Err(Error::ShapeMismatch(format!(
                        "outcome {}: Kraus operator is {}x{}, expected {}x{}",
                        e.outcome,
                        k.nrows(),
                        k.ncols(),
                        out_dim,
                        in_dim
                    )));
                }
            }
        }
        let inst = Self { in_dim, out_dim, elements };
        let report = inst.total_channel().cptp_report();
        if !report.ok(tol::DEFAULT_TOL) {
            return Err(Error::NotCptp(format!(
                "instrument elements do not sum to a CPTP map (tp deviation {:.3e})",
                report.tp_deviation
            )));
        }
        Ok(inst)
    }

    /// Classical measure-and-prepare instrument: measure in the computational
    /// basis (the outcome) and prepare the fixed basis state `prepare`.
    pub fn measure_prepare(dim: usize, prepare: usize) -> Result<Self> {
        if prepare >= dim {
            return Err(Error::OutOfRange(format!("prepare digit {prepare} for dimension {dim}")));
        }
        let elements = (0..dim)
            .map(|b| {
                let mut k = Array2::<C64>::zeros((dim, dim));
                k[[prepare, b]] = C64::new(1.0, 0.0);
                InstrumentElement { outcome: b, kraus: vec![k] }
            })
            .collect();
        Self::new(dim, dim, elements)
    }

    /// Single-outcome instrument wrapping a CPTP map.
    pub fn trivial(channel: &Channel) -> Result<Self> {
        Self::new(
            channel.in_dim(),
            channel.out_dim(),
            vec![InstrumentElement { outcome: 0, kraus: channel.kraus()? }],
        )
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn elements(&self) -> &[InstrumentElement] {
        &self.elements
    }

    /// The CPTP map obtained by forgetting the outcome.
    pub fn total_channel(&self) -> Channel {
        let kraus: Vec<Array2<C64>> =
            self.elements.iter().flat_map(|e| e.kraus.iter().cloned()).collect();
        Channel::from_kraus(self.in_dim, self.out_dim, kraus).expect("validated shapes")
    }
}

/// The four Pauli matrices (identity first).
pub fn pauli_matrices() -> [Array2<C64>; 4] {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let id = Array2::from_shape_vec((2, 2), vec![one, z, z, one]).unwrap();
    let x = Array2::from_shape_vec((2, 2), vec![z, one, one, z]).unwrap();
    let y = Array2::from_shape_vec((2, 2), vec![z, -i, i, z]).unwrap();
    let zm = Array2::from_shape_vec((2, 2), vec![one, z, z, -one]).unwrap();
    [id, x, y, zm]
}
