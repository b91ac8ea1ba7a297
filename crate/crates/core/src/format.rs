//! Stable JSON interchange formats and run reports.
//!
//! Complex numbers are two-element arrays `[re, im]`; matrices are row-major
//! nested arrays. Process bodies are stored over the canonical subsystem
//! order `P, F, A0I, A0O, A1I, A1O, ...` with composite past/future spaces
//! flattened into single `P` and `F` dimensions. All report types serialize
//! with a fixed field order so identical runs produce byte-identical output.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::Error;
use crate::pctc::PctcSpec;
use crate::process::{PartySlot, ProcessMatrix, ValidityReport};
use crate::tensor::{LabeledOperator, StateVector, Subsystem};
use crate::{Result, C64};

pub type ComplexRepr = [f64; 2];
pub type VectorRepr = Vec<ComplexRepr>;
pub type MatrixRepr = Vec<Vec<ComplexRepr>>;

pub fn vector_to_repr(v: &Array1<C64>) -> VectorRepr {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn repr_to_vector(r: &[ComplexRepr]) -> Array1<C64> {
    Array1::from_iter(r.iter().map(|[re, im]| C64::new(*re, *im)))
}

pub fn matrix_to_repr(m: &Array2<C64>) -> MatrixRepr {
    m.rows().into_iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect()
}

pub fn repr_to_matrix(r: &[Vec<ComplexRepr>]) -> Result<Array2<C64>> {
    let rows = r.len();
    let cols = r.first().map(|x| x.len()).unwrap_or(0);
    if r.iter().any(|row| row.len() != cols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    let mut m = Array2::<C64>::zeros((rows, cols));
    for (i, row) in r.iter().enumerate() {
        for (j, [re, im]) in row.iter().enumerate() {
            m[[i, j]] = C64::new(*re, *im);
        }
    }
    Ok(m)
}

/// Slot dimensions in a process file header.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlotDims {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
}

/// On-disk process format: dims header plus a pure vector or a full matrix
/// over the canonical subsystem order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessFile {
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub slots: Vec<SlotDims>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<VectorRepr>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixRepr>,
}

impl ProcessFile {
    pub fn from_process(w: &ProcessMatrix) -> Result<Self> {
        let mut order: Vec<String> = w.p_labels().to_vec();
        order.extend(w.f_labels().iter().cloned());
        for s in w.slots() {
            order.push(s.in_label.clone());
            order.push(s.out_label.clone());
        }
        let order_ref: Vec<&str> = order.iter().map(|s| s.as_str()).collect();
        let slots = w
            .slots()
            .iter()
            .map(|s| SlotDims { in_dim: s.in_dim, out_dim: s.out_dim })
            .collect();
        let (vector, matrix) = if let Some(v) = w.pure_vector() {
            (Some(vector_to_repr(v.permute(&order_ref)?.amplitudes())), None)
        } else {
            let op = w.matrix_operator().expect("non-pure body is matrix form");
            let aligned = op.permute_rows(&order_ref)?.permute_cols(&order_ref)?;
            (None, Some(matrix_to_repr(aligned.data())))
        };
        Ok(Self { p: w.p_dim(), f: w.f_dim(), slots, vector, matrix })
    }

    pub fn to_process(&self) -> Result<ProcessMatrix> {
        let mut subs = vec![Subsystem::new("P", self.p), Subsystem::new("F", self.f)];
        for (k, s) in self.slots.iter().enumerate() {
            subs.push(Subsystem::new(format!("A{k}I"), s.in_dim));
            subs.push(Subsystem::new(format!("A{k}O"), s.out_dim));
        }
        let slots: Vec<PartySlot> = self
            .slots
            .iter()
            .enumerate()
            .map(|(k, s)| PartySlot {
                in_label: format!("A{k}I"),
                out_label: format!("A{k}O"),
                in_dim: s.in_dim,
                out_dim: s.out_dim,
            })
            .collect();
        match (&self.vector, &self.matrix) {
            (Some(v), None) => {
                let amps = repr_to_vector(v);
                let sv = StateVector::new(subs, amps)?;
                ProcessMatrix::pure(sv, vec!["P".into()], vec!["F".into()], slots)
            }
            (None, Some(m)) => {
                let data = repr_to_matrix(m)?;
                let op = LabeledOperator::square(subs, data)?;
                ProcessMatrix::matrix(op, vec!["P".into()], vec!["F".into()], slots)
            }
            _ => Err(Error::Parse("process file needs exactly one of `vector` or `matrix`".into())),
        }
    }
}

/// On-disk channel format: Kraus list or Choi operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelFile {
    #[serde(rename = "in")]
    pub in_dim: usize,
    #[serde(rename = "out")]
    pub out_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixRepr>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choi: Option<MatrixRepr>,
}

impl ChannelFile {
    pub fn from_channel(c: &crate::channel::Channel) -> Result<Self> {
        Ok(Self {
            in_dim: c.in_dim(),
            out_dim: c.out_dim(),
            kraus: Some(c.kraus()?.iter().map(matrix_to_repr).collect()),
            choi: None,
        })
    }

    pub fn to_channel(&self) -> Result<crate::channel::Channel> {
        match (&self.kraus, &self.choi) {
            (Some(k), None) => {
                let kraus =
                    k.iter().map(|m| repr_to_matrix(m)).collect::<Result<Vec<_>>>()?;
                crate::channel::Channel::from_kraus(self.in_dim, self.out_dim, kraus)
            }
            (None, Some(c)) => {
                crate::channel::Channel::from_choi(self.in_dim, self.out_dim, repr_to_matrix(c)?)
            }
            _ => Err(Error::Parse("channel file needs exactly one of `kraus` or `choi`".into())),
        }
    }
}

/// On-disk labeled state vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub subsystems: Vec<SubsystemRepr>,
    pub amplitudes: VectorRepr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsystemRepr {
    pub label: String,
    pub dim: usize,
}

impl StateFile {
    pub fn from_state(s: &StateVector) -> Self {
        Self {
            subsystems: s
                .subsystems()
                .iter()
                .map(|x| SubsystemRepr { label: x.label.clone(), dim: x.dim })
                .collect(),
            amplitudes: vector_to_repr(s.amplitudes()),
        }
    }

    pub fn to_state(&self) -> Result<StateVector> {
        let subs: Vec<Subsystem> =
            self.subsystems.iter().map(|s| Subsystem::new(&s.label, s.dim)).collect();
        StateVector::new(subs, repr_to_vector(&self.amplitudes))
    }
}

/// On-disk labeled unitary with optional CTC pairing, for the pctc command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitaryFile {
    pub subsystems: Vec<SubsystemRepr>,
    pub matrix: MatrixRepr,
    #[serde(default)]
    pub ctc_pairs: Vec<(String, String)>,
}

impl UnitaryFile {
    pub fn to_spec(&self) -> Result<PctcSpec> {
        let subs: Vec<Subsystem> =
            self.subsystems.iter().map(|s| Subsystem::new(&s.label, s.dim)).collect();
        let op = LabeledOperator::square(subs, repr_to_matrix(&self.matrix)?)?;
        PctcSpec::new(op, self.ctc_pairs.clone())
    }
}

/// Gate-list schema: known structural names (X, SWAP, CNOT, CSWAP, F-ORACLE)
/// omit the matrix payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateListFile {
    pub wires: Vec<SubsystemRepr>,
    pub gates: Vec<GateEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateEntry {
    pub name: String,
    pub controls: Vec<String>,
    pub targets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixRepr>,
}

impl GateListFile {
    pub fn from_circuit(c: &Circuit) -> Self {
        Self {
            wires: c
                .wires()
                .iter()
                .map(|w| SubsystemRepr { label: w.label.clone(), dim: w.dim })
                .collect(),
            gates: c
                .gates()
                .iter()
                .map(|g| GateEntry {
                    name: g.name().to_string(),
                    controls: g.controls.clone(),
                    targets: g.targets.clone(),
                    matrix: g.matrix_payload().map(matrix_to_repr),
                })
                .collect(),
        }
    }
}

/// Common report header: configuration, seed, tool version. Wall time is
/// opt-in so default reports stay byte-identical across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub tolerance: f64,
    pub samples: usize,
    pub budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl Meta {
    pub fn new(subcommand: &str, seed: u64, tolerance: f64, samples: usize, budget: u64) -> Self {
        Self {
            tool: "acausal".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            seed,
            tolerance,
            samples,
            budget,
            wall_ms: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateReport {
    pub meta: Meta,
    pub report: ValidityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SwitchReport {
    pub meta: Meta,
    pub n: usize,
    pub d: usize,
    /// The canonical permutation labeling: row s holds sigma_s.
    pub sigma: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equivalence_max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circuit: Option<GateListFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetReport {
    pub meta: Meta,
    pub n: usize,
    pub channels: String,
    pub simulate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choi_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acausal_tp_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acausal_cp_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub party_queries: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acausal_circuit: Option<GateListFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordered_circuit: Option<GateListFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameRow {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub causal_guess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brute_force: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameReport {
    pub meta: Meta,
    pub rows: Vec<GameRow>,
}

impl GameReport {
    /// CSV rendering: `n,process,causal_guess,brute_force` with empty cells
    /// for strategies that were not evaluated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,process,causal_guess,brute_force\n");
        for r in &self.rows {
            let cell = |v: &Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                cell(&r.process),
                cell(&r.causal_guess),
                cell(&r.brute_force)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PctcReport {
    pub meta: Meta,
    pub probability: f64,
    pub state: StateFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TeleportReport {
    pub meta: Meta,
    pub dim: usize,
    pub fidelity: f64,
    pub probability: f64,
}

/// Serialize a report as pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
