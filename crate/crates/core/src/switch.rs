//! The n-party quantum switch: a pure process placing the parties in a
//! control-dependent superposition of all n! orders.
//!
//! Two constructions are provided and tested against each other:
//!
//! - the process vector over an n!-dimensional control qudit, summing one
//!   wiring term per permutation, and
//! - a circuit of controlled SWAPs whose control register encodes the
//!   permutation index in unary-of-factoradic over n(n-1)/2 qubits.
//!
//! The labeling sigma_s of permutations is fixed to whatever the SWAP
//! staircase realizes on wire positions for the encoded control string; the
//! classical token trace that defines it is [`network_permutation`].

use ndarray::{Array1, Array2};

use crate::circuit::{Circuit, Gate};
use crate::error::Error;
use crate::process::{PartySlot, ProcessMatrix};
use crate::tensor::{double_ket, LabeledOperator, StateVector, Subsystem};
use crate::{Result, C64, DEFAULT_BUDGET};

/// Factoradic digits of a permutation index, with their unary expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoradicCode {
    n: usize,
    /// `digits[k-1]` is the factoradic digit a_k (0 <= a_k <= k), k = 1..n-1.
    digits: Vec<usize>,
}

impl FactoradicCode {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Factoradic digit a_k.
    pub fn digit(&self, k: usize) -> usize {
        self.digits[k - 1]
    }

    /// Unary bit b_{k,i} = 1 iff i <= a_k (1 <= i <= k).
    pub fn unary_bit(&self, k: usize, i: usize) -> bool {
        i <= self.digit(k)
    }

    /// All unary bits in wire order (B11, B21, B22, B31, ...).
    pub fn unary_bits(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for k in 1..self.n {
            for i in 1..=k {
                out.push(self.unary_bit(k, i));
            }
        }
        out
    }

    /// Recover s = sum_k a_k * k!.
    pub fn decode(&self) -> usize {
        let mut fact = 1usize;
        let mut s = 0usize;
        for k in 1..self.n {
            fact *= k;
            s += self.digits[k - 1] * fact;
        }
        s
    }
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Write `s` in the factoradic basis for `n` parties.
pub fn encode_permutation(n: usize, s: usize) -> Result<FactoradicCode> {
    if n < 2 {
        return Err(Error::OutOfRange("the switch needs at least two parties".into()));
    }
    if s >= factorial(n) {
        return Err(Error::OutOfRange(format!("s = {s} is not below n! = {}", factorial(n))));
    }
    let mut digits = vec![0usize; n - 1];
    let mut rem = s;
    for k in (1..n).rev() {
        let fact = factorial(k);
        digits[k - 1] = rem / fact;
        rem %= fact;
    }
    Ok(FactoradicCode { n, digits })
}

/// Control wire labels in circuit order: B11, B21, B22, B31, B32, B33, ...
pub fn control_wire_labels(n: usize) -> Vec<String> {
    let mut out = Vec::new();
    for k in 1..n {
        for i in 1..=k {
            out.push(format!("B{k}{i}"));
        }
    }
    out
}

/// One network step: wires to swap (0-based, the psi wire is index `n`)
/// and the controlling unary bit, if any.
type SwapStep = (usize, usize, Option<(usize, usize)>);

/// The SWAP-network gate schedule shared by the circuit and the classical
/// token trace.
fn swap_schedule(n: usize) -> Vec<SwapStep> {
    let mut gates = Vec::new();
    // controlled staircase: for digit k, swaps walk down from (k, k+1)
    for k in 1..n {
        for i in 1..=k {
            let a = k - i; // 0-based left wire
            gates.push((a, a + 1, Some((k, i))));
        }
    }
    // bring the target into the last wire
    gates.push((n - 1, n, None));
    // unconditional cascade back up
    for a in (0..n - 1).rev() {
        gates.push((a, a + 1, None));
    }
    // mirrored controlled staircase in exact reverse order
    for k in (1..n).rev() {
        for i in (1..=k).rev() {
            let a = k - i;
            gates.push((a, a + 1, Some((k, i))));
        }
    }
    gates
}

/// The permutation sigma_s realized by the SWAP network on wire positions:
/// `sigma[0]` is the party acted on first. Computed by tracing tokens
/// through the classical schedule.
pub fn network_permutation(n: usize, s: usize) -> Result<Vec<usize>> {
    let code = encode_permutation(n, s)?;
    sigma_of_bits(n, &|k, i| code.unary_bit(k, i))
}

fn sigma_of_bits(n: usize, bit: &dyn Fn(usize, usize) -> bool) -> Result<Vec<usize>> {
    // token t at position t: tokens 0..n-1 are the party outputs A^k_O,
    // token n is the target entering at P2
    let mut pos_of_token: Vec<usize> = (0..=n).collect();
    let mut token_at_pos: Vec<usize> = (0..=n).collect();
    let swap = |a: usize, b: usize, pos_of_token: &mut Vec<usize>, token_at_pos: &mut Vec<usize>| {
        let (ta, tb) = (token_at_pos[a], token_at_pos[b]);
        token_at_pos[a] = tb;
        token_at_pos[b] = ta;
        pos_of_token[ta] = b;
        pos_of_token[tb] = a;
    };
    for (a, b, ctrl) in swap_schedule(n) {
        let active = match ctrl {
            None => true,
            Some((k, i)) => bit(k, i),
        };
        if active {
            swap(a, b, &mut pos_of_token, &mut token_at_pos);
        }
    }
    // follow the chain: P2 -> A^{sigma(0)}, A^{sigma(j)}_O -> A^{sigma(j+1)}_I,
    // with the last party's output ending on the psi position (F2)
    let mut sigma = Vec::with_capacity(n);
    let mut token = n;
    for _ in 0..n {
        let pos = pos_of_token[token];
        if pos >= n {
            return Err(Error::ShapeMismatch("token chain left the party wires".into()));
        }
        sigma.push(pos);
        token = pos; // the wiring consumes party `pos`, whose output is token `pos`
    }
    if pos_of_token[token] != n {
        return Err(Error::ShapeMismatch("token chain does not terminate on F2".into()));
    }
    Ok(sigma)
}

/// The quantum switch as a pure process.
#[derive(Debug, Clone)]
pub struct SwitchProcess {
    pub n: usize,
    pub d: usize,
    pub process: ProcessMatrix,
}

impl SwitchProcess {
    pub fn sigma(&self, s: usize) -> Result<Vec<usize>> {
        network_permutation(self.n, s)
    }
}

fn switch_labels(n: usize, d: usize) -> (Vec<Subsystem>, Vec<PartySlot>) {
    let nf = factorial(n);
    let mut subs = vec![Subsystem::new("P1", nf), Subsystem::new("P2", d)];
    let mut slots = Vec::with_capacity(n);
    for k in 0..n {
        subs.push(Subsystem::new(format!("A{k}I"), d));
        subs.push(Subsystem::new(format!("A{k}O"), d));
        slots.push(PartySlot {
            in_label: format!("A{k}I"),
            out_label: format!("A{k}O"),
            in_dim: d,
            out_dim: d,
        });
    }
    subs.push(Subsystem::new("F1", nf));
    subs.push(Subsystem::new("F2", d));
    (subs, slots)
}

/// One wiring term of the switch vector: the maximally entangled chain
/// `P2 -> A^{sigma(0)}_I -> ... -> A^{sigma(n-1)}_O -> F2` (unnormalized).
fn switch_term(n: usize, d: usize, sigma: &[usize]) -> Result<StateVector> {
    let id = Array2::<C64>::eye(d);
    let mut v = double_ket(&id, "P2", &format!("A{}I", sigma[0]));
    for k in 0..n - 1 {
        let link = double_ket(&id, &format!("A{}O", sigma[k]), &format!("A{}I", sigma[k + 1]));
        v = v.kron(&link)?;
    }
    v.kron(&double_ket(&id, &format!("A{}O", sigma[n - 1]), "F2"))
}

/// Build the n-party switch process vector for target dimension `d`.
pub fn build_switch_vector(n: usize, d: usize, budget: u128) -> Result<SwitchProcess> {
    if n < 2 || d < 2 {
        return Err(Error::OutOfRange("switch needs n >= 2 parties and d >= 2".into()));
    }
    let nf = factorial(n) as u128;
    let required = nf * nf * (d as u128).pow(2 * n as u32 + 2);
    if required > budget {
        return Err(Error::ResourceLimit { required, budget });
    }

    let (subs, slots) = switch_labels(n, d);
    let order: Vec<&str> = subs.iter().map(|s| s.label.as_str()).collect();
    let total: usize = subs.iter().map(|s| s.dim).product();
    let mut amps = Array1::<C64>::zeros(total);
    let nf = factorial(n);
    for s in 0..nf {
        let sigma = network_permutation(n, s)?;
        let term = switch_term(n, d, &sigma)?;
        let term = term
            .kron(&StateVector::basis(vec![Subsystem::new("P1", nf)], &[s])?)?
            .kron(&StateVector::basis(vec![Subsystem::new("F1", nf)], &[s])?)?
            .permute(&order)?;
        amps += term.amplitudes();
    }
    let vector = StateVector::new(subs, amps)?;
    let process = ProcessMatrix::pure(
        vector,
        vec!["P1".into(), "P2".into()],
        vec!["F1".into(), "F2".into()],
        slots,
    )?;
    Ok(SwitchProcess { n, d, process })
}

/// The switch circuit: the dashed-box unitary over party wires, the target
/// wire and the unary control register, plus its CTC pairing.
#[derive(Debug, Clone)]
pub struct SwitchCircuit {
    pub n: usize,
    pub d: usize,
    pub circuit: Circuit,
    /// Wire feeding party k's operation (its output teleports back in).
    pub party_wires: Vec<String>,
    /// Carries P2 in and F2 out.
    pub target_wire: String,
    pub control_wires: Vec<String>,
}

impl SwitchCircuit {
    /// CTC pairs of the full switch: each party wire teleports back to itself.
    pub fn ctc_pairs(&self) -> Vec<(String, String)> {
        self.party_wires.iter().map(|w| (w.clone(), w.clone())).collect()
    }

    /// Flat index of the control basis state encoding `s`.
    pub fn control_index(&self, s: usize) -> Result<usize> {
        let code = encode_permutation(self.n, s)?;
        Ok(bits_to_index(&code.unary_bits()))
    }

    /// The unitary restricted to a fixed control bit pattern: an operator on
    /// party wires (x) target wire.
    pub fn block_for_bits(&self, bits: &[bool]) -> Result<LabeledOperator> {
        let u = self.circuit.unitary()?;
        let mut order: Vec<&str> = self.control_wires.iter().map(|s| s.as_str()).collect();
        let mut rest: Vec<&str> = self.party_wires.iter().map(|s| s.as_str()).collect();
        rest.push(self.target_wire.as_str());
        order.extend(rest.iter());
        let u = u.permute_rows(&order)?.permute_cols(&order)?;
        let c = bits_to_index(bits);
        let block_dim: usize = self.d.pow(self.n as u32 + 1);
        let mut data = Array2::<C64>::zeros((block_dim, block_dim));
        for i in 0..block_dim {
            for j in 0..block_dim {
                data[[i, j]] = u.data()[[c * block_dim + i, c * block_dim + j]];
            }
        }
        let subs: Vec<Subsystem> = u.row_subsystems()[self.control_wires.len()..].to_vec();
        LabeledOperator::square(subs, data)
    }

    /// The block for the factoradic encoding of `s`.
    pub fn block_for(&self, s: usize) -> Result<LabeledOperator> {
        let code = encode_permutation(self.n, s)?;
        self.block_for_bits(&code.unary_bits())
    }
}

fn bits_to_index(bits: &[bool]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b))
}

/// Build the controlled-SWAP switch circuit for `n` parties at dimension `d`.
pub fn build_switch_circuit(n: usize, d: usize, budget: u128) -> Result<SwitchCircuit> {
    if n < 2 || d < 2 {
        return Err(Error::OutOfRange("switch needs n >= 2 parties and d >= 2".into()));
    }
    let controls = control_wire_labels(n);
    let dim = (1u128 << controls.len()) * (d as u128).pow(n as u32 + 1);
    if dim * dim > budget {
        return Err(Error::ResourceLimit { required: dim * dim, budget });
    }

    let party_wires: Vec<String> = (1..=n).map(|j| format!("W{j}")).collect();
    let target_wire = "PSI".to_string();
    let mut wires: Vec<Subsystem> =
        party_wires.iter().map(|w| Subsystem::new(w.clone(), d)).collect();
    wires.push(Subsystem::new(&target_wire, d));
    wires.extend(controls.iter().map(|c| Subsystem::new(c.clone(), 2)));

    let mut circuit = Circuit::new(wires);
    let wire_label = |p: usize| -> &str {
        if p == n {
            &target_wire
        } else {
            &party_wires[p]
        }
    };
    for (a, b, ctrl) in swap_schedule(n) {
        match ctrl {
            None => circuit.push(Gate::swap(wire_label(a), wire_label(b))),
            Some((k, i)) => {
                circuit.push(Gate::cswap(&format!("B{k}{i}"), wire_label(a), wire_label(b)))
            }
        }
    }
    Ok(SwitchCircuit { n, d, circuit, party_wires, target_wire, control_wires: controls })
}

/// The wiring vector a control block should realize: the CJ vector of the
/// block unitary relabeled to process spaces, built from sigma directly.
fn expected_block_vector(n: usize, d: usize, sigma: &[usize]) -> Result<StateVector> {
    switch_term(n, d, sigma)
}

/// CJ vector of a circuit block, relabeled to the process spaces
/// (wire j in -> A^{j-1}_O, wire j out -> A^{j-1}_I, PSI in -> P2, out -> F2).
fn block_cj_vector(block: &LabeledOperator, n: usize) -> Result<StateVector> {
    let data = block.data();
    let dims_in: Vec<Subsystem> = block
        .col_subsystems()
        .iter()
        .map(|s| {
            let label = if s.label == "PSI" {
                "P2".to_string()
            } else {
                let j: usize = s.label[1..].parse().expect("wire label");
                format!("A{}O", j - 1)
            };
            Subsystem::new(label, s.dim)
        })
        .collect();
    let dims_out: Vec<Subsystem> = block
        .row_subsystems()
        .iter()
        .map(|s| {
            let label = if s.label == "PSI" {
                "F2".to_string()
            } else {
                let j: usize = s.label[1..].parse().expect("wire label");
                format!("A{}I", j - 1)
            };
            Subsystem::new(label, s.dim)
        })
        .collect();
    let (rows, cols) = data.dim();
    let mut amps = Array1::<C64>::zeros(rows * cols);
    for i in 0..cols {
        for o in 0..rows {
            amps[i * rows + o] = data[[o, i]];
        }
    }
    let mut subs = dims_in;
    subs.extend(dims_out);
    let _ = n;
    StateVector::new(subs, amps)
}

/// Largest deviation, over all n! control strings, between the circuit block
/// CJ vector and the process-vector wiring term (up to one phase per s).
pub fn circuit_vector_equivalence(n: usize, d: usize, budget: u128) -> Result<f64> {
    let sc = build_switch_circuit(n, d, budget)?;
    let mut worst = 0.0f64;
    for s in 0..factorial(n) {
        let sigma = network_permutation(n, s)?;
        let block = sc.block_for(s)?;
        let got = block_cj_vector(&block, n)?;
        let expect = expected_block_vector(n, d, &sigma)?;
        worst = worst.max(got.max_abs_diff_up_to_phase(&expect)?);
    }
    Ok(worst)
}

/// Default-budget convenience constructors.
pub fn switch_vector(n: usize, d: usize) -> Result<SwitchProcess> {
    build_switch_vector(n, d, DEFAULT_BUDGET)
}

pub fn switch_circuit(n: usize, d: usize) -> Result<SwitchCircuit> {
    build_switch_circuit(n, d, DEFAULT_BUDGET)
}
