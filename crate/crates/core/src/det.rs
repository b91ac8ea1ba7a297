//! The deterministic acausal process family: a one-hot boolean function `f`
//! wired as a cyclic process, its purified process vector, the induced
//! acausal evolution, and causally ordered simulation circuits that
//! reproduce it with `3n` party-gate queries.
//!
//! Bit `k` of `f` is `x_{k-1} AND (NOT x_{k+1}) AND ... AND (NOT x_{k+n-2})`
//! with cyclic indices: at most one bit of `f(x)` is ever set, and the
//! one-hot structure drives every simulation and orthogonality argument in
//! this module.

use ndarray::{Array1, Array2};

use crate::channel::{Channel, Purification};
use crate::circuit::{Circuit, Gate, GateKind};
use crate::error::Error;
use crate::process::{PartySlot, ProcessMatrix};
use crate::tensor::{StateVector, Subsystem};
use crate::tol;
use crate::{Result, C64, DEFAULT_BUDGET};

/// A cyclic bit string of length `n`; bit 0 is the most significant in the
/// computational-basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitString {
    n: usize,
    bits: u32,
}

impl BitString {
    pub fn new(n: usize, bits: u32) -> Result<Self> {
        if n == 0 || n > 20 {
            return Err(Error::OutOfRange(format!("bit string length {n}")));
        }
        if bits >> n != 0 {
            return Err(Error::OutOfRange(format!("{bits:#b} does not fit in {n} bits")));
        }
        Ok(Self { n, bits })
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut v = 0u32;
        for &b in bits {
            v = (v << 1) | u32::from(b);
        }
        Self::new(bits.len(), v)
    }

    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        Self::new(n, index as u32)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Bit x_k (k = 0 is the most significant index bit).
    pub fn get(&self, k: usize) -> bool {
        (self.bits >> (self.n - 1 - k)) & 1 == 1
    }

    /// Computational-basis index with x_0 most significant.
    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn xor(&self, other: &Self) -> Self {
        Self { n: self.n, bits: self.bits ^ other.bits }
    }

    /// Cyclic shift by `t`: bit k of the result is bit k - t of the input.
    pub fn rotate(&self, t: usize) -> Self {
        let mut out = 0u32;
        for k in 0..self.n {
            let src = (k + self.n - t % self.n) % self.n;
            if self.get(src) {
                out |= 1 << (self.n - 1 - k);
            }
        }
        Self { n: self.n, bits: out }
    }

    pub fn ones(&self) -> u32 {
        self.bits.count_ones()
    }
}

/// The one-hot function: `f(x)_k = x_{k-1} AND_{l=1..n-2} NOT x_{k+l}`,
/// indices cyclic mod n.
pub fn f(x: &BitString) -> BitString {
    let n = x.n();
    let mut out = 0u32;
    for k in 0..n {
        let mut bit = x.get((k + n - 1) % n);
        for l in 1..=n.saturating_sub(2) {
            bit = bit && !x.get((k + l) % n);
        }
        if bit {
            out |= 1 << (n - 1 - k);
        }
    }
    BitString { n, bits: out }
}

/// `f` as an index-to-index table of length 2^n, for oracle gates.
pub fn f_table(n: usize) -> Vec<usize> {
    (0..1usize << n)
        .map(|i| f(&BitString::from_index(n, i).expect("in range")).index())
        .collect()
}

/// The promised input set `S = {x : f(x) != 0}`: the 2n translations of
/// `100...` and `110...`.
pub fn promised_inputs(n: usize) -> Vec<BitString> {
    (0..1usize << n)
        .map(|i| BitString::from_index(n, i).expect("in range"))
        .filter(|x| !f(x).is_zero())
        .collect()
}

/// `U_{f(x)} = (x) X^{f(x)_k}` as an index permutation: XOR by `f(x)`.
fn u_f_matrix(n: usize, mask: usize) -> Array2<C64> {
    let dim = 1usize << n;
    let mut m = Array2::<C64>::zeros((dim, dim));
    for j in 0..dim {
        m[[j ^ mask, j]] = C64::new(1.0, 0.0);
    }
    m
}

/// The purified n-party deterministic process.
#[derive(Debug, Clone)]
pub struct DetProcess {
    pub n: usize,
    pub process: ProcessMatrix,
}

/// Build the process vector `sum_{x,y} |y> |x> U_{f(x)}|y> |x>` over
/// `P, A_O..., A_I..., F` (each register `n` qubits).
pub fn build_det_vector(n: usize, budget: u128) -> Result<DetProcess> {
    if n < 3 {
        return Err(Error::OutOfRange("the deterministic process needs n >= 3".into()));
    }
    let required = 1u128 << (4 * n);
    if required > budget {
        return Err(Error::ResourceLimit { required, budget });
    }
    let dim = 1usize << n;
    let table = f_table(n);
    let mut amps = Array1::<C64>::zeros(dim * dim * dim * dim);
    for y in 0..dim {
        for (x, fx) in table.iter().enumerate() {
            let u = y ^ fx;
            let flat = ((y * dim + x) * dim + u) * dim + x;
            amps[flat] = C64::new(1.0, 0.0);
        }
    }
    let mut subs = vec![Subsystem::new("P", dim)];
    let mut slots = Vec::with_capacity(n);
    for k in 0..n {
        subs.push(Subsystem::new(format!("A{k}O"), 2));
    }
    for k in 0..n {
        subs.push(Subsystem::new(format!("A{k}I"), 2));
        slots.push(PartySlot {
            in_label: format!("A{k}I"),
            out_label: format!("A{k}O"),
            in_dim: 2,
            out_dim: 2,
        });
    }
    subs.push(Subsystem::new("F", dim));
    let vector = StateVector::new(subs, amps)?;
    let process = ProcessMatrix::pure(vector, vec!["P".into()], vec!["F".into()], slots)?;
    Ok(DetProcess { n, process })
}

/// Default-budget constructor.
pub fn det_process(n: usize) -> Result<DetProcess> {
    build_det_vector(n, DEFAULT_BUDGET)
}

/// The induced map from `P` to `F` when each party applies its channel,
/// contracted directly from the process vector.
pub fn acausal_evolution(n: usize, party_ops: &[Channel]) -> Result<Channel> {
    let det = det_process(n)?;
    det.process.apply_process(party_ops)
}

/// The acausal realization of the process as a gate list: the dashed-box
/// unitary (oracle then swap) over loop wires `L*` and system wires `P*`,
/// with each loop wire teleported back to itself through a CTC pair after
/// the party operations.
pub fn acausal_circuit(n: usize) -> (Circuit, Vec<(String, String)>) {
    let l_wires: Vec<String> = (0..n).map(|k| format!("L{k}")).collect();
    let p_wires: Vec<String> = (0..n).map(|k| format!("P{k}")).collect();
    let mut wires: Vec<Subsystem> = l_wires.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
    wires.extend(p_wires.iter().map(|w| Subsystem::new(w.clone(), 2)));
    let mut circuit = Circuit::new(wires);
    let l_ref: Vec<&str> = l_wires.iter().map(|s| s.as_str()).collect();
    let p_ref: Vec<&str> = p_wires.iter().map(|s| s.as_str()).collect();
    circuit.push(Gate::f_oracle(&l_ref, &p_ref, f_table(n)));
    for k in 0..n {
        circuit.push(Gate::swap(&l_wires[k], &p_wires[k]));
    }
    let pairs = l_wires.iter().map(|w| (w.clone(), w.clone())).collect();
    (circuit, pairs)
}

/// A causally ordered simulation circuit with its bookkeeping.
#[derive(Debug, Clone)]
pub struct OrderedSimulation {
    pub circuit: Circuit,
    /// System wires carrying `P` in and `F` out.
    pub system_wires: Vec<String>,
    /// Ancilla wires traced out at the end (with their dimensions).
    pub ancilla_wires: Vec<Subsystem>,
    /// Number of party-gate queries in the circuit (one per dense gate).
    pub party_queries: usize,
}

impl OrderedSimulation {
    /// The induced CPTP map from `P` to `F`: evolve basis states with the
    /// ancillas in |0> and trace the ancillas from the Choi operator.
    pub fn channel(&self) -> Result<Channel> {
        let n = self.system_wires.len();
        let dim = 1usize << n;
        let anc_dim: usize = self.ancilla_wires.iter().map(|s| s.dim).product();
        let mut subs: Vec<Subsystem> =
            self.system_wires.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
        subs.extend(self.ancilla_wires.iter().cloned());

        let mut columns = Vec::with_capacity(dim);
        for p in 0..dim {
            let mut amps = Array1::<C64>::zeros(dim * anc_dim);
            amps[p * anc_dim] = C64::new(1.0, 0.0);
            let state = StateVector::new(subs.clone(), amps)?;
            let out = self.circuit.apply(&state)?.permute(
                &subs.iter().map(|s| s.label.as_str()).collect::<Vec<_>>(),
            )?;
            columns.push(out.amplitudes().to_owned());
        }
        let mut choi = Array2::<C64>::zeros((dim * dim, dim * dim));
        for p in 0..dim {
            for q in 0..dim {
                for fo in 0..dim {
                    for fp in 0..dim {
                        let mut acc = C64::new(0.0, 0.0);
                        for a in 0..anc_dim {
                            acc += columns[p][fo * anc_dim + a]
                                * columns[q][fp * anc_dim + a].conj();
                        }
                        choi[[p * dim + fo, q * dim + fp]] = acc;
                    }
                }
            }
        }
        Channel::from_choi(dim, dim, choi)
    }
}

/// Ordered simulation for unitary party operations: `R, f, R^dag`, a
/// transversal CNOT correction from the ancilla register, `R, f` again.
/// Uses 3n party-gate queries and n ancilla qubits initialized in |0>.
pub fn ordered_simulation_unitary(n: usize, party_us: &[Array2<C64>]) -> Result<OrderedSimulation> {
    if party_us.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} unitaries for {n} parties",
            party_us.len()
        )));
    }
    for u in party_us {
        if u.dim() != (2, 2) {
            return Err(Error::DimensionMismatch("party slots are qubits".into()));
        }
    }
    let sys: Vec<String> = (0..n).map(|k| format!("S{k}")).collect();
    let anc: Vec<String> = (0..n).map(|k| format!("C{k}")).collect();
    let mut wires: Vec<Subsystem> = sys.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
    wires.extend(anc.iter().map(|w| Subsystem::new(w.clone(), 2)));
    let mut circuit = Circuit::new(wires);
    let sys_ref: Vec<&str> = sys.iter().map(|s| s.as_str()).collect();
    let anc_ref: Vec<&str> = anc.iter().map(|s| s.as_str()).collect();
    let table = f_table(n);

    let mut queries = 0usize;
    let r_layer = |circuit: &mut Circuit, dagger: bool, queries: &mut usize| {
        for (k, u) in party_us.iter().enumerate() {
            let (name, m) = if dagger {
                (format!("U{k}_DAG"), crate::linalg::adjoint(u))
            } else {
                (format!("U{k}"), u.clone())
            };
            circuit.push(Gate::matrix(&name, m, &[&sys[k]]));
            *queries += 1;
        }
    };
    r_layer(&mut circuit, false, &mut queries);
    circuit.push(Gate::f_oracle(&sys_ref, &anc_ref, table.clone()));
    r_layer(&mut circuit, true, &mut queries);
    for k in 0..n {
        circuit.push(Gate::cnot(&anc[k], &sys[k]));
    }
    r_layer(&mut circuit, false, &mut queries);
    circuit.push(Gate::f_oracle(&sys_ref, &anc_ref, table));

    Ok(OrderedSimulation {
        circuit,
        system_wires: sys,
        ancilla_wires: anc.iter().map(|w| Subsystem::new(w.clone(), 2)).collect(),
        party_queries: queries,
    })
}

/// Ordered simulation for general CPTP party maps: each channel is purified
/// to a unitary on its own ancilla, and the unitary-case circuit runs with
/// `R = (x) U_{A^k}` (purification ancillas first). All ancillas are traced
/// once at the end.
pub fn ordered_simulation_general(
    n: usize,
    party_channels: &[Channel],
) -> Result<OrderedSimulation> {
    if party_channels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} channels for {n} parties",
            party_channels.len()
        )));
    }
    let purified: Vec<Purification> =
        party_channels.iter().map(|c| c.purify()).collect::<Result<Vec<_>>>()?;

    let sys: Vec<String> = (0..n).map(|k| format!("S{k}")).collect();
    let fanc: Vec<String> = (0..n).map(|k| format!("C{k}")).collect();
    let panc: Vec<String> = (0..n).map(|k| format!("E{k}")).collect();
    let mut wires: Vec<Subsystem> = sys.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
    wires.extend(fanc.iter().map(|w| Subsystem::new(w.clone(), 2)));
    for (k, p) in purified.iter().enumerate() {
        wires.push(Subsystem::new(panc[k].clone(), p.anc_dim));
    }
    let mut circuit = Circuit::new(wires);
    let sys_ref: Vec<&str> = sys.iter().map(|s| s.as_str()).collect();
    let fanc_ref: Vec<&str> = fanc.iter().map(|s| s.as_str()).collect();
    let table = f_table(n);

    let mut queries = 0usize;
    let r_layer = |circuit: &mut Circuit, dagger: bool, queries: &mut usize| {
        for (k, p) in purified.iter().enumerate() {
            let (name, m) = if dagger {
                (format!("U{k}_DAG"), crate::linalg::adjoint(&p.unitary))
            } else {
                (format!("U{k}"), p.unitary.clone())
            };
            circuit.push(Gate {
                kind: GateKind::Matrix { name, matrix: m },
                controls: vec![],
                targets: vec![panc[k].clone(), sys[k].clone()],
            });
            *queries += 1;
        }
    };
    r_layer(&mut circuit, false, &mut queries);
    circuit.push(Gate::f_oracle(&sys_ref, &fanc_ref, table.clone()));
    r_layer(&mut circuit, true, &mut queries);
    for k in 0..n {
        circuit.push(Gate::cnot(&fanc[k], &sys[k]));
    }
    r_layer(&mut circuit, false, &mut queries);
    circuit.push(Gate::f_oracle(&sys_ref, &fanc_ref, table));

    let mut ancilla_wires: Vec<Subsystem> =
        fanc.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
    for (k, p) in purified.iter().enumerate() {
        ancilla_wires.push(Subsystem::new(panc[k].clone(), p.anc_dim));
    }
    Ok(OrderedSimulation { circuit, system_wires: sys, ancilla_wires, party_queries: queries })
}

/// `|<z| R U_{f(y)} R^dag |y>|` for `R = (x) U_k`: the product of the
/// per-party matrix elements (each factor is 2x2).
pub fn orthogonality_magnitude_unitary(
    party_us: &[Array2<C64>],
    y: &BitString,
    z: &BitString,
) -> f64 {
    let n = party_us.len();
    let mask = f(y);
    let mut mag = 1.0f64;
    for (k, u) in party_us.iter().enumerate() {
        let x_pow = if mask.get(k) { u_f_matrix(1, 1) } else { Array2::eye(2) };
        let m = u.dot(&x_pow).dot(&crate::linalg::adjoint(u));
        let amp = m[[usize::from(z.get(k)), usize::from(y.get(k))]];
        mag *= amp.norm();
        let _ = n;
    }
    mag
}

/// Largest entry magnitude of `(1 (x) <z|) R (1 (x) U_{f(y)}) R^dag (1 (x) |y>)`
/// for purified `R`: the operator factorizes over parties into
/// `anc_k x anc_k` blocks, so the maximum is the product of per-party maxima.
pub fn orthogonality_magnitude_dilated(
    purified: &[Purification],
    y: &BitString,
    z: &BitString,
) -> f64 {
    let mask = f(y);
    let mut mag = 1.0f64;
    for (k, p) in purified.iter().enumerate() {
        let a = p.anc_dim;
        let u = &p.unitary; // over anc (x) sys, sys dim 2
        let ud = crate::linalg::adjoint(u);
        let x_pow: Array2<C64> = if mask.get(k) { u_f_matrix(1, 1) } else { Array2::eye(2) };
        // mid = U (1 (x) X^f) U^dag over anc (x) sys
        let mut one_x = Array2::<C64>::zeros((2 * a, 2 * a));
        for i in 0..a {
            for s in 0..2 {
                for t in 0..2 {
                    one_x[[i * 2 + s, i * 2 + t]] = x_pow[[s, t]];
                }
            }
        }
        let mid = u.dot(&one_x).dot(&ud);
        // block (1 (x) <z_k|) mid (1 (x) |y_k>)
        let (zb, yb) = (usize::from(z.get(k)), usize::from(y.get(k)));
        let mut worst = 0.0f64;
        for i in 0..a {
            for j in 0..a {
                worst = worst.max(mid[[i * 2 + zb, j * 2 + yb]].norm());
            }
        }
        mag *= worst;
    }
    mag
}

/// Whether the orthogonality matrix element vanishes within tolerance for a
/// pair of strings. The property must hold whenever `f(y) != f(z)`.
pub fn orthogonality_property(
    party_us: &[Array2<C64>],
    y: &BitString,
    z: &BitString,
) -> bool {
    orthogonality_magnitude_unitary(party_us, y, z) < tol::ORTHOGONALITY_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::random_cptp;
    use crate::linalg;
    use crate::pctc;
    use crate::process::ValidityConfig;
    use crate::rng::master_rng;
    use crate::tensor::kron_data;

    fn bits(n: usize, s: &str) -> BitString {
        let v: Vec<bool> = s.chars().map(|c| c == '1').collect();
        assert_eq!(v.len(), n);
        BitString::from_bits(&v).unwrap()
    }

    /// Literal transcription of the three-party form
    /// f(x0,x1,x2) = (x2 AND NOT x1, x0 AND NOT x2, x1 AND NOT x0).
    fn f3_direct(x: &BitString) -> BitString {
        let (x0, x1, x2) = (x.get(0), x.get(1), x.get(2));
        BitString::from_bits(&[x2 && !x1, x0 && !x2, x1 && !x0]).unwrap()
    }

    #[test]
    fn f_matches_direct_three_party_form() {
        for i in 0..8 {
            let x = BitString::from_index(3, i).unwrap();
            assert_eq!(f(&x), f3_direct(&x), "x = {i:03b}");
        }
        assert_eq!(f(&bits(3, "100")), bits(3, "010"));
        assert_eq!(f(&bits(3, "000")), bits(3, "000"));
    }

    #[test]
    fn f_four_party_case() {
        assert_eq!(f(&bits(4, "1100")), bits(4, "0100"));
        assert_eq!(f(&bits(4, "0000")), bits(4, "0000"));
    }

    #[test]
    fn f_is_one_hot_with_two_preimages() {
        for n in 3..=6 {
            let mut preimages = std::collections::HashMap::new();
            for i in 0..1usize << n {
                let x = BitString::from_index(n, i).unwrap();
                let y = f(&x);
                assert!(y.ones() <= 1, "f({i:b}) = {:b} has multiple bits", y.index());
                if !y.is_zero() {
                    *preimages.entry(y.index()).or_insert(0usize) += 1;
                }
            }
            assert_eq!(preimages.len(), n);
            assert!(preimages.values().all(|&c| c == 2));
        }
    }

    #[test]
    fn promised_set_is_translations_of_leading_patterns() {
        for n in 3..=6 {
            let s = promised_inputs(n);
            assert_eq!(s.len(), 2 * n);
            let single = bits(n, &format!("1{}", "0".repeat(n - 1)));
            let double = bits(n, &format!("11{}", "0".repeat(n - 2)));
            for t in 0..n {
                assert!(s.contains(&single.rotate(t)));
                assert!(s.contains(&double.rotate(t)));
            }
        }
    }

    #[test]
    fn f_is_translation_equivariant() {
        for n in 3..=6 {
            for i in 0..1usize << n {
                let x = BitString::from_index(n, i).unwrap();
                assert_eq!(f(&x.rotate(1)), f(&x).rotate(1));
            }
        }
    }

    #[test]
    fn det_vector_recovers_classical_map_at_zero_input() {
        let det = det_process(3).unwrap();
        let v = det.process.pure_vector().unwrap();
        let dim = 8usize;
        let order: Vec<&str> = v.subsystems().iter().map(|s| s.label.as_str()).collect();
        assert_eq!(order[0], "P");
        // with y = 0 the A_I register reads f(x): check (1,0,0) -> (0,1,0)
        let amps = v.amplitudes();
        for x in 0..dim {
            for u in 0..dim {
                let flat = (x * dim + u) * dim + x; // y = 0 block
                let nonzero = amps[flat].norm() > 0.5;
                assert_eq!(nonzero, u == f_table(3)[x]);
            }
        }
        assert_eq!(f_table(3)[0b100], 0b010);
    }

    #[test]
    fn det_process_is_valid_for_three_and_four_parties() {
        let cfg = ValidityConfig { samples: 25, seed: 9, ..Default::default() };
        for n in [3usize, 4] {
            let det = det_process(n).unwrap();
            let report = det.process.check_validity(&cfg).unwrap();
            assert!(report.valid, "n = {n}: {report:?}");
        }
        // the affine-basis sweep certifies n = 3 exactly
        let basis_cfg = ValidityConfig { samples: 5, seed: 9, basis: true, ..Default::default() };
        let report = det_process(3).unwrap().process.check_validity(&basis_cfg).unwrap();
        assert!(report.valid);
        assert!(report.basis_max_tp_deviation.unwrap() < 1e-9);
    }

    #[test]
    fn induced_unitary_sends_masked_states_to_inputs() {
        let det = det_process(3).unwrap();
        let u_g = det.process.induced_unitary().unwrap();
        let m = u_g.data();
        // U_G maps U_{f(x)}|x> to |x>, e.g. |110> -> |100>
        let table = f_table(3);
        for x in 0..8usize {
            let from = x ^ table[x];
            let mut v = Array1::<C64>::zeros(8);
            v[from] = C64::new(1.0, 0.0);
            let out = m.dot(&v);
            assert!((out[x].norm() - 1.0).abs() < 1e-9, "x = {x:03b}");
        }
        let mut v = Array1::<C64>::zeros(8);
        v[0b110] = C64::new(1.0, 0.0);
        let out = m.dot(&v);
        assert!((out[0b100].norm() - 1.0).abs() < 1e-12);
    }

    fn unitary_channels(n: usize, seed: u64) -> (Vec<Array2<C64>>, Vec<Channel>) {
        let mut rng = master_rng(seed);
        let us: Vec<Array2<C64>> = (0..n).map(|_| linalg::haar_unitary(2, &mut rng)).collect();
        let chs = us.iter().map(|u| Channel::unitary(u.clone()).unwrap()).collect();
        (us, chs)
    }

    #[test]
    fn acausal_evolution_satisfies_transformation_relation() {
        // U_G (U_{f(x)} R^dag |x>) = |x> for every basis string
        let n = 3;
        let (us, chs) = unitary_channels(n, 101);
        let g = acausal_evolution(n, &chs).unwrap();
        let kraus = g.kraus().unwrap();
        assert_eq!(kraus.len(), 1);
        let m = &kraus[0];
        let r = us.iter().skip(1).fold(us[0].clone(), |acc, u| kron_data(&acc, u));
        let rd = linalg::adjoint(&r);
        let table = f_table(n);
        for x in 0..8usize {
            let mut v = Array1::<C64>::zeros(8);
            v[x] = C64::new(1.0, 0.0);
            let w = u_f_matrix(n, table[x]).dot(&rd.dot(&v));
            let out = m.dot(&w);
            for j in 0..8 {
                let expect = if j == x { 1.0 } else { 0.0 };
                assert!((out[j].norm() - expect).abs() < 1e-9, "x = {x:03b}, j = {j:03b}");
            }
        }
    }

    #[test]
    fn acausal_evolution_is_cptp_for_random_channels() {
        let chs: Vec<Channel> = (0..3).map(|k| random_cptp(200 + k, 2, 2, 4).unwrap()).collect();
        let g = acausal_evolution(3, &chs).unwrap();
        let report = g.cptp_report();
        assert!(report.tp_deviation < 1e-9, "tp {}", report.tp_deviation);
        assert!(report.cp_eigenvalue_floor > -1e-9);
    }

    #[test]
    fn masked_kraus_projector_sum_is_identity() {
        // sum_{i,x} U_{f(x)} A_i^dag |x><x| A_i U_{f(x)} = 1
        let n = 3;
        let dim = 1usize << n;
        let chs: Vec<Channel> = (0..n).map(|k| random_cptp(300 + k as u64, 2, 2, 4).unwrap()).collect();
        let kraus: Vec<Vec<Array2<C64>>> = chs.iter().map(|c| c.kraus().unwrap()).collect();
        let table = f_table(n);
        let mut acc = Array2::<C64>::zeros((dim, dim));
        let mut index = vec![0usize; n];
        'outer: loop {
            let mut a = Array2::<C64>::eye(1);
            for (k, &i) in index.iter().enumerate() {
                a = kron_data(&a, &kraus[k][i]);
            }
            let ad = linalg::adjoint(&a);
            for x in 0..dim {
                let uf = u_f_matrix(n, table[x]);
                let mut proj = Array2::<C64>::zeros((dim, dim));
                proj[[x, x]] = C64::new(1.0, 0.0);
                acc = acc + uf.dot(&ad).dot(&proj).dot(&a).dot(&uf);
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                index[k] += 1;
                if index[k] < kraus[k].len() {
                    break;
                }
                index[k] = 0;
            }
        }
        assert!(linalg::deviation_from_identity(&acc) < 1e-9);
    }

    #[test]
    fn ordered_unitary_simulation_matches_acausal_evolution() {
        let n = 3;
        let (us, chs) = unitary_channels(n, 11);
        let sim = ordered_simulation_unitary(n, &us).unwrap();
        assert_eq!(sim.party_queries, 3 * n);
        let ordered = sim.channel().unwrap().choi();
        let acausal = acausal_evolution(n, &chs).unwrap().choi();
        assert!(linalg::max_abs_diff(&ordered, &acausal) < 1e-9);
    }

    #[test]
    fn ordered_simulation_with_identities_is_the_masked_permutation() {
        let n = 3;
        let us: Vec<Array2<C64>> = (0..n).map(|_| Array2::eye(2)).collect();
        let sim = ordered_simulation_unitary(n, &us).unwrap();
        let ordered = sim.channel().unwrap().choi();
        let ids: Vec<Channel> = (0..n).map(|_| Channel::identity(2)).collect();
        let acausal = acausal_evolution(n, &ids).unwrap().choi();
        assert!(linalg::max_abs_diff(&ordered, &acausal) < 1e-12);
    }

    #[test]
    fn ordered_general_simulation_reduces_to_unitary_case() {
        let n = 3;
        let (us, chs) = unitary_channels(n, 13);
        let a = ordered_simulation_unitary(n, &us).unwrap().channel().unwrap().choi();
        let b = ordered_simulation_general(n, &chs).unwrap().channel().unwrap().choi();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-9);
    }

    #[test]
    fn ordered_general_simulation_matches_acausal_for_cptp() {
        let n = 3;
        let chs: Vec<Channel> = (0..n).map(|k| random_cptp(23 + k as u64, 2, 2, 4).unwrap()).collect();
        let sim = ordered_simulation_general(n, &chs).unwrap();
        assert_eq!(sim.party_queries, 3 * n);
        let ordered = sim.channel().unwrap().choi();
        let acausal = acausal_evolution(n, &chs).unwrap().choi();
        assert!(linalg::max_abs_diff(&ordered, &acausal) < 1e-9);
    }

    #[test]
    fn ordered_general_simulation_handles_non_unital_maps() {
        let n = 3;
        let chs = vec![
            Channel::amplitude_damping(0.35),
            Channel::amplitude_damping(0.7),
            random_cptp(31, 2, 2, 4).unwrap(),
        ];
        let ordered = ordered_simulation_general(n, &chs).unwrap().channel().unwrap().choi();
        let acausal = acausal_evolution(n, &chs).unwrap().choi();
        assert!(linalg::max_abs_diff(&ordered, &acausal) < 1e-9);
    }

    #[test]
    fn final_ancillas_disentangle_for_unitary_simulation() {
        let n = 3;
        let (us, _) = unitary_channels(n, 17);
        let sim = ordered_simulation_unitary(n, &us).unwrap();
        let mut rng = master_rng(18);
        let psi = linalg::random_state(8, &mut rng);
        let mut subs: Vec<Subsystem> =
            sim.system_wires.iter().map(|w| Subsystem::new(w.clone(), 2)).collect();
        subs.extend(sim.ancilla_wires.iter().cloned());
        let mut amps = Array1::<C64>::zeros(64);
        for (i, a) in psi.iter().enumerate() {
            amps[i * 8] = *a;
        }
        let state = StateVector::new(subs.clone(), amps).unwrap();
        let out = sim.circuit.apply(&state).unwrap();
        let out = out
            .permute(&subs.iter().map(|s| s.label.as_str()).collect::<Vec<_>>())
            .unwrap();
        // weight outside the anc = |000> sector must vanish
        let mut leak = 0.0f64;
        for i in 0..64 {
            if i % 8 != 0 {
                leak += out.amplitudes()[i].norm_sqr();
            }
        }
        assert!(leak < 1e-18, "ancilla leakage {leak}");
    }

    #[test]
    fn orthogonality_holds_exactly_when_f_values_differ() {
        let n = 3;
        let (us, _) = unitary_channels(n, 19);
        for yi in 0..8usize {
            for zi in 0..8usize {
                let y = BitString::from_index(n, yi).unwrap();
                let z = BitString::from_index(n, zi).unwrap();
                let mag = orthogonality_magnitude_unitary(&us, &y, &z);
                if f(&y) != f(&z) {
                    assert!(mag < tol::ORTHOGONALITY_TOL, "({yi:03b},{zi:03b}): {mag}");
                    assert!(orthogonality_property(&us, &y, &z));
                }
            }
        }
        // diagonal terms are generically nonzero
        let y = BitString::from_index(n, 0).unwrap();
        assert!(orthogonality_magnitude_unitary(&us, &y, &y) > 1e-3);
    }

    #[test]
    fn orthogonality_magnitude_matches_dense_computation() {
        let n = 3;
        let (us, _) = unitary_channels(n, 29);
        let r = us.iter().skip(1).fold(us[0].clone(), |acc, u| kron_data(&acc, u));
        let rd = linalg::adjoint(&r);
        let table = f_table(n);
        for yi in 0..8usize {
            let uf = u_f_matrix(n, table[yi]);
            let m = r.dot(&uf).dot(&rd);
            for zi in 0..8usize {
                let y = BitString::from_index(n, yi).unwrap();
                let z = BitString::from_index(n, zi).unwrap();
                let dense = m[[zi, yi]].norm();
                let fact = orthogonality_magnitude_unitary(&us, &y, &z);
                assert!((dense - fact).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dilated_orthogonality_vanishes_for_cptp_purifications() {
        let n = 3;
        let chs: Vec<Channel> = (0..n).map(|k| random_cptp(41 + k as u64, 2, 2, 4).unwrap()).collect();
        let purified: Vec<Purification> = chs.iter().map(|c| c.purify().unwrap()).collect();
        for yi in 0..8usize {
            for zi in 0..8usize {
                let y = BitString::from_index(n, yi).unwrap();
                let z = BitString::from_index(n, zi).unwrap();
                if f(&y) != f(&z) {
                    let mag = orthogonality_magnitude_dilated(&purified, &y, &z);
                    assert!(mag < tol::ORTHOGONALITY_TOL, "({yi:03b},{zi:03b}): {mag}");
                }
            }
        }
    }

    #[test]
    fn acausal_circuit_contraction_matches_process_contraction() {
        // apply party unitaries to the loop wires of the dashed-box circuit,
        // contract the CTC pairs, and compare with the process route
        let n = 3;
        let (us, chs) = unitary_channels(n, 43);
        let (circuit, pairs) = acausal_circuit(n);
        let mut full = circuit.clone();
        for (k, u) in us.iter().enumerate() {
            full.push(Gate::matrix(&format!("U{k}"), u.clone(), &[&format!("L{k}")]));
        }
        let unitary = full.unitary().unwrap();
        let spec = pctc::PctcSpec::new(unitary, pairs).unwrap();
        let k = pctc::contract(&spec).unwrap();
        let scale = C64::new(8.0, 0.0); // d^n for the three contracted qubit pairs
        let k = k.scale(scale);

        let g = acausal_evolution(n, &chs).unwrap();
        let kraus = g.kraus().unwrap();
        // K rows/cols are the P wires in order; flat index must agree
        let got = k
            .permute_rows(&["P0", "P1", "P2"])
            .unwrap()
            .permute_cols(&["P0", "P1", "P2"])
            .unwrap();
        assert!(linalg::max_abs_diff(got.data(), &kraus[0]) < 1e-9);
    }

    #[test]
    fn pure_and_matrix_det_forms_agree() {
        let det = det_process(3).unwrap();
        let wm = det.process.to_matrix_form();
        let chs: Vec<Channel> = (0..3).map(|k| random_cptp(51 + k as u64, 2, 2, 2).unwrap()).collect();
        let a = det.process.apply_process(&chs).unwrap().choi();
        let b = wm.apply_process(&chs).unwrap().choi();
        assert!(linalg::max_abs_diff(&a, &b) < 1e-9);
    }

    #[test]
    fn budget_guard_rejects_oversized_construction() {
        assert!(matches!(build_det_vector(7, DEFAULT_BUDGET), Err(Error::ResourceLimit { .. })));
        assert!(matches!(build_det_vector(2, DEFAULT_BUDGET), Err(Error::OutOfRange(_))));
    }
}
