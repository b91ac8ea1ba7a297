//! Gate-list circuits over labeled wires.
//!
//! Gates address wires by label. Known structural gates (X, SWAP, CNOT,
//! CSWAP, F-ORACLE) are applied as index permutations; arbitrary unitaries
//! ride along as named matrix gates, optionally gated on qubit controls.

use ndarray::{Array1, Array2};

use crate::error::Error;
use crate::tensor::{LabeledOperator, StateVector, Subsystem};
use crate::{Result, C64};

/// What a gate does; wires it touches are stored on [`Gate`].
#[derive(Debug, Clone)]
pub enum GateKind {
    /// Bit flip on one qubit target.
    X,
    /// Swap two equal-dimension targets.
    Swap,
    /// Controlled flip: one control, one qubit target.
    Cnot,
    /// Controlled swap: one control, two targets.
    Cswap,
    /// Reversible oracle |x>|y> -> |x>|y (+) table[x]> over two n-qubit
    /// registers (targets list the x wires first, then the y wires).
    FOracle { n: usize, table: Vec<usize> },
    /// Named dense unitary on the target wires, gated on the controls.
    Matrix { name: String, matrix: Array2<C64> },
}

/// One gate with its control and target wire labels.
#[derive(Debug, Clone)]
pub struct Gate {
    pub kind: GateKind,
    pub controls: Vec<String>,
    pub targets: Vec<String>,
}

impl Gate {
    pub fn x(target: &str) -> Self {
        Self { kind: GateKind::X, controls: vec![], targets: vec![target.into()] }
    }

    pub fn swap(a: &str, b: &str) -> Self {
        Self { kind: GateKind::Swap, controls: vec![], targets: vec![a.into(), b.into()] }
    }

    pub fn cnot(control: &str, target: &str) -> Self {
        Self { kind: GateKind::Cnot, controls: vec![control.into()], targets: vec![target.into()] }
    }

    pub fn cswap(control: &str, a: &str, b: &str) -> Self {
        Self {
            kind: GateKind::Cswap,
            controls: vec![control.into()],
            targets: vec![a.into(), b.into()],
        }
    }

    pub fn f_oracle(x_wires: &[&str], y_wires: &[&str], table: Vec<usize>) -> Self {
        assert_eq!(x_wires.len(), y_wires.len());
        let n = x_wires.len();
        assert_eq!(table.len(), 1 << n);
        let mut targets: Vec<String> = x_wires.iter().map(|s| s.to_string()).collect();
        targets.extend(y_wires.iter().map(|s| s.to_string()));
        Self { kind: GateKind::FOracle { n, table }, controls: vec![], targets }
    }

    pub fn matrix(name: &str, matrix: Array2<C64>, targets: &[&str]) -> Self {
        Self {
            kind: GateKind::Matrix { name: name.into(), matrix },
            controls: vec![],
            targets: targets.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Schema name of the gate; known names carry no matrix in the JSON form.
    pub fn name(&self) -> &str {
        match &self.kind {
            GateKind::X => "X",
            GateKind::Swap => "SWAP",
            GateKind::Cnot => "CNOT",
            GateKind::Cswap => "CSWAP",
            GateKind::FOracle { .. } => "F-ORACLE",
            GateKind::Matrix { name, .. } => name,
        }
    }

    /// Matrix payload for gates without a structural definition.
    pub fn matrix_payload(&self) -> Option<&Array2<C64>> {
        match &self.kind {
            GateKind::Matrix { matrix, .. } => Some(matrix),
            _ => None,
        }
    }

    fn wire_positions(&self, state: &StateVector) -> Result<(Vec<usize>, Vec<usize>)> {
        let find = |label: &String| -> Result<usize> {
            state
                .subsystems()
                .iter()
                .position(|s| &s.label == label)
                .ok_or_else(|| Error::UnknownLabel(label.clone()))
        };
        let controls = self.controls.iter().map(find).collect::<Result<Vec<_>>>()?;
        let targets = self.targets.iter().map(find).collect::<Result<Vec<_>>>()?;
        Ok((controls, targets))
    }

    /// Apply the gate to a state, addressing wires by label.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if let GateKind::Matrix { matrix, .. } = &self.kind {
            return self.apply_matrix(state, matrix);
        }
        let (controls, targets) = self.wire_positions(state)?;
        let dims: Vec<usize> = state.subsystems().iter().map(|s| s.dim).collect();
        for &c in &controls {
            if dims[c] != 2 {
                return Err(Error::DimensionMismatch(format!(
                    "control wire `{}` must be a qubit",
                    state.subsystems()[c].label
                )));
            }
        }
        let strides = {
            let mut s = vec![1usize; dims.len()];
            for k in (0..dims.len().saturating_sub(1)).rev() {
                s[k] = s[k + 1] * dims[k + 1];
            }
            s
        };
        let amps = state.amplitudes();
        let mut out = Array1::<C64>::zeros(amps.len());
        for (idx, &a) in amps.iter().enumerate() {
            let active = controls.iter().all(|&c| (idx / strides[c]) % dims[c] == 1);
            let target_idx = if active { self.permute_index(idx, &targets, &dims, &strides)? } else { idx };
            out[target_idx] = a;
        }
        StateVector::new(state.subsystems().to_vec(), out)
    }

    fn permute_index(
        &self,
        idx: usize,
        targets: &[usize],
        dims: &[usize],
        strides: &[usize],
    ) -> Result<usize> {
        let digit = |p: usize| (idx / strides[p]) % dims[p];
        match &self.kind {
            GateKind::X | GateKind::Cnot => {
                let p = targets[0];
                if dims[p] != 2 {
                    return Err(Error::DimensionMismatch("flip target must be a qubit".into()));
                }
                Ok(if digit(p) == 0 { idx + strides[p] } else { idx - strides[p] })
            }
            GateKind::Swap | GateKind::Cswap => {
                let (a, b) = (targets[0], targets[1]);
                if dims[a] != dims[b] {
                    return Err(Error::DimensionMismatch("SWAP needs equal dimensions".into()));
                }
                let (da, db) = (digit(a), digit(b));
                Ok(idx - da * strides[a] + db * strides[a] - db * strides[b] + da * strides[b])
            }
            GateKind::FOracle { n, table } => {
                let mut x = 0usize;
                for &p in &targets[..*n] {
                    x = (x << 1) | digit(p);
                }
                let mask = table[x];
                let mut out = idx;
                for (k, &p) in targets[*n..].iter().enumerate() {
                    if (mask >> (n - 1 - k)) & 1 == 1 {
                        if dims[p] != 2 {
                            return Err(Error::DimensionMismatch(
                                "F-ORACLE register wires must be qubits".into(),
                            ));
                        }
                        if (out / strides[p]) & 1 == 0 {
                            out += strides[p];
                        } else {
                            out -= strides[p];
                        }
                    }
                }
                Ok(out)
            }
            GateKind::Matrix { .. } => unreachable!("matrix gates take the dense path"),
        }
    }

    fn apply_matrix(&self, state: &StateVector, matrix: &Array2<C64>) -> Result<StateVector> {
        let target_subs: Vec<Subsystem> = self
            .targets
            .iter()
            .map(|l| {
                state
                    .subsystems()
                    .iter()
                    .find(|s| &s.label == l)
                    .cloned()
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let op = LabeledOperator::square(target_subs.clone(), matrix.clone())?;
        if self.controls.is_empty() {
            return state.apply(&op);
        }
        // controlled dense gate: block-diagonal over the control register
        let mut subs: Vec<Subsystem> = self
            .controls
            .iter()
            .map(|l| {
                state
                    .subsystems()
                    .iter()
                    .find(|s| &s.label == l)
                    .cloned()
                    .ok_or_else(|| Error::UnknownLabel(l.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        subs.extend(target_subs);
        let cdim: usize = subs[..self.controls.len()].iter().map(|s| s.dim).product();
        let tdim = matrix.nrows();
        let mut data = Array2::<C64>::eye(cdim * tdim);
        let last = cdim - 1; // all controls on
        for i in 0..tdim {
            for j in 0..tdim {
                data[[last * tdim + i, last * tdim + j]] = matrix[[i, j]];
            }
        }
        state.apply(&LabeledOperator::square(subs, data)?)
    }
}

/// An ordered gate list over a fixed wire layout.
#[derive(Debug, Clone)]
pub struct Circuit {
    wires: Vec<Subsystem>,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(wires: Vec<Subsystem>) -> Self {
        Self { wires, gates: Vec::new() }
    }

    pub fn push(&mut self, gate: Gate) {
        self.gates.push(gate);
    }

    pub fn wires(&self) -> &[Subsystem] {
        &self.wires
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn dim(&self) -> usize {
        self.wires.iter().map(|s| s.dim).product()
    }

    /// Evolve a state through the circuit (wires addressed by label, so the
    /// state may carry extra subsystems).
    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let mut s = state.clone();
        for g in &self.gates {
            s = g.apply(&s)?;
        }
        Ok(s)
    }

    /// Dense unitary of the whole circuit over its wire layout.
    pub fn unitary(&self) -> Result<LabeledOperator> {
        let d = self.dim();
        let mut data = Array2::<C64>::zeros((d, d));
        for j in 0..d {
            let mut amps = Array1::<C64>::zeros(d);
            amps[j] = C64::new(1.0, 0.0);
            let col = self.apply(&StateVector::new(self.wires.clone(), amps)?)?;
            for (i, &a) in col.amplitudes().iter().enumerate() {
                data[[i, j]] = a;
            }
        }
        LabeledOperator::square(self.wires.clone(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::rng::master_rng;
    use crate::tensor::subsystems;

    #[test]
    fn x_flips_target() {
        let wires = subsystems(&[("a", 2), ("b", 2)]);
        let s = StateVector::basis(wires.clone(), &[0, 0]).unwrap();
        let out = Gate::x("b").apply(&s).unwrap();
        let expect = StateVector::basis(wires, &[0, 1]).unwrap();
        assert_eq!(out.amplitudes(), expect.amplitudes());
    }

    #[test]
    fn cswap_swaps_only_when_control_set() {
        let wires = subsystems(&[("c", 2), ("a", 2), ("b", 2)]);
        let g = Gate::cswap("c", "a", "b");
        let s = StateVector::basis(wires.clone(), &[0, 1, 0]).unwrap();
        assert_eq!(g.apply(&s).unwrap().amplitudes(), s.amplitudes());
        let s = StateVector::basis(wires.clone(), &[1, 1, 0]).unwrap();
        let expect = StateVector::basis(wires, &[1, 0, 1]).unwrap();
        assert_eq!(g.apply(&s).unwrap().amplitudes(), expect.amplitudes());
    }

    #[test]
    fn cnot_matches_dense_matrix() {
        let wires = subsystems(&[("c", 2), ("t", 2)]);
        let g = Gate::cnot("c", "t");
        let u = Circuit { wires: wires.clone(), gates: vec![g] }.unitary().unwrap();
        let mut expect = Array2::<C64>::zeros((4, 4));
        for (i, j) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            expect[[i, j]] = C64::new(1.0, 0.0);
        }
        assert!(linalg::max_abs_diff(u.data(), &expect) < 1e-15);
    }

    #[test]
    fn f_oracle_xors_table_value() {
        // toy table over 2 bits: f(x) = x itself
        let table = vec![0usize, 1, 2, 3];
        let wires = subsystems(&[("x0", 2), ("x1", 2), ("y0", 2), ("y1", 2)]);
        let g = Gate::f_oracle(&["x0", "x1"], &["y0", "y1"], table);
        let s = StateVector::basis(wires.clone(), &[1, 0, 0, 1]).unwrap();
        // y = 01 xor f(10)=10 -> 11
        let expect = StateVector::basis(wires, &[1, 0, 1, 1]).unwrap();
        assert_eq!(g.apply(&s).unwrap().amplitudes(), expect.amplitudes());
    }

    #[test]
    fn controlled_matrix_gate_blocks_on_control() {
        let mut rng = master_rng(61);
        let u = linalg::haar_unitary(2, &mut rng);
        let wires = subsystems(&[("c", 2), ("t", 2)]);
        let gate = Gate {
            kind: GateKind::Matrix { name: "U".into(), matrix: u.clone() },
            controls: vec!["c".into()],
            targets: vec!["t".into()],
        };
        let dense = Circuit { wires: wires.clone(), gates: vec![gate] }.unitary().unwrap();
        let mut expect = Array2::<C64>::eye(4);
        for i in 0..2 {
            for j in 0..2 {
                expect[[2 + i, 2 + j]] = u[[i, j]];
            }
        }
        assert!(linalg::max_abs_diff(dense.data(), &expect) < 1e-15);
    }

    #[test]
    fn circuit_unitary_composes_gates_in_order() {
        let wires = subsystems(&[("a", 2), ("b", 2)]);
        let mut circ = Circuit::new(wires.clone());
        circ.push(Gate::x("a"));
        circ.push(Gate::cnot("a", "b"));
        let u = circ.unitary().unwrap();
        let s = StateVector::basis(wires, &[0, 0]).unwrap();
        let out = s.apply(&u).unwrap();
        // X on a then CNOT: |00> -> |10> -> |11>
        let expect = StateVector::basis(subsystems(&[("a", 2), ("b", 2)]), &[1, 1]).unwrap();
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-15);
    }
}
