//! Post-selected closed timelike curves: contraction of CTC subsystems,
//! renormalized evolution, and the underlying teleportation primitive.
//!
//! A CTC pair `(out_label, in_label)` teleports the output of one subsystem
//! of a unitary back to the input of another by projecting both onto the
//! maximally entangled state. With normalized Bell pairs on both sides each
//! contracted pair contributes a factor `1/d`, so for a single pair on a
//! subsystem of dimension `d` the contraction is exactly `tr_2(U)/d`. This
//! normalization makes downstream post-selection probabilities equal to
//! `||K psi||^2` directly.

use crate::channel::Channel;
use crate::error::Error;
use crate::tensor::{LabeledOperator, StateVector, Subsystem};
use crate::tol;
use crate::{Result, C64};

/// A unitary with a set of CTC wirings from output subsystems to input
/// subsystems. Remaining subsystems are chronology-respecting.
#[derive(Debug, Clone)]
pub struct PctcSpec {
    unitary: LabeledOperator,
    pairs: Vec<(String, String)>,
}

impl PctcSpec {
    pub fn new(unitary: LabeledOperator, pairs: Vec<(String, String)>) -> Result<Self> {
        for (o, i) in &pairs {
            let rd = unitary
                .row_subsystems()
                .iter()
                .find(|s| &s.label == o)
                .ok_or_else(|| Error::UnknownLabel(o.clone()))?
                .dim;
            let cd = unitary
                .col_subsystems()
                .iter()
                .find(|s| &s.label == i)
                .ok_or_else(|| Error::UnknownLabel(i.clone()))?
                .dim;
            if rd != cd {
                return Err(Error::DimensionMismatch(format!(
                    "CTC pair ({o}, {i}) wires dimension {rd} to {cd}"
                )));
            }
        }
        Ok(Self { unitary, pairs })
    }

    pub fn unitary(&self) -> &LabeledOperator {
        &self.unitary
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Labels untouched by any CTC pair, in row order.
    pub fn chronology_labels(&self) -> Vec<String> {
        self.unitary
            .row_subsystems()
            .iter()
            .filter(|s| !self.pairs.iter().any(|(o, _)| o == &s.label))
            .map(|s| s.label.clone())
            .collect()
    }

    fn pair_dims(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .map(|(o, _)| {
                self.unitary
                    .row_subsystems()
                    .iter()
                    .find(|s| &s.label == o)
                    .expect("validated")
                    .dim
            })
            .collect()
    }
}

/// Contract the CTC pairs of a spec: `K = (prod 1/d) * tr_pairs(U)`, an
/// operator over the chronology-respecting subsystems only.
pub fn contract(spec: &PctcSpec) -> Result<LabeledOperator> {
    let pairs: Vec<(&str, &str)> =
        spec.pairs.iter().map(|(o, i)| (o.as_str(), i.as_str())).collect();
    let raw = spec.unitary.trace_pairs(&pairs)?;
    let norm: f64 = spec.pair_dims().iter().map(|&d| 1.0 / d as f64).product();
    Ok(raw.scale(C64::new(norm, 0.0)))
}

/// Renormalized P-CTC evolution `psi -> K psi / ||K psi||`.
///
/// Returns [`Error::UndefinedEvolution`] when `||K psi||` vanishes, the
/// pathological case where the post-selection never succeeds.
pub fn evolve(k: &LabeledOperator, psi: &StateVector) -> Result<StateVector> {
    let labels: Vec<&str> = k.col_subsystems().iter().map(|s| s.label.as_str()).collect();
    let aligned = psi.permute(&labels)?;
    let amps = k.data().dot(aligned.amplitudes());
    let out = StateVector::new(k.row_subsystems().to_vec(), amps)?;
    if out.norm() < tol::ZERO_NORM_TOL {
        return Err(Error::UndefinedEvolution);
    }
    out.normalized()
}

/// Post-selection probability of the evolution: `||K psi||^2` under this
/// module's normalization convention.
pub fn postselection_probability(k: &LabeledOperator, psi: &StateVector) -> Result<f64> {
    let labels: Vec<&str> = k.col_subsystems().iter().map(|s| s.label.as_str()).collect();
    let aligned = psi.permute(&labels)?;
    let amps = k.data().dot(aligned.amplitudes());
    Ok(amps.iter().map(|z| z.norm_sqr()).sum())
}

/// Simulate the post-selected teleportation of a single-subsystem state:
/// prepare a normalized maximally entangled pair, Bell-measure the input
/// against one half, and condition on the correction-free outcome.
///
/// Returns the conditioned output state (on the original label) and the
/// success probability, which is `1/d^2` for a `d`-dimensional input.
pub fn postselected_teleport(psi: &StateVector) -> Result<(StateVector, f64)> {
    if psi.subsystems().len() != 1 {
        return Err(Error::ShapeMismatch("teleportation input must be a single subsystem".into()));
    }
    let label = psi.subsystems()[0].label.clone();
    let d = psi.subsystems()[0].dim;

    // |psi>_1 (x) |phi+>_{23}
    let inv_sqrt_d = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut pair = ndarray::Array1::<C64>::zeros(d * d);
    for i in 0..d {
        pair[i * d + i] = inv_sqrt_d;
    }
    let bell = StateVector::new(
        vec![Subsystem::new("__tp2", d), Subsystem::new("__tp3", d)],
        pair,
    )?;
    let joint = psi.clone().relabel(&label, "__tp1")?.kron(&bell)?;

    // project wires (1, 2) onto <phi+|: amplitude on wire 3 is
    // sum_a <phi+|(a,a)| psi[a] |phi+>[a,c]
    let amps = joint.permute(&["__tp1", "__tp2", "__tp3"])?;
    let a3 = {
        let data = amps.amplitudes();
        let mut out = ndarray::Array1::<C64>::zeros(d);
        for a in 0..d {
            for c in 0..d {
                out[c] += inv_sqrt_d.conj() * data[(a * d + a) * d + c];
            }
        }
        out
    };
    let probability: f64 = a3.iter().map(|z| z.norm_sqr()).sum();
    let out = StateVector::new(vec![Subsystem::new(&label, d)], a3)?.normalized()?;
    Ok((out, probability))
}

/// Mixed-state / CPTP variant of the contraction: purify the channel, wire
/// the CTC pairs through the dilation unitary, and read the result back as a
/// (generally trace-decreasing) CP map on the chronology subsystems.
///
/// `channel` must act square on the full subsystem list of `layout`, which
/// names the subsystems and CTC pairs the same way as [`PctcSpec`].
pub fn contract_channel(
    channel: &Channel,
    subsystems: Vec<Subsystem>,
    pairs: Vec<(String, String)>,
) -> Result<Channel> {
    let total: usize = subsystems.iter().map(|s| s.dim).product();
    if channel.in_dim() != total || channel.out_dim() != total {
        return Err(Error::DimensionMismatch(format!(
            "channel acts on dimension {}x{}, subsystem layout gives {}",
            channel.out_dim(),
            channel.in_dim(),
            total
        )));
    }
    let purified = channel.purify()?;
    let mut subs = vec![Subsystem::new("__anc", purified.anc_dim)];
    subs.extend(subsystems);
    // the dilation unitary acts on ancilla (x) system with the ancilla first
    let u = LabeledOperator::square(subs, purified.unitary.clone())?;
    let spec = PctcSpec::new(u, pairs)?;
    let k = contract(&spec)?;

    // ancilla input fixed to |0>, ancilla output summed over as Kraus index
    let chron: Vec<String> = k
        .row_subsystems()
        .iter()
        .filter(|s| s.label != "__anc")
        .map(|s| s.label.clone())
        .collect();
    let mut row_order: Vec<&str> = vec!["__anc"];
    row_order.extend(chron.iter().map(|s| s.as_str()));
    let k = k.permute_rows(&row_order)?.permute_cols(&row_order)?;

    let chron_out: usize = k.row_dim() / purified.anc_dim;
    let chron_in: usize = k.col_dim() / purified.anc_dim;
    let data = k.data();
    let mut kraus = Vec::with_capacity(purified.anc_dim);
    for a in 0..purified.anc_dim {
        let mut m = ndarray::Array2::<C64>::zeros((chron_out, chron_in));
        for r in 0..chron_out {
            for c in 0..chron_in {
                // ancilla input digit 0, output digit a
                m[[r, c]] = data[[a * chron_out + r, c]];
            }
        }
        kraus.push(m);
    }
    Channel::from_kraus(chron_in, chron_out, kraus)
}
