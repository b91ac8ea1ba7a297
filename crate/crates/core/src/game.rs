//! The causal inequality game played on the deterministic process family.
//!
//! Each party `k` receives a game input bit `x_k`, with `x` promised to lie
//! in the set `S` of strings whose one-hot value `f(x)` is nonzero, drawn
//! uniformly. The parties win when their joint answers reproduce `f(x)`
//! bitwise (for three parties this is exactly the textbook predicate
//! `a_k = x_{k-1} AND NOT x_{k+1}`). Feeding the game inputs through the
//! deterministic process hands every party its answer bit, so the process
//! strategy wins with certainty, while fixed-order classical strategies are
//! bounded away from 1.

use rayon::prelude::*;

use crate::channel::Instrument;
use crate::det::{self, promised_inputs, BitString};
use crate::error::Error;

use crate::{Result, C64};

/// The game definition for `n` parties.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub n: usize,
}

impl GameSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::OutOfRange("the game needs at least three parties".into()));
        }
        Ok(Self { n })
    }

    /// The promised input set `S` (uniform distribution).
    pub fn inputs(&self) -> Vec<BitString> {
        promised_inputs(self.n)
    }

    /// The answer string the parties must produce for input `x`.
    pub fn required_answer(&self, x: &BitString) -> BitString {
        det::f(x)
    }
}

/// A deterministic fixed-order classical strategy with full forwarding:
/// the party at causal position `j` sees the game inputs of all earlier
/// parties plus its own.
#[derive(Debug, Clone)]
pub struct CausalStrategy {
    /// `order[j]` is the party acting at causal position `j`.
    pub order: Vec<usize>,
    /// `tables[j][key]` is position `j`'s answer; `key` packs the known
    /// input bits `(x_{order[0]}, ..., x_{order[j]})` big-endian.
    pub tables: Vec<Vec<bool>>,
}

impl CausalStrategy {
    /// Exact success probability by enumeration over the promised set.
    pub fn evaluate(&self, game: &GameSpec) -> f64 {
        let inputs = game.inputs();
        let wins = inputs.iter().filter(|x| self.wins_on(game, x)).count();
        wins as f64 / inputs.len() as f64
    }

    fn wins_on(&self, game: &GameSpec, x: &BitString) -> bool {
        let answer = self.answers(x);
        let required = game.required_answer(x);
        (0..game.n).all(|k| answer[k] == required.get(k))
    }

    fn answers(&self, x: &BitString) -> Vec<bool> {
        let n = self.order.len();
        let mut out = vec![false; n];
        let mut key = 0usize;
        for (j, &party) in self.order.iter().enumerate() {
            key = (key << 1) | usize::from(x.get(party));
            out[party] = self.tables[j][key];
        }
        out
    }
}

/// The guessing strategy: parties act in the order `0, 1, ..., n-1`, and
/// position `j` answers its bit of `f` computed on the inputs it has seen,
/// with all unseen inputs taken to be zero. The first party therefore
/// always answers 0.
pub fn causal_guess_strategy(n: usize) -> CausalStrategy {
    causal_guess_strategy_rotated(n, 0)
}

/// Same strategy with the causal order cyclically rotated to start at
/// party `start`.
pub fn causal_guess_strategy_rotated(n: usize, start: usize) -> CausalStrategy {
    let order: Vec<usize> = (0..n).map(|j| (j + start) % n).collect();
    let tables = guess_tables(n, &order);
    CausalStrategy { order, tables }
}

fn guess_tables(n: usize, order: &[usize]) -> Vec<Vec<bool>> {
    (0..n)
        .map(|j| {
            let known = &order[..=j];
            (0..1usize << (j + 1))
                .map(|key| {
                    let mut padded = 0u32;
                    for (pos, &party) in known.iter().enumerate() {
                        let bit = (key >> (j - pos)) & 1;
                        if bit == 1 {
                            padded |= 1 << (n - 1 - party);
                        }
                    }
                    let x_hat = BitString::new(n, padded).expect("in range");
                    det::f(&x_hat).get(order[j])
                })
                .collect()
        })
        .collect()
}

/// Success probability of the guessing strategy, by exact
/// enumeration over the promised set.
pub fn evaluate_causal_guess(n: usize) -> Result<f64> {
    let game = GameSpec::new(n)?;
    Ok(causal_guess_strategy(n).evaluate(&game))
}

/// Success probability of the process strategy: every party measures its
/// process input in the computational basis, answers the outcome, and
/// feeds its game input back into the process; the global past holds
/// `|0...0>`. Evaluated through the full quantum outcome distribution.
pub fn evaluate_process_strategy(n: usize, budget: u128) -> Result<f64> {
    let game = GameSpec::new(n)?;
    let det = det::build_det_vector(n, budget)?;
    let dim = 1usize << n;
    let mut rho = ndarray::Array2::<C64>::zeros((dim, dim));
    rho[[0, 0]] = C64::new(1.0, 0.0);

    let inputs = game.inputs();
    let mut total = 0.0f64;
    for x in &inputs {
        let instruments: Vec<Instrument> = (0..n)
            .map(|k| Instrument::measure_prepare(2, usize::from(x.get(k))))
            .collect::<Result<Vec<_>>>()?;
        let dist = det.process.outcome_probabilities(&instruments, &rho)?;
        let required = game.required_answer(x);
        let p_win: f64 = dist
            .iter()
            .filter(|(outcome, _)| {
                (0..n).all(|k| outcome[k] == usize::from(required.get(k)))
            })
            .map(|(_, p)| p)
            .sum();
        total += p_win;
    }
    Ok(total / inputs.len() as f64)
}

/// Result of the exhaustive search over fixed-order deterministic
/// strategies with full forwarding.
#[derive(Debug, Clone)]
pub struct BruteForceBound {
    /// The overall maximum success probability.
    pub max: f64,
    /// Maximum per causal order, in lexicographic order of the orders.
    pub per_order_max: Vec<f64>,
    /// One maximizing strategy.
    pub best: CausalStrategy,
}

/// Exhaustive maximum of the game value over all fixed-order deterministic
/// strategies. Only `n = 3` is tractable (6 orders x 4*16*256 tables).
pub fn brute_force_causal_bound(n: usize) -> Result<BruteForceBound> {
    if n < 3 {
        return Err(Error::OutOfRange("the game needs at least three parties".into()));
    }
    if n > 3 {
        let required: u128 = (1..=n as u128).product::<u128>()
            * (0..n as u32).map(|j| 1u128 << (1u32 << (j + 1))).product::<u128>();
        return Err(Error::ResourceLimit { required, budget: 1 << 25 });
    }
    let game = GameSpec::new(n)?;
    let inputs = game.inputs();
    let orders = permutations(n);

    // per order and input, precompute the running table keys and the
    // required answer bit at each causal position, so the 4*16*256 table
    // enumeration below runs on packed bit operations only
    let results: Vec<(f64, CausalStrategy)> = orders
        .par_iter()
        .map(|order| {
            let data: Vec<([usize; 3], [usize; 3])> = inputs
                .iter()
                .map(|x| {
                    let fx = det::f(x);
                    let mut key = 0usize;
                    let mut keys = [0usize; 3];
                    let mut req = [0usize; 3];
                    for (j, &party) in order.iter().enumerate() {
                        key = (key << 1) | usize::from(x.get(party));
                        keys[j] = key;
                        req[j] = usize::from(fx.get(party));
                    }
                    (keys, req)
                })
                .collect();
            let mut best_wins = 0usize;
            let mut best_tables = (0usize, 0usize, 0usize);
            for t0 in 0..4usize {
                for t1 in 0..16usize {
                    for t2 in 0..256usize {
                        let wins = data
                            .iter()
                            .filter(|(keys, req)| {
                                (t0 >> keys[0]) & 1 == req[0]
                                    && (t1 >> keys[1]) & 1 == req[1]
                                    && (t2 >> keys[2]) & 1 == req[2]
                            })
                            .count();
                        if wins > best_wins {
                            best_wins = wins;
                            best_tables = (t0, t1, t2);
                        }
                    }
                }
            }
            let tables = vec![
                unpack_table(best_tables.0, 2),
                unpack_table(best_tables.1, 4),
                unpack_table(best_tables.2, 8),
            ];
            (
                best_wins as f64 / inputs.len() as f64,
                CausalStrategy { order: order.clone(), tables },
            )
        })
        .collect();

    let per_order_max: Vec<f64> = results.iter().map(|(v, _)| *v).collect();
    let (max, best) = results
        .iter()
        .cloned()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one order");
    Ok(BruteForceBound { max, per_order_max, best })
}

fn unpack_table(packed: usize, len: usize) -> Vec<bool> {
    (0..len).map(|i| (packed >> i) & 1 == 1).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..n).collect();
    permute_into(&mut items, 0, &mut out);
    out.sort();
    out
}

fn permute_into(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute_into(items, k + 1, out);
        items.swap(k, i);
    }
}

/// The classical fixed point of the process wiring for game input `x`:
/// parties feed `x` in, so each receives `f(x)`. Used as the classical
/// oracle for the process strategy.
pub fn classical_fixed_point(x: &BitString) -> BitString {
    det::f(x)
}

/// Winning answers exist and are unique for every promised input (the
/// process strategy realizes them).
pub fn process_strategy_wins_classically(n: usize) -> bool {
    let Ok(game) = GameSpec::new(n) else { return false };
    game.inputs().iter().all(|x| {
        let received = classical_fixed_point(x);
        let required = game.required_answer(x);
        received == required
    })
}
