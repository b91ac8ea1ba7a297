//! Dense complex linear algebra over labeled tensor-product spaces.
//!
//! Operators and state vectors carry an ordered list of named subsystems.
//! All contractions address subsystems by label, never by raw index, so
//! values can be freely reordered without index drift. Composite indices are
//! big-endian: the first subsystem in the list is the most significant digit
//! of the flat index, matching the usual Kronecker-product convention.

use ndarray::{Array1, Array2};

use crate::error::Error;
use crate::{Result, C64};

/// A named tensor factor with its dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subsystem {
    pub label: String,
    pub dim: usize,
}

impl Subsystem {
    pub fn new(label: impl Into<String>, dim: usize) -> Self {
        Self { label: label.into(), dim }
    }
}

/// Shorthand for building a subsystem list.
pub fn subsystems(spec: &[(&str, usize)]) -> Vec<Subsystem> {
    spec.iter().map(|(l, d)| Subsystem::new(*l, *d)).collect()
}

fn total_dim(subs: &[Subsystem]) -> usize {
    subs.iter().map(|s| s.dim).product()
}

fn check_unique(subs: &[Subsystem]) -> Result<()> {
    for (i, s) in subs.iter().enumerate() {
        if subs[i + 1..].iter().any(|t| t.label == s.label) {
            return Err(Error::DuplicateLabel(s.label.clone()));
        }
    }
    Ok(())
}

fn find(subs: &[Subsystem], label: &str) -> Option<usize> {
    subs.iter().position(|s| s.label == label)
}

/// Big-endian strides for a dimension list.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets of every digit tuple over `dims`, where digit `j` is placed
/// at `parent_strides[positions[j]]`. Enumerated in row-major order of `dims`.
fn sub_offsets(dims: &[usize], parent_strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; dims.len()];
    for _ in 0..total {
        let off = digits
            .iter()
            .zip(positions)
            .map(|(&d, &p)| d * parent_strides[p])
            .sum();
        out.push(off);
        for j in (0..dims.len()).rev() {
            digits[j] += 1;
            if digits[j] < dims[j] {
                break;
            }
            digits[j] = 0;
        }
    }
    if dims.is_empty() {
        // single empty tuple contributes offset 0
        debug_assert_eq!(out.len(), 1);
    }
    out
}

/// Index-remap table for reordering subsystems: entry `i` is the flat index
/// in the new order of the basis element with flat index `i` in the old one.
fn permutation_map(old: &[Subsystem], order: &[usize]) -> Vec<usize> {
    let old_dims: Vec<usize> = old.iter().map(|s| s.dim).collect();
    let old_strides = strides(&old_dims);
    let new_dims: Vec<usize> = order.iter().map(|&p| old_dims[p]).collect();
    let new_strides = strides(&new_dims);
    let total: usize = old_dims.iter().product();
    let mut map = vec![0usize; total];
    for (i, m) in map.iter_mut().enumerate() {
        let mut flat = 0;
        for (k, &p) in order.iter().enumerate() {
            let digit = (i / old_strides[p]) % old_dims[p];
            flat += digit * new_strides[k];
        }
        *m = flat;
    }
    map
}

fn resolve_order(subs: &[Subsystem], labels: &[&str]) -> Result<Vec<usize>> {
    if labels.len() != subs.len() {
        return Err(Error::ShapeMismatch(format!(
            "permutation lists {} labels, operand has {} subsystems",
            labels.len(),
            subs.len()
        )));
    }
    let mut order = Vec::with_capacity(labels.len());
    for l in labels {
        let p = find(subs, l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))?;
        if order.contains(&p) {
            return Err(Error::DuplicateLabel((*l).to_string()));
        }
        order.push(p);
    }
    Ok(order)
}

/// Dense matrix over labeled row (output) and column (input) spaces.
#[derive(Debug, Clone)]
pub struct LabeledOperator {
    row: Vec<Subsystem>,
    col: Vec<Subsystem>,
    data: Array2<C64>,
}

impl LabeledOperator {
    /// Operator with distinct row and column subsystem lists.
    pub fn new(row: Vec<Subsystem>, col: Vec<Subsystem>, data: Array2<C64>) -> Result<Self> {
        check_unique(&row)?;
        check_unique(&col)?;
        let (r, c) = (total_dim(&row), total_dim(&col));
        if data.nrows() != r || data.ncols() != c {
            return Err(Error::ShapeMismatch(format!(
                "data is {}x{}, declared dimensions give {}x{}",
                data.nrows(),
                data.ncols(),
                r,
                c
            )));
        }
        Ok(Self { row, col, data })
    }

    /// Square operator: identical row and column subsystems.
    pub fn square(subs: Vec<Subsystem>, data: Array2<C64>) -> Result<Self> {
        Self::new(subs.clone(), subs, data)
    }

    /// Identity on the given subsystems.
    pub fn identity(subs: Vec<Subsystem>) -> Self {
        let d = total_dim(&subs);
        Self::square(subs, Array2::eye(d)).expect("identity shape is consistent")
    }

    /// Square operator acting on a single labeled subsystem.
    pub fn on_one(label: &str, matrix: Array2<C64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::ShapeMismatch("single-subsystem operator must be square".into()));
        }
        let d = matrix.nrows();
        Self::square(vec![Subsystem::new(label, d)], matrix)
    }

    pub fn row_subsystems(&self) -> &[Subsystem] {
        &self.row
    }

    pub fn col_subsystems(&self) -> &[Subsystem] {
        &self.col
    }

    pub fn data(&self) -> &Array2<C64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<C64> {
        self.data
    }

    pub fn row_dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn col_dim(&self) -> usize {
        self.data.ncols()
    }

    fn row_dims(&self) -> Vec<usize> {
        self.row.iter().map(|s| s.dim).collect()
    }

    fn col_dims(&self) -> Vec<usize> {
        self.col.iter().map(|s| s.dim).collect()
    }

    /// Tensor product. Label sets must be disjoint on each side.
    pub fn kron(&self, other: &Self) -> Result<Self> {
        for s in &other.row {
            if find(&self.row, &s.label).is_some() {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        for s in &other.col {
            if find(&self.col, &s.label).is_some() {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        let mut row = self.row.clone();
        row.extend(other.row.iter().cloned());
        let mut col = self.col.clone();
        col.extend(other.col.iter().cloned());
        let data = kron_data(&self.data, &other.data);
        Self::new(row, col, data)
    }

    /// Contract row subsystem `out_label` against column subsystem `in_label`
    /// for every pair, summing over their (equal) dimensions. This is the
    /// wiring primitive: a plain partial trace is the special case where each
    /// pair names the same label on both sides.
    pub fn trace_pairs(&self, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut row_pos = Vec::with_capacity(pairs.len());
        let mut col_pos = Vec::with_capacity(pairs.len());
        for (o, i) in pairs {
            let rp = find(&self.row, o).ok_or_else(|| Error::UnknownLabel((*o).to_string()))?;
            let cp = find(&self.col, i).ok_or_else(|| Error::UnknownLabel((*i).to_string()))?;
            if self.row[rp].dim != self.col[cp].dim {
                return Err(Error::DimensionMismatch(format!(
                    "cannot wire `{}` (dim {}) to `{}` (dim {})",
                    o, self.row[rp].dim, i, self.col[cp].dim
                )));
            }
            if row_pos.contains(&rp) || col_pos.contains(&cp) {
                return Err(Error::DuplicateLabel(format!("{o}/{i} paired twice")));
            }
            row_pos.push(rp);
            col_pos.push(cp);
        }

        let row_dims = self.row_dims();
        let col_dims = self.col_dims();
        let rstr = strides(&row_dims);
        let cstr = strides(&col_dims);

        let keep_row: Vec<usize> = (0..self.row.len()).filter(|p| !row_pos.contains(p)).collect();
        let keep_col: Vec<usize> = (0..self.col.len()).filter(|p| !col_pos.contains(p)).collect();
        let keep_row_dims: Vec<usize> = keep_row.iter().map(|&p| row_dims[p]).collect();
        let keep_col_dims: Vec<usize> = keep_col.iter().map(|&p| col_dims[p]).collect();
        let pair_dims: Vec<usize> = row_pos.iter().map(|&p| row_dims[p]).collect();

        let row_base = sub_offsets(&keep_row_dims, &rstr, &keep_row);
        let col_base = sub_offsets(&keep_col_dims, &cstr, &keep_col);
        let pair_row = sub_offsets(&pair_dims, &rstr, &row_pos);
        let pair_col = sub_offsets(&pair_dims, &cstr, &col_pos);

        let mut out = Array2::<C64>::zeros((row_base.len(), col_base.len()));
        for (ri, &rb) in row_base.iter().enumerate() {
            for (ci, &cb) in col_base.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (tr, tc) in pair_row.iter().zip(&pair_col) {
                    acc += self.data[[rb + tr, cb + tc]];
                }
                out[[ri, ci]] = acc;
            }
        }
        let row: Vec<Subsystem> = keep_row.iter().map(|&p| self.row[p].clone()).collect();
        let col: Vec<Subsystem> = keep_col.iter().map(|&p| self.col[p].clone()).collect();
        Self::new(row, col, out)
    }

    /// Partial trace over the named square subsystems.
    pub fn partial_trace(&self, labels: &[&str]) -> Result<Self> {
        for l in labels {
            let rp = find(&self.row, l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))?;
            let cp = find(&self.col, l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))?;
            if self.row[rp].dim != self.col[cp].dim {
                return Err(Error::NonSquareSubsystem((*l).to_string()));
            }
        }
        let pairs: Vec<(&str, &str)> = labels.iter().map(|l| (*l, *l)).collect();
        self.trace_pairs(&pairs)
    }

    /// Partial transpose over the named square subsystems. Applying it twice
    /// returns the input exactly (it permutes entries bitwise).
    pub fn partial_transpose(&self, labels: &[&str]) -> Result<Self> {
        let mut rp = Vec::with_capacity(labels.len());
        let mut cp = Vec::with_capacity(labels.len());
        for l in labels {
            let r = find(&self.row, l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))?;
            let c = find(&self.col, l).ok_or_else(|| Error::UnknownLabel((*l).to_string()))?;
            if self.row[r].dim != self.col[c].dim {
                return Err(Error::NonSquareSubsystem((*l).to_string()));
            }
            rp.push(r);
            cp.push(c);
        }
        let row_dims = self.row_dims();
        let col_dims = self.col_dims();
        let rstr = strides(&row_dims);
        let cstr = strides(&col_dims);
        let mut out = Array2::<C64>::zeros(self.data.dim());
        for i in 0..self.data.nrows() {
            for j in 0..self.data.ncols() {
                let mut ni = i;
                let mut nj = j;
                for (&r, &c) in rp.iter().zip(&cp) {
                    let di = (i / rstr[r]) % row_dims[r];
                    let dj = (j / cstr[c]) % col_dims[c];
                    ni = ni - di * rstr[r] + dj * rstr[r];
                    nj = nj - dj * cstr[c] + di * cstr[c];
                }
                out[[ni, nj]] = self.data[[i, j]];
            }
        }
        Self::new(self.row.clone(), self.col.clone(), out)
    }

    /// Conjugate transpose; row and column subsystem lists swap.
    pub fn dagger(&self) -> Self {
        let data = self.data.t().mapv(|z| z.conj());
        Self {
            row: self.col.clone(),
            col: self.row.clone(),
            data,
        }
    }

    /// Matrix product `self * other`. `other`'s rows are aligned to `self`'s
    /// columns by label before multiplying.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let labels: Vec<&str> = self.col.iter().map(|s| s.label.as_str()).collect();
        let aligned = other.permute_rows(&labels)?;
        for (a, b) in self.col.iter().zip(aligned.row.iter()) {
            if a.dim != b.dim {
                return Err(Error::DimensionMismatch(format!(
                    "label `{}`: {} vs {}",
                    a.label, a.dim, b.dim
                )));
            }
        }
        let data = self.data.dot(&aligned.data);
        Self::new(self.row.clone(), aligned.col, data)
    }

    /// Reorder row subsystems to the given label order.
    pub fn permute_rows(&self, labels: &[&str]) -> Result<Self> {
        let order = resolve_order(&self.row, labels)?;
        if order.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let map = permutation_map(&self.row, &order);
        let mut out = Array2::<C64>::zeros(self.data.dim());
        for (i, &ni) in map.iter().enumerate() {
            for j in 0..self.data.ncols() {
                out[[ni, j]] = self.data[[i, j]];
            }
        }
        let row = order.iter().map(|&p| self.row[p].clone()).collect();
        Self::new(row, self.col.clone(), out)
    }

    /// Reorder column subsystems to the given label order.
    pub fn permute_cols(&self, labels: &[&str]) -> Result<Self> {
        let order = resolve_order(&self.col, labels)?;
        if order.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let map = permutation_map(&self.col, &order);
        let mut out = Array2::<C64>::zeros(self.data.dim());
        for i in 0..self.data.nrows() {
            for j in 0..self.data.ncols() {
                out[[i, map[j]]] = self.data[[i, j]];
            }
        }
        let col = order.iter().map(|&p| self.col[p].clone()).collect();
        Self::new(self.row.clone(), col, out)
    }

    /// Rename a subsystem on both sides (or one side, if absent on the other).
    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let mut out = self.clone();
        let mut hit = false;
        for s in out.row.iter_mut().chain(out.col.iter_mut()) {
            if s.label == from {
                s.label = to.to_string();
                hit = true;
            }
        }
        if !hit {
            return Err(Error::UnknownLabel(from.to_string()));
        }
        check_unique(&out.row)?;
        check_unique(&out.col)?;
        Ok(out)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            row: self.row.clone(),
            col: self.col.clone(),
            data: self.data.mapv(|z| z * factor),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let aligned = other.align_to(self)?;
        Ok(Self {
            row: self.row.clone(),
            col: self.col.clone(),
            data: &self.data + &aligned.data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let aligned = other.align_to(self)?;
        Ok(Self {
            row: self.row.clone(),
            col: self.col.clone(),
            data: &self.data - &aligned.data,
        })
    }

    /// Permute `self` so its subsystem orders match `target`'s.
    pub fn align_to(&self, target: &Self) -> Result<Self> {
        let rl: Vec<&str> = target.row.iter().map(|s| s.label.as_str()).collect();
        let cl: Vec<&str> = target.col.iter().map(|s| s.label.as_str()).collect();
        self.permute_rows(&rl)?.permute_cols(&cl)
    }

    pub fn trace(&self) -> C64 {
        self.data.diag().sum()
    }

    /// Largest entrywise absolute difference, after aligning label orders.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let aligned = other.align_to(self)?;
        Ok(self
            .data
            .iter()
            .zip(aligned.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Entrywise approximate equality at an absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        matches!(self.max_abs_diff(other), Ok(d) if d <= tol)
    }

    /// [`Self::approx_eq`] at the crate default tolerance.
    pub fn approx_eq_default(&self, other: &Self) -> bool {
        self.approx_eq(other, crate::tol::DEFAULT_TOL)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Kronecker product of raw matrices (first factor most significant).
pub fn kron_data(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<C64>::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Dense state vector over labeled subsystems.
#[derive(Debug, Clone)]
pub struct StateVector {
    subsystems: Vec<Subsystem>,
    amps: Array1<C64>,
}

impl StateVector {
    pub fn new(subsystems: Vec<Subsystem>, amps: Array1<C64>) -> Result<Self> {
        check_unique(&subsystems)?;
        let d = total_dim(&subsystems);
        if amps.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "amplitude vector has length {}, dimensions give {}",
                amps.len(),
                d
            )));
        }
        Ok(Self { subsystems, amps })
    }

    /// Computational basis state |digits...> over the given subsystems.
    pub fn basis(subs: Vec<Subsystem>, digits: &[usize]) -> Result<Self> {
        if digits.len() != subs.len() {
            return Err(Error::ShapeMismatch("one digit per subsystem required".into()));
        }
        let dims: Vec<usize> = subs.iter().map(|s| s.dim).collect();
        for (d, &m) in digits.iter().zip(&dims) {
            if d >= &m {
                return Err(Error::OutOfRange(format!("digit {d} for dimension {m}")));
            }
        }
        let st = strides(&dims);
        let flat: usize = digits.iter().zip(&st).map(|(&d, &s)| d * s).sum();
        let mut amps = Array1::<C64>::zeros(total_dim(&subs));
        amps[flat] = C64::new(1.0, 0.0);
        Self::new(subs, amps)
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < crate::tol::ZERO_NORM_TOL {
            return Err(Error::UndefinedEvolution);
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            subsystems: self.subsystems.clone(),
            amps: self.amps.mapv(|z| z * factor),
        }
    }

    /// Inner product <self|other> after aligning subsystem order.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        let labels: Vec<&str> = self.subsystems.iter().map(|s| s.label.as_str()).collect();
        let aligned = other.permute(&labels)?;
        Ok(self
            .amps
            .iter()
            .zip(aligned.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn kron(&self, other: &Self) -> Result<Self> {
        for s in &other.subsystems {
            if find(&self.subsystems, &s.label).is_some() {
                return Err(Error::DuplicateLabel(s.label.clone()));
            }
        }
        let mut subs = self.subsystems.clone();
        subs.extend(other.subsystems.iter().cloned());
        let mut amps = Array1::<C64>::zeros(self.dim() * other.dim());
        for (i, a) in self.amps.iter().enumerate() {
            for (j, b) in other.amps.iter().enumerate() {
                amps[i * other.dim() + j] = a * b;
            }
        }
        Self::new(subs, amps)
    }

    /// Reorder subsystems to the given label order.
    pub fn permute(&self, labels: &[&str]) -> Result<Self> {
        let order = resolve_order(&self.subsystems, labels)?;
        if order.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let map = permutation_map(&self.subsystems, &order);
        let mut amps = Array1::<C64>::zeros(self.dim());
        for (i, &a) in self.amps.iter().enumerate() {
            amps[map[i]] = a;
        }
        let subsystems = order.iter().map(|&p| self.subsystems[p].clone()).collect();
        Self::new(subsystems, amps)
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let mut out = self.clone();
        let p = find(&out.subsystems, from).ok_or_else(|| Error::UnknownLabel(from.to_string()))?;
        out.subsystems[p].label = to.to_string();
        check_unique(&out.subsystems)?;
        Ok(out)
    }

    /// Outer product |self><other| as a labeled operator.
    pub fn outer(&self, other: &Self) -> LabeledOperator {
        let mut data = Array2::<C64>::zeros((self.dim(), other.dim()));
        for (i, a) in self.amps.iter().enumerate() {
            for (j, b) in other.amps.iter().enumerate() {
                data[[i, j]] = a * b.conj();
            }
        }
        LabeledOperator {
            row: self.subsystems.clone(),
            col: other.subsystems.clone(),
            data,
        }
    }

    /// Apply a square operator to the named subsystems of this state.
    /// The operator's column labels select which subsystems it consumes.
    pub fn apply(&self, op: &LabeledOperator) -> Result<Self> {
        if op.row_dim() != op.col_dim() {
            return Err(Error::ShapeMismatch("gate application needs a square operator".into()));
        }
        // Align the operator's rows to its own column order so the acted-on
        // subsystems keep their labels.
        let labels: Vec<&str> = op.col.iter().map(|s| s.label.as_str()).collect();
        let op = op.permute_rows(&labels)?;

        let dims: Vec<usize> = self.subsystems.iter().map(|s| s.dim).collect();
        let st = strides(&dims);
        let mut positions = Vec::with_capacity(op.col.len());
        for s in &op.col {
            let p = find(&self.subsystems, &s.label)
                .ok_or_else(|| Error::UnknownLabel(s.label.clone()))?;
            if self.subsystems[p].dim != s.dim {
                return Err(Error::DimensionMismatch(format!(
                    "label `{}`: state dim {}, operator dim {}",
                    s.label, self.subsystems[p].dim, s.dim
                )));
            }
            positions.push(p);
        }
        let gate_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
        let gate_offsets = sub_offsets(&gate_dims, &st, &positions);
        let rest: Vec<usize> = (0..dims.len()).filter(|p| !positions.contains(p)).collect();
        let rest_dims: Vec<usize> = rest.iter().map(|&p| dims[p]).collect();
        let rest_offsets = sub_offsets(&rest_dims, &st, &rest);

        let g = gate_offsets.len();
        let mut amps = Array1::<C64>::zeros(self.dim());
        let mut scratch = vec![C64::new(0.0, 0.0); g];
        for &base in &rest_offsets {
            for (a, s) in gate_offsets.iter().zip(scratch.iter_mut()) {
                *s = self.amps[base + a];
            }
            for (ap, &off) in gate_offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (a, s) in scratch.iter().enumerate() {
                    acc += op.data[[ap, a]] * s;
                }
                amps[base + off] = acc;
            }
        }
        Self::new(self.subsystems.clone(), amps)
    }

    /// Reshape into a matrix with the named row and column subsystem groups.
    /// Together the two groups must cover every subsystem exactly once.
    pub fn unstack(&self, row_labels: &[&str], col_labels: &[&str]) -> Result<LabeledOperator> {
        let mut all: Vec<&str> = row_labels.to_vec();
        all.extend_from_slice(col_labels);
        let permuted = self.permute(&all)?;
        let row: Vec<Subsystem> = permuted.subsystems[..row_labels.len()].to_vec();
        let col: Vec<Subsystem> = permuted.subsystems[row_labels.len()..].to_vec();
        let (r, c) = (total_dim(&row), total_dim(&col));
        let data = Array2::from_shape_vec((r, c), permuted.amps.to_vec())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        LabeledOperator::new(row, col, data)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        let labels: Vec<&str> = self.subsystems.iter().map(|s| s.label.as_str()).collect();
        let aligned = other.permute(&labels)?;
        Ok(self
            .amps
            .iter()
            .zip(aligned.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest entrywise difference after removing one global phase,
    /// chosen from the largest-magnitude amplitude of `self`.
    pub fn max_abs_diff_up_to_phase(&self, other: &Self) -> Result<f64> {
        let labels: Vec<&str> = self.subsystems.iter().map(|s| s.label.as_str()).collect();
        let aligned = other.permute(&labels)?;
        let pivot = self
            .amps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (a, b) = (self.amps[pivot], aligned.amps[pivot]);
        if a.norm() < crate::tol::ZERO_NORM_TOL || b.norm() < crate::tol::ZERO_NORM_TOL {
            return self.max_abs_diff(&aligned);
        }
        let phase = (a / b) / (a / b).norm();
        Ok(self
            .amps
            .iter()
            .zip(aligned.amps.iter())
            .map(|(x, y)| (x - y * phase).norm())
            .fold(0.0, f64::max))
    }
}

/// Vectorization |M>> = sum_i |i> (x) M|i> of an `a x b` matrix: the input
/// space (dimension `b`) comes first, then the output space.
pub fn double_ket(m: &Array2<C64>, in_label: &str, out_label: &str) -> StateVector {
    let (a, b) = m.dim();
    let mut amps = Array1::<C64>::zeros(a * b);
    for i in 0..b {
        for o in 0..a {
            amps[i * a + o] = m[[o, i]];
        }
    }
    StateVector::new(
        vec![Subsystem::new(in_label, b), Subsystem::new(out_label, a)],
        amps,
    )
    .expect("double_ket shape is consistent")
}

/// Inverse of [`double_ket`]: recover the `out_dim x in_dim` matrix.
pub fn undouble(v: &StateVector, in_dim: usize, out_dim: usize) -> Result<Array2<C64>> {
    if v.dim() != in_dim * out_dim {
        return Err(Error::ShapeMismatch(format!(
            "vector length {} is not {} x {}",
            v.dim(),
            in_dim,
            out_dim
        )));
    }
    let amps = v.amplitudes();
    let mut m = Array2::<C64>::zeros((out_dim, in_dim));
    for i in 0..in_dim {
        for o in 0..out_dim {
            m[[o, i]] = amps[i * out_dim + o];
        }
    }
    Ok(m)
}
