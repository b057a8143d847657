//! Finite bases of the transformed critical cone and the coercivity
//! eigenvalue of `Qhat` on them.
//!
//! A direction is `(w, h)` with `w` nodal. Per arc and control, `w_i` is
//! zero (bang on the first arc), a free constant (bang on a middle arc),
//! equal to `h_i` (bang on the last arc), solved from the state-arc
//! constraint `M w = -<c, zeta[w]>` (state-active arcs), or free. Free
//! values are spanned by hat functions, at most `hat_cap` per run of free
//! nodes.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3, Axis};
use serde::Serialize;

use super::{ArcStructure, Tolerances};
use crate::error::{Error, Result};
use crate::goh::compute_m;
use crate::quadratic::{qhat_hessian, QuadContext};
use crate::quadrature::space_inner;
use crate::solvers::ZetaBatch;

/// Which cone to span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
pub enum ConeMode {
    /// The transformed cone with the state-arc constraints.
    #[serde(rename = "pc2star")]
    #[value(name = "pc2star")]
    Pc2Star,
    /// Scalar control only: additionally `w` continuous at bang-bang,
    /// bang-state and state-bang junctions.
    #[serde(rename = "pc2_scalar")]
    #[value(name = "pc2")]
    Pc2Scalar,
}

/// How `w_i` is parameterized on one arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Zero,
    Constant,
    TerminalH,
    Determined,
    Free,
}

impl SegmentKind {
    fn pinned(self) -> bool {
        self != SegmentKind::Free
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotValue {
    Param(usize),
    Fixed(f64),
    /// Copied from `w` at a junction node.
    Junction(usize),
    /// Chosen so that the state-arc constraint holds at this junction node.
    Solved(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeRule {
    Slot(usize),
    Determined(usize),
    Free,
}

/// A finite family spanning a discretization of the cone.
#[derive(Debug, Clone, Serialize)]
pub struct ConeBasis {
    pub mode: ConeMode,
    /// `(elements, time nodes, m)`.
    #[serde(skip)]
    pub w: Array3<f64>,
    /// `(elements, m)`.
    #[serde(skip)]
    pub h: Array2<f64>,
    #[serde(skip)]
    pub gram: Array2<f64>,
    /// What each element parameterizes.
    pub labels: Vec<String>,
    /// `kinds[arc][control]`.
    pub kinds: Vec<Vec<SegmentKind>>,
    /// Largest relative residual of `M w + <c, zeta>` on state-active nodes.
    pub max_constraint_residual: f64,
    pub hat_cap: usize,
}

impl ConeBasis {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keeps only the listed elements.
    pub fn restrict(&self, keep: &[usize]) -> ConeBasis {
        ConeBasis {
            mode: self.mode,
            w: self.w.select(Axis(0), keep),
            h: self.h.select(Axis(0), keep),
            gram: self.gram.select(Axis(0), keep).select(Axis(1), keep),
            labels: keep.iter().map(|&e| self.labels[e].clone()).collect(),
            kinds: self.kinds.clone(),
            max_constraint_residual: self.max_constraint_residual,
            hat_cap: self.hat_cap,
        }
    }
}

pub const DEFAULT_HAT_CAP: usize = 128;

fn find(parent: &mut [usize], s: usize) -> usize {
    let mut r = s;
    while parent[r] != r {
        r = parent[r];
    }
    parent[s] = r;
    r
}

/// Picks `n` well-conditioned columns of `a` by pivoted Gram-Schmidt.
fn pick_columns(a: &DMatrix<f64>, n: usize) -> Vec<usize> {
    let mut cols: Vec<DVector<f64>> = (0..a.ncols()).map(|j| a.column(j).into_owned()).collect();
    let mut chosen = Vec::new();
    for _ in 0..n {
        let best = (0..cols.len())
            .filter(|j| !chosen.contains(j))
            .max_by(|&x, &y| cols[x].norm().total_cmp(&cols[y].norm()))
            .expect("enough columns");
        chosen.push(best);
        let q = cols[best].normalize();
        for c in cols.iter_mut() {
            let d = q.dot(c);
            *c -= &q * d;
        }
    }
    chosen
}

/// Builds the basis for the given arc structure.
pub fn build_cone_basis(
    ctx: &QuadContext,
    arcs: &ArcStructure,
    mode: ConeMode,
    tol: &Tolerances,
    hat_cap: usize,
) -> Result<ConeBasis> {
    let disc = ctx.disc;
    let grid = &disc.grid;
    let (nt, m, ns) = (grid.n_times(), disc.m(), grid.n_space());
    if mode == ConeMode::Pc2Scalar && m != 1 {
        return Err(Error::ScalarOnly("pc2"));
    }
    let mmat = compute_m(disc, ctx.ybar);
    let n_arcs = arcs.arcs.len();

    // controllability and the solved controls per state-active arc
    let mut determined: Vec<Vec<usize>> = vec![Vec::new(); n_arcs];
    for (a, arc) in arcs.arcs.iter().enumerate() {
        let c_set = &arc.state_active;
        if c_set.is_empty() {
            continue;
        }
        let free = arc.free_controls();
        if c_set.len() > free.len() {
            return Err(Error::ControllabilityCount { arc: a, active: c_set.len(), free: free.len() });
        }
        let block = |k: usize| DMatrix::from_fn(c_set.len(), free.len(), |r, c| mmat[[k, c_set[r], free[c]]]);
        for k in arc.k_start..=arc.k_end {
            let sv = block(k).singular_values();
            let sigma = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if sigma < tol.controllability {
                return Err(Error::SingularConstraintBlock { arc: a, t: grid.t[k], sigma, alpha: tol.controllability });
            }
        }
        let mid = (arc.k_start + arc.k_end) / 2;
        determined[a] = pick_columns(&block(mid), c_set.len()).into_iter().map(|c| free[c]).collect();
    }

    let last = n_arcs - 1;
    let kinds: Vec<Vec<SegmentKind>> = arcs
        .arcs
        .iter()
        .enumerate()
        .map(|(a, arc)| {
            (0..m)
                .map(|i| {
                    if arc.is_bang(i) {
                        if a == 0 {
                            SegmentKind::Zero
                        } else if a == last {
                            SegmentKind::TerminalH
                        } else {
                            SegmentKind::Constant
                        }
                    } else if determined[a].contains(&i) {
                        SegmentKind::Determined
                    } else {
                        SegmentKind::Free
                    }
                })
                .collect()
        })
        .collect();

    // slots: one per (arc, control) bang segment, plus one h per control
    let mut slot_of = vec![vec![usize::MAX; m]; n_arcs];
    let mut slots: Vec<SlotValue> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut h_slot = vec![usize::MAX; m];
    for i in 0..m {
        for a in 0..n_arcs {
            match kinds[a][i] {
                SegmentKind::Zero => {
                    slot_of[a][i] = slots.len();
                    slots.push(SlotValue::Fixed(0.0));
                }
                SegmentKind::Constant => {
                    slot_of[a][i] = slots.len();
                    slots.push(SlotValue::Param(labels.len()));
                    labels.push(format!("constant w{} on arc {a}", i + 1));
                }
                _ => {}
            }
        }
        h_slot[i] = if kinds[last][i] == SegmentKind::TerminalH || kinds[last][i] == SegmentKind::Zero {
            if kinds[last][i] == SegmentKind::Zero {
                slot_of[last][i]
            } else {
                let s = slots.len();
                slots.push(SlotValue::Param(labels.len()));
                labels.push(format!("h{}", i + 1));
                slot_of[last][i] = s;
                s
            }
        } else {
            let s = slots.len();
            slots.push(SlotValue::Param(labels.len()));
            labels.push(format!("h{}", i + 1));
            s
        };
    }
    let mut parent: Vec<usize> = (0..slots.len()).collect();

    // junction continuity of the scalar cone
    if mode == ConeMode::Pc2Scalar {
        for a in 0..last {
            let (ka, kb) = (kinds[a][0], kinds[a + 1][0]);
            let bang = |k: SegmentKind| matches!(k, SegmentKind::Zero | SegmentKind::Constant | SegmentKind::TerminalH);
            let junction = arcs.arcs[a].k_end;
            if bang(ka) && bang(kb) {
                let (ra, rb) = (find(&mut parent, slot_of[a][0]), find(&mut parent, slot_of[a + 1][0]));
                // the later slot follows the earlier one
                if let SlotValue::Param(_) = slots[rb] {
                    parent[rb] = ra;
                }
            } else if ka == SegmentKind::Determined && bang(kb) {
                let rb = find(&mut parent, slot_of[a + 1][0]);
                if let SlotValue::Param(_) = slots[rb] {
                    slots[rb] = SlotValue::Junction(junction);
                }
            } else if bang(ka) && kb == SegmentKind::Determined {
                let ra = find(&mut parent, slot_of[a][0]);
                if let SlotValue::Param(_) = slots[ra] {
                    slots[ra] = SlotValue::Solved(junction);
                }
            }
        }
    }

    // node rules; a junction node follows the left arc when that arc pins w
    let rule_for = |a: usize, i: usize| -> NodeRule {
        match kinds[a][i] {
            SegmentKind::Free => NodeRule::Free,
            SegmentKind::Determined => NodeRule::Determined(a),
            _ => NodeRule::Slot(slot_of[a][i]),
        }
    };
    let mut rules = vec![vec![NodeRule::Free; m]; nt];
    for (a, arc) in arcs.arcs.iter().enumerate() {
        for k in arc.k_start..=arc.k_end {
            for i in 0..m {
                let at_start = k == arc.k_start && a > 0;
                if at_start && kinds[a - 1][i].pinned() {
                    continue;
                }
                rules[k][i] = rule_for(a, i);
            }
        }
    }
    let mut node_slot = vec![vec![usize::MAX; m]; nt];
    for k in 0..nt {
        for i in 0..m {
            if let NodeRule::Slot(s) = rules[k][i] {
                node_slot[k][i] = find(&mut parent, s);
            }
        }
    }
    for i in 0..m {
        h_slot[i] = find(&mut parent, h_slot[i]);
    }

    // parameters that survive the merges
    let mut live: Vec<usize> = Vec::new();
    let mut live_labels = Vec::new();
    let mut param_slot: Vec<Option<usize>> = Vec::new();
    for (s, v) in slots.iter().enumerate() {
        if parent[s] == s {
            if let SlotValue::Param(p) = v {
                live.push(s);
                live_labels.push(labels[*p].clone());
                param_slot.push(Some(s));
            }
        }
    }

    // hats over runs of free nodes
    struct Hat {
        control: usize,
        values: Vec<(usize, f64)>,
    }
    let mut hats: Vec<Hat> = Vec::new();
    for i in 0..m {
        let mut k = 0;
        while k < nt {
            if rules[k][i] != NodeRule::Free {
                k += 1;
                continue;
            }
            let k0 = k;
            while k < nt && rules[k][i] == NodeRule::Free {
                k += 1;
            }
            let k1 = k - 1;
            let count = k1 - k0 + 1;
            if count <= hat_cap {
                for j in k0..=k1 {
                    hats.push(Hat { control: i, values: vec![(j, 1.0)] });
                }
            } else {
                let (t0, t1) = (grid.t[k0], grid.t[k1]);
                let width = (t1 - t0) / (hat_cap - 1) as f64;
                for c in 0..hat_cap {
                    let tc = t0 + c as f64 * width;
                    let values = (k0..=k1)
                        .filter_map(|j| {
                            let v = 1.0 - (grid.t[j] - tc).abs() / width;
                            (v > 0.0).then_some((j, v))
                        })
                        .collect();
                    hats.push(Hat { control: i, values });
                }
            }
        }
    }
    for hat in &hats {
        let (a, b) = (hat.values[0].0, hat.values.last().unwrap().0);
        live_labels.push(format!("w{} hat on [{}, {}]", hat.control + 1, grid.t[a], grid.t[b]));
        param_slot.push(None);
    }
    let nb = live_labels.len();
    let n_slot_params = live.len();

    let mut w = Array3::<f64>::zeros((nb, nt, m));
    let mut h = Array2::<f64>::zeros((nb, m));
    for (e, s) in live.iter().enumerate() {
        for k in 0..nt {
            for i in 0..m {
                if node_slot[k][i] == *s {
                    w[[e, k, i]] = 1.0;
                }
            }
        }
    }
    for (n, hat) in hats.iter().enumerate() {
        for &(j, v) in &hat.values {
            w[[n_slot_params + n, j, hat.control]] = v;
        }
    }

    // unit responses of constants solved at bang-to-state junctions
    let batch = ZetaBatch::new(disc, &ctx.pot, &ctx.aux.b1, ctx.scheme);
    let mut solved_unit: Vec<Option<(usize, Vec<f64>)>> = vec![None; slots.len()];
    for (s, v) in slots.iter().enumerate() {
        if parent[s] != s {
            continue;
        }
        if let SlotValue::Solved(j) = v {
            let mut unit = Array3::<f64>::zeros((1, nt, m));
            for k in 0..=*j {
                if node_slot[k][0] == s {
                    unit[[0, k, 0]] = 1.0;
                }
            }
            let mut z = Array2::<f64>::zeros((1, ns));
            for k in 0..*j {
                let f = batch.factor(k);
                z = batch.advance(k, &f, z.view(), unit.index_axis(Axis(1), k), unit.index_axis(Axis(1), k + 1));
            }
            solved_unit[s] = Some((*j, z.row(0).to_vec()));
        }
    }

    // forward sweep filling determined values
    let dx = grid.dx;
    let m_scale = mmat.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut zeta = Array2::<f64>::zeros((nb, ns));
    let mut worst_res = 0.0f64;
    let mut raw_res = vec![0.0f64; nb];
    for k in 0..nt {
        // copy junction values into later nodes of their slots
        for i in 0..m {
            let s = node_slot[k][i];
            if s == usize::MAX {
                continue;
            }
            if let SlotValue::Junction(j) = slots[s] {
                if j < k {
                    for e in 0..nb {
                        w[[e, k, i]] = w[[e, j, i]];
                    }
                }
            }
        }
        let mut responses: Vec<Vec<f64>> = Vec::new();
        if k > 0 {
            let f = batch.factor(k - 1);
            zeta = batch.advance(k - 1, &f, zeta.view(), w.index_axis(Axis(1), k - 1), w.index_axis(Axis(1), k));
            responses = (0..m).map(|i| batch.unit_response(k - 1, &f, i)).collect();
        }
        // determined controls
        let det_arc = (0..m).find_map(|i| match rules[k][i] {
            NodeRule::Determined(a) => Some(a),
            _ => None,
        });
        if let Some(a) = det_arc {
            let c_set = &arcs.arcs[a].state_active;
            let d_set: Vec<usize> = determined[a].iter().copied().filter(|&i| rules[k][i] == NodeRule::Determined(a)).collect();
            if d_set.len() == c_set.len() {
                let n = c_set.len();
                let mut amat = DMatrix::<f64>::zeros(n, n);
                for (r, &j) in c_set.iter().enumerate() {
                    for (c, &i) in d_set.iter().enumerate() {
                        let resp = if k > 0 { space_inner(dx, &disc.c[j], &responses[i]) } else { 0.0 };
                        amat[(r, c)] = mmat[[k, j, i]] + resp;
                    }
                }
                let lu = amat.lu();
                for e in 0..nb {
                    let zr = zeta.row(e);
                    let zr = zr.as_slice().unwrap();
                    let rhs = DVector::from_fn(n, |r, _| {
                        let j = c_set[r];
                        let rest: f64 = (0..m).filter(|i| !d_set.contains(i)).map(|i| mmat[[k, j, i]] * w[[e, k, i]]).sum();
                        -(space_inner(dx, &disc.c[j], zr) + rest)
                    });
                    let sol = lu.solve(&rhs).ok_or(Error::SingularConstraintBlock {
                        arc: a,
                        t: grid.t[k],
                        sigma: 0.0,
                        alpha: tol.controllability,
                    })?;
                    for (c, &i) in d_set.iter().enumerate() {
                        w[[e, k, i]] = sol[c];
                        if k > 0 {
                            let mut row = zeta.row_mut(e);
                            for x in 0..ns {
                                row[x] += sol[c] * responses[i][x];
                            }
                        }
                    }
                }
            }
        }
        // constants solved at this junction
        for i in 0..m {
            let s = node_slot[k][i];
            if s == usize::MAX {
                continue;
            }
            if let (SlotValue::Solved(j), Some((_, unit))) = (slots[s], &solved_unit[s]) {
                if j != k {
                    continue;
                }
                let arc = arcs.arcs.iter().position(|a| a.k_start == k).expect("junction");
                let cj = arcs.arcs[arc].state_active[0];
                let denom = mmat[[k, cj, i]] + space_inner(dx, &disc.c[cj], unit);
                for e in 0..nb {
                    let zr = zeta.row(e).to_vec();
                    let val = -space_inner(dx, &disc.c[cj], &zr) / denom;
                    let mut row = zeta.row_mut(e);
                    for x in 0..ns {
                        row[x] += val * unit[x];
                    }
                    for kk in 0..=k {
                        if node_slot[kk][i] == s {
                            w[[e, kk, i]] = val;
                        }
                    }
                }
            }
        }
        // residual of every active state constraint at this node
        if let Some(a) = arcs.arcs.iter().position(|arc| arc.k_start < k && k < arc.k_end && !arc.state_active.is_empty()) {
            for e in 0..nb {
                let zr = zeta.row(e);
                let zr = zr.as_slice().unwrap();
                for &j in &arcs.arcs[a].state_active {
                    let mw: f64 = (0..m).map(|i| mmat[[k, j, i]] * w[[e, k, i]]).sum();
                    raw_res[e] = raw_res[e].max((space_inner(dx, &disc.c[j], zr) + mw).abs());
                }
            }
        }
    }
    for (e, r) in raw_res.iter().enumerate() {
        let w_max = w.index_axis(Axis(0), e).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if w_max > 0.0 {
            worst_res = worst_res.max(r / (m_scale * w_max));
        }
    }

    for i in 0..m {
        let s = h_slot[i];
        match slots[s] {
            SlotValue::Fixed(v) => h.column_mut(i).fill(v),
            _ => {
                if kinds[last][i] == SegmentKind::TerminalH || kinds[last][i] == SegmentKind::Zero {
                    // tied to w on the last arc
                    for e in 0..nb {
                        h[[e, i]] = w[[e, nt - 1, i]];
                    }
                } else if let Some(e) = param_slot.iter().position(|p| *p == Some(s)) {
                    h[[e, i]] = 1.0;
                }
            }
        }
    }

    let gram = gram_matrix(&disc.grid, &w, &h);
    Ok(ConeBasis {
        mode,
        w,
        h,
        gram,
        labels: live_labels,
        kinds,
        max_constraint_residual: worst_res,
        hat_cap,
    })
}

/// `<(w, h), (w', h')> = int w . w' + h . h'` with trapezoid weights.
pub fn gram_matrix(grid: &crate::problem::Grid, w: &Array3<f64>, h: &Array2<f64>) -> Array2<f64> {
    let (nb, nt, m) = w.dim();
    let weights: Vec<f64> = (0..nt)
        .map(|k| {
            let (l, r) = grid.time_weights(k);
            (l + r).sqrt()
        })
        .collect();
    let mut flat = Array2::<f64>::zeros((nb, nt * m));
    for e in 0..nb {
        for k in 0..nt {
            for i in 0..m {
                flat[[e, k * m + i]] = w[[e, k, i]] * weights[k];
            }
        }
    }
    flat.dot(&flat.t()) + h.dot(&h.t())
}

/// Smallest generalized eigenvalue of `Qhat` against the Gram matrix.
#[derive(Debug, Clone, Serialize)]
pub struct Coercivity {
    pub rho: f64,
    /// Ascending, at most ten.
    pub lowest: Vec<f64>,
    pub dimension: usize,
    /// Minimizing direction, unit in the Gram norm.
    #[serde(skip)]
    pub direction_w: Array2<f64>,
    #[serde(skip)]
    pub direction_h: Array1<f64>,
}

/// Solves `H x = rho G x` through the Cholesky factor of `G`.
pub fn estimate_coercivity(ctx: &QuadContext, basis: &ConeBasis) -> Result<Coercivity> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let hess = qhat_hessian(ctx, &basis.w, &basis.h);
    coercivity_from_matrices(&hess, basis)
}

pub(crate) fn coercivity_from_matrices(hess: &Array2<f64>, basis: &ConeBasis) -> Result<Coercivity> {
    let nb = basis.len();
    let sym = |a: &Array2<f64>| DMatrix::from_fn(nb, nb, |i, j| 0.5 * (a[[i, j]] + a[[j, i]]));
    let g = sym(&basis.gram);
    let hm = sym(hess);
    let g_max = g.diagonal().max();
    let chol = g.clone().cholesky().ok_or(Error::SingularGram)?;
    let l = chol.l();
    if l.diagonal().min() <= 1e-12 * g_max.sqrt() {
        return Err(Error::SingularGram);
    }
    // C = L^{-1} H L^{-T}
    let linv_h = l.solve_lower_triangular(&hm).ok_or(Error::SingularGram)?;
    let c = l.solve_lower_triangular(&linv_h.transpose()).ok_or(Error::SingularGram)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..nb).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let best = order[0];
    let y = eig.eigenvectors.column(best).into_owned();
    let x = l.transpose().solve_upper_triangular(&y).ok_or(Error::SingularGram)?;
    let (_, nt, m) = basis.w.dim();
    let mut dw = Array2::<f64>::zeros((nt, m));
    let mut dh = Array1::<f64>::zeros(m);
    for e in 0..nb {
        dw.scaled_add(x[e], &basis.w.index_axis(Axis(0), e));
        dh.scaled_add(x[e], &basis.h.row(e));
    }
    Ok(Coercivity {
        rho: eig.eigenvalues[best],
        lowest: order.iter().take(10).map(|&i| eig.eigenvalues[i]).collect(),
        dimension: nb,
        direction_w: dw,
        direction_h: dh,
    })
}
