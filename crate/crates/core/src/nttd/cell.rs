use super::{Layout, NttdHyper};

/// Activations of one forward pass, reused across entries.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: usize,
    hidden: usize,
    rank: usize,
    emb_rows: Vec<usize>,
    /// Post-activation gates per step: input, forget, cell, output.
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hiddens: Vec<f64>,
    /// Cores back to back: `R`, then `(d'-2)·R²`, then `R`.
    cores: Vec<f64>,
    /// `left[k] = T_1 · .. · T_{k+1}` for `k < d'-1`.
    left: Vec<f64>,
    value: f64,
    macs: u64,
    scratch: Scratch,
}

/// Buffers used by the backward pass.
#[derive(Debug, Clone, Default)]
struct Scratch {
    right: Vec<f64>,
    d_hidden: Vec<f64>,
    d_core: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    d_pre: Vec<f64>,
    d_emb: Vec<f64>,
}

/// The TT cores generated for one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TtCoreChain {
    pub rank: usize,
    /// `T_1` (1×R), the middle cores (R×R, row-major) and `T_d'` (R×1).
    pub cores: Vec<Vec<f64>>,
}

impl TtCoreChain {
    /// Left-to-right row-vector product of the chain.
    pub fn product(&self) -> f64 {
        let r = self.rank;
        let mut v = self.cores[0].clone();
        for m in &self.cores[1..self.cores.len() - 1] {
            let mut next = vec![0.0; r];
            for a in 0..r {
                for b in 0..r {
                    next[b] += v[a] * m[a * r + b];
                }
            }
            v = next;
        }
        v.iter().zip(self.cores.last().unwrap()).map(|(a, b)| a * b).sum()
    }
}

impl Tape {
    pub fn new(hyper: &NttdHyper) -> Self {
        let (t, h, r) = (hyper.folded_order(), hyper.hidden, hyper.rank);
        Self {
            steps: t,
            hidden: h,
            rank: r,
            emb_rows: vec![0; t],
            gates: vec![0.0; t * 4 * h],
            cells: vec![0.0; t * h],
            tanh_cells: vec![0.0; t * h],
            hiddens: vec![0.0; t * h],
            cores: vec![0.0; 2 * r + (t - 2) * r * r],
            left: vec![0.0; (t - 1) * r],
            value: 0.0,
            macs: 0,
            scratch: Scratch {
                right: vec![0.0; t * r],
                d_hidden: vec![0.0; t * h],
                d_core: vec![0.0; r * r],
                dh_next: vec![0.0; h],
                dc_next: vec![0.0; h],
                d_pre: vec![0.0; 4 * h],
                d_emb: vec![0.0; h],
            },
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Scalar multiply-adds spent by the last forward pass.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn hidden_state(&self, step: usize) -> &[f64] {
        &self.hiddens[step * self.hidden..(step + 1) * self.hidden]
    }

    fn core_offset(&self, step: usize) -> usize {
        let r = self.rank;
        if step == 0 {
            0
        } else {
            r + (step - 1) * r * r
        }
    }

    /// The `step`-th generated core, flattened row-major.
    pub fn core(&self, step: usize) -> &[f64] {
        let r = self.rank;
        let start = self.core_offset(step);
        let len = if step == 0 || step + 1 == self.steps { r } else { r * r };
        &self.cores[start..start + len]
    }

    pub fn chain(&self) -> TtCoreChain {
        TtCoreChain {
            rank: self.rank,
            cores: (0..self.steps).map(|s| self.core(s).to_vec()).collect(),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += W x` for row-major `W` of shape `out.len() × x.len()`.
#[inline]
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out += Wᵀ y` for row-major `W` of shape `y.len() × out.len()`.
#[inline]
fn matvec_t_acc(w: &[f64], y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (&g, row) in y.iter().zip(w.chunks_exact(n)) {
        if g == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += g * a;
        }
    }
}

/// `grad += y ⊗ x` for a row-major gradient block of shape `y.len() × x.len()`.
#[inline]
fn outer_acc(grad: &mut [f64], y: &[f64], x: &[f64]) {
    let n = x.len();
    for (&g, row) in y.iter().zip(grad.chunks_exact_mut(n)) {
        if g == 0.0 {
            continue;
        }
        for (o, a) in row.iter_mut().zip(x) {
            *o += g * a;
        }
    }
}

pub(super) fn forward(l: &Layout, p: &[f64], fidx: &[usize], tape: &mut Tape) -> f64 {
    let (h, r, steps) = (l.hidden, l.rank, tape.steps);
    let mut macs = 0u64;
    let w_ih = &p[l.w_ih..l.w_hh];
    let w_hh = &p[l.w_hh..l.b_cell];
    let b_cell = &p[l.b_cell..l.b_cell + 4 * h];

    for t in 0..steps {
        let row = l.table_of_mode[t] + fidx[t] * h;
        tape.emb_rows[t] = row;
        let e = &p[row..row + h];
        let gates = &mut tape.gates[t * 4 * h..(t + 1) * 4 * h];
        gates.copy_from_slice(b_cell);
        matvec_acc(w_ih, e, gates);
        macs += (4 * h * h) as u64;
        if t > 0 {
            let h_prev = &tape.hiddens[(t - 1) * h..t * h];
            matvec_acc(w_hh, h_prev, gates);
            macs += (4 * h * h) as u64;
        }
        for j in 0..h {
            gates[j] = sigmoid(gates[j]);
            gates[h + j] = sigmoid(gates[h + j]);
            gates[2 * h + j] = gates[2 * h + j].tanh();
            gates[3 * h + j] = sigmoid(gates[3 * h + j]);
        }
        for j in 0..h {
            let c_prev = if t > 0 { tape.cells[(t - 1) * h + j] } else { 0.0 };
            let c = gates[h + j] * c_prev + gates[j] * gates[2 * h + j];
            let tc = c.tanh();
            tape.cells[t * h + j] = c;
            tape.tanh_cells[t * h + j] = tc;
            tape.hiddens[t * h + j] = gates[3 * h + j] * tc;
        }
    }

    // Linear heads.
    for t in 0..steps {
        let (w, b, len) = if t == 0 {
            (l.w_first, l.b_first, r)
        } else if t + 1 == steps {
            (l.w_last, l.b_last, r)
        } else {
            (l.w_mid, l.b_mid, r * r)
        };
        let start = tape.core_offset(t);
        let hid = &tape.hiddens[t * h..(t + 1) * h];
        let core = &mut tape.cores[start..start + len];
        core.copy_from_slice(&p[b..b + len]);
        matvec_acc(&p[w..w + len * h], hid, core);
        macs += (len * h) as u64;
    }

    // Left-to-right row-vector chain.
    tape.left[..r].copy_from_slice(&tape.cores[..r]);
    for t in 1..steps - 1 {
        let start = tape.core_offset(t);
        let (prev, next) = tape.left.split_at_mut(t * r);
        let prev = &prev[(t - 1) * r..];
        let next = &mut next[..r];
        next.fill(0.0);
        let m = &tape.cores[start..start + r * r];
        for a in 0..r {
            let va = prev[a];
            for b in 0..r {
                next[b] += va * m[a * r + b];
            }
        }
        macs += (r * r) as u64;
    }
    let last = tape.core_offset(steps - 1);
    let lv = &tape.left[(steps - 2) * r..(steps - 1) * r];
    let value: f64 = lv.iter().zip(&tape.cores[last..last + r]).map(|(a, b)| a * b).sum();
    macs += r as u64;
    tape.value = value;
    tape.macs = macs;
    value
}

pub(super) fn backward(l: &Layout, p: &[f64], tape: &mut Tape, upstream: f64, grads: &mut [f64]) {
    if upstream == 0.0 {
        return;
    }
    let (h, r, steps) = (l.hidden, l.rank, tape.steps);
    let mut scratch = std::mem::take(&mut tape.scratch);
    backward_with(l, p, tape, upstream, grads, &mut scratch, h, r, steps);
    tape.scratch = scratch;
}

#[allow(clippy::too_many_arguments)]
fn backward_with(
    l: &Layout,
    p: &[f64],
    tape: &Tape,
    upstream: f64,
    grads: &mut [f64],
    s: &mut Scratch,
    h: usize,
    r: usize,
    steps: usize,
) {
    // right[t] = T_t · .. · T_d' as a column vector, for t ≥ 1.
    let right = &mut s.right;
    let last = tape.core_offset(steps - 1);
    right[(steps - 1) * r..].copy_from_slice(&tape.cores[last..last + r]);
    for t in (1..steps - 1).rev() {
        let start = tape.core_offset(t);
        let m = &tape.cores[start..start + r * r];
        let (cur, next) = right.split_at_mut((t + 1) * r);
        let cur = &mut cur[t * r..];
        let next = &next[..r];
        for a in 0..r {
            let mut s = 0.0;
            for b in 0..r {
                s += m[a * r + b] * next[b];
            }
            cur[a] = s;
        }
    }

    // Core gradients → head gradients → hidden-state gradients.
    let d_hidden = &mut s.d_hidden;
    d_hidden.fill(0.0);
    let d_core = &mut s.d_core;
    for t in 0..steps {
        let (w, b, len) = if t == 0 {
            for a in 0..r {
                d_core[a] = upstream * right[r + a];
            }
            (l.w_first, l.b_first, r)
        } else if t + 1 == steps {
            let lv = &tape.left[(steps - 2) * r..(steps - 1) * r];
            for a in 0..r {
                d_core[a] = upstream * lv[a];
            }
            (l.w_last, l.b_last, r)
        } else {
            let lv = &tape.left[(t - 1) * r..t * r];
            let rv = &right[(t + 1) * r..(t + 2) * r];
            for a in 0..r {
                for c in 0..r {
                    d_core[a * r + c] = upstream * lv[a] * rv[c];
                }
            }
            (l.w_mid, l.b_mid, r * r)
        };
        let dc = &d_core[..len];
        let hid = &tape.hiddens[t * h..(t + 1) * h];
        for (g, d) in grads[b..b + len].iter_mut().zip(dc) {
            *g += d;
        }
        outer_acc(&mut grads[w..w + len * h], dc, hid);
        matvec_t_acc(&p[w..w + len * h], dc, &mut d_hidden[t * h..(t + 1) * h]);
    }

    // Backpropagation through time.
    let dh_next = &mut s.dh_next;
    let dc_next = &mut s.dc_next;
    let d_pre = &mut s.d_pre;
    let d_emb = &mut s.d_emb;
    dh_next.fill(0.0);
    dc_next.fill(0.0);
    for t in (0..steps).rev() {
        let gates = &tape.gates[t * 4 * h..(t + 1) * 4 * h];
        for j in 0..h {
            let dh = d_hidden[t * h + j] + dh_next[j];
            let (ig, fg, gg, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let tc = tape.tanh_cells[t * h + j];
            let dc = dc_next[j] + dh * og * (1.0 - tc * tc);
            let c_prev = if t > 0 { tape.cells[(t - 1) * h + j] } else { 0.0 };
            d_pre[j] = dc * gg * ig * (1.0 - ig);
            d_pre[h + j] = dc * c_prev * fg * (1.0 - fg);
            d_pre[2 * h + j] = dc * ig * (1.0 - gg * gg);
            d_pre[3 * h + j] = dh * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
        }
        let row = tape.emb_rows[t];
        let e = &p[row..row + h];
        for (g, d) in grads[l.b_cell..l.b_cell + 4 * h].iter_mut().zip(d_pre.iter()) {
            *g += d;
        }
        outer_acc(&mut grads[l.w_ih..l.w_hh], d_pre, e);
        d_emb.fill(0.0);
        matvec_t_acc(&p[l.w_ih..l.w_hh], d_pre, d_emb);
        for (g, d) in grads[row..row + h].iter_mut().zip(d_emb.iter()) {
            *g += d;
        }
        dh_next.fill(0.0);
        if t > 0 {
            let h_prev = &tape.hiddens[(t - 1) * h..t * h];
            outer_acc(&mut grads[l.w_hh..l.b_cell], d_pre, h_prev);
            matvec_t_acc(&p[l.w_hh..l.b_cell], d_pre, dh_next);
        }
    }
}
