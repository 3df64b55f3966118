//! Fused single-direction LSTM with backpropagation through time.
//!
//! Gates are stacked in the order (input, forget, cell, output). Sequences
//! are processed time-major so every step is one matrix product over the
//! whole batch.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};

#[inline(always)]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tanh` through a single `exp`, cheaper than the libm routine.
#[inline(always)]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// Applies sigmoid to the input, forget and output blocks and tanh to the
/// cell block of one (4H) gate row.
fn activate_gates(row: &mut [f64], h: usize) {
    let (ifg, rest) = row.split_at_mut(2 * h);
    let (g, o) = rest.split_at_mut(h);
    for v in ifg.iter_mut().chain(o.iter_mut()) {
        *v = sigmoid(*v);
    }
    for v in g.iter_mut() {
        *v = tanh(*v);
    }
}

/// Activations saved by the forward pass, time-major.
#[derive(Debug, Clone)]
pub struct LstmCache {
    /// Post-activation gates, (L, B, 4H).
    gates: Array3<f64>,
    /// Cell states, (L, B, H).
    cell: Array3<f64>,
    /// tanh of the cell states.
    tanh_cell: Array3<f64>,
    /// Hidden states, (L, B, H).
    hidden: Array3<f64>,
    reverse: bool,
}

/// Gradients of one LSTM application.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub x: Array3<f64>,
    pub w: Array2<f64>,
    pub r: Array2<f64>,
    pub b: Array1<f64>,
}

fn time_major(x: ArrayView3<'_, f64>) -> Array3<f64> {
    x.permuted_axes([1, 0, 2]).as_standard_layout().into_owned()
}

fn flat(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (a, b, c) = x.dim();
    x.view().into_shape_with_order((a * b, c)).expect("standard layout")
}

/// Runs the recurrence over `x` (B × L × D) with weights `w` (4H × D),
/// recurrent weights `r` (4H × H) and bias `b` (4H). `reverse` processes the
/// sequence from its last element. Returns (B × L × H) hidden states.
pub fn lstm_forward(
    x: ArrayView3<'_, f64>,
    w: ArrayView2<'_, f64>,
    r: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    reverse: bool,
) -> (Array3<f64>, LstmCache) {
    let (batch, len, _) = x.dim();
    let h4 = w.nrows();
    let h = h4 / 4;
    let xt = time_major(x);
    let mut gates = Array3::<f64>::zeros((len, batch, h4));
    {
        let mut g = gates.view_mut().into_shape_with_order((len * batch, h4)).expect("contiguous");
        g.assign(&b.broadcast((len * batch, h4)).expect("bias length"));
        general_mat_mul(1.0, &flat(&xt), &w.t(), 1.0, &mut g);
    }
    let mut cell = Array3::<f64>::zeros((len, batch, h));
    let mut tanh_cell = Array3::<f64>::zeros((len, batch, h));
    let mut hidden = Array3::<f64>::zeros((len, batch, h));
    let order: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
    let mut prev: Option<usize> = None;
    let mut c_state = vec![0.0; batch * h];
    for &t in &order {
        let mut gt = gates.index_axis_mut(Axis(0), t);
        if let Some(p) = prev {
            general_mat_mul(1.0, &hidden.index_axis(Axis(0), p), &r.t(), 1.0, &mut gt);
        }
        let gs = gt.as_slice_mut().expect("contiguous gates");
        let ct = cell.index_axis_mut(Axis(0), t).into_slice().expect("contiguous");
        let tct = tanh_cell.index_axis_mut(Axis(0), t).into_slice().expect("contiguous");
        let ht = hidden.index_axis_mut(Axis(0), t).into_slice().expect("contiguous");
        for bi in 0..batch {
            let row = &mut gs[bi * h4..(bi + 1) * h4];
            activate_gates(row, h);
            let (ig, rest) = row.split_at(h);
            let (fg, rest) = rest.split_at(h);
            let (gg, og) = rest.split_at(h);
            let span = bi * h..(bi + 1) * h;
            let cs = &mut c_state[span.clone()];
            let (ct, tct, ht) = (&mut ct[span.clone()], &mut tct[span.clone()], &mut ht[span]);
            for j in 0..h {
                let c = fg[j] * cs[j] + ig[j] * gg[j];
                cs[j] = c;
                ct[j] = c;
                tct[j] = tanh(c);
            }
            for j in 0..h {
                ht[j] = og[j] * tct[j];
            }
        }
        prev = Some(t);
    }
    let out = hidden.view().permuted_axes([1, 0, 2]).as_standard_layout().into_owned();
    (
        out,
        LstmCache {
            gates,
            cell,
            tanh_cell,
            hidden,
            reverse,
        },
    )
}

/// Backward pass for [`lstm_forward`] given the gradient of its output.
pub fn lstm_backward(
    cache: &LstmCache,
    x: ArrayView3<'_, f64>,
    w: ArrayView2<'_, f64>,
    r: ArrayView2<'_, f64>,
    d_out: ArrayView3<'_, f64>,
) -> LstmGrads {
    let (len, batch, h4) = cache.gates.dim();
    let h = h4 / 4;
    let d_hidden = time_major(d_out);
    let mut d_gates = Array3::<f64>::zeros((len, batch, h4));
    let mut dh_next = Array2::<f64>::zeros((batch, h));
    let mut dc_next = Array2::<f64>::zeros((batch, h));
    // processing order reversed
    let order: Vec<usize> = if cache.reverse { (0..len).collect() } else { (0..len).rev().collect() };
    let prev_of = |t: usize| -> Option<usize> {
        if cache.reverse {
            (t + 1 < len).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    };
    for &t in &order {
        let p = prev_of(t);
        {
            let gt = cache.gates.index_axis(Axis(0), t);
            let gs = gt.as_slice().expect("contiguous gates");
            let tct = cache.tanh_cell.index_axis(Axis(0), t);
            let tct = tct.as_slice().expect("contiguous");
            let c_prev = p.map(|p| cache.cell.index_axis(Axis(0), p));
            let c_prev = c_prev.as_ref().map(|c| c.as_slice().expect("contiguous"));
            let dht = d_hidden.index_axis(Axis(0), t);
            let dht = dht.as_slice().expect("contiguous");
            let mut dg = d_gates.index_axis_mut(Axis(0), t);
            let dgs = dg.as_slice_mut().expect("contiguous");
            let dh_next = dh_next.as_slice().expect("contiguous");
            let dc_next = dc_next.as_slice_mut().expect("contiguous");
            for bi in 0..batch {
                let g_row = &gs[bi * h4..(bi + 1) * h4];
                let d_row = &mut dgs[bi * h4..(bi + 1) * h4];
                let base = bi * h;
                for j in 0..h {
                    let (i, f, g, o) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
                    let tc = tct[base + j];
                    let cp = c_prev.map_or(0.0, |c| c[base + j]);
                    let dh = dht[base + j] + dh_next[base + j];
                    let dc = dc_next[base + j] + dh * o * (1.0 - tc * tc);
                    d_row[j] = dc * g * i * (1.0 - i);
                    d_row[h + j] = dc * cp * f * (1.0 - f);
                    d_row[2 * h + j] = dc * i * (1.0 - g * g);
                    d_row[3 * h + j] = dh * tc * o * (1.0 - o);
                    dc_next[base + j] = dc * f;
                }
            }
        }
        if p.is_some() {
            general_mat_mul(1.0, &d_gates.index_axis(Axis(0), t), &r, 0.0, &mut dh_next);
        }
    }

    let xt = time_major(x);
    let dg_flat = flat(&d_gates);
    let d_w = dg_flat.t().dot(&flat(&xt));
    // Step t consumed the hidden state of its predecessor in processing order.
    let (dg_steps, h_prev) = if cache.reverse {
        (d_gates.slice(s![..len - 1, .., ..]), cache.hidden.slice(s![1.., .., ..]))
    } else {
        (d_gates.slice(s![1.., .., ..]), cache.hidden.slice(s![..len - 1, .., ..]))
    };
    let rows = (len - 1) * batch;
    let dg_steps = dg_steps.into_shape_with_order((rows, h4)).expect("contiguous");
    let h_prev = h_prev.into_shape_with_order((rows, h)).expect("contiguous");
    let d_r = dg_steps.t().dot(&h_prev);
    let d_b = dg_flat.sum_axis(Axis(0));
    let dx_flat = dg_flat.dot(&w);
    let d = w.ncols();
    let dx = dx_flat
        .into_shape_with_order((len, batch, d))
        .expect("standard layout")
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned();
    LstmGrads {
        x: dx,
        w: d_w,
        r: d_r,
        b: d_b,
    }
}
