//! Forward pass and backpropagation through time for one normalized window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{CellLayout, Direction, Layout, ModelParams, INPUT_CHANNELS, OUTPUT_SIZE};
use crate::real::Real;

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| *x * *y).sum();
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy<T: Real>(a: T, x: &[T], out: &mut [T]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * *v;
    }
}

/// `out += W x` for row-major `W` with `x.len()` columns.
fn gemv_acc<T: Real>(w: &[T], x: &[T], out: &mut [T]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(x.len())) {
        *o += dot(row, x);
    }
}

/// `out += W^T d`.
fn gemv_t_acc<T: Real>(w: &[T], d: &[T], out: &mut [T]) {
    for (&di, row) in d.iter().zip(w.chunks_exact(out.len())) {
        if di != T::zero() {
            axpy(di, row, out);
        }
    }
}

/// `dW += d x^T`.
fn outer_acc<T: Real>(dw: &mut [T], d: &[T], x: &[T]) {
    for (&di, row) in d.iter().zip(dw.chunks_exact_mut(x.len())) {
        if di != T::zero() {
            axpy(di, x, row);
        }
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Inverted-dropout multipliers: `0` or `1 / (1 - rate)`.
#[derive(Clone, Debug)]
pub(crate) struct DropoutMasks<T> {
    /// Layer-1 output, `n x 2H`, time-major.
    pub layer1: Vec<T>,
    /// Head input, `2H`.
    pub head: Vec<T>,
}

impl<T: Real> DropoutMasks<T> {
    pub fn sample(n: usize, hidden: usize, rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = T::lit(1.0 / (1.0 - rate));
        let mut draw = |len: usize| -> Vec<T> {
            (0..len)
                .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                .collect()
        };
        let layer1 = draw(n * 2 * hidden);
        let head = draw(2 * hidden);
        Self { layer1, head }
    }
}

/// Activations of one direction, indexed by processing step.
#[derive(Clone, Debug, Default)]
struct DirCache<T> {
    /// Post-activation gates `i, f, g, o`, `n x 4H`.
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

/// Reusable buffers for forward and backward passes of one window.
#[derive(Clone, Debug, Default)]
pub(crate) struct Workspace<T> {
    n: usize,
    hidden: usize,
    caches: [[DirCache<T>; 2]; 2],
    /// Layer-2 input after dropout, `n x 2H`.
    x2: Vec<T>,
    head_in: Vec<T>,
    masks: Option<DropoutMasks<T>>,
    dh_ext: Vec<T>,
    dx2: Vec<T>,
    dh1: [Vec<T>; 2],
    scratch: Scratch<T>,
}

#[derive(Clone, Debug, Default)]
struct Scratch<T> {
    dh: Vec<T>,
    dc: Vec<T>,
    dz: Vec<T>,
}

fn time_of(dir: Direction, n: usize, step: usize) -> usize {
    match dir {
        Direction::Forward => step,
        Direction::Backward => n - 1 - step,
    }
}

fn resize<T: Real>(v: &mut Vec<T>, len: usize) {
    v.clear();
    v.resize(len, T::zero());
}

fn run_direction<T: Real>(
    data: &[T],
    cell: CellLayout,
    hidden: usize,
    inputs: &[T],
    n: usize,
    dir: Direction,
    cache: &mut DirCache<T>,
) {
    let h4 = 4 * hidden;
    let w_in = &data[cell.w_input..cell.w_input + h4 * cell.input];
    let w_hid = &data[cell.w_hidden..cell.w_hidden + h4 * hidden];
    let bias = &data[cell.bias..cell.bias + h4];
    resize(&mut cache.gates, n * h4);
    resize(&mut cache.c, n * hidden);
    resize(&mut cache.tanh_c, n * hidden);
    resize(&mut cache.h, n * hidden);
    let zero = vec![T::zero(); hidden];
    for s in 0..n {
        let t = time_of(dir, n, s);
        let x = &inputs[t * cell.input..(t + 1) * cell.input];
        let z = &mut cache.gates[s * h4..(s + 1) * h4];
        let (h_done, h_rest) = cache.h.split_at_mut(s * hidden);
        let (c_done, c_rest) = cache.c.split_at_mut(s * hidden);
        let (h_prev, c_prev) = if s == 0 {
            (&zero[..], &zero[..])
        } else {
            (&h_done[(s - 1) * hidden..], &c_done[(s - 1) * hidden..])
        };
        z.copy_from_slice(bias);
        gemv_acc(w_in, x, z);
        gemv_acc(w_hid, h_prev, z);
        let (zi, rest) = z.split_at_mut(hidden);
        let (zf, rest) = rest.split_at_mut(hidden);
        let (zg, zo) = rest.split_at_mut(hidden);
        let tanh_c = &mut cache.tanh_c[s * hidden..(s + 1) * hidden];
        for j in 0..hidden {
            zi[j] = sigmoid(zi[j]);
            zf[j] = sigmoid(zf[j]);
            zg[j] = zg[j].tanh();
            zo[j] = sigmoid(zo[j]);
            let c = zf[j] * c_prev[j] + zi[j] * zg[j];
            c_rest[j] = c;
            tanh_c[j] = c.tanh();
            h_rest[j] = zo[j] * tanh_c[j];
        }
    }
}

/// BPTT through one direction. `dh_ext` holds external gradients per step;
/// `dx` (time-major) receives input gradients when given.
#[allow(clippy::too_many_arguments)]
fn backprop_direction<T: Real>(
    data: &[T],
    grad: &mut [T],
    cell: CellLayout,
    hidden: usize,
    inputs: &[T],
    n: usize,
    dir: Direction,
    cache: &DirCache<T>,
    dh_ext: &[T],
    mut dx: Option<&mut [T]>,
    scratch: &mut Scratch<T>,
) {
    let h4 = 4 * hidden;
    let input = cell.input;
    let w_in = &data[cell.w_input..cell.w_input + h4 * input];
    let w_hid = &data[cell.w_hidden..cell.w_hidden + h4 * hidden];
    resize(&mut scratch.dh, hidden);
    resize(&mut scratch.dc, hidden);
    resize(&mut scratch.dz, h4);
    let zero = vec![T::zero(); hidden];
    let mut dh_prev = vec![T::zero(); hidden];
    for s in (0..n).rev() {
        let t = time_of(dir, n, s);
        let gates = &cache.gates[s * h4..(s + 1) * h4];
        let (gi, gf, gg, go) = (
            &gates[..hidden],
            &gates[hidden..2 * hidden],
            &gates[2 * hidden..3 * hidden],
            &gates[3 * hidden..],
        );
        let tanh_c = &cache.tanh_c[s * hidden..(s + 1) * hidden];
        let (h_prev, c_prev) = if s == 0 {
            (&zero[..], &zero[..])
        } else {
            (
                &cache.h[(s - 1) * hidden..s * hidden],
                &cache.c[(s - 1) * hidden..s * hidden],
            )
        };
        let ext = &dh_ext[s * hidden..(s + 1) * hidden];
        let dz = &mut scratch.dz;
        for j in 0..hidden {
            let dh = ext[j] + scratch.dh[j];
            let dc = scratch.dc[j] + dh * go[j] * (T::one() - tanh_c[j] * tanh_c[j]);
            let d_o = dh * tanh_c[j];
            dz[j] = dc * gg[j] * gi[j] * (T::one() - gi[j]);
            dz[hidden + j] = dc * c_prev[j] * gf[j] * (T::one() - gf[j]);
            dz[2 * hidden + j] = dc * gi[j] * (T::one() - gg[j] * gg[j]);
            dz[3 * hidden + j] = d_o * go[j] * (T::one() - go[j]);
            scratch.dc[j] = dc * gf[j];
        }
        let x = &inputs[t * input..(t + 1) * input];
        outer_acc(&mut grad[cell.w_input..cell.w_input + h4 * input], dz, x);
        if s > 0 {
            outer_acc(&mut grad[cell.w_hidden..cell.w_hidden + h4 * hidden], dz, h_prev);
        }
        axpy(T::one(), dz, &mut grad[cell.bias..cell.bias + h4]);
        if let Some(dx) = dx.as_deref_mut() {
            gemv_t_acc(w_in, dz, &mut dx[t * input..(t + 1) * input]);
        }
        dh_prev.fill(T::zero());
        gemv_t_acc(w_hid, dz, &mut dh_prev);
        scratch.dh.copy_from_slice(&dh_prev);
    }
}

impl<T: Real> Workspace<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs the network on a normalized `n x 6` window and returns the raw head output.
    pub fn forward(
        &mut self,
        params: &ModelParams<T>,
        input: &[T],
        masks: Option<DropoutMasks<T>>,
    ) -> [T; OUTPUT_SIZE] {
        let layout = params.layout();
        let h = layout.hidden;
        let n = input.len() / INPUT_CHANNELS;
        self.n = n;
        self.hidden = h;
        self.masks = masks;
        let data = params.as_slice();

        for (d, dir) in Direction::BOTH.into_iter().enumerate() {
            run_direction(data, layout.cells[0][d], h, input, n, dir, &mut self.caches[0][d]);
        }
        resize(&mut self.x2, n * 2 * h);
        for t in 0..n {
            let row = &mut self.x2[t * 2 * h..(t + 1) * 2 * h];
            row[..h].copy_from_slice(&self.caches[0][0].h[t * h..(t + 1) * h]);
            let sb = n - 1 - t;
            row[h..].copy_from_slice(&self.caches[0][1].h[sb * h..(sb + 1) * h]);
        }
        if let Some(m) = &self.masks {
            for (x, k) in self.x2.iter_mut().zip(&m.layer1) {
                *x *= *k;
            }
        }
        for (d, dir) in Direction::BOTH.into_iter().enumerate() {
            let (_, second) = self.caches.split_at_mut(1);
            run_direction(data, layout.cells[1][d], h, &self.x2, n, dir, &mut second[0][d]);
        }
        resize(&mut self.head_in, 2 * h);
        let last = (n - 1) * h..n * h;
        self.head_in[..h].copy_from_slice(&self.caches[1][0].h[last.clone()]);
        self.head_in[h..].copy_from_slice(&self.caches[1][1].h[last]);
        if let Some(m) = &self.masks {
            for (x, k) in self.head_in.iter_mut().zip(&m.head) {
                *x *= *k;
            }
        }
        head(data, &layout, &self.head_in)
    }

    /// Accumulates `d(out . d_out)/d(params)` into `grad` for the last forward pass.
    pub fn backward(&mut self, params: &ModelParams<T>, input: &[T], d_out: [T; OUTPUT_SIZE], grad: &mut [T]) {
        let layout = params.layout();
        let (h, n) = (self.hidden, self.n);
        let data = params.as_slice();

        let two_h = 2 * h;
        for (k, &d) in d_out.iter().enumerate() {
            axpy(
                d,
                &self.head_in,
                &mut grad[layout.head_w + k * two_h..layout.head_w + (k + 1) * two_h],
            );
            grad[layout.head_b + k] += d;
        }
        let mut d_head = vec![T::zero(); two_h];
        gemv_t_acc(&data[layout.head_w..layout.head_b], &d_out, &mut d_head);
        if let Some(m) = &self.masks {
            for (g, k) in d_head.iter_mut().zip(&m.head) {
                *g *= *k;
            }
        }

        resize(&mut self.dx2, n * two_h);
        for (d, dir) in Direction::BOTH.into_iter().enumerate() {
            resize(&mut self.dh_ext, n * h);
            self.dh_ext[(n - 1) * h..].copy_from_slice(&d_head[d * h..(d + 1) * h]);
            backprop_direction(
                data,
                grad,
                layout.cells[1][d],
                h,
                &self.x2,
                n,
                dir,
                &self.caches[1][d],
                &self.dh_ext,
                Some(&mut self.dx2),
                &mut self.scratch,
            );
        }
        if let Some(m) = &self.masks {
            for (g, k) in self.dx2.iter_mut().zip(&m.layer1) {
                *g *= *k;
            }
        }
        for (d, dir) in Direction::BOTH.into_iter().enumerate() {
            let dh = &mut self.dh1[d];
            resize(dh, n * h);
            for s in 0..n {
                let t = time_of(dir, n, s);
                dh[s * h..(s + 1) * h].copy_from_slice(&self.dx2[t * two_h + d * h..t * two_h + (d + 1) * h]);
            }
        }
        for (d, dir) in Direction::BOTH.into_iter().enumerate() {
            backprop_direction(
                data,
                grad,
                layout.cells[0][d],
                h,
                input,
                n,
                dir,
                &self.caches[0][d],
                &self.dh1[d],
                None,
                &mut self.scratch,
            );
        }
    }
}

fn head<T: Real>(data: &[T], layout: &Layout, u: &[T]) -> [T; OUTPUT_SIZE] {
    let w = &data[layout.head_w..layout.head_b];
    let b = &data[layout.head_b..layout.head_b + OUTPUT_SIZE];
    let mut out = [b[0], b[1]];
    gemv_acc(w, u, &mut out);
    out
}
