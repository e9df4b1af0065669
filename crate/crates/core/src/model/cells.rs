//! GRU and LSTM cells on the tape, and the masked bidirectional runner.

use super::params::{GruWeights, LstmWeights};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// A recurrent cell whose weights are already registered on a tape.
pub trait RecurrentCell<T: Real> {
    type State: Clone;

    fn units(&self) -> usize;
    fn zero_state(&self, tape: &mut Tape<'_, T>, batch: usize) -> Self::State;
    fn step(&self, tape: &mut Tape<'_, T>, x: Var, state: &Self::State) -> Result<Self::State>;
    fn output(state: &Self::State) -> Var;
    /// Row-wise: `new` where `mask` is set, `old` elsewhere.
    fn select(tape: &mut Tape<'_, T>, mask: &[bool], new: &Self::State, old: &Self::State) -> Result<Self::State>;
}

#[derive(Clone, Copy, Debug)]
pub struct GruCell {
    pub w: [Var; 3],
    pub u: [Var; 3],
    pub b: [Var; 3],
    units: usize,
}

impl GruCell {
    pub fn register<'a, T: Real>(tape: &mut Tape<'a, T>, w: &'a GruWeights<T>, trainable: bool) -> Self {
        let mut reg = |t: &'a Tensor<T>| if trainable { tape.param(t) } else { tape.constant_ref(t) };
        GruCell {
            w: [reg(&w.w_z), reg(&w.w_r), reg(&w.w_h)],
            u: [reg(&w.u_z), reg(&w.u_r), reg(&w.u_h)],
            b: [reg(&w.b_z), reg(&w.b_r), reg(&w.b_h)],
            units: w.b_z.len(),
        }
    }

    /// A cell over vars already on the tape, in gate order z, r, h.
    pub fn from_vars(w: [Var; 3], u: [Var; 3], b: [Var; 3], units: usize) -> Self {
        GruCell { w, u, b, units }
    }

    pub fn vars(&self) -> [Var; 9] {
        [
            self.w[0], self.w[1], self.w[2], self.u[0], self.u[1], self.u[2], self.b[0], self.b[1], self.b[2],
        ]
    }
}

/// `act(x W + b + h U)`
fn gate<T: Real>(tape: &mut Tape<'_, T>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
    let xw = tape.affine(x, w, b)?;
    let hu = tape.matmul(h, u)?;
    tape.add(xw, hu)
}

/// One GRU step:
///
/// ```text
/// z  = σ(Wz x + Uz h + bz)
/// r  = σ(Wr x + Ur h + br)
/// h~ = tanh(Wh x + Uh (r∘h) + bh)
/// h' = (1 − z)∘h + z∘h~
/// ```
pub fn gru_cell<T: Real>(tape: &mut Tape<'_, T>, x: Var, h_prev: Var, cell: &GruCell) -> Result<Var> {
    let z = gate(tape, x, h_prev, cell.w[0], cell.u[0], cell.b[0])?;
    let z = tape.sigmoid(z)?;
    let r = gate(tape, x, h_prev, cell.w[1], cell.u[1], cell.b[1])?;
    let r = tape.sigmoid(r)?;
    let rh = tape.mul(r, h_prev)?;
    let cand = gate(tape, x, rh, cell.w[2], cell.u[2], cell.b[2])?;
    let cand = tape.tanh(cand)?;
    let keep = tape.one_minus(z)?;
    let kept = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(kept, fresh)
}

impl<T: Real> RecurrentCell<T> for GruCell {
    type State = Var;

    fn units(&self) -> usize {
        self.units
    }

    fn zero_state(&self, tape: &mut Tape<'_, T>, batch: usize) -> Var {
        tape.constant(Tensor::zeros(&[batch, self.units]))
    }

    fn step(&self, tape: &mut Tape<'_, T>, x: Var, state: &Var) -> Result<Var> {
        gru_cell(tape, x, *state, self)
    }

    fn output(state: &Var) -> Var {
        *state
    }

    fn select(tape: &mut Tape<'_, T>, mask: &[bool], new: &Var, old: &Var) -> Result<Var> {
        tape.select_rows(mask, *new, *old)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmCell {
    /// Order: input, forget, output, candidate.
    pub w: [Var; 4],
    pub u: [Var; 4],
    pub b: [Var; 4],
    units: usize,
}

impl LstmCell {
    pub fn register<'a, T: Real>(tape: &mut Tape<'a, T>, w: &'a LstmWeights<T>, trainable: bool) -> Self {
        let mut reg = |t: &'a Tensor<T>| if trainable { tape.param(t) } else { tape.constant_ref(t) };
        LstmCell {
            w: [reg(&w.w_i), reg(&w.w_f), reg(&w.w_o), reg(&w.w_c)],
            u: [reg(&w.u_i), reg(&w.u_f), reg(&w.u_o), reg(&w.u_c)],
            b: [reg(&w.b_i), reg(&w.b_f), reg(&w.b_o), reg(&w.b_c)],
            units: w.b_i.len(),
        }
    }

    /// A cell over vars already on the tape, in gate order i, f, o, c.
    pub fn from_vars(w: [Var; 4], u: [Var; 4], b: [Var; 4], units: usize) -> Self {
        LstmCell { w, u, b, units }
    }

    pub fn vars(&self) -> [Var; 12] {
        let mut out = [self.w[0]; 12];
        out[..4].copy_from_slice(&self.w);
        out[4..8].copy_from_slice(&self.u);
        out[8..].copy_from_slice(&self.b);
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// One LSTM step:
///
/// ```text
/// i, f, o = σ(W x + U h + b)
/// c~ = tanh(Wc x + Uc h + bc)
/// c' = f∘c + i∘c~
/// h' = o∘tanh(c')
/// ```
pub fn lstm_cell<T: Real>(
    tape: &mut Tape<'_, T>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    cell: &LstmCell,
) -> Result<(Var, Var)> {
    let mut gates = [x; 4];
    for (k, g) in gates.iter_mut().enumerate() {
        let pre = gate(tape, x, h_prev, cell.w[k], cell.u[k], cell.b[k])?;
        *g = if k == 3 { tape.tanh(pre)? } else { tape.sigmoid(pre)? };
    }
    let [i, f, o, cand] = gates;
    let carried = tape.mul(f, c_prev)?;
    let written = tape.mul(i, cand)?;
    let c = tape.add(carried, written)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c))
}

impl<T: Real> RecurrentCell<T> for LstmCell {
    type State = LstmState;

    fn units(&self) -> usize {
        self.units
    }

    fn zero_state(&self, tape: &mut Tape<'_, T>, batch: usize) -> LstmState {
        let z = tape.constant(Tensor::zeros(&[batch, self.units]));
        LstmState { h: z, c: z }
    }

    fn step(&self, tape: &mut Tape<'_, T>, x: Var, state: &LstmState) -> Result<LstmState> {
        let (h, c) = lstm_cell(tape, x, state.h, state.c, self)?;
        Ok(LstmState { h, c })
    }

    fn output(state: &LstmState) -> Var {
        state.h
    }

    fn select(tape: &mut Tape<'_, T>, mask: &[bool], new: &LstmState, old: &LstmState) -> Result<LstmState> {
        Ok(LstmState {
            h: tape.select_rows(mask, new.h, old.h)?,
            c: tape.select_rows(mask, new.c, old.c)?,
        })
    }
}

/// Runs `fwd` left-to-right and `bwd` right-to-left over `inputs` (one `[B, in]`
/// var per step) and returns `concat(fwd_t, bwd_t)` per step.
///
/// Row `b` only advances while `t < lengths[b]`; past that its state is carried
/// unchanged, so padded steps never influence the result. The backward pass
/// therefore starts from the zero state at each row's last real token.
/// `inputs[t]` is evaluated lazily and skipped when every row is padded at `t`.
pub fn bidirectional<'a, T: Real, C: RecurrentCell<T>>(
    tape: &mut Tape<'a, T>,
    steps: usize,
    lengths: &[usize],
    mut input_at: impl FnMut(&mut Tape<'a, T>, usize) -> Result<Var>,
    fwd: &C,
    bwd: &C,
) -> Result<Vec<Var>> {
    let batch = lengths.len();
    let mut cache: Vec<Option<Var>> = vec![None; steps];
    let mut x_at = |tape: &mut Tape<'a, T>, t: usize| -> Result<Var> {
        if let Some(v) = cache[t] {
            return Ok(v);
        }
        let v = input_at(tape, t)?;
        cache[t] = Some(v);
        Ok(v)
    };

    let run = |tape: &mut Tape<'a, T>,
               cell: &C,
               order: &mut dyn Iterator<Item = usize>,
               x_at: &mut dyn FnMut(&mut Tape<'a, T>, usize) -> Result<Var>|
     -> Result<Vec<Var>> {
        let mut outs = vec![None; steps];
        let mut state = cell.zero_state(tape, batch);
        for t in order {
            let mask: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
            if mask.iter().any(|&m| m) {
                let x = x_at(tape, t)?;
                let next = cell.step(tape, x, &state)?;
                state = if mask.iter().all(|&m| m) {
                    next
                } else {
                    C::select(tape, &mask, &next, &state)?
                };
            }
            outs[t] = Some(C::output(&state));
        }
        Ok(outs.into_iter().map(|v| v.expect("every step visited")).collect())
    };

    let f = run(tape, fwd, &mut (0..steps), &mut x_at)?;
    let b = run(tape, bwd, &mut (0..steps).rev(), &mut x_at)?;
    f.into_iter().zip(b).map(|(hf, hb)| tape.concat(&[hf, hb], 1)).collect()
}
