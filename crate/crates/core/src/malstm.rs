//! Meme-aware LSTM and the plain LSTM it extends.
//!
//! The meme-aware cell adds a meme-driven term to the cell update:
//!
//! ```text
//! p_t = σ(x_t W_p + h_{t-1} U_p + Ĥ_m V_p + b_p)
//! ŝ_t = tanh(Ĥ_m W_s + b_s)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ ĉ_t + scale · (p_t ⊙ ŝ_t)
//! h_t = o_t ⊙ tanh(c_t)
//! ```
//!
//! Vectors are rows, so weights multiply from the right.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcore::{ParamSet, Real, Tape, Tensor, Var};
use crate::init::gaussian;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams<T: Real = f32> {
    pub prefix: String,
    pub w_i: Tensor<T>,
    pub w_f: Tensor<T>,
    pub w_o: Tensor<T>,
    pub w_g: Tensor<T>,
    pub u_i: Tensor<T>,
    pub u_f: Tensor<T>,
    pub u_o: Tensor<T>,
    pub u_g: Tensor<T>,
    pub b_i: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_o: Tensor<T>,
    pub b_g: Tensor<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_i: Var,
    pub w_f: Var,
    pub w_o: Var,
    pub w_g: Var,
    pub u_i: Var,
    pub u_f: Var,
    pub u_o: Var,
    pub u_g: Var,
    pub b_i: Var,
    pub b_f: Var,
    pub b_o: Var,
    pub b_g: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub c: Var,
    pub h: Var,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Self {
            prefix: prefix.into(),
            w_i: Tensor::zeros(input, hidden),
            w_f: Tensor::zeros(input, hidden),
            w_o: Tensor::zeros(input, hidden),
            w_g: Tensor::zeros(input, hidden),
            u_i: Tensor::zeros(hidden, hidden),
            u_f: Tensor::zeros(hidden, hidden),
            u_o: Tensor::zeros(hidden, hidden),
            u_g: Tensor::zeros(hidden, hidden),
            b_i: Tensor::zeros(1, hidden),
            b_f: Tensor::zeros(1, hidden),
            b_o: Tensor::zeros(1, hidden),
            b_g: Tensor::zeros(1, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(
        prefix: impl Into<String>,
        input: usize,
        hidden: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(prefix, input, hidden);
        for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_g] {
            *w = gaussian(rng, input, hidden, std);
        }
        for u in [&mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_g] {
            *u = gaussian(rng, hidden, hidden, std);
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.b_i.cols()
    }

    pub fn input(&self) -> usize {
        self.w_i.rows()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> LstmVars {
        let v: Vec<Var> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| tape.param(n, t))
            .collect();
        LstmVars {
            w_i: v[0],
            w_f: v[1],
            w_o: v[2],
            w_g: v[3],
            u_i: v[4],
            u_f: v[5],
            u_o: v[6],
            u_g: v[7],
            b_i: v[8],
            b_f: v[9],
            b_o: v[10],
            b_g: v[11],
        }
    }
}

impl<T: Real> ParamSet<T> for LstmParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let p = &self.prefix;
        vec![
            (format!("{p}.w_i"), &self.w_i),
            (format!("{p}.w_f"), &self.w_f),
            (format!("{p}.w_o"), &self.w_o),
            (format!("{p}.w_g"), &self.w_g),
            (format!("{p}.u_i"), &self.u_i),
            (format!("{p}.u_f"), &self.u_f),
            (format!("{p}.u_o"), &self.u_o),
            (format!("{p}.u_g"), &self.u_g),
            (format!("{p}.b_i"), &self.b_i),
            (format!("{p}.b_f"), &self.b_f),
            (format!("{p}.b_o"), &self.b_o),
            (format!("{p}.b_g"), &self.b_g),
        ]
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let p = &self.prefix;
        vec![
            (format!("{p}.w_i"), &mut self.w_i),
            (format!("{p}.w_f"), &mut self.w_f),
            (format!("{p}.w_o"), &mut self.w_o),
            (format!("{p}.w_g"), &mut self.w_g),
            (format!("{p}.u_i"), &mut self.u_i),
            (format!("{p}.u_f"), &mut self.u_f),
            (format!("{p}.u_o"), &mut self.u_o),
            (format!("{p}.u_g"), &mut self.u_g),
            (format!("{p}.b_i"), &mut self.b_i),
            (format!("{p}.b_f"), &mut self.b_f),
            (format!("{p}.b_o"), &mut self.b_o),
            (format!("{p}.b_g"), &mut self.b_g),
        ]
    }
}

/// `x W + h U + b`.
fn affine3<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, h: Var, u: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(xw, hu)?;
    tape.add(s, b)
}

pub fn zero_state<T: Real>(tape: &mut Tape<T>, hidden: usize) -> LstmState {
    LstmState {
        c: tape.constant(Tensor::zeros(1, hidden)),
        h: tape.constant(Tensor::zeros(1, hidden)),
    }
}

/// Gate activations of one step, kept for inspection.
#[derive(Clone, Copy, Debug)]
pub struct CellGates {
    pub input: Var,
    pub forget: Var,
    pub output: Var,
    pub candidate: Var,
}

fn check_row<T: Real>(tape: &Tape<T>, v: Var, d: usize, op: &str) -> Result<()> {
    if tape.shape(v) != [1, d] {
        return Err(Error::dim(op, tape.shape(v), &[1, d]));
    }
    Ok(())
}

fn standard_gates<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    prev: LstmState,
    p: &LstmVars,
) -> Result<CellGates> {
    let i = affine3(tape, x, p.w_i, prev.h, p.u_i, p.b_i)?;
    let f = affine3(tape, x, p.w_f, prev.h, p.u_f, p.b_f)?;
    let o = affine3(tape, x, p.w_o, prev.h, p.u_o, p.b_o)?;
    let g = affine3(tape, x, p.w_g, prev.h, p.u_g, p.b_g)?;
    Ok(CellGates {
        input: tape.sigmoid(i),
        forget: tape.sigmoid(f),
        output: tape.sigmoid(o),
        candidate: tape.tanh(g),
    })
}

pub fn lstm_cell<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    prev: LstmState,
    p: &LstmVars,
) -> Result<LstmState> {
    let input = tape.value(p.w_i).rows();
    check_row(tape, x, input, "lstm_cell")?;
    let g = standard_gates(tape, x, prev, p)?;
    let keep = tape.mul(g.forget, prev.c)?;
    let write = tape.mul(g.input, g.candidate)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(g.output, tc)?;
    Ok(LstmState { c, h })
}

/// Runs a plain LSTM over the rows of `xs` from a zero state, returning the
/// stacked hidden states in input row order. With `reverse`, the scan goes
/// from the last row to the first.
pub fn lstm_forward<T: Real>(
    tape: &mut Tape<T>,
    xs: Var,
    p: &LstmVars,
    reverse: bool,
) -> Result<Var> {
    let n = tape.value(xs).rows();
    let hidden = tape.value(p.b_i).cols();
    let mut state = zero_state(tape, hidden);
    let mut hs = vec![None; n];
    let order: Vec<usize> = if reverse {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    for t in order {
        let x = tape.row(xs, t)?;
        state = lstm_cell(tape, x, state, p)?;
        hs[t] = Some(state.h);
    }
    let hs: Vec<Var> = hs.into_iter().map(|h| h.expect("every step ran")).collect();
    tape.concat_rows(&hs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaLstmParams<T: Real = f32> {
    pub lstm: LstmParams<T>,
    pub w_p: Tensor<T>,
    pub u_p: Tensor<T>,
    pub v_p: Tensor<T>,
    pub b_p: Tensor<T>,
    pub w_s: Tensor<T>,
    pub b_s: Tensor<T>,
    /// Multiplier on the meme term of the cell update. Not trained; `0`
    /// turns the cell into a plain LSTM.
    pub meme_scale: T,
}

#[derive(Clone, Copy, Debug)]
pub struct MaLstmVars {
    pub lstm: LstmVars,
    pub w_p: Var,
    pub u_p: Var,
    pub v_p: Var,
    pub b_p: Var,
    pub w_s: Var,
    pub b_s: Var,
    pub meme_scale: f64,
}

pub type MaLstmState = LstmState;

#[derive(Clone, Copy, Debug)]
pub struct MaLstmStep {
    pub state: MaLstmState,
    pub gates: CellGates,
    pub meme_gate: Var,
    pub meme_candidate: Var,
}

impl<T: Real> MaLstmParams<T> {
    pub fn zeros(d: usize) -> Self {
        Self {
            lstm: LstmParams::zeros("malstm", d, d),
            w_p: Tensor::zeros(d, d),
            u_p: Tensor::zeros(d, d),
            v_p: Tensor::zeros(d, d),
            b_p: Tensor::zeros(1, d),
            w_s: Tensor::zeros(d, d),
            b_s: Tensor::zeros(1, d),
            meme_scale: T::one(),
        }
    }

    pub fn init<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        let lstm = LstmParams::init("malstm", d, d, std, rng);
        Self {
            lstm,
            w_p: gaussian(rng, d, d, std),
            u_p: gaussian(rng, d, d, std),
            v_p: gaussian(rng, d, d, std),
            b_p: Tensor::zeros(1, d),
            w_s: gaussian(rng, d, d, std),
            b_s: Tensor::zeros(1, d),
            meme_scale: T::one(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> MaLstmVars {
        let lstm = self.lstm.bind(tape);
        MaLstmVars {
            lstm,
            w_p: tape.param("malstm.w_p", &self.w_p),
            u_p: tape.param("malstm.u_p", &self.u_p),
            v_p: tape.param("malstm.v_p", &self.v_p),
            b_p: tape.param("malstm.b_p", &self.b_p),
            w_s: tape.param("malstm.w_s", &self.w_s),
            b_s: tape.param("malstm.b_s", &self.b_s),
            meme_scale: self.meme_scale.as_f64(),
        }
    }
}

impl<T: Real> ParamSet<T> for MaLstmParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = self.lstm.named_tensors();
        v.extend([
            ("malstm.w_p".into(), &self.w_p),
            ("malstm.u_p".into(), &self.u_p),
            ("malstm.v_p".into(), &self.v_p),
            ("malstm.b_p".into(), &self.b_p),
            ("malstm.w_s".into(), &self.w_s),
            ("malstm.b_s".into(), &self.b_s),
        ]);
        v
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = self.lstm.named_tensors_mut();
        v.extend([
            ("malstm.w_p".into(), &mut self.w_p),
            ("malstm.u_p".into(), &mut self.u_p),
            ("malstm.v_p".into(), &mut self.v_p),
            ("malstm.b_p".into(), &mut self.b_p),
            ("malstm.w_s".into(), &mut self.w_s),
            ("malstm.b_s".into(), &mut self.b_s),
        ]);
        v
    }
}

pub fn malstm_cell<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    prev: MaLstmState,
    meme: Var,
    p: &MaLstmVars,
) -> Result<MaLstmStep> {
    let d = tape.value(p.b_p).cols();
    check_row(tape, x, d, "malstm_cell")?;
    check_row(tape, meme, d, "malstm_cell")?;
    check_row(tape, prev.h, d, "malstm_cell")?;
    let gates = standard_gates(tape, x, prev, &p.lstm)?;

    let pre = affine3(tape, x, p.w_p, prev.h, p.u_p, p.b_p)?;
    let mv = tape.matmul(meme, p.v_p)?;
    let pre = tape.add(pre, mv)?;
    let meme_gate = tape.sigmoid(pre);
    let ms = tape.matmul(meme, p.w_s)?;
    let ms = tape.add(ms, p.b_s)?;
    let meme_candidate = tape.tanh(ms);

    let keep = tape.mul(gates.forget, prev.c)?;
    let write = tape.mul(gates.input, gates.candidate)?;
    let c = tape.add(keep, write)?;
    let meme_term = tape.mul(meme_gate, meme_candidate)?;
    let meme_term = tape.scale(meme_term, T::from_f64(p.meme_scale));
    let c = tape.add(c, meme_term)?;
    let tc = tape.tanh(c);
    let h = tape.mul(gates.output, tc)?;
    Ok(MaLstmStep {
        state: LstmState { c, h },
        gates,
        meme_gate,
        meme_candidate,
    })
}

/// Left-to-right scan from a zero state; row `t` of the result is `h_t`.
/// Also returns every step for inspection.
pub fn malstm_forward<T: Real>(
    tape: &mut Tape<T>,
    xs: Var,
    meme: Var,
    p: &MaLstmVars,
) -> Result<(Var, Vec<MaLstmStep>)> {
    let n = tape.value(xs).rows();
    let d = tape.value(p.b_p).cols();
    let mut state = zero_state(tape, d);
    let mut steps = Vec::with_capacity(n);
    for t in 0..n {
        let x = tape.row(xs, t)?;
        let step = malstm_cell(tape, x, state, meme, p)?;
        state = step.state;
        steps.push(step);
    }
    let hs: Vec<Var> = steps.iter().map(|s| s.state.h).collect();
    Ok((tape.concat_rows(&hs)?, steps))
}
