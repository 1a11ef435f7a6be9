use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{uniform_weights, Bound, ParamSet};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

fn check_width(tape: &Tape, block: &str, x: Var, expected: usize) -> Result<()> {
    let got = tape.value(x).cols();
    if tape.shape(x).is_empty() || got != expected {
        return Err(Error::Width {
            block: block.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Affine map `x W + b` with `W: [input, output]`.
#[derive(Clone, Debug)]
pub struct Linear {
    name: String,
    w: String,
    b: String,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        let name = name.into();
        Self {
            w: format!("{name}.w"),
            b: format!("{name}.b"),
            name,
            input,
            output,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        params.insert(&self.w, uniform_weights(rng, self.input, &[self.input, self.output]))?;
        params.insert(&self.b, Tensor::zeros(&[self.output]))
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        check_width(tape, &self.name, x, self.input)?;
        let xw = tape.matmul(x, bound.get(&self.w)?)?;
        Ok(tape.add(xw, bound.get(&self.b)?)?)
    }

    pub fn weight_name(&self) -> &str {
        &self.w
    }

    pub fn bias_name(&self) -> &str {
        &self.b
    }
}

/// Layer widths of a perceptron. `widths` are the output widths of each
/// layer in order; hidden layers use tanh, the last layer is linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input: usize, widths: impl Into<Vec<usize>>) -> Result<Self> {
        let spec = Self {
            input,
            widths: widths.into(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        if self.input == 0 || self.widths.contains(&0) {
            return Err(Error::Config(format!("MLP widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn output(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(name: &str, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut prev = spec.input;
        let layers = spec
            .widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = Linear::new(format!("{name}.{i}"), prev, w);
                prev = w;
                l
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        self.layers.iter().try_for_each(|l| l.init(params, rng))
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, bound, h)?;
            if i < last {
                h = tape.tanh(h)?;
            }
        }
        Ok(h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Forward,
    Bidirectional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    Lstm,
    VanillaRnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentSpec {
    pub input: usize,
    pub hidden: usize,
    pub direction: Direction,
    pub cell: CellKind,
}

impl RecurrentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("recurrent widths must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Width of the per-step output.
    pub fn output(&self) -> usize {
        match self.direction {
            Direction::Forward => self.hidden,
            Direction::Bidirectional => 2 * self.hidden,
        }
    }
}

/// LSTM cell with fused gate weights `[input + hidden, 4 hidden]`, gate
/// order input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    name: String,
    w: String,
    b: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        let name = name.into();
        Self {
            w: format!("{name}.w"),
            b: format!("{name}.b"),
            name,
            input,
            hidden,
        }
    }

    pub fn weight_name(&self) -> &str {
        &self.w
    }

    pub fn bias_name(&self) -> &str {
        &self.b
    }

    /// Forget-gate bias starts at 1.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        let fan_in = self.input + self.hidden;
        let h = self.hidden;
        params.insert(&self.w, uniform_weights(rng, fan_in, &[fan_in, 4 * h]))?;
        let mut b = Tensor::zeros(&[4 * h]);
        b.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
        params.insert(&self.b, b)
    }

    pub fn step(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        check_width(tape, &self.name, x, self.input)?;
        check_width(tape, &self.name, h, self.hidden)?;
        check_width(tape, &self.name, c, self.hidden)?;
        let hd = self.hidden;
        let xh = tape.concat(&[x, h])?;
        let pre = tape.matmul(xh, bound.get(&self.w)?)?;
        let pre = tape.add(pre, bound.get(&self.b)?)?;
        let i = tape.slice(pre, 0, hd)?;
        let f = tape.slice(pre, hd, 2 * hd)?;
        let g = tape.slice(pre, 2 * hd, 3 * hd)?;
        let o = tape.slice(pre, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(i)?;
        let f = tape.sigmoid(f)?;
        let g = tape.tanh(g)?;
        let o = tape.sigmoid(o)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.tanh(c_next)?;
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Runs the cell over `seq` from zero state, returning every hidden output.
    pub fn run(&self, tape: &mut Tape, bound: &Bound, seq: &[Var], reverse: bool) -> Result<Vec<Var>> {
        let mut visits = vec![0; seq.len()];
        self.run_counted(tape, bound, seq, reverse, &mut visits)
    }

    fn run_counted(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        seq: &[Var],
        reverse: bool,
        visits: &mut [u32],
    ) -> Result<Vec<Var>> {
        let first = *seq.first().ok_or_else(|| Error::Input("empty sequence".into()))?;
        let rows = tape.value(first).rows();
        let mut h = tape.constant(Tensor::zeros(&[rows, self.hidden]))?;
        let mut c = h;
        let mut out = vec![h; seq.len()];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..seq.len()).rev())
        } else {
            Box::new(0..seq.len())
        };
        for t in order {
            (h, c) = self.step(tape, bound, seq[t], h, c)?;
            visits[t] += 1;
            out[t] = h;
        }
        Ok(out)
    }
}

/// Per-step outputs of a bidirectional pass. `backward[t]` is the reverse
/// direction's output after consuming steps `t..T`.
#[derive(Clone, Debug)]
pub struct BiOutput {
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
    /// How many times each input step was consumed.
    pub visits: Vec<u32>,
}

impl BiOutput {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `[forward_t ; backward_t]`.
    pub fn at(&self, tape: &mut Tape, t: usize) -> Result<Var> {
        Ok(tape.concat(&[self.forward[t], self.backward[t]])?)
    }

    pub fn concat_all(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        (0..self.len()).map(|t| self.at(tape, t)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new(name: &str, input: usize, hidden: usize) -> Self {
        Self {
            forward: LstmCell::new(format!("{name}.fwd"), input, hidden),
            backward: LstmCell::new(format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn spec(&self) -> RecurrentSpec {
        RecurrentSpec {
            input: self.forward.input,
            hidden: self.forward.hidden,
            direction: Direction::Bidirectional,
            cell: CellKind::Lstm,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        self.forward.init(params, rng)?;
        self.backward.init(params, rng)
    }

    pub fn run(&self, tape: &mut Tape, bound: &Bound, seq: &[Var]) -> Result<BiOutput> {
        if seq.is_empty() {
            return Err(Error::Input("bidirectional LSTM over an empty sequence".into()));
        }
        let mut visits = vec![0; seq.len()];
        let forward = self.forward.run_counted(tape, bound, seq, false, &mut visits)?;
        let backward = self.backward.run_counted(tape, bound, seq, true, &mut visits)?;
        Ok(BiOutput {
            forward,
            backward,
            visits,
        })
    }
}

/// Elman cell `h' = tanh([x ; h] W + b)`.
#[derive(Clone, Debug)]
pub struct RnnCell {
    name: String,
    w: String,
    b: String,
    pub input: usize,
    pub hidden: usize,
}

impl RnnCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        let name = name.into();
        Self {
            w: format!("{name}.w"),
            b: format!("{name}.b"),
            name,
            input,
            hidden,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, rng: &mut R) -> Result<()> {
        let fan_in = self.input + self.hidden;
        params.insert(&self.w, uniform_weights(rng, fan_in, &[fan_in, self.hidden]))?;
        params.insert(&self.b, Tensor::zeros(&[self.hidden]))
    }

    pub fn step(&self, tape: &mut Tape, bound: &Bound, x: Var, h: Var) -> Result<Var> {
        check_width(tape, &self.name, x, self.input)?;
        check_width(tape, &self.name, h, self.hidden)?;
        let xh = tape.concat(&[x, h])?;
        let pre = tape.matmul(xh, bound.get(&self.w)?)?;
        let pre = tape.add(pre, bound.get(&self.b)?)?;
        Ok(tape.tanh(pre)?)
    }

    /// Forward in time from a zero state.
    pub fn run(&self, tape: &mut Tape, bound: &Bound, seq: &[Var]) -> Result<Vec<Var>> {
        let first = *seq.first().ok_or_else(|| Error::Input("empty sequence".into()))?;
        let rows = tape.value(first).rows();
        let mut h = tape.constant(Tensor::zeros(&[rows, self.hidden]))?;
        let mut out = Vec::with_capacity(seq.len());
        for &x in seq {
            h = self.step(tape, bound, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}
