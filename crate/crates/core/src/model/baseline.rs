use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Normalizer, Variant};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{Bound, LstmCell, Mlp, MlpSpec, ParamSet};
use crate::trajectory::{Point, Trajectory};

/// Deterministic next-point predictor. Each step feeds the current point
/// through an LSTM cell and adds the head's displacement to it.
pub struct LstmBaseline {
    config: ModelConfig,
    pub params: ParamSet,
    pub norm: Normalizer,
    cell: LstmCell,
    head: Mlp,
}

impl LstmBaseline {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut model = Self::skeleton(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        model.cell.init(&mut model.params, &mut rng)?;
        model.head.init(&mut model.params, &mut rng)?;
        Ok(model)
    }

    pub fn from_params(config: ModelConfig, params: ParamSet, norm: Normalizer) -> Result<Self> {
        let fresh = Self::new(config)?;
        for (name, t) in fresh.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Config(format!("parameter `{name}` has the wrong shape")));
            }
        }
        if params.len() != fresh.params.len() {
            return Err(Error::Config("weights do not match the baseline layout".into()));
        }
        Ok(Self {
            params,
            norm,
            ..fresh
        })
    }

    fn skeleton(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        if config.variant != Variant::LstmBaseline {
            return Err(Error::Config(format!("{} is not the LSTM baseline", config.variant)));
        }
        let mut head = config.head.clone();
        head.push(2);
        Ok(Self {
            cell: LstmCell::new("lstm", 2, config.hidden),
            head: Mlp::new("lstm.head", MlpSpec::new(config.hidden, head)?)?,
            params: ParamSet::new(),
            norm: Normalizer::default(),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn cell(&self) -> &LstmCell {
        &self.cell
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    fn advance(&self, tape: &mut Tape, bound: &Bound, current: Var, state: (Var, Var)) -> Result<(Var, (Var, Var))> {
        let center = tape.constant(Tensor::new(vec![1, 2], self.norm.center.to_vec())?)?;
        let shifted = tape.sub(current, center)?;
        let x = tape.scale(shifted, 1.0 / self.norm.scale)?;
        let (h, c) = self.cell.step(tape, bound, x, state.0, state.1)?;
        let delta = self.head.forward(tape, bound, h)?;
        let delta = tape.scale(delta, self.norm.scale)?;
        Ok((tape.add(current, delta)?, (h, c)))
    }

    fn zero_state(&self, tape: &mut Tape, rows: usize) -> Result<(Var, Var)> {
        let h = tape.constant(Tensor::zeros(&[rows, self.config.hidden]))?;
        Ok((h, h))
    }

    /// Teacher-forced next-point predictions for steps `2..=T`, `[B, 2]` each.
    pub fn teacher_forced(&self, tape: &mut Tape, bound: &Bound, batch: &[&Trajectory]) -> Result<(Vec<Var>, Vec<Var>)> {
        let t_len = batch.first().map_or(0, |t| t.len());
        if t_len < 2 || batch.iter().any(|t| t.len() != t_len) {
            return Err(Error::Input("baseline training needs equal-length trajectories of at least 2 points".into()));
        }
        let rows = batch.len();
        let mut state = self.zero_state(tape, rows)?;
        let mut preds = Vec::with_capacity(t_len - 1);
        let mut targets = Vec::with_capacity(t_len - 1);
        for t in 0..t_len - 1 {
            let cur: Vec<f64> = batch.iter().flat_map(|tr| tr.points[t]).collect();
            let nxt: Vec<f64> = batch.iter().flat_map(|tr| tr.points[t + 1]).collect();
            let cur = tape.constant(Tensor::new(vec![rows, 2], cur)?)?;
            let (pred, s) = self.advance(tape, bound, cur, state)?;
            state = s;
            preds.push(pred);
            targets.push(tape.constant(Tensor::new(vec![rows, 2], nxt)?)?);
        }
        Ok((preds, targets))
    }

    /// Feeds each prediction back as the next input, returning the
    /// `t_len` points that follow `start`.
    pub fn rollout(&self, start: Point, t_len: usize) -> Result<Trajectory> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let mut state = self.zero_state(&mut tape, 1)?;
        let mut current = tape.constant(Tensor::new(vec![1, 2], start.to_vec())?)?;
        let mut points = Vec::with_capacity(t_len);
        for _ in 0..t_len {
            let (next, s) = self.advance(&mut tape, &bound, current, state)?;
            state = s;
            let row = tape.value(next).row(0);
            points.push([row[0], row[1]]);
            current = next;
        }
        Ok(Trajectory::with_interval(points, self.config.interval_s))
    }

    /// `start` followed by `t_len - 1` rolled-out points.
    pub fn generate(&self, start: Point, t_len: usize) -> Result<Trajectory> {
        let mut traj = self.rollout(start, t_len.saturating_sub(1))?;
        traj.points.insert(0, start);
        Ok(traj)
    }
}
