use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Normalizer, PosteriorMode, PriorCondition, Variant};
use super::noise::{GaussianNoise, Noise};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::{BiLstm, Bound, Linear, Mlp, MlpSpec, ParamSet, RnnCell};
use crate::trajectory::Trajectory;

/// Added to every softplus scale head.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian parameters and a reparameterized draw, all `[rows, dim]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mu: Var,
    pub sigma: Var,
    pub sample: Var,
}

/// Step-wise prior parameters; each entry is `[1, z]` for a zero condition
/// or `[B, z]` when conditioned on the global latent.
#[derive(Clone, Debug)]
pub struct ThetaSeq {
    pub mu: Vec<Var>,
    pub sigma: Vec<Var>,
}

/// Everything one training forward pass produces.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub global: Option<GaussianVars>,
    pub steps: Vec<GaussianVars>,
    pub theta: Option<ThetaSeq>,
    /// Reconstruction per step, `[B, 2]` in kilometres.
    pub recon: Vec<Var>,
    /// Observed points per step, `[B, 2]` in kilometres.
    pub target: Vec<Var>,
}

struct GlobalEncoder {
    rnn: BiLstm,
    mu: Linear,
    sigma: Linear,
}

struct StepEncoder {
    rnn: BiLstm,
    cell: RnnCell,
    mu: Linear,
    sigma: Linear,
}

struct PriorNet {
    mu_rnn: BiLstm,
    sigma_rnn: BiLstm,
    mu: Linear,
    sigma: Linear,
}

struct Decoder {
    rnn: BiLstm,
    head: Mlp,
}

/// Factorized sequential VAE over fixed-length trajectories.
pub struct StgModel {
    config: ModelConfig,
    pub params: ParamSet,
    pub norm: Normalizer,
    embed: Mlp,
    global: Option<GlobalEncoder>,
    steps: Option<StepEncoder>,
    prior: Option<PriorNet>,
    decoder: Decoder,
}

fn gaussian_head(
    tape: &mut Tape,
    bound: &Bound,
    mu: &Linear,
    sigma: &Linear,
    x: Var,
    noise: &mut dyn Noise,
) -> Result<GaussianVars> {
    let m = mu.forward(tape, bound, x)?;
    let s = positive_scale(tape, bound, sigma, x)?;
    let sample = reparameterize(tape, m, s, noise)?;
    Ok(GaussianVars { mu: m, sigma: s, sample })
}

fn positive_scale(tape: &mut Tape, bound: &Bound, head: &Linear, x: Var) -> Result<Var> {
    let raw = head.forward(tape, bound, x)?;
    let sp = tape.softplus(raw)?;
    Ok(tape.add_scalar(sp, SIGMA_FLOOR)?)
}

/// `mu + sigma * eps`, with `eps` drawn at the shape of the wider operand.
pub fn reparameterize(tape: &mut Tape, mu: Var, sigma: Var, noise: &mut dyn Noise) -> Result<Var> {
    let shape = if tape.value(mu).rows() >= tape.value(sigma).rows() {
        tape.shape(mu).to_vec()
    } else {
        tape.shape(sigma).to_vec()
    };
    reparameterize_rows(tape, mu, sigma, &shape, noise)
}

fn reparameterize_rows(tape: &mut Tape, mu: Var, sigma: Var, shape: &[usize], noise: &mut dyn Noise) -> Result<Var> {
    let eps = tape.constant(noise.sample(shape))?;
    let scaled = tape.mul(sigma, eps)?;
    Ok(tape.add(mu, scaled)?)
}

impl StgModel {
    /// Builds the blocks for `config` and initializes parameters from
    /// `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut model = Self::skeleton(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
        model.init(&mut rng)?;
        Ok(model)
    }

    /// Rebuilds a model around existing parameters; every expected tensor
    /// must be present with the right shape.
    pub fn from_params(config: ModelConfig, params: ParamSet, norm: Normalizer) -> Result<Self> {
        let mut model = Self::skeleton(config)?;
        let mut reference = ParamSet::new();
        model.init(&mut ChaCha8Rng::seed_from_u64(0))?;
        std::mem::swap(&mut reference, &mut model.params);
        for (name, t) in reference.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, config implies {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if params.len() != reference.len() {
            return Err(Error::Config(format!(
                "weights carry {} tensors, config implies {}",
                params.len(),
                reference.len()
            )));
        }
        model.params = params;
        model.norm = norm;
        Ok(model)
    }

    fn skeleton(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let variant = config.variant;
        if !variant.is_latent() {
            return Err(Error::Variant {
                variant: variant.name(),
                action: "be built as a latent-variable model",
            });
        }
        let h = config.hidden;
        let embed = Mlp::new("embed", MlpSpec::new(2, config.embed.clone())?)?;
        let ew = config.embed_width();
        let global = variant.has_global().then(|| GlobalEncoder {
            rnn: BiLstm::new("enc_f", ew, h),
            mu: Linear::new("enc_f.mu", 2 * h, config.f_dim),
            sigma: Linear::new("enc_f.sigma", 2 * h, config.f_dim),
        });
        let steps = variant.has_steps().then(|| StepEncoder {
            rnn: BiLstm::new("enc_z", config.step_encoder_input(), h),
            cell: RnnCell::new("enc_z.rnn", 2 * h, h),
            mu: Linear::new("enc_z.mu", h, config.z_dim),
            sigma: Linear::new("enc_z.sigma", h, config.z_dim),
        });
        if variant.has_steps() && config.prior_condition == PriorCondition::Global && !variant.has_global() {
            return Err(Error::Config("a prior conditioned on the global latent needs a variant with one".into()));
        }
        let prior = variant.has_steps().then(|| PriorNet {
            mu_rnn: BiLstm::new("prior.mu_rnn", config.prior_width(), h),
            sigma_rnn: BiLstm::new("prior.sigma_rnn", config.prior_width(), h),
            mu: Linear::new("prior.mu", 2 * h, config.z_dim),
            sigma: Linear::new("prior.sigma", 2 * h, config.z_dim),
        });
        let mut head = config.head.clone();
        head.push(2);
        let decoder = Decoder {
            rnn: BiLstm::new("dec", config.decoder_input(), h),
            head: Mlp::new("dec.head", MlpSpec::new(2 * h, head)?)?,
        };
        Ok(Self {
            config,
            params: ParamSet::new(),
            norm: Normalizer::default(),
            embed,
            global,
            steps,
            prior,
            decoder,
        })
    }

    fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let p = &mut self.params;
        self.embed.init(p, rng)?;
        if let Some(g) = &self.global {
            g.rnn.init(p, rng)?;
            g.mu.init(p, rng)?;
            g.sigma.init(p, rng)?;
        }
        if let Some(s) = &self.steps {
            s.rnn.init(p, rng)?;
            s.cell.init(p, rng)?;
            s.mu.init(p, rng)?;
            s.sigma.init(p, rng)?;
        }
        if let Some(pr) = &self.prior {
            pr.mu_rnn.init(p, rng)?;
            pr.sigma_rnn.init(p, rng)?;
            pr.mu.init(p, rng)?;
            pr.sigma.init(p, rng)?;
        }
        self.decoder.rnn.init(p, rng)?;
        self.decoder.head.init(p, rng)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Observed points as per-step `[B, 2]` constants, in kilometres.
    pub fn points_on_tape(&self, tape: &mut Tape, batch: &[&Trajectory]) -> Result<Vec<Var>> {
        let t_len = check_batch(batch)?;
        (0..t_len)
            .map(|t| {
                let data = batch.iter().flat_map(|tr| tr.points[t]).collect();
                Ok(tape.constant(Tensor::new(vec![batch.len(), 2], data)?)?)
            })
            .collect()
    }

    /// Normalized then embedded points, one `[B, embed]` per step.
    pub fn embed_points(&self, tape: &mut Tape, bound: &Bound, batch: &[&Trajectory]) -> Result<Vec<Var>> {
        let t_len = check_batch(batch)?;
        (0..t_len)
            .map(|t| {
                let data = batch.iter().flat_map(|tr| self.norm.apply(tr.points[t])).collect();
                let x = tape.constant(Tensor::new(vec![batch.len(), 2], data)?)?;
                self.embed.forward(tape, bound, x)
            })
            .collect()
    }

    /// Posterior over the global latent from embedded steps.
    pub fn encode_f(&self, tape: &mut Tape, bound: &Bound, embedded: &[Var], noise: &mut dyn Noise) -> Result<GaussianVars> {
        let enc = self.global.as_ref().ok_or(Error::Variant {
            variant: self.variant().name(),
            action: "encode a global latent",
        })?;
        if embedded.is_empty() {
            return Err(Error::Input("cannot encode an empty trajectory".into()));
        }
        let out = enc.rnn.run(tape, bound, embedded)?;
        // Forward state after the last step joined with the reverse state
        // after the first: each summarizes the whole sequence.
        let last = out.len() - 1;
        let summary = tape.concat(&[out.forward[last], out.backward[0]])?;
        gaussian_head(tape, bound, &enc.mu, &enc.sigma, summary, noise)
    }

    /// Per-step posterior over the step latents.
    pub fn encode_z(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        embedded: &[Var],
        global: Option<Var>,
        mode: PosteriorMode,
        noise: &mut dyn Noise,
    ) -> Result<Vec<GaussianVars>> {
        let enc = self.steps.as_ref().ok_or(Error::Variant {
            variant: self.variant().name(),
            action: "encode step latents",
        })?;
        if embedded.is_empty() {
            return Err(Error::Input("cannot encode an empty trajectory".into()));
        }
        let inputs: Vec<Var> = match (mode, global) {
            (PosteriorMode::Factorized, _) => embedded.to_vec(),
            (PosteriorMode::Full, Some(f)) => embedded
                .iter()
                .map(|&e| tape.concat(&[e, f]))
                .collect::<std::result::Result<_, _>>()?,
            (PosteriorMode::Full, None) => {
                return Err(Error::Input("full posterior needs the global latent".into()));
            }
        };
        let bi = enc.rnn.run(tape, bound, &inputs)?;
        let joined = bi.concat_all(tape)?;
        let states = enc.cell.run(tape, bound, &joined)?;
        states
            .into_iter()
            .map(|a| gaussian_head(tape, bound, &enc.mu, &enc.sigma, a, noise))
            .collect()
    }

    /// Sequential prior parameters for `t_len` steps. `condition` is only
    /// used when the config conditions the prior on the global latent.
    pub fn prior_generate(&self, tape: &mut Tape, bound: &Bound, t_len: usize, condition: Option<Var>) -> Result<ThetaSeq> {
        let pr = self.prior.as_ref().ok_or(Error::Variant {
            variant: self.variant().name(),
            action: "generate a step prior",
        })?;
        if t_len == 0 {
            return Err(Error::Input("prior length must be positive".into()));
        }
        let input = match (self.config.prior_condition, condition) {
            (PriorCondition::Zero, _) => tape.constant(Tensor::zeros(&[1, self.config.prior_input]))?,
            (PriorCondition::Global, Some(f)) => f,
            (PriorCondition::Global, None) => {
                return Err(Error::Input("prior conditioned on the global latent needs it".into()));
            }
        };
        let seq = vec![input; t_len];
        let mu_out = pr.mu_rnn.run(tape, bound, &seq)?;
        let sigma_out = pr.sigma_rnn.run(tape, bound, &seq)?;
        let mut mu = Vec::with_capacity(t_len);
        let mut sigma = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let b = mu_out.at(tape, t)?;
            mu.push(pr.mu.forward(tape, bound, b)?);
            let b = sigma_out.at(tape, t)?;
            sigma.push(positive_scale(tape, bound, &pr.sigma, b)?);
        }
        Ok(ThetaSeq { mu, sigma })
    }

    /// Decodes latents to per-step `[B, 2]` points in kilometres.
    pub fn decode(&self, tape: &mut Tape, bound: &Bound, global: Option<Var>, steps: Option<&[Var]>, t_len: usize) -> Result<Vec<Var>> {
        let v = self.variant();
        let mismatch = Error::Variant {
            variant: v.name(),
            action: "decode the supplied latents",
        };
        if t_len == 0 {
            return Err(Error::Input("decode length must be positive".into()));
        }
        let inputs: Vec<Var> = match (v.has_global(), v.has_steps(), global, steps) {
            (true, false, Some(f), None) => vec![f; t_len],
            (false, true, None, Some(z)) if z.len() == t_len => z.to_vec(),
            (true, true, Some(f), Some(z)) if z.len() == t_len => z
                .iter()
                .map(|&zt| tape.concat(&[f, zt]))
                .collect::<std::result::Result<_, _>>()?,
            _ => return Err(mismatch),
        };
        let bi = self.decoder.rnn.run(tape, bound, &inputs)?;
        let center = tape.constant(Tensor::new(vec![1, 2], self.norm.center.to_vec())?)?;
        (0..t_len)
            .map(|t| {
                let b = bi.at(tape, t)?;
                let out = self.decoder.head.forward(tape, bound, b)?;
                let out = tape.scale(out, self.norm.scale)?;
                Ok(tape.add(out, center)?)
            })
            .collect()
    }

    /// Encoder, posterior sampling, prior and decoder for one batch.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, batch: &[&Trajectory], noise: &mut dyn Noise) -> Result<ForwardPass> {
        let v = self.variant();
        let target = self.points_on_tape(tape, batch)?;
        let embedded = self.embed_points(tape, bound, batch)?;
        let t_len = embedded.len();
        let global = if v.has_global() {
            Some(self.encode_f(tape, bound, &embedded, noise)?)
        } else {
            None
        };
        let f = global.map(|g| g.sample);
        let (steps, theta) = match v.posterior_mode() {
            Some(mode) => {
                let steps = self.encode_z(tape, bound, &embedded, f, mode, noise)?;
                let theta = self.prior_generate(tape, bound, t_len, f)?;
                (steps, Some(theta))
            }
            None => (Vec::new(), None),
        };
        let z: Vec<Var> = steps.iter().map(|s| s.sample).collect();
        let recon = self.decode(tape, bound, f, v.has_steps().then_some(z.as_slice()), t_len)?;
        Ok(ForwardPass {
            global,
            steps,
            theta,
            recon,
            target,
        })
    }

    /// Draws from the generative model on `tape` so gradients reach the prior
    /// and decoder. Returns per-step `[n, 2]` points.
    pub fn sample_on_tape(&self, tape: &mut Tape, bound: &Bound, n: usize, t_len: usize, noise: &mut dyn Noise) -> Result<Vec<Var>> {
        let v = self.variant();
        let f = if v.has_global() {
            Some(tape.constant(noise.sample(&[n, self.config.f_dim]))?)
        } else {
            None
        };
        let z = if v.has_steps() {
            let theta = self.prior_generate(tape, bound, t_len, f)?;
            let shape = [n, self.config.z_dim];
            let z = theta
                .mu
                .iter()
                .zip(&theta.sigma)
                .map(|(&m, &s)| reparameterize_rows(tape, m, s, &shape, noise))
                .collect::<Result<Vec<_>>>()?;
            Some(z)
        } else {
            None
        };
        self.decode(tape, bound, f, z.as_deref(), t_len)
    }

    /// `n` trajectories of `t_len` points, deterministic in `seed`.
    pub fn synthesize(&self, n: usize, t_len: usize, seed: u64) -> Result<Vec<Trajectory>> {
        let mut noise = GaussianNoise::new(ChaCha8Rng::seed_from_u64(seed));
        self.synthesize_with(n, t_len, &mut noise)
    }

    pub fn synthesize_with(&self, n: usize, t_len: usize, noise: &mut dyn Noise) -> Result<Vec<Trajectory>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let steps = self.sample_on_tape(&mut tape, &bound, n, t_len, noise)?;
        Ok(collect_trajectories(&tape, &steps, n, self.config.interval_s))
    }

    /// Crossed samples for inspecting disentanglement: cell `(r, c)` pairs
    /// global draw `r` with step-noise draw `c`, so rows share `f` and
    /// columns share the `z` sequence.
    pub fn probe_grid(&self, rows: usize, cols: usize, t_len: usize, seed: u64) -> Result<Vec<Vec<Trajectory>>> {
        let v = self.variant();
        if !(v.has_global() && v.has_steps()) {
            return Err(Error::Variant {
                variant: v.name(),
                action: "cross global and step latents",
            });
        }
        if rows == 0 || cols == 0 {
            return Ok(vec![Vec::new(); rows]);
        }
        let mut noise = GaussianNoise::new(ChaCha8Rng::seed_from_u64(seed));
        let (fd, zd) = (self.config.f_dim, self.config.z_dim);
        let f = noise.sample(&[rows, fd]);
        let eps: Vec<Tensor> = (0..t_len).map(|_| noise.sample(&[cols, zd])).collect();
        let n = rows * cols;
        let mut draws = Vec::with_capacity(t_len + 1);
        let f_data = (0..n).flat_map(|i| f.row(i / cols).to_vec()).collect();
        draws.push(Tensor::new(vec![n, fd], f_data)?);
        for e in &eps {
            let data = (0..n).flat_map(|i| e.row(i % cols).to_vec()).collect();
            draws.push(Tensor::new(vec![n, zd], data)?);
        }
        let mut flat = self.synthesize_with(n, t_len, &mut super::noise::ReplayNoise::new(draws))?.into_iter();
        Ok((0..rows).map(|_| flat.by_ref().take(cols).collect()).collect())
    }

    /// Decodes explicit latents without sampling: `global` is `[n, f_dim]`,
    /// `steps` holds `t_len` tensors of `[n, z_dim]`.
    pub fn decode_values(&self, global: Option<&Tensor>, steps: Option<&[Tensor]>, t_len: usize) -> Result<Vec<Trajectory>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let f = global.map(|g| tape.constant(g.clone())).transpose()?;
        let z = steps
            .map(|s| s.iter().map(|t| tape.constant(t.clone())).collect::<std::result::Result<Vec<_>, _>>())
            .transpose()?;
        let out = self.decode(&mut tape, &bound, f, z.as_deref(), t_len)?;
        let n = out.first().map_or(0, |&v| tape.value(v).rows());
        Ok(collect_trajectories(&tape, &out, n, self.config.interval_s))
    }

    /// Prior parameters as plain tensors.
    pub fn theta_values(&self, t_len: usize) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let theta = self.prior_generate(&mut tape, &bound, t_len, None)?;
        let grab = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect();
        Ok((grab(&theta.mu), grab(&theta.sigma)))
    }

    /// Reconstructs each trajectory through the posterior means.
    pub fn reconstruct(&self, batch: &[&Trajectory]) -> Result<Vec<Trajectory>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let mut noise = super::noise::ZeroNoise;
        let pass = self.forward(&mut tape, &bound, batch, &mut noise)?;
        Ok(collect_trajectories(&tape, &pass.recon, batch.len(), self.config.interval_s))
    }
}

fn check_batch(batch: &[&Trajectory]) -> Result<usize> {
    let first = batch.first().ok_or_else(|| Error::Input("empty batch".into()))?;
    let t_len = first.len();
    if t_len == 0 {
        return Err(Error::Input("empty trajectory".into()));
    }
    if batch.iter().any(|t| t.len() != t_len) {
        return Err(Error::Input("batch trajectories differ in length".into()));
    }
    Ok(t_len)
}

pub(crate) fn collect_trajectories(tape: &Tape, steps: &[Var], n: usize, interval_s: f64) -> Vec<Trajectory> {
    (0..n)
        .map(|i| {
            let points = steps
                .iter()
                .map(|&v| {
                    let row = tape.value(v).row(i);
                    [row[0], row[1]]
                })
                .collect();
            Trajectory::with_interval(points, interval_s)
        })
        .collect()
}
