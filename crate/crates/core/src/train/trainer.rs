use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::losses::{
    discriminator_value, link_batches, loss_link_prediction, loss_structure_proximity,
    loss_time_invariant, node_batch, structure_batches, ContrastBatch, LinkBatch,
};
use super::{Discriminator, DiscriminatorParams, Pretext, TrainConfig};
use crate::autodiff::{Adam, Tape, Tensor, Var};
use crate::encoder::{
    encode_sequence, time_invariant_final, Encoder, EncoderParams, EncoderShape,
    RepresentationSet,
};
use crate::error::{Error, Result};
use crate::graph::{Csr, DynamicGraph};
use crate::sampler::{clip_masks, ClipDraw, ClipSampling};

/// Independent random streams, so that changing how often one consumer draws
/// never shifts what another one sees.
struct Streams {
    clip: ChaCha8Rng,
    contrast: ChaCha8Rng,
    pretext: ChaCha8Rng,
    disc: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const INIT_STREAM: u64 = 0;

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            clip: stream(seed, 1),
            contrast: stream(seed, 2),
            pretext: stream(seed, 3),
            disc: stream(seed, 4),
        }
    }
}

/// All learnable state of the disentangled model.
#[derive(Debug, Clone, PartialEq)]
pub struct DytedModel {
    pub invariant: EncoderParams,
    pub varying: EncoderParams,
    pub discriminator: DiscriminatorParams,
    pub alpha_raw: f64,
}

impl DytedModel {
    pub fn init(cfg: &TrainConfig, node_count: usize) -> Self {
        let mut rng = stream(cfg.seed, INIT_STREAM);
        let half = cfg.half();
        let shape = EncoderShape {
            node_count,
            hidden: cfg.hidden_width(half),
            out_dim: half,
        };
        let invariant = EncoderParams::init(shape, &mut rng);
        let varying = EncoderParams::init(shape, &mut rng);
        let discriminator = DiscriminatorParams::init(cfg.d, &mut rng);
        let a = cfg.alpha_init;
        Self {
            invariant,
            varying,
            discriminator,
            alpha_raw: (a / (1.0 - a)).ln(),
        }
    }

    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 + (-self.alpha_raw).exp())
    }

    /// Sum of squares of every generator tensor.
    pub fn generator_sum_squares(&self) -> f64 {
        self.invariant.sum_squares() + self.varying.sum_squares()
    }
}

/// Per-iteration loss record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub l_v: f64,
    pub l_i: f64,
    pub v: f64,
    pub loss_d: f64,
    pub alpha: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "L_v", "L_i", "V", "loss_D", "alpha", "total"])?;
        for r in &self.rows {
            w.write_record([
                r.iter.to_string(),
                r.l_v.to_string(),
                r.l_i.to_string(),
                r.v.to_string(),
                r.loss_d.to_string(),
                r.alpha.to_string(),
                r.total.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }
}

/// Index triples for discriminator samples, sorted by snapshot so each
/// snapshot's rows can be gathered in one piece.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscSamples {
    pub t: Vec<usize>,
    pub v: Vec<usize>,
    pub u: Vec<usize>,
}

impl DiscSamples {
    /// `t` uniform, `v` uniform, `u ≠ v` uniform.
    pub fn sample<R: Rng + ?Sized>(
        node_count: usize,
        t_count: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::Contract("false samples need two distinct nodes".into()));
        }
        let mut rows: Vec<(usize, usize, usize)> = (0..count)
            .map(|_| {
                let t = rng.random_range(0..t_count);
                let v = rng.random_range(0..node_count);
                let mut u = rng.random_range(0..node_count - 1);
                if u >= v {
                    u += 1;
                }
                (t, v, u)
            })
            .collect();
        rows.sort_by_key(|r| r.0);
        Ok(Self {
            t: rows.iter().map(|r| r.0).collect(),
            v: rows.iter().map(|r| r.1).collect(),
            u: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// True rows `(s_v, d_v^t)` and false rows `(s_v, d_u^t)`.
    pub fn assemble<'t>(&self, s: Var<'t>, d: &[Var<'t>]) -> Result<(Var<'t>, Var<'t>)> {
        let s_rows = s.gather_rows(&self.v)?;
        let mut real = Vec::new();
        let mut fake = Vec::new();
        let mut start = 0;
        while start < self.t.len() {
            let t = self.t[start];
            let end = start + self.t[start..].iter().take_while(|&&x| x == t).count();
            real.push(d[t].gather_rows(&self.v[start..end])?);
            fake.push(d[t].gather_rows(&self.u[start..end])?);
            start = end;
        }
        Ok((
            Var::concat(&[s_rows, Var::vstack(&real)?])?,
            Var::concat(&[s_rows, Var::vstack(&fake)?])?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PretextBatches {
    Structure(Vec<ContrastBatch>),
    Link(Vec<LinkBatch>),
}

impl PretextBatches {
    pub fn sample<R: Rng + ?Sized>(cfg: &TrainConfig, graph: &DynamicGraph, rng: &mut R) -> Self {
        match cfg.pretext {
            Pretext::StructureProximity => PretextBatches::Structure(structure_batches(
                graph,
                cfg.n,
                cfg.max_edges_per_snapshot,
                rng,
            )),
            Pretext::LinkPrediction => PretextBatches::Link(link_batches(
                graph,
                cfg.n,
                cfg.max_edges_per_snapshot,
                rng,
            )),
        }
    }

    pub fn loss<'t>(&self, reps: &[Var<'t>], tau: f64) -> Result<Var<'t>> {
        match self {
            PretextBatches::Structure(b) => loss_structure_proximity(reps, b, tau),
            PretextBatches::Link(b) => loss_link_prediction(reps, b),
        }
    }
}

/// Everything random in one generator step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationSamples {
    pub draw: ClipDraw,
    pub nodes: ContrastBatch,
    pub pretext: PretextBatches,
    pub disc: DiscSamples,
}

/// The terms of `Loss(G)` as recorded on one tape.
pub struct GeneratorTerms<'t> {
    pub l_v: Var<'t>,
    pub l_i: Var<'t>,
    pub v: Var<'t>,
    pub reg: Var<'t>,
    pub total: Var<'t>,
    /// Time-invariant representations over the whole sequence.
    pub s: Var<'t>,
    /// Time-varying representations for every snapshot.
    pub d: Vec<Var<'t>>,
}

/// `Loss(G) = L_v + λ1 L_i + λ2 V + λ3 ‖w‖²`.
///
/// The time-invariant half of the combined representation, both in the pretext
/// loss and in the discriminator samples, is `G_i` over the whole sequence:
/// the same `S` that is extracted after training. The structural pass of each
/// snapshot is shared by both clips and the full sequence, so this adds only a
/// recurrent pass.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<'t>(
    cfg: &TrainConfig,
    adj: &[Arc<Csr>],
    gi: &Encoder<'t>,
    gv: &Encoder<'t>,
    disc: &Discriminator<'t>,
    alpha_raw: Var<'t>,
    samples: &IterationSamples,
) -> Result<GeneratorTerms<'t>> {
    let draw = &samples.draw;
    let masks = clip_masks(alpha_raw, draw, cfg.tau_g, cfg.clip_sampling)?;
    let s1 = gi.encode_clip(adj, masks.mask1, draw.t_i)?;
    let s2 = gi.encode_clip(adj, masks.mask2, draw.t_i)?;
    let s = gi.encode_full(adj)?;
    let d = gv.encode_sequence(adj)?;

    let l_i = loss_time_invariant(s1, s2, &samples.nodes, cfg.tau)?;
    let reps = d
        .iter()
        .map(|dt| Var::concat(&[s, *dt]))
        .collect::<Result<Vec<_>>>()?;
    let l_v = samples.pretext.loss(&reps, cfg.tau)?;
    let (real, fake) = samples.disc.assemble(s, &d)?;
    let v = discriminator_value(disc.forward(real)?, disc.forward(fake)?)?;

    let mut reg = alpha_raw.tape().scalar(0.0);
    for w in gi.vars().iter().chain(gv.vars()) {
        reg = reg.add(w.sum_squares())?;
    }
    let total = l_v
        .add(l_i.scale(cfg.lambda1))?
        .add(v.scale(cfg.lambda2))?
        .add(reg.scale(cfg.lambda3))?;
    Ok(GeneratorTerms {
        l_v,
        l_i,
        v,
        reg,
        total,
        s,
        d,
    })
}

fn check_finite(iter: usize, terms: &[(&'static str, f64)]) -> Result<()> {
    match terms.iter().find(|(_, x)| !x.is_finite()) {
        Some(&(term, _)) => Err(Error::NonFinite { term, iter }),
        None => Ok(()),
    }
}

/// Values produced by one generator step, before the update.
#[derive(Debug, Clone)]
pub struct GeneratorStep {
    pub l_v: f64,
    pub l_i: f64,
    pub v: f64,
    pub total: f64,
    /// `∂Loss(G)/∂alpha_raw`; zero when the sampler is not learned.
    pub alpha_grad: f64,
    pub s: Tensor,
    pub d: Vec<Tensor>,
}

/// Alternating optimisation of the generators and the discriminator.
pub struct Trainer<'g> {
    cfg: TrainConfig,
    graph: &'g DynamicGraph,
    adj: Vec<Arc<Csr>>,
    model: DytedModel,
    adam_g: Adam,
    adam_d: Adam,
    streams: Streams,
    iter: usize,
    history: History,
}

impl<'g> Trainer<'g> {
    pub fn new(cfg: TrainConfig, graph: &'g DynamicGraph) -> Result<Self> {
        cfg.validate()?;
        let model = DytedModel::init(&cfg, graph.node_count());
        Self::with_model(cfg, graph, model)
    }

    pub fn with_model(cfg: TrainConfig, graph: &'g DynamicGraph, model: DytedModel) -> Result<Self> {
        cfg.validate()?;
        if model.invariant.shape().node_count != graph.node_count() {
            return Err(Error::Contract("model and graph disagree on node count".into()));
        }
        let alpha = Tensor::scalar(model.alpha_raw);
        let mut gen: Vec<&Tensor> = model
            .invariant
            .tensors()
            .iter()
            .chain(model.varying.tensors())
            .collect();
        gen.push(&alpha);
        let adam_g = Adam::new(cfg.learning_rate, &gen);
        let disc: Vec<&Tensor> = model.discriminator.tensors().iter().collect();
        let adam_d = Adam::new(cfg.learning_rate, &disc);
        Ok(Self {
            streams: Streams::new(cfg.seed),
            adj: graph.normalized(),
            cfg,
            graph,
            model,
            adam_g,
            adam_d,
            iter: 0,
            history: History::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &DytedModel {
        &self.model
    }

    pub fn into_model(self) -> DytedModel {
        self.model
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn adjacency(&self) -> &[Arc<Csr>] {
        &self.adj
    }

    pub fn sample_iteration(&mut self) -> Result<IterationSamples> {
        let n = self.graph.node_count();
        let t = self.graph.len();
        Ok(IterationSamples {
            draw: ClipDraw::sample(t, &mut self.streams.clip),
            nodes: node_batch(n, self.cfg.n, self.cfg.negative_mode, &mut self.streams.contrast)?,
            pretext: PretextBatches::sample(&self.cfg, self.graph, &mut self.streams.pretext),
            disc: self.sample_disc()?,
        })
    }

    pub fn sample_disc(&mut self) -> Result<DiscSamples> {
        DiscSamples::sample(
            self.graph.node_count(),
            self.graph.len(),
            self.cfg.n_prime,
            &mut self.streams.disc,
        )
    }

    /// Evaluate `Loss(G)` on `samples` and, when `update` is set, take one
    /// optimiser step on every generator tensor and on `alpha_raw`.
    pub fn generator_step(&mut self, samples: &IterationSamples, update: bool) -> Result<GeneratorStep> {
        let tape = Tape::new();
        let shape = self.model.invariant.shape();
        let gi = self.model.invariant.bind(&tape);
        let gv = self.model.varying.bind(&tape);
        let disc = self.model.discriminator.bind_frozen(&tape);
        let alpha = tape.param(&Tensor::scalar(self.model.alpha_raw));
        let terms = generator_loss(&self.cfg, &self.adj, &gi, &gv, &disc, alpha, samples)?;
        let (l_v, l_i, v, reg, total) = (
            terms.l_v.item(),
            terms.l_i.item(),
            terms.v.item(),
            terms.reg.item(),
            terms.total.item(),
        );
        check_finite(
            self.iter,
            &[("L_v", l_v), ("L_i", l_i), ("V", v), ("regularizer", reg), ("total", total)],
        )?;
        let grads = tape.backward(terms.total)?;
        let alpha_grad = grads.get(alpha).map_or(0.0, Tensor::item);
        let step = GeneratorStep {
            l_v,
            l_i,
            v,
            total,
            alpha_grad,
            s: terms.s.value().as_ref().clone(),
            d: terms.d.iter().map(|x| x.value().as_ref().clone()).collect(),
        };
        if update {
            let gvars: Vec<Var<'_>> = gi.vars().iter().chain(gv.vars()).copied().collect();
            let mut g: Vec<Option<&Tensor>> = gvars.iter().map(|x| grads.get(*x)).collect();
            let learn_alpha = self.cfg.clip_sampling == ClipSampling::Bidirectional;
            g.push(if learn_alpha { grads.get(alpha) } else { None });
            let mut alpha_t = Tensor::scalar(self.model.alpha_raw);
            {
                let m = &mut self.model;
                let mut params: Vec<&mut Tensor> = m
                    .invariant
                    .tensors_mut()
                    .iter_mut()
                    .chain(m.varying.tensors_mut())
                    .collect();
                params.push(&mut alpha_t);
                self.adam_g.step(&mut params, &g);
            }
            self.model.alpha_raw = alpha_t.item();
            debug_assert_eq!(shape, self.model.invariant.shape());
        }
        Ok(step)
    }

    /// `V` for fixed representations and samples under the current `D`.
    pub fn discriminator_objective(&self, s: &Tensor, d: &[Tensor], samples: &DiscSamples) -> Result<f64> {
        let tape = Tape::new();
        let disc = self.model.discriminator.bind_frozen(&tape);
        let (real, fake) = assemble_constants(&tape, s, d, samples)?;
        Ok(discriminator_value(disc.forward(real)?, disc.forward(fake)?)?.item())
    }

    /// One step minimising `Loss(D) = −V` with the generators' outputs held
    /// fixed. Returns `Loss(D)` before the step.
    pub fn discriminator_step(&mut self, s: &Tensor, d: &[Tensor], samples: &DiscSamples) -> Result<f64> {
        let tape = Tape::new();
        let disc = self.model.discriminator.bind(&tape);
        let (real, fake) = assemble_constants(&tape, s, d, samples)?;
        let loss = discriminator_value(disc.forward(real)?, disc.forward(fake)?)?.scale(-1.0);
        let value = loss.item();
        check_finite(self.iter, &[("loss_D", value)])?;
        let grads = tape.backward(loss)?;
        let g: Vec<Option<&Tensor>> = disc.vars().iter().map(|x| grads.get(*x)).collect();
        let mut params: Vec<&mut Tensor> = self.model.discriminator.tensors_mut().iter_mut().collect();
        self.adam_d.step(&mut params, &g);
        Ok(value)
    }

    /// One outer iteration: a generator step, then `k_D` discriminator steps
    /// on fresh samples against the representations the generators just
    /// produced.
    pub fn step(&mut self) -> Result<HistoryRow> {
        let samples = self.sample_iteration()?;
        let gen = self.generator_step(&samples, true)?;
        let mut loss_d = -gen.v;
        for _ in 0..self.cfg.k_d {
            let ds = self.sample_disc()?;
            loss_d = self.discriminator_step(&gen.s, &gen.d, &ds)?;
        }
        let row = HistoryRow {
            iter: self.iter,
            l_v: gen.l_v,
            l_i: gen.l_i,
            v: gen.v,
            loss_d,
            alpha: self.model.alpha(),
            total: gen.total,
        };
        self.history.rows.push(row);
        self.iter += 1;
        Ok(row)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.iter < self.cfg.epochs {
            self.step()?;
        }
        Ok(())
    }
}

fn assemble_constants<'t>(
    tape: &'t Tape,
    s: &Tensor,
    d: &[Tensor],
    samples: &DiscSamples,
) -> Result<(Var<'t>, Var<'t>)> {
    let s = tape.constant(s.clone());
    let d: Vec<Var<'t>> = d.iter().map(|x| tape.constant(x.clone())).collect();
    samples.assemble(s, &d)
}

/// Run the full adversarial loop for `cfg.epochs` iterations.
pub fn train(cfg: &TrainConfig, graph: &DynamicGraph) -> Result<(DytedModel, History)> {
    let mut t = Trainer::new(cfg.clone(), graph)?;
    t.run()?;
    let history = t.history().clone();
    Ok((t.into_model(), history))
}

/// The backbone alone: one full-width encoder trained on the pretext loss.
/// It draws pretext batches from the same stream as [`train`], so both see
/// identical negatives for a given seed.
pub fn train_baseline(cfg: &TrainConfig, graph: &DynamicGraph) -> Result<(EncoderParams, History)> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, INIT_STREAM);
    let shape = EncoderShape {
        node_count: graph.node_count(),
        hidden: cfg.hidden_width(cfg.d),
        out_dim: cfg.d,
    };
    let mut params = EncoderParams::init(shape, &mut rng);
    let refs: Vec<&Tensor> = params.tensors().iter().collect();
    let mut adam = Adam::new(cfg.learning_rate, &refs);
    let adj = graph.normalized();
    let mut streams = Streams::new(cfg.seed);
    let mut history = History::default();
    for iter in 0..cfg.epochs {
        let batches = PretextBatches::sample(cfg, graph, &mut streams.pretext);
        let tape = Tape::new();
        let enc = params.bind(&tape);
        let reps = enc.encode_sequence(&adj)?;
        let loss = batches.loss(&reps, cfg.tau)?;
        let l_v = loss.item();
        check_finite(iter, &[("L_v", l_v)])?;
        let grads = tape.backward(loss)?;
        let g: Vec<Option<&Tensor>> = enc.vars().iter().map(|x| grads.get(*x)).collect();
        let mut p: Vec<&mut Tensor> = params.tensors_mut().iter_mut().collect();
        adam.step(&mut p, &g);
        history.rows.push(HistoryRow {
            iter,
            l_v,
            l_i: 0.0,
            v: 0.0,
            loss_d: 0.0,
            alpha: 0.0,
            total: l_v,
        });
    }
    Ok((params, history))
}

/// `S` from the whole sequence through `G_i`, `D^t` from `G_v`.
pub fn extract_representations(model: &DytedModel, graph: &DynamicGraph) -> Result<RepresentationSet> {
    Ok(RepresentationSet {
        s: Some(time_invariant_final(&model.invariant, graph)?),
        d: encode_sequence(&model.varying, graph)?,
    })
}

/// Per-snapshot full-width outputs of a baseline encoder.
pub fn baseline_representations(params: &EncoderParams, graph: &DynamicGraph) -> Result<RepresentationSet> {
    Ok(RepresentationSet {
        s: None,
        d: encode_sequence(params, graph)?,
    })
}
