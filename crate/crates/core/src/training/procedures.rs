use crate::autodiff::{Graph, Tensor};
use crate::data::{batch_iter, Batch, LabeledSet, Standardizer};
use crate::geometry::{center_stats, kappa, PrototypeSet};
use crate::losses::{loss_classifier_adv, loss_disc, loss_g2, loss_gen_ampf, loss_j, loss_mpf, Objective};
use crate::nets::{collect_grads, Adam, Mlp, Optimizer, SgdMomentum};
use crate::sampling::{sample_error_vector, sample_prior, ErrorVectorSpec, SeededRng};

use super::{Phase, Record, Strategy, TrainConfig, TrainError, TrainedModel, TrajectoryLog};

// Stream tags: each consumer of randomness draws from its own stream so that
// enabling or disabling one segment leaves every other draw unchanged.
const TAG_CLASSIFIER: u64 = 1;
const TAG_PROTOS: u64 = 2;
const TAG_GEN: u64 = 3;
const TAG_DISC: u64 = 4;
const TAG_GEN2: u64 = 5;
const TAG_SHUFFLE: u64 = 6;
const TAG_PRIOR: u64 = 7;
const TAG_DELTA: u64 = 8;

const PASS_MPF: u64 = 0;
const PASS_ADV: u64 = 1;
const PASS_MPF2: u64 = 2;
const PASS_G2: u64 = 3;
const PASS_FINAL: u64 = 4;

struct Gan {
    gen: Mlp,
    disc: Mlp,
    gen_opt: Adam,
    disc_opt: Adam,
}

/// Generated samples for one classifier step and the constants they were scored with.
struct Far {
    samples: Tensor,
    center: Vec<f64>,
    kappa: f64,
    d0: f64,
    gen_loss: f64,
    disc_loss: f64,
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    data: LabeledSet,
    input: Option<Standardizer>,
    classifier: Mlp,
    protos: PrototypeSet,
    opt: SgdMomentum,
    gan: Option<Gan>,
    g2: Option<(Mlp, Adam)>,
    log: TrajectoryLog,
    step: usize,
    r0: f64,
    last_kappa: Option<f64>,
}

fn abort(epoch: usize, phase: Phase, batch: usize) -> impl Fn(TrainError) -> TrainError {
    move |e| match e {
        e @ TrainError::Aborted { .. } => e,
        other => TrainError::Aborted {
            epoch,
            phase,
            batch,
            reason: other.to_string(),
        },
    }
}

impl<'a> Run<'a> {
    fn new(cfg: &'a TrainConfig, data: &LabeledSet, strategy: Strategy) -> Result<Self, TrainError> {
        cfg.validate()?;
        if strategy.uses_generator() {
            cfg.hyper.validate()?;
        }
        if data.classes() < 2 {
            return Err(TrainError::Config(format!(
                "need at least 2 known classes, got {}",
                data.classes()
            )));
        }
        data.require_training_ready()?;
        let input = if cfg.standardize {
            Some(Standardizer::fit(data)?)
        } else {
            None
        };
        let data = match &input {
            Some(s) => s.apply(data)?,
            None => data.clone(),
        };
        let seed = cfg.seed;
        let rng = |tag| SeededRng::derive(seed, &[tag]);
        let (d, h, m) = (data.dim(), cfg.hidden, cfg.feature_dim);
        let adam = || Adam::new(cfg.adam.lr, cfg.adam.beta1, cfg.adam.beta2);
        let gan = if strategy.uses_generator() {
            Some(Gan {
                gen: Mlp::generator(cfg.latent_dim, h, d, &mut rng(TAG_GEN))?,
                disc: Mlp::discriminator(d, h, &mut rng(TAG_DISC))?,
                gen_opt: adam(),
                disc_opt: adam(),
            })
        } else {
            None
        };
        let g2 = if strategy == Strategy::AmpfPlusPlus {
            Some((Mlp::generator(cfg.latent_dim, h, d, &mut rng(TAG_GEN2))?, adam()))
        } else {
            None
        };
        Ok(Run {
            cfg,
            classifier: Mlp::classifier(d, h, m, &mut rng(TAG_CLASSIFIER))?,
            protos: PrototypeSet::random(data.classes(), m, cfg.proto_std, &mut rng(TAG_PROTOS))?,
            opt: SgdMomentum::new(cfg.schedule.rate(0), cfg.momentum),
            gan,
            g2,
            log: TrajectoryLog::new(),
            step: 0,
            r0: 0.0,
            last_kappa: None,
            data,
            input,
        })
    }

    fn batches(&self, epoch: usize, pass: u64) -> Result<Vec<Batch>, TrainError> {
        let mut rng = SeededRng::derive(self.cfg.seed, &[TAG_SHUFFLE, epoch as u64, pass]);
        let mut b = batch_iter(&self.data, &mut rng, self.cfg.batch_size)?;
        if let Some(cap) = self.cfg.batches_per_epoch {
            b.truncate(cap);
        }
        Ok(b)
    }

    /// `κ` for this step; falls back to the last value when `R0 ≤ 0`.
    fn kappa(&mut self, epoch: usize, d0: f64) -> Result<f64, TrainError> {
        let k = if self.r0 > 0.0 {
            kappa(self.cfg.hyper.gamma, d0, self.r0, epoch)?
        } else {
            self.last_kappa
                .unwrap_or_else(|| self.cfg.hyper.gamma * ((epoch + 3) as f64).ln())
        };
        self.last_kappa = Some(k);
        Ok(k)
    }

    /// One SGD step on classifier and prototypes, then a log record.
    fn classifier_step(
        &mut self,
        epoch: usize,
        phase: Phase,
        batch_idx: usize,
        batch: &Batch,
        far: Option<Far>,
    ) -> Result<(), TrainError> {
        let lr = self.cfg.schedule.rate(epoch);
        self.opt.set_learning_rate(lr);
        let d0_now = center_stats(&self.protos).spread;

        let mut g = Graph::new();
        let net = self.classifier.bind(&mut g, true);
        let bp = self.protos.bind(&mut g, true);
        let x = g.constant(batch.features.clone());
        let fx = net.forward(&mut g, x)?;
        let h = &self.cfg.hyper;
        let obj: Objective = match &far {
            None => loss_mpf(&mut g, fx, &batch.labels, &bp, h)?,
            Some(f) => {
                let z = g.constant(f.samples.clone());
                let fz = net.forward(&mut g, z)?;
                loss_classifier_adv(&mut g, fx, &batch.labels, &bp, h, fz, &f.center, f.kappa)?
            }
        };
        g.backward(obj.total).map_err(crate::losses::LossError::from)?;
        let mut vars = net.params();
        vars.extend(bp.params());
        let grads = collect_grads(&g, &vars)?;
        let mut params = self.classifier.params_mut();
        params.extend(self.protos.params_mut());
        self.opt.step(&mut params, &grads)?;

        let b = obj.breakdown;
        let (kappa, d0, gen_loss, disc_loss) = match &far {
            Some(f) => (f.kappa, f.d0, f.gen_loss, f.disc_loss),
            None => (0.0, d0_now, 0.0, 0.0),
        };
        let rec = Record {
            step: self.step,
            epoch,
            batch: batch_idx,
            phase,
            r: self.protos.radius(),
            r0: self.r0,
            kappa,
            d0,
            lc: b.lc,
            lo: b.lo,
            j: b.j,
            lr,
            lo_active: b.lo_active,
            j_active: b.j_active,
            gen_loss,
            disc_loss,
        };
        self.step += 1;
        self.log.record(rec)
    }

    fn mpf_pass(&mut self, epoch: usize, pass: u64) -> Result<(), TrainError> {
        for (i, batch) in self.batches(epoch, pass)?.iter().enumerate() {
            self.classifier_step(epoch, Phase::Mpf, i, batch, None)
                .map_err(abort(epoch, Phase::Mpf, i))?;
        }
        Ok(())
    }

    fn adv_loop(&mut self, epoch: usize) -> Result<(), TrainError> {
        let mut prior = SeededRng::derive(self.cfg.seed, &[TAG_PRIOR, epoch as u64, PASS_ADV]);
        for (i, batch) in self.batches(epoch, PASS_ADV)?.iter().enumerate() {
            self.adv_step(epoch, i, batch, &mut prior)
                .map_err(abort(epoch, Phase::Adv, i))?;
        }
        Ok(())
    }

    fn adv_step(&mut self, epoch: usize, i: usize, batch: &Batch, prior: &mut SeededRng) -> Result<(), TrainError> {
        let stats = center_stats(&self.protos);
        let kappa = self.kappa(epoch, stats.spread)?;
        let z = sample_prior(prior, batch.labels.len(), self.cfg.latent_dim);
        let alpha = self.cfg.hyper.alpha;
        let gan = self.gan.as_mut().expect("adversarial strategies build a generator");

        // Discriminator: real batch against the current generator's samples.
        let fake = gan.gen.forward_values(&z)?;
        let mut g = Graph::new();
        let d = gan.disc.bind(&mut g, true);
        let (xv, fv) = (g.constant(batch.features.clone()), g.constant(fake));
        let real_s = d.forward(&mut g, xv)?;
        let fake_s = d.forward(&mut g, fv)?;
        let dl = loss_disc(&mut g, real_s, fake_s)?;
        let disc_loss = g.scalar(dl);
        g.backward(dl).map_err(crate::losses::LossError::from)?;
        let grads = collect_grads(&g, &d.params())?;
        gan.disc_opt.step(&mut gan.disc.params_mut(), &grads)?;

        // Generator: fool the updated discriminator while staying past κR.
        let mut g = Graph::new();
        let gen = gan.gen.bind(&mut g, true);
        let disc = gan.disc.bind(&mut g, false);
        let cls = self.classifier.bind(&mut g, false);
        let r = g.constant(self.protos.radius_tensor().clone());
        let zv = g.constant(z.clone());
        let gz = gen.forward(&mut g, zv)?;
        let scores = disc.forward(&mut g, gz)?;
        let feats = cls.forward(&mut g, gz)?;
        let j = loss_j(&mut g, feats, &stats.center, kappa, r)?;
        let gl = loss_gen_ampf(&mut g, scores, j.value, alpha)?;
        let gen_loss = g.scalar(gl);
        g.backward(gl).map_err(crate::losses::LossError::from)?;
        let grads = collect_grads(&g, &gen.params())?;
        gan.gen_opt.step(&mut gan.gen.params_mut(), &grads)?;

        let samples = gan.gen.forward_values(&z)?;
        let far = Far {
            samples,
            center: stats.center,
            kappa,
            d0: stats.spread,
            gen_loss,
            disc_loss,
        };
        self.classifier_step(epoch, Phase::Adv, i, batch, Some(far))
    }

    fn g2_loop(&mut self, epoch: usize) -> Result<(), TrainError> {
        let mut prior = SeededRng::derive(self.cfg.seed, &[TAG_PRIOR, epoch as u64, PASS_G2]);
        let mut delta = SeededRng::derive(self.cfg.seed, &[TAG_DELTA, epoch as u64]);
        for (i, batch) in self.batches(epoch, PASS_G2)?.iter().enumerate() {
            self.g2_step(epoch, i, batch, &mut prior, &mut delta)
                .map_err(abort(epoch, Phase::G2, i))?;
        }
        Ok(())
    }

    fn g2_step(
        &mut self,
        epoch: usize,
        i: usize,
        batch: &Batch,
        prior: &mut SeededRng,
        delta: &mut SeededRng,
    ) -> Result<(), TrainError> {
        let stats = center_stats(&self.protos);
        let kappa = self.kappa(epoch, stats.spread)?;
        let n = batch.labels.len();
        let z = sample_prior(prior, n, self.cfg.latent_dim);
        let spec = ErrorVectorSpec::from_stats(&stats, self.protos.num_classes())?;
        let mut target = sample_error_vector(delta, &spec, n);
        let m = stats.center.len();
        for (k, v) in target.data_mut().iter_mut().enumerate() {
            *v += stats.center[k % m];
        }

        let (gen2, opt) = self.g2.as_mut().expect("AMPF++ builds a boundary generator");
        let mut g = Graph::new();
        let gen = gen2.bind(&mut g, true);
        let cls = self.classifier.bind(&mut g, false);
        let zv = g.constant(z.clone());
        let tv = g.constant(target);
        let gz = gen.forward(&mut g, zv)?;
        let feats = cls.forward(&mut g, gz)?;
        let l = loss_g2(&mut g, feats, tv)?;
        let gen_loss = g.scalar(l);
        g.backward(l).map_err(crate::losses::LossError::from)?;
        let grads = collect_grads(&g, &gen.params())?;
        opt.step(&mut gen2.params_mut(), &grads)?;

        let samples = gen2.forward_values(&z)?;
        let far = Far {
            samples,
            center: stats.center,
            kappa,
            d0: stats.spread,
            gen_loss,
            disc_loss: 0.0,
        };
        self.classifier_step(epoch, Phase::G2, i, batch, Some(far))
    }

    fn run(mut self, strategy: Strategy) -> Result<(TrainedModel, TrajectoryLog), TrainError> {
        let last = self.cfg.max_epoch - 1;
        for t in 0..self.cfg.max_epoch {
            self.mpf_pass(t, PASS_MPF)?;
            if strategy == Strategy::Mpf {
                continue;
            }
            self.r0 = self.protos.radius();
            self.adv_loop(t)?;
            if strategy == Strategy::AmpfPlusPlus && self.cfg.g2_phase {
                self.mpf_pass(t, PASS_MPF2)?;
                self.r0 = self.protos.radius();
                self.g2_loop(t)?;
            }
            if t == last {
                self.mpf_pass(t, PASS_FINAL)?;
            }
        }
        let (generator, discriminator) = match self.gan {
            Some(g) => (Some(g.gen), Some(g.disc)),
            None => (None, None),
        };
        let model = TrainedModel {
            classifier: self.classifier,
            protos: self.protos,
            generator,
            discriminator,
            generator2: self.g2.map(|(g, _)| g),
            config: TrainConfig {
                strategy,
                ..self.cfg.clone()
            },
            input: self.input,
        };
        Ok((model, self.log))
    }
}

/// Trains with `cfg.strategy`.
pub fn train(cfg: &TrainConfig, data: &LabeledSet) -> Result<(TrainedModel, TrajectoryLog), TrainError> {
    Run::new(cfg, data, cfg.strategy)?.run(cfg.strategy)
}

pub fn train_mpf(cfg: &TrainConfig, data: &LabeledSet) -> Result<(TrainedModel, TrajectoryLog), TrainError> {
    Run::new(cfg, data, Strategy::Mpf)?.run(Strategy::Mpf)
}

pub fn train_ampf(cfg: &TrainConfig, data: &LabeledSet) -> Result<(TrainedModel, TrajectoryLog), TrainError> {
    Run::new(cfg, data, Strategy::Ampf)?.run(Strategy::Ampf)
}

pub fn train_ampfpp(cfg: &TrainConfig, data: &LabeledSet) -> Result<(TrainedModel, TrajectoryLog), TrainError> {
    Run::new(cfg, data, Strategy::AmpfPlusPlus)?.run(Strategy::AmpfPlusPlus)
}
