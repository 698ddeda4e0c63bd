use std::path::Path;

use crate::autodiff::Tensor;
use crate::data::{LabeledSet, Standardizer};
use crate::geometry::PrototypeSet;
use crate::metrics::{score_samples, ScoredSample};
use crate::nets::{Activation, Checkpoint, Layer, Mlp, NetError};

use super::{Strategy, TrainConfig, TrainError};

/// Everything a finished run produces besides its trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub classifier: Mlp,
    pub protos: PrototypeSet,
    pub generator: Option<Mlp>,
    pub discriminator: Option<Mlp>,
    pub generator2: Option<Mlp>,
    pub config: TrainConfig,
    /// Input transform applied before the classifier, if any.
    pub input: Option<Standardizer>,
}

fn put_mlp(ckpt: &mut Checkpoint, prefix: &str, net: &Mlp) {
    ckpt.set_meta(&format!("{prefix}.layers"), net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        ckpt.set_meta(&format!("{prefix}.{i}.activation"), l.activation);
        ckpt.insert(&format!("{prefix}.{i}.weight"), l.weight.clone());
        ckpt.insert(&format!("{prefix}.{i}.bias"), l.bias.clone());
    }
}

fn get_mlp(ckpt: &Checkpoint, prefix: &str) -> Result<Option<Mlp>, NetError> {
    let Ok(count) = ckpt.meta(&format!("{prefix}.layers")) else {
        return Ok(None);
    };
    let count: usize = count
        .parse()
        .map_err(|_| NetError::Checkpoint(format!("bad layer count for `{prefix}`")))?;
    let layers = (0..count)
        .map(|i| {
            Ok(Layer {
                weight: ckpt.tensor(&format!("{prefix}.{i}.weight"))?.clone(),
                bias: ckpt.tensor(&format!("{prefix}.{i}.bias"))?.clone(),
                activation: ckpt.meta(&format!("{prefix}.{i}.activation"))?.parse::<Activation>()?,
            })
        })
        .collect::<Result<Vec<_>, NetError>>()?;
    Mlp::new(layers).map(Some)
}

fn parse_meta<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<T, NetError> {
    ckpt.meta(key)?
        .parse()
        .map_err(|_| NetError::Checkpoint(format!("bad value for `{key}`")))
}

impl TrainedModel {
    /// Classifier features of raw inputs (standardized first when configured).
    pub fn features(&self, x: &Tensor) -> Result<Tensor, TrainError> {
        let x = match &self.input {
            Some(s) => s.apply_features(x)?,
            None => x.clone(),
        };
        Ok(self.classifier.forward_values(&x)?)
    }

    pub fn score(&self, set: &LabeledSet) -> Result<Vec<ScoredSample>, TrainError> {
        let f = self.features(set.features())?;
        Ok(score_samples(&f, set.labels(), &self.protos)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        let cfg = &self.config;
        c.set_meta("strategy", cfg.strategy);
        c.set_meta("seed", cfg.seed);
        c.set_meta("max_epoch", cfg.max_epoch);
        c.set_meta("batch_size", cfg.batch_size);
        c.set_meta(
            "batches_per_epoch",
            cfg.batches_per_epoch.map_or("all".to_string(), |b| b.to_string()),
        );
        c.set_meta("lambda", format!("{:e}", cfg.hyper.lambda));
        c.set_meta("alpha", format!("{:e}", cfg.hyper.alpha));
        c.set_meta("beta", format!("{:e}", cfg.hyper.beta));
        c.set_meta("gamma", format!("{:e}", cfg.hyper.gamma));
        c.set_meta("lr.initial", format!("{:e}", cfg.schedule.initial));
        c.set_meta("lr.factor", format!("{:e}", cfg.schedule.factor));
        c.set_meta("lr.period", cfg.schedule.period);
        c.set_meta("momentum", format!("{:e}", cfg.momentum));
        c.set_meta("adam.lr", format!("{:e}", cfg.adam.lr));
        c.set_meta("adam.beta1", format!("{:e}", cfg.adam.beta1));
        c.set_meta("adam.beta2", format!("{:e}", cfg.adam.beta2));
        c.set_meta("feature_dim", cfg.feature_dim);
        c.set_meta("hidden", cfg.hidden);
        c.set_meta("latent_dim", cfg.latent_dim);
        c.set_meta("proto_std", format!("{:e}", cfg.proto_std));
        c.set_meta("g2_phase", cfg.g2_phase);
        c.set_meta("standardize", cfg.standardize);

        put_mlp(&mut c, "classifier", &self.classifier);
        for (name, net) in [
            ("generator", &self.generator),
            ("discriminator", &self.discriminator),
            ("generator2", &self.generator2),
        ] {
            if let Some(n) = net {
                put_mlp(&mut c, name, n);
            }
        }
        c.insert("protos.centers", self.protos.centers().clone());
        c.insert("protos.radius", self.protos.radius_tensor().clone());
        if let Some(s) = &self.input {
            c.insert("input.mean", Tensor::vector(s.mean.clone()));
            c.insert("input.std", Tensor::vector(s.std.clone()));
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, TrainError> {
        let classifier = get_mlp(c, "classifier")?.ok_or_else(|| NetError::Checkpoint("no classifier".into()))?;
        let batches_per_epoch = match c.meta("batches_per_epoch")? {
            "all" => None,
            _ => Some(parse_meta(c, "batches_per_epoch")?),
        };
        let strategy: Strategy = c
            .meta("strategy")?
            .parse()
            .map_err(|e: String| NetError::Checkpoint(e))?;
        let config = TrainConfig {
            strategy,
            max_epoch: parse_meta(c, "max_epoch")?,
            batch_size: parse_meta(c, "batch_size")?,
            batches_per_epoch,
            hyper: crate::losses::HyperParams {
                lambda: parse_meta(c, "lambda")?,
                alpha: parse_meta(c, "alpha")?,
                beta: parse_meta(c, "beta")?,
                gamma: parse_meta(c, "gamma")?,
            },
            schedule: crate::nets::LrSchedule {
                initial: parse_meta(c, "lr.initial")?,
                factor: parse_meta(c, "lr.factor")?,
                period: parse_meta(c, "lr.period")?,
            },
            momentum: parse_meta(c, "momentum")?,
            adam: super::AdamSettings {
                lr: parse_meta(c, "adam.lr")?,
                beta1: parse_meta(c, "adam.beta1")?,
                beta2: parse_meta(c, "adam.beta2")?,
            },
            feature_dim: parse_meta(c, "feature_dim")?,
            hidden: parse_meta(c, "hidden")?,
            latent_dim: parse_meta(c, "latent_dim")?,
            proto_std: parse_meta(c, "proto_std")?,
            seed: parse_meta(c, "seed")?,
            g2_phase: parse_meta(c, "g2_phase")?,
            standardize: parse_meta(c, "standardize")?,
        };
        let protos = PrototypeSet::with_radius(c.tensor("protos.centers")?.clone(), c.tensor("protos.radius")?.item())?;
        if protos.dim() != classifier.output_dim() {
            return Err(NetError::Checkpoint(format!(
                "classifier emits {} features but prototypes have {}",
                classifier.output_dim(),
                protos.dim()
            ))
            .into());
        }
        let input = match (c.tensors.get("input.mean"), c.tensors.get("input.std")) {
            (Some(m), Some(s)) => Some(Standardizer {
                mean: m.data().to_vec(),
                std: s.data().to_vec(),
            }),
            _ => None,
        };
        Ok(TrainedModel {
            classifier,
            protos,
            generator: get_mlp(c, "generator")?,
            discriminator: get_mlp(c, "discriminator")?,
            generator2: get_mlp(c, "generator2")?,
            config,
            input,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let io = |e: std::io::Error| NetError::Checkpoint(format!("{}: {e}", path.display()));
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.to_checkpoint().write_to(&mut w).map_err(io)?;
        std::io::Write::flush(&mut w).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let file = std::fs::File::open(path).map_err(|e| NetError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt = Checkpoint::read_from(std::io::BufReader::new(file))?;
        Self::from_checkpoint(&ckpt)
    }
}
