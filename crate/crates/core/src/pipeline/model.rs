use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::diffusion::{build_schedule, DenoiserNet, DiffusionSchedule, TrainedDenoiser};
use crate::entropy::{DensityEvaluator, FactorizedDensity};
use crate::error::{HdaError, Result};
use crate::hda::{AnalogCodec, HyperCodec};
use crate::nn::ParamStore;
use crate::rng::{derive_seed, seeded};
use crate::semantic::SemanticCodec;

/// Parameter groups every complete model carries.
pub const PARAM_GROUPS: [&str; 9] = [
    "sem_enc",
    "sem_dec",
    "hyper_enc",
    "hyper_dec",
    "analog_enc",
    "analog_dec",
    "density",
    "denoiser",
    "onestep",
];

/// Which training phases have completed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingStatus {
    pub stage1: bool,
    pub stage2: bool,
    pub stage3: bool,
    pub denoiser: bool,
    pub onestep: bool,
}

impl TrainingStatus {
    pub fn link_trained(&self) -> bool {
        self.stage1 && self.stage2
    }
}

/// Configuration, parameters and training status of one HDA transceiver.
#[derive(Clone, Debug, PartialEq)]
pub struct HdaModel {
    pub config: Config,
    pub params: ParamStore,
    pub status: TrainingStatus,
}

impl HdaModel {
    /// Fresh model with every group initialized from `config.train.seed`.
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let seed = config.train.seed;
        let mut model = HdaModel {
            config,
            params: ParamStore::new(),
            status: TrainingStatus::default(),
        };
        // one stream per group so resizing one network leaves the others' initialization alone
        model
            .semantic()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 1])));
        model
            .hyper()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 2])));
        model
            .analog()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 3])));
        model
            .density()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 4])));
        model
            .denoiser()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 5])));
        model
            .one_step()
            .init(&mut params, &mut seeded(derive_seed(seed, &[0, 6])));
        model.params = params;
        Ok(model)
    }

    pub fn semantic(&self) -> SemanticCodec {
        let m = &self.config.model;
        SemanticCodec::new(m.semantic_hidden, m.latent_channels)
    }

    pub fn hyper(&self) -> HyperCodec {
        let m = &self.config.model;
        HyperCodec::new(m.latent_channels, m.hyper_hidden, m.digital_channels)
    }

    pub fn analog(&self) -> AnalogCodec {
        let m = &self.config.model;
        AnalogCodec::new(m.feature_len(), m.analog_hidden, m.analog_symbols)
    }

    pub fn density(&self) -> FactorizedDensity {
        FactorizedDensity::new(self.config.model.digital_channels)
    }

    pub fn denoiser(&self) -> DenoiserNet {
        let m = &self.config.model;
        DenoiserNet::diffusion(2 * m.analog_symbols, m.denoiser_width, m.diffusion_steps)
    }

    pub fn one_step(&self) -> DenoiserNet {
        let m = &self.config.model;
        DenoiserNet::one_step(2 * m.analog_symbols, m.denoiser_width)
    }

    pub fn schedule(&self) -> Result<DiffusionSchedule> {
        build_schedule(self.config.model.diffusion_steps)
    }

    pub fn density_evaluator(&self) -> Result<DensityEvaluator> {
        self.density().evaluator(&self.params)
    }

    pub fn trained_denoiser<'a>(&'a self, net: &'a DenoiserNet) -> TrainedDenoiser<'a> {
        let trained = if net.conditioned() {
            self.status.denoiser
        } else {
            self.status.onestep
        };
        TrainedDenoiser {
            net,
            store: &self.params,
            trained,
        }
    }

    /// Errors unless the transceiver stages have been trained.
    pub fn require_trained(&self) -> Result<()> {
        if self.status.link_trained() {
            Ok(())
        } else {
            Err(HdaError::Refused(
                "checkpoint has not completed transceiver training".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_group_is_initialized() {
        let mut c = Config::default();
        c.model.image_size = 32;
        let m = HdaModel::new(c).unwrap();
        for g in PARAM_GROUPS {
            assert!(m.params.count_with_prefix(&format!("{g}.")) > 0, "{g}");
        }
        assert!(m.require_trained().is_err());
    }

    #[test]
    fn initialization_is_seeded() {
        let mut c = Config::default();
        c.model.image_size = 16;
        let a = HdaModel::new(c.clone()).unwrap();
        let b = HdaModel::new(c.clone()).unwrap();
        assert_eq!(a, b);
        c.train.seed = 2;
        assert_ne!(a.params, HdaModel::new(c).unwrap().params);
    }
}
