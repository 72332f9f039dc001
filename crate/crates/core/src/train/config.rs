use crate::model::{Ablation, DecVariant, ModelConfig};

use super::TrainError;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub layers: usize,
    pub alpha: f64,
    pub beta: f64,
    /// 0 trains full-batch.
    pub batch_size: usize,
    pub fanout: Vec<usize>,
    pub seed: u64,
    pub dec_variant: DecVariant,
    /// Epochs between pseudo-label rebuilds.
    pub refresh_period: usize,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Preset::Dblp.config()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Dblp,
    Imdb,
    Acm,
    Mag,
    Rcdd,
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dblp" => Ok(Preset::Dblp),
            "imdb" => Ok(Preset::Imdb),
            "acm" => Ok(Preset::Acm),
            "mag" => Ok(Preset::Mag),
            "rcdd" => Ok(Preset::Rcdd),
            other => Err(format!("unknown preset {other:?}")),
        }
    }
}

impl Preset {
    pub fn config(self) -> TrainConfig {
        // (lr, hidden, dropout, epochs, batch, alpha, beta)
        let (lr, hidden, dropout, epochs, batch_size, alpha, beta) = match self {
            Preset::Dblp => (1e-3, 128, 0.7, 50, 0, 0.2, 0.7),
            Preset::Imdb => (5e-3, 128, 0.9, 50, 0, 0.2, 0.6),
            Preset::Acm => (5e-3, 128, 0.9, 100, 0, 0.3, 0.7),
            Preset::Mag => (5e-3, 256, 0.3, 50, 1024, 0.4, 1.0),
            Preset::Rcdd => (5e-3, 256, 0.7, 100, 1024, 0.2, 0.7),
        };
        TrainConfig {
            lr,
            hidden,
            dropout,
            epochs,
            layers: 2,
            alpha,
            beta,
            batch_size,
            fanout: vec![15, 15],
            seed: 0,
            dec_variant: DecVariant::Cosine,
            refresh_period: 1,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.layers < 1 {
            return bad("layers must be at least 1");
        }
        if self.hidden < 1 {
            return bad("hidden must be at least 1");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.fanout.is_empty() || self.fanout.contains(&0) {
            return bad("fanout entries must be at least 1");
        }
        if self.refresh_period < 1 {
            return bad("refresh period must be at least 1");
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            layers: self.layers,
            dropout: self.dropout,
            ablation: self.ablation,
        }
    }

    /// Weight of the decoupling term after ablations.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablation.no_dec || self.ablation.no_shc {
            0.0
        } else {
            self.alpha
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in ["dblp", "imdb", "acm", "mag", "rcdd"] {
            let c = p.parse::<Preset>().unwrap().config();
            c.validate().unwrap();
            assert_eq!(c.layers, 2);
            assert_eq!(c.fanout, vec![15, 15]);
        }
        let mag = Preset::Mag.config();
        assert_eq!((mag.hidden, mag.batch_size, mag.beta), (256, 1024, 1.0));
        assert_eq!(TrainConfig::default().lr, 1e-3);
    }

    #[test]
    fn rejects_bad_values() {
        let base = TrainConfig::default();
        for c in [
            TrainConfig { layers: 0, ..base.clone() },
            TrainConfig { alpha: -0.1, ..base.clone() },
            TrainConfig { beta: 1.5, ..base.clone() },
            TrainConfig { fanout: vec![15, 0], ..base.clone() },
            TrainConfig { refresh_period: 0, ..base.clone() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
