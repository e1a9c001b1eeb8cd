//! Model variant configuration and parameter initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::nn::{lstm_init, mlp_init, multihead_init, Activation, AttentionKind, LstmConfig, MlpConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    Np,
    Anp,
    AnpRnn,
}

impl VariantKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VariantKind::Np => "np",
            VariantKind::Anp => "anp",
            VariantKind::AnpRnn => "anp-rnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "np" => Ok(VariantKind::Np),
            "anp" => Ok(VariantKind::Anp),
            "anp-rnn" | "anp-lstm" => Ok(VariantKind::AnpRnn),
            other => Err(Error::config(format!("unknown variant kind {other:?}"))),
        }
    }

    pub fn uses_sequences(&self) -> bool {
        matches!(self, VariantKind::AnpRnn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: VariantKind,
    pub attention: AttentionKind,
    pub self_attention: bool,
    pub d_x: usize,
    pub d_y: usize,
    /// Deterministic representation width; also the model dim for
    /// projected attention.
    pub d_r: usize,
    pub d_z: usize,
    /// LSTM hidden width (ANP-RNN only).
    pub d_h: usize,
    /// Window length L (ANP-RNN only).
    pub window_len: usize,
    pub enc_hidden: Vec<usize>,
    pub latent_hidden: Vec<usize>,
    pub dec_hidden: Vec<usize>,
    pub sigma_floor: f64,
}

impl ModelConfig {
    pub fn defaults(kind: VariantKind, attention: AttentionKind) -> Self {
        ModelConfig {
            kind,
            attention,
            self_attention: false,
            d_x: 1,
            d_y: 1,
            d_r: 64,
            d_z: 64,
            d_h: 64,
            window_len: 5,
            enc_hidden: vec![64, 64],
            latent_hidden: vec![64, 64],
            dec_hidden: vec![64, 64],
            sigma_floor: 0.01,
        }
    }

    /// Width of embedded inputs fed to the encoders and decoder: raw x
    /// for NP/ANP, the LSTM hidden state for ANP-RNN.
    pub fn d_in(&self) -> usize {
        if self.kind.uses_sequences() {
            self.d_h
        } else {
            self.d_x
        }
    }

    pub fn uses_qk_projection(&self) -> bool {
        self.kind != VariantKind::Np
            && matches!(self.attention, AttentionKind::DotProduct | AttentionKind::MultiHead { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_y == 0 || self.d_r == 0 || self.d_z == 0 {
            return Err(Error::config("model dims must be >= 1"));
        }
        if self.kind == VariantKind::Np && self.attention != AttentionKind::Uniform {
            return Err(Error::config("NP uses uniform aggregation only"));
        }
        if self.kind.uses_sequences() {
            if self.d_h == 0 {
                return Err(Error::config("anp-rnn needs d_h >= 1"));
            }
            if self.window_len == 0 {
                return Err(Error::config("anp-rnn needs window length >= 1"));
            }
        }
        if !(0.0 < self.sigma_floor && self.sigma_floor < 1.0) {
            return Err(Error::config("sigma_floor must lie in (0, 1)"));
        }
        self.attention.validate(self.d_r)?;
        Ok(())
    }

    pub fn det_encoder_cfg(&self) -> Result<MlpConfig> {
        let mut widths = vec![self.d_in() + self.d_y];
        widths.extend(&self.enc_hidden);
        widths.push(self.d_r);
        MlpConfig::new(widths, Activation::Tanh, Activation::Identity)
    }

    pub fn latent_encoder_cfg(&self) -> Result<MlpConfig> {
        let mut widths = vec![self.d_in() + self.d_y];
        widths.extend(&self.latent_hidden);
        widths.push(self.d_r);
        MlpConfig::new(widths, Activation::Tanh, Activation::Identity)
    }

    pub fn latent_head_cfg(&self) -> Result<MlpConfig> {
        MlpConfig::new(vec![self.d_r, self.d_r, 2 * self.d_z], Activation::Tanh, Activation::Identity)
    }

    pub fn decoder_cfg(&self) -> Result<MlpConfig> {
        let mut widths = vec![self.d_in() + self.d_r + self.d_z];
        widths.extend(&self.dec_hidden);
        widths.push(2 * self.d_y);
        MlpConfig::new(widths, Activation::Tanh, Activation::Identity)
    }

    pub fn qk_proj_cfg(&self) -> Result<MlpConfig> {
        MlpConfig::new(vec![self.d_in(), self.d_r], Activation::Identity, Activation::Identity)
    }

    pub fn lstm_cfg(&self) -> LstmConfig {
        LstmConfig { d_x: self.d_x, d_h: self.d_h }
    }

    /// Fresh parameter store for this architecture, seeded deterministically.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        if self.kind.uses_sequences() {
            lstm_init(&self.lstm_cfg(), &mut store, "lstm", &mut rng)?;
        }
        mlp_init(&self.det_encoder_cfg()?, &mut store, "det_enc", &mut rng)?;
        mlp_init(&self.latent_encoder_cfg()?, &mut store, "lat_enc", &mut rng)?;
        mlp_init(&self.latent_head_cfg()?, &mut store, "lat_head", &mut rng)?;
        mlp_init(&self.decoder_cfg()?, &mut store, "dec", &mut rng)?;
        if self.uses_qk_projection() {
            mlp_init(&self.qk_proj_cfg()?, &mut store, "qk_proj", &mut rng)?;
        }
        if let AttentionKind::MultiHead { .. } = self.attention {
            if self.kind != VariantKind::Np {
                multihead_init(&mut store, "cross_attn", self.d_r, &mut rng)?;
            }
        }
        if self.self_attention {
            if let AttentionKind::MultiHead { .. } = self.attention {
                multihead_init(&mut store, "self_attn", self.d_r, &mut rng)?;
            }
        }
        Ok(store)
    }
}
