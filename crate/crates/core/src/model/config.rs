use serde::{Deserialize, Serialize};

use super::params::ParamSpec;
use super::ModelError;

/// Per-patch features: mean R, G, B, luma std, mean gradient magnitude.
pub const PATCH_FEATURES: usize = 5;

/// Groups standing in for pretrained encoders; frozen during linear probing.
pub const BACKBONE_GROUPS: [&str; 4] = ["visual_encoder", "source_encoder", "text_encoder", "quality_encoder"];

/// How source and edited features enter the source branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Source image ignored; the branch sees only the edited embedding.
    Identity,
    /// Multi-head cross-attention from edited tokens to source tokens.
    Attention,
    /// `[f ; f*]` through the feed-forward network.
    #[default]
    Concat,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Identity => "identity",
            FusionMode::Attention => "attention",
            FusionMode::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Images are split into `grid x grid` patches.
    pub grid: usize,
    /// Width of visual and text embeddings, and of the alignment feature.
    pub embed_dim: usize,
    /// Query/key width of the text-to-visual cross-attention.
    pub attn_dim: usize,
    pub vocab_size: usize,
    /// Longer prompts lose their tail.
    pub max_tokens: usize,
    pub source_hidden: usize,
    /// Width of the source-branch output `o_s`.
    pub source_out: usize,
    pub fusion_heads: usize,
    pub quality_embed: usize,
    pub quality_hidden: usize,
    pub quality_out: usize,
    pub head_hidden: usize,
    pub use_text_branch: bool,
    pub use_source_branch: bool,
    pub fusion: FusionMode,
    /// Source and edited images share the visual encoder.
    pub shared_source_encoder: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            grid: 4,
            embed_dim: 32,
            attn_dim: 16,
            vocab_size: 512,
            max_tokens: 32,
            source_hidden: 64,
            source_out: 128,
            fusion_heads: 4,
            quality_embed: 32,
            quality_hidden: 64,
            quality_out: 16,
            head_hidden: 32,
            use_text_branch: true,
            use_source_branch: true,
            fusion: FusionMode::Concat,
            shared_source_encoder: true,
        }
    }
}

impl ModelConfig {
    /// A few hundred parameters; for tests and smoke runs.
    pub fn stub() -> Self {
        ModelConfig {
            grid: 2,
            embed_dim: 4,
            attn_dim: 4,
            vocab_size: 16,
            max_tokens: 8,
            source_hidden: 8,
            source_out: 4,
            fusion_heads: 2,
            quality_embed: 4,
            quality_hidden: 8,
            quality_out: 4,
            head_hidden: 8,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let widths = [
            ("grid", self.grid),
            ("embed_dim", self.embed_dim),
            ("attn_dim", self.attn_dim),
            ("max_tokens", self.max_tokens),
            ("source_hidden", self.source_hidden),
            ("source_out", self.source_out),
            ("fusion_heads", self.fusion_heads),
            ("quality_embed", self.quality_embed),
            ("quality_hidden", self.quality_hidden),
            ("quality_out", self.quality_out),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in widths {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(ModelError::Config("vocab_size must be at least 2".into()));
        }
        if self.use_source_branch && self.fusion == FusionMode::Attention && self.embed_dim % self.fusion_heads != 0 {
            return Err(ModelError::Config(format!(
                "embed_dim {} is not divisible by fusion_heads {}",
                self.embed_dim, self.fusion_heads
            )));
        }
        Ok(())
    }

    /// Input width of the regression head: sum of enabled branch widths.
    pub fn head_input_width(&self) -> usize {
        let text = if self.use_text_branch { self.embed_dim } else { 0 };
        let source = if self.use_source_branch { self.source_out } else { 0 };
        text + source + self.quality_out
    }

    fn source_head_input(&self) -> usize {
        match self.fusion {
            FusionMode::Concat => 2 * self.embed_dim,
            FusionMode::Identity | FusionMode::Attention => self.embed_dim,
        }
    }

    /// Every parameter tensor the architecture needs, in store order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let d = self.embed_dim;
        let mut s = Vec::new();
        s.extend(ParamSpec::linear("visual_encoder", PATCH_FEATURES, d));
        if self.use_source_branch && !self.shared_source_encoder && self.fusion != FusionMode::Identity {
            s.extend(ParamSpec::linear("source_encoder", PATCH_FEATURES, d));
        }
        if self.use_text_branch {
            s.push(ParamSpec::uniform("text_encoder.embedding", self.vocab_size, d, 0.5));
            let k = self.attn_dim;
            let b = 1.0 / (d as f64).sqrt();
            s.push(ParamSpec::uniform("cross_attention.wq", d, k, b));
            s.push(ParamSpec::uniform("cross_attention.wk", d, k, b));
            s.push(ParamSpec::uniform("cross_attention.wv", d, d, b));
            s.push(ParamSpec::uniform("cross_attention.wo", d, d, b));
            s.extend(ParamSpec::linear("alignment", d + 1, d));
        }
        if self.use_source_branch {
            if self.fusion == FusionMode::Attention {
                let b = 1.0 / (d as f64).sqrt();
                for w in ["wq", "wk", "wv", "wo"] {
                    s.push(ParamSpec::uniform(&format!("fusion_attention.{w}"), d, d, b));
                }
            }
            s.extend(ParamSpec::linear("source_head.l1", self.source_head_input(), self.source_hidden));
            s.extend(ParamSpec::linear("source_head.l2", self.source_hidden, self.source_out));
        }
        s.extend(ParamSpec::linear("quality_encoder", PATCH_FEATURES, self.quality_embed));
        s.extend(ParamSpec::linear("quality_head.l1", self.quality_embed, self.quality_hidden));
        s.extend(ParamSpec::linear("quality_head.l2", self.quality_hidden, self.quality_out));
        s.extend(ParamSpec::linear("head.l1", self.head_input_width(), self.head_hidden));
        s.extend(ParamSpec::linear("head.l2", self.head_hidden, 1));
        s
    }

    pub fn param_count(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_is_small() {
        let c = ModelConfig::stub();
        assert!(c.param_count() <= 2000, "{}", c.param_count());
        c.validate().unwrap();
    }

    #[test]
    fn default_source_out_is_128() {
        assert_eq!(ModelConfig::default().source_out, 128);
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn disabling_text_shrinks_head_by_text_width() {
        let c = ModelConfig::default();
        let t = ModelConfig { use_text_branch: false, ..c.clone() };
        assert_eq!(c.head_input_width() - t.head_input_width(), c.embed_dim);
    }

    #[test]
    fn toml_round_trip() {
        let c = ModelConfig { fusion: FusionMode::Attention, ..ModelConfig::stub() };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ModelConfig>(&text).unwrap(), c);
        assert!(toml::from_str::<ModelConfig>("bogus = 1").is_err());
    }
}
