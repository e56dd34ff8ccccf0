//! Knowledge-aware text prompts and the per-class text features.
//!
//! Each class sequence is `[start, C_i (n_ctx), D_i, class-name tokens, end]`
//! where `C_i = Proj(knowledge_i) + X_i` and `D_i` embeds the class keywords.

use std::path::Path;

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::blob::BlobReader;
use crate::encoders::{TextEncoder, TokenEmbeddingSequence, Tokenizer};
use crate::error::{Error, Result};
use crate::nn::{l2_normalize, softmax_last, to_vec2_f64, Init, Linear, Mlp, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub description: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpecFile {
    /// Name of the reference (healthy) class.
    pub healthy: String,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

impl ClassSpecFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Config(format!("class spec: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Built-in spec for a task name (`dementia-group` or `gait-scoring`).
    pub fn builtin(task: &str) -> Result<Self> {
        match task {
            "dementia-group" => Self::from_toml(include_str!("../assets/classes/dementia.toml")),
            "gait-scoring" => Self::from_toml(include_str!("../assets/classes/gait_scoring.toml")),
            other => Err(Error::Config(format!("no built-in class spec for task `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.name.trim().is_empty() || c.description.trim().is_empty() {
                return Err(Error::Config(format!("class {i} has an empty name or description")));
            }
            if c.keywords.is_empty() || c.keywords.iter().any(|k| k.trim().is_empty()) {
                return Err(Error::Config(format!("class `{}` needs non-empty keywords", c.name)));
            }
            if self.classes[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Config(format!("duplicate class `{}`", c.name)));
            }
        }
        if self.healthy_index().is_none() {
            return Err(Error::Config(format!("healthy class `{}` is not listed", self.healthy)));
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn healthy_index(&self) -> Option<usize> {
        self.classes.iter().position(|c| c.name == self.healthy)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Source of the per-class knowledge vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum KnowledgeProvider {
    /// Frozen text-encoder feature of the description, zero-padded or truncated.
    #[default]
    FrozenEncoder,
    /// Blob directory holding a `knowledge` tensor of shape `[classes, dim]`.
    External { dir: String },
}

/// Knowledge vector `[dim]` of one description under the frozen text encoder.
pub fn provide_knowledge_embedding(
    text: &TextEncoder,
    tokenizer: &Tokenizer,
    description: &str,
    dim: usize,
) -> Result<Tensor> {
    if description.trim().is_empty() {
        return Err(Error::Invalid("empty class description".into()));
    }
    let feat = text.encode_text_ids(&tokenizer.tokenize(description))?;
    let n = feat.dim(0)?;
    Ok(if n >= dim {
        feat.narrow(0, 0, dim)?
    } else {
        feat.pad_with_zeros(0, 0, dim - n)?
    })
}

/// `[classes, dim]` knowledge matrix from the configured provider.
pub fn knowledge_matrix(
    provider: &KnowledgeProvider,
    specs: &ClassSpecFile,
    text: &TextEncoder,
    tokenizer: &Tokenizer,
    dim: usize,
) -> Result<Tensor> {
    match provider {
        KnowledgeProvider::FrozenEncoder => {
            let rows = specs
                .classes
                .iter()
                .map(|c| provide_knowledge_embedding(text, tokenizer, &c.description, dim))
                .collect::<Result<Vec<_>>>()?;
            Ok(Tensor::stack(&rows, 0)?)
        }
        KnowledgeProvider::External { dir } => {
            let r = BlobReader::open(dir)?;
            r.tensor("knowledge", Some(&[specs.len(), dim]), text.dtype(), text.device())
        }
    }
}

/// Automatic prompt `D_i`: keyword token embeddings, truncated to `budget`.
pub fn build_automatic_prompt(
    text: &TextEncoder,
    tokenizer: &Tokenizer,
    keywords: &[String],
    budget: usize,
) -> Result<Option<Tensor>> {
    if keywords.is_empty() {
        return Err(Error::Invalid("no keywords".into()));
    }
    let mut ids = tokenizer.encode_pieces(&keywords.join(" "));
    ids.truncate(budget);
    if ids.is_empty() {
        return Ok(None);
    }
    Ok(Some(text.embed_ids(&ids)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextPromptConfig {
    /// Learnable context vectors per class.
    pub n_ctx: usize,
    pub knowledge_dim: usize,
    pub proj_hidden: usize,
    /// Maximum number of keyword tokens per class.
    pub auto_prompt_budget: usize,
    pub init_std: f64,
    pub knowledge: KnowledgeProvider,
}

impl Default for TextPromptConfig {
    fn default() -> Self {
        Self {
            n_ctx: 8,
            knowledge_dim: 768,
            proj_hidden: 512,
            auto_prompt_budget: 32,
            init_std: 0.02,
            knowledge: KnowledgeProvider::FrozenEncoder,
        }
    }
}

/// Learnable text-prompt state plus the frozen per-class token segments.
#[derive(Debug, Clone)]
pub struct TextPrompts {
    cfg: TextPromptConfig,
    /// `[classes, n_ctx, width]`
    x: Tensor,
    /// One projection per context slot, shared across classes. Empty when
    /// knowledge prompting is off.
    proj: Vec<Mlp>,
    /// `[classes, knowledge_dim]`
    knowledge: Option<Tensor>,
    auto: Vec<Option<Tensor>>,
    class_tokens: Vec<Tensor>,
    start: Tensor,
    end: Tensor,
    names: Vec<String>,
}

impl TextPrompts {
    /// Registers `X` (and the projections when `knowledge_on`) under `text_prompt.*`.
    /// The context budget of every class is validated here.
    pub fn new(
        cfg: &TextPromptConfig,
        specs: &ClassSpecFile,
        text: &TextEncoder,
        tokenizer: &Tokenizer,
        knowledge_on: bool,
        store: &mut ParamStore,
        init: &mut Init,
    ) -> Result<Self> {
        let width = text.config().width;
        let n = specs.len();
        let x = store.learnable("text_prompt.x", init.normal(&[n, cfg.n_ctx, width], cfg.init_std)?)?;
        let (proj, knowledge) = if knowledge_on {
            let proj = (0..cfg.n_ctx)
                .map(|k| {
                    let name = format!("text_prompt.proj.{k}");
                    Ok(Mlp {
                        fc1: Linear::learnable(store, init, &format!("{name}.fc1"), cfg.knowledge_dim, cfg.proj_hidden)?,
                        fc2: Linear::learnable_with(
                            store,
                            &format!("{name}.fc2"),
                            init.zeros(&[cfg.proj_hidden, width])?,
                            init.zeros(&[width])?,
                        )?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let k = knowledge_matrix(&cfg.knowledge, specs, text, tokenizer, cfg.knowledge_dim)?;
            (proj, Some(k))
        } else {
            (Vec::new(), None)
        };
        let auto = specs
            .classes
            .iter()
            .map(|c| {
                if knowledge_on {
                    build_automatic_prompt(text, tokenizer, &c.keywords, cfg.auto_prompt_budget)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let class_tokens = specs
            .classes
            .iter()
            .map(|c| text.embed_ids(&tokenizer.encode_pieces(&c.name)))
            .collect::<Result<Vec<_>>>()?;
        let ends = text.embed_ids(&[tokenizer.start_id(), tokenizer.end_id()])?;
        let prompts = Self {
            cfg: cfg.clone(),
            x,
            proj,
            knowledge,
            auto,
            class_tokens,
            start: ends.narrow(0, 0, 1)?,
            end: ends.narrow(0, 1, 1)?,
            names: specs.names(),
        };
        for i in 0..n {
            let len = prompts.sequence_len(i)?;
            let max = text.config().context_length;
            if len > max {
                return Err(Error::ContextOverflow {
                    len,
                    max,
                    context: Some(format!("class `{}`", prompts.names[i])),
                });
            }
        }
        Ok(prompts)
    }

    pub fn config(&self) -> &TextPromptConfig {
        &self.cfg
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn knowledge_on(&self) -> bool {
        self.knowledge.is_some()
    }

    /// Learnable context vectors `X`.
    pub fn x(&self) -> &Tensor {
        &self.x
    }

    pub fn projections(&self) -> &[Mlp] {
        &self.proj
    }

    fn sequence_len(&self, class: usize) -> Result<usize> {
        let d = match &self.auto[class] {
            Some(t) => t.dim(0)?,
            None => 0,
        };
        Ok(2 + self.cfg.n_ctx + d + self.class_tokens[class].dim(0)?)
    }

    /// Projected knowledge `[classes, n_ctx, width]`, or `None` when knowledge is off.
    pub fn projected_knowledge(&self) -> Result<Option<Tensor>> {
        let Some(k) = &self.knowledge else { return Ok(None) };
        let slots = self.proj.iter().map(|p| p.forward(k)).collect::<Result<Vec<_>>>()?;
        Ok(Some(Tensor::stack(&slots, 1)?))
    }

    /// `C = Proj(knowledge) + X`, shape `[classes, n_ctx, width]`.
    pub fn build_learnable_prompts(&self) -> Result<Tensor> {
        Ok(match self.projected_knowledge()? {
            Some(p) => (p + &self.x)?,
            None => self.x.clone(),
        })
    }

    /// Token sequences of every class given prompts `c` (`[classes, n_ctx, width]`).
    pub fn class_sequences(&self, c: &Tensor) -> Result<Vec<TokenEmbeddingSequence>> {
        let (n, n_ctx, _) = c.dims3()?;
        if n != self.num_classes() || n_ctx != self.cfg.n_ctx {
            return Err(Error::shape(
                "learnable prompts",
                format!("[{}, {}, _]", self.num_classes(), self.cfg.n_ctx),
                format!("{:?}", c.dims()),
            ));
        }
        (0..n)
            .map(|i| {
                let ci = c.get(i)?;
                let mut parts = vec![&self.start, &ci];
                if let Some(d) = &self.auto[i] {
                    parts.push(d);
                }
                parts.push(&self.class_tokens[i]);
                parts.push(&self.end);
                TokenEmbeddingSequence::new(Tensor::cat(&parts, 0)?)
            })
            .collect()
    }

    /// Per-class text features `[classes, embed_dim]`.
    pub fn assemble_class_features(&self, text: &TextEncoder) -> Result<Tensor> {
        let c = self.build_learnable_prompts()?;
        text.encode_batch(&self.class_sequences(&c)?)
    }
}

/// `softmax(cos(F^V, F^T_i) / tau)` over classes; `video` is `[batch, d]`,
/// `classes` is `[classes, d]`. Differentiable.
pub fn class_probabilities(video: &Tensor, classes: &Tensor, tau: f64) -> Result<Tensor> {
    check_nonzero(video, "video feature")?;
    check_nonzero(classes, "class feature")?;
    let sim = l2_normalize(video)?.matmul(&l2_normalize(classes)?.t()?)?;
    softmax_last(&(sim / tau)?)
}

fn check_nonzero(x: &Tensor, what: &str) -> Result<()> {
    let norms = x.sqr()?.sum(D::Minus1)?.flatten_all()?.to_dtype(candle_core::DType::F64)?.to_vec1::<f64>()?;
    if norms.iter().any(|n| !n.is_finite()) {
        return Err(Error::Invalid(format!("non-finite {what}")));
    }
    if norms.iter().any(|&n| n < 1e-24) {
        return Err(Error::Degenerate {
            name: what.into(),
            message: "zero-norm feature".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub probabilities: Vec<f64>,
    pub class: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Classifies each row of `video` (`[batch, d]`) against `classes`.
pub fn classify(video: &Tensor, classes: &Tensor, tau: f64) -> Result<Vec<Classification>> {
    let p = to_vec2_f64(&class_probabilities(video, classes, tau)?)?;
    Ok(p.into_iter()
        .map(|probabilities| Classification {
            class: argmax(&probabilities),
            probabilities,
        })
        .collect())
}
