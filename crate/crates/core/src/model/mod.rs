//! The two-branch network: a shared MLP backbone feeding a normalized
//! projection head (contrastive branch) and a linear classifier (CE branch),
//! plus the learnable prototype bank.

mod prototypes;

pub use prototypes::PrototypeBank;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Dense, L2Normalize, Matrix, ParamTensor, Relu};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Widths of the hidden backbone layers; the backbone ends at `embed_dim`.
    pub backbone_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
    pub num_classes: usize,
    pub prototypes_per_class: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            backbone_hidden: vec![64, 64],
            embed_dim: 32,
            proj_hidden: 32,
            proj_dim: 16,
            num_classes: 10,
            prototypes_per_class: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("embed_dim", self.embed_dim),
            ("proj_hidden", self.proj_hidden),
            ("proj_dim", self.proj_dim),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.backbone_hidden.contains(&0) {
            return Err(Error::config("backbone hidden widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("at least 2 classes are required"));
        }
        if self.prototypes_per_class == 0 {
            return Err(Error::config("prototypes_per_class must be at least 1"));
        }
        Ok(())
    }
}

/// Stack of dense layers, each followed by a ReLU. With no layers the
/// backbone is the identity.
#[derive(Debug, Clone)]
pub struct BackboneMlp {
    layers: Vec<Dense>,
    relus: Vec<Relu>,
    input_dim: usize,
}

impl BackboneMlp {
    /// `widths = [D_in, h_1, …, D_E]`; a single width gives the identity.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let input_dim = *widths
            .first()
            .ok_or_else(|| Error::config("backbone needs at least an input width"))?;
        let layers: Vec<Dense> = widths
            .windows(2)
            .map(|w| Dense::he_init(w[0], w[1], rng))
            .collect();
        let relus = vec![Relu::default(); layers.len()];
        Ok(Self {
            layers,
            relus,
            input_dim,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            layers: Vec::new(),
            relus: Vec::new(),
            input_dim: dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Dense::output_dim)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::config(format!(
                "backbone expects {} input features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for (layer, relu) in self.layers.iter_mut().zip(&mut self.relus) {
            h = relu.forward(&layer.forward(&h)?);
        }
        Ok(h)
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = Relu::infer(&layer.infer(&h)?);
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let mut g = grad.clone();
        for (layer, relu) in self.layers.iter_mut().zip(&self.relus).rev() {
            g = layer.backward(&relu.backward(&g)?)?;
        }
        Ok(g)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    fn params_mut(&mut self) -> Vec<(String, &mut ParamTensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("backbone.{i}.weight"), &mut l.weights));
            out.push((format!("backbone.{i}.bias"), &mut l.bias));
        }
        out
    }

    fn params(&self) -> Vec<(String, &ParamTensor)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("backbone.{i}.weight"), &l.weights));
            out.push((format!("backbone.{i}.bias"), &l.bias));
        }
        out
    }
}

/// `D_E → D_H → ReLU → D_S → ℓ2-normalize`
#[derive(Debug, Clone)]
pub struct ProjectionHead {
    pub hidden: Dense,
    relu: Relu,
    pub output: Dense,
    normalize: L2Normalize,
}

impl ProjectionHead {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        Self {
            hidden: Dense::he_init(embed_dim, hidden, rng),
            relu: Relu::default(),
            output: Dense::he_init(hidden, out, rng),
            normalize: L2Normalize::default(),
        }
    }

    pub fn forward(&mut self, r: &Matrix) -> Result<Matrix> {
        let h = self.relu.forward(&self.hidden.forward(r)?);
        self.normalize.forward(&self.output.forward(&h)?)
    }

    pub fn infer(&self, r: &Matrix) -> Result<Matrix> {
        let h = Relu::infer(&self.hidden.infer(r)?);
        crate::numerics::l2_normalize_forward(&self.output.infer(&h)?)
    }

    pub fn backward(&mut self, grad_z: &Matrix) -> Result<Matrix> {
        let g = self.normalize.backward(grad_z)?;
        let g = self.output.backward(&g)?;
        self.hidden.backward(&self.relu.backward(&g)?)
    }
}

/// Single linear layer `D_E → C`.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    pub linear: Dense,
}

impl ClassifierHead {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            linear: Dense::he_init(embed_dim, classes, rng),
        }
    }

    pub fn forward(&mut self, r: &Matrix) -> Result<Matrix> {
        self.linear.forward(r)
    }

    pub fn infer(&self, r: &Matrix) -> Result<Matrix> {
        self.linear.infer(r)
    }

    pub fn backward(&mut self, grad_s: &Matrix) -> Result<Matrix> {
        self.linear.backward(grad_s)
    }
}

/// Parameter groups used to select what an optimizer step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Projection,
    Classifier,
    Prototypes,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::Backbone,
        ParamGroup::Projection,
        ParamGroup::Classifier,
        ParamGroup::Prototypes,
    ];
}

#[derive(Debug, Clone)]
pub struct HybridModel {
    pub config: ModelConfig,
    pub backbone: BackboneMlp,
    pub projection: ProjectionHead,
    pub classifier: ClassifierHead,
    pub prototypes: PrototypeBank,
}

impl HybridModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut widths = vec![config.input_dim];
        widths.extend(&config.backbone_hidden);
        widths.push(config.embed_dim);
        let backbone = BackboneMlp::new(&widths, rng)?;
        let projection =
            ProjectionHead::new(config.embed_dim, config.proj_hidden, config.proj_dim, rng);
        let classifier = ClassifierHead::new(config.embed_dim, config.num_classes, rng);
        let prototypes = PrototypeBank::random(
            config.num_classes,
            config.prototypes_per_class,
            config.proj_dim,
            rng,
        )?;
        Ok(Self {
            config,
            backbone,
            projection,
            classifier,
            prototypes,
        })
    }

    pub fn forward_features(&mut self, x: &Matrix) -> Result<Matrix> {
        self.backbone.forward(x)
    }

    pub fn forward_contrastive(&mut self, r: &Matrix) -> Result<Matrix> {
        self.projection.forward(r)
    }

    pub fn forward_classifier(&mut self, r: &Matrix) -> Result<Matrix> {
        self.classifier.forward(r)
    }

    /// Backbone features without touching any cache.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.backbone.infer(x)
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.classifier.infer(&self.backbone.infer(x)?)
    }

    pub fn embeddings(&self, x: &Matrix) -> Result<Matrix> {
        self.projection.infer(&self.backbone.infer(x)?)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut(&ParamGroup::ALL) {
            p.zero_grad();
        }
    }

    /// Named parameters of the selected groups, in a fixed order.
    pub fn params_mut(&mut self, groups: &[ParamGroup]) -> Vec<(String, &mut ParamTensor)> {
        let mut out = Vec::new();
        if groups.contains(&ParamGroup::Backbone) {
            out.extend(self.backbone.params_mut());
        }
        if groups.contains(&ParamGroup::Projection) {
            out.push(("projection.hidden.weight".into(), &mut self.projection.hidden.weights));
            out.push(("projection.hidden.bias".into(), &mut self.projection.hidden.bias));
            out.push(("projection.output.weight".into(), &mut self.projection.output.weights));
            out.push(("projection.output.bias".into(), &mut self.projection.output.bias));
        }
        if groups.contains(&ParamGroup::Classifier) {
            out.push(("classifier.weight".into(), &mut self.classifier.linear.weights));
            out.push(("classifier.bias".into(), &mut self.classifier.linear.bias));
        }
        if groups.contains(&ParamGroup::Prototypes) {
            out.push(("prototypes".into(), &mut self.prototypes.param));
        }
        out
    }

    pub fn params(&self) -> Vec<(String, &ParamTensor)> {
        let mut out = self.backbone.params();
        out.push(("projection.hidden.weight".into(), &self.projection.hidden.weights));
        out.push(("projection.hidden.bias".into(), &self.projection.hidden.bias));
        out.push(("projection.output.weight".into(), &self.projection.output.weights));
        out.push(("projection.output.bias".into(), &self.projection.output.bias));
        out.push(("classifier.weight".into(), &self.classifier.linear.weights));
        out.push(("classifier.bias".into(), &self.classifier.linear.bias));
        out.push(("prototypes".into(), &self.prototypes.param));
        out
    }
}
