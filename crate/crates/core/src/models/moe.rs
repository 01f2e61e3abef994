//! Mixtures of experts: linear-regression experts combined through a
//! softmax gate over the same features. The parameter view has no mixing
//! column — the gate weights `theta` play that role, with the last
//! component pinned at zero as the softmax reference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::Catalog;
use crate::kernels::{self, DENSITY_FLOOR};
use crate::relation::Relation;
use crate::types::{AttrType, Schema, Value};

use super::mlr::dot;
use super::{
    labeled_points, labeled_relation, responsibilities_relation, sample_sd, scalar_relation,
    sigma_floor, uniform_vector, EmDriver, InitStrategy, ModelError, Points, TrainConfig,
    TrainOutcome, MOE_SCRIPT,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MoeComponent {
    pub k: i64,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// A fitted (or initial) mixture of experts, components in ascending `k`
/// order — the relation form is the model view `moe(k, theta, beta, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeParams {
    pub components: Vec<MoeComponent>,
}

impl MoeParams {
    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.beta.len()).unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn from_relation(rel: &Relation) -> Result<Self, ModelError> {
        let schema = rel.schema();
        let k_idx = schema.resolve(None, "k").map_err(ModelError::Params)?;
        let theta_idx = schema.resolve(None, "theta").map_err(ModelError::Params)?;
        let beta_idx = schema.resolve(None, "beta").map_err(ModelError::Params)?;
        let sigma_idx = schema.resolve(None, "sigma").map_err(ModelError::Params)?;
        let mut components = Vec::with_capacity(rel.len());
        for row in rel.rows() {
            let k = row[k_idx]
                .as_int()
                .ok_or_else(|| ModelError::Params(format!("component id {} is not an integer", row[k_idx])))?;
            let theta = row[theta_idx]
                .as_vector()
                .ok_or_else(|| ModelError::Params(format!("gate weights {} are not a vector", row[theta_idx])))?
                .to_vec();
            let beta = row[beta_idx]
                .as_vector()
                .ok_or_else(|| ModelError::Params(format!("coefficients {} are not a vector", row[beta_idx])))?
                .to_vec();
            let sigma = row[sigma_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Params(format!("noise scale {} is not numeric", row[sigma_idx])))?;
            if theta.len() != beta.len() {
                return Err(ModelError::Params(format!(
                    "component {k}: gate has {} weights but the expert has {} coefficients",
                    theta.len(),
                    beta.len()
                )));
            }
            components.push(MoeComponent { k, theta, beta, sigma });
        }
        if components.is_empty() {
            return Err(ModelError::Params("no components".into()));
        }
        components.sort_by_key(|c| c.k);
        if components.windows(2).any(|w| w[0].k == w[1].k) {
            return Err(ModelError::Params("duplicate component ids".into()));
        }
        if components.windows(2).any(|w| w[0].beta.len() != w[1].beta.len()) {
            return Err(ModelError::Params("components disagree on dimension".into()));
        }
        Ok(MoeParams { components })
    }

    pub fn to_relation(&self) -> Relation {
        let d = self.dim();
        let schema = Schema::from_pairs(&[
            ("k", AttrType::Int),
            ("theta", AttrType::Vector(d)),
            ("beta", AttrType::Vector(d)),
            ("sigma", AttrType::Real),
        ]);
        let rows = self
            .components
            .iter()
            .map(|c| {
                vec![
                    Value::Int(c.k),
                    Value::Vector(c.theta.clone()),
                    Value::Vector(c.beta.clone()),
                    Value::Real(c.sigma),
                ]
            })
            .collect();
        Relation::new(schema, rows).expect("parameters are finite")
    }

    /// Checks the model-view invariants: positive noise scales.
    pub fn validate(&self) -> Result<(), ModelError> {
        for c in &self.components {
            if !(c.sigma > 0.0) {
                return Err(ModelError::Params(format!(
                    "component {}: noise scale must be positive, got {}",
                    c.k, c.sigma
                )));
            }
        }
        Ok(())
    }

    /// Softmax gate values at `x`, in ascending `k` order.
    pub fn gates(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.components.iter().map(|c| dot(x, &c.theta)).collect();
        kernels::softmax_gate(&logits)
    }

    /// Per-component terms `g_k(x)·N(y | xᵀβ_k, σ_k)` in ascending `k`
    /// order.
    fn weighted_densities(&self, x: &[f64], y: f64) -> Result<Vec<f64>, ModelError> {
        let gates = self.gates(x);
        self.components
            .iter()
            .zip(gates)
            .map(|(c, g)| {
                let mean = dot(x, &c.beta);
                Ok(g * kernels::norm_pdf_1d(y, mean, c.sigma)?)
            })
            .collect()
    }

    /// `Σ_i ln p(y_i | x_i)` over a relation with `id`, `x`, `y` columns.
    pub fn log_likelihood(&self, xy: &Relation) -> Result<f64, ModelError> {
        let (pts, ys) = labeled_points(xy)?;
        self.ll_points(&pts, &ys)
    }

    pub(crate) fn ll_points(&self, pts: &Points, ys: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(pts)?;
        let mut total = 0.0;
        for (x, &y) in pts.xs.iter().zip(ys) {
            let mix: f64 = self.weighted_densities(x, y)?.iter().sum();
            total += mix.max(DENSITY_FLOOR).ln();
        }
        Ok(total)
    }

    /// Posterior membership probabilities `(id, k, p)` given both the
    /// features and the observed response.
    pub fn posterior(&self, xy: &Relation) -> Result<Relation, ModelError> {
        let (pts, ys) = labeled_points(xy)?;
        self.check_dim(&pts)?;
        let ks: Vec<i64> = self.components.iter().map(|c| c.k).collect();
        let mut probs = Vec::with_capacity(pts.len());
        for (x, &y) in pts.xs.iter().zip(&ys) {
            let dens = self.weighted_densities(x, y)?;
            let denom: f64 = dens.iter().sum();
            probs.push(dens.iter().map(|&d| d / denom).collect::<Vec<_>>());
        }
        Ok(responsibilities_relation(&pts.ids, &ks, &probs))
    }

    fn check_dim(&self, pts: &Points) -> Result<(), ModelError> {
        if pts.d != self.dim() {
            return Err(ModelError::Data(format!(
                "data is {}-dimensional but the model is {}-dimensional",
                pts.d,
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Fits a mixture of experts by stepping the training script through the
/// engine. Random initialization draws the expert coefficients uniformly
/// and starts every gate at zero (a uniform gate), which keeps the
/// reference component's weights at zero throughout.
pub fn train_moe(xy: &Relation, cfg: &TrainConfig) -> Result<TrainOutcome<MoeParams>, ModelError> {
    cfg.check()?;
    let (pts, ys) = labeled_points(xy)?;
    if pts.len() < cfg.k * pts.d {
        return Err(ModelError::Data(format!(
            "{} points cannot support {} components of {} coefficients each",
            pts.len(),
            cfg.k,
            pts.d
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sfloor = sigma_floor(&ys);
    let init = match &cfg.init {
        InitStrategy::Provided(rel) => {
            let p = MoeParams::from_relation(rel)?;
            if p.component_count() != cfg.k {
                return Err(ModelError::Config(format!(
                    "provided initialization has {} components, config asks for {}",
                    p.component_count(),
                    cfg.k
                )));
            }
            if p.dim() != pts.d {
                return Err(ModelError::Config(format!(
                    "provided initialization is {}-dimensional, data is {}-dimensional",
                    p.dim(),
                    pts.d
                )));
            }
            p
        }
        InitStrategy::RandomUniform { lo, hi } => MoeParams {
            components: (1..=cfg.k as i64)
                .map(|k| MoeComponent {
                    k,
                    theta: vec![0.0; pts.d],
                    beta: uniform_vector(&mut rng, pts.d, *lo, *hi),
                    sigma: sample_sd(&ys).max(sfloor),
                })
                .collect(),
        },
    };

    let mut db = Catalog::new();
    db.insert("xy", labeled_relation(&pts, &ys));
    db.insert("init_para", init.to_relation());
    db.insert("hyper", scalar_relation("sfloor", sfloor));
    let driver = EmDriver::new(MOE_SCRIPT, db)?;

    super::run_em(
        &driver,
        init,
        cfg,
        |p| p.to_relation(),
        MoeParams::from_relation,
        |p| p.ll_points(&pts, &ys),
        |_| Vec::new(),
    )
}
