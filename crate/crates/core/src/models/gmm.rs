//! Gaussian mixtures: the parameter view, the engine-backed trainer, and
//! host-side inference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::Catalog;
use crate::kernels::{self, DENSITY_FLOOR};
use crate::relation::Relation;
use crate::types::{AttrType, Matrix, Schema, Value};

use super::{
    points_relation, responsibilities_relation, sample_covariance, scalar_relation,
    uniform_vector, variance_floor, vector_points, EmDriver, InitStrategy, ModelError, Points,
    TrainConfig, TrainOutcome, EMPTY_COMPONENT_MASS, GMM_SCRIPT,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub k: i64,
    pub pie: f64,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

/// A fitted (or initial) Gaussian mixture, components in ascending `k`
/// order — the relation form is the model view `gmm(k, pie, mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub components: Vec<GmmComponent>,
}

impl GmmParams {
    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.mean.len()).unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn from_relation(rel: &Relation) -> Result<Self, ModelError> {
        let schema = rel.schema();
        let k_idx = schema.resolve(None, "k").map_err(ModelError::Params)?;
        let pie_idx = schema.resolve(None, "pie").map_err(ModelError::Params)?;
        let mean_idx = schema.resolve(None, "mean").map_err(ModelError::Params)?;
        let cov_idx = schema.resolve(None, "cov").map_err(ModelError::Params)?;
        let mut components = Vec::with_capacity(rel.len());
        for row in rel.rows() {
            let k = row[k_idx]
                .as_int()
                .ok_or_else(|| ModelError::Params(format!("component id {} is not an integer", row[k_idx])))?;
            let pie = row[pie_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Params(format!("mixing coefficient {} is not numeric", row[pie_idx])))?;
            let mean = row[mean_idx]
                .as_vector()
                .ok_or_else(|| ModelError::Params(format!("mean {} is not a vector", row[mean_idx])))?
                .to_vec();
            let cov = row[cov_idx]
                .as_matrix()
                .ok_or_else(|| ModelError::Params(format!("covariance {} is not a matrix", row[cov_idx])))?
                .clone();
            if cov.dim() != mean.len() {
                return Err(ModelError::Params(format!(
                    "component {k}: mean has {} entries but covariance is {}x{}",
                    mean.len(),
                    cov.dim(),
                    cov.dim()
                )));
            }
            components.push(GmmComponent { k, pie, mean, cov });
        }
        if components.is_empty() {
            return Err(ModelError::Params("no components".into()));
        }
        components.sort_by_key(|c| c.k);
        if components.windows(2).any(|w| w[0].k == w[1].k) {
            return Err(ModelError::Params("duplicate component ids".into()));
        }
        if components.windows(2).any(|w| w[0].mean.len() != w[1].mean.len()) {
            return Err(ModelError::Params("components disagree on dimension".into()));
        }
        Ok(GmmParams { components })
    }

    pub fn to_relation(&self) -> Relation {
        let d = self.dim();
        let schema = Schema::from_pairs(&[
            ("k", AttrType::Int),
            ("pie", AttrType::Real),
            ("mean", AttrType::Vector(d)),
            ("cov", AttrType::Matrix(d)),
        ]);
        let rows = self
            .components
            .iter()
            .map(|c| {
                vec![
                    Value::Int(c.k),
                    Value::Real(c.pie),
                    Value::Vector(c.mean.clone()),
                    Value::Matrix(c.cov.clone()),
                ]
            })
            .collect();
        Relation::new(schema, rows).expect("parameters are finite")
    }

    /// Checks the model-view invariants: priors form a distribution,
    /// covariances are symmetric and positive semi-definite within 1e-9.
    pub fn validate(&self) -> Result<(), ModelError> {
        let total: f64 = self.components.iter().map(|c| c.pie).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::Params(format!("mixing coefficients sum to {total}")));
        }
        for c in &self.components {
            if !(c.pie >= 0.0) {
                return Err(ModelError::Params(format!("component {}: negative prior {}", c.k, c.pie)));
            }
            let d = c.cov.dim();
            for i in 0..d {
                for j in 0..i {
                    if (c.cov[(i, j)] - c.cov[(j, i)]).abs() > 1e-9 {
                        return Err(ModelError::Params(format!(
                            "component {}: covariance is not symmetric",
                            c.k
                        )));
                    }
                }
            }
            let eigen = nalgebra::DMatrix::from_row_slice(d, d, c.cov.data()).symmetric_eigen();
            if eigen.eigenvalues.iter().any(|&l| l < -1e-9) {
                return Err(ModelError::Params(format!(
                    "component {}: covariance has negative eigenvalue",
                    c.k
                )));
            }
        }
        Ok(())
    }

    /// Mixture density at one point, components summed in ascending `k`
    /// order and floored per the kernel conventions.
    fn density(&self, x: &[f64]) -> Result<f64, ModelError> {
        let mut total = 0.0;
        for c in &self.components {
            total += c.pie * kernels::norm_pdf(x, &c.mean, &c.cov)?;
        }
        Ok(total.max(DENSITY_FLOOR))
    }

    /// `Σ_i ln p(x_i)` over a relation with `id` and `x` columns.
    pub fn log_likelihood(&self, x: &Relation) -> Result<f64, ModelError> {
        let pts = vector_points(x)?;
        self.ll_points(&pts)
    }

    pub(crate) fn ll_points(&self, pts: &Points) -> Result<f64, ModelError> {
        if pts.d != self.dim() {
            return Err(ModelError::Data(format!(
                "data is {}-dimensional but the model is {}-dimensional",
                pts.d,
                self.dim()
            )));
        }
        let mut total = 0.0;
        for x in &pts.xs {
            total += self.density(x)?.ln();
        }
        Ok(total)
    }

    /// Posterior membership probabilities of a single point, in ascending
    /// `k` order.
    pub(crate) fn point_posterior(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let dens: Vec<f64> = self
            .components
            .iter()
            .map(|c| kernels::norm_pdf(x, &c.mean, &c.cov).map(|p| c.pie * p))
            .collect::<Result<_, _>>()?;
        let denom: f64 = dens.iter().sum();
        Ok(dens.iter().map(|&d| d / denom).collect())
    }

    /// The E-step as a standalone query: posterior membership
    /// probabilities `(id, k, p)`, one row per point and component.
    pub fn posterior(&self, x: &Relation) -> Result<Relation, ModelError> {
        let pts = vector_points(x)?;
        if pts.d != self.dim() {
            return Err(ModelError::Data(format!(
                "data is {}-dimensional but the model is {}-dimensional",
                pts.d,
                self.dim()
            )));
        }
        let ks: Vec<i64> = self.components.iter().map(|c| c.k).collect();
        let mut probs = Vec::with_capacity(pts.len());
        for x in &pts.xs {
            probs.push(self.point_posterior(x)?);
        }
        Ok(responsibilities_relation(&pts.ids, &ks, &probs))
    }
}

/// Fits a Gaussian mixture by running the training script through the
/// engine one iteration at a time, recording the log-likelihood after
/// initialization and every iteration, and reinitializing components
/// whose responsibility mass collapses.
pub fn train_gmm(x: &Relation, cfg: &TrainConfig) -> Result<TrainOutcome<GmmParams>, ModelError> {
    cfg.check()?;
    let pts = vector_points(x)?;
    if pts.len() < cfg.k {
        return Err(ModelError::Data(format!(
            "{} points cannot support {} components",
            pts.len(),
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pooled = sample_covariance(&pts);
    let init = match &cfg.init {
        InitStrategy::Provided(rel) => {
            let p = GmmParams::from_relation(rel)?;
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
        InitStrategy::RandomUniform { lo, hi } => GmmParams {
            components: (1..=cfg.k as i64)
                .map(|k| GmmComponent {
                    k,
                    pie: 1.0 / cfg.k as f64,
                    mean: uniform_vector(&mut rng, pts.d, *lo, *hi),
                    cov: pooled.clone(),
                })
                .collect(),
        },
    };

    let mut db = Catalog::new();
    db.insert("x", points_relation(&pts));
    db.insert("init_para", init.to_relation());
    db.insert("hyper", scalar_relation("vfloor", variance_floor(&pts)));
    let driver = EmDriver::new(GMM_SCRIPT, db)?;

    super::run_em(
        &driver,
        init,
        cfg,
        |p| p.to_relation(),
        GmmParams::from_relation,
        |p| p.ll_points(&pts),
        |p| repair_empty_components(p, &pts, &pooled, &mut rng),
    )
}

/// Reinitializes components whose mass `π_k·n` fell below the empty
/// threshold: mean from a random data point, pooled covariance, prior
/// reset to 1/K with the whole prior vector renormalized.
fn repair_empty_components(
    params: &mut GmmParams,
    pts: &Points,
    pooled: &Matrix,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let n = pts.len() as f64;
    let k_count = params.components.len() as f64;
    let mut hit = Vec::new();
    for c in &mut params.components {
        if c.pie * n < EMPTY_COMPONENT_MASS {
            let i = rng.gen_range(0..pts.len());
            c.mean = pts.xs[i].clone();
            c.cov = pooled.clone();
            c.pie = 1.0 / k_count;
            hit.push(c.k);
        }
    }
    if hit.is_empty() {
        return Vec::new();
    }
    let total: f64 = params.components.iter().map(|c| c.pie).sum();
    for c in &mut params.components {
        c.pie /= total;
    }
    vec![format!("reinitialized empty component(s) {hit:?}")]
}
