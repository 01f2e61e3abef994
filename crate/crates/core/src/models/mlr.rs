//! Mixtures of linear regressions: parameter view, engine-backed trainer,
//! and host-side inference over `(x, y)` pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::Catalog;
use crate::kernels::{self, DENSITY_FLOOR};
use crate::relation::Relation;
use crate::types::{AttrType, Schema, Value};

use super::{
    labeled_points, labeled_relation, responsibilities_relation, sample_sd, scalar_relation,
    sigma_floor, uniform_vector, EmDriver, InitStrategy, ModelError, Points, TrainConfig,
    TrainOutcome, MLR_SCRIPT,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MlrComponent {
    pub k: i64,
    pub pie: f64,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// A fitted (or initial) regression mixture, components in ascending `k`
/// order — the relation form is the model view `mlr(k, pie, beta, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlrParams {
    pub components: Vec<MlrComponent>,
}

impl MlrParams {
    pub fn dim(&self) -> usize {
        self.components.first().map(|c| c.beta.len()).unwrap_or(0)
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    pub fn from_relation(rel: &Relation) -> Result<Self, ModelError> {
        let schema = rel.schema();
        let k_idx = schema.resolve(None, "k").map_err(ModelError::Params)?;
        let pie_idx = schema.resolve(None, "pie").map_err(ModelError::Params)?;
        let beta_idx = schema.resolve(None, "beta").map_err(ModelError::Params)?;
        let sigma_idx = schema.resolve(None, "sigma").map_err(ModelError::Params)?;
        let mut components = Vec::with_capacity(rel.len());
        for row in rel.rows() {
            let k = row[k_idx]
                .as_int()
                .ok_or_else(|| ModelError::Params(format!("component id {} is not an integer", row[k_idx])))?;
            let pie = row[pie_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Params(format!("mixing coefficient {} is not numeric", row[pie_idx])))?;
            let beta = row[beta_idx]
                .as_vector()
                .ok_or_else(|| ModelError::Params(format!("coefficients {} are not a vector", row[beta_idx])))?
                .to_vec();
            let sigma = row[sigma_idx]
                .as_f64()
                .ok_or_else(|| ModelError::Params(format!("noise scale {} is not numeric", row[sigma_idx])))?;
            components.push(MlrComponent { k, pie, beta, sigma });
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
        Ok(MlrParams { components })
    }

    pub fn to_relation(&self) -> Relation {
        let d = self.dim();
        let schema = Schema::from_pairs(&[
            ("k", AttrType::Int),
            ("pie", AttrType::Real),
            ("beta", AttrType::Vector(d)),
            ("sigma", AttrType::Real),
        ]);
        let rows = self
            .components
            .iter()
            .map(|c| {
                vec![
                    Value::Int(c.k),
                    Value::Real(c.pie),
                    Value::Vector(c.beta.clone()),
                    Value::Real(c.sigma),
                ]
            })
            .collect();
        Relation::new(schema, rows).expect("parameters are finite")
    }

    /// Checks the model-view invariants: priors form a distribution and
    /// every noise scale is positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        let total: f64 = self.components.iter().map(|c| c.pie).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::Params(format!("mixing coefficients sum to {total}")));
        }
        for c in &self.components {
            if !(c.pie >= 0.0) {
                return Err(ModelError::Params(format!("component {}: negative prior {}", c.k, c.pie)));
            }
            if !(c.sigma > 0.0) {
                return Err(ModelError::Params(format!(
                    "component {}: noise scale must be positive, got {}",
                    c.k, c.sigma
                )));
            }
        }
        Ok(())
    }

    /// Per-component conditional densities `π_k·N(y | xᵀβ_k, σ_k)` in
    /// ascending `k` order.
    fn weighted_densities(&self, x: &[f64], y: f64) -> Result<Vec<f64>, ModelError> {
        self.components
            .iter()
            .map(|c| {
                let mean = dot(x, &c.beta);
                Ok(c.pie * kernels::norm_pdf_1d(y, mean, c.sigma)?)
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

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits a mixture of linear regressions by stepping the training script
/// through the engine, recording the log-likelihood after initialization
/// and every iteration. A component whose responsibility mass collapses
/// surfaces as a degenerate-design error from the per-component solve.
pub fn train_mlr(xy: &Relation, cfg: &TrainConfig) -> Result<TrainOutcome<MlrParams>, ModelError> {
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
            let p = MlrParams::from_relation(rel)?;
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
        InitStrategy::RandomUniform { lo, hi } => MlrParams {
            components: (1..=cfg.k as i64)
                .map(|k| MlrComponent {
                    k,
                    pie: 1.0 / cfg.k as f64,
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
    let driver = EmDriver::new(MLR_SCRIPT, db)?;

    super::run_em(
        &driver,
        init,
        cfg,
        |p| p.to_relation(),
        MlrParams::from_relation,
        |p| p.ll_points(&pts, &ys),
        |_| Vec::new(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Builds `(id, x, y)` rows with intercept-augmented features `(1, t)`.
    fn line_data(points: &[(f64, f64)]) -> Relation {
        let schema = Schema::from_pairs(&[
            ("id", AttrType::Int),
            ("x", AttrType::Vector(2)),
            ("y", AttrType::Real),
        ]);
        let rows = points
            .iter()
            .enumerate()
            .map(|(i, &(t, y))| {
                vec![Value::Int(i as i64 + 1), Value::Vector(vec![1.0, t]), Value::Real(y)]
            })
            .collect();
        Relation::new(schema, rows).unwrap()
    }

    fn provided(components: &[(f64, &[f64], f64)]) -> MlrParams {
        MlrParams {
            components: components
                .iter()
                .enumerate()
                .map(|(i, &(pie, beta, sigma))| MlrComponent {
                    k: i as i64 + 1,
                    pie,
                    beta: beta.to_vec(),
                    sigma,
                })
                .collect(),
        }
    }

    #[test]
    fn single_component_recovers_an_exact_line() {
        // y = 1 + 2t fit with one component: the M-step is plain least
        // squares, so one iteration lands on the line and the noise scale
        // drops to its floor.
        let data = line_data(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0), (3.0, 7.0)]);
        let cfg = TrainConfig {
            k: 1,
            max_iterations: 1,
            seed: 2,
            init: InitStrategy::Provided(provided(&[(1.0, &[0.0, 0.0], 1.0)]).to_relation()),
            epsilon: None,
        };
        let out = train_mlr(&data, &cfg).unwrap();
        let c = &out.params.components[0];
        assert_eq!(c.pie, 1.0);
        assert_relative_eq!(c.beta[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(c.beta[1], 2.0, epsilon = 1e-9);
        // σ floor: 1e-6 times the response range (7 - 1 = 6).
        assert_eq!(c.sigma, 6e-6);
        out.params.validate().unwrap();
    }

    #[test]
    fn two_separated_lines_are_recovered() {
        let mut pts = Vec::new();
        for i in 0..4 {
            let t = 0.5 * i as f64;
            pts.push((t, 3.0 * t));
        }
        for i in 0..4 {
            let t = 4.0 + 0.5 * i as f64;
            pts.push((t, -3.0 * t + 20.0));
        }
        let data = line_data(&pts);
        let init = provided(&[(0.5, &[0.0, 2.0], 2.0), (0.5, &[18.0, -2.0], 2.0)]);
        let cfg = TrainConfig {
            k: 2,
            max_iterations: 20,
            seed: 4,
            init: InitStrategy::Provided(init.to_relation()),
            epsilon: None,
        };
        let out = train_mlr(&data, &cfg).unwrap();
        let c = &out.params.components;
        assert_relative_eq!(c[0].beta[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(c[0].beta[1], 3.0, epsilon = 1e-6);
        assert_relative_eq!(c[1].beta[0], 20.0, epsilon = 1e-6);
        assert_relative_eq!(c[1].beta[1], -3.0, epsilon = 1e-6);
        assert_relative_eq!(c[0].pie, 0.5, epsilon = 1e-9);

        // Saturated responsibilities make each component an ordinary
        // least-squares fit of its own cluster.
        let ols = kernels::least_squares(
            &pts[..4].iter().map(|&(t, _)| vec![1.0, t]).collect::<Vec<_>>(),
            &pts[..4].iter().map(|&(_, y)| y).collect::<Vec<_>>(),
            None,
        )
        .unwrap();
        assert_relative_eq!(c[0].beta[0], ols[0], epsilon = 1e-9);
        assert_relative_eq!(c[0].beta[1], ols[1], epsilon = 1e-9);
    }

    #[test]
    fn log_likelihood_matches_closed_form() {
        // One component, prediction equals the response, σ = 1: each term
        // is ln(1/√(2π)).
        let params = provided(&[(1.0, &[1.0], 1.0)]);
        let schema = Schema::from_pairs(&[
            ("id", AttrType::Int),
            ("x", AttrType::Vector(1)),
            ("y", AttrType::Real),
        ]);
        let data = Relation::new(
            schema,
            vec![
                vec![Value::Int(1), Value::Vector(vec![2.0]), Value::Real(2.0)],
                vec![Value::Int(2), Value::Vector(vec![5.0]), Value::Real(5.0)],
            ],
        )
        .unwrap();
        let ll = params.log_likelihood(&data).unwrap();
        let expect = 2.0 * (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert_relative_eq!(ll, expect, max_relative = 1e-12);
    }

    #[test]
    fn posterior_normalizes_and_separates() {
        let params = provided(&[(0.5, &[0.0, 3.0], 0.5), (0.5, &[20.0, -3.0], 0.5)]);
        let data = line_data(&[(1.0, 3.0), (5.0, 5.0)]);
        let post = params.posterior(&data).unwrap();
        assert_eq!(post.len(), 4);
        // Point on the first line belongs to the first component.
        assert!(post.rows()[0][2].as_f64().unwrap() > 0.999);
        // Point on the second line belongs to the second component.
        assert!(post.rows()[3][2].as_f64().unwrap() > 0.999);
        for pair in post.rows().chunks(2) {
            let total = pair[0][2].as_f64().unwrap() + pair[1][2].as_f64().unwrap();
            assert!((total - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let bad_sigma = provided(&[(1.0, &[0.0], 0.0)]);
        assert!(matches!(bad_sigma.validate(), Err(ModelError::Params(_))));
        let bad_pie = provided(&[(0.7, &[0.0], 1.0), (0.7, &[1.0], 1.0)]);
        assert!(matches!(bad_pie.validate(), Err(ModelError::Params(_))));
    }

    #[test]
    fn too_few_points_for_the_design_is_rejected() {
        let data = line_data(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        let cfg = TrainConfig::new(2, 5, 1);
        assert!(matches!(train_mlr(&data, &cfg), Err(ModelError::Data(_))));
    }
}
