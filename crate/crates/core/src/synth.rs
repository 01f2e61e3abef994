//! Seeded synthetic data generators.
//!
//! Both generators are deterministic functions of their arguments: the
//! same seed always produces the same relation, which is what lets tests
//! freeze expected values and the CLI reproduce a dataset on demand.

use crate::relation::Relation;
use crate::types::{AttrType, Schema, Value};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Component centers used by [`gaussian_blobs`], drawn uniformly from
/// `[lo, hi]^d`.
pub fn blob_centers(d: usize, k: usize, seed: u64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(lo, hi);
    (0..k)
        .map(|_| (0..d).map(|_| dist.sample(&mut rng)).collect())
        .collect()
}

/// `n` points in `d` dimensions around `k` centers with isotropic noise of
/// standard deviation `sigma`. Points are assigned to components round
/// robin, so component sizes differ by at most one. Output attributes:
/// `id` (0-based), `x` (the point), `label` (the generating component).
pub fn gaussian_blobs(
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    sigma: f64,
) -> Relation {
    assert!(d > 0 && k > 0, "need at least one dimension and one component");
    let centers = blob_centers(d, k, seed, lo, hi);
    // A distinct stream for the noise keeps points independent of how many
    // centers were drawn.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let schema = Schema::from_pairs(&[
        ("id", AttrType::Int),
        ("x", AttrType::Vector(d)),
        ("label", AttrType::Int),
    ]);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let x: Vec<f64> = centers[c]
            .iter()
            .map(|&m| m + sigma * standard_normal(&mut rng))
            .collect();
        rows.push(vec![Value::Int(i as i64), Value::Vector(x), Value::Int(c as i64)]);
    }
    Relation::new(schema, rows).expect("generated rows match the generated schema")
}

/// Per-component coefficient vectors used by [`linear_mixture`], drawn
/// uniformly from `[lo, hi]^d`.
pub fn mixture_betas(d: usize, k: usize, seed: u64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(lo, hi);
    (0..k)
        .map(|_| (0..d).map(|_| dist.sample(&mut rng)).collect())
        .collect()
}

/// How [`linear_mixture`] assigns points to components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    /// Round robin on the point index — component independent of `x`.
    RoundRobin,
    /// By equal-width slices of the first non-intercept feature, so a
    /// gating function of `x` can actually separate the components.
    ByFirstFeature,
}

/// `n` regression points from `k` linear components. Each point has
/// `x = [1, u_1, …, u_{d-1}]` (intercept first) with the `u_j` uniform on
/// `[lo, hi]` — the same range the coefficients are drawn from — and
/// `y = β_c · x + ε` with `ε ~ N(0, noise_sd²)`.
/// Output attributes: `id`, `x`, `y`, `label`.
#[allow(clippy::too_many_arguments)]
pub fn linear_mixture(
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    noise_sd: f64,
    assignment: Assignment,
) -> Relation {
    assert!(d >= 2 && k > 0, "need an intercept plus one feature, and a component");
    let betas = mixture_betas(d, k, seed, lo, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let feature = Uniform::new_inclusive(lo, hi);
    let schema = Schema::from_pairs(&[
        ("id", AttrType::Int),
        ("x", AttrType::Vector(d)),
        ("y", AttrType::Real),
        ("label", AttrType::Int),
    ]);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = vec![1.0];
        x.extend((1..d).map(|_| feature.sample(&mut rng)));
        let c = match assignment {
            Assignment::RoundRobin => i % k,
            Assignment::ByFirstFeature => {
                let t = (x[1] - lo) / (hi - lo);
                ((t * k as f64) as usize).min(k - 1)
            }
        };
        let y: f64 = betas[c].iter().zip(&x).map(|(b, v)| b * v).sum::<f64>()
            + noise_sd * standard_normal(&mut rng);
        rows.push(vec![
            Value::Int(i as i64),
            Value::Vector(x),
            Value::Real(y),
            Value::Int(c as i64),
        ]);
    }
    Relation::new(schema, rows).expect("generated rows match the generated schema")
}

/// Box–Muller standard normal draw. Two uniforms per call keeps the
/// stream's consumption pattern independent of rejection luck.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
