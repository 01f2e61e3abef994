//! Shared fixtures for the benchmarks: seeded blob datasets and warm
//! parameter relations so each measured iteration starts from the same
//! state instead of a random one.

use mixql::models::{train_gmm, GmmComponent, GmmParams, InitStrategy, TrainConfig};
use mixql::relation::Relation;
use mixql::types::Matrix;

/// `n` points around `k` well-spread centers in `d` dimensions, plus a
/// warm parameter relation sitting on the generator's ground truth —
/// equal priors, true centers, isotropic unit covariance.
pub fn gmm_fixture(n: usize, d: usize, k: usize, seed: u64) -> (Relation, Relation) {
    let data = mixql::synth::gaussian_blobs(n, d, k, seed, 0.0, 10.0 * k as f64, 1.0);
    let centers = mixql::synth::blob_centers(d, k, seed, 0.0, 10.0 * k as f64);
    let params = GmmParams {
        components: centers
            .into_iter()
            .enumerate()
            .map(|(i, mean)| GmmComponent {
                k: i as i64 + 1,
                pie: 1.0 / k as f64,
                mean,
                cov: Matrix::identity(d),
            })
            .collect(),
    };
    (data, params.to_relation())
}

/// One EM iteration through the full engine pipeline from the warm start.
pub fn one_iteration(data: &Relation, init: &Relation) -> GmmParams {
    let k = init.len();
    let mut cfg = TrainConfig::new(k, 1, 0);
    cfg.init = InitStrategy::Provided(init.clone());
    train_gmm(data, &cfg).expect("benchmark fixture trains").params
}

/// The same relation with every `id` shifted, so a generated batch can be
/// inserted into a generated table without colliding ids.
pub fn offset_ids(rel: &Relation, by: i64) -> Relation {
    let idx = rel.schema().resolve(None, "id").expect("fixtures carry an id");
    let rows = rel
        .rows()
        .iter()
        .map(|row| {
            let mut row = row.clone();
            let id = row[idx].as_int().expect("ids are integers");
            row[idx] = mixql::types::Value::Int(id + by);
            row
        })
        .collect();
    Relation::new(rel.schema().clone(), rows).expect("shifting ids preserves the schema")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sizes_match_the_request() {
        let (data, init) = gmm_fixture(50, 3, 4, 1);
        assert_eq!(data.len(), 50);
        assert_eq!(init.len(), 4);
        let params = one_iteration(&data, &init);
        assert_eq!(params.component_count(), 4);
        assert_eq!(params.dim(), 3);
    }

    #[test]
    fn offset_ids_shifts_only_the_id_column() {
        let (data, _) = gmm_fixture(3, 2, 1, 5);
        let shifted = offset_ids(&data, 100);
        for (a, b) in data.rows().iter().zip(shifted.rows()) {
            assert_eq!(a[0].as_int().unwrap() + 100, b[0].as_int().unwrap());
            assert_eq!(a[1..], b[1..]);
        }
    }
}
