//! Golden statements exercised by unit, property, and integration tests.
//!
//! These are small canonical programs in the dialect: the edge transitive
//! closure, an unbounded counter that only the iteration bound stops, and
//! a Gaussian-mixture trainer in the classic shape (responsibilities via a
//! window function, moment re-estimation via grouped aggregates, variance
//! via a derived table of squared deviations).

/// Transitive closure of an edge relation `e(f, t)`; no explicit final
/// select, so the statement reads the settled relation.
pub const TC_TEXT: &str = "\
with tc(f, t) as (
  (select f, t from e)
  union all
  (select tc.f, e.t from tc, e where tc.t = e.f))
";

/// Counter with an infinite fixpoint; terminates only via the bound.
pub const COUNTER_TEXT: &str =
    "with r(n) as ((select 0) union all (select n + 1 from r) maxrecursion 5)";

/// One-dimensional Gaussian-mixture trainer. `pie / n` deliberately
/// references a count column that no block provides; the statement parses,
/// validates, and lowers, and the missing column surfaces only if the plan
/// is evaluated. Runnable variants ship as the model script assets.
pub const GMM_FIG_TEXT: &str = "\
with gmm(k, pie, mean, cov) as (
  (select k, pie, mean, cov from init_para)
  union by update k
  (select n.k, pie / n, mean, sqrt(cov / pie)
   from n, c where n.k = c.k
   computed by
     r(id, k, p) as select id, k, norm(x, mean, cov) * pie /
         (sum(norm(x, mean, cov) * pie) over (partition by id))
       from gmm, x
     n(k, pie, mean) as select k, sum(p), sum(p * x) / sum(p)
       from r, x where r.id = x.id
       group by k
     c(k, cov) as select r.k, sum(p * t.val)
       from (select id, k, pow(x - mean) as val from x, n) as t, r
       where t.id = r.id and t.k = r.k
       group by r.k)
  maxrecursion 10)
select * from gmm
";
