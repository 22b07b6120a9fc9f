//! Heuristic search for a robust error region in the family of
//! rectangle-union complements under ℓ∞ perturbations.
//!
//! Pipeline: sort points by ℓ1 distance to the k-th nearest neighbor
//! (densest first), binary-search the covered fraction `q`, cluster the
//! top-`⌊q·m⌋` densest points into `T` groups under ℓ1, cover each group
//! with its minimal centered rectangle, and keep the feasible probe with
//! minimal adversarial risk.

use serde::{Deserialize, Serialize};

use crate::cluster::kmeans_l1;
use crate::data::Dataset;
use crate::metric::{knn_table, KnnTable, Metric, MetricTree};
use crate::regions::{bounding_rect, cr_advrisk_bound, cr_risk, RectComplementRegion};
use crate::{Error, Result};

/// Configuration of the ℓ∞ search. Defaults match the reference experiment
/// settings: `k_density = 50`, `delta_bin = 0.005`, 30 clustering
/// iterations, 10 restarts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinfConfig {
    pub alpha: f64,
    pub epsilon_inf: f64,
    pub t_count: usize,
    pub k_density: usize,
    pub delta_bin: f64,
    pub kmeans_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl LinfConfig {
    pub fn new(alpha: f64, epsilon_inf: f64, t_count: usize) -> Self {
        LinfConfig {
            alpha,
            epsilon_inf,
            t_count,
            k_density: 50,
            delta_bin: 0.005,
            kmeans_iters: 30,
            restarts: 10,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0,1)"));
        }
        if self.epsilon_inf < 0.0 {
            return Err(Error::param("epsilon_inf", "must be nonnegative"));
        }
        if self.t_count == 0 {
            return Err(Error::param("t_count", "must be at least 1"));
        }
        if !(self.delta_bin > 0.0 && self.delta_bin < 1.0) {
            return Err(Error::param("delta_bin", "must lie in (0,1)"));
        }
        if self.kmeans_iters == 0 || self.restarts == 0 {
            return Err(Error::param("iters/restarts", "must be at least 1"));
        }
        Ok(())
    }
}

/// One binary-search probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub q: f64,
    pub feasible: bool,
    pub risk: f64,
    pub advrisk: f64,
    pub region: RectComplementRegion,
}

/// Search outcome of one restart (or of the full restarted run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinfResult {
    pub best_q: f64,
    pub region: RectComplementRegion,
    pub risk_train: f64,
    pub advrisk_train: f64,
    pub risk_test: Option<f64>,
    pub advrisk_test: Option<f64>,
    pub probes: Vec<ProbeRecord>,
    pub restart_mean: Option<f64>,
    pub restart_stddev: Option<f64>,
}

/// Point indices sorted ascending by ℓ1 distance to the k-th nearest
/// neighbor (self excluded); densest neighborhoods first, ties by index.
pub fn density_order(ds: &Dataset, k_density: usize) -> Result<Vec<usize>> {
    let tree = MetricTree::build(ds, Metric::L1);
    let table = knn_table(&tree, k_density)?;
    Ok(order_from_table(&table))
}

/// As [`density_order`] but from a precomputed (possibly cached) table.
pub fn order_from_table(table: &KnnTable) -> Vec<usize> {
    let r_k: Vec<f64> = table
        .entries
        .iter()
        .map(|row| row.last().map(|&(_, d)| d).unwrap_or(0.0))
        .collect();
    let mut order: Vec<usize> = (0..r_k.len()).collect();
    order.sort_unstable_by(|&a, &b| r_k[a].total_cmp(&r_k[b]).then(a.cmp(&b)));
    order
}

/// Builds and evaluates the region for one probe value `q`: cluster the top
/// `⌊q·m⌋` densest points, cover each nonempty cluster with its minimal
/// centered rectangle, and measure risk (vs expanded rectangles) and the
/// adversarial-risk bound (vs base rectangles) on `ds`.
///
/// When `⌊q·m⌋ < T` there are too few points to cluster; the probe is
/// recorded with an empty rectangle set (region = everything, risk 1).
pub fn region_for_q(
    ds: &Dataset,
    order: &[usize],
    q: f64,
    cfg: &LinfConfig,
    seed: u64,
) -> Result<ProbeRecord> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", "must lie in [0,1]"));
    }
    let covered = (q * ds.m() as f64).floor() as usize;
    let region = if covered < cfg.t_count {
        RectComplementRegion::new(Vec::new(), cfg.epsilon_inf)?
    } else {
        let subset: Vec<&[f64]> = order[..covered].iter().map(|&i| ds.point(i)).collect();
        let clustering = kmeans_l1(&subset, cfg.t_count, cfg.kmeans_iters, seed)?;
        let mut rects = Vec::with_capacity(cfg.t_count);
        for (id, centroid) in clustering.centroids.iter().enumerate() {
            let members: Vec<&[f64]> = subset
                .iter()
                .zip(&clustering.assignment)
                .filter(|&(_, &c)| c == id)
                .map(|(&p, _)| p)
                .collect();
            if members.is_empty() {
                // An empty cluster contributes no rectangle.
                continue;
            }
            rects.push(bounding_rect(&members, centroid)?);
        }
        RectComplementRegion::new(rects, cfg.epsilon_inf)?
    };
    let risk = cr_risk(&region, ds)?;
    let advrisk = cr_advrisk_bound(&region, ds)?;
    Ok(ProbeRecord {
        q,
        feasible: risk >= cfg.alpha,
        risk,
        advrisk,
        region,
    })
}

fn search_with_order(
    ds: &Dataset,
    order: &[usize],
    cfg: &LinfConfig,
    seed: u64,
) -> Result<LinfResult> {
    let mut q_lower = 0.0_f64;
    let mut q_upper = 1.0_f64;
    let mut probes: Vec<ProbeRecord> = Vec::new();
    while q_upper - q_lower > cfg.delta_bin {
        let q = (q_lower + q_upper) / 2.0;
        let probe = region_for_q(ds, order, q, cfg, seed)?;
        if probe.feasible {
            q_lower = q;
        } else {
            q_upper = q;
        }
        probes.push(probe);
    }
    // Argmin over all feasible probes, not just the last: feasibility is
    // only heuristically monotone in q.
    let best = probes
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| a.advrisk.total_cmp(&b.advrisk).then(a.q.total_cmp(&b.q)));
    let best = match best {
        Some(p) => p.clone(),
        None => region_for_q(ds, order, 0.0, cfg, seed)?,
    };
    Ok(LinfResult {
        best_q: best.q,
        region: best.region,
        risk_train: best.risk,
        advrisk_train: best.advrisk,
        risk_test: None,
        advrisk_test: None,
        probes,
        restart_mean: None,
        restart_stddev: None,
    })
}

/// Single-restart search: density ordering plus bisection over `q`.
pub fn binary_search_q(ds: &Dataset, cfg: &LinfConfig) -> Result<LinfResult> {
    cfg.validate()?;
    let order = density_order(ds, cfg.k_density)?;
    search_with_order(ds, &order, cfg, cfg.seed)
}

/// Full run: repeats the search over `restarts` derived seeds
/// (restart `i` uses `seed ^ i`), keeps the restart with minimal train
/// adversarial risk, and evaluates the winning region on the test split.
pub fn run(ds_train: &Dataset, ds_test: &Dataset, cfg: &LinfConfig) -> Result<LinfResult> {
    cfg.validate()?;
    let order = density_order(ds_train, cfg.k_density)?;
    run_restarts(ds_train, ds_test, cfg, &order)
}

/// As [`run`] but reusing a precomputed (possibly cached) ℓ1 k-NN table.
pub fn run_with_table(
    ds_train: &Dataset,
    ds_test: &Dataset,
    cfg: &LinfConfig,
    table: &KnnTable,
) -> Result<LinfResult> {
    cfg.validate()?;
    if table.metric != Metric::L1
        || table.k != cfg.k_density
        || table.entries.len() != ds_train.m()
    {
        return Err(Error::param(
            "table",
            "k-NN table does not match the dataset or config (need l1, same k and m)",
        ));
    }
    let order = order_from_table(table);
    run_restarts(ds_train, ds_test, cfg, &order)
}

fn run_restarts(
    ds_train: &Dataset,
    ds_test: &Dataset,
    cfg: &LinfConfig,
    order: &[usize],
) -> Result<LinfResult> {
    if ds_train.n() != ds_test.n() {
        return Err(Error::DimensionMismatch {
            expected: ds_train.n(),
            got: ds_test.n(),
        });
    }
    use rayon::prelude::*;
    let results: Vec<LinfResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| search_with_order(ds_train, order, cfg, cfg.seed ^ i as u64))
        .collect::<Result<_>>()?;
    let advrisks: Vec<f64> = results.iter().map(|r| r.advrisk_train).collect();
    let mean = advrisks.iter().sum::<f64>() / advrisks.len() as f64;
    let var = advrisks.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
        / advrisks.len() as f64;
    let winner = (0..results.len())
        .min_by(|&a, &b| {
            advrisks[a].total_cmp(&advrisks[b]).then(a.cmp(&b))
        })
        .unwrap();
    let mut best = results[winner].clone();
    best.risk_test = Some(cr_risk(&best.region, ds_test)?);
    best.advrisk_test = Some(cr_advrisk_bound(&best.region, ds_test)?);
    best.restart_mean = Some(mean);
    best.restart_stddev = Some(var.sqrt());
    Ok(best)
}

/// Probe log as CSV, the raw material for risk/advrisk-vs-q curves.
pub fn probes_to_csv(probes: &[ProbeRecord]) -> String {
    let mut out = String::from("q,feasible,risk,advrisk\n");
    for p in probes {
        out.push_str(&format!("{},{},{},{}\n", p.q, p.feasible, p.risk, p.advrisk));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_mixture, Dataset};
    use crate::metric::knn_brute_force;

    fn ds1(xs: &[f64]) -> Dataset {
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), "t").unwrap()
    }

    #[test]
    fn density_order_forced_by_pairwise_distances() {
        let ds = ds1(&[0.0, 0.1, 5.0]);
        assert_eq!(density_order(&ds, 1).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn density_order_identical_points_is_identity() {
        let ds = ds1(&[0.5; 6]);
        assert_eq!(density_order(&ds, 2).unwrap(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn density_order_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..100 {
            let m = rng.gen_range(5..30);
            let k = rng.gen_range(1..m.min(5));
            let pts: Vec<Vec<f64>> = (0..m)
                .map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()])
                .collect();
            let ds = Dataset::from_rows(pts, format!("trial{trial}")).unwrap();
            let got = density_order(&ds, k).unwrap();
            let mut r_k = Vec::with_capacity(m);
            for i in 0..ds.m() {
                let mut mask = vec![false; m];
                mask[i] = true;
                let nn = knn_brute_force(&ds, ds.point(i), k, Metric::L1, Some(&mask)).unwrap();
                r_k.push(nn.last().unwrap().1);
            }
            let mut want: Vec<usize> = (0..m).collect();
            want.sort_by(|&a, &b| r_k[a].total_cmp(&r_k[b]).then(a.cmp(&b)));
            assert_eq!(got, want);
        }
    }

    #[test]
    fn density_order_k_too_large() {
        let ds = ds1(&[0.0, 1.0]);
        assert!(density_order(&ds, 2).is_err());
    }

    #[test]
    fn probe_q_zero_is_the_whole_space() {
        let ds = ds1(&[0.0, 0.5, 1.0]);
        let cfg = LinfConfig::new(0.25, 0.05, 1);
        let order = density_order(&ds, 1).unwrap();
        let p = region_for_q(&ds, &order, 0.0, &cfg, 0).unwrap();
        assert_eq!((p.risk, p.advrisk), (1.0, 1.0));
        assert!(p.feasible);
        assert!(p.region.base_rects.is_empty());
    }

    #[test]
    fn probe_q_one_single_rect_covers_everything() {
        let ds = ds1(&[0.0, 0.3, 0.6, 1.0]);
        let mut cfg = LinfConfig::new(0.25, 0.0, 1);
        cfg.k_density = 1;
        let order = density_order(&ds, 1).unwrap();
        let p = region_for_q(&ds, &order, 1.0, &cfg, 0).unwrap();
        assert_eq!((p.risk, p.advrisk), (0.0, 0.0));
        assert!(!p.feasible);
    }

    #[test]
    fn probe_hand_checked_two_cluster_instance() {
        // Top 6 dense points split into {0, 0.1, 0.2} and {0.8, 0.9, 1.0};
        // expanded rects [-0.05, 0.25] and [0.75, 1.05] leave only 0.5
        // outside: risk 1/7, infeasible at alpha = 0.25.
        let ds = ds1(&[0.0, 0.1, 0.2, 0.5, 0.8, 0.9, 1.0]);
        let mut cfg = LinfConfig::new(0.25, 0.05, 2);
        cfg.k_density = 2;
        let order = density_order(&ds, 2).unwrap();
        assert!(!order[..6].contains(&3));
        let q = 6.0 / 7.0;
        let p = region_for_q(&ds, &order, q, &cfg, 0).unwrap();
        assert!((p.risk - 1.0 / 7.0).abs() < 1e-12);
        assert!(!p.feasible);
    }

    #[test]
    fn bisection_probe_count() {
        let ds = ds1(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        let mut cfg = LinfConfig::new(0.3, 0.01, 1);
        cfg.k_density = 1;
        let res = binary_search_q(&ds, &cfg).unwrap();
        assert_eq!(res.probes.len(), 8); // ceil(log2(1/0.005))
    }

    #[test]
    fn all_feasible_converges_high() {
        // alpha tiny and a point rect far from covering much: every probe
        // with covered >= T stays feasible.
        let ds = ds1(&[0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0]);
        let mut cfg = LinfConfig::new(0.05, 0.0, 1);
        cfg.k_density = 1;
        let res = binary_search_q(&ds, &cfg).unwrap();
        let feasible_max = res
            .probes
            .iter()
            .filter(|p| p.feasible)
            .map(|p| p.q)
            .fold(0.0, f64::max);
        assert!(feasible_max >= 1.0 - 2.0 * cfg.delta_bin);
    }

    #[test]
    fn end_to_end_two_cluster_mixture() {
        let centers = vec![vec![0.0, 0.0], vec![5.0, 5.0]];
        let ds = gen_mixture(&centers, &[0.5, 0.5], 0.1, 400, 3).unwrap();
        let (train, test) = crate::data::split(
            &ds,
            crate::data::SplitSpec { train_fraction: 0.5, seed: 1 },
        )
        .unwrap();
        let mut cfg = LinfConfig::new(0.05, 0.05, 2);
        cfg.k_density = 10;
        cfg.restarts = 3;
        let res = run(&train, &test, &cfg).unwrap();
        assert!(res.risk_train >= cfg.alpha);
        assert!(res.advrisk_train >= res.risk_train);
        assert!(res.advrisk_test.unwrap() >= 0.0);
        // Exhaustive sweep over the probe grid as the oracle.
        let order = density_order(&train, cfg.k_density).unwrap();
        let mut oracle_best = f64::INFINITY;
        let steps = (1.0 / cfg.delta_bin) as usize;
        for i in 0..=steps {
            let q = i as f64 * cfg.delta_bin;
            for r in 0..cfg.restarts {
                let p = region_for_q(&train, &order, q, &cfg, cfg.seed ^ r as u64).unwrap();
                if p.feasible {
                    oracle_best = oracle_best.min(p.advrisk);
                }
            }
        }
        assert!((res.advrisk_train - oracle_best).abs() <= 0.02);
    }

    #[test]
    fn deterministic_across_repeats() {
        let ds = gen_mixture(&[vec![0.0], vec![3.0]], &[0.5, 0.5], 0.2, 100, 9).unwrap();
        let mut cfg = LinfConfig::new(0.1, 0.02, 2);
        cfg.k_density = 5;
        cfg.restarts = 4;
        let a = run(&ds, &ds, &cfg).unwrap();
        let b = run(&ds, &ds, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn eps_zero_collapse_on_result() {
        let ds = gen_mixture(&[vec![0.0], vec![3.0]], &[0.5, 0.5], 0.2, 80, 2).unwrap();
        let mut cfg = LinfConfig::new(0.1, 0.0, 2);
        cfg.k_density = 5;
        cfg.restarts = 2;
        let res = run(&ds, &ds, &cfg).unwrap();
        assert_eq!(res.risk_train, res.advrisk_train);
    }
}
