//! Greedy sequential placement of `T` balls for ℓ2 perturbations.
//!
//! Each step scans every (training-point center, neighbor count `k`)
//! candidate, scores it by expansion overhead `|S_exp| - |S_init|`, and
//! commits the minimizer. Ball radii are exact k-th-nearest-neighbor
//! distances over the not-yet-covered points, so the final region always
//! reaches the `alpha` coverage target.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::metric::{distance_unchecked, Metric};
use crate::regions::{bu_advrisk, bu_risk, Ball, BallUnionRegion, Region};
use crate::theory::ConcentrationEstimate;
use crate::{Error, Result};

/// Configuration of the ℓ2 greedy search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct L2Config {
    pub alpha: f64,
    pub epsilon_2: f64,
    pub t_count: usize,
    pub seed: u64,
    /// Evaluate only every `stride`-th training point as a candidate ball
    /// center. 1 scans every center; anything larger is a smoke-run
    /// shortcut, not a faithful reproduction setting.
    pub center_stride: usize,
}

impl L2Config {
    pub fn new(alpha: f64, epsilon_2: f64, t_count: usize) -> Self {
        L2Config {
            alpha,
            epsilon_2,
            t_count,
            seed: 0,
            center_stride: 1,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0,1)"));
        }
        if self.epsilon_2 < 0.0 {
            return Err(Error::param("epsilon_2", "must be nonnegative"));
        }
        if self.t_count == 0 || self.center_stride == 0 {
            return Err(Error::param("t_count/center_stride", "must be at least 1"));
        }
        if coverage_target(self.alpha, m) == 0 {
            return Err(Error::param("alpha", "alpha * m must be at least 1"));
        }
        Ok(())
    }
}

/// `⌈alpha · m⌉` computed with a small guard against representation error
/// in the product (e.g. 0.1 * 100 evaluating just above 10).
pub fn coverage_target(alpha: f64, m: usize) -> usize {
    (alpha * m as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Mutable search state across greedy steps.
#[derive(Debug, Clone)]
pub struct GreedyState {
    pub chosen_balls: Vec<Ball>,
    pub covered_init: Vec<bool>,
    pub covered_exp: Vec<bool>,
    pub init_count: usize,
    pub exp_count: usize,
    /// 1-based index of the next step.
    pub step: usize,
}

impl GreedyState {
    pub fn new(m: usize) -> Self {
        GreedyState {
            chosen_balls: Vec::new(),
            covered_init: vec![false; m],
            covered_exp: vec![false; m],
            init_count: 0,
            exp_count: 0,
            step: 1,
        }
    }
}

/// Per-step neighbor-count bounds. Before the coverage target is met,
/// `k_lower` spreads the remaining deficit over the remaining steps and
/// `k_upper` is the full deficit; once the target is met both collapse
/// to 1 (a least-commitment one-point ball per remaining step).
pub fn k_bounds(state: &GreedyState, cfg: &L2Config, m: usize) -> (usize, usize) {
    let target = coverage_target(cfg.alpha, m);
    if state.init_count >= target {
        return (1, 1);
    }
    let need = target - state.init_count;
    let steps_left = cfg.t_count - state.step + 1;
    let k_lower = need.div_ceil(steps_left); // = ceil(need / steps_left)
    (k_lower.max(1), need)
}

/// Score of one `(center, k)` candidate.
#[derive(Debug, Clone)]
pub struct CandidateScore {
    pub overhead: i64,
    pub r_k: f64,
    pub s_init: Vec<usize>,
    pub s_exp: Vec<usize>,
}

/// Evaluates one candidate: `r_k` is the ℓ2 distance from the center to its
/// k-th nearest not-initially-covered point (the center participates if
/// uncovered), `s_init` the uncovered points within `r_k`, `s_exp` the
/// not-expansion-covered points within `r_k + ε2`. Returns `None` when
/// fewer than `k` uncovered points remain.
pub fn candidate_score(
    u_index: usize,
    k: usize,
    state: &GreedyState,
    ds: &Dataset,
    cfg: &L2Config,
) -> Option<CandidateScore> {
    let m = ds.m();
    let u = ds.point(u_index);
    let mut uncovered: Vec<(f64, usize)> = (0..m)
        .filter(|&i| !state.covered_init[i])
        .map(|i| (distance_unchecked(u, ds.point(i), Metric::L2), i))
        .collect();
    if uncovered.len() < k {
        return None;
    }
    uncovered.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let r_k = uncovered[k - 1].0;
    let s_init: Vec<usize> = uncovered
        .iter()
        .take_while(|&&(d, _)| d <= r_k)
        .map(|&(_, i)| i)
        .collect();
    let reach = r_k + cfg.epsilon_2;
    let mut s_exp: Vec<usize> = (0..m)
        .filter(|&i| {
            !state.covered_exp[i] && distance_unchecked(u, ds.point(i), Metric::L2) <= reach
        })
        .collect();
    s_exp.sort_unstable();
    Some(CandidateScore {
        overhead: s_exp.len() as i64 - s_init.len() as i64,
        r_k,
        s_init,
        s_exp,
    })
}

/// Best candidate of one center across the whole `k` range, count-only.
struct CenterBest {
    overhead: i64,
    exp_count: usize,
    center: usize,
    k: usize,
    r_k: f64,
}

fn scan_center(
    u_index: usize,
    (k_lower, k_upper): (usize, usize),
    state: &GreedyState,
    ds: &Dataset,
    cfg: &L2Config,
    dist_scratch: &mut Vec<f64>,
    exp_scratch: &mut Vec<f64>,
) -> Option<CenterBest> {
    let m = ds.m();
    let u = ds.point(u_index);
    dist_scratch.clear();
    for i in 0..m {
        if !state.covered_init[i] {
            dist_scratch.push(distance_unchecked(u, ds.point(i), Metric::L2));
        }
    }
    if dist_scratch.len() < k_lower {
        return None;
    }
    let k_hi = k_upper.min(dist_scratch.len());

    if k_lower == k_hi {
        // Single-k fast path: selection instead of a full sort.
        let k = k_lower;
        let (_, r_k, _) = dist_scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
        let r_k = *r_k;
        let init_count = dist_scratch.iter().filter(|&&d| d <= r_k).count();
        let reach = r_k + cfg.epsilon_2;
        let mut exp_count = 0usize;
        for i in 0..m {
            if !state.covered_exp[i]
                && distance_unchecked(u, ds.point(i), Metric::L2) <= reach
            {
                exp_count += 1;
            }
        }
        return Some(CenterBest {
            overhead: exp_count as i64 - init_count as i64,
            exp_count,
            center: u_index,
            k,
            r_k,
        });
    }

    dist_scratch.sort_unstable_by(f64::total_cmp);
    exp_scratch.clear();
    for i in 0..m {
        if !state.covered_exp[i] {
            exp_scratch.push(distance_unchecked(u, ds.point(i), Metric::L2));
        }
    }
    exp_scratch.sort_unstable_by(f64::total_cmp);

    let mut best: Option<CenterBest> = None;
    for k in k_lower..=k_hi {
        let r_k = dist_scratch[k - 1];
        let init_count = dist_scratch.partition_point(|&d| d <= r_k);
        let reach = r_k + cfg.epsilon_2;
        let exp_count = exp_scratch.partition_point(|&d| d <= reach);
        let overhead = exp_count as i64 - init_count as i64;
        let better = match &best {
            None => true,
            Some(b) => (overhead, exp_count, k) < (b.overhead, b.exp_count, b.k),
        };
        if better {
            best = Some(CenterBest {
                overhead,
                exp_count,
                center: u_index,
                k,
                r_k,
            });
        }
    }
    best
}

/// One step of the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub k_lower: usize,
    pub k_upper: usize,
    pub center: usize,
    pub k: usize,
    pub radius: f64,
    pub overhead: i64,
    pub cum_risk: f64,
    pub cum_advrisk: f64,
}

/// Scans all candidates and commits the overhead minimizer; ties break by
/// (smaller `|S_exp|`, smaller center index, smaller `k`).
pub fn greedy_step(state: &mut GreedyState, ds: &Dataset, cfg: &L2Config) -> Result<StepTrace> {
    use rayon::prelude::*;
    let m = ds.m();
    let (k_lower, k_upper) = k_bounds(state, cfg, m);
    let centers: Vec<usize> = (0..m).step_by(cfg.center_stride).collect();
    let per_center: Vec<Option<CenterBest>> = centers
        .par_iter()
        .map_init(
            || (Vec::with_capacity(m), Vec::with_capacity(m)),
            |(d, e), &u| scan_center(u, (k_lower, k_upper), state, ds, cfg, d, e),
        )
        .collect();
    // Sequential argmin over the per-center bests keeps the reduction
    // deterministic; the key includes the center index.
    let winner = per_center
        .into_iter()
        .flatten()
        .min_by_key(|c| (c.overhead, c.exp_count, c.center, c.k))
        .ok_or(Error::InsufficientUncovered {
            needed: k_lower,
            available: m - state.init_count,
        })?;

    let score = candidate_score(winner.center, winner.k, state, ds, cfg)
        .expect("winner was scored against the same state");
    debug_assert_eq!(score.s_exp.len(), winner.exp_count);
    for &i in &score.s_init {
        if !state.covered_init[i] {
            state.covered_init[i] = true;
            state.init_count += 1;
        }
    }
    for &i in &score.s_exp {
        if !state.covered_exp[i] {
            state.covered_exp[i] = true;
            state.exp_count += 1;
        }
    }
    state
        .chosen_balls
        .push(Ball::new(ds.point(winner.center).to_vec(), winner.r_k)?);
    let trace = StepTrace {
        step: state.step,
        k_lower,
        k_upper,
        center: winner.center,
        k: winner.k,
        radius: winner.r_k,
        overhead: winner.overhead,
        cum_risk: state.init_count as f64 / m as f64,
        cum_advrisk: state.exp_count as f64 / m as f64,
    };
    state.step += 1;
    Ok(trace)
}

/// Full greedy run with per-step trace, evaluated on both splits.
pub fn run_traced(
    ds_train: &Dataset,
    ds_test: &Dataset,
    cfg: &L2Config,
) -> Result<(ConcentrationEstimate, Vec<StepTrace>)> {
    cfg.validate(ds_train.m())?;
    if ds_train.n() != ds_test.n() {
        return Err(Error::DimensionMismatch {
            expected: ds_train.n(),
            got: ds_test.n(),
        });
    }
    let m = ds_train.m();
    let mut state = GreedyState::new(m);
    let mut trace = Vec::with_capacity(cfg.t_count);
    for _ in 0..cfg.t_count {
        trace.push(greedy_step(&mut state, ds_train, cfg)?);
    }
    let region = BallUnionRegion::new(state.chosen_balls.clone(), cfg.epsilon_2)?;
    let risk_train = state.init_count as f64 / m as f64;
    let advrisk_train = state.exp_count as f64 / m as f64;
    // The accumulated covered sets must equal a fresh evaluation of the
    // final region; a mismatch means the bookkeeping drifted.
    assert_eq!(bu_risk(&region, ds_train)?, risk_train);
    assert_eq!(bu_advrisk(&region, ds_train)?, advrisk_train);
    let estimate = ConcentrationEstimate {
        alpha: cfg.alpha,
        epsilon: cfg.epsilon_2,
        metric: Metric::L2,
        t_count: cfg.t_count,
        risk_train,
        risk_test: bu_risk(&region, ds_test)?,
        advrisk_train,
        advrisk_test: bu_advrisk(&region, ds_test)?,
        region: Region::BallUnion(region),
        restart_mean: None,
        restart_stddev: None,
    };
    Ok((estimate, trace))
}

/// Full greedy run: `T` steps of [`greedy_step`].
pub fn run(ds_train: &Dataset, ds_test: &Dataset, cfg: &L2Config) -> Result<ConcentrationEstimate> {
    run_traced(ds_train, ds_test, cfg).map(|(est, _)| est)
}

/// Per-step trace as CSV.
pub fn trace_to_csv(trace: &[StepTrace]) -> String {
    let mut out =
        String::from("step,k_lower,k_upper,center,k,radius,overhead,cum_risk,cum_advrisk\n");
    for s in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.step, s.k_lower, s.k_upper, s.center, s.k, s.radius, s.overhead, s.cum_risk,
            s.cum_advrisk
        ));
    }
    out
}
