//! Ground truth at desk scale: exhaustive optimizers over the restricted
//! families on tiny datasets, grid-based ε-expansion measures in low
//! dimension, and closed-form concentration for 1-D uniform and Gaussian
//! distributions.
//!
//! Every function here is deliberately small-m/small-n and guarded; the
//! point is certified reference values for the heuristic searches, not
//! scale.

use serde::Serialize;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::metric::{distance_unchecked, Metric};
use crate::regions::{
    Ball, BallUnionRegion, Hyperrectangle, RectComplementRegion, Region,
};
use crate::{Error, Result};

/// Exact solution of the empirical restricted problem.
#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub optimal_risk: f64,
    pub optimal_advrisk: f64,
    pub optimal_region: Region,
    pub candidates_examined: usize,
}

const MAX_ORACLE_M: usize = 200;

/// Fixed-width bitset over at most [`MAX_ORACLE_M`] points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Mask([u64; 4]);

impl Mask {
    fn empty() -> Self {
        Mask([0; 4])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn union(self, other: Mask) -> Mask {
        let mut out = self;
        for (w, o) in out.0.iter_mut().zip(other.0) {
            *w |= o;
        }
        out
    }
    fn count(self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

fn ceil_target(alpha: f64, m: usize) -> usize {
    (alpha * m as f64 - 1e-9).ceil().max(0.0) as usize
}

/// One single-ball candidate with precomputed coverage bitsets.
struct BallCandidate {
    center: usize,
    radius: f64,
    init: Mask,
    init_count: usize,
    exp: Mask,
    exp_count: usize,
    /// Position in the lexicographic (center, radius) enumeration.
    lex: usize,
}

fn ball_candidates(ds: &Dataset, eps2: f64) -> Vec<BallCandidate> {
    let m = ds.m();
    let mut out = Vec::new();
    let mut lex = 0;
    for u in 0..m {
        let dists: Vec<f64> = (0..m)
            .map(|i| distance_unchecked(ds.point(u), ds.point(i), Metric::L2))
            .collect();
        let mut radii = dists.clone();
        radii.sort_unstable_by(f64::total_cmp);
        radii.dedup();
        for r in radii {
            let mut init = Mask::empty();
            let mut exp = Mask::empty();
            for (i, &d) in dists.iter().enumerate() {
                if d <= r {
                    init.set(i);
                }
                if d <= r + eps2 {
                    exp.set(i);
                }
            }
            out.push(BallCandidate {
                center: u,
                radius: r,
                init_count: init.count(),
                init,
                exp_count: exp.count(),
                exp,
                lex,
            });
            lex += 1;
        }
    }
    out
}

/// Exhaustive minimizer of the expanded measure over unions of `T` balls
/// with data-point centers and exact neighbor-distance radii, subject to
/// base measure at least `alpha`. `T ∈ {1, 2}`, `m ≤ 200`.
///
/// Ties break by the lexicographic (center index, radius) candidate order;
/// for pairs, by the ordered pair of candidate positions. A single feasible
/// ball also counts as a `T = 2` solution (a ball may be duplicated).
pub fn brute_force_balls(ds: &Dataset, alpha: f64, eps2: f64, t: usize) -> Result<OracleResult> {
    if !(1..=2).contains(&t) {
        return Err(Error::OracleGuard(format!("T = {t} outside {{1, 2}}")));
    }
    if ds.m() > MAX_ORACLE_M {
        return Err(Error::OracleGuard(format!(
            "m = {} exceeds the oracle guard {MAX_ORACLE_M}",
            ds.m()
        )));
    }
    if eps2 < 0.0 {
        return Err(Error::param("eps2", "must be nonnegative"));
    }
    let m = ds.m();
    let target = ceil_target(alpha, m);
    let cands = ball_candidates(ds, eps2);
    let mut examined = 0usize;

    // Singles first: every feasible single ball is also a T = 2 solution.
    // Incumbent fields: (adv count, risk count, lex key, candidate indices).
    type Incumbent = (usize, usize, (usize, usize), Vec<usize>);
    let mut best: Option<Incumbent> = None;
    for (ci, c) in cands.iter().enumerate() {
        examined += 1;
        if c.init_count < target {
            continue;
        }
        let key = (c.exp_count, (c.lex, c.lex));
        if best.as_ref().is_none_or(|b| key < (b.0, b.2)) {
            best = Some((c.exp_count, c.init_count, key.1, vec![ci]));
        }
    }

    if t == 2 {
        // Ascending-expansion order allows pruning: a union's expanded
        // count is at least the larger member's, so once the later member
        // alone exceeds the incumbent the rest of the scan is hopeless.
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by_key(|&i| (cands[i].exp_count, cands[i].lex));
        'outer: for (pi, &i) in order.iter().enumerate() {
            let a = &cands[i];
            if let Some(b) = &best {
                if a.exp_count > b.0 {
                    break 'outer;
                }
            }
            for &j in &order[pi..] {
                let b2 = &cands[j];
                if let Some(b) = &best {
                    if b2.exp_count > b.0 {
                        break;
                    }
                }
                examined += 1;
                if a.init.union(b2.init).count() < target {
                    continue;
                }
                let adv = a.exp.union(b2.exp).count();
                let lexkey = (a.lex.min(b2.lex), a.lex.max(b2.lex));
                let key = (adv, lexkey);
                if best.as_ref().is_none_or(|b| key < (b.0, b.2)) {
                    let risk = a.init.union(b2.init).count();
                    best = Some((adv, risk, lexkey, vec![i, j]));
                }
            }
        }
    }

    let (adv, risk, _, idxs) = best.ok_or(Error::Infeasible { alpha })?;
    let mut balls = Vec::new();
    for &ci in &idxs {
        let c = &cands[ci];
        let ball = Ball::new(ds.point(c.center).to_vec(), c.radius)?;
        if !balls.contains(&ball) {
            balls.push(ball);
        }
    }
    Ok(OracleResult {
        optimal_risk: risk as f64 / m as f64,
        optimal_advrisk: adv as f64 / m as f64,
        optimal_region: Region::BallUnion(BallUnionRegion::new(balls, eps2)?),
        candidates_examined: examined,
    })
}

/// Candidate interval on one axis with coverage bitsets against the base
/// and the ε-expanded rectangle side.
struct AxisInterval {
    lo: f64,
    hi: f64,
    base: Mask,
    exp: Mask,
}

fn axis_intervals(coords: &[f64], eps: f64) -> Vec<AxisInterval> {
    // The base count changes at data coordinates and the expanded count at
    // their ±ε shifts; midpoints of consecutive breakpoints realize every
    // open-interval (strict-exclusion) combination.
    let mut breaks: Vec<f64> = Vec::with_capacity(coords.len() * 3);
    for &x in coords {
        breaks.push(x);
        breaks.push(x - eps);
        breaks.push(x + eps);
    }
    breaks.sort_unstable_by(f64::total_cmp);
    breaks.dedup();
    let mut faces = breaks.clone();
    for w in breaks.windows(2) {
        faces.push((w[0] + w[1]) / 2.0);
    }
    faces.sort_unstable_by(f64::total_cmp);
    faces.dedup();

    let mut out = Vec::new();
    let mut seen: std::collections::HashSet<(Mask, Mask)> = std::collections::HashSet::new();
    for (a, &lo) in faces.iter().enumerate() {
        for &hi in &faces[a..] {
            let mut base = Mask::empty();
            let mut exp = Mask::empty();
            for (i, &x) in coords.iter().enumerate() {
                if lo <= x && x <= hi {
                    base.set(i);
                }
                if lo - eps <= x && x <= hi + eps {
                    exp.set(i);
                }
            }
            if seen.insert((base, exp)) {
                out.push(AxisInterval { lo, hi, base, exp });
            }
        }
    }
    out
}

/// Exhaustive minimizer of the base-rectangle exclusion bound over single
/// axis-aligned rectangles, subject to expanded-rectangle exclusion at
/// least `alpha`: the region semantics of the rectangle-complement family.
/// `n ≤ 3`, `m ≤ 200`. Candidate faces are data coordinates, their ±ε
/// shifts, and midpoints between consecutive breakpoints, which is
/// sufficient because both counts are piecewise constant in each face.
pub fn brute_force_rects(ds: &Dataset, alpha: f64, eps_inf: f64) -> Result<OracleResult> {
    if ds.n() > 3 {
        return Err(Error::OracleGuard(format!("n = {} exceeds the oracle guard 3", ds.n())));
    }
    if ds.m() > MAX_ORACLE_M {
        return Err(Error::OracleGuard(format!(
            "m = {} exceeds the oracle guard {MAX_ORACLE_M}",
            ds.m()
        )));
    }
    if eps_inf < 0.0 {
        return Err(Error::param("eps_inf", "must be nonnegative"));
    }
    let (m, n) = (ds.m(), ds.n());
    let target = ceil_target(alpha, m);
    let per_axis: Vec<Vec<AxisInterval>> = (0..n)
        .map(|j| {
            let coords: Vec<f64> = (0..m).map(|i| ds.point(i)[j]).collect();
            axis_intervals(&coords, eps_inf)
        })
        .collect();

    let full = {
        let mut f = Mask::empty();
        for i in 0..m {
            f.set(i);
        }
        f
    };
    let mut examined = 0usize;
    let mut best: Option<(usize, usize, Vec<usize>)> = None; // (adv, risk, interval choice)
    let mut choice = vec![0usize; n];
    // Nested product over per-axis intervals; fine for the guarded sizes.
    loop {
        let mut base = full;
        let mut exp = full;
        for (j, &c) in choice.iter().enumerate() {
            let iv = &per_axis[j][c];
            base = Mask(std::array::from_fn(|w| base.0[w] & iv.base.0[w]));
            exp = Mask(std::array::from_fn(|w| exp.0[w] & iv.exp.0[w]));
        }
        examined += 1;
        let risk = m - exp.count(); // points outside the expanded rect
        let adv = m - base.count(); // points outside the base rect
        if risk >= target && best.as_ref().is_none_or(|b| adv < b.0) {
            best = Some((adv, risk, choice.clone()));
        }
        // Odometer increment.
        let mut j = 0;
        loop {
            if j == n {
                let (adv, risk, choice) = best.ok_or(Error::Infeasible { alpha })?;
                let mut center = Vec::with_capacity(n);
                let mut edge = Vec::with_capacity(n);
                for (axis, &c) in choice.iter().enumerate() {
                    let iv = &per_axis[axis][c];
                    center.push((iv.lo + iv.hi) / 2.0);
                    edge.push(iv.hi - iv.lo);
                }
                let rect = Hyperrectangle::new(center, edge)?;
                return Ok(OracleResult {
                    optimal_risk: risk as f64 / m as f64,
                    optimal_advrisk: adv as f64 / m as f64,
                    optimal_region: Region::RectComplement(RectComplementRegion::new(
                        vec![rect],
                        eps_inf,
                    )?),
                    candidates_examined: examined,
                });
            }
            choice[j] += 1;
            if choice[j] < per_axis[j].len() {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
    }
}

fn region_contains(region: &Region, x: &[f64]) -> bool {
    match region {
        Region::RectComplement(r) => r.contains(x),
        Region::BallUnion(b) => b.contains(x),
    }
}

/// Empirical measure of the ε-expansion of a region, decided against a
/// regular grid: a data point belongs to `E_ε` when it lies in `E` itself
/// or within `eps` of some grid point of `E`. Converges to the exact value
/// as `grid_step → 0`. `n ≤ 2`.
pub fn grid_expansion_measure(
    ds: &Dataset,
    region: &Region,
    eps: f64,
    metric: Metric,
    grid_step: f64,
) -> Result<f64> {
    if ds.n() > 2 {
        return Err(Error::OracleGuard(format!("n = {} exceeds the grid-oracle guard 2", ds.n())));
    }
    if grid_step <= 0.0 || eps < 0.0 {
        return Err(Error::param("grid_step/eps", "grid_step > 0 and eps >= 0 required"));
    }
    let n = ds.n();
    // Grid over the data bounding box, padded so expansions at the fringe
    // are still witnessed.
    let pad = eps + grid_step;
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in ds.points() {
        for j in 0..n {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let steps: Vec<usize> = (0..n)
        .map(|j| ((hi[j] + pad - (lo[j] - pad)) / grid_step).ceil() as usize + 1)
        .collect();
    let mut grid_in_e: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; n];
    'grid: loop {
        let point: Vec<f64> = (0..n).map(|j| lo[j] - pad + idx[j] as f64 * grid_step).collect();
        if region_contains(region, &point) {
            grid_in_e.push(point);
        }
        let mut j = 0;
        loop {
            if j == n {
                break 'grid;
            }
            idx[j] += 1;
            if idx[j] < steps[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
    let hits = ds
        .points()
        .filter(|x| {
            region_contains(region, x)
                || grid_in_e
                    .iter()
                    .any(|g| distance_unchecked(x, g, metric) <= eps)
        })
        .count();
    Ok(hits as f64 / ds.m() as f64)
}

/// Concentration of the uniform distribution on `[0,1]`: an end-interval
/// of mass `alpha` is optimal and expands to `min(1, alpha + eps)`.
pub fn analytic_h_uniform(alpha: f64, eps: f64) -> f64 {
    (alpha + eps).min(1.0)
}

/// Concentration of the standard Gaussian on ℝ: a half-line is optimal and
/// expands to `Φ(Φ⁻¹(alpha) + eps)`. The quantile is refined by two Newton
/// steps on `Φ`, giving absolute accuracy well below 1e-10.
pub fn analytic_h_gaussian(alpha: f64, eps: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut z = normal.inverse_cdf(alpha);
    for _ in 0..2 {
        let pdf = normal.pdf(z);
        if pdf > 0.0 {
            z -= (normal.cdf(z) - alpha) / pdf;
        }
    }
    normal.cdf(z + eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_uniform_cube, Dataset};
    use crate::regions::{bu_advrisk, bu_risk, cr_advrisk_bound, cr_risk};
    use crate::search_l2::{self, L2Config};

    fn ds1(xs: &[f64]) -> Dataset {
        Dataset::from_rows(xs.iter().map(|&x| vec![x]).collect(), "t").unwrap()
    }

    #[test]
    fn guards_reject_large_inputs() {
        let big = gen_uniform_cube(1, 201, 0).unwrap();
        assert!(matches!(
            brute_force_balls(&big, 0.1, 0.1, 1),
            Err(Error::OracleGuard(_))
        ));
        let small = gen_uniform_cube(1, 10, 0).unwrap();
        assert!(matches!(
            brute_force_balls(&small, 0.1, 0.1, 3),
            Err(Error::OracleGuard(_))
        ));
        let wide = gen_uniform_cube(4, 10, 0).unwrap();
        assert!(matches!(
            brute_force_rects(&wide, 0.1, 0.1),
            Err(Error::OracleGuard(_))
        ));
        assert!(matches!(
            grid_expansion_measure(
                &wide,
                &Region::BallUnion(
                    BallUnionRegion::new(vec![Ball::new(vec![0.0; 4], 1.0).unwrap()], 0.1).unwrap()
                ),
                0.1,
                Metric::L2,
                0.05,
            ),
            Err(Error::OracleGuard(_))
        ));
    }

    #[test]
    fn single_ball_oracle_matches_greedy_first_step() {
        for seed in [1, 7, 42] {
            let ds = gen_uniform_cube(2, 40, seed).unwrap();
            let cfg = L2Config::new(0.2, 0.1, 1);
            let est = search_l2::run(&ds, &ds, &cfg).unwrap();
            let oracle = brute_force_balls(&ds, 0.2, 0.1, 1).unwrap();
            assert_eq!(oracle.optimal_advrisk, est.advrisk_train, "seed {seed}");
        }
    }

    #[test]
    fn tight_cluster_has_zero_overhead() {
        // All points within 0.01 of each other; eps2 below every gap to
        // the (absent) rest of space: advrisk = risk = ceil(alpha*m)/m.
        let ds = ds1(&[0.0, 0.001, 0.002, 0.003, 0.004]);
        let got = brute_force_balls(&ds, 0.4, 0.0005, 1).unwrap();
        assert_eq!(got.optimal_risk, 0.4);
        assert_eq!(got.optimal_advrisk, 0.4);
    }

    #[test]
    fn pair_oracle_never_worse_than_single() {
        for seed in [3, 9] {
            let ds = gen_uniform_cube(2, 30, seed).unwrap();
            let one = brute_force_balls(&ds, 0.3, 0.05, 1).unwrap();
            let two = brute_force_balls(&ds, 0.3, 0.05, 2).unwrap();
            assert!(two.optimal_advrisk <= one.optimal_advrisk);
            assert!(two.optimal_risk >= 0.3);
        }
    }

    #[test]
    fn oracle_result_is_consistent_with_region_evaluation() {
        let ds = gen_uniform_cube(1, 25, 5).unwrap();
        let got = brute_force_balls(&ds, 0.2, 0.1, 2).unwrap();
        match &got.optimal_region {
            Region::BallUnion(r) => {
                assert_eq!(bu_risk(r, &ds).unwrap(), got.optimal_risk);
                assert_eq!(bu_advrisk(r, &ds).unwrap(), got.optimal_advrisk);
            }
            other => panic!("unexpected region {other:?}"),
        }
    }

    #[test]
    fn rect_oracle_hand_example() {
        // m = 7, alpha = 0.14 -> at least one point outside the expanded
        // rect. Base rect [0, 0.9] leaves only 1.0 outside both the base
        // and the expanded rect: optimum 1/7.
        let ds = ds1(&[0.0, 0.1, 0.2, 0.5, 0.8, 0.9, 1.0]);
        let got = brute_force_rects(&ds, 0.14, 0.05).unwrap();
        assert_eq!(got.optimal_advrisk, 1.0 / 7.0);
        assert!(got.optimal_risk >= 0.14);
        match &got.optimal_region {
            Region::RectComplement(r) => {
                assert_eq!(cr_risk(r, &ds).unwrap(), got.optimal_risk);
                assert_eq!(cr_advrisk_bound(r, &ds).unwrap(), got.optimal_advrisk);
            }
            other => panic!("unexpected region {other:?}"),
        }
    }

    #[test]
    fn rect_oracle_eps_zero_collapse() {
        let ds = ds1(&[0.0, 0.25, 0.5, 0.75, 1.0]);
        let got = brute_force_rects(&ds, 0.4, 0.0).unwrap();
        assert_eq!(got.optimal_advrisk, got.optimal_risk);
        assert_eq!(got.optimal_advrisk, 0.4); // ceil(0.4*5)/5
    }

    #[test]
    fn rect_oracle_reports_infeasible() {
        // eps so large every candidate's expansion swallows both points.
        let ds = ds1(&[0.0, 1.0]);
        assert!(matches!(
            brute_force_rects(&ds, 0.9, 10.0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn rect_oracle_2d_beats_nothing_smaller() {
        // 2-D sanity: four corner points plus one outlier; excluding only
        // the outlier is optimal.
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![5.0, 5.0],
        ];
        let ds = Dataset::from_rows(rows, "t").unwrap();
        let got = brute_force_rects(&ds, 0.2, 0.1).unwrap();
        assert_eq!(got.optimal_advrisk, 0.2);
    }

    #[test]
    fn grid_measure_matches_ball_expansion() {
        let ds = ds1(&[0.0, 0.5, 1.0]);
        let region =
            BallUnionRegion::new(vec![Ball::new(vec![0.0], 0.1).unwrap()], 0.45).unwrap();
        let wrapped = Region::BallUnion(region.clone());
        let exact = bu_advrisk(&region, &ds).unwrap();
        let grid = grid_expansion_measure(&ds, &wrapped, 0.45, Metric::L2, 0.001).unwrap();
        assert_eq!(grid, exact);
        // Refinement: coarser then finer grid both bracket the answer.
        let coarse = grid_expansion_measure(&ds, &wrapped, 0.45, Metric::L2, 0.01).unwrap();
        assert!((coarse - exact).abs() <= (grid - exact).abs() + 1e-12);
    }

    #[test]
    fn grid_measure_rect_complement_interval_arithmetic() {
        // Base rect [0.3, 0.7] expanded by eps_inf = 0.1 gives
        // E = (-inf, 0.2) ∪ (0.8, inf); a further 0.05 expansion gives
        // E_eps ≈ (-inf, 0.25) ∪ (0.75, inf). Every test point is at least
        // several grid steps from the 0.25 / 0.75 boundary.
        let rect = Hyperrectangle::new(vec![0.5], vec![0.4]).unwrap();
        let region =
            Region::RectComplement(RectComplementRegion::new(vec![rect], 0.1).unwrap());
        let ds = ds1(&[0.0, 0.2, 0.24, 0.3, 0.5, 0.7, 0.76, 1.0]);
        let got = grid_expansion_measure(&ds, &region, 0.05, Metric::Linf, 0.0005).unwrap();
        // In E_eps: 0.0, 0.2, 0.24, 0.76, 1.0.
        assert_eq!(got, 5.0 / 8.0);
    }

    #[test]
    fn grid_measure_eps_zero_is_membership() {
        let ds = ds1(&[0.0, 0.5, 1.0]);
        let region = Region::BallUnion(
            BallUnionRegion::new(vec![Ball::new(vec![0.0], 0.1).unwrap()], 0.0).unwrap(),
        );
        let got = grid_expansion_measure(&ds, &region, 0.0, Metric::L2, 0.01).unwrap();
        assert_eq!(got, 1.0 / 3.0);
    }

    #[test]
    fn analytic_values() {
        assert_eq!(analytic_h_uniform(0.1, 0.05), 0.15000000000000002);
        assert!((analytic_h_uniform(0.1, 0.05) - 0.15).abs() < 1e-12);
        assert_eq!(analytic_h_uniform(0.9, 0.5), 1.0);
        assert!((analytic_h_gaussian(0.01, 0.5) - 0.0339).abs() < 5e-5);
        assert!((analytic_h_gaussian(0.3, 0.0) - 0.3).abs() < 1e-10);
        // Monotone in both arguments.
        assert!(analytic_h_gaussian(0.02, 0.5) > analytic_h_gaussian(0.01, 0.5));
        assert!(analytic_h_gaussian(0.01, 0.6) > analytic_h_gaussian(0.01, 0.5));
    }

    #[test]
    fn oracle_monotone_in_alpha_and_eps() {
        let ds = gen_uniform_cube(1, 40, 2).unwrap();
        let base = brute_force_balls(&ds, 0.2, 0.05, 1).unwrap();
        let more_alpha = brute_force_balls(&ds, 0.3, 0.05, 1).unwrap();
        let more_eps = brute_force_balls(&ds, 0.2, 0.1, 1).unwrap();
        assert!(more_alpha.optimal_advrisk >= base.optimal_advrisk);
        assert!(more_eps.optimal_advrisk >= base.optimal_advrisk);
    }
}
