//! Property tests for the transport solver: marginal feasibility, shift
//! and transpose symmetries, monotonicity in the regularization knobs, and
//! agreement between the two cost formulations. The small-instance checks
//! compare against an exhaustive scan of the coupling polytope that knows
//! nothing about Sinkhorn.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use tot_core::rng::SplitMix64;
use tot_core::seq::{FeatureSequence, MarginalWeights};
use tot_core::sinkhorn::{entropy, sinkhorn, tot_coupling, SinkhornConfig};
use tot_core::geometry::{
    combined_cost_beta, combined_cost_kl, cosine_cost, gaussian_prior, temporal_distance,
    CostMatrix,
};

fn cost(entries: Array2<f64>) -> CostMatrix {
    CostMatrix::new(entries).unwrap()
}

fn weights(raw: Vec<f64>) -> MarginalWeights {
    let total: f64 = raw.iter().sum();
    MarginalWeights::new(Array1::from_vec(raw.into_iter().map(|v| v / total).collect())).unwrap()
}

fn tight(epsilon: f64) -> SinkhornConfig {
    SinkhornConfig::new(epsilon)
        .with_tolerance(1e-13)
        .with_max_iterations(200_000)
}

/// Random problem: cost entries in [0, 3), marginals bounded away from 0.
fn instance_strategy() -> impl Strategy<Value = (Array2<f64>, MarginalWeights, MarginalWeights)> {
    (1usize..7, 1usize..7).prop_flat_map(|(l_a, l_t)| {
        (
            proptest::collection::vec(0.0..3.0f64, l_a * l_t),
            proptest::collection::vec(0.05..1.0f64, l_a),
            proptest::collection::vec(0.05..1.0f64, l_t),
        )
            .prop_map(move |(c, a, b)| {
                (
                    Array2::from_shape_vec((l_a, l_t), c).unwrap(),
                    weights(a),
                    weights(b),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn converged_couplings_satisfy_marginal_feasibility(
        (c, a, b) in instance_strategy(),
        epsilon in 0.05..1.0f64,
    ) {
        let cfg = SinkhornConfig::new(epsilon).with_tolerance(1e-9);
        let plan = sinkhorn(&cost(c), &a, &b, &cfg).unwrap();
        prop_assert!(plan.converged(), "moderate epsilon should converge");
        prop_assert!(plan.marginal_error() < 1e-9);

        let mut row_gap = 0.0;
        for (i, row) in plan.entries().rows().into_iter().enumerate() {
            row_gap += (row.sum() - a.as_array()[i]).abs();
        }
        let mut col_gap = 0.0;
        for (j, col) in plan.entries().columns().into_iter().enumerate() {
            col_gap += (col.sum() - b.as_array()[j]).abs();
        }
        prop_assert!(row_gap.max(col_gap) < 1e-9, "row={row_gap} col={col_gap}");
        let mass: f64 = plan.entries().sum();
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass={mass}");
    }

    #[test]
    fn uniform_cost_shifts_leave_the_coupling_unchanged(
        (c, a, b) in instance_strategy(),
        epsilon in 0.1..1.0f64,
        shift in -2.0..2.0f64,
    ) {
        let cfg = tight(epsilon);
        let base = sinkhorn(&cost(c.clone()), &a, &b, &cfg).unwrap();
        let shifted = sinkhorn(&cost(c + shift), &a, &b, &cfg).unwrap();
        for (x, y) in base.entries().iter().zip(shifted.entries()) {
            prop_assert!((x - y).abs() < 1e-8, "shifted {y} vs base {x}");
        }
    }

    #[test]
    fn transposing_the_problem_transposes_the_coupling(
        (c, a, b) in instance_strategy(),
        epsilon in 0.1..1.0f64,
    ) {
        let cfg = tight(epsilon);
        let forward = sinkhorn(&cost(c.clone()), &a, &b, &cfg).unwrap();
        let backward = sinkhorn(&cost(c.t().to_owned()), &b, &a, &cfg).unwrap();
        for ((i, j), x) in forward.entries().indexed_iter() {
            let y = backward.entries()[[j, i]];
            prop_assert!((x - y).abs() < 1e-10, "({i},{j}): {x} vs {y}");
        }
    }

    #[test]
    fn stabilized_and_plain_solvers_agree(
        (c, a, b) in instance_strategy(),
        epsilon in 0.1..1.0f64,
    ) {
        let plain = sinkhorn(&cost(c.clone()), &a, &b, &tight(epsilon).with_stabilized(false))
            .unwrap();
        let logdom = sinkhorn(&cost(c), &a, &b, &tight(epsilon).with_stabilized(true)).unwrap();
        for (x, y) in plain.entries().iter().zip(logdom.entries()) {
            prop_assert!((x - y).abs() < 1e-8, "plain {x} vs log {y}");
        }
    }
}

#[test]
fn coupling_entropy_is_non_decreasing_in_epsilon() {
    let grid = [0.01, 0.1, 0.5, 1.0];
    let mut rng = SplitMix64::new(0x5eed_0001);
    for round in 0..25 {
        let l_a = 2 + rng.next_below(5) as usize;
        let l_t = 2 + rng.next_below(5) as usize;
        let c = cost(Array2::from_shape_fn((l_a, l_t), |_| rng.uniform_in(0.0, 3.0)));
        let a = MarginalWeights::uniform(l_a).unwrap();
        let b = MarginalWeights::uniform(l_t).unwrap();
        let mut last = f64::NEG_INFINITY;
        for &epsilon in &grid {
            let plan = sinkhorn(&c, &a, &b, &tight(epsilon)).unwrap();
            let h = entropy(&plan).unwrap();
            assert!(
                h >= last - 1e-9,
                "round {round}: entropy fell from {last} to {h} at epsilon={epsilon}"
            );
            last = h;
        }
    }
}

#[test]
fn transported_temporal_cost_is_non_increasing_in_beta() {
    let betas = [0.0, 0.5, 5.0];
    let mut rng = SplitMix64::new(0x5eed_0002);
    for round in 0..120 {
        let l_a = 2 + rng.next_below(7) as usize;
        let l_t = 2 + rng.next_below(7) as usize;
        let dim = 2 + rng.next_below(4) as usize;
        let h = FeatureSequence::new(
            Array2::from_shape_fn((l_a, dim), |_| rng.uniform_in(-1.0, 1.0)),
            "acoustic",
        )
        .unwrap();
        let z = FeatureSequence::new(
            Array2::from_shape_fn((l_t, dim), |_| rng.uniform_in(-1.0, 1.0)),
            "linguistic",
        )
        .unwrap();
        let d_sq = temporal_distance(l_a, l_t).unwrap().mapv(|d| d * d);
        let cfg = tight(0.1);
        let mut last = f64::INFINITY;
        for &beta in &betas {
            let plan = tot_coupling(&h, &z, beta, &cfg).unwrap();
            let moved: f64 = plan
                .entries()
                .iter()
                .zip(&d_sq)
                .map(|(g, d)| g * d)
                .sum();
            assert!(
                moved <= last + 1e-9,
                "round {round}: temporal cost rose from {last} to {moved} at beta={beta}"
            );
            last = moved;
        }
    }
}

#[test]
fn beta_zero_reduces_to_plain_entropic_transport_on_the_cosine_cost() {
    let mut rng = SplitMix64::new(0x5eed_0003);
    for _ in 0..20 {
        let l_a = 1 + rng.next_below(6) as usize;
        let l_t = 1 + rng.next_below(6) as usize;
        let dim = 2 + rng.next_below(4) as usize;
        let h = FeatureSequence::new(
            Array2::from_shape_fn((l_a, dim), |_| rng.uniform_in(-1.0, 1.0)),
            "acoustic",
        )
        .unwrap();
        let z = FeatureSequence::new(
            Array2::from_shape_fn((l_t, dim), |_| rng.uniform_in(-1.0, 1.0)),
            "linguistic",
        )
        .unwrap();
        let cfg = tight(0.3);
        let fused = tot_coupling(&h, &z, 0.0, &cfg).unwrap();
        let plain = sinkhorn(
            &cosine_cost(&h, &z).unwrap(),
            &MarginalWeights::uniform(l_a).unwrap(),
            &MarginalWeights::uniform(l_t).unwrap(),
            &cfg,
        )
        .unwrap();
        for (x, y) in fused.entries().iter().zip(plain.entries()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}

/// The solution kernel of the combined cost factors into prior and ground
/// parts: exp(-C~/(a1+a2)) = P^(a2/(a1+a2)) * exp(-C/(a1+a2)).
#[test]
fn combined_cost_kernel_factors_into_prior_and_ground_parts() {
    let mut rng = SplitMix64::new(0x5eed_0004);
    for _ in 0..40 {
        let l_a = 1 + rng.next_below(6) as usize;
        let l_t = 1 + rng.next_below(6) as usize;
        let sigma = rng.uniform_in(0.5, 1.5);
        let alpha1 = rng.uniform_in(0.1, 1.0);
        let alpha2 = rng.uniform_in(0.1, 1.0);
        let temperature = alpha1 + alpha2;
        let c = cost(Array2::from_shape_fn((l_a, l_t), |_| rng.uniform_in(0.0, 2.0)));
        let p = gaussian_prior(l_a, l_t, sigma).unwrap();
        let combined = combined_cost_kl(&c, &p, alpha2).unwrap();
        for ((i, j), &ct) in combined.entries().indexed_iter() {
            let lhs = (-ct / temperature).exp();
            let rhs = (p.log_entries()[[i, j]] * alpha2 / temperature).exp()
                * (-c.entries()[[i, j]] / temperature).exp();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0),
                "({i},{j}): lhs={lhs} rhs={rhs}"
            );
        }
    }
}

/// Fills the non-free entries of a candidate coupling from the marginal
/// constraints; the free block is the upper-left (l_a-1) x (l_t-1) corner.
/// Returns None when the completion would need negative mass.
fn complete_coupling(a: &[f64], b: &[f64], x: &[f64]) -> Option<Array2<f64>> {
    let l_a = a.len();
    let l_t = b.len();
    let mut g = Array2::zeros((l_a, l_t));
    for i in 0..l_a - 1 {
        for j in 0..l_t - 1 {
            g[[i, j]] = x[i * (l_t - 1) + j];
        }
    }
    for i in 0..l_a - 1 {
        let rest = a[i] - (0..l_t - 1).map(|j| g[[i, j]]).sum::<f64>();
        if rest < -1e-12 {
            return None;
        }
        g[[i, l_t - 1]] = rest.max(0.0);
    }
    for j in 0..l_t - 1 {
        let rest = b[j] - (0..l_a - 1).map(|i| g[[i, j]]).sum::<f64>();
        if rest < -1e-12 {
            return None;
        }
        g[[l_a - 1, j]] = rest.max(0.0);
    }
    let corner = b[l_t - 1] - (0..l_a - 1).map(|i| g[[i, l_t - 1]]).sum::<f64>();
    if corner < -1e-12 {
        return None;
    }
    g[[l_a - 1, l_t - 1]] = corner.max(0.0);
    Some(g)
}

/// Progressively refined exhaustive scan over the coupling polytope. Knows
/// nothing about Sinkhorn: candidates come from the marginal constraints
/// alone and the best feasible grid point wins each round, after which the
/// search box shrinks around it.
fn grid_search_min(
    a: &[f64],
    b: &[f64],
    steps: usize,
    rounds: usize,
    objective: impl Fn(&Array2<f64>) -> f64,
) -> (Array2<f64>, f64) {
    let l_t = b.len();
    let n_free = (a.len() - 1) * (l_t - 1);
    assert!(n_free >= 1, "degenerate polytopes need no search");
    let full_hi: Vec<f64> = (0..n_free)
        .map(|k| a[k / (l_t - 1)].min(b[k % (l_t - 1)]))
        .collect();
    let mut lo = vec![0.0; n_free];
    let mut hi = full_hi.clone();
    let mut best: Option<(Vec<f64>, f64)> = None;

    for _ in 0..rounds {
        let mut idx = vec![0usize; n_free];
        loop {
            let x: Vec<f64> = (0..n_free)
                .map(|k| lo[k] + (hi[k] - lo[k]) * idx[k] as f64 / steps as f64)
                .collect();
            if let Some(g) = complete_coupling(a, b, &x) {
                let val = objective(&g);
                if best.as_ref().map_or(true, |(_, incumbent)| val < *incumbent) {
                    best = Some((x, val));
                }
            }
            let mut d = 0;
            while d < n_free {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n_free {
                break;
            }
        }
        let incumbent = &best.as_ref().expect("some grid point is feasible").0;
        for k in 0..n_free {
            let half = (hi[k] - lo[k]) / steps as f64;
            lo[k] = (incumbent[k] - half).max(0.0);
            hi[k] = (incumbent[k] + half).min(full_hi[k]);
        }
    }
    let (x, val) = best.unwrap();
    (complete_coupling(a, b, &x).unwrap(), val)
}

fn xlogx(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// Minimizing <gamma,C> - a1 H(gamma) + a2 KL(gamma || P) over the polytope
/// lands on the entropic-transport solution of the combined cost at
/// temperature a1 + a2, on every 2x2 and 2x3 shape tried.
#[test]
fn kl_objective_minimizer_matches_sinkhorn_on_the_combined_cost() {
    let mut rng = SplitMix64::new(0x5eed_0005);
    for round in 0..30 {
        let (l_a, l_t) = if round % 2 == 0 { (2, 2) } else { (2, 3) };
        let sigma = rng.uniform_in(0.5, 1.5);
        let alpha1 = rng.uniform_in(0.1, 1.0);
        let alpha2 = rng.uniform_in(0.1, 1.0);
        let c = cost(Array2::from_shape_fn((l_a, l_t), |_| rng.uniform_in(0.0, 2.0)));
        let prior = gaussian_prior(l_a, l_t, sigma).unwrap();
        let log_p = prior.log_entries().clone();

        let kl_objective = |g: &Array2<f64>| {
            let mut total = 0.0;
            for ((i, j), &mass) in g.indexed_iter() {
                total += mass * c.entries()[[i, j]];
                total += (alpha1 + alpha2) * xlogx(mass);
                total -= alpha2 * mass * log_p[[i, j]];
            }
            total
        };

        let a = vec![1.0 / l_a as f64; l_a];
        let b = vec![1.0 / l_t as f64; l_t];
        let (oracle_plan, oracle_min) = grid_search_min(&a, &b, 50, 6, kl_objective);

        let combined = combined_cost_kl(&c, &prior, alpha2).unwrap();
        let solved = sinkhorn(
            &combined,
            &MarginalWeights::uniform(l_a).unwrap(),
            &MarginalWeights::uniform(l_t).unwrap(),
            &tight(alpha1 + alpha2),
        )
        .unwrap();
        let achieved = kl_objective(solved.entries());

        assert!(
            (achieved - oracle_min).abs() < 1e-6,
            "round {round}: solver objective {achieved} vs grid minimum {oracle_min}"
        );
        for (x, y) in solved.entries().iter().zip(&oracle_plan) {
            assert!(
                (x - y).abs() < 1e-2,
                "round {round}: coupling drifted from the grid argmin: {x} vs {y}"
            );
        }
    }
}

/// Mirrors the qualitative claim that identical sequences couple along the
/// diagonal once the temporal penalty is on: at small epsilon nearly all
/// mass sits on gamma[i][i], and the exhaustive transport-cost minimizer
/// agrees entrywise.
#[test]
fn identical_sequences_concentrate_mass_on_the_diagonal() {
    let mut rng = SplitMix64::new(0x5eed_0006);
    for &l in &[2usize, 3] {
        let h = FeatureSequence::new(
            Array2::from_shape_fn((l, 4), |_| rng.uniform_in(-1.0, 1.0)),
            "shared",
        )
        .unwrap();
        let cfg = tight(0.01);
        let plan = tot_coupling(&h, &h, 0.5, &cfg).unwrap();
        let diagonal: f64 = (0..l).map(|i| plan.entries()[[i, i]]).sum();
        assert!(diagonal > 0.9, "l={l}: diagonal mass {diagonal}");

        let combined =
            combined_cost_beta(&cosine_cost(&h, &h).unwrap(), 0.5, l, l).unwrap();
        let transport_cost = |g: &Array2<f64>| {
            g.indexed_iter()
                .map(|((i, j), &mass)| mass * combined.entries()[[i, j]])
                .sum::<f64>()
        };
        let marginals = vec![1.0 / l as f64; l];
        let (lp_plan, _) = grid_search_min(&marginals, &marginals, 50, 6, transport_cost);
        let lp_diagonal: f64 = (0..l).map(|i| lp_plan[[i, i]]).sum();
        assert!(lp_diagonal > 0.9, "l={l}: grid minimizer diagonal {lp_diagonal}");
        for (x, y) in plan.entries().iter().zip(&lp_plan) {
            assert!((x - y).abs() < 1e-2, "l={l}: {x} vs grid {y}");
        }
    }
}
