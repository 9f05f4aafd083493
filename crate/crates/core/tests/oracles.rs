//! Brute-force oracles for the kernels, distances, metrics and clustering.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajkernel::data::{generate_synthetic, min_max_normalize, SyntheticSpec};
use trajkernel::dist::{embed_set_idk, idk_similarity};
use trajkernel::eval::{precision_at_k, Ranking};
use trajkernel::tidkc::{final_assign, grow_clusters, objective, select_seeds, KernelModel};
use trajkernel::*;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Isolation kernel recomputed from the model's centers: fraction of
/// partitionings where both points pick the same nearest center.
fn kappa(model: &IsolationKernelModel, x: &[f64], y: &[f64]) -> f64 {
    let p = model.params();
    let cell = |j: usize, z: &[f64]| {
        let mut best = 0;
        for c in 1..p.psi {
            if sq(z, model.center(j, c)) < sq(z, model.center(j, best)) {
                best = c;
            }
        }
        best
    };
    (0..p.t).filter(|&j| cell(j, x) == cell(j, y)).count() as f64 / p.t as f64
}

fn points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn traj(pts: &[Vec<f64>]) -> Trajectory {
    Trajectory::from_points("t", None, pts).unwrap()
}

/// Minimum cost over every monotone alignment path, by plain recursion.
fn dtw_paths(a: &[Vec<f64>], b: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let here = sq(&a[i], &b[j]).sqrt();
    if i == 0 && j == 0 {
        return here;
    }
    let mut best = f64::INFINITY;
    if i > 0 {
        best = best.min(dtw_paths(a, b, i - 1, j));
    }
    if j > 0 {
        best = best.min(dtw_paths(a, b, i, j - 1));
    }
    if i > 0 && j > 0 {
        best = best.min(dtw_paths(a, b, i - 1, j - 1));
    }
    here + best
}

fn brute_nmi(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len() as f64;
    let p = |f: &dyn Fn(usize) -> bool| (0..u.len()).filter(|&i| f(i)).count() as f64 / n;
    let mut us: Vec<usize> = u.to_vec();
    us.sort();
    us.dedup();
    let mut vs: Vec<usize> = v.to_vec();
    vs.sort();
    vs.dedup();
    let h = |labels: &[usize], xs: &[usize]| -> f64 {
        xs.iter()
            .map(|&a| p(&|i| labels[i] == a))
            .map(|q| -q * q.ln())
            .sum()
    };
    let (hu, hv) = (h(u, &us), h(v, &vs));
    if us.len() == 1 && vs.len() == 1 {
        return 1.0;
    }
    if us.len() == 1 || vs.len() == 1 {
        return 0.0;
    }
    let mut mi = 0.0;
    for &a in &us {
        for &b in &vs {
            let joint = p(&|i| u[i] == a && v[i] == b);
            if joint > 0.0 {
                mi += joint * (joint / (p(&|i| u[i] == a) * p(&|i| v[i] == b))).ln();
            }
        }
    }
    mi / (hu * hv).sqrt()
}

fn brute_ari(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len();
    let (mut both, mut in_u, mut in_v, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let su = u[i] == u[j];
            let sv = v[i] == v[j];
            total += 1.0;
            both += f64::from(u8::from(su && sv));
            in_u += f64::from(u8::from(su));
            in_v += f64::from(u8::from(sv));
        }
    }
    let expected = in_u * in_v / total;
    let max = (in_u + in_v) / 2.0;
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn labels_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..=30).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..5, n),
            prop::collection::vec(0usize..5, n),
        )
    })
}

proptest! {
    #[test]
    fn idk_dot_equals_double_sum(
        seed in any::<u64>(),
        ns in (1usize..=20, 1usize..=20),
        d in 1usize..=3,
        psi in prop::sample::select(vec![2usize, 4, 16]),
        t in prop::sample::select(vec![10usize, 100]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = points(&mut rng, ns.0, d);
        let u = points(&mut rng, ns.1, d);
        let pool = points(&mut rng, 40, d);
        let model = IsolationKernelModel::fit(&pool, IKParams::new(psi, t, seed).unwrap()).unwrap();
        let a = embed_set_idk(&model, &s).unwrap();
        let b = embed_set_idk(&model, &u).unwrap();
        let mut double = 0.0;
        for x in &s {
            for y in &u {
                double += kappa(&model, x, y);
            }
        }
        double /= (s.len() * u.len()) as f64;
        prop_assert!((idk_similarity(&a, &b).unwrap() - double).abs() <= 1e-9);
    }

    #[test]
    fn hausdorff_equals_sup_min(seed in any::<u64>(), la in 1usize..=6, lb in 1usize..=6, d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = points(&mut rng, la, d);
        let b = points(&mut rng, lb, d);
        let directed = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            let mut sup: f64 = 0.0;
            for p in x {
                let mut inf = f64::INFINITY;
                for q in y {
                    inf = inf.min(sq(p, q).sqrt());
                }
                sup = sup.max(inf);
            }
            sup
        };
        let expected = directed(&a, &b).max(directed(&b, &a));
        prop_assert_eq!(hausdorff(&traj(&a), &traj(&b)).unwrap(), expected);
    }

    #[test]
    fn dtw_equals_path_enumeration(seed in any::<u64>(), la in 1usize..=8, lb in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = points(&mut rng, la, 2);
        let b = points(&mut rng, lb, 2);
        let expected = dtw_paths(&a, &b, la - 1, lb - 1);
        prop_assert_eq!(dtw(&traj(&a), &traj(&b), None).unwrap(), expected);
        // A band at least as wide as both lengths constrains nothing.
        prop_assert_eq!(dtw(&traj(&a), &traj(&b), Some(8)).unwrap(), expected);
    }

    #[test]
    fn metrics_match_brute_force((u, v) in labels_strategy()) {
        prop_assert!((nmi(&u, &v).unwrap() - brute_nmi(&u, &v)).abs() <= 1e-12);
        prop_assert!((ari(&u, &v).unwrap() - brute_ari(&u, &v)).abs() <= 1e-12);
    }

    #[test]
    fn metrics_ignore_relabeling((u, v) in labels_strategy(), shift in 1usize..7) {
        let renamed: Vec<usize> = v.iter().map(|&l| (l + shift) * 3).collect();
        prop_assert_eq!(nmi(&u, &v).unwrap(), nmi(&u, &renamed).unwrap());
        prop_assert_eq!(ari(&u, &v).unwrap(), ari(&u, &renamed).unwrap());
        let nmi_value = nmi(&u, &v).unwrap();
        prop_assert!((0.0..=1.0).contains(&nmi_value));
        prop_assert!(ari(&u, &v).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn precision_ignores_monotone_transform(seed in any::<u64>(), n in 4usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Label> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let sim: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let warped: Vec<f64> = sim.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        let ks: Vec<usize> = (1..n).collect();
        let a = precision_at_k(Ranking::Similarities(&sim), &labels, &ks).unwrap();
        let b = precision_at_k(Ranking::Similarities(&warped), &labels, &ks).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn blob_space(seed: u64) -> (Vec<Vec<f64>>, KernelModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Vec::new();
    for c in 0..3 {
        for _ in 0..15 {
            g.push(vec![c as f64 * 2.0 + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)]);
        }
    }
    let model = KernelModel::fit(&g, KernelTag::Idk, IKParams::new(4, 100, seed).unwrap(), None).unwrap();
    (g, model)
}

#[test]
fn growing_ignores_visit_order() {
    for seed in 0..5 {
        let (g, model) = blob_space(seed);
        let space = model.space(&g).unwrap();
        let seeds = select_seeds(&space, 3, 1000, 10, seed).unwrap();
        let base = final_assign(&grow_clusters(&space, &seeds, 0.9, 1e-5).unwrap(), &space);

        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let mut perm: Vec<usize> = (0..g.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| g[i].clone()).collect();
        let space2 = model.space(&shuffled).unwrap();
        let seeds2: Vec<usize> = seeds
            .iter()
            .map(|&s| perm.iter().position(|&p| p == s).unwrap())
            .collect();
        let other = final_assign(&grow_clusters(&space2, &seeds2, 0.9, 1e-5).unwrap(), &space2);
        for (new_pos, &old) in perm.iter().enumerate() {
            assert_eq!(other.labels[new_pos], base.labels[old]);
        }
        assert!((other.objective - base.objective).abs() < 1e-9);
    }
}

#[test]
fn growing_bookkeeping() {
    let (g, model) = blob_space(7);
    let space = model.space(&g).unwrap();
    let seeds = select_seeds(&space, 3, 1000, 10, 7).unwrap();
    let state = grow_clusters(&space, &seeds, 0.9, 1e-5).unwrap();
    let history = state.history();
    assert!(history.windows(2).all(|w| w[1].tau < w[0].tau && w[1].assigned >= w[0].assigned));
    // Starting threshold is at most 1, so the floor bounds the iteration count.
    let bound = ((1e-5f64).ln() / 0.9f64.ln()).ceil() as usize + 1;
    assert!(state.iterations() <= bound);
    for (c, sum) in state.recomputed_sums(&space).iter().enumerate() {
        for (a, b) in sum.iter().zip(&state.sums()[c]) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
    let result = final_assign(&state, &space);
    assert!(result.labels.iter().all(|&l| (1..=3).contains(&l)));
    assert!((objective(&space, &result.labels, 3) - result.objective).abs() < 1e-12);
    // The objective summed by hand over members of each cluster.
    let mut by_hand = 0.0;
    for c in 1..=3 {
        let members: Vec<usize> = (0..g.len()).filter(|&i| result.labels[i] == c).collect();
        for &i in &members {
            by_hand += members.iter().map(|&j| space.point_similarity(i, j)).sum::<f64>() / members.len() as f64;
        }
    }
    assert!((by_hand - result.objective).abs() < 1e-9);
}

#[test]
fn two_blob_synthetic_recovers_labels() {
    let ds = min_max_normalize(&generate_synthetic(&SyntheticSpec::separated_lines(2, 30, 0.02), 5).unwrap());
    for kernel2 in [KernelTag::Idk, KernelTag::GdkNystrom] {
        let params = TidkcParams {
            kernel2,
            ..TidkcParams::new(2, 5)
        };
        let result = cluster(&ds, &params).unwrap();
        assert_eq!(nmi(&ds.labels().unwrap(), &result.labels).unwrap(), 1.0);
        assert_eq!(cluster(&ds, &params).unwrap(), result);
    }
}

#[test]
fn clustering_preconditions() {
    let ds = generate_synthetic(&SyntheticSpec::separated_lines(2, 2, 0.0), 0).unwrap();
    assert!(matches!(
        cluster(&ds, &TidkcParams::new(5, 0)),
        Err(Error::InsufficientPoints { needed: 5, available: 4 })
    ));
    let (result, timings) = cluster_timed(&ds, &TidkcParams::new(4, 0)).unwrap();
    let mut labels = result.labels.clone();
    labels.sort();
    assert_eq!(labels, vec![1, 2, 3, 4]);
    assert!(timings.total >= timings.growing);
}
