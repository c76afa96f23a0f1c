//! Acceptance suite. Runs every criterion in order, prints one line per
//! criterion and exits non-zero if any fails. An optional argument selects
//! criteria by number, e.g. `cargo test --test acceptance -- 4 8`.

use std::collections::BTreeSet;
use std::time::Instant;

use nalgebra::{Point3, Vector3};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dualmesh::convnet::edgeconv::{edge_conv_forward, BatchNormState, EdgeConvParams};
use dualmesh::convnet::gradcheck::{finite_difference_check, random_instance, GradCheckOptions};
use dualmesh::convnet::{BnPlacement, GraphInput, Network, NetworkConfig, SingleBranch};
use dualmesh::hierarchy::{
    build_hierarchy, fps_pool, pool_features, qem_pool, unpool_features, vertex_clustering_pool, HierarchyConfig,
    PoolMode, PoolStep, PoolingTraceMap, Quadric,
};
use dualmesh::mesh::Mesh;
use dualmesh::neighborhoods::{res_sample_with_stats, sampling_probability, EdgeSet};
use dualmesh::pipeline::toy::{accuracy, toy_benchmark, toy_network, train_toy, ToySchedule};
use dualmesh::synthetic::random_mesh;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (usize, &'static str, f64, fn() -> Outcome);

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 9] = [
        (1, "RES keep rates", 5.0, res_keep_rates),
        (2, "pooling oracles", 60.0, pooling_oracles),
        (3, "trace-map algebra", 10.0, trace_algebra),
        (4, "gradient verification", 120.0, gradient_verification),
        (5, "parameter counts", 1.0, parameter_counts),
        (6, "toy segmentation overfit", 900.0, toy_overfit),
        (7, "RES threshold trend", 120.0, res_threshold_trend),
        (8, "translation invariance", 5.0, translation_invariance),
        (
            9,
            "permutation and duplicate-edge invariance",
            10.0,
            permutation_invariance,
        ),
    ];
    let mut failed = 0;
    for (n, name, budget, run) in criteria {
        if !picked.is_empty() && !picked.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = o.pass && secs < budget;
        failed += usize::from(!pass);
        println!(
            "criterion {n} [{}] {name}: {} ({secs:.1} s of {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

// 1 ---------------------------------------------------------------------

fn res_keep_rates() -> Outcome {
    let trials = 100_000usize;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for t in [1usize, 15, 25] {
        ok &= sampling_probability(2 * t, t) == 0.5;
        for n in [t, t + 1, 2 * t, 3 * t] {
            let centers = trials.div_ceil(n);
            let count = centers.max(n + 1);
            let lists = (0..count)
                .map(|i| {
                    if i < centers {
                        (1..=n).map(|k| (i + k) % count).collect()
                    } else {
                        vec![]
                    }
                })
                .collect();
            let edges = EdgeSet::from_lists(lists);
            let (kept, stats) = res_sample_with_stats(&edges, t, 0xACCE + n as u64);
            let p = sampling_probability(n, t);
            if n <= t {
                ok &= kept == edges && stats.candidate_edges == 0;
                continue;
            }
            let m = stats.candidate_edges as f64;
            let rate = stats.bernoulli_kept as f64 / m;
            let sigma = (p * (1.0 - p) / m).sqrt();
            let z = (rate - p).abs() / sigma;
            worst = worst.max(z);
            ok &= z <= 3.0;
        }
    }
    outcome(ok, format!("largest deviation {worst:.2} sigma, p(2T) = 0.5 exactly"))
}

// 2 ---------------------------------------------------------------------

fn pair_set(e: &EdgeSet) -> BTreeSet<(usize, usize)> {
    e.iter().collect()
}

/// Clusters by comparing integer cell coordinates pairwise; coarse indices
/// in order of first appearance; coarse edge between two clusters iff some
/// face side joins them.
fn vc_oracle(m: &Mesh, cell: f64) -> (Vec<usize>, BTreeSet<(usize, usize)>) {
    let lo = m.positions.iter().fold([f64::INFINITY; 3], |mut lo, p| {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
        }
        lo
    });
    let key: Vec<[i64; 3]> = m
        .positions
        .iter()
        .map(|p| [0, 1, 2].map(|k| ((p[k] - lo[k]) / cell).floor() as i64))
        .collect();
    let n = key.len();
    let mut assign = vec![usize::MAX; n];
    let mut next = 0;
    for i in 0..n {
        if assign[i] != usize::MAX {
            continue;
        }
        for j in i..n {
            if key[j] == key[i] {
                assign[j] = next;
            }
        }
        next += 1;
    }
    let mut edges = BTreeSet::new();
    for a in 0..next {
        for b in 0..next {
            if a == b {
                continue;
            }
            let joined = m.faces.iter().any(|f| {
                (0..3).any(|s| {
                    let (u, v) = (f[s], f[(s + 1) % 3]);
                    (assign[u] == a && assign[v] == b) || (assign[u] == b && assign[v] == a)
                })
            });
            if joined {
                edges.insert((a, b));
            }
        }
    }
    (assign, edges)
}

/// Minimum of a quadric by repeatedly zooming a grid around its best node.
fn grid_minimum(q: &Quadric, center: Point3<f64>, half: f64) -> f64 {
    let (mut c, mut h) = (center, half);
    let mut best = f64::INFINITY;
    for _ in 0..40 {
        let steps = 10i32;
        let mut arg = c;
        for i in -steps..=steps {
            for j in -steps..=steps {
                for k in -steps..=steps {
                    let p = c + Vector3::new(i as f64, j as f64, k as f64) * (h / steps as f64);
                    let e = q.error(&p);
                    if e < best {
                        best = e;
                        arg = p;
                    }
                }
            }
        }
        c = arg;
        h *= 0.5;
    }
    best
}

fn pooling_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut vc_bad = 0;
    for s in 0..100u64 {
        let m = random_mesh(rng.gen_range(20..=484), s);
        let cell = rng.gen_range(0.05..0.3);
        let p = vertex_clustering_pool(&m, cell).unwrap();
        let (assign, edges) = vc_oracle(&m, cell);
        if p.trace.assignment() != assign.as_slice() || pair_set(&p.geodesic) != edges {
            vc_bad += 1;
        }
    }

    let mut worst_cost: f64 = 0.0;
    for case in 0..20 {
        let mut pt = || {
            Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
        };
        let (a, b, c, mut d) = (pt(), pt(), pt(), pt());
        if case % 5 == 4 {
            // flat pair of triangles: the quadric is singular
            d = Point3::new(d.x, d.y, a.z);
            let (a2, b2, c2) = (
                Point3::new(a.x, a.y, a.z),
                Point3::new(b.x, b.y, a.z),
                Point3::new(c.x, c.y, a.z),
            );
            let q1 = Quadric::from_triangle(&a2, &b2, &c2).unwrap();
            let q2 = Quadric::from_triangle(&a2, &c2, &d).unwrap();
            let q = q1 + q2 + q1 + q2;
            let (_, cost) = q.contraction(&a2, &c2);
            worst_cost = worst_cost.max((cost - grid_minimum(&q, a2, 4.0)).abs());
            continue;
        }
        let faces = [[a, b, c], [a, b, d], [a, c, d], [b, c, d]];
        let quad = |v: &Point3<f64>| {
            faces
                .iter()
                .filter(|f| f.contains(v))
                .filter_map(|f| Quadric::from_triangle(&f[0], &f[1], &f[2]))
                .fold(Quadric::default(), |s, q| s + q)
        };
        let q = quad(&a) + quad(&b);
        let (_, cost) = q.contraction(&a, &b);
        let center = Point3::from((a.coords + b.coords + c.coords + d.coords) / 4.0);
        let grid = grid_minimum(&q, center, 4.0);
        worst_cost = worst_cost.max((cost - grid).abs());
    }

    let mut ratio_bad = 0;
    for s in 0..10u64 {
        let m = random_mesh(rng.gen_range(100..=484), 50 + s);
        let cfg = HierarchyConfig {
            prepass_cell: None,
            steps: vec![
                PoolStep::Qem {
                    ratio: 0.3,
                    pair_distance: 0.0,
                };
                3
            ],
            seed: 0,
        };
        let counts = build_hierarchy(&m, &cfg).unwrap().vertex_counts();
        for w in counts.windows(2) {
            ratio_bad += usize::from(w[1] != (0.3 * w[0] as f64).ceil() as usize);
        }
        let (_, report) = qem_pool(&m, 0.3, 0.0).unwrap();
        ratio_bad += usize::from(!report.reached_target);
    }
    outcome(
        vc_bad == 0 && worst_cost <= 1e-3 && ratio_bad == 0,
        format!("VC mismatches {vc_bad}/100, QEM cost gap {worst_cost:.1e}, ratio violations {ratio_bad}"),
    )
}

// 3 ---------------------------------------------------------------------

fn trace_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..1000 {
        let fine = rng.gen_range(1..200);
        let coarse = rng.gen_range(1..=fine);
        let mut assignment: Vec<usize> = (0..fine)
            .map(|i| if i < coarse { i } else { rng.gen_range(0..coarse) })
            .collect();
        assignment.shuffle(&mut rng);
        let t = PoolingTraceMap::new(assignment.clone(), coarse).unwrap();
        let c = Array2::from_shape_fn((coarse, 3), |_| rng.gen_range(-5.0..5.0));
        let back = pool_features(&unpool_features(&c, &t).unwrap(), &t, PoolMode::Mean).unwrap();
        for (a, b) in c.iter().zip(back.iter()) {
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
        }
        // a trace that misses a coarse vertex is refused
        if coarse < fine {
            let missing = assignment[0];
            let broken: Vec<usize> = assignment
                .iter()
                .map(|&a| if a == missing { (a + 1) % coarse } else { a })
                .collect();
            bad += usize::from(coarse > 1 && PoolingTraceMap::new(broken, coarse).is_ok());
        }
        bad += usize::from(PoolingTraceMap::new(vec![coarse; fine], coarse).is_ok());
    }
    let total_onto = |t: &PoolingTraceMap, n: usize| {
        t.fine_count() == n
            && t.preimage_sizes().iter().all(|&k| k > 0)
            && t.assignment().iter().all(|&c| c < t.coarse_count())
    };
    let mut op_bad = 0;
    for s in 0..30u64 {
        let m = random_mesh(rng.gen_range(10..200), 300 + s);
        let n = m.vertex_count();
        let vc = vertex_clustering_pool(&m, rng.gen_range(0.05..0.5)).unwrap().trace;
        let (qem, _) = qem_pool(&m, 0.3, 0.0).unwrap();
        let fps = fps_pool(&m, rng.gen_range(1..=n), s).unwrap().trace;
        op_bad += [vc, qem.trace, fps].iter().filter(|t| !total_onto(t, n)).count();
    }
    outcome(
        worst < 1e-12 && bad == 0 && op_bad == 0,
        format!("max unpool-pool error {worst:.1e}, accepted bad traces {bad}, pooling ops with bad traces {op_bad}"),
    )
}

// 4 ---------------------------------------------------------------------

fn gradient_verification() -> Outcome {
    let opts = GradCheckOptions::default();
    let mut worst: f64 = 0.0;
    let mut kinks = 0;
    let mut params = 0;
    for seed in 0..20 {
        let (net, g) = random_instance(1000 + seed, 64).unwrap();
        params = net.param_count();
        let r = finite_difference_check(&net, &g, &opts).unwrap();
        worst = worst.max(r.max_rel_error());
        kinks += r.kinks();
    }
    outcome(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 20 instances ({params} parameters each, {kinks} kinked entries)"),
    )
}

// 5 ---------------------------------------------------------------------

fn parameter_counts() -> Outcome {
    let count = |c: NetworkConfig| Network::new(c, 0).unwrap().param_count();
    let dcm = count(NetworkConfig::dcm(21));
    let scm_geo = count(NetworkConfig::scm(21, SingleBranch::Geodesic));
    let scm_euc = count(NetworkConfig::scm(21, SingleBranch::Euclidean));
    outcome(
        dcm == 478_933 && scm_geo == 564_949 && scm_euc == 564_949,
        format!("DCM {dcm}, SCM geodesic {scm_geo}, SCM Euclidean {scm_euc}"),
    )
}

// 6 ---------------------------------------------------------------------

fn toy_overfit() -> Outcome {
    let bench = toy_benchmark(8, 2, 0).unwrap();
    let schedule = ToySchedule::default();
    let mut dual_ok = true;
    let (mut dual_sum, mut geo_sum) = (0.0, 0.0);
    let mut rows = Vec::new();
    for seed in 0..5 {
        let d = train_toy(&bench, true, seed, &schedule).unwrap();
        let g = train_toy(&bench, false, seed, &schedule).unwrap();
        dual_ok &= d.train_accuracy >= 0.99 && d.held_out_accuracy >= 0.90;
        dual_sum += d.held_out_accuracy;
        geo_sum += g.held_out_accuracy;
        rows.push(format!(
            "seed {seed}: dual {:.3}/{:.3} in {} epochs, geodesic {:.3}/{:.3}",
            d.train_accuracy, d.held_out_accuracy, d.epochs, g.train_accuracy, g.held_out_accuracy
        ));
    }
    for r in &rows {
        println!("    {r}");
    }
    let (dual, geo) = (dual_sum / 5.0, geo_sum / 5.0);
    outcome(
        dual_ok && geo < dual,
        format!("mean held-out accuracy dual {dual:.4}, geodesic only {geo:.4}"),
    )
}

// 7 ---------------------------------------------------------------------

fn res_threshold_trend() -> Outcome {
    let bench = toy_benchmark(8, 2, 0).unwrap();
    let run = train_toy(&bench, true, 7, &ToySchedule::default()).unwrap();
    let scenes: Vec<_> = bench.train.iter().chain(&bench.held_out).cloned().collect();
    let mean = |t: usize| {
        (0..10)
            .map(|s| accuracy(&run.net, &scenes, Some(t), 100 * s).unwrap())
            .sum::<f64>()
            / 10.0
    };
    let (low, high) = (mean(15), mean(35));
    outcome(high >= low, format!("mean accuracy T=15 {low:.4}, T=35 {high:.4}"))
}

// 8 ---------------------------------------------------------------------

fn random_phi(rng: &mut ChaCha8Rng, f: usize, h: usize, o: usize, relative: bool) -> EdgeConvParams {
    let mut v = |n: usize, lo: f64, hi: f64| Array1::from_shape_fn(n, |_| rng.gen_range(lo..hi));
    let bn = |v: &mut dyn FnMut(usize, f64, f64) -> Array1<f64>, w: usize| BatchNormState {
        gamma: v(w, 0.5, 1.5),
        beta: v(w, -0.5, 0.5),
        running_mean: v(w, -0.5, 0.5),
        running_var: v(w, 0.5, 1.5),
    };
    let rows = if relative { f } else { 2 * f };
    let w1 = v(rows * h, -1.0, 1.0).into_shape_with_order((rows, h)).unwrap();
    let b1 = v(h, -0.5, 0.5);
    let bn1 = bn(&mut v, h);
    let w2 = v(h * o, -1.0, 1.0).into_shape_with_order((h, o)).unwrap();
    let b2 = v(o, -0.5, 0.5);
    let bn2 = bn(&mut v, o);
    EdgeConvParams {
        w1,
        b1,
        bn1,
        w2,
        b2,
        bn2,
        relative,
    }
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn translation_invariance() -> Outcome {
    let bench = toy_benchmark(1, 0, 3).unwrap();
    let sample = &bench.train[0];
    let level0 = sample.level0();
    let raw = |shift: Vector3<f64>| {
        let colors = level0.colors.as_ref().unwrap();
        let normals = level0.normals.as_ref().unwrap();
        let mut f = Array2::zeros((level0.vertex_count(), 9));
        for (i, p) in level0.positions.iter().enumerate() {
            for k in 0..3 {
                f[[i, k]] = p[k] + shift[k];
                f[[i, 3 + k]] = colors[i][k];
                f[[i, 6 + k]] = normals[i][k];
            }
        }
        f
    };
    let shift = Vector3::new(12.3, -45.6, 7.89);
    let (x, xs) = (raw(Vector3::zeros()), raw(shift));
    let mut worst: f64 = 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let phi = random_phi(&mut rng, 9, 16, 8, true);
    let geo = sample.hierarchy.geodesic_edges[0].with_self_loop_fallback();
    let euc = &sample.hierarchy.euclidean_edges[0].as_ref().unwrap().edges;
    for edges in [&geo, euc] {
        for train in [false, true] {
            let a = edge_conv_forward(&x.view(), edges, &phi.view(), BnPlacement::PerEdge, 1e-5, train)
                .unwrap()
                .0;
            let b = edge_conv_forward(&xs.view(), edges, &phi.view(), BnPlacement::PerEdge, 1e-5, train)
                .unwrap()
                .0;
            worst = worst.max(max_diff(&a, &b));
        }
    }
    for dual in [true, false] {
        let net = Network::new(toy_network(dual), 5).unwrap();
        let g = GraphInput::from_hierarchy(&sample.hierarchy, x.clone(), None).unwrap();
        let gs = GraphInput::from_hierarchy(&sample.hierarchy, xs.clone(), None).unwrap();
        for train in [false, true] {
            let a = net.forward(&g, train).unwrap().0;
            let b = net.forward(&gs, train).unwrap().0;
            worst = worst.max(max_diff(&a, &b));
        }
    }
    outcome(worst <= 1e-9, format!("max change under translation {worst:.1e}"))
}

// 9 ---------------------------------------------------------------------

fn permutation_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let n = rng.gen_range(2..16);
        let f = rng.gen_range(1..6);
        let x = Array2::from_shape_fn((n, f), |_| rng.gen_range(-2.0..2.0));
        let lists: Vec<Vec<usize>> = (0..n)
            .map(|_| {
                let d = rng.gen_range(1..=8);
                (0..d).map(|_| rng.gen_range(0..n)).collect()
            })
            .collect();
        let relative = rng.gen_bool(0.5);
        let placement = if rng.gen_bool(0.5) {
            BnPlacement::PerEdge
        } else {
            BnPlacement::PerVertex
        };
        let train = rng.gen_bool(0.5);
        let (h, o) = (rng.gen_range(1..8), rng.gen_range(1..6));
        let phi = random_phi(&mut rng, f, h, o, relative);
        let run = |l: &Vec<Vec<usize>>| {
            edge_conv_forward(
                &x.view(),
                &EdgeSet::from_lists(l.clone()),
                &phi.view(),
                placement,
                1e-5,
                train,
            )
            .unwrap()
            .0
        };
        let base = run(&lists);
        let mut permuted = lists.clone();
        for l in &mut permuted {
            l.shuffle(&mut rng);
        }
        let mut doubled: Vec<Vec<usize>> = lists.iter().map(|l| l.iter().chain(l).copied().collect()).collect();
        for l in &mut doubled {
            l.shuffle(&mut rng);
        }
        for other in [run(&permuted), run(&doubled)] {
            for (a, b) in base.iter().zip(other.iter()) {
                worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            }
        }
    }
    outcome(
        worst <= 1e-10,
        format!("max relative change {worst:.1e} over 1000 instances"),
    )
}
