//! Library results checked against independently computed references.

use formation_core::control::{estimator_step, EstimatorAssignment, EstimatorState, LocalMeasurement};
use formation_core::formation::{numerical_rank, square_with_diagonal, unit_square};
use formation_core::sensor::NoiseStream;
use formation_core::*;
use nalgebra::DMatrix;
use petgraph::algo::is_cyclic_directed;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn local_measurements(i: usize, p: &[Vec2], graph: &FormationGraph, heading: f64) -> Vec<LocalMeasurement> {
    graph
        .incident_edges(i)
        .iter()
        .map(|&k| {
            let j = graph.edge(k).other(i).unwrap();
            let rel = p[i] - p[j];
            LocalMeasurement {
                edge: k,
                neighbor: j,
                range: rel.norm(),
                bearing: wrap_angle(rel.angle() - heading),
            }
        })
        .collect()
}

fn potential_at(p: &[Vec2], shape: &ShapeSpec) -> f64 {
    let z = relative_positions(p, shape.graph()).unwrap();
    potential(&z, shape.desired_distances()).unwrap()
}

#[test]
fn gradient_law_is_minus_gradient_of_potential() {
    let shape = ShapeSpec::from_reference(square_with_diagonal(), unit_square()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for _ in 0..100 {
        let p: Vec<Vec2> = unit_square()
            .iter()
            .map(|q| *q + Vec2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
            .collect();
        for i in 0..4 {
            let heading = rng.random_range(-3.0..3.0);
            let local = gradient_control(i, &local_measurements(i, &p, shape.graph(), heading), &shape).unwrap();
            let u = local.rotated(heading);
            let mut fd = [0.0; 2];
            for (axis, slot) in fd.iter_mut().enumerate() {
                let mut plus = p.clone();
                let mut minus = p.clone();
                let delta = if axis == 0 {
                    Vec2::new(h, 0.0)
                } else {
                    Vec2::new(0.0, h)
                };
                plus[i] += delta;
                minus[i] -= delta;
                *slot = -(potential_at(&plus, &shape) - potential_at(&minus, &shape)) / (2.0 * h);
            }
            let fd = Vec2::new(fd[0], fd[1]);
            let rel = (u - fd).norm() / fd.norm().max(1e-3);
            assert!(rel < 1e-5, "robot {i}: law {u:?} vs finite difference {fd:?}");
        }
    }
}

/// Exact rank of an integer matrix by fraction-free (Bareiss) elimination.
fn exact_rank(rows: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..n {
        let Some(piv) = (rank..m).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, piv);
        for r in rank + 1..m {
            for c in col + 1..n {
                a[r][c] = (a[rank][col] * a[r][c] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
        if rank == m {
            break;
        }
    }
    rank
}

#[test]
fn bareiss_oracle_sanity() {
    assert_eq!(exact_rank(&[vec![1, 2], vec![2, 4]]), 1);
    assert_eq!(exact_rank(&[vec![0, 1], vec![1, 0]]), 2);
    assert_eq!(exact_rank(&[vec![0, 0, 0]]), 0);
}

#[test]
fn numerical_rank_matches_exact_rank_on_integer_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let m = rng.random_range(1..8);
        let n = rng.random_range(1..10);
        let r = rng.random_range(0..=m.min(n));
        let a: Vec<Vec<i64>> = (0..m)
            .map(|_| (0..r).map(|_| rng.random_range(-4..=4)).collect())
            .collect();
        let b: Vec<Vec<i64>> = (0..r)
            .map(|_| (0..n).map(|_| rng.random_range(-4..=4)).collect())
            .collect();
        let prod: Vec<Vec<i64>> = (0..m)
            .map(|i| (0..n).map(|j| (0..r).map(|t| a[i][t] * b[t][j]).sum()).collect())
            .collect();
        let mat = DMatrix::from_fn(m, n, |i, j| prod[i][j] as f64);
        assert_eq!(numerical_rank(&mat), exact_rank(&prod), "{prod:?}");
    }
}

fn integer_rigidity_rows(p: &[(i64, i64)], edges: &[(usize, usize)]) -> Vec<Vec<i64>> {
    edges
        .iter()
        .map(|&(i, j)| {
            let mut row = vec![0; 2 * p.len()];
            let z = (p[i].0 - p[j].0, p[i].1 - p[j].1);
            row[2 * i] = z.0;
            row[2 * i + 1] = z.1;
            row[2 * j] = -z.0;
            row[2 * j + 1] = -z.1;
            row
        })
        .collect()
}

#[test]
fn rigidity_rank_matches_exact_rank_on_lattice_frameworks() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(2..7);
        let p: Vec<(i64, i64)> = (0..n)
            .map(|_| (rng.random_range(-5..=5), rng.random_range(-5..=5)))
            .collect();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.6) && p[i] != p[j] {
                    pairs.push((i, j));
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let graph = FormationGraph::from_pairs(n, &pairs).unwrap();
        let pos: Vec<Vec2> = p.iter().map(|&(x, y)| Vec2::new(x as f64, y as f64)).collect();
        let report = check_infinitesimal_rigidity(&pos, &graph).unwrap();
        assert_eq!(
            report.rank,
            exact_rank(&integer_rigidity_rows(&p, &pairs)),
            "{p:?} {pairs:?}"
        );
        checked += 1;
    }
}

#[test]
fn estimation_cycles_agree_with_petgraph() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..500 {
        let n = rng.random_range(2..7);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.5) {
                    pairs.push(if rng.random_bool(0.5) { (i, j) } else { (j, i) });
                }
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let graph = FormationGraph::from_pairs(n, &pairs).unwrap();
        let owners: Vec<Option<usize>> = pairs
            .iter()
            .map(|&(t, h)| match rng.random_range(0..3) {
                0 => None,
                1 => Some(t),
                _ => Some(h),
            })
            .collect();
        let mut dg = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = (0..n).map(|_| dg.add_node(())).collect();
        for (k, o) in owners.iter().enumerate() {
            if let Some(r) = *o {
                let other = if pairs[k].0 == r { pairs[k].1 } else { pairs[k].0 };
                dg.add_edge(nodes[r], nodes[other], ());
            }
        }
        let assignment = EstimatorAssignment::new(owners.clone(), &graph).unwrap();
        let ours = validate_estimation_assignment(&assignment, &graph, &BiasTable::default());
        assert_eq!(
            matches!(ours, Err(Error::EstimationCycle(_))),
            is_cyclic_directed(&dg),
            "{pairs:?} {owners:?}"
        );
        if let Err(Error::EstimationCycle(c)) = ours {
            // The reported loop is a real directed loop.
            for w in 0..c.robots.len() {
                let a = c.robots[w];
                let b = c.robots[(w + 1) % c.robots.len()];
                assert!(dg.contains_edge(nodes[a], nodes[b]), "{c}");
            }
        }
    }
}

#[test]
fn tail_assignment_on_the_square_is_acyclic() {
    // Arrows tail -> head: 0->1, 1->2, 1->3, 0->3, 2->3. Robot 3 is a sink and
    // every path leads to it, so there is no loop.
    let g = square_with_diagonal();
    assert!(validate_estimation_assignment(&EstimatorAssignment::tails(&g), &g, &BiasTable::default()).is_ok());
}

#[test]
fn static_estimator_follows_its_discrete_exponential() {
    let g = FormationGraph::from_pairs(2, &[(0, 1)]).unwrap();
    let shape = ShapeSpec::from_reference(g.clone(), vec![Vec2::new(1.0, 0.0), Vec2::ZERO]).unwrap();
    let assignment = EstimatorAssignment::new(vec![Some(0)], &g).unwrap();
    let (mu, c, dt) = (0.006, 1.0, 0.2);
    let m = LocalMeasurement {
        edge: 0,
        neighbor: 1,
        range: 1.0 + mu,
        bearing: 0.0,
    };
    let mut state = EstimatorState::new(0, c, &assignment).unwrap();
    for step in 1..=50 {
        state = estimator_step(&state, &m, &shape, dt).unwrap().0;
        let expected = mu * (1.0 - (1.0f64 - c * dt).powi(step));
        assert!((state.mu_hat(0).unwrap() - expected).abs() < 1e-15);
    }
    // Per-second decay of the residual matches ln(1 - c dt) / dt.
    let r = |n: i32| mu * (1.0f64 - c * dt).powi(n);
    let slope = (r(50).ln() - r(0).ln()) / (50.0 * dt);
    assert!((slope - (1.0f64 - c * dt).ln() / dt).abs() < 1e-12);
}

#[test]
fn range_noise_statistics_at_one_meter() {
    let spec = LidarSpec {
        spike_probability: 0.0,
        ..LidarSpec::default()
    };
    let mut rng = NoiseStream::new(99, 0);
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            measure_edge(0, 1, Vec2::new(1.0, 0.0), 0.0, 0.0, &spec, &mut rng)
                .unwrap()
                .range
                - 1.0
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let std = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!((std - 0.002).abs() < 0.0005, "std {std}");
    assert!(mean.abs() < 5.0 * 0.002 / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn spike_channel_adds_its_uniform_variance() {
    let spec = LidarSpec::default();
    let mut rng = NoiseStream::new(4, 2);
    let n = 200_000;
    let d = 2.0;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            measure_edge(0, 1, Vec2::new(0.0, d), 0.0, 0.0, &spec, &mut rng)
                .unwrap()
                .range
                - d
        })
        .collect();
    let var = samples.iter().map(|s| s * s).sum::<f64>() / n as f64;
    let expected =
        (spec.accuracy_fraction * d).powi(2) + spec.spike_probability * spec.spike_offset_range.powi(2) / 3.0;
    assert!((var / expected - 1.0).abs() < 0.05, "var {var} expected {expected}");
    let spikes = samples.iter().filter(|s| s.abs() > 0.03).count() as f64 / n as f64;
    assert!(spikes > 0.005 && spikes < 0.01, "{spikes}");
}

#[test]
fn bearing_noise_is_half_the_resolution() {
    let spec = LidarSpec {
        spike_probability: 0.0,
        ..LidarSpec::default()
    };
    let mut rng = NoiseStream::new(1, 1);
    let n = 50_000;
    let sq = (0..n)
        .map(|_| {
            measure_edge(0, 1, Vec2::new(1.0, 1.0), 0.0, 0.0, &spec, &mut rng)
                .unwrap()
                .bearing
                - std::f64::consts::FRAC_PI_4
        })
        .map(|b| b * b)
        .sum::<f64>();
    let std = (sq / n as f64).sqrt();
    assert!((std / (spec.angular_resolution / 2.0) - 1.0).abs() < 0.03, "{std}");
}

#[test]
fn biased_pair_simulation_meets_closed_form() {
    let g = FormationGraph::from_pairs(2, &[(0, 1)]).unwrap();
    let refs = vec![Vec2::new(1.0, 0.0), Vec2::ZERO];
    let shape = ShapeSpec::from_reference(g.clone(), refs).unwrap();
    let mut config = SimConfig::ideal(shape, 60.0);
    config.biases = BiasTable::single(0, 0, 0.006, &g).unwrap();
    let records = run(&config, &[]).unwrap();
    let oracle = biased_pair_dynamics(0.006, 1.0, Vec2::new(1.0, 0.0)).unwrap();
    let last = records.last().unwrap();
    let p = last.positions();
    assert!(((p[0] - p[1]).norm() - 1.0 - oracle.equilibrium_error).abs() < 1e-9);
    assert!((last.edges[0].e_tail - oracle.biased_side_error).abs() < 1e-9);
    assert!((last.edges[0].e_head - oracle.unbiased_side_error).abs() < 1e-9);
    let prev = &records[records.len() - 2];
    let v = (last.centroid - prev.centroid) * (1.0 / config.dt);
    assert!((v - oracle.drift_velocity).norm() < 1e-9, "{v:?}");
}

#[test]
fn motion_parameters_reproduce_rigid_velocities() {
    let shape = ShapeSpec::from_reference(square_with_diagonal(), unit_square()).unwrap();
    let cmd = MotionCommand::new(Vec2::new(0.1, -0.05), 0.2, 0.03).unwrap();
    let sol = solve_motion_parameters(&shape, &cmd).unwrap();
    let c = Vec2::new(0.5, 0.5);
    for (i, v) in reconstruct_velocities(&shape, &sol.parameters).iter().enumerate() {
        let r = unit_square()[i] - c;
        let expected = cmd.v + Vec2::new(-r.y, r.x) * cmd.omega + r * cmd.scale;
        assert!((*v - expected).norm() < 1e-12);
    }
}
