//! Acceptance suite: one test per criterion, each printing a PASS line on
//! success. Tolerances and thresholds are pinned here, in code.

use cascade_core::policy::{CouplingPolicy, LocalPolicy, PolicyAssignment};
use cascade_core::radio::{assign_users, cell_loads, evaluate_handover, rsrp, RadioConfig, User};
use cascade_core::rng::{stream_rng, Stream};
use cascade_core::simulate::{
    fit_exponential_rate, integrate, perturb, rhs, sync_metrics, SimulationConfig,
};
use cascade_core::stability::{
    assess_homogeneous, audit, build_variational_matrices, convergence_rate_estimate,
    lyapunov_decrement, Verdict,
};
use cascade_core::topology::{
    build_neighbor_graph, from_edge_list, generate_ppp, spectrum, CellSite, NetworkTopology, Region,
};
use cascade_oracles as oracles;
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::time::Instant;

fn pass(criterion: u32, name: &str) {
    println!("acceptance criterion {criterion} ({name}): PASS");
}

/// Seeded N-site uniform deployment with the full Delaunay neighbor graph.
fn random_connected_topology(n: usize, seed: u64) -> NetworkTopology<f64> {
    let region = Region::new(1000.0, 1000.0).unwrap();
    let mut rng = stream_rng(seed, Stream::Sites);
    let sites: Vec<CellSite<f64>> = (0..n)
        .map(|id| CellSite {
            id,
            position: (rng.gen_range(0.0..1000.0), rng.gen_range(0.0..1000.0)),
        })
        .collect();
    let topology = build_neighbor_graph(sites, region, 1.0, seed).unwrap();
    assert!(topology.is_connected(), "Delaunay graph must be connected");
    topology
}

/// f(l) = alpha (1 - l^2).
fn saturating_policy(alpha: f64) -> LocalPolicy<f64> {
    LocalPolicy::active(vec![alpha, 0.0, -alpha]).unwrap()
}

/// Exchange with slope h(1,1) = -c.
fn exchange(c: f64) -> CouplingPolicy<f64> {
    CouplingPolicy::new(vec![], vec![], c, vec![])
}

const CRITERION_1_SEED: u64 = 20260501;
/// Chosen so the uniform mode carries a healthy share of the perturbation;
/// a draw with a near-zero mean leaves the slowest mode barely excited and
/// nothing to fit against.
const CRITERION_2_PERTURB_SEED: u64 = 911;

#[test]
fn criterion_1_homogeneous_synchronization() {
    let start = Instant::now();
    let topology = random_connected_topology(20, CRITERION_1_SEED);
    let assignment = PolicyAssignment::uniform(20, saturating_policy(1.0), exchange(1.0));

    let report = audit(&topology, &assignment).unwrap();
    assert_eq!(
        report.verdict,
        Verdict::Stable,
        "audit must conclude Stable"
    );

    let config = SimulationConfig::new(1e-3, 20.0).unwrap();
    let mut rng = stream_rng(CRITERION_1_SEED, Stream::InitialLoads);
    let initial = Array1::from_iter((0..20).map(|_| rng.gen_range(0.2..1.8)));
    let trajectory = integrate(&config, &initial, &topology, &assignment).unwrap();
    assert!(!trajectory.blowup);

    let final_dev = trajectory
        .final_state()
        .unwrap()
        .iter()
        .map(|&l| (l - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(
        final_dev < 1e-3,
        "loads must be within 1e-3 of 1 by t = 20, worst {final_dev:e}"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "runtime {elapsed:?} exceeds 5 s"
    );
    pass(1, "homogeneous synchronization");
}

#[test]
fn criterion_2_rate_agreement() {
    // Same scenario as criterion 1, restarted at 1 + perturb(0.01).
    let topology = random_connected_topology(20, CRITERION_1_SEED);
    let assignment = PolicyAssignment::uniform(20, saturating_policy(1.0), exchange(1.0));
    let config = SimulationConfig::new(1e-3, 15.0)
        .unwrap()
        .with_sync_tolerance(1e-9)
        .with_record_stride(5);
    let initial = perturb(&Array1::from_elem(20, 1.0), 0.01, CRITERION_2_PERTURB_SEED);
    let trajectory = integrate(&config, &initial, &topology, &assignment).unwrap();
    let metrics = sync_metrics(&trajectory, &config).unwrap();

    let lap_spectrum = spectrum(&topology.laplacian()).unwrap();
    let assessment = assess_homogeneous(-2.0, -1.0, &lap_spectrum);
    let worst = assessment.slowest_rate;
    let empirical = metrics.empirical_rate.expect("rate fit must succeed");
    let relative = ((empirical - worst) / worst).abs();
    assert!(
        relative < 0.10,
        "empirical {empirical} vs analytic worst {worst}: off by {:.1}%",
        relative * 100.0
    );

    // Ordering check: lambda_2 of C20 vs K20 differs by far more than 3x,
    // and the spread (pure disagreement) decay must order the same way.
    let ring: Vec<(usize, usize)> = (0..20).map(|i| (i, (i + 1) % 20)).collect();
    let c20 = from_edge_list::<f64>(20, &ring).unwrap();
    let complete: Vec<(usize, usize)> = (0..20)
        .flat_map(|i| (i + 1..20).map(move |j| (i, j)))
        .collect();
    let k20 = from_edge_list::<f64>(20, &complete).unwrap();

    let lambda2 = |t: &NetworkTopology<f64>| {
        spectrum(&t.laplacian())
            .unwrap()
            .algebraic_connectivity
            .unwrap()
    };
    let (l2_ring, l2_complete) = (lambda2(&c20), lambda2(&k20));
    assert!(l2_complete / l2_ring >= 3.0);

    let spread_rate = |t: &NetworkTopology<f64>, horizon: f64, dt: f64| {
        let assignment = PolicyAssignment::uniform(20, saturating_policy(1.0), exchange(1.0));
        let config = SimulationConfig::new(dt, horizon)
            .unwrap()
            .with_record_stride(2);
        let initial = perturb(&Array1::from_elem(20, 1.0), 0.01, CRITERION_1_SEED + 1);
        let trajectory = integrate(&config, &initial, t, &assignment).unwrap();
        let spreads = trajectory.spreads();
        fit_exponential_rate(&trajectory.times, &spreads, 1e-7, 0.5 * spreads[0])
            .expect("spread fit")
    };
    // K20's slowest disagreement mode decays at -22; resolve it with a
    // finer step over a shorter horizon.
    let rate_ring = spread_rate(&c20, 15.0, 1e-3);
    let rate_complete = spread_rate(&k20, 1.0, 1e-4);
    assert!(
        rate_complete < rate_ring,
        "larger lambda_2 must decay disagreement faster: {rate_complete} vs {rate_ring}"
    );

    // And each matches its own analytic disagreement rate.
    let check = |t: &NetworkTopology<f64>, rate: f64| {
        let s = spectrum(&t.laplacian()).unwrap();
        let a = assess_homogeneous(-2.0, -1.0, &s);
        let want = convergence_rate_estimate(&a).unwrap().disagreement.unwrap();
        let relative = ((rate - want) / want).abs();
        assert!(
            relative < 0.10,
            "spread rate {rate} vs analytic {want}: off by {:.1}%",
            relative * 100.0
        );
    };
    check(&c20, rate_ring);
    check(&k20, rate_complete);
    pass(2, "rate agreement");
}

#[test]
fn criterion_3_linearization_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    for scenario in 0..50 {
        let n = rng.gen_range(2..=15usize);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_range(0.0..1.0) < 0.5 {
                    edges.push((i, j));
                }
            }
        }
        let topology = from_edge_list::<f64>(n, &edges).unwrap();
        let homogeneous = scenario % 2 == 0;

        let random_policy = |rng: &mut ChaCha8Rng| {
            let degree = rng.gen_range(1..=3usize);
            let mut coeffs: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let shift: f64 = coeffs.iter().sum();
            coeffs[0] -= shift;
            LocalPolicy::active(coeffs).unwrap()
        };
        let random_coupling = |rng: &mut ChaCha8Rng| {
            CouplingPolicy::new(
                vec![rng.gen_range(-0.5..0.5)],
                vec![rng.gen_range(-0.5..0.5)],
                rng.gen_range(-1.0..1.0),
                vec![],
            )
        };

        let assignment = if homogeneous {
            PolicyAssignment::uniform(n, random_policy(&mut rng), random_coupling(&mut rng))
        } else {
            let locals = (0..n).map(|_| random_policy(&mut rng)).collect();
            PolicyAssignment::new(locals, random_coupling(&mut rng), BTreeMap::new())
        };
        let matrices = build_variational_matrices(&topology, &assignment, 1.0).unwrap();

        let step = 1e-6;
        let ones = Array1::from_elem(n, 1.0);
        for col in 0..n {
            let mut up = ones.clone();
            let mut down = ones.clone();
            up[col] += step;
            down[col] -= step;
            let fu = rhs(&up, &topology, &assignment).unwrap();
            let fd = rhs(&down, &topology, &assignment).unwrap();
            for row in 0..n {
                let fd_entry = (fu[row] - fd[row]) / (2.0 * step);
                assert!(
                    (fd_entry - matrices.j[[row, col]]).abs() <= 1e-5,
                    "scenario {scenario}: J[{row}][{col}] finite-difference mismatch"
                );
            }
        }

        if homogeneous {
            let f_prime = cascade_core::policy::local_derivative(assignment.local(0), 1.0).unwrap();
            let h = cascade_core::policy::coupling_slope_h(assignment.default_coupling(), 1.0);
            let expected = {
                let mut j = topology.laplacian() * h;
                for i in 0..n {
                    j[[i, i]] += f_prime;
                }
                j
            };
            for i in 0..n {
                for j in 0..n {
                    assert!(
                        (matrices.j[[i, j]] - expected[[i, j]]).abs() <= 1e-12,
                        "homogeneous reduction to f'I + hL failed"
                    );
                }
            }
        }
    }
    pass(3, "linearization identity");
}

#[test]
fn criterion_4_lyapunov_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for _ in 0..500 {
        let n = rng.gen_range(2..=20usize);
        let mut edges = Vec::new();
        let mut pairs = BTreeMap::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_range(0.0..1.0) < 0.5 {
                    edges.push((i, j));
                    // One shared coupling per unordered pair keeps Q symmetric.
                    let coupling = exchange(rng.gen_range(-2.0..2.0));
                    pairs.insert((i, j), coupling.clone());
                    pairs.insert((j, i), coupling);
                }
            }
        }
        let topology = from_edge_list::<f64>(n, &edges).unwrap();
        // Zero local slope isolates the coupling quadratic form.
        let flat = LocalPolicy::active(vec![0.0]).unwrap();
        let assignment = PolicyAssignment::new(vec![flat; n], exchange(1.0), pairs);
        let matrices = build_variational_matrices(&topology, &assignment, 1.0).unwrap();

        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let decrement = lyapunov_decrement(&matrices, &x).unwrap();
        let mut pairwise = 0.0;
        for i in 0..n {
            for j in 0..n {
                pairwise += matrices.q[[i, j]] * (x[i] - x[j]).powi(2);
            }
        }
        // V' = 2 x^T (K - Q) x here, and the identity gives x^T (K - Q) x
        // = 1/2 sum q_ij (x_i - x_j)^2.
        let scale = decrement.abs().max(1e-3);
        assert!(
            (decrement - pairwise).abs() / scale <= 1e-9,
            "quadratic-form identity violated: {decrement} vs {pairwise}"
        );
    }
    pass(4, "Lyapunov quadratic-form identity");
}

#[test]
fn criterion_5_spectrum_oracle() {
    let mut five_node_classes = 0usize;
    for n in 1..=5usize {
        for edges in oracles::labeled_graphs_up_to_iso(n) {
            if n == 5 {
                five_node_classes += 1;
            }
            let topology = from_edge_list::<f64>(n, &edges).unwrap();
            let lap = topology.laplacian();
            let summary = spectrum(&lap).unwrap();
            let matrix: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| lap[[i, j]]).collect())
                .collect();
            let want = oracles::symmetric_eigenvalues_charpoly(&matrix);
            for (got, want) in summary.eigenvalues.iter().zip(&want) {
                assert!(
                    (got - want).abs() <= 1e-8,
                    "n={n} edges={edges:?}: {got} vs oracle {want}"
                );
            }
        }
    }
    assert_eq!(five_node_classes, 34, "graphs on 5 nodes up to isomorphism");

    // Closed forms: P3 is {0, 1, 3}, K_N is {0, N, .., N}.
    let p3 = from_edge_list::<f64>(3, &[(0, 1), (1, 2)]).unwrap();
    let s = spectrum(&p3.laplacian()).unwrap();
    assert_eq!(s.eigenvalues[0], 0.0);
    assert!((s.eigenvalues[1] - 1.0).abs() <= 1e-12);
    assert!((s.eigenvalues[2] - 3.0).abs() <= 1e-12);
    for n in 2..=5usize {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let kn = from_edge_list::<f64>(n, &edges).unwrap();
        let s = spectrum(&kn.laplacian()).unwrap();
        assert_eq!(s.eigenvalues[0], 0.0);
        for &l in &s.eigenvalues[1..] {
            assert!((l - n as f64).abs() <= 1e-12);
        }
    }
    pass(5, "spectrum oracle");
}

const CRITERION_6_SEED: u64 = 1;

/// f2(l) = alpha (l - gamma)(1 - l) as coefficients, shared by both branches.
fn sleep_policy(alpha: f64, gamma: f64) -> LocalPolicy<f64> {
    let coeffs = vec![-alpha * gamma, alpha * (1.0 + gamma), -alpha];
    LocalPolicy::sleep_capable(gamma, coeffs.clone(), coeffs).unwrap()
}

fn bifurcation_assignment(n: usize, gamma: f64, seed: u64) -> PolicyAssignment<f64> {
    // f1 = alpha (1 - l) on active cells, f2 on a seeded 30% subset;
    // exchange beta (l_i - l_j) with beta = -3 and drain beta * l while
    // sleeping.
    let beta = -3.0;
    let mut locals = vec![LocalPolicy::active(vec![1.0, -1.0]).unwrap(); n];
    let mut rng = stream_rng(seed, Stream::PolicySelection);
    for local in locals.iter_mut() {
        if rng.gen_range(0.0..1.0) < 0.3 {
            *local = sleep_policy(1.0, gamma);
        }
    }
    let coupling = CouplingPolicy::new(vec![], vec![], -beta, vec![0.0, beta]);
    PolicyAssignment::new(locals, coupling, BTreeMap::new())
}

#[test]
fn criterion_6_sleep_mode_bifurcation() {
    let start = Instant::now();
    let region = Region::new(1000.0, 1000.0).unwrap();
    let sites = generate_ppp(30e-6, region, CRITERION_6_SEED).unwrap();
    let topology = build_neighbor_graph(sites, region, 1.0, CRITERION_6_SEED).unwrap();
    let n = topology.n_cells();

    let config = SimulationConfig::new(2e-3, 30.0).unwrap();
    let mut rng = stream_rng(CRITERION_6_SEED, Stream::InitialLoads);
    let initial = Array1::from_iter((0..n).map(|_| rng.gen_range(0.2..1.8)));

    // Small threshold: nobody sleeps, everyone reaches full load.
    let gentle = bifurcation_assignment(n, 0.05, CRITERION_6_SEED);
    assert!(!gentle.sleep_capable_cells().is_empty());
    let trajectory = integrate(&config, &initial, &topology, &gentle).unwrap();
    let metrics = sync_metrics(&trajectory, &config).unwrap();
    assert!(
        metrics.synchronized,
        "gamma = 0.05 must synchronize to 1 within 1e-3"
    );

    // Large threshold: some sleep-capable cells start below gamma, shed
    // their load and park near zero; global synchronization fails.
    let gamma = 0.5;
    let harsh = bifurcation_assignment(n, gamma, CRITERION_6_SEED);
    let sleep_cells = harsh.sleep_capable_cells();
    assert!(
        sleep_cells.iter().any(|&c| initial[c] < gamma),
        "seeded scenario must start at least one sleep-capable cell below gamma"
    );
    let trajectory = integrate(&config, &initial, &topology, &harsh).unwrap();
    assert!(!trajectory.blowup);
    let metrics = sync_metrics(&trajectory, &config).unwrap();
    assert!(
        !metrics.synchronized,
        "gamma = 0.5 must break synchronization"
    );

    let final_state = trajectory.final_state().unwrap();
    let final_flags = trajectory.mode_flags.last().unwrap();
    let slept: Vec<usize> = (0..n).filter(|&c| final_flags.is_sleeping(c)).collect();
    assert!(
        !slept.is_empty(),
        "at least one cell must end below gamma (slept)"
    );
    for &cell in &slept {
        assert!(final_state[cell] < gamma);
        assert!(
            final_state[cell].abs() < 0.5 * gamma,
            "slept cell {cell} must park near zero, got {}",
            final_state[cell]
        );
    }

    let report = audit(&topology, &harsh).unwrap();
    assert_eq!(report.verdict, Verdict::NotGuaranteed);
    for &cell in &sleep_cells {
        assert!(
            report
                .culprits
                .iter()
                .any(|c| c.cell == cell && c.reason.contains("sleep mode")),
            "audit must name sleep-capable cell {cell}"
        );
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "runtime {elapsed:?} exceeds 10 s"
    );
    pass(6, "sleep-mode bifurcation");
}

#[test]
fn criterion_7_radio_layer() {
    // Harmonic-share identity, U_i in 1..=50: U * share = B * H(U) exactly
    // (to floating round-off of the same formula).
    let sites = [CellSite {
        id: 0,
        position: (0.0, 0.0),
    }];
    let config = RadioConfig::uniform(1, 40.0, 3.0, 30.0, -100.0, 100, 180e3, 2.0).unwrap();
    for u in 1..=50usize {
        let users: Vec<User<f64>> = (0..u)
            .map(|k| User {
                position: (5.0 + k as f64, 2.0),
                demand_bps: 1e5,
            })
            .collect();
        let assignment = assign_users(&sites, users, &config).unwrap();
        let snapshot = cell_loads(&sites, &assignment, &config).unwrap();
        let share = snapshot.per_cell_share[0].unwrap();
        let harmonic: f64 = (1..=u).map(|x| 1.0 / x as f64).sum();
        assert!(
            (share - 100.0 / u as f64 * harmonic).abs() < 1e-9,
            "harmonic share identity at U = {u}"
        );
    }

    // Handover truth table on 1000 random draws.
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    for _ in 0..1000 {
        let m_i = rng.gen_range(-130.0..-50.0);
        let m_j = rng.gen_range(-130.0..-50.0);
        let t_ij = rng.gen_range(-12.0..12.0);
        let t_ji = rng.gen_range(-12.0..12.0);
        let hys = rng.gen_range(0.0..8.0);
        assert_eq!(
            evaluate_handover(m_i, m_j, t_ij, t_ji, hys),
            m_j + t_ji > hys + m_i + t_ij
        );
    }

    // Zero CIO, zero hysteresis: the fixpoint assignment is exactly
    // max-RSRP, over 100 random instances.
    for _ in 0..100 {
        let n = rng.gen_range(2..=6usize);
        let sites: Vec<CellSite<f64>> = (0..n)
            .map(|id| CellSite {
                id,
                position: (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)),
            })
            .collect();
        let mut config = RadioConfig::uniform(n, 40.0, 3.2, 30.0, -100.0, 100, 180e3, 0.0).unwrap();
        config.hysteresis_db = 0.0;
        let users: Vec<User<f64>> = (0..10)
            .map(|_| User {
                position: (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..2000.0)),
                demand_bps: 1e6,
            })
            .collect();
        let assignment = assign_users(&sites, users.clone(), &config).unwrap();
        for (u, user) in users.iter().enumerate() {
            let best = (0..n)
                .max_by(|&a, &b| {
                    rsrp(&sites[a], user, &config)
                        .partial_cmp(&rsrp(&sites[b], user, &config))
                        .unwrap()
                })
                .unwrap();
            assert_eq!(assignment.serving[u], best);
        }
    }
    pass(7, "radio layer");
}

#[test]
fn criterion_8_pipeline_determinism() {
    let binary = env!("CARGO_BIN_EXE_cascade");
    let temp = tempfile::tempdir().unwrap();
    let scenario_path = temp.path().join("scenario.json");
    std::fs::write(
        &scenario_path,
        serde_json::json!({
            "schema": 1,
            "seed": 5,
            "topology": {"ppp": {
                "intensity_per_km2": 20,
                "region_m": [1000.0, 1000.0],
                "connection_probability": 0.9
            }},
            "policies": {"default": {"mode": "active", "coeffs": [1.0, 0.0, -1.0]}},
            "coupling": {"default": {"p": [], "q": [], "c": 1.0, "sleep_drain": []}},
            "simulation": {
                "dt": 0.002,
                "horizon": 10.0,
                "sync_tolerance": 0.001,
                "record_stride": 10,
                "initial": {"uniform": {"low": 0.2, "high": 1.8}}
            }
        })
        .to_string(),
    )
    .unwrap();

    let run_pipeline = |dir: &std::path::Path| {
        let run = |args: &[&str]| {
            let output = std::process::Command::new(binary)
                .args(args)
                .output()
                .expect("spawn cascade");
            assert!(output.status.code().is_some(), "command must exit normally");
            output
        };
        let dir = dir.to_str().unwrap();
        run(&[
            "generate",
            "--intensity",
            "20",
            "--region",
            "1000x1000",
            "--prob",
            "0.9",
            "--seed",
            "5",
            "--out-dir",
            dir,
        ]);
        let scenario = scenario_path.to_str().unwrap();
        run(&["audit", "--scenario", scenario, "--out-dir", dir]);
        run(&["simulate", "--scenario", scenario, "--out-dir", dir]);
    };

    let dir_a = temp.path().join("a");
    let dir_b = temp.path().join("b");
    run_pipeline(&dir_a);
    run_pipeline(&dir_b);

    let mut names: Vec<String> = std::fs::read_dir(&dir_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(
        names.contains(&"trajectory.csv".to_string())
            && names.contains(&"stability_report.json".to_string())
            && names.contains(&"topology.json".to_string())
            && names.contains(&"spectrum.csv".to_string())
            && names.contains(&"concordance.csv".to_string()),
        "pipeline must produce all artifacts, got {names:?}"
    );
    for name in &names {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
    pass(8, "pipeline determinism");
}
