use mec_core::assignment::{max_weight_assignment, WeightMatrix};
use mec_core::scheduler::{queue_bounds, WogConfig, WogScheduler};
use mec_core::{solve_pk, QueuedTask, StationConfig, Topology, UtilitySpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn station(id: usize, cap: f64) -> StationConfig {
    let (e0, e1) = (0.01, 0.174);
    StationConfig {
        id,
        position: (0.0, 0.0),
        cpu_rate: 2e7,
        e_static: e0,
        e_active: e1,
        e_budget: e0 + cap * (e1 - e0),
        utility: UtilitySpec::Linear { slope: 1.0 },
    }
}

fn brute_force(w: &[Vec<f64>]) -> f64 {
    fn go(w: &[Vec<f64>], row: usize, used: u32) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        (0..w.len()).filter(|c| used & 1 << c == 0).map(|c| w[row][c] + go(w, row + 1, used | 1 << c)).fold(f64::NEG_INFINITY, f64::max)
    }
    go(w, 0, 0)
}

#[test]
fn two_station_program() {
    let stations = [station(0, 0.5), station(1, 0.5)];
    let sol = solve_pk(&stations, &[0.8, 0.2]).unwrap();
    assert_eq!(sol.y_star, vec![0.8, 0.2]);
    assert!(sol.mu_star.iter().all(|m| (m - 0.5).abs() < 1e-12));
    assert!((sol.z_star - 1.0).abs() < 1e-12);
}

#[test]
fn overloaded_program_fills_the_caps() {
    let stations = [station(0, 0.3), station(1, 0.3)];
    let sol = solve_pk(&stations, &[0.9, 0.9]).unwrap();
    assert!((sol.throughput() - 0.6).abs() < 1e-9);
    assert!(sol.mu_star.iter().all(|m| (m - 0.3).abs() < 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hungarian_matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let a = max_weight_assignment(&WeightMatrix::dense(w.clone())).unwrap();
        prop_assert!((a.total - brute_force(&w)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Queues stay within their closed-form bounds and every task is accounted for.
    #[test]
    fn wog_queues_stay_bounded(n in 2usize..=5, v in 1.0f64..20.0, rate in 0.1f64..1.0, seed in any::<u64>()) {
        let stations: Vec<StationConfig> = (0..n).map(|i| station(i, 0.25)).collect();
        let bounds = queue_bounds(v, &stations);
        let cfg = WogConfig::known_rate(v, vec![rate; n], 60);
        let mut sched = WogScheduler::new(cfg, stations, Topology::complete(n, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut arrived, mut left) = (0usize, 0usize);
        let mut id = 0;
        for t in 0..2000u64 {
            let arrivals: Vec<Option<QueuedTask>> = (0..n)
                .map(|_| (rng.random::<f64>() < rate).then(|| { id += 1; QueuedTask::new(t, id) }))
                .collect();
            arrived += arrivals.iter().flatten().count();
            let out = sched.step(&arrivals).unwrap();
            left += out.served.len() + out.dropped.len();
            for ev in &out.served {
                prop_assert!(ev.task.arrival < t);
            }
            for (m, q) in sched.states().iter().enumerate() {
                prop_assert!(q.h <= bounds.h_max[m]);
                prop_assert!(q.z <= bounds.z_max[m] + 1e-9);
                prop_assert!(q.w <= bounds.w_max[m] + 1e-9);
            }
        }
        let queued: usize = sched.states().iter().map(|q| q.q_len()).sum();
        prop_assert_eq!(arrived, left + queued);
    }
}
