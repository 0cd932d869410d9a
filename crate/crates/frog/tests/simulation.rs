use frog::config::Arrival;
use frog::population::ArchetypeTable;
use frog::report::{read_metrics, read_trace, write_metrics, write_trace};
use frog::{run, run_with_table, Policy, SimConfig};
use proptest::prelude::*;

fn desk(policy: Policy, seed: u64) -> SimConfig {
    SimConfig { seed, tasks: 500, workers: 50, categories: 5, policy, ..SimConfig::default() }
}

/// Probability that a strict majority is correct, by enumerating every outcome.
fn majority_by_enumeration(acc: &[f64]) -> f64 {
    let k = acc.len();
    (0u32..1 << k)
        .filter(|mask| mask.count_ones() as usize * 2 > k)
        .map(|mask| (0..k).map(|j| if mask >> j & 1 == 1 { acc[j] } else { 1.0 - acc[j] }).product::<f64>())
        .sum()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 }
}

#[test]
fn completed_tasks_meet_their_threshold() {
    for policy in Policy::ALL {
        for skip in [0.0, 0.2] {
            let r = run(&SimConfig { skip_probability: skip, ..desk(policy, 7) }).unwrap();
            for (rec, set) in r.tasks.iter().zip(&r.answer_sets) {
                let Some(set) = set else {
                    assert!(rec.finish.is_none());
                    continue;
                };
                assert_eq!(set.len() % 2, 1);
                assert_eq!(set.len(), rec.answers);
                let p = majority_by_enumeration(set);
                assert!(p >= rec.quality - 1e-12, "{policy:?} task {} {p} < {}", rec.task, rec.quality);
                assert!((p - rec.expected_accuracy.unwrap()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn same_seed_same_bytes() {
    for policy in Policy::ALL {
        let cfg = SimConfig { skip_probability: 0.1, ..desk(policy, 11) };
        let bytes = || {
            let r = run(&cfg).unwrap();
            let (mut m, mut t) = (Vec::new(), Vec::new());
            write_metrics([&r.metrics], &mut m).unwrap();
            write_trace(&r.tasks, &mut t).unwrap();
            (m, t)
        };
        assert_eq!(bytes(), bytes());
    }
    let a = run(&desk(Policy::Bbs, 1)).unwrap();
    let b = run(&desk(Policy::Bbs, 2)).unwrap();
    assert_ne!(a.metrics.max_latency, b.metrics.max_latency);
}

#[test]
fn csv_round_trip() {
    let r = run(&SimConfig { skip_probability: 0.1, ..desk(Policy::Rbs, 3) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (mp, tp) = (dir.path().join("metrics.csv"), dir.path().join("trace.csv"));
    write_metrics([&r.metrics], std::fs::File::create(&mp).unwrap()).unwrap();
    write_trace(&r.tasks, std::fs::File::create(&tp).unwrap()).unwrap();
    assert_eq!(read_metrics(std::fs::File::open(&mp).unwrap()).unwrap(), vec![r.metrics.clone()]);
    assert_eq!(read_trace(std::fs::File::open(&tp).unwrap()).unwrap(), r.tasks);
    let header = std::fs::read_to_string(&mp).unwrap();
    assert!(header.starts_with("seed,policy,m,n,L,qlo,qhi,max_latency,avg_accuracy,throughput\n"));
}

#[test]
fn perfect_workers() {
    let table = ArchetypeTable::from_csv(
        "archetype,column,label,accuracy,mean_response,variance\n1,0,A,1.0,12,4\n2,0,A,1.0,20,4\n".as_bytes(),
        "perfect",
    )
    .unwrap();
    for policy in Policy::ALL {
        let r = run_with_table(&SimConfig { quality_range: [0.8, 0.8], ..desk(policy, 5) }, &table);
        assert_eq!(r.metrics.avg_accuracy, 1.0, "{policy:?}");
        assert_eq!(r.completed, 500);
    }
}

#[test]
fn empty_crowd_runs_to_the_horizon() {
    for policy in Policy::ALL {
        let r = run(&SimConfig { workers: 0, horizon: 7200.0, ..desk(policy, 0) }).unwrap();
        assert_eq!(r.completed, 0);
        assert_eq!(r.unfinished, 500);
        assert_eq!(r.metrics.max_latency, 7200.0);
        assert_eq!(r.metrics.avg_accuracy, 0.0);
    }
}

#[test]
fn horizon_cuts_off_long_runs() {
    let r = run(&SimConfig { horizon: 60.0, ..desk(Policy::Bbs, 0) }).unwrap();
    assert!(r.completed > 0 && r.unfinished > 0);
    assert_eq!(r.end_time, 60.0);
    assert_eq!(r.metrics.max_latency, 60.0);
    assert!(r.counts.balanced());
}

#[test]
fn bbs_beats_random_at_default_scale() {
    let wins = (0..10)
        .filter(|&seed| {
            let bbs = run(&SimConfig { seed, policy: Policy::Bbs, ..SimConfig::default() }).unwrap();
            let random = run(&SimConfig { seed, policy: Policy::Random, ..SimConfig::default() }).unwrap();
            bbs.metrics.max_latency < random.metrics.max_latency
        })
        .count();
    assert!(wins >= 9, "BBS won {wins} of 10");
}

#[test]
fn more_workers_never_slow_bbs_down() {
    let mut last = f64::INFINITY;
    for n in [50, 100, 150] {
        let m = median((0..5).map(|s| run(&SimConfig { workers: n, ..desk(Policy::Bbs, s) }).unwrap().metrics.max_latency).collect());
        assert!(m <= last, "n={n}: {m} > {last}");
        last = m;
    }
}

#[test]
fn streaming_arrivals_favour_bbs() {
    let stream = |policy, seed| SimConfig { arrival: Arrival::Poisson { rate: 2.0 }, ..desk(policy, seed) };
    let bbs = median((0..5).map(|s| run(&stream(Policy::Bbs, s)).unwrap().metrics.max_latency).collect());
    let random = median((0..5).map(|s| run(&stream(Policy::Random, s)).unwrap().metrics.max_latency).collect());
    assert!(bbs < 0.7 * random, "{bbs} vs {random}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_assignment_is_accounted_for(
        seed in any::<u64>(),
        policy in prop::sample::select(Policy::ALL.to_vec()),
        tasks in 0usize..120,
        workers in 0usize..25,
        categories in 1usize..6,
        skip in 0.0f64..0.5,
        streaming in any::<bool>(),
        refresh in any::<bool>(),
        horizon in prop::sample::select(vec![45.0, 600.0, 604_800.0]),
    ) {
        let cfg = SimConfig {
            seed, policy, tasks, workers, categories, horizon,
            skip_probability: skip,
            accuracy_refresh: refresh,
            arrival: if streaming { Arrival::Poisson { rate: 1.0 } } else { Arrival::Batch },
            ..SimConfig::default()
        };
        let r = run(&cfg).unwrap();
        prop_assert!(r.counts.balanced(), "{:?}", r.counts);
        prop_assert_eq!(r.completed + r.unfinished, tasks);
        prop_assert!((0.0..=1.0).contains(&r.metrics.avg_accuracy));
        prop_assert!(r.metrics.max_latency >= 0.0);
        for t in &r.tasks {
            if let (Some(l), Some(f)) = (t.latency, t.finish) {
                prop_assert!((f - t.start - l).abs() < 1e-9 && l >= 0.0 && f <= horizon);
                prop_assert!(t.expected_accuracy.unwrap() >= t.quality);
            }
        }
    }
}
