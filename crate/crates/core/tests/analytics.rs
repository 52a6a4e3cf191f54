use seedevo::analytics::{compare_runs, welch_t_test, TestReport, Verdict};
use seedevo::environments::{run_policy_episode, Move};
use seedevo::rng::DeterministicRng;
use seedevo::{GridWorld, StubEnvironment};

/// (a, b, t, p) from an independent Welch implementation, frozen.
const REFERENCE: &[(&[f64], &[f64], f64, f64)] = &[
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 3.0, 4.0, 5.0, 6.0], -1.0, 0.34659350708733416),
    (&[0.0, 0.0, 0.0], &[10.0, 10.0, 10.0001], -300001.0000006992, 1.1111037037170434e-11),
    (
        &[3385.0, 3700.0, 3100.0, 2900.0, 4100.0, 3500.0],
        &[3790.0, 3650.0, 3900.0, 3720.0, 3810.0],
        -1.8155075976052777,
        0.12307993340264867,
    ),
    (
        &[1.5, 2.25, 0.75, 3.0],
        &[10.0, -2.0, 4.5, 7.25, 1.0, 0.5, 8.0],
        -1.3109458237485954,
        0.23162820020079472,
    ),
    (
        &[0.1, 0.2, 0.15, 0.22, 0.18, 0.3, 0.11, 0.19],
        &[0.25, 0.31, 0.28, 0.4, 0.22],
        -2.8922495054529245,
        0.019835697489192068,
    ),
    (
        &[12.0, 15.0, 11.0, 19.0, 14.0],
        &[13.0, 14.0, 16.0, 12.0, 15.0, 17.0, 11.0, 13.0, 14.0],
        0.20332606605477938,
        0.8459387082485834,
    ),
];

#[test]
fn welch_matches_reference_values() {
    for &(a, b, t, p) in REFERENCE {
        let (got_t, got_p) = welch_t_test(a, b).unwrap();
        assert!((got_t - t).abs() <= 1e-6 * t.abs().max(1.0), "t {got_t} vs {t}");
        assert!((got_p - p).abs() <= 1e-6, "p {got_p} vs {p}");
    }
}

fn random_sample(rng: &mut DeterministicRng) -> Vec<f64> {
    let n = 2 + rng.below(30);
    let shift = rng.normal() * 5.0;
    let scale = 0.1 + rng.uniform() * 10.0;
    (0..n).map(|_| shift + scale * rng.normal()).collect()
}

#[test]
fn welch_symmetry_scale_and_range() {
    let mut rng = DeterministicRng::new(2024);
    for _ in 0..1000 {
        let a = random_sample(&mut rng);
        let b = random_sample(&mut rng);
        let (t, p) = welch_t_test(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&p));
        let (t_swap, p_swap) = welch_t_test(&b, &a).unwrap();
        assert!((t + t_swap).abs() <= 1e-9 * t.abs().max(1.0));
        assert!((p - p_swap).abs() <= 1e-9);
        let c = 0.01 + rng.uniform() * 100.0;
        let shift = rng.normal() * 50.0;
        let scaled = |v: &[f64]| v.iter().map(|x| c * x + shift).collect::<Vec<_>>();
        let (t_scaled, p_scaled) = welch_t_test(&scaled(&a), &scaled(&b)).unwrap();
        assert!((t - t_scaled).abs() <= 1e-6 * t.abs().max(1.0), "{t} vs {t_scaled}");
        assert!((p - p_scaled).abs() <= 1e-6);
    }
}

#[test]
fn verdict_follows_alpha() {
    let a = [0.1, 0.2, 0.15, 0.22, 0.18, 0.3, 0.11, 0.19];
    let b = [0.25, 0.31, 0.28, 0.4, 0.22];
    // p is about 0.0198
    assert_eq!(compare_runs(&a, &b, 0.05).unwrap().verdict, Verdict::BBetter);
    assert_eq!(compare_runs(&a, &b, 0.01).unwrap().verdict, Verdict::NoSignificantDifference);
}

/// Diamond-free route to the exit of the shipped layout, then no-ops.
fn exit_only_move(t: usize) -> Move {
    match "RUURRRRDD".as_bytes().get(t) {
        Some(b'U') => Move::Up,
        Some(b'D') => Move::Down,
        Some(b'R') => Move::Right,
        _ => Move::Noop,
    }
}

#[test]
fn reports_for_scripted_policies() {
    let episodes: Vec<_> = (0..6)
        .map(|s| run_policy_episode(&StubEnvironment::Constant, s, 10, |_| Ok(1)).unwrap())
        .collect();
    let report = TestReport::from_episodes(&episodes).unwrap();
    assert_eq!((report.mean_score, report.std_score), (1.0, 0.0));
    assert_eq!((report.mean_lifespan, report.std_lifespan), (10.0, 0.0));

    let world = GridWorld::deceptive();
    let episodes: Vec<_> = (0..5)
        .map(|s| {
            let mut t = 0;
            run_policy_episode(&world, s, 64, |_| {
                t += 1;
                Ok(exit_only_move(t - 1).index())
            })
            .unwrap()
        })
        .collect();
    let report = TestReport::from_episodes(&episodes).unwrap();
    assert_eq!((report.mean_score, report.std_score), (1.0, 0.0));
}
