use asyncfo_core::model::BlockLayout;
use asyncfo_core::Error;
use asyncfo_core::schedule::*;
use proptest::prelude::*;

fn layout(n: usize) -> BlockLayout {
    BlockLayout::uniform(n, 1, 1).unwrap()
}

#[test]
fn certain_updates_fill_every_tick() {
    let cfg = AsyncConfig::uniform(3, 4, 1.0, 0.5, 0.5, 3, 1);
    let s = generate_schedule(&cfg, &layout(3), 12).unwrap();
    for i in 0..3 {
        assert_eq!(s.compute_ticks(i), (0..12).collect::<Vec<_>>().as_slice());
    }
    assert!(verify_schedule(&s).is_empty());
}

#[test]
fn lazy_forcing_places_events_at_window_ends() {
    let cfg = AsyncConfig::uniform(2, 3, 0.0, 0.0, 0.0, 0, 5);
    let s = generate_schedule(&cfg, &layout(2), 9).unwrap();
    for i in 0..2 {
        assert_eq!(s.compute_ticks(i), &[2, 5, 8]);
        assert_eq!(s.measure_ticks(i), &[2, 5, 8]);
    }
    assert!(verify_schedule(&s).is_empty());
}

#[test]
fn silent_channels_get_forced_deliveries_every_other_tick() {
    let cfg = AsyncConfig::uniform(3, 2, 1.0, 1.0, 0.0, 0, 11);
    let s = generate_schedule(&cfg, &layout(3), 10).unwrap();
    for to in 0..3 {
        for from in (0..3).filter(|f| *f != to) {
            let ticks: Vec<usize> = s.deliveries(from, to).iter().map(|d| d.receive).collect();
            assert_eq!(ticks, vec![2, 4, 6, 8]);
            assert!(s.deliveries(from, to).iter().all(|d| d.origin == d.receive));
        }
    }
    assert!(verify_schedule(&s).is_empty());
}

#[test]
fn horizon_shorter_than_b_is_rejected() {
    let cfg = AsyncConfig::uniform(1, 5, 0.5, 0.5, 0.5, 0, 0);
    assert!(matches!(
        generate_schedule(&cfg, &layout(1), 4),
        Err(Error::HorizonTooShort { horizon: 4, b: 5 })
    ));
    let bad = AsyncConfig::uniform(1, 2, 0.5, 0.5, 0.5, 2, 0);
    assert!(generate_schedule(&bad, &layout(1), 4).is_err());
    let bad = AsyncConfig::uniform(1, 2, 1.5, 0.5, 0.5, 0, 0);
    assert!(generate_schedule(&bad, &layout(1), 4).is_err());
}

#[test]
fn verifier_flags_empty_compute_set() {
    let b = 3;
    let s = EventSchedule::from_parts(
        b,
        b,
        vec![vec![0], vec![]],
        vec![vec![0], vec![1]],
        vec![vec![vec![], vec![]], vec![vec![], vec![]]],
    )
    .unwrap();
    let v = verify_schedule(&s);
    assert!(v.contains(&Violation::ComputeCoverage { agent: 1, window_start: 0 }));
}

#[test]
fn verifier_flags_causality() {
    let s = EventSchedule::from_parts(
        8,
        8,
        vec![vec![0], vec![0]],
        vec![vec![0], vec![0]],
        vec![vec![vec![], vec![Delivery { receive: 3, origin: 5 }]], vec![vec![], vec![]]],
    )
    .unwrap();
    assert!(verify_schedule(&s).contains(&Violation::Causality {
        to: 0,
        from: 1,
        receive: 3,
        origin: 5
    }));
}

#[test]
fn staleness_lookup() {
    let s = EventSchedule::from_parts(
        10,
        5,
        vec![vec![0], vec![0]],
        vec![vec![1, 6], vec![0, 2]],
        vec![vec![vec![], vec![Delivery { receive: 4, origin: 2 }]], vec![vec![], vec![]]],
    )
    .unwrap();
    assert_eq!(s.staleness_at(0, 0, 7).unwrap(), 7);
    assert_eq!(s.staleness_at(0, 1, 6).unwrap(), 2);
    assert_eq!(s.staleness_at(0, 1, 3).unwrap(), 0);
    assert_eq!(s.staleness_at(1, 0, 0).unwrap(), 0);
    assert_eq!(s.measurement_staleness_at(0, 0, 5).unwrap(), 1);
    assert_eq!(s.measurement_staleness_at(0, 0, 6).unwrap(), 6);
    assert_eq!(s.measurement_staleness_at(0, 1, 6).unwrap(), 2);
    assert!(s.staleness_at(0, 2, 1).is_err());
    assert!(s.staleness_at(0, 1, 10).is_err());
}

#[test]
fn text_round_trip_and_parse_errors() {
    let cfg = AsyncConfig::uniform(3, 4, 0.3, 0.3, 0.3, 3, 42);
    let s = generate_schedule(&cfg, &layout(3), 40).unwrap();
    let back = EventSchedule::parse_text(&s.to_text()).unwrap();
    assert_eq!(back, s);
    assert!(matches!(
        EventSchedule::parse_text("horizon 3\nB x\n"),
        Err(Error::Parse { line: 2, .. })
    ));
    assert!(matches!(
        EventSchedule::parse_text("horizon 3\nB 1\ncompute 0 1\n"),
        Err(Error::Parse { line: 3, .. })
    ));
    assert!(EventSchedule::parse_text("B 1\nagents 1\n").is_err());
}

fn config() -> impl Strategy<Value = (usize, usize, f64, f64, f64, usize, u64, usize)> {
    (1usize..5, 1usize..8, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0usize..8, any::<u64>(), 0usize..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn generated_schedules_verify((agents, b, pu, pm, pc, dm, seed, extra) in config()) {
        let cfg = AsyncConfig::uniform(agents, b, pu, pm, pc, dm.min(b - 1), seed);
        let l = layout(agents);
        let s = generate_schedule(&cfg, &l, b + extra).unwrap();
        prop_assert_eq!(verify_schedule(&s), vec![]);
        prop_assert_eq!(&generate_schedule(&cfg, &l, b + extra).unwrap(), &s);
        for i in 0..agents {
            for j in 0..agents {
                let mut prev = (0, 0);
                for k in 0..s.horizon() {
                    let tau = s.staleness_at(i, j, k).unwrap();
                    let mu = s.measurement_staleness_at(i, j, k).unwrap();
                    prop_assert!(tau <= k && k - tau < b);
                    prop_assert!(mu <= k && k - mu < b);
                    prop_assert!(tau >= prev.0 && mu >= prev.1);
                    prev = (tau, mu);
                }
            }
        }
    }

    #[test]
    fn one_agent_probability_does_not_perturb_others(seed in any::<u64>(), p in 0.0f64..1.0) {
        let l = layout(3);
        let mut a = AsyncConfig::uniform(3, 4, 0.4, 0.4, 0.4, 3, seed);
        let s1 = generate_schedule(&a, &l, 30).unwrap();
        a.p_update[1] = p;
        let s2 = generate_schedule(&a, &l, 30).unwrap();
        prop_assert_eq!(s1.compute_ticks(0), s2.compute_ticks(0));
        prop_assert_eq!(s1.compute_ticks(2), s2.compute_ticks(2));
    }
}
