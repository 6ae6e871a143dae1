use asyncfo_core::objective::EpochConstants;
use asyncfo_core::Error;
use asyncfo_core::theory::*;
use proptest::prelude::*;

fn ec(l_x: f64, l_y: f64, l: f64, lambda: f64) -> EpochConstants {
    EpochConstants {
        l_x,
        l_y,
        l,
        l_j: 1.0,
        m_x: 1.0,
        m_y: 1.0,
        p_strong: 1.0,
        sigma: 0.0,
        l_t: 0.0,
        delta: 0.0,
        lambda_eb: lambda,
    }
}

#[test]
fn de_examples() {
    let (d, e) = de_raw(0.1, 2.0, 2.0, 1.0, 1.0, 1.0);
    assert!((d - 0.6).abs() < 1e-15);
    assert_eq!(e, 6.0);
    assert_eq!(de_raw(0.3, 4.0, 3.0, 0.0, 0.0, 2.0), (1.0, 0.0));
    let (d, _) = de_raw(1e-14, 5.0, 5.0, 3.0, 2.0, 1.5);
    assert!((d - 1.0).abs() < 1e-12);
}

#[test]
fn fg_lipschitz_free_terms() {
    let p = FgParams { b: 1.0, n: 1.0, m: 1.0, norm_c: 1.0, l_x: 0.0, l_y: 0.0, l: 0.0, lambda: 1.0 };
    assert_eq!(fg_raw(&p), (20.5, 0.0));
}

/// Every term at `B = ‖C‖ = L = L_x = L_y = N = m = 2, λ = 3`, where a
/// term equals `coef · 2^(degree without λ) · 3^(λ degree) · 10^weighted`.
#[test]
fn each_term_at_pinned_point() {
    let p = FgParams { b: 2.0, n: 2.0, m: 2.0, norm_c: 2.0, l_x: 2.0, l_y: 2.0, l: 2.0, lambda: 3.0 };
    let f_expected = [
        23592960.0, 11796480.0, 46080.0, 1474560.0, 737280.0, 5760.0, 368640.0, 11520.0, 98304.0, 589824.0,
        49152.0, 24576.0, 3072.0, 3072.0, 98304.0, 147456.0, 18432.0, 552960.0, 288.0, 4096.0, 6144.0, 1536.0,
        768.0, 6144.0, 192.0, 3072.0, 192.0, 128.0, 17280.0, 4608.0, 96.0, 648.0, 72.0, 270.0, 48.0, 2.0,
    ];
    let g_expected = [
        5898240.0, 184320.0, 11796480.0, 737280.0, 368640.0, 23040.0, 49152.0, 294912.0, 24576.0, 12288.0,
        1536.0, 1536.0, 49152.0, 73728.0, 9216.0, 276480.0, 2048.0, 3072.0, 768.0, 384.0, 3072.0, 32.0, 1536.0,
        2304.0, 8640.0, 64.0, 96.0, 12.0, 96.0, 4.0,
    ];
    assert_eq!(F_TERMS.len(), f_expected.len());
    assert_eq!(G_TERMS.len(), g_expected.len());
    for (t, want) in F_TERMS.iter().zip(f_expected) {
        assert_eq!(t.eval(&p), want, "F term {}", t.label);
    }
    for (t, want) in G_TERMS.iter().zip(g_expected) {
        assert_eq!(t.eval(&p), want, "G term {}", t.label);
    }
}

#[test]
fn lambda_only_moves_lambda_terms() {
    let base = FgParams { b: 3.0, n: 4.0, m: 5.0, norm_c: 0.7, l_x: 1.3, l_y: 2.1, l: 2.5, lambda: 1.5 };
    let doubled = FgParams { lambda: 3.0, ..base };
    for t in F_TERMS.iter().chain(G_TERMS) {
        let moves = t.weighted || t.pow[7] > 0;
        assert_eq!(t.eval(&base) != t.eval(&doubled), moves, "{}", t.label);
    }
    let (f1, g1) = fg_raw(&base);
    let (f2, g2) = fg_raw(&doubled);
    let split = |p: &FgParams, terms: &[Term]| -> (f64, f64) {
        let lam: f64 = terms.iter().filter(|t| t.weighted || t.pow[7] > 0).map(|t| t.eval(p)).sum();
        let rest: f64 = terms.iter().filter(|t| !(t.weighted || t.pow[7] > 0)).map(|t| t.eval(p)).sum();
        (lam, rest)
    };
    let (fl1, fr1) = split(&base, F_TERMS);
    let (fl2, fr2) = split(&doubled, F_TERMS);
    assert_eq!(fr1, fr2);
    assert!(((f2 - f1) - 0.5 * (fl2 - fl1)).abs() <= 1e-9 * f2);
    let (gl1, _) = split(&base, G_TERMS);
    let (gl2, _) = split(&doubled, G_TERMS);
    assert!(((g2 - g1) - 0.5 * base.n * (gl2 - gl1)).abs() <= 1e-9 * g2);
}

#[test]
fn gamma_max_examples() {
    let e0 = ec(1.0, 1.0, 2f64.sqrt(), 1.0);
    let gm = gamma_max(&e0, 0.6, 6.0, 1e9, 1.0, 1.0, 1.0, 0.3, 2, 2, 1.0).unwrap();
    assert!((gm.terms[2] - 0.1).abs() < 1e-16);
    assert!(gm.value <= 0.1);

    // Flat objective: every term except the constant cap is huge.
    let tiny = ec(1e-9, 1e-9, 1e-9, 1e-9);
    let gm = gamma_max(&tiny, 1.0, 1e-3, 1.0, 1e-6, 1e-9, 1.0, 0.3, 1, 1, 1.0).unwrap();
    assert_eq!(gm.value, 0.5);
    assert_eq!(gm.binding, 7);
}

#[test]
fn root_term_matches_printed_form_and_limit() {
    let e0 = ec(1.0, 1.0, 1.0, 1.0);
    let (a, b, d, e, c) = (3.0, 2.0, 0.8, 1.7, 0.2);
    let gm = gamma_max(&e0, d, e, 10.0, 1.0, a, b, c, 2, 2, 1.0).unwrap();
    let x: f64 = a / b + 2.0 * e + d * c;
    let printed = (x - (x * x - 4.0 * d * e * c).sqrt()) / (2.0 * e * c);
    assert!((gm.terms[6] - printed).abs() < 1e-12 * printed);
    // E → 0: the root tends to 2D/(2(a/b + Dc)) = D/(a/b + Dc).
    let gm = gamma_max(&e0, d, 0.0, 10.0, 1.0, a, b, c, 2, 2, 1.0).unwrap();
    assert!(gm.e_floored);
    let limit = d / (a / b + d * c);
    assert!((gm.terms[6] - limit).abs() < 1e-9 * limit);
}

#[test]
fn r_min_examples() {
    assert_eq!(r_min(1.0, RMinMode::Asymptotic, 1.0, 0.5).unwrap(), 2);
    assert_eq!(r_min(1.0, RMinMode::Asymptotic, 3.0, 0.5).unwrap(), 3);
    assert_eq!(r_min(1.0, RMinMode::Finite(1_000_000), 3.0, 0.5).unwrap(), 3);
    assert!(r_min(0.0, RMinMode::Asymptotic, 1.0, 0.5).is_err());
    for t in [0, 3, 10, 1000] {
        assert!(r_min(1.0, RMinMode::Finite(t), 1e6, 0.5).unwrap() <= r_min(1.0, RMinMode::Asymptotic, 1e6, 0.5).unwrap());
    }
    assert_eq!(r_min_from_gap(1.0, RMinMode::Asymptotic, 3.0, 0.5).unwrap(), 3);
}

#[test]
fn asymptotic_value_examples() {
    assert_eq!(asymptotic_value(1.0, 0.5), 1.0);
    assert!(asymptotic_value(1.0, 1e-12) < 1e-11);
}

fn sample_ec(sigma: f64, dlt: f64) -> EpochConstants {
    EpochConstants {
        l_x: 2.0,
        l_y: 1.5,
        l: 2.9,
        l_j: 4.0,
        m_x: 3.0,
        m_y: 2.0,
        p_strong: 0.5,
        sigma,
        l_t: dlt,
        delta: 1.0,
        lambda_eb: 2.0,
    }
}

fn dims(b: usize) -> LadderDims {
    LadderDims { b, agents: 2, m: 2, norm_c: 0.9, diam: 2.0 }
}

#[test]
fn auto_gamma_is_inside_its_cap_and_rate_is_contractive() {
    let e = sample_ec(0.1, 0.2);
    let g = auto_gamma(&e, 3, &dims(2), None, 0.9).unwrap();
    let th = evaluate_epoch(0, &e, g, 3, &dims(2), None).unwrap();
    assert!(th.step_in_range());
    assert!(th.rho > 0.0 && th.rho < 1.0);
    assert_eq!(th.gap, g * th.c);
    assert!(th.c > 0.0 && th.c < 0.5);
    let g1 = auto_gamma(&e, 3, &dims(2), Some(th.carry()), 0.9).unwrap();
    assert!(g1 > 0.0);
}

#[test]
fn refuses_out_of_range_steps() {
    let e = sample_ec(0.0, 0.0);
    let tc = ladder(&[e], &[0.4], &[2], &dims(2)).unwrap();
    assert!(matches!(rate_and_bounds(&tc), Err(Error::StepOutOfRange { .. })));
}

#[test]
fn static_recursion_still_grows_and_unit_r_bound_is_a() {
    let e = sample_ec(0.0, 0.0);
    let mut gammas = Vec::new();
    let mut carry = None;
    for ell in 0..3 {
        let g = auto_gamma(&e, 1, &dims(2), carry, 0.9).unwrap();
        carry = Some(evaluate_epoch(ell, &e, g, 1, &dims(2), carry).unwrap().carry());
        gammas.push(g);
    }
    let tc = ladder(&[e.clone(), e.clone(), e], &gammas, &[1, 1, 1], &dims(2)).unwrap();
    for w in tc.epochs.windows(2) {
        assert!(w[1].a >= w[0].carry());
    }
    let bounds = rate_and_bounds(&tc).unwrap();
    for (bt, th) in bounds.iter().zip(&tc.epochs) {
        assert_eq!(bt.alpha, th.a);
    }
    assert!(asymptotic_bound(&tc).is_err());
}

#[test]
fn recursion_is_monotone_in_its_drivers() {
    let base = sample_ec(0.1, 0.2);
    let d = dims(2);
    let a = |ec: &EpochConstants, d: &LadderDims| {
        let (dd, e) = constants_de(ec, 1e-6, d.b, d.agents, d.norm_c);
        let (f, g) = constants_fg(ec, d.b, d.agents, d.m, d.norm_c);
        a_recursion_as_printed(1.0, ec, dd, e, f, g, d)
    };
    let a0v = a(&base, &d);
    assert!(a(&sample_ec(0.2, 0.2), &d) > a0v);
    assert!(a(&sample_ec(0.1, 0.4), &d) > a0v);
    assert!(a(&base, &dims(3)) > a0v);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn rho_in_unit_interval_below_cap(
        lx in 0.01f64..50.0, ly in 0.01f64..50.0, nc in 0.05f64..3.0, lam in 0.1f64..10.0,
        b in 1usize..8, agents in 1usize..6, m in 1usize..8, frac in 0.01f64..0.99,
    ) {
        let e = EpochConstants {
            l_x: lx, l_y: ly, l: (lx * lx + nc * nc * ly * ly).sqrt(), l_j: 1.0, m_x: 1.0, m_y: 1.0,
            p_strong: 0.1, sigma: 0.0, l_t: 0.0, delta: 0.0, lambda_eb: lam,
        };
        let d = LadderDims { b, agents, m, norm_c: nc, diam: 3.0 };
        let g = auto_gamma(&e, 2, &d, None, frac).unwrap();
        let th = evaluate_epoch(0, &e, g, 2, &d, None).unwrap();
        prop_assert!(th.step_in_range());
        prop_assert!(th.gap > 0.0 && th.gap < 1.0 && th.rho <= 1.0);
        prop_assert!(th.decay() < 1.0 || th.gap < 1e-16);
        prop_assert!(th.d > 0.0 && th.e >= 0.0 && th.f > 0.0 && th.g > 0.0);
    }
}
