use std::f64::consts::TAU;

use proptest::prelude::*;

use phasemac::metrics::{energy_report, run_sweep, tradeoff_points};
use phasemac::registration::{phantom, voxel_match_rate};
use phasemac::report;
use phasemac::{
    mac_ideal, mac_run, resample_volume, run_calibration, sine_mac_experiment, Axis, BackendId,
    CellState, MacCellConfig, OscPhase, RigidTransform, SineExperiment, TrackingLoopConfig,
    VcoCell, VoxelType, WeightPulse,
};

fn linear() -> MacCellConfig {
    MacCellConfig::ideal_linear()
}

/// Compensated (two-sum) dot product used as a high-accuracy reference.
fn dot_compensated(x: &[f64], w: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for (a, b) in x.iter().zip(w) {
        let p = a * b;
        let e = p.mul_add(1.0, -(a * b)) + a.mul_add(*b, -p);
        let t = s + p;
        let z = t - s;
        c += (s - (t - z)) + (p - z) + e;
        s = t;
    }
    s + c
}

/// Tuning curve written out from its definition, independent of the library.
fn oracle_freq(cfg: &MacCellConfig, v_half: f64) -> f64 {
    let gm_eff = cfg.gm / (1.0 + cfg.gm * cfg.r_deg);
    let k = cfg.kv / gm_eff;
    let dev = k * gm_eff * v_half;
    let u = dev / cfg.f0;
    cfg.f0 + dev * (1.0 + cfg.alpha2 * u + cfg.alpha3 * u * u)
}

fn ticks_vec(max_len: usize) -> impl Strategy<Value = Vec<(f64, u64, bool)>> {
    proptest::collection::vec((-0.4f64..=0.4, 0u64..64, any::<bool>()), 1..max_len)
}

fn pulse(t: u64, neg: bool) -> WeightPulse {
    if neg {
        WeightPulse::negative(t)
    } else {
        WeightPulse::positive(t)
    }
}

proptest! {
    #[test]
    fn ideal_is_bilinear(
        x in proptest::collection::vec(-1.0f64..1.0, 1..64),
        seed in any::<u64>(),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let n = x.len();
        let w1: Vec<f64> = (0..n).map(|k| ((seed.wrapping_add(k as u64) % 997) as f64 / 500.0) - 1.0).collect();
        let w2: Vec<f64> = (0..n).map(|k| (((seed >> 7).wrapping_add(3 * k as u64) % 991) as f64 / 495.0) - 1.0).collect();
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(p, q)| a * p + b * q).collect();
        let lhs = mac_ideal(&x, &mix).unwrap().value;
        let rhs = a * mac_ideal(&x, &w1).unwrap().value + b * mac_ideal(&x, &w2).unwrap().value;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * n as f64 * 10.0);
    }

    #[test]
    fn ideal_matches_compensated_sum(
        pairs in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..256),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let got = mac_ideal(&x, &w).unwrap().value;
        let want = dot_compensated(&x, &w);
        let mag: f64 = x.iter().zip(&w).map(|(a, b)| (a * b).abs()).sum();
        prop_assert!((got - want).abs() <= pairs.len() as f64 * f64::EPSILON * mag);
    }

    #[test]
    fn quantizer_is_monotone_and_bounded(
        cycles in 0u64..1_000_000,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
        n in prop::sample::select(vec![3u32, 5, 7, 15, 31]),
    ) {
        let levels = 2 * u64::from(n);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = OscPhase::new(cycles, lo);
        let p_hi = OscPhase::new(cycles, hi);
        prop_assert!(p_lo.total_code(levels) <= p_hi.total_code(levels));
        let lsb = TAU / levels as f64;
        let err = p_lo.radians() - p_lo.total_code(levels) as f64 * lsb;
        prop_assert!((-1e-9..lsb + 1e-9).contains(&err));
    }

    #[test]
    fn whole_cycle_hold_keeps_code(
        steps in ticks_vec(16),
        k in 0u64..1_000_000,
        pvt in 0.8f64..1.2,
    ) {
        let cfg = MacCellConfig { pvt_scale: pvt, ..MacCellConfig::default() };
        let mut cell = VcoCell::new(cfg.clone()).unwrap();
        for &(v, t, neg) in &steps {
            cell.accumulate(v, pulse(t, neg)).unwrap();
        }
        let before = cell.sample_phase().code_diff;
        cell.idle_hold(k as f64 / cfg.effective_f0()).unwrap();
        prop_assert_eq!(cell.sample_phase().code_diff, before);
    }

    #[test]
    fn any_hold_keeps_differential_phase(steps in ticks_vec(16), d in 0.0f64..1e-3) {
        let mut cell = VcoCell::new(MacCellConfig::default()).unwrap();
        for &(v, t, neg) in &steps {
            cell.accumulate(v, pulse(t, neg)).unwrap();
        }
        let before = cell.state().differential_phase();
        cell.idle_hold(d).unwrap();
        let after = cell.state().differential_phase();
        // absolute phases grow to ~1e6 rad, so compare at their resolution
        prop_assert!((after - before).abs() <= 1e-9 * (1.0 + cell.state().phase_p.radians()));
    }

    #[test]
    fn accumulation_order_does_not_matter(steps in ticks_vec(32), rot in 0usize..32) {
        let cfg = MacCellConfig::default();
        let run = |order: &[(f64, u64, bool)]| {
            let mut cell = VcoCell::new(cfg.clone()).unwrap();
            for &(v, t, neg) in order {
                cell.accumulate(v, pulse(t, neg)).unwrap();
            }
            cell.state().differential_phase()
        };
        let mut rotated = steps.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let a = run(&steps);
        let b = run(&rotated);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn common_mode_current_is_rejected(steps in ticks_vec(16), i_cm in -2e-5f64..2e-5) {
        let cfg = linear();
        let mut plain = VcoCell::new(cfg.clone()).unwrap();
        let mut with_cm = VcoCell::new(cfg).unwrap();
        for &(v, t, neg) in &steps {
            plain.accumulate(v, pulse(t, neg)).unwrap();
            with_cm.accumulate_with_common_mode(v, pulse(t, neg), i_cm).unwrap();
        }
        let a = plain.state().differential_phase();
        let b = with_cm.state().differential_phase();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn closed_form_matches_substep_integration(
        v in -0.4f64..=0.4,
        ticks in 1u64..200,
        alpha2 in -0.5f64..0.5,
        alpha3 in 0.0f64..2.0,
    ) {
        let cfg = MacCellConfig { alpha2, alpha3, ..MacCellConfig::default() };
        let mut cell = VcoCell::new(cfg.clone()).unwrap();
        cell.accumulate(v, WeightPulse::positive(ticks)).unwrap();

        let dt = ticks as f64 * cfg.t_lsb;
        let h = dt / 1000.0;
        let (mut php, mut phn) = (0.0_f64, 0.0_f64);
        for _ in 0..1000 {
            php += TAU * oracle_freq(&cfg, 0.5 * v) * h;
            phn += TAU * oracle_freq(&cfg, -0.5 * v) * h;
        }
        let st = cell.state();
        prop_assert!((st.phase_p.radians() - php).abs() <= 1e-9 * php.max(1.0));
        prop_assert!((st.phase_n.radians() - phn).abs() <= 1e-9 * phn.max(1.0));
    }

    #[test]
    fn rotations_are_orthonormal(theta in -10.0f64..10.0, axis in 0usize..3) {
        let ax = [Axis::X, Axis::Y, Axis::Z][axis];
        let r = RigidTransform::rotation(ax, theta);
        let m = r.linear();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() <= 1e-12);
            }
        }
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-12);
        let back = r.then(&RigidTransform::rotation(ax, -theta));
        let id = RigidTransform::identity();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((back.rows()[i][j] - id.rows()[i][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn composition_is_associative(
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        t in (-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0),
    ) {
        let ra = RigidTransform::rotation(Axis::X, a);
        let rb = RigidTransform::rotation(Axis::Y, b).then(&RigidTransform::translation([t.0, t.1, t.2]));
        let rc = RigidTransform::rotation(Axis::Z, c);
        let left = ra.then(&rb).then(&rc);
        let right = ra.then(&rb.then(&rc));
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((left.rows()[i][j] - right.rows()[i][j]).abs() <= 1e-12 * 30.0);
            }
        }
    }

    #[test]
    fn inverse_round_trips_points(
        a in -3.0f64..3.0,
        s in (0.5f64..2.0, 0.5f64..2.0, 0.5f64..2.0),
        t in (-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0),
        p in (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0),
    ) {
        let m = RigidTransform::rotation(Axis::Z, a)
            .then(&RigidTransform::translation_scaling([s.0, s.1, s.2], [t.0, t.1, t.2]).unwrap());
        let inv = m.inverse().unwrap();
        let q = inv.apply(m.apply([p.0, p.1, p.2]));
        for (got, want) in q.iter().zip([p.0, p.1, p.2]) {
            prop_assert!((got - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn energy_is_additive(a in 0u64..1_000_000_000, b in 0u64..1_000_000_000) {
        let (ra, rb, rs) = (energy_report(a), energy_report(b), energy_report(a + b));
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1e-30);
        prop_assert!(rel(rs.total_time_domain, ra.total_time_domain + rb.total_time_domain));
        prop_assert!(rel(rs.total_digital, ra.total_digital + rb.total_digital));
        prop_assert_eq!(rs.ratio, 484.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vco_within_one_lsb_of_ideal(steps in ticks_vec(128)) {
        let cfg = linear();
        let x: Vec<f64> = steps.iter().map(|s| s.0).collect();
        let w: Vec<f64> = steps
            .iter()
            .map(|&(_, t, neg)| pulse(t, neg).weight(&cfg))
            .collect();
        let got = mac_run(BackendId::VcoCell, &cfg, &x, &w).unwrap().value;
        let want = mac_ideal(&x, &w).unwrap().value;
        prop_assert!((got - want).abs() <= cfg.phase_lsb());
    }

    #[test]
    fn tracking_converges_within_bound(p in -0.15f64..0.15) {
        let lc = TrackingLoopConfig::default();
        let out = run_calibration(&MacCellConfig::default(), &lc, p, 80).unwrap();
        let bound = (p.abs() / lc.step_per_code).ceil() as usize + 2;
        let at = out.trace.converged_at(lc.f_in).unwrap();
        prop_assert!(at <= bound, "converged at {} > {}", at, bound);
        prop_assert!(out.trace.limit_cycle_span(lc.f_in).unwrap() <= 2);
    }
}

#[test]
fn gain_tradeoff_on_continuous_phase() {
    // with quantization removed, halving kv at doubled pulse width shrinks the
    // cubic error and leaves the ideal result untouched
    let base = MacCellConfig::default();
    let exp = SineExperiment::default();
    let mut prev_err = f64::INFINITY;
    let mut ideal_ref: Option<f64> = None;
    for k in 0..5 {
        let cfg = MacCellConfig {
            kv: base.kv / f64::powi(2.0, k),
            ..base.clone()
        };
        let e = SineExperiment {
            pulse_scale: 1 << k,
            ..exp.clone()
        };
        let (x, w) = e.vectors(&cfg).unwrap();
        let ideal = mac_ideal(&x, &w).unwrap().value;
        match ideal_ref {
            None => ideal_ref = Some(ideal),
            Some(r) => assert_eq!(ideal.to_bits(), r.to_bits()),
        }
        let ticks = e.pulse_ticks(&cfg).unwrap();
        let mut cell = VcoCell::new(cfg.clone()).unwrap();
        for &v in &x {
            cell.accumulate(v, WeightPulse::positive(ticks)).unwrap();
        }
        let err = (cell.state().differential_phase() - ideal).abs();
        assert!(err < prev_err, "k={k}: {err} !< {prev_err}");
        prev_err = err;
    }
}

#[test]
fn effective_bits_fall_as_alpha3_grows() {
    let exp = SineExperiment::default();
    let grid = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0];
    let bits: Vec<f64> = grid
        .iter()
        .map(|&a| {
            let cfg = MacCellConfig {
                alpha3: a,
                ..MacCellConfig::default()
            };
            sine_mac_experiment(&cfg, &exp).unwrap().effective_bits
        })
        .collect();
    for pair in bits.windows(2) {
        assert!(pair[1] <= pair[0], "{bits:?}");
    }
}

#[test]
fn noisy_runs_are_reproducible() {
    let cfg = MacCellConfig {
        noise_sigma: 0.05,
        seed: 42,
        ..MacCellConfig::default()
    };
    let exp = SineExperiment::default();
    let a = sine_mac_experiment(&cfg, &exp).unwrap();
    let b = sine_mac_experiment(&cfg, &exp).unwrap();
    assert_eq!(a, b);
    let other = MacCellConfig { seed: 43, ..cfg };
    assert_ne!(
        sine_mac_experiment(&other, &exp).unwrap().measured,
        a.measured
    );
}

#[test]
fn resampling_ignores_worker_count() {
    let cfg = MacCellConfig {
        noise_sigma: 0.01,
        ..MacCellConfig::default()
    };
    let vol = phantom(24, VoxelType::I16).unwrap();
    let m =
        RigidTransform::rotation(Axis::Y, 0.3).then(&RigidTransform::translation([1.5, 0.0, -2.0]));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| resample_volume(&vol, &m, BackendId::VcoCell, &cfg).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(7));
}

#[test]
fn identity_resample_is_lossless() {
    let vol = phantom(16, VoxelType::U8).unwrap();
    let id = RigidTransform::identity();
    for backend in [BackendId::Ideal, BackendId::VcoCell] {
        let out = resample_volume(&vol, &id, backend, &MacCellConfig::default()).unwrap();
        assert_eq!(voxel_match_rate(&out.volume, &vol), 1.0);
    }
}

#[test]
fn sweep_and_tracking_csv_round_trip() {
    let cfg = MacCellConfig::default();
    let exp = SineExperiment {
        length: 64,
        ..Default::default()
    };
    let rows = run_sweep(&cfg, &exp, &tradeoff_points(&cfg, &exp, 3)).unwrap();
    let mut buf = Vec::new();
    report::write_sweep_csv(&mut buf, &rows).unwrap();
    assert_eq!(report::read_sweep_csv(buf.as_slice()).unwrap(), rows);

    let out = run_calibration(&cfg, &TrackingLoopConfig::default(), 0.07, 30).unwrap();
    let mut buf = Vec::new();
    report::write_tracking_csv(&mut buf, &out.trace).unwrap();
    assert_eq!(
        report::read_tracking_csv(buf.as_slice()).unwrap(),
        out.trace
    );
}

#[test]
fn restored_state_continues_identically() {
    let cfg = MacCellConfig::default();
    let mut a = VcoCell::new(cfg.clone()).unwrap();
    a.accumulate(0.3, WeightPulse::positive(17)).unwrap();
    let snapshot: CellState = a.state().clone();
    let mut b = VcoCell::with_state(cfg, snapshot).unwrap();
    for cell in [&mut a, &mut b] {
        cell.accumulate(-0.2, WeightPulse::negative(5)).unwrap();
        cell.idle_hold(1e-8).unwrap();
    }
    assert_eq!(a.state(), b.state());
}
