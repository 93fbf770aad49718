use gmac_jscc::bounds::{crossover_snr, opta_sdr, uncoded_sdr};
use gmac_jscc::model::db_to_linear;
use gmac_jscc::montecarlo::{simulate, Codec, SimulationConfig};
use gmac_jscc::nq::{nest_index, nq_distortion, nq_encode, nq_power, quantize_index};
use gmac_jscc::optimize::optimize_sqlc;
use gmac_jscc::sqlc::{midrise_moments, sqlc_encode, sqlc_power};
use gmac_jscc::{ChannelModel, NqParams, SourceModel, SqlcParams};
use proptest::prelude::*;

fn snr(db: f64) -> f64 {
    db_to_linear(db)
}

proptest! {
    #[test]
    fn bound_nondecreasing_in_snr(rho in 0.0..1.0f64, db in -20.0..60.0f64, step in 0.01..5.0f64) {
        let lo = opta_sdr(1.0, 1.0 / snr(db), rho).sdr_linear;
        let hi = opta_sdr(1.0, 1.0 / snr(db + step), rho).sdr_linear;
        prop_assert!(hi >= lo * (1.0 - 1e-12));
    }

    #[test]
    fn bound_nondecreasing_in_rho(rho in 0.0..0.99f64, d in 0.0..0.01f64, db in -20.0..60.0f64) {
        let s = snr(db);
        let a = opta_sdr(1.0, 1.0 / s, rho).sdr_linear;
        let b = opta_sdr(1.0, 1.0 / s, (rho + d).min(1.0)).sdr_linear;
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn uncoded_meets_bound_only_below_crossover(rho in 0.01..0.99f64, db in -20.0..60.0f64) {
        let s = snr(db);
        let bound = opta_sdr(1.0, 1.0 / s, rho).sdr_linear;
        let uncoded = uncoded_sdr(1.0, 1.0 / s, rho);
        prop_assert!(uncoded <= bound * (1.0 + 1e-12));
        if s <= crossover_snr(rho).unwrap() {
            prop_assert!((uncoded / bound - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nest_index_folds_into_range(i2 in -1_000_000i64..1_000_000, half in 0u32..40) {
        let c = 2 * half + 1;
        let j = nest_index(i2, c);
        prop_assert!(j.abs() <= half as i64);
        prop_assert_eq!((i2 - j).rem_euclid(c as i64), 0);
    }

    #[test]
    fn nq_encoder_levels(x1 in -5.0..5.0f64, x2 in -5.0..5.0f64, delta in 0.05..2.0f64, half in 0u32..10) {
        let c = 2 * half + 1;
        let p = NqParams::new(delta, c, 0.7).unwrap();
        let (y1, y2) = nq_encode(x1, x2, &p);
        let i1 = quantize_index(x1, delta);
        prop_assert_eq!(y1, 0.7 * (c as i64 * i1) as f64);
        prop_assert!(y2.abs() <= 0.7 * half as f64 + 1e-12);
        prop_assert!((x1 - i1 as f64 * delta).abs() <= 0.5 * delta * (1.0 + 1e-12));
    }

    #[test]
    fn nq_power_scaling(rho in 0.0..0.99f64, delta in 0.05..2.0f64, half in 0u32..10, power in 0.1..10.0f64) {
        let model = SourceModel::unit(rho).unwrap();
        let p = NqParams::with_power(delta, 2 * half + 1, &model, power).unwrap();
        let (p1, p2) = nq_power(&p, &model);
        prop_assert!(((p1 + p2) / 2.0 / power - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sqlc_encoder_is_bounded(x1 in -6.0..6.0f64, x2 in -6.0..6.0f64, kappa in 1.0..5.0f64, rho in 0.0..0.9f64) {
        let model = SourceModel::unit(rho).unwrap();
        let p = SqlcParams::from_normalized_step(0.05, 1.0, 0.3, kappa, &model, 1.0).unwrap();
        let (y1, y2) = sqlc_encode(x1, x2, &p);
        prop_assert!(y2.abs() <= 0.05 * kappa * (1.0 + 1e-12));
        // midrise: never zero, an odd multiple of Δ/2 after scaling
        let k = y1 / (0.5 * p.delta());
        prop_assert!((k - k.round()).abs() < 1e-6 && (k.round() as i64).rem_euclid(2) == 1);
    }

    #[test]
    fn sqlc_power_budget(rho in 0.0..0.95f64, alpha in 0.01..0.3f64, u in 0.02..1.5f64, kappa in 1.0..4.0f64) {
        let model = SourceModel::unit(rho).unwrap();
        if let Ok(p) = SqlcParams::from_normalized_step(alpha, 1.0, u, kappa, &model, 1.0) {
            let (p1, p2) = sqlc_power(&p, &model);
            prop_assert!(((p1 + p2) / 2.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn midrise_granular_error_is_bounded(u in 0.001..3.0f64) {
        let (h, e) = midrise_moments(u);
        prop_assert!(e > 0.0 && e <= u * u / 4.0);
        prop_assert!(h >= u * u / 4.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nq_analytical_distortion_nonincreasing_in_snr(
        rho in 0.0..0.95f64,
        delta in 0.1..1.0f64,
        half in 0u32..6,
        db in 10.0..40.0f64,
    ) {
        let model = SourceModel::unit(rho).unwrap();
        let p = NqParams::with_power(delta, 2 * half + 1, &model, 1.0).unwrap();
        let lo = nq_distortion(&p, &model, &ChannelModel::from_snr_db(db, 1.0).unwrap()).unwrap().d();
        let hi = nq_distortion(&p, &model, &ChannelModel::from_snr_db(db + 3.0, 1.0).unwrap()).unwrap().d();
        prop_assert!(hi <= lo * (1.0 + 1e-9), "{lo} -> {hi}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulated_sdr_never_beats_bound(rho in 0.0..0.95f64, db in 15.0..45.0f64, seed in any::<u64>()) {
        let model = SourceModel::unit(rho).unwrap();
        let channel = ChannelModel::from_snr_db(db, 1.0).unwrap();
        let params = optimize_sqlc(&model, &channel).unwrap().params;
        let config = SimulationConfig::new(Codec::sqlc(&params, &model), &model, &channel)
            .with_samples(20_000)
            .unwrap()
            .with_seed(seed);
        let r = simulate(&config).unwrap();
        let bound = opta_sdr(1.0, channel.sigma_n2(), rho).sdr_db();
        prop_assert!(r.sdr_db <= bound + 3.0 * r.sdr_se_db, "{} vs {bound}", r.sdr_db);
        prop_assert_eq!(simulate(&config).unwrap(), r);
    }

    #[test]
    fn uncoded_simulation_matches_closed_form(rho in 0.0..0.95f64, db in -5.0..30.0f64, seed in any::<u64>()) {
        let model = SourceModel::unit(rho).unwrap();
        let channel = ChannelModel::from_snr_db(db, 1.0).unwrap();
        let config = SimulationConfig::new(Codec::uncoded(&model, &channel), &model, &channel)
            .with_samples(50_000)
            .unwrap()
            .with_seed(seed);
        let r = simulate(&config).unwrap();
        let exact = 10.0 * uncoded_sdr(1.0, channel.sigma_n2(), rho).log10();
        prop_assert!((r.sdr_db - exact).abs() <= 4.0 * r.sdr_se_db, "{} vs {exact} ± {}", r.sdr_db, r.sdr_se_db);
    }
}
