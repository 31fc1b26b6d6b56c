use proptest::prelude::*;

use ehrelay::analytic::{outage_eps, outage_ops_closed};
use ehrelay::model::ChannelDraw;
use ehrelay::schemes::{
    af_objective, rho_af_ehb, rho_df_ehb, select, snr_df, RelayBatteryState, SchemeKind,
};
use ehrelay::SystemParams;

fn gain() -> impl Strategy<Value = f64> {
    (-4.0f64..2.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn split_ratios_lie_in_unit_interval(
        gamma in 0.1f64..1e4, gamma_s in 0.0f64..1e3, g_si in gain(), g_id in gain(), eta in 0.05f64..1.0,
    ) {
        let df = rho_df_ehb(gamma, gamma_s, g_si, g_id, eta);
        prop_assert!((0.0..=1.0).contains(&df));
        let af = rho_af_ehb(eta, gamma_s / (gamma * g_si), g_id);
        prop_assert!((0.0..=1.0).contains(&af));
    }

    #[test]
    fn df_split_beats_every_grid_split(
        gamma in 0.1f64..1e4, gamma_s in 0.0f64..1e3, g_si in gain(), g_id in gain(), eta in 0.05f64..1.0,
    ) {
        let best = snr_df(rho_df_ehb(gamma, gamma_s, g_si, g_id, eta), gamma, gamma_s, g_si, g_id, eta);
        for k in 0..=200 {
            let rho = f64::from(k) / 200.0;
            let other = snr_df(rho, gamma, gamma_s, g_si, g_id, eta);
            prop_assert!(best >= other * (1.0 - 1e-12), "rho {} gives {} > {}", rho, other, best);
        }
    }

    #[test]
    fn af_split_minimises_objective(a in 0.0f64..100.0, b in gain(), eta in 0.05f64..1.0) {
        let rho = rho_af_ehb(eta, a, b);
        let best = af_objective(rho, eta, a, b);
        for k in 0..200 {
            let r = (f64::from(k) + 0.5) / 200.0;
            prop_assert!(best <= af_objective(r, eta, a, b) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn battery_stays_within_cap(
        slots in prop::collection::vec((prop::collection::vec((gain(), gain()), 4), prop::option::of(0usize..4), any::<bool>()), 1..60),
        cap in 1.0f64..1e4,
    ) {
        let params = SystemParams::reference().with_relays(4).unwrap().with_battery_cap(cap).unwrap();
        let mut battery = RelayBatteryState::empty(4);
        for (gains, selected, df) in slots {
            let (g_si, g_id): (Vec<f64>, Vec<f64>) = gains.into_iter().unzip();
            let draw = ChannelDraw::new(g_si, g_id);
            if df {
                battery.update_df(selected, &params, &draw);
            } else {
                battery.update_af(selected, &params, &draw);
            }
            for &level in battery.levels() {
                prop_assert!((0.0..=cap).contains(&level));
            }
        }
    }

    #[test]
    fn optimal_split_never_loses_to_equal_split(
        gains in prop::collection::vec((gain(), gain()), 1..8), gamma_db in -5.0f64..30.0,
    ) {
        let n = gains.len();
        let mut params = SystemParams::reference().with_relays(n).unwrap();
        params.gamma = 10f64.powf(gamma_db / 10.0);
        let (g_si, g_id): (Vec<f64>, Vec<f64>) = gains.into_iter().unzip();
        let draw = ChannelDraw::new(g_si, g_id);
        let battery = RelayBatteryState::empty(n);
        let eps = select(SchemeKind::Eps, &params, &draw, &battery);
        let ops = select(SchemeKind::Ops, &params, &draw, &battery);
        prop_assert!(ops.capacity >= eps.capacity - 1e-12);
    }

    #[test]
    fn outage_falls_with_snr_and_ops_stays_below_eps(
        g1 in -5.0f64..25.0, dg in 0.5f64..10.0, eta in 0.1f64..1.0, rate in 0.25f64..2.0, n in 1usize..6,
    ) {
        let at = |db: f64| SystemParams::new(10f64.powf(db / 10.0), eta, rate, n).unwrap();
        let (lo, hi) = (at(g1), at(g1 + dg));
        // Near 1 the outage saturates in f64, so only demand a strict drop below that.
        for (h, l) in [
            (outage_eps(&hi).p_out, outage_eps(&lo).p_out),
            (outage_ops_closed(&hi).p_out, outage_ops_closed(&lo).p_out),
        ] {
            prop_assert!(h <= l);
            if l < 1.0 - 1e-9 {
                prop_assert!(h < l, "{} !< {}", h, l);
            }
        }
        prop_assert!(outage_ops_closed(&lo).p_out <= outage_eps(&lo).p_out * (1.0 + 1e-9));
    }
}
