mod common;

use alphaforge::combiner::{run_combination_rows, CombinerConfig};
use alphaforge::dataset::{make_synthetic, SyntheticConfig};
use alphaforge::dsl::Vocabulary;
use alphaforge::zoo::FactorZoo;
use proptest::prelude::*;

const FORMULAS: [&str; 3] = ["ts_mean(volume,5)", "ts_std(close,10)", "(close/open)"];

fn cfg() -> CombinerConfig {
    CombinerConfig { window: 40, horizon: 5, entry_lag: 1, max_factors: 2, ..Default::default() }
}

fn panel(seed: u64, n_days: usize) -> alphaforge::dataset::PanelData {
    make_synthetic(&SyntheticConfig {
        n_stocks: 10,
        n_days,
        planted: vec![FORMULAS[0].into(), FORMULAS[2].into()],
        weights: vec![0.6, 0.4],
        noise_std: 0.5,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn zoo(p: &alphaforge::dataset::PanelData, formulas: &[&str]) -> FactorZoo {
    FactorZoo::from_formulas(formulas, p, 0..60, Vocabulary::default(), 20).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn future_rows_do_not_move_todays_prediction(seed in 0u64..1000, t in 66usize..119) {
        let full = panel(seed, 120);
        // drop later days and scramble labels not yet realized on day t
        let cut = full.slice_days(0..t + 1).unwrap();
        let realized = t + 1 - (cfg().horizon + cfg().entry_lag);
        let mut label = cut.label().clone();
        label.slice_mut(ndarray::s![realized.., ..]).mapv_inplace(|v| -3.0 * v + 1.0);
        let cut = cut.with_label(label).unwrap();
        let a = run_combination_rows(&zoo(&full, &FORMULAS), &full, t..t + 1, &cfg());
        let b = run_combination_rows(&zoo(&cut, &FORMULAS), &cut, t..t + 1, &cfg());
        prop_assert_eq!(a.predictions.row(t).to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.predictions.row(t).to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(&a.snapshots, &b.snapshots);
    }

    #[test]
    fn rescaling_a_factor_changes_nothing(seed in 0u64..1000, k in 0usize..3) {
        let p = panel(seed, 120);
        let base = run_combination_rows(&zoo(&p, &FORMULAS), &p, 60..120, &cfg());
        let scaled: Vec<String> = FORMULAS.iter().enumerate()
            .map(|(j, f)| if j == k { format!("({f}*5.0)") } else { f.to_string() }).collect();
        let refs: Vec<&str> = scaled.iter().map(|s| s.as_str()).collect();
        let other = run_combination_rows(&zoo(&p, &refs), &p, 60..120, &cfg());
        prop_assert!(common::max_abs_diff(&base.predictions, &other.predictions) < 1e-8);
    }

    #[test]
    fn snapshots_are_well_formed(seed in 0u64..1000) {
        let p = panel(seed, 150);
        let z = zoo(&p, &FORMULAS);
        let c = cfg();
        let comb = run_combination_rows(&z, &p, 60..150, &c);
        prop_assert_eq!(comb.snapshots.len(), 90);
        for (k, s) in comb.snapshots.iter().enumerate() {
            let t = 60 + k;
            prop_assert_eq!(s.date, p.dates()[t]);
            prop_assert!(s.entries.len() <= c.max_factors);
            prop_assert!(s.entries.windows(2).all(|w| w[0].ic >= w[1].ic));
            for e in &s.entries {
                prop_assert!(e.ic > c.min_ic && e.icir > c.min_icir && e.weight.is_finite());
                prop_assert!(z.get(e.id).is_some_and(|z| z.text == e.expr));
            }
            let row_missing = comb.predictions.row(t).iter().all(|v| v.is_nan());
            prop_assert_eq!(row_missing, s.entries.is_empty());
        }
        prop_assert!(comb.predictions.rows().into_iter().take(60).all(|r| r.iter().all(|v| v.is_nan())));
    }
}
