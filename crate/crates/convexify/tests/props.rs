//! Property tests: the text-facing parsers accept arbitrary input without
//! panicking, and the numeric round trip through the CSV writers is exact.

use convexify::config::RunConfig;
use convexify::io::read_numeric_csv;
use proptest::prelude::*;

proptest! {
    #[test]
    fn config_parser_never_panics(text in "\\PC{0,400}") {
        let _ = RunConfig::parse(&text);
    }

    #[test]
    fn config_parser_never_panics_on_keyish_lines(
        key in "[a-z.]{1,20}",
        val in "[-+0-9a-z.eE:, ]{0,30}",
    ) {
        let _ = RunConfig::parse(&format!("{key} = {val}\n"));
    }

    #[test]
    fn csv_reader_never_panics(text in "\\PC{0,400}") {
        let _ = read_numeric_csv(&text);
    }

    #[test]
    fn csv_numeric_round_trip_is_exact(values in prop::collection::vec(
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..20)) {
        let mut text = String::from("v\n");
        for v in &values {
            text.push_str(&format!("{v:.16e}\n"));
        }
        let parsed = read_numeric_csv(&text).unwrap();
        let back: Vec<f64> = parsed.rows.iter().map(|r| r[0]).collect();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn accepted_configs_revalidate_and_rehash_stably(
        a in 0.05f64..0.4, spread in 0.1f64..0.5, n in 3usize..12,
    ) {
        let text = format!(
            "domain.a = {a}\ndomain.d = {}\ngrid.n_x1 = {}\ngrid.n_t = {}\n",
            a + spread,
            2 * n + 1,
            2 * n + 1,
        );
        if let Ok(cfg) = RunConfig::parse(&text) {
            prop_assert!(cfg.validate().is_ok());
            let again = RunConfig::parse(&text).unwrap();
            prop_assert_eq!(cfg.config_hash(), again.config_hash());
        }
    }
}
