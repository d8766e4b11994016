//! The CSV artifact reader must reject malformed input with an error, never
//! a panic, and every accepted table must be rectangular and finite.

#![no_main]

use convexify::io::read_numeric_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(csv) = read_numeric_csv(text) {
        let width = csv.header.len();
        for row in &csv.rows {
            assert_eq!(row.len(), width, "accepted table is ragged");
            assert!(row.iter().all(|v| v.is_finite()), "accepted non-finite value");
        }
    }
});
