#![no_main]

use libfuzzer_sys::fuzz_target;
use memkern_core::io::{read_curve_csv, write_curve_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = read_curve_csv(data) {
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).expect("write parsed curve");
        let again = read_curve_csv(buf.as_slice()).expect("written curve parses");
        assert_eq!(again.len(), curve.len());
    }
});
