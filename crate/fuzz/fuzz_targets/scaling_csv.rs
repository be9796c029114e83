#![no_main]

use libfuzzer_sys::fuzz_target;
use memkern_core::io::{read_scaling_csv, write_scaling_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(points) = read_scaling_csv(data) {
        let mut buf = Vec::new();
        write_scaling_csv(&points, &mut buf).expect("write parsed points");
        let again = read_scaling_csv(buf.as_slice()).expect("written points parse");
        assert_eq!(again.len(), points.len());
    }
});
