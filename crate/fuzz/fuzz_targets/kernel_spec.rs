#![no_main]

use libfuzzer_sys::fuzz_target;
use memkern_core::model::KernelSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = s.parse::<KernelSpec>() {
        // Display output must parse back to the same kernel.
        let again: KernelSpec = spec.to_string().parse().expect("display round trip");
        assert_eq!(again, spec);
    }
});
