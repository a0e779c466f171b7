#![no_main]

//! Four matrices, one per line, in the order H, T, chi, chibar.

use feshbach::io::parse_matrix;
use feshbach::partition::validate_partition;
use feshbach::{build_pair, feshbach_map, Tolerances};
use libfuzzer_sys::fuzz_target;

const MAX_DIM: usize = 12;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut lines = text.lines();
    let mut next = |name| lines.next().and_then(|l| parse_matrix(l, name).ok());
    let (Some(h), Some(t), Some(chi), Some(chibar)) = (next("H"), next("T"), next("chi"), next("chibar")) else {
        return;
    };
    if h.nrows() > MAX_DIM || h.shape() != t.shape() {
        return;
    }
    let tol = Tolerances::default();
    let Ok(partition) = validate_partition(chi, chibar, &tol) else { return };
    if let Ok(pair) = build_pair(h, t, partition, &tol) {
        let data = feshbach_map(&pair);
        assert_eq!(data.f.shape(), pair.h().shape());
    }
});
