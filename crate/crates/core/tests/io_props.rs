use feshbach::instance::{gaussian_matrix, generate, seeded_rng, InstanceSpec, PartitionKind};
use feshbach::io::{
    instance_spec_to_json, matrix_to_json, parse_instance_spec, parse_matrix, read_instance,
    write_instance, IoError,
};
use feshbach::{Complex64, ComplexMatrix, Tolerances};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matrix_json_round_trips_bit_exact(rows in 1usize..6, cols in 1usize..6, values in prop::collection::vec((finite(), finite()), 36)) {
        let data: Vec<Complex64> = values.iter().take(rows * cols).map(|&(a, b)| Complex64::new(a, b)).collect();
        let m = ComplexMatrix::from_row_slice(rows, cols, &data);
        let back = parse_matrix(&matrix_to_json(&m), "m").unwrap();
        prop_assert_eq!(back.shape(), (rows, cols));
        for (x, y) in m.iter().zip(back.iter()) {
            prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
            prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in ".{0,200}") {
        let _ = parse_matrix(&text, "m");
        let _ = parse_instance_spec(&text, "spec");
    }

    #[test]
    fn spec_json_round_trips(dim in 2usize..30, kind in 0usize..3, scale in 0.0f64..1.0, seed in any::<u64>()) {
        let spec = InstanceSpec::new(dim, PartitionKind::ALL[kind], scale, seed);
        let back = parse_instance_spec(&instance_spec_to_json(&spec), "spec").unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn corrupted_token_position() {
    let m = gaussian_matrix(&mut seeded_rng(1), 2, 2);
    let text = matrix_to_json(&m);
    let at = text.find("\"im\":[").unwrap() + 6;
    let corrupted = format!("{}x{}", &text[..at], &text[at + 1..]);
    match parse_matrix(&corrupted, "H.json") {
        Err(IoError::Parse { file, line, column, .. }) => {
            assert_eq!(file, "H.json");
            assert_eq!(line, 1);
            assert_eq!(column, at + 1);
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn instance_directory_round_trip() {
    let tol = Tolerances::default();
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&InstanceSpec::new(5, PartitionKind::Nonselfadjoint, 0.2, 9), &tol).unwrap();
    write_instance(dir.path(), &inst).unwrap();
    let files = read_instance(dir.path()).unwrap();
    assert_eq!(files.h, inst.h);
    assert_eq!(files.t, inst.t);
    assert_eq!(&files.chi, inst.partition.chi());
    assert_eq!(&files.chibar, inst.partition.chibar());
    assert_eq!(files.spec.as_ref(), Some(&inst.spec));
}

#[test]
fn mismatched_shapes_are_rejected() {
    let tol = Tolerances::default();
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&InstanceSpec::new(3, PartitionKind::Smooth, 0.2, 9), &tol).unwrap();
    write_instance(dir.path(), &inst).unwrap();
    let small = gaussian_matrix(&mut seeded_rng(2), 2, 2);
    std::fs::write(dir.path().join("T.json"), matrix_to_json(&small)).unwrap();
    assert!(matches!(read_instance(dir.path()), Err(IoError::DimensionMismatch(_))));
}
