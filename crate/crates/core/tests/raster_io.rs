mod common;

use proptest::prelude::*;
use pyrocarbon::raster::{
    compute_dnbr, compute_index, parse_grid, serialize_grid, Band, Bands, GridHeader, GridPair, IndexKind,
    ParseErrorClass, RasterGrid,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn generated_documents_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (text, ncols, nrows, values) = common::random_document(&mut rng);
        let g = parse_grid(&text).unwrap();
        prop_assert_eq!((g.ncols(), g.nrows()), (ncols, nrows));
        prop_assert!(g.raw_values().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));
        let again = parse_grid(&serialize_grid(&g)).unwrap();
        prop_assert_eq!(again.header(), g.header());
        prop_assert!(again.raw_values().iter().zip(g.raw_values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(serialize_grid(&again), serialize_grid(&g));
    }

    #[test]
    fn any_finite_grid_round_trips(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60),
        x in -1e7f64..1e7, y in -1e7f64..1e7, cell in 1e-3f64..1e4,
    ) {
        let header = GridHeader::new(values.len(), 1, cell).with_origin(x, y);
        let g = RasterGrid::new(header, values).unwrap();
        let back = parse_grid(&serialize_grid(&g)).unwrap();
        prop_assert_eq!(back.header(), g.header());
        prop_assert!(back.raw_values().iter().zip(g.raw_values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn normalized_indices_stay_in_unit_range(
        nir in prop::collection::vec(0.0f64..=1.0, 16),
        other in prop::collection::vec(0.0f64..=1.0, 16),
    ) {
        let h = GridHeader::new(4, 4, 10.0);
        for (kind, band) in [(IndexKind::Ndvi, Band::Red), (IndexKind::Nbr, Band::Swir)] {
            let bands = Bands::from([
                (Band::Nir, RasterGrid::new(h, nir.clone()).unwrap()),
                (band, RasterGrid::new(h, other.clone()).unwrap()),
            ]);
            let out = compute_index(kind, &bands).unwrap();
            prop_assert!(out.valid_values().all(|v| (-1.0..=1.0).contains(&v)));
            let again = compute_index(kind, &bands).unwrap();
            prop_assert_eq!(out.raw_values(), again.raw_values());
        }
    }

    #[test]
    fn nodata_closure(
        a in prop::collection::vec(prop_oneof![1 => Just(-9999.0), 4 => 0.0f64..1.0], 9),
        b in prop::collection::vec(prop_oneof![1 => Just(-9999.0), 4 => 0.0f64..1.0], 9),
    ) {
        let h = GridHeader::new(3, 3, 1.0);
        let bands = Bands::from([
            (Band::Nir, RasterGrid::new(h, a.clone()).unwrap()),
            (Band::Red, RasterGrid::new(h, b.clone()).unwrap()),
        ]);
        let out = compute_index(IndexKind::Ndvi, &bands).unwrap();
        for i in 0..9 {
            let input_missing = a[i] == -9999.0 || b[i] == -9999.0;
            let singular = !input_missing && a[i] + b[i] == 0.0;
            prop_assert_eq!(out.is_nodata(out.raw_values()[i]), input_missing || singular);
        }
    }
}

const HEADER: &str = "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n";

#[test]
fn malformed_header_corpus() {
    let docs = [
        "ncols 3\nnrow 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n1 2 3\n4 5 6\n",
        "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize ten\nNODATA_value -9999\n1 2 3\n4 5 6\n",
        "ncols 3\nncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2 3\n4 5 6\n",
        "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\nNODATA_value -9999\n1 2 3\n4 5 6\n",
        "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 0\nNODATA_value -9999\n1 2 3\n4 5 6\n",
    ];
    for d in docs {
        let e = parse_grid(d).unwrap_err();
        assert_eq!(e.class(), ParseErrorClass::Header, "{d:?} -> {e}");
    }
}

#[test]
fn malformed_shape_corpus() {
    let docs = ["1 2 3\n4 5\n", "1 2 3 4\n4 5 6\n", "1 2 3\n", "1 2 3\n4 5 6\n7 8 9\n"];
    for body in docs {
        let e = parse_grid(&format!("{HEADER}{body}")).unwrap_err();
        assert_eq!(e.class(), ParseErrorClass::Shape, "{body:?} -> {e}");
    }
}

#[test]
fn malformed_cell_corpus() {
    let docs = [("1 2 3\n4 x 6\n", 2, 2), ("1 2 3\n4 5 1,5\n", 2, 3), ("nan 2 3\n4 5 6\n", 1, 1), ("1 2 inf\n4 5 6\n", 1, 3)];
    for (body, row, col) in docs {
        let e = parse_grid(&format!("{HEADER}{body}")).unwrap_err();
        assert_eq!(e.class(), ParseErrorClass::Cell, "{body:?} -> {e}");
        assert_eq!((e.row, e.col), (Some(row), Some(col)), "{body:?}");
        assert!(e.to_string().contains(&format!("line {}", 6 + row)));
    }
}

#[test]
fn dnbr_examples() {
    let h = GridHeader::new(2, 1, 1.0);
    let pre = RasterGrid::from_rows(h, &[&[0.6, 0.3]]).unwrap();
    let post = RasterGrid::from_rows(h, &[&[0.1, -9999.0]]).unwrap();
    let d = compute_dnbr(&GridPair::new(pre.clone(), post).unwrap()).unwrap();
    assert!((d.get(0, 0).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(d.get(0, 1), None);
    let same = compute_dnbr(&GridPair::new(pre.clone(), pre).unwrap()).unwrap();
    assert!(same.valid_values().all(|v| v == 0.0));
}
