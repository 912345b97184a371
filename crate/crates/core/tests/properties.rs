use proptest::prelude::*;

use corrdyn::format::{parse_chain, write_chain};
use corrdyn::measure::estimate_measure;
use corrdyn::relation::{image_cells, CellSet, Direction, ImageParams, Region};
use corrdyn::sphere::chordal_distance;
use corrdyn::{AtlasGrid, BihomPoly, Chain, Correspondence, ProjPoint, C64};

fn coeff() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn generic_chain(max_d: usize) -> impl Strategy<Value = Chain> {
    (1..=max_d, 1..=max_d)
        .prop_flat_map(|(dz, dw)| proptest::collection::vec(proptest::collection::vec(coeff(), dw + 1), dz + 1))
        .prop_filter_map("degenerate draw", |rows| Chain::single(BihomPoly::from_rows(&rows).ok()?).ok())
}

fn point() -> impl Strategy<Value = ProjPoint> {
    (-1.0..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(h, phi)| {
        let r = (1.0 - h * h).sqrt();
        ProjPoint::from_sphere([r * phi.cos(), r * phi.sin(), h])
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fibers_are_complete(c in generic_chain(3), p in point()) {
        let d = c.degrees();
        let fwd = c.forward(&p).unwrap();
        let bwd = c.backward(&p).unwrap();
        prop_assert_eq!(fwd.total_multiplicity() as u64, d.d0);
        prop_assert_eq!(bwd.total_multiplicity() as u64, d.d1);
        for w in fwd.points() {
            prop_assert!(c.residual(&p, w) <= 1e-7);
        }
    }

    #[test]
    fn composite_degrees_multiply(a in generic_chain(2), b in generic_chain(2)) {
        if let Ok(ab) = a.compose(&b) {
            let (da, db, dab) = (a.degrees(), b.degrees(), ab.degrees());
            prop_assert_eq!(dab.d0, da.d0 * db.d0);
            prop_assert_eq!(dab.d1, da.d1 * db.d1);
        }
    }

    #[test]
    fn transpose_reverses_composition(a in generic_chain(2), b in generic_chain(2)) {
        if let (Ok(l), Ok(r)) = (a.compose(&b), b.transpose().compose(&a.transpose())) {
            let l = l.transpose();
            prop_assert!(l.components()[0].poly.approx_eq_up_to_unit(&r.components()[0].poly, 1e-8));
        }
    }

    #[test]
    fn composite_contains_two_step_pairs(a in generic_chain(2), b in generic_chain(2), p in point()) {
        let Ok(ab) = a.compose(&b) else { return Ok(()) };
        for u in a.forward(&p).unwrap().points() {
            for w in b.forward(u).unwrap().points() {
                prop_assert!(ab.residual(&p, w) <= 1e-6);
            }
        }
    }

    #[test]
    fn chain_text_round_trips(c in generic_chain(3)) {
        let back = parse_chain(&write_chain(&c)).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn chordal_metric_is_a_metric(p in point(), q in point(), r in point()) {
        let (pq, qr, pr) = (chordal_distance(&p, &q), chordal_distance(&q, &r), chordal_distance(&p, &r));
        prop_assert!(pq <= 1.0 + 1e-12);
        prop_assert!((pq - chordal_distance(&q, &p)).abs() < 1e-14);
        prop_assert!(pr <= pq + qr + 1e-12);
    }

    #[test]
    fn located_cells_are_small(p in point()) {
        let grid = AtlasGrid::new(32);
        let k = grid.locate(&p);
        prop_assert!(chordal_distance(&grid.center(k), &p) <= grid.cell_diameter(k) + 1e-12);
    }
}

#[test]
fn seeded_measures_repeat() {
    let c = Chain::single(BihomPoly::from_real_terms(&[(0, 1, 1.0), (2, 0, -1.0), (0, 0, 0.3)]).unwrap()).unwrap();
    let grid = AtlasGrid::new(16);
    let z = ProjPoint::real(2.0);
    let a = estimate_measure(&c, &z, 12, 2000, &grid, 7).unwrap();
    let b = estimate_measure(&c, &z, 12, 2000, &grid, 7).unwrap();
    assert_eq!(a.mass(), b.mass());
    let other = estimate_measure(&c, &z, 12, 2000, &grid, 8).unwrap();
    assert_ne!(a.mass(), other.mass());
}

#[test]
fn backward_square_root_pulls_the_outside_in() {
    let c = Chain::single(BihomPoly::from_real_terms(&[(1, 0, 1.0), (0, 2, -1.0)]).unwrap()).unwrap();
    let grid = AtlasGrid::new(32);
    let outside = CellSet::from_region(&grid, &Region::Outside { radius: 2.0 });
    let img = image_cells(&c, &outside, Direction::Backward, &ImageParams::default()).unwrap();
    assert!(img.is_subset(&outside));
    assert!(img.count() < outside.count());
}
