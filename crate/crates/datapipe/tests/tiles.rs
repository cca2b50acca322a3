use std::collections::BTreeSet;

use proptest::prelude::*;
use wincel_datapipe::geo::{assign_tiles, tile_id, Grid, ProjectedOccurrence};
use wincel_datapipe::DataError;

fn grid() -> Grid {
    Grid {
        origin: [2_600_000, 1_200_000],
        cell_m: 100,
        extent_m: Some([5_000, 5_000]),
    }
}

fn arb_occurrence() -> impl Strategy<Value = ProjectedOccurrence> {
    (0usize..5, 0.0f64..5_000.0, 0.0f64..5_000.0).prop_map(|(s, e, n)| ProjectedOccurrence {
        species: format!("Species s{s}"),
        easting: 2_600_000.0 + e,
        northing: 1_200_000.0 + n,
    })
}

proptest! {
    #[test]
    fn every_occurrence_lands_in_exactly_one_tile(occ in prop::collection::vec(arb_occurrence(), 0..200)) {
        let tiles = assign_tiles(&occ, &grid()).unwrap();
        for o in &occ {
            let owners: Vec<_> = tiles
                .values()
                .filter(|t| {
                    (t.easting as f64) <= o.easting
                        && o.easting < (t.easting + 100) as f64
                        && (t.northing as f64) <= o.northing
                        && o.northing < (t.northing + 100) as f64
                })
                .collect();
            prop_assert_eq!(owners.len(), 1);
            prop_assert!(owners[0].species.contains(&o.species));
        }
        let pairs: BTreeSet<(String, String)> = occ
            .iter()
            .map(|o| {
                let e = (o.easting as i64).div_euclid(100) * 100;
                let n = (o.northing as i64).div_euclid(100) * 100;
                (tile_id(e, n), o.species.clone())
            })
            .collect();
        let produced: BTreeSet<(String, String)> = tiles
            .values()
            .flat_map(|t| t.species.iter().map(move |s| (t.tile_id.clone(), s.clone())))
            .collect();
        prop_assert_eq!(pairs, produced);
        for (id, t) in &tiles {
            prop_assert_eq!(id, &tile_id(t.easting, t.northing));
            prop_assert_eq!(t.easting % 100, 0);
            prop_assert_eq!(t.northing % 100, 0);
        }
    }
}

#[test]
fn corner_and_neighbour_cases() {
    let occ = |s: &str, e: f64, n: f64| ProjectedOccurrence {
        species: s.into(),
        easting: e,
        northing: n,
    };
    let tiles = assign_tiles(
        &[
            occ("Arnica montana", 2_600_100.0, 1_200_100.0),
            occ("Sorbus aucuparia", 2_600_130.0, 1_200_150.0),
            occ("Bufo bufo", 2_600_099.9, 1_200_100.0),
        ],
        &grid(),
    )
    .unwrap();
    assert_eq!(tiles.len(), 2);
    assert_eq!(tiles["E2600100_N1200100"].species.len(), 2);
    assert!(tiles["E2600000_N1200100"].species.contains("Bufo bufo"));

    let outside = [occ("Bufo bufo", 2_605_000.0, 1_200_000.0)];
    assert!(matches!(assign_tiles(&outside, &grid()), Err(DataError::OutOfExtent { .. })));
}
