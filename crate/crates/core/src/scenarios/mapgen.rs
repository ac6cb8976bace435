//! Deterministic generation of the bundled scenario maps.
//!
//! Special-terrain clusters are scattered over the upper half of the board,
//! half of them inside the band between the upper quarter line and the
//! center row, and every cell is mirrored through the row flip. With an odd
//! row count the result is symmetric under the flip, so the two starting
//! edges see identical terrain.

use crate::hexgrid::{GameMap, HexCoord, SPECIAL};
use crate::rng::XorShift64Star;

const MAP_SEED_BASE: u64 = 0x504F_4143_4D41_5000;
/// Average board area per cluster.
const CELLS_PER_CLUSTER: i32 = 70;

pub fn generate_map(rows: i32, cols: i32, scenario_seed: u64, special: bool) -> GameMap {
    let mut map = GameMap::new(rows, cols);
    if !special {
        return map;
    }
    let mut rng = XorShift64Star::new(MAP_SEED_BASE ^ scenario_seed);
    let half = rows / 2;
    let clusters = ((rows * cols) / CELLS_PER_CLUSTER).max(3);
    for k in 0..clusters {
        let (lo, hi) = if k % 2 == 0 {
            ((rows / 4).max(1), half)
        } else {
            (1, half)
        };
        let row = lo + rng.below((hi - lo + 1).max(1) as usize) as i32;
        let col = 1 + rng.below((cols - 2).max(1) as usize) as i32;
        let seed_cell = HexCoord::new(row.min(rows - 1), col.min(cols - 1));
        let mut cells = vec![seed_cell];
        let around: Vec<HexCoord> = map.neighbor_dirs(seed_cell).map(|(_, n)| n).collect();
        for n in around {
            if rng.below(2) == 0 {
                cells.push(n);
            }
        }
        for c in cells {
            map.set_terrain(c, SPECIAL).expect("in bounds");
            let m = map.flip_coord(c);
            map.set_terrain(m, SPECIAL).expect("in bounds");
        }
    }
    map
}
