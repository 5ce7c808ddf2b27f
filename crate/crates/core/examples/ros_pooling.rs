//! Region-of-structure pooling: a screenshot becomes a grid of patch
//! features and each token's box averages the cells whose centers it covers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weblm::visual::{
    extract_feature_grid, perturb_box, pool_cells, ros_pool, NormalizedBox, PatchExtractorParams, PerturbDirection,
    Screenshot,
};

fn main() -> weblm::Result<()> {
    let mut shot = Screenshot::filled(224, 224, [1.0, 1.0, 1.0])?;
    shot.fill_rect(0, 0, 224, 40, [0.1, 0.2, 0.6]);
    shot.fill_rect(20, 80, 90, 60, [0.9, 0.3, 0.1]);

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = PatchExtractorParams::random(6, 1.0, &mut rng);
    let grid = extract_feature_grid(&shot, 14, &params);

    let header = NormalizedBox::new(0, 1000, 0, 180)?;
    let tiny = NormalizedBox::new(500, 510, 500, 505)?;
    for (name, b) in [("header", header), ("tiny", tiny)] {
        let cells = pool_cells(grid.side, &b);
        println!("{name}: {} cells, pooled {:.3}", cells.len(), ros_pool(&grid, &b));
    }

    let b = NormalizedBox::new(400, 600, 400, 600)?;
    for dir in [PerturbDirection::Enlarge, PerturbDirection::Reduce] {
        let p = perturb_box(&b, dir, 0.5);
        println!(
            "{dir:?}: {b:?} -> {p:?}, {} -> {} cells",
            pool_cells(14, &b).len(),
            pool_cells(14, &p).len()
        );
    }
    Ok(())
}
