use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Screenshot;

/// Inputs per grid cell: mean R, G, B and the cell-center coordinates.
pub const PATCH_INPUTS: usize = 5;

/// `side`×`side` grid of feature vectors, stored as `side²` rows in row-major
/// cell order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub side: usize,
    pub cells: Array2<f64>,
}

impl FeatureGrid {
    pub fn dim(&self) -> usize {
        self.cells.ncols()
    }
}

/// Linear map from per-cell patch statistics to feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchExtractorParams {
    /// `PATCH_INPUTS`×C
    pub weight: Array2<f64>,
    /// 1×C
    pub bias: Array2<f64>,
}

impl PatchExtractorParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weight: Array2::zeros((PATCH_INPUTS, dim)),
            bias: Array2::zeros((1, dim)),
        }
    }

    pub fn random<R: Rng>(dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        Self {
            weight: Array2::from_shape_simple_fn((PATCH_INPUTS, dim), || normal.sample(rng)),
            bias: Array2::zeros((1, dim)),
        }
    }
}

/// Per-cell `[mean R, mean G, mean B, cx, cy]` for a `side`×`side` grid over
/// the image; cell centers are in `[0, 1]`.
pub fn patch_statistics(img: &Screenshot, side: usize) -> Array2<f64> {
    let bounds = |k: usize, len: usize| {
        let a = (k * len / side).min(len - 1);
        let b = ((k + 1) * len / side).max(a + 1).min(len);
        (a, b)
    };
    let mut out = Array2::zeros((side * side, PATCH_INPUTS));
    for r in 0..side {
        let (ya, yb) = bounds(r, img.height());
        for c in 0..side {
            let (xa, xb) = bounds(c, img.width());
            let mut sum = [0.0; 3];
            for y in ya..yb {
                for x in xa..xb {
                    let p = img.pixel(x, y);
                    for k in 0..3 {
                        sum[k] += p[k];
                    }
                }
            }
            let n = ((yb - ya) * (xb - xa)) as f64;
            let mut row = out.row_mut(r * side + c);
            for k in 0..3 {
                row[k] = sum[k] / n;
            }
            row[3] = (c as f64 + 0.5) / side as f64;
            row[4] = (r as f64 + 0.5) / side as f64;
        }
    }
    out
}

/// Projects precomputed patch statistics into a feature grid.
pub fn project_patches(stats: &Array2<f64>, side: usize, params: &PatchExtractorParams) -> FeatureGrid {
    FeatureGrid {
        side,
        cells: stats.dot(&params.weight) + &params.bias,
    }
}

/// Feature grid of an already resized image.
pub fn extract_feature_grid(img: &Screenshot, side: usize, params: &PatchExtractorParams) -> FeatureGrid {
    project_patches(&patch_statistics(img, side), side, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_grid() {
        let img = Screenshot::filled(224, 224, [0.2, 0.4, 0.8]).unwrap();
        let g = extract_feature_grid(&img, 14, &PatchExtractorParams::zeros(12));
        assert_eq!(g.cells.dim(), (196, 12));
        assert!(g.cells.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn color_only_projection_is_uniform_on_constant_image() {
        let img = Screenshot::filled(224, 224, [0.2, 0.4, 0.8]).unwrap();
        let mut p = PatchExtractorParams::zeros(3);
        for k in 0..3 {
            p.weight[[k, k]] = 1.0;
        }
        let g = extract_feature_grid(&img, 14, &p);
        let first = g.cells.row(0).to_owned();
        for row in g.cells.rows() {
            assert_eq!(row, first);
        }
        assert!(first.iter().zip([0.2, 0.4, 0.8]).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn statistics_per_cell() {
        let mut img = Screenshot::filled(4, 4, [0.0; 3]).unwrap();
        img.fill_rect(2, 0, 2, 2, [1.0, 0.5, 0.25]);
        let s = patch_statistics(&img, 2);
        assert_eq!(s.row(1).to_vec(), [1.0, 0.5, 0.25, 0.75, 0.25]);
        assert_eq!(s.row(2).to_vec(), [0.0, 0.0, 0.0, 0.25, 0.75]);
    }

    #[test]
    fn more_cells_than_pixels() {
        let img = Screenshot::filled(3, 3, [0.5; 3]).unwrap();
        let s = patch_statistics(&img, 5);
        assert!(s.column(0).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // d(grid[cell, j]) / d(weight[k, j]) = stats[cell, k]; d/d(bias[j]) = 1
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..16 * 16 * 3).map(|_| rng.random()).collect();
        let img = Screenshot::new(16, 16, data).unwrap();
        let params = PatchExtractorParams::random(4, 0.5, &mut rng);
        let stats = patch_statistics(&img, 4);
        let eps = 1e-6;
        for cell in [0, 5, 15] {
            for j in 0..4 {
                for k in 0..PATCH_INPUTS {
                    let mut plus = params.clone();
                    plus.weight[[k, j]] += eps;
                    let mut minus = params.clone();
                    minus.weight[[k, j]] -= eps;
                    let fd = (extract_feature_grid(&img, 4, &plus).cells[[cell, j]]
                        - extract_feature_grid(&img, 4, &minus).cells[[cell, j]])
                        / (2.0 * eps);
                    let analytic = stats[[cell, k]];
                    let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
                    assert!(rel < 1e-4, "cell {cell} k {k} j {j}: {fd} vs {analytic}");
                }
            }
        }
    }
}
