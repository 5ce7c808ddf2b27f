use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dom::BoundingBox;
use crate::error::{Error, Result};

/// Upper end of the discretized coordinate range.
pub const COORD_MAX: u16 = 1000;

/// Box in page-relative integer coordinates on `[0, 1000]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizedBox {
    pub x0: u16,
    pub x1: u16,
    pub y0: u16,
    pub y1: u16,
}

impl NormalizedBox {
    pub const FULL: NormalizedBox = NormalizedBox {
        x0: 0,
        x1: COORD_MAX,
        y0: 0,
        y1: COORD_MAX,
    };

    pub fn new(x0: u16, x1: u16, y0: u16, y1: u16) -> Result<Self> {
        if x0 > x1 || y0 > y1 || x1 > COORD_MAX || y1 > COORD_MAX {
            return Err(Error::Format(format!("invalid normalized box ({x0},{x1},{y0},{y1})")));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn w(&self) -> u16 {
        self.x1 - self.x0
    }

    pub fn h(&self) -> u16 {
        self.y1 - self.y0
    }

    /// `(x0, x1, y0, y1, w, h)`, the order consumed by [`box_embed`].
    pub fn features(&self) -> [u16; 6] {
        [self.x0, self.x1, self.w(), self.y0, self.y1, self.h()]
    }
}

/// `round(1000 * v / extent)` clamped to `[0, 1000]`, ties away from zero.
fn scale_coord(v: i64, extent: i64) -> u16 {
    if v <= 0 {
        return 0;
    }
    let scaled = (2000 * v as i128 + extent as i128) / (2 * extent as i128);
    scaled.min(COORD_MAX as i128) as u16
}

/// Maps a pixel box onto the `[0, 1000]` grid of a `page_w`×`page_h` page.
pub fn normalize_box(b: &BoundingBox, page_w: i64, page_h: i64) -> NormalizedBox {
    let page_w = page_w.max(1);
    let page_h = page_h.max(1);
    NormalizedBox {
        x0: scale_coord(b.x0, page_w),
        x1: scale_coord(b.x1(), page_w),
        y0: scale_coord(b.y0, page_h),
        y1: scale_coord(b.y1(), page_h),
    }
}

/// Normalizes `b` relative to the frame `frame` (for example a segment crop).
pub fn normalize_in_frame(b: &BoundingBox, frame: &BoundingBox) -> NormalizedBox {
    let shifted = BoundingBox {
        x0: b.x0 - frame.x0,
        y0: b.y0 - frame.y0,
        w: b.w,
        h: b.h,
    };
    normalize_box(&shifted, frame.w, frame.h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbDirection {
    Enlarge,
    Reduce,
}

/// Scales width and height by `1 ± scale` about the box center, then
/// re-discretizes and clamps to the coordinate range.
pub fn perturb_box(b: &NormalizedBox, direction: PerturbDirection, scale: f64) -> NormalizedBox {
    let factor = match direction {
        PerturbDirection::Enlarge => 1.0 + scale,
        PerturbDirection::Reduce => 1.0 - scale,
    };
    let axis = |lo: u16, hi: u16| -> (u16, u16) {
        let center = (lo as f64 + hi as f64) / 2.0;
        let half = (hi - lo) as f64 * factor / 2.0;
        let clamp = |v: f64| v.round().clamp(0.0, COORD_MAX as f64) as u16;
        let (a, b) = (clamp(center - half), clamp(center + half));
        (a.min(b), a.max(b))
    };
    let (x0, x1) = axis(b.x0, b.x1);
    let (y0, y1) = axis(b.y0, b.y1);
    NormalizedBox { x0, x1, y0, y1 }
}

/// Grid cells (row-major indices into a `side`×`side` grid) pooled for a box:
/// every cell whose center lies inside the box, or, when there is none, the
/// cell holding the box center.
pub fn pool_cells(side: usize, b: &NormalizedBox) -> Vec<usize> {
    let p = side as i64;
    let m = COORD_MAX as i64;
    // center of cell k is (2k + 1) * 1000 / (2p)
    let inside =
        |k: i64, lo: u16, hi: u16| 2 * p * lo as i64 <= (2 * k + 1) * m && (2 * k + 1) * m <= 2 * p * hi as i64;
    let cols: Vec<i64> = (0..p).filter(|&c| inside(c, b.x0, b.x1)).collect();
    let rows: Vec<i64> = (0..p).filter(|&r| inside(r, b.y0, b.y1)).collect();
    if cols.is_empty() || rows.is_empty() {
        let cell = |lo: u16, hi: u16| ((lo as i64 + hi as i64) * p / (2 * m)).min(p - 1);
        let (c, r) = (cell(b.x0, b.x1), cell(b.y0, b.y1));
        return vec![(r * p + c) as usize];
    }
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r * p + c) as usize))
        .collect()
}

/// Mean of the grid rows listed in `cells`, summed in the given order.
pub fn mean_rows(cells: ArrayView2<'_, f64>, idx: &[usize]) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(cells.ncols());
    for &i in idx {
        acc += &cells.row(i);
    }
    acc / idx.len() as f64
}

/// Region-of-structure pooling of a feature grid over a box.
pub fn ros_pool(grid: &super::FeatureGrid, b: &NormalizedBox) -> Array1<f64> {
    mean_rows(grid.cells.view(), &pool_cells(grid.side, b))
}

/// 2D position embedding: rows `x0, x1, w` of `xtable` followed by rows
/// `y0, y1, h` of `ytable`.
pub fn box_embed(b: &NormalizedBox, xtable: &Array2<f64>, ytable: &Array2<f64>) -> Array1<f64> {
    let d = xtable.ncols();
    let mut out = Array1::zeros(6 * d);
    for (k, &v) in b.features().iter().enumerate() {
        let table = if k < 3 { xtable } else { ytable };
        out.slice_mut(s![k * d..(k + 1) * d]).assign(&table.row(v as usize));
    }
    out
}
