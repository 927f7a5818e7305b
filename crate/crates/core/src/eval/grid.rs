use alloc::vec::Vec;

use crate::data::{AttributeVector, Image};
use crate::error::{Error, Result};
use crate::models::Generator;
use crate::nn::Mode;
use crate::tensor::{Shape, Tensor};

/// RGB8 image made of equally sized tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub tile_height: usize,
    pub tile_width: usize,
    /// Row-major RGB, `(rows * tile_height) x (cols * tile_width)`.
    pub rgb: Vec<u8>,
}

impl Grid {
    pub fn width(&self) -> usize {
        self.cols * self.tile_width
    }

    pub fn height(&self) -> usize {
        self.rows * self.tile_height
    }

    /// Copy of tile `(row, col)` as RGB8.
    pub fn tile(&self, row: usize, col: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.tile_height * self.tile_width * 3);
        for y in 0..self.tile_height {
            let start = ((row * self.tile_height + y) * self.width() + col * self.tile_width) * 3;
            out.extend_from_slice(&self.rgb[start..start + self.tile_width * 3]);
        }
        out
    }

    fn put(&mut self, row: usize, col: usize, tile: &[u8]) {
        let w = self.width();
        let line = self.tile_width * 3;
        for y in 0..self.tile_height {
            let start = ((row * self.tile_height + y) * w + col * self.tile_width) * 3;
            self.rgb[start..start + line].copy_from_slice(&tile[y * line..(y + 1) * line]);
        }
    }
}

/// Figure layout: one row per source; columns are the original, its
/// reconstruction, then one single-attribute edit per entry of `edits`
/// (the attribute flipped from its source value).
pub fn render_grid(
    generator: &Generator<f32>,
    sources: &[(Image, AttributeVector)],
    edits: &[usize],
    schema: &crate::data::AttributeSchema,
) -> Result<Grid> {
    if sources.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let size = generator.config().image_size;
    for (img, a) in sources {
        if img.height() != size || img.width() != size {
            return Err(Error::Shape(alloc::format!(
                "grid source is {}x{}, model expects {size}x{size}",
                img.height(),
                img.width()
            )));
        }
        a.check_arity(schema)?;
    }
    if let Some(&bad) = edits.iter().find(|&&j| j >= schema.len()) {
        return Err(Error::Arity {
            expected: schema.len(),
            actual: bad + 1,
        });
    }
    let n = sources.len();
    let mut x = Tensor::<f32>::zeros(Shape::new(n, 3, size, size));
    for (i, (img, _)) in sources.iter().enumerate() {
        img.write_chw(x.item_mut(i));
    }
    let a: Vec<_> = sources.iter().map(|(_, a)| a.clone()).collect();
    let z = generator.encode(&x, Mode::Eval)?;
    let mut columns = Vec::with_capacity(edits.len() + 1);
    columns.push(generator.decode(&z, &a, Mode::Eval)?);
    for &j in edits {
        let b: Vec<_> = a.iter().map(|v| v.with_single_edit(schema, j, !v.get(j))).collect();
        columns.push(generator.decode(&z, &b, Mode::Eval)?);
    }
    let mut grid = Grid {
        rows: n,
        cols: edits.len() + 2,
        tile_height: size,
        tile_width: size,
        rgb: alloc::vec![0; n * size * size * 3 * (edits.len() + 2)],
    };
    for (i, (img, _)) in sources.iter().enumerate() {
        grid.put(i, 0, &img.to_rgb8());
        for (c, out) in columns.iter().enumerate() {
            grid.put(i, c + 1, &Image::from_tensor_item(out, i).to_rgb8());
        }
    }
    Ok(grid)
}
