//! Patch matricization (im2col) and its adjoint (col2im).
//!
//! Images are `[m, m, c]` row-major: channel fastest. A patch vector lists
//! its entries channel-major, then patch row, then patch column, so entry
//! `ch * h * h + di * h + dj` of the patch at output position `(oi, oj)` is
//! `input[oi * stride - lead + di, oj * stride - lead + dj, ch]`, zero when
//! outside the image. Output positions are numbered `oi * p + oj`.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output size `ceil(m / stride)`, `floor((h - 1) / 2)` leading zeros.
    #[default]
    Same,
    /// Output size `floor((m - h) / stride) + 1`, no padding.
    Valid,
}

/// Geometry of a square sliding window over a square multi-channel image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGeometry {
    pub m: usize,
    pub c: usize,
    pub h: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl PatchGeometry {
    pub fn new(m: usize, c: usize, h: usize, stride: usize, padding: Padding) -> Result<Self> {
        if m == 0 || c == 0 || h == 0 || stride == 0 {
            return Err(Error::invalid(format!(
                "patch geometry needs positive sizes: m={m} c={c} h={h} stride={stride}"
            )));
        }
        if padding == Padding::Valid && h > m {
            return Err(Error::invalid(format!("filter {h} larger than input {m} with valid padding")));
        }
        Ok(PatchGeometry { m, c, h, stride, padding })
    }

    /// Output spatial extent `p`.
    pub fn out_size(&self) -> usize {
        match self.padding {
            Padding::Same => self.m.div_ceil(self.stride),
            Padding::Valid => (self.m - self.h) / self.stride + 1,
        }
    }

    pub fn lead(&self) -> usize {
        match self.padding {
            Padding::Same => (self.h - 1) / 2,
            Padding::Valid => 0,
        }
    }

    /// Length of one patch vector, `c * h * h`.
    pub fn patch_len(&self) -> usize {
        self.c * self.h * self.h
    }

    pub fn image_len(&self) -> usize {
        self.m * self.m * self.c
    }

    /// Source pixel `(row, col)` for output position `o` and window offset `d`,
    /// or `None` in the zero-padded border.
    #[inline]
    fn source(&self, o: usize, d: usize) -> Option<usize> {
        let pos = (o * self.stride + d).checked_sub(self.lead())?;
        (pos < self.m).then_some(pos)
    }

    /// Writes the patch vectors of one image as the rows of a `[p², c h²]`
    /// buffer (the transpose of the im2col matrix).
    pub(crate) fn patch_rows(&self, image: &[f64], out: &mut [f64]) {
        let (p, h, c, m, k) = (self.out_size(), self.h, self.c, self.m, self.patch_len());
        debug_assert_eq!(image.len(), self.image_len());
        debug_assert_eq!(out.len(), p * p * k);
        for oi in 0..p {
            for oj in 0..p {
                let row = &mut out[(oi * p + oj) * k..(oi * p + oj + 1) * k];
                for di in 0..h {
                    let src_i = self.source(oi, di);
                    for dj in 0..h {
                        let src = src_i.zip(self.source(oj, dj));
                        for ch in 0..c {
                            row[ch * h * h + di * h + dj] = match src {
                                Some((r, s)) => image[(r * m + s) * c + ch],
                                None => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`patch_rows`](Self::patch_rows): scatters `[p², c h²]`
    /// rows back onto an image, summing overlaps. `image` is overwritten.
    pub(crate) fn patch_rows_adjoint(&self, rows: &[f64], image: &mut [f64]) {
        let (p, h, c, m, k) = (self.out_size(), self.h, self.c, self.m, self.patch_len());
        debug_assert_eq!(image.len(), self.image_len());
        debug_assert_eq!(rows.len(), p * p * k);
        image.iter_mut().for_each(|v| *v = 0.0);
        for oi in 0..p {
            for oj in 0..p {
                let row = &rows[(oi * p + oj) * k..(oi * p + oj + 1) * k];
                for di in 0..h {
                    let Some(r) = self.source(oi, di) else { continue };
                    for dj in 0..h {
                        let Some(s) = self.source(oj, dj) else { continue };
                        for ch in 0..c {
                            image[(r * m + s) * c + ch] += row[ch * h * h + di * h + dj];
                        }
                    }
                }
            }
        }
    }
}

/// im2col: `[m, m, c]` image to the `[c h², p²]` matrix whose columns are
/// the vectorized patches.
pub fn im2col(input: &Tensor, h: usize, stride: usize, padding: Padding) -> Result<Tensor> {
    let &[m, m2, c] = input.shape() else {
        return Err(Error::shape(format!("im2col needs [m, m, c], got {:?}", input.shape())));
    };
    if m != m2 {
        return Err(Error::shape(format!("im2col needs a square image, got {:?}", input.shape())));
    }
    let g = PatchGeometry::new(m, c, h, stride, padding)?;
    let (p, k) = (g.out_size(), g.patch_len());
    let mut rows = vec![0.0; p * p * k];
    g.patch_rows(input.data(), &mut rows);
    Tensor::new(vec![p * p, k], rows)?.transpose()
}

/// col2im: adjoint of [`im2col`] for the same geometry.
pub fn col2im(
    cols: &Tensor,
    m: usize,
    c: usize,
    h: usize,
    stride: usize,
    padding: Padding,
) -> Result<Tensor> {
    let g = PatchGeometry::new(m, c, h, stride, padding)?;
    let (p, k) = (g.out_size(), g.patch_len());
    if cols.shape() != [k, p * p] {
        return Err(Error::shape(format!(
            "col2im expects [{k}, {}] for this geometry, got {:?}",
            p * p,
            cols.shape()
        )));
    }
    let rows = cols.transpose()?;
    let mut image = vec![0.0; g.image_len()];
    g.patch_rows_adjoint(rows.data(), &mut image);
    Tensor::new(vec![m, m, c], image)
}
