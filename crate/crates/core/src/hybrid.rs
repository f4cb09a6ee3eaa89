//! Hybrid patches: a plain patch whose border bands are replaced by the
//! aligned styled patch.

use crate::error::{Error, Result};
use crate::image::GrayImage;
use rand::Rng;

/// Widths of the styled bands at each edge of a `p × p` patch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct HybridMask {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl HybridMask {
    pub const EMPTY: HybridMask = HybridMask {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    pub fn new(top: usize, bottom: usize, left: usize, right: usize) -> Self {
        HybridMask {
            top,
            bottom,
            left,
            right,
        }
    }

    /// Whether pixel `(x, y)` of a `p × p` patch lies in a styled band.
    pub fn is_styled(&self, p: usize, x: usize, y: usize) -> bool {
        y < self.top || y + self.bottom >= p || x < self.left || x + self.right >= p
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::EMPTY
    }
}

/// Largest band a sampled mask may use: `p/2 − δ`.
pub fn max_band(p: usize, delta: usize) -> Result<usize> {
    match (p / 2).checked_sub(delta) {
        Some(m) if m >= 1 => Ok(m),
        _ => Err(Error::Parameter(format!(
            "delta {delta} must be below p/2 = {}",
            p / 2
        ))),
    }
}

/// Draws each extent independently: 0 with probability 1/2, otherwise
/// uniform over `1..=p/2 − δ`.
pub fn sample_mask<R: Rng + ?Sized>(p: usize, delta: usize, rng: &mut R) -> Result<HybridMask> {
    let max = max_band(p, delta)?;
    let mut draw = || {
        if rng.random_bool(0.5) {
            0
        } else {
            rng.random_range(1..=max)
        }
    };
    Ok(HybridMask {
        top: draw(),
        bottom: draw(),
        left: draw(),
        right: draw(),
    })
}

/// Starts from `plain` and copies the masked bands from `styled`.
pub fn compose(plain: &GrayImage, styled: &GrayImage, mask: &HybridMask) -> Result<GrayImage> {
    let p = plain.width();
    if plain.height() != p || styled.width() != p || styled.height() != p {
        return Err(Error::Dimension(format!(
            "compose needs two square patches of equal size, got {}x{} and {}x{}",
            plain.width(),
            plain.height(),
            styled.width(),
            styled.height()
        )));
    }
    let mut out = plain.clone();
    let bands = [
        (0..mask.top.min(p), 0..p),
        (p - mask.bottom.min(p)..p, 0..p),
        (0..p, 0..mask.left.min(p)),
        (0..p, p - mask.right.min(p)..p),
    ];
    for (rows, cols) in bands {
        for y in rows {
            for x in cols.clone() {
                out.set(x, y, styled.get(x, y));
            }
        }
    }
    Ok(out)
}

/// Conditioning derived from the committed pixels of an inference window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InferenceMask {
    Bands(HybridMask),
    /// Every pixel is already committed.
    Full,
}

/// Maximal fully committed band at each edge of a `p × p` window given
/// row-major committed flags.
pub fn mask_from_committed(committed: &[bool], p: usize) -> Result<InferenceMask> {
    if committed.len() != p * p {
        return Err(Error::Dimension(format!(
            "coverage has {} flags, expected {}",
            committed.len(),
            p * p
        )));
    }
    let row_full = |y: usize| committed[y * p..(y + 1) * p].iter().all(|&c| c);
    let col_full = |x: usize| (0..p).all(|y| committed[y * p + x]);
    let top = (0..p).take_while(|&y| row_full(y)).count();
    if top == p {
        return Ok(InferenceMask::Full);
    }
    let bottom = (0..p).rev().take_while(|&y| row_full(y)).count();
    let left = (0..p).take_while(|&x| col_full(x)).count();
    let right = (0..p).rev().take_while(|&x| col_full(x)).count();
    Ok(InferenceMask::Bands(HybridMask {
        top,
        bottom,
        left,
        right,
    }))
}
