//! Binary erosion and dilation with a square structuring element.
//!
//! Both operators run the van Herk / Gil-Werman running-extremum filter
//! separably (rows, then columns), so the per-pixel cost does not depend on
//! the kernel size. Pixels outside the image are treated as false.

use crate::image::BinaryMask;

#[derive(Clone, Copy)]
enum Op {
    /// Running max over booleans.
    Or,
    /// Running min over booleans.
    And,
}

impl Op {
    #[inline(always)]
    fn apply(self, a: bool, b: bool) -> bool {
        match self {
            Op::Or => a | b,
            Op::And => a & b,
        }
    }
}

/// True where any pixel of the `kernel`×`kernel` neighborhood is true.
///
/// # Panics
/// If `kernel` is even or zero.
pub fn dilate(mask: &BinaryMask, kernel: u32) -> BinaryMask {
    filter(mask, kernel, Op::Or)
}

/// True where every pixel of the `kernel`×`kernel` neighborhood is true.
///
/// # Panics
/// If `kernel` is even or zero.
pub fn erode(mask: &BinaryMask, kernel: u32) -> BinaryMask {
    filter(mask, kernel, Op::And)
}

fn filter(mask: &BinaryMask, kernel: u32, op: Op) -> BinaryMask {
    assert!(
        kernel % 2 == 1,
        "structuring element side must be odd and >= 1, got {kernel}"
    );
    if kernel == 1 || mask.width() == 0 || mask.height() == 0 {
        return mask.clone();
    }
    let w = mask.width() as usize;
    let h = mask.height() as usize;
    let k = kernel as usize;

    let mut rows = vec![false; w * h];
    let mut g = vec![false; w + k - 1];
    let mut hh = vec![false; w + k - 1];
    for (src, dst) in mask.bits().chunks_exact(w).zip(rows.chunks_exact_mut(w)) {
        filter_line(src, dst, k, op, &mut g, &mut hh);
    }
    let out = filter_columns(&rows, w, h, k, op);
    BinaryMask::new(mask.width(), mask.height(), out).expect("same shape as input")
}

/// Running extremum over one line, zero padded by `k / 2` on both sides.
/// `g` and `h` are scratch buffers of length `src.len() + k - 1`.
fn filter_line(src: &[bool], dst: &mut [bool], k: usize, op: Op, g: &mut [bool], h: &mut [bool]) {
    let r = k / 2;
    let n = src.len();
    let padded = n + 2 * r;
    let at = |j: usize| j >= r && j - r < n && src[j - r];

    for j in 0..padded {
        let v = at(j);
        g[j] = if j % k == 0 { v } else { op.apply(g[j - 1], v) };
    }
    for j in (0..padded).rev() {
        let v = at(j);
        let block_end = j % k == k - 1 || j == padded - 1;
        h[j] = if block_end { v } else { op.apply(h[j + 1], v) };
    }
    for (i, d) in dst.iter_mut().enumerate() {
        *d = op.apply(h[i], g[i + k - 1]);
    }
}

/// Vertical pass, vectorized across each row so every access is sequential.
fn filter_columns(src: &[bool], w: usize, h: usize, k: usize, op: Op) -> Vec<bool> {
    let r = k / 2;
    let padded = h + 2 * r;
    let row = |j: usize| -> Option<&[bool]> {
        (j >= r && j - r < h).then(|| &src[(j - r) * w..(j - r + 1) * w])
    };

    let mut g = vec![false; padded * w];
    for j in 0..padded {
        let (before, cur) = g.split_at_mut(j * w);
        let cur = &mut cur[..w];
        match (j % k == 0, row(j)) {
            (true, Some(s)) => cur.copy_from_slice(s),
            (true, None) => cur.fill(false),
            (false, Some(s)) => {
                let prev = &before[(j - 1) * w..];
                for ((c, &p), &v) in cur.iter_mut().zip(prev).zip(s) {
                    *c = op.apply(p, v);
                }
            }
            (false, None) => {
                let prev = &before[(j - 1) * w..];
                for (c, &p) in cur.iter_mut().zip(prev) {
                    *c = op.apply(p, false);
                }
            }
        }
    }

    let mut hs = vec![false; padded * w];
    for j in (0..padded).rev() {
        let (cur, after) = hs.split_at_mut((j + 1) * w);
        let cur = &mut cur[j * w..];
        let block_end = j % k == k - 1 || j == padded - 1;
        match (block_end, row(j)) {
            (true, Some(s)) => cur.copy_from_slice(s),
            (true, None) => cur.fill(false),
            (false, Some(s)) => {
                for ((c, &n), &v) in cur.iter_mut().zip(&after[..w]).zip(s) {
                    *c = op.apply(n, v);
                }
            }
            (false, None) => {
                for (c, &n) in cur.iter_mut().zip(&after[..w]) {
                    *c = op.apply(n, false);
                }
            }
        }
    }

    let mut out = vec![false; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        let hrow = &hs[y * w..(y + 1) * w];
        let grow = &g[(y + k - 1) * w..(y + k) * w];
        for ((d, &a), &b) in dst.iter_mut().zip(hrow).zip(grow) {
            *d = op.apply(a, b);
        }
    }
    out
}
