//! Numeric kernels shared by the tape's forward and backward passes.
//!
//! Everything here is generic over [`Real`] so the same code path serves the
//! f32 model and the f64 finite-difference reference.

use super::real::Real;

/// C[m,n] = A[m,k] @ B[k,n].
pub fn matmul<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C[m,n] = A^T @ B where A is [k,m], B is [k,n].
pub fn matmul_at_b<T: Real>(a: &[T], b: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C[m,k] = A @ B^T where A is [m,n], B is [k,n].
pub fn matmul_a_bt<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let crow = &mut c[i * k..(i + 1) * k];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * n..(j + 1) * n];
            let mut s = T::zero();
            for (&av, &bv) in arow.iter().zip(brow) {
                s += av * bv;
            }
            *cv = s;
        }
    }
    c
}

/// Output spatial extents of a strided convolution over an equirect tensor:
/// height uses zero padding of k/2, width is circular so only the stride matters.
pub fn conv_out_dims(h: usize, w: usize, kernel: usize, stride: usize) -> (usize, usize) {
    let pad = kernel / 2;
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + stride - 1) / stride;
    (oh, ow)
}

/// Gather conv patches: input [h,w,c] -> cols [oh*ow, kernel*kernel*c].
/// Rows beyond the top/bottom edge contribute zeros; columns wrap around.
pub fn im2col<T: Real>(
    input: &[T],
    h: usize,
    w: usize,
    c: usize,
    kernel: usize,
    stride: usize,
) -> Vec<T> {
    let (oh, ow) = conv_out_dims(h, w, kernel, stride);
    let pad = (kernel / 2) as isize;
    let patch = kernel * kernel * c;
    let mut cols = vec![T::zero(); oh * ow * patch];
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * patch;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = ((ox * stride + kx) as isize - pad).rem_euclid(w as isize);
                    let src = ((iy as usize) * w + ix as usize) * c;
                    let dst = base + (ky * kernel + kx) * c;
                    cols[dst..dst + c].copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
    cols
}

/// Scatter-add the adjoint of [`im2col`] back into the input gradient.
pub fn col2im_add<T: Real>(
    dcols: &[T],
    dinput: &mut [T],
    h: usize,
    w: usize,
    c: usize,
    kernel: usize,
    stride: usize,
) {
    let (oh, ow) = conv_out_dims(h, w, kernel, stride);
    let pad = (kernel / 2) as isize;
    let patch = kernel * kernel * c;
    for oy in 0..oh {
        for ox in 0..ow {
            let base = (oy * ow + ox) * patch;
            for ky in 0..kernel {
                let iy = (oy * stride + ky) as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = ((ox * stride + kx) as isize - pad).rem_euclid(w as isize);
                    let dst = ((iy as usize) * w + ix as usize) * c;
                    let src = base + (ky * kernel + kx) * c;
                    for ch in 0..c {
                        dinput[dst + ch] += dcols[src + ch];
                    }
                }
            }
        }
    }
}

/// A fractional sample position on an equirect grid. The horizontal
/// coordinate is kept split as `col + u_frac` so that positions differing by
/// a whole number of columns produce bitwise-identical interpolation weights;
/// several rotation identities in this crate are exact only because of that.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCoord {
    pub col: i64,
    pub u_frac: f64,
    pub v: f64,
}

impl GridCoord {
    pub fn new(col: i64, u_frac: f64, v: f64) -> Self {
        GridCoord { col, u_frac, v }
    }

    /// Collapsed horizontal coordinate wrapped into [0, w).
    pub fn u(&self, w: usize) -> f64 {
        (self.col as f64 + self.u_frac).rem_euclid(w as f64)
    }

    /// Shift by a whole number of columns; interpolation weights unchanged.
    pub fn shifted(&self, cols: i64) -> Self {
        GridCoord { col: self.col + cols, u_frac: self.u_frac, v: self.v }
    }
}

/// Bilinear sample weights on an [h, w] grid with longitude wrap in u and
/// edge clamp in v. Returns four (row, col, weight).
pub fn bilinear_taps(coord: GridCoord, h: usize, w: usize) -> [(usize, usize, f64); 4] {
    let t = coord.u_frac.floor();
    let fu = coord.u_frac - t;
    let u0 = (coord.col + t as i64).rem_euclid(w as i64) as usize;
    let u1 = (u0 + 1) % w;

    let vc = coord.v.clamp(0.0, (h - 1) as f64);
    let (v0, fv) = if h == 1 {
        (0usize, 0.0)
    } else {
        let v0 = (vc.floor() as usize).min(h - 2);
        (v0, vc - v0 as f64)
    };
    let v1 = (v0 + 1).min(h - 1);

    [
        (v0, u0, (1.0 - fu) * (1.0 - fv)),
        (v0, u1, fu * (1.0 - fv)),
        (v1, u0, (1.0 - fu) * fv),
        (v1, u1, fu * fv),
    ]
}
