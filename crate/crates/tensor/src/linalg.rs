//! Dense kernels shared by the graph operators.

/// `c = op(a) · op(b) + beta · c` for row-major operands.
///
/// `a` is `m×k` (stored `k×m` when `a_t`), `b` is `k×n` (stored `n×k` when
/// `b_t`), `c` is `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert_eq!(a.len(), m * k, "gemm: lhs size");
    assert_eq!(b.len(), k * n, "gemm: rhs size");
    assert_eq!(c.len(), m * n, "gemm: output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside the
    // three slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Spatial bookkeeping for a valid-padding 2-D cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Rows of the unfolded patch matrix.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Columns of the unfolded patch matrix (all samples side by side).
    pub fn columns(&self) -> usize {
        self.batch * self.out_pixels()
    }
}

/// Unfold `input` (N,C,H,W) into a `patch_len × columns` matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols_n = g.columns();
    let p = g.out_pixels();
    let mut cols = vec![0.0; g.patch_len() * cols_n];
    for n in 0..g.batch {
        for c in 0..g.in_channels {
            let plane = &input[(n * g.in_channels + c) * g.in_h * g.in_w..][..g.in_h * g.in_w];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let row = (c * g.kh + i) * g.kw + j;
                    let dst = &mut cols[row * cols_n + n * p..][..p];
                    for oy in 0..g.out_h {
                        let src_row = &plane[(oy * g.stride + i) * g.in_w..];
                        for ox in 0..g.out_w {
                            dst[oy * g.out_w + ox] = src_row[ox * g.stride + j];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back onto the input grid.
pub(crate) fn col2im_add(cols: &[f64], g: &ConvGeom, grad_input: &mut [f64]) {
    let cols_n = g.columns();
    let p = g.out_pixels();
    for n in 0..g.batch {
        for c in 0..g.in_channels {
            let plane =
                &mut grad_input[(n * g.in_channels + c) * g.in_h * g.in_w..][..g.in_h * g.in_w];
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let row = (c * g.kh + i) * g.kw + j;
                    let src = &cols[row * cols_n + n * p..][..p];
                    for oy in 0..g.out_h {
                        let base = (oy * g.stride + i) * g.in_w;
                        for ox in 0..g.out_w {
                            plane[base + ox * g.stride + j] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}
