//! 2D convolution via im2col and GEMM.

use super::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
    /// Offset of the `cout x cin x k x k` weights in the parameter vector;
    /// the `cout` biases follow.
    pub offset: usize,
}

impl Conv {
    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn patch_len(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel;
        (
            (h + 2 * self.pad - k) / self.stride + 1,
            (w + 2 * self.pad - k) / self.stride + 1,
        )
    }

    pub fn weights<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.offset..self.offset + self.weight_len()]
    }

    pub fn bias<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        let b = self.offset + self.weight_len();
        &params[b..b + self.cout]
    }
}

/// Unfolds `input` into a `(cin * k * k) x (ho * wo)` row-major matrix.
pub fn im2col<T: Scalar>(conv: &Conv, input: &Tensor3<T>, cols: &mut Vec<T>) -> (usize, usize) {
    let (h, w) = (input.height, input.width);
    let (ho, wo) = conv.out_dims(h, w);
    let p = ho * wo;
    let k = conv.kernel;
    cols.clear();
    cols.resize(conv.patch_len() * p, T::zero());
    let (s, pad) = (conv.stride as isize, conv.pad as isize);
    for ci in 0..conv.cin {
        let plane = input.channel(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = ox as isize * s + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    (ho, wo)
}

/// Folds a column-gradient matrix back onto a `cin x h x w` input gradient.
pub fn col2im<T: Scalar>(conv: &Conv, dcols: &[T], h: usize, w: usize) -> Tensor3<T> {
    let (ho, wo) = conv.out_dims(h, w);
    let p = ho * wo;
    let k = conv.kernel;
    let mut out = Tensor3::zeros(conv.cin, h, w);
    let (s, pad) = (conv.stride as isize, conv.pad as isize);
    for ci in 0..conv.cin {
        let plane = out.channel_mut(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &dcols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let iy = oy as isize * s + ky as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = ox as isize * s + kx as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            let i = iy as usize * w + ix as usize;
                            plane[i] = plane[i] + src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Forward pass of one layer. `cols` receives the unfolded input for the
/// backward pass.
pub fn forward<T: Scalar>(conv: &Conv, params: &[T], input: &Tensor3<T>, cols: &mut Vec<T>) -> Tensor3<T> {
    assert_eq!(input.channels, conv.cin, "input channels");
    let (ho, wo) = im2col(conv, input, cols);
    let p = ho * wo;
    let mut out = Tensor3::zeros(conv.cout, ho, wo);
    let bias = conv.bias(params);
    for (co, &b) in bias.iter().enumerate() {
        out.channel_mut(co).fill(b);
    }
    gemm(
        MatRef::new(conv.weights(params), conv.cout, conv.patch_len()),
        MatRef::new(cols, conv.patch_len(), p),
        T::one(),
        &mut out.data,
    );
    if conv.relu {
        for v in &mut out.data {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
    out
}

/// Backward pass of one layer. `dout` is the gradient with respect to the
/// layer output (after the activation); it is overwritten with the
/// pre-activation gradient. Parameter gradients are accumulated into
/// `grads`. Returns the input gradient when `need_input` is set.
#[allow(clippy::too_many_arguments)]
pub fn backward<T: Scalar>(
    conv: &Conv,
    params: &[T],
    cols: &[T],
    out: &Tensor3<T>,
    dout: &mut Tensor3<T>,
    in_dims: (usize, usize),
    grads: &mut [T],
    need_input: bool,
) -> Option<Tensor3<T>> {
    if conv.relu {
        for (d, &o) in dout.data.iter_mut().zip(&out.data) {
            if o <= T::zero() {
                *d = T::zero();
            }
        }
    }
    let p = out.height * out.width;
    let kk = conv.patch_len();
    let (wg, bg) = grads[conv.offset..conv.offset + conv.param_len()].split_at_mut(conv.weight_len());
    gemm(
        MatRef::new(&dout.data, conv.cout, p),
        MatRef::new(cols, kk, p).t(),
        T::one(),
        wg,
    );
    for (co, g) in bg.iter_mut().enumerate() {
        *g = dout.channel(co).iter().fold(*g, |acc, &v| acc + v);
    }
    if !need_input {
        return None;
    }
    let mut dcols = vec![T::zero(); kk * p];
    gemm(
        MatRef::new(conv.weights(params), conv.cout, kk).t(),
        MatRef::new(&dout.data, conv.cout, p),
        T::zero(),
        &mut dcols,
    );
    Some(col2im(conv, &dcols, in_dims.0, in_dims.1))
}
