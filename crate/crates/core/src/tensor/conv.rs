//! Dense kernels for the two structured primitives: 2-D convolution and
//! bilinear map sampling. Forward and reverse passes live side by side so
//! the index arithmetic stays in one place.

use crate::error::{CoreError, Result};

use super::Tensor;

/// Input `[C,H,W]`, weight `[O,C,k,k]`, bias `[O]` -> `[O,H',W']` with
/// `H' = (H + 2*pad - k) / stride + 1`.
pub(super) fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let ishape = input.shape();
    let wshape = weight.shape();
    let mismatch = || CoreError::ShapeMismatch {
        op: "conv2d".into(),
        lhs: ishape.to_vec(),
        rhs: wshape.to_vec(),
    };
    if ishape.len() != 3 || wshape.len() != 4 || wshape[1] != ishape[0] || wshape[2] != wshape[3] {
        return Err(mismatch());
    }
    let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (o, k) = (wshape[0], wshape[2]);
    if bias.shape() != [o] {
        return Err(mismatch());
    }
    if h + 2 * pad < k || w + 2 * pad < k || stride == 0 {
        return Err(mismatch());
    }
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;

    let iv = input.values();
    let wv = weight.values();
    let bv = bias.values();
    let mut out = vec![0.0; o * oh * ow];
    for oc in 0..o {
        let wbase = oc * c * k * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bv[oc];
                for ic in 0..c {
                    let ibase = ic * h * w;
                    let wcbase = wbase + ic * k * k;
                    for ky in 0..k {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let irow = ibase + y as usize * w;
                        let wrow = wcbase + ky * k;
                        for kx in 0..k {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if x < 0 || x >= w as isize {
                                continue;
                            }
                            acc += iv[irow + x as usize] * wv[wrow + kx];
                        }
                    }
                }
                out[oc * oh * ow + oy * ow + ox] = acc;
            }
        }
    }
    Tensor::new(vec![o, oh, ow], out)
}

/// Gradients of the convolution w.r.t. input, weight, and bias.
pub(super) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    upstream: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ishape = input.shape();
    let wshape = weight.shape();
    let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (o, k) = (wshape[0], wshape[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;

    let iv = input.values();
    let wv = weight.values();
    let mut gi = vec![0.0; iv.len()];
    let mut gw = vec![0.0; wv.len()];
    let mut gb = vec![0.0; o];
    for oc in 0..o {
        let wbase = oc * c * k * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let u = upstream[oc * oh * ow + oy * ow + ox];
                if u == 0.0 {
                    continue;
                }
                gb[oc] += u;
                for ic in 0..c {
                    let ibase = ic * h * w;
                    let wcbase = wbase + ic * k * k;
                    for ky in 0..k {
                        let y = (oy * stride + ky) as isize - pad as isize;
                        if y < 0 || y >= h as isize {
                            continue;
                        }
                        let irow = ibase + y as usize * w;
                        let wrow = wcbase + ky * k;
                        for kx in 0..k {
                            let x = (ox * stride + kx) as isize - pad as isize;
                            if x < 0 || x >= w as isize {
                                continue;
                            }
                            gw[wrow + kx] += u * iv[irow + x as usize];
                            gi[irow + x as usize] += u * wv[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    (gi, gw, gb)
}

/// Interpolation state captured at forward time so the reverse pass reuses
/// the exact corner selection.
#[derive(Debug, Clone)]
pub(super) struct BilinearMeta {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
    pub clamped_x: bool,
    pub clamped_y: bool,
}

/// Map `[C,h,w]` sampled at continuous grid coordinates `xy = [x, y]`.
/// Out-of-range coordinates are clamped to the grid border.
pub(super) fn bilinear_forward(map: &Tensor, xy: &Tensor) -> Result<(Tensor, BilinearMeta)> {
    let mshape = map.shape();
    if mshape.len() != 3 || xy.shape() != [2] {
        return Err(CoreError::ShapeMismatch {
            op: "bilinear_sample".into(),
            lhs: mshape.to_vec(),
            rhs: xy.shape().to_vec(),
        });
    }
    let (c, h, w) = (mshape[0], mshape[1], mshape[2]);
    let (x, y) = (xy.values()[0], xy.values()[1]);
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    let cx = x.clamp(0.0, max_x);
    let cy = y.clamp(0.0, max_y);
    let clamped_x = cx != x;
    let clamped_y = cy != y;
    let x0 = (cx.floor() as usize).min(w - 1);
    let y0 = (cy.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;

    let mv = map.values();
    let mut out = vec![0.0; c];
    for ch in 0..c {
        let base = ch * h * w;
        let v00 = mv[base + y0 * w + x0];
        let v01 = mv[base + y0 * w + x1];
        let v10 = mv[base + y1 * w + x0];
        let v11 = mv[base + y1 * w + x1];
        out[ch] = (1.0 - fx) * (1.0 - fy) * v00
            + fx * (1.0 - fy) * v01
            + (1.0 - fx) * fy * v10
            + fx * fy * v11;
    }
    let meta = BilinearMeta { x0, x1, y0, y1, fx, fy, clamped_x, clamped_y };
    Ok((Tensor::new(vec![c], out)?, meta))
}

/// Gradients w.r.t. the map and the sample coordinates. Clamped coordinates
/// receive zero positional gradient.
pub(super) fn bilinear_backward(map: &Tensor, meta: &BilinearMeta, upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mshape = map.shape();
    let (c, h, w) = (mshape[0], mshape[1], mshape[2]);
    let mv = map.values();
    let BilinearMeta { x0, x1, y0, y1, fx, fy, clamped_x, clamped_y } = *meta;

    let mut gmap = vec![0.0; mv.len()];
    let mut gx = 0.0;
    let mut gy = 0.0;
    for ch in 0..c {
        let base = ch * h * w;
        let u = upstream[ch];
        gmap[base + y0 * w + x0] += u * (1.0 - fx) * (1.0 - fy);
        gmap[base + y0 * w + x1] += u * fx * (1.0 - fy);
        gmap[base + y1 * w + x0] += u * (1.0 - fx) * fy;
        gmap[base + y1 * w + x1] += u * fx * fy;

        let v00 = mv[base + y0 * w + x0];
        let v01 = mv[base + y0 * w + x1];
        let v10 = mv[base + y1 * w + x0];
        let v11 = mv[base + y1 * w + x1];
        gx += u * ((1.0 - fy) * (v01 - v00) + fy * (v11 - v10));
        gy += u * ((1.0 - fx) * (v10 - v00) + fx * (v11 - v01));
    }
    if clamped_x {
        gx = 0.0;
    }
    if clamped_y {
        gy = 0.0;
    }
    (gmap, vec![gx, gy])
}
