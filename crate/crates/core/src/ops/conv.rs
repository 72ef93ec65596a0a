//! Cross-correlation kernels, NCHW layout.
//!
//! Dense convolutions unfold each image into patch columns and multiply;
//! depthwise convolutions slide directly over each plane. Work is split over
//! images (forward, input gradient) or output channels (kernel gradient), so
//! each element is reduced sequentially by exactly one worker.

use crate::error::{Error, Result};
use crate::exec;
use crate::ops::gemm;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Output extent of a sliding window: `floor((size + 2*padding - window) / stride) + 1`.
pub fn output_extent(size: usize, window: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 || window == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    let padded = size + 2 * padding;
    if padded < window {
        return Err(Error::shape(
            "window",
            format!("window {window} larger than padded extent {padded}"),
        ));
    }
    Ok((padded - window) / stride + 1)
}

/// Geometry of one input plane sliding against one square kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlaneGeometry {
    pub height: usize,
    pub width: usize,
    pub out_height: usize,
    pub out_width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl PlaneGeometry {
    pub fn new(height: usize, width: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        Ok(Self {
            height,
            width,
            out_height: output_extent(height, kernel, stride, padding)?,
            out_width: output_extent(width, kernel, stride, padding)?,
            kernel,
            stride,
            padding,
        })
    }

    pub fn in_len(&self) -> usize {
        self.height * self.width
    }

    pub fn out_len(&self) -> usize {
        self.out_height * self.out_width
    }

    /// Output positions `o` whose input coordinate `o*stride + offset - padding` lies inside `0..size`.
    #[inline]
    pub(crate) fn valid_range(&self, offset: usize, size: usize, out: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.padding);
        let lo = if p > offset { (p - offset).div_ceil(s) } else { 0 };
        if size + p <= offset {
            return (0, 0);
        }
        let hi = ((size - 1 + p - offset) / s + 1).min(out);
        (lo.min(hi), hi)
    }
}

/// `out += correlate(input, kernel)` for a single plane pair.
pub(crate) fn correlate_accumulate<T: Scalar>(out: &mut [T], input: &[T], kernel: &[T], g: &PlaneGeometry) {
    let (k, s, p, w, ow) = (g.kernel, g.stride, g.padding, g.width, g.out_width);
    for ky in 0..k {
        let (oy0, oy1) = g.valid_range(ky, g.height, g.out_height);
        for kx in 0..k {
            let (ox0, ox1) = g.valid_range(kx, w, ow);
            if oy0 >= oy1 || ox0 >= ox1 {
                continue;
            }
            let wv = kernel[ky * k + kx];
            let n = ox1 - ox0;
            for oy in oy0..oy1 {
                let iy = oy * s + ky - p;
                let ix0 = ox0 * s + kx - p;
                let orow = &mut out[oy * ow + ox0..oy * ow + ox1];
                if s == 1 {
                    let irow = &input[iy * w + ix0..iy * w + ix0 + n];
                    for (o, &i) in orow.iter_mut().zip(irow) {
                        *o = *o + wv * i;
                    }
                } else {
                    let irow = &input[iy * w..(iy + 1) * w];
                    for (j, o) in orow.iter_mut().enumerate() {
                        *o = *o + wv * irow[ix0 + j * s];
                    }
                }
            }
        }
    }
}

/// `dx += scatter(dy, kernel)`: transpose of [`correlate_accumulate`] w.r.t. the input.
pub(crate) fn scatter_accumulate<T: Scalar>(dx: &mut [T], dy: &[T], kernel: &[T], g: &PlaneGeometry) {
    let (k, s, p, w, ow) = (g.kernel, g.stride, g.padding, g.width, g.out_width);
    for ky in 0..k {
        let (oy0, oy1) = g.valid_range(ky, g.height, g.out_height);
        for kx in 0..k {
            let (ox0, ox1) = g.valid_range(kx, w, ow);
            if oy0 >= oy1 || ox0 >= ox1 {
                continue;
            }
            let wv = kernel[ky * k + kx];
            let n = ox1 - ox0;
            for oy in oy0..oy1 {
                let iy = oy * s + ky - p;
                let ix0 = ox0 * s + kx - p;
                let grow = &dy[oy * ow + ox0..oy * ow + ox1];
                if s == 1 {
                    let xrow = &mut dx[iy * w + ix0..iy * w + ix0 + n];
                    for (d, &gv) in xrow.iter_mut().zip(grow) {
                        *d = *d + wv * gv;
                    }
                } else {
                    let xrow = &mut dx[iy * w..(iy + 1) * w];
                    for (j, &gv) in grow.iter().enumerate() {
                        let d = &mut xrow[ix0 + j * s];
                        *d = *d + wv * gv;
                    }
                }
            }
        }
    }
}

/// `dk += sum over positions of dy * input-window`, one entry per kernel tap.
pub(crate) fn kernel_grad_accumulate<T: Scalar>(dk: &mut [T], dy: &[T], input: &[T], g: &PlaneGeometry) {
    let (k, s, p, w, ow) = (g.kernel, g.stride, g.padding, g.width, g.out_width);
    for ky in 0..k {
        let (oy0, oy1) = g.valid_range(ky, g.height, g.out_height);
        for kx in 0..k {
            let (ox0, ox1) = g.valid_range(kx, w, ow);
            if oy0 >= oy1 || ox0 >= ox1 {
                continue;
            }
            let n = ox1 - ox0;
            let mut acc = dk[ky * k + kx];
            for oy in oy0..oy1 {
                let iy = oy * s + ky - p;
                let ix0 = ox0 * s + kx - p;
                let grow = &dy[oy * ow + ox0..oy * ow + ox1];
                if s == 1 {
                    let irow = &input[iy * w + ix0..iy * w + ix0 + n];
                    for (&gv, &i) in grow.iter().zip(irow) {
                        acc = acc + gv * i;
                    }
                } else {
                    let irow = &input[iy * w..(iy + 1) * w];
                    for (j, &gv) in grow.iter().enumerate() {
                        acc = acc + gv * irow[ix0 + j * s];
                    }
                }
            }
            dk[ky * k + kx] = acc;
        }
    }
}

/// Shapes resolved for a dense or depthwise convolution call.
#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub plane: PlaneGeometry,
}

impl ConvShape {
    pub fn output_shape(&self) -> [usize; 4] {
        [self.batch, self.out_channels, self.plane.out_height, self.plane.out_width]
    }
}

pub fn conv2d_shape<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvShape> {
    let [b, cin, h, w] = input.dims4("conv2d")?;
    let [cout, kcin, kh, kw] = kernels.dims4("conv2d")?;
    if kcin != cin {
        return Err(Error::shape("conv2d", format!("input has {cin} channels, kernels expect {kcin}")));
    }
    if kh != kw {
        return Err(Error::shape("conv2d", format!("kernels must be square, got {kh}x{kw}")));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape("conv2d", format!("bias {:?} for {cout} kernels", bias.shape())));
    }
    Ok(ConvShape {
        batch: b,
        in_channels: cin,
        out_channels: cout,
        plane: PlaneGeometry::new(h, w, kh, stride, padding)?,
    })
}

pub fn depthwise_shape<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvShape> {
    let [b, c, h, w] = input.dims4("depthwise_conv2d")?;
    let [kc, one, kh, kw] = kernels.dims4("depthwise_conv2d")?;
    if kc != c || one != 1 {
        return Err(Error::shape(
            "depthwise_conv2d",
            format!("{c} channels need kernels [{c},1,k,k], got {:?}", kernels.shape()),
        ));
    }
    if kh != kw {
        return Err(Error::shape("depthwise_conv2d", "kernels must be square"));
    }
    if bias.shape() != [c] {
        return Err(Error::shape("depthwise_conv2d", format!("bias {:?} for {c} channels", bias.shape())));
    }
    Ok(ConvShape {
        batch: b,
        in_channels: c,
        out_channels: c,
        plane: PlaneGeometry::new(h, w, kh, stride, padding)?,
    })
}

/// Unfolds one image `[cin, h, w]` into `[cin·k·k, oh·ow]` patch columns.
pub(crate) fn im2col<T: Scalar>(x: &[T], cin: usize, g: &PlaneGeometry, cols: &mut [T]) {
    let (k, s, p, w, ow) = (g.kernel, g.stride, g.padding, g.width, g.out_width);
    let ol = g.out_len();
    for ci in 0..cin {
        let xp = &x[ci * g.in_len()..][..g.in_len()];
        for ky in 0..k {
            let (oy0, oy1) = g.valid_range(ky, g.height, g.out_height);
            for kx in 0..k {
                let (ox0, ox1) = g.valid_range(kx, w, ow);
                let row = &mut cols[((ci * k + ky) * k + kx) * ol..][..ol];
                row.fill(T::zero());
                if ox0 >= ox1 {
                    continue;
                }
                for oy in oy0..oy1 {
                    let iy = oy * s + ky - p;
                    let ix0 = ox0 * s + kx - p;
                    let dst = &mut row[oy * ow + ox0..oy * ow + ox1];
                    if s == 1 {
                        dst.copy_from_slice(&xp[iy * w + ix0..][..ox1 - ox0]);
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d = xp[iy * w + ix0 + j * s];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back onto `dx`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], cin: usize, g: &PlaneGeometry, dx: &mut [T]) {
    let (k, s, p, w, ow) = (g.kernel, g.stride, g.padding, g.width, g.out_width);
    let ol = g.out_len();
    for ci in 0..cin {
        let dp = &mut dx[ci * g.in_len()..][..g.in_len()];
        for ky in 0..k {
            let (oy0, oy1) = g.valid_range(ky, g.height, g.out_height);
            for kx in 0..k {
                let (ox0, ox1) = g.valid_range(kx, w, ow);
                if ox0 >= ox1 {
                    continue;
                }
                let row = &cols[((ci * k + ky) * k + kx) * ol..][..ol];
                for oy in oy0..oy1 {
                    let iy = oy * s + ky - p;
                    let ix0 = ox0 * s + kx - p;
                    let src = &row[oy * ow + ox0..oy * ow + ox1];
                    if s == 1 {
                        for (d, &v) in dp[iy * w + ix0..][..ox1 - ox0].iter_mut().zip(src) {
                            *d = *d + v;
                        }
                    } else {
                        for (j, &v) in src.iter().enumerate() {
                            let d = &mut dp[iy * w + ix0 + j * s];
                            *d = *d + v;
                        }
                    }
                }
            }
        }
    }
}

impl PlaneGeometry {
    /// A 1×1, stride-1, unpadded kernel reads the image itself as its patch matrix.
    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let cs = conv2d_shape(input, kernels, bias, stride, padding)?;
    let g = cs.plane;
    let (cin, cout) = (cs.in_channels, cs.out_channels);
    let rows = cin * g.kernel * g.kernel;
    let (ol, il) = (g.out_len(), g.in_len());
    let (x, w, b) = (input.data(), kernels.data(), bias.data());
    let mut out = vec![T::zero(); cs.batch * cout * ol];
    exec::for_each_chunk(&mut out, cout * ol, |n, o| {
        for (co, plane) in o.chunks_mut(ol).enumerate() {
            plane.fill(b[co]);
        }
        let xb = &x[n * cin * il..][..cin * il];
        if g.is_pointwise() {
            gemm::gemm_nn(cout, ol, rows, w, xb, o);
        } else {
            let mut cols = vec![T::zero(); rows * ol];
            im2col(xb, cin, &g, &mut cols);
            gemm::gemm_nn(cout, ol, rows, w, &cols, o);
        }
    });
    Tensor::new(cs.output_shape(), out)?.ensure_finite("conv2d")
}

/// Gradients of [`conv2d_forward`] w.r.t. input, kernels and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    cs: &ConvShape,
    dy: &[T],
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = cs.plane;
    let (cin, cout, batch) = (cs.in_channels, cs.out_channels, cs.batch);
    let rows = cin * g.kernel * g.kernel;
    let (ol, il) = (g.out_len(), g.in_len());
    let (x, w) = (input.data(), kernels.data());
    let image = |n: usize| &x[n * cin * il..][..cin * il];
    let grad = |n: usize| &dy[n * cout * ol..][..cout * ol];

    let mut dx = vec![T::zero(); x.len()];
    exec::for_each_chunk(&mut dx, cin * il, |n, d| {
        if g.is_pointwise() {
            gemm::gemm_tn(rows, ol, cout, w, grad(n), d);
        } else {
            let mut dcols = vec![T::zero(); rows * ol];
            gemm::gemm_tn(rows, ol, cout, w, grad(n), &mut dcols);
            col2im(&dcols, cin, &g, d);
        }
    });

    let cols: Vec<Vec<T>> = if g.is_pointwise() {
        Vec::new()
    } else {
        exec::map_indexed(batch, |n| {
            let mut c = vec![T::zero(); rows * ol];
            im2col(image(n), cin, &g, &mut c);
            c
        })
    };
    let mut dw = vec![T::zero(); w.len()];
    exec::for_each_chunk(&mut dw, rows, |co, d| {
        #[allow(clippy::needless_range_loop)]
        for n in 0..batch {
            let patches = if g.is_pointwise() { image(n) } else { &cols[n][..] };
            gemm::gemm_nt(1, rows, ol, &grad(n)[co * ol..(co + 1) * ol], patches, d);
        }
    });

    let db = plane_sums(dy, batch, cout, ol);
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(kernels.shape().to_vec(), dw)?,
        Tensor::new(vec![cout], db)?,
    ))
}

pub fn depthwise_conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let cs = depthwise_shape(input, kernels, bias, stride, padding)?;
    let g = cs.plane;
    let c = cs.in_channels;
    let kk = g.kernel * g.kernel;
    let (x, w, b) = (input.data(), kernels.data(), bias.data());
    let mut out = vec![T::zero(); cs.batch * c * g.out_len()];
    exec::for_each_chunk(&mut out, g.out_len(), |plane, o| {
        let ch = plane % c;
        o.fill(b[ch]);
        let xp = &x[plane * g.in_len()..][..g.in_len()];
        correlate_accumulate(o, xp, &w[ch * kk..(ch + 1) * kk], &g);
    });
    Tensor::new(cs.output_shape(), out)?.ensure_finite("depthwise_conv2d")
}

pub fn depthwise_conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    cs: &ConvShape,
    dy: &[T],
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = cs.plane;
    let (c, batch) = (cs.in_channels, cs.batch);
    let kk = g.kernel * g.kernel;
    let (x, w) = (input.data(), kernels.data());

    let mut dx = vec![T::zero(); x.len()];
    exec::for_each_chunk(&mut dx, g.in_len(), |plane, d| {
        let ch = plane % c;
        let gp = &dy[plane * g.out_len()..][..g.out_len()];
        scatter_accumulate(d, gp, &w[ch * kk..(ch + 1) * kk], &g);
    });

    let mut dw = vec![T::zero(); w.len()];
    exec::for_each_chunk(&mut dw, kk, |ch, d| {
        for n in 0..batch {
            let plane = n * c + ch;
            let gp = &dy[plane * g.out_len()..][..g.out_len()];
            let xp = &x[plane * g.in_len()..][..g.in_len()];
            kernel_grad_accumulate(d, gp, xp, &g);
        }
    });

    let db = plane_sums(dy, batch, c, g.out_len());
    Ok((
        Tensor::new(input.shape().to_vec(), dx)?,
        Tensor::new(kernels.shape().to_vec(), dw)?,
        Tensor::new(vec![c], db)?,
    ))
}

/// Per-channel sum over batch and spatial positions.
pub(crate) fn plane_sums<T: Scalar>(data: &[T], batch: usize, channels: usize, plane: usize) -> Vec<T> {
    let mut sums = vec![T::zero(); channels];
    for n in 0..batch {
        for (c, s) in sums.iter_mut().enumerate() {
            let p = &data[(n * channels + c) * plane..][..plane];
            *s = p.iter().fold(*s, |acc, &v| acc + v);
        }
    }
    sums
}
