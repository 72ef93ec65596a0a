use crate::error::{Error, Result};
use crate::exec;
use crate::ops::conv::PlaneGeometry;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Avg,
    GlobalAvg,
}

/// Window geometry for max/avg pooling. Padded positions never win a max and
/// are excluded from the average.
pub fn pool_geometry(shape: [usize; 4], window: usize, stride: usize, padding: usize) -> Result<PlaneGeometry> {
    let [_, _, h, w] = shape;
    if window > h + 2 * padding || window > w + 2 * padding {
        return Err(Error::shape("pool2d", format!("window {window} exceeds spatial extent {h}x{w}")));
    }
    if padding >= window {
        return Err(Error::InvalidArgument(format!("pool padding {padding} must be below window {window}")));
    }
    PlaneGeometry::new(h, w, window, stride, padding)
}

/// Max pooling; also returns the flat input index that won each output element
/// (first maximum in scan order).
pub fn max_pool_forward<T: Scalar>(input: &Tensor<T>, g: &PlaneGeometry) -> Result<(Tensor<T>, Vec<usize>)> {
    let [b, c, _, _] = input.dims4("pool2d")?;
    let x = input.data();
    let planes = b * c;
    let per_plane: Vec<(Vec<T>, Vec<usize>)> = exec::map_indexed(planes, |plane| {
        let xp = &x[plane * g.in_len()..][..g.in_len()];
        let mut vals = Vec::with_capacity(g.out_len());
        let mut idx = Vec::with_capacity(g.out_len());
        for oy in 0..g.out_height {
            for ox in 0..g.out_width {
                let mut best = T::neg_infinity();
                let mut arg = usize::MAX;
                for ky in 0..g.kernel {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy as usize >= g.height {
                        continue;
                    }
                    for kx in 0..g.kernel {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix as usize >= g.width {
                            continue;
                        }
                        let i = iy as usize * g.width + ix as usize;
                        if arg == usize::MAX || xp[i] > best {
                            best = xp[i];
                            arg = i;
                        }
                    }
                }
                vals.push(best);
                idx.push(plane * g.in_len() + arg);
            }
        }
        (vals, idx)
    });
    let mut out = Vec::with_capacity(planes * g.out_len());
    let mut argmax = Vec::with_capacity(planes * g.out_len());
    for (v, i) in per_plane {
        out.extend(v);
        argmax.extend(i);
    }
    Ok((Tensor::new(vec![b, c, g.out_height, g.out_width], out)?, argmax))
}

pub fn max_pool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], dy: &[T]) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape.to_vec())?;
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy) {
        d[i] = d[i] + g;
    }
    Ok(dx)
}

fn avg_window(g: &PlaneGeometry, oy: usize, ox: usize) -> (usize, usize, usize, usize) {
    let clamp = |o: usize, n: usize| {
        let start = (o * g.stride) as isize - g.padding as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + g.kernel as isize).min(n as isize)) as usize;
        (lo, hi)
    };
    let (y0, y1) = clamp(oy, g.height);
    let (x0, x1) = clamp(ox, g.width);
    (y0, y1, x0, x1)
}

pub fn avg_pool_forward<T: Scalar>(input: &Tensor<T>, g: &PlaneGeometry) -> Result<Tensor<T>> {
    let [b, c, _, _] = input.dims4("pool2d")?;
    let x = input.data();
    let mut out = vec![T::zero(); b * c * g.out_len()];
    exec::for_each_chunk(&mut out, g.out_len(), |plane, o| {
        let xp = &x[plane * g.in_len()..][..g.in_len()];
        for oy in 0..g.out_height {
            for ox in 0..g.out_width {
                let (y0, y1, x0, x1) = avg_window(g, oy, ox);
                let mut acc = T::zero();
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc = acc + xp[iy * g.width + ix];
                    }
                }
                let count = T::lit(((y1 - y0) * (x1 - x0)) as f64);
                o[oy * g.out_width + ox] = acc / count;
            }
        }
    });
    Tensor::new(vec![b, c, g.out_height, g.out_width], out)
}

pub fn avg_pool_backward<T: Scalar>(input_shape: &[usize], g: &PlaneGeometry, dy: &[T]) -> Result<Tensor<T>> {
    let mut dx = Tensor::zeros(input_shape.to_vec())?;
    exec::for_each_chunk(dx.data_mut(), g.in_len(), |plane, d| {
        let gp = &dy[plane * g.out_len()..][..g.out_len()];
        for oy in 0..g.out_height {
            for ox in 0..g.out_width {
                let (y0, y1, x0, x1) = avg_window(g, oy, ox);
                let share = gp[oy * g.out_width + ox] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let v = &mut d[iy * g.width + ix];
                        *v = *v + share;
                    }
                }
            }
        }
    });
    Ok(dx)
}

pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input.dims4("global_avg_pool")?;
    let hw = h * w;
    let n = T::lit(hw as f64);
    let out = input
        .data()
        .chunks(hw)
        .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) / n)
        .collect();
    Tensor::new(vec![b, c, 1, 1], out)
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: &[usize], dy: &[T]) -> Result<Tensor<T>> {
    let hw = input_shape[2] * input_shape[3];
    let n = T::lit(hw as f64);
    let mut data = Vec::with_capacity(dy.len() * hw);
    for &g in dy {
        data.extend(std::iter::repeat_n(g / n, hw));
    }
    Tensor::new(input_shape.to_vec(), data)
}
