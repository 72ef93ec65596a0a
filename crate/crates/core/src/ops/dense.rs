use crate::error::{Error, Result};
use crate::exec;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn dense_forward<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, n] = input.dims2("dense")?;
    let [wn, m] = weight.dims2("dense")?;
    if wn != n {
        return Err(Error::shape("dense", format!("input width {n} vs weight rows {wn}")));
    }
    if bias.shape() != [m] {
        return Err(Error::shape("dense", format!("bias {:?} for {m} outputs", bias.shape())));
    }
    let (x, w) = (input.data(), weight.data());
    let mut out = vec![T::zero(); b * m];
    exec::for_each_chunk(&mut out, m, |row, o| {
        o.copy_from_slice(bias.data());
        for (i, &xv) in x[row * n..(row + 1) * n].iter().enumerate() {
            for (ov, &wv) in o.iter_mut().zip(&w[i * m..(i + 1) * m]) {
                *ov = *ov + xv * wv;
            }
        }
    });
    Tensor::new(vec![b, m], out)?.ensure_finite("dense")
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    dy: &[T],
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [b, n] = input.dims2("dense")?;
    let [_, m] = weight.dims2("dense")?;
    let (x, w) = (input.data(), weight.data());

    let mut dx = vec![T::zero(); b * n];
    exec::for_each_chunk(&mut dx, n, |row, d| {
        let g = &dy[row * m..(row + 1) * m];
        for (i, dv) in d.iter_mut().enumerate() {
            *dv = g.iter().zip(&w[i * m..(i + 1) * m]).fold(T::zero(), |a, (&gv, &wv)| a + gv * wv);
        }
    });

    let mut dw = vec![T::zero(); n * m];
    exec::for_each_chunk(&mut dw, m, |i, d| {
        for row in 0..b {
            let xv = x[row * n + i];
            for (dv, &gv) in d.iter_mut().zip(&dy[row * m..(row + 1) * m]) {
                *dv = *dv + xv * gv;
            }
        }
    });

    let mut db = vec![T::zero(); m];
    for row in 0..b {
        for (dv, &gv) in db.iter_mut().zip(&dy[row * m..(row + 1) * m]) {
            *dv = *dv + gv;
        }
    }
    Ok((
        Tensor::new(vec![b, n], dx)?,
        Tensor::new(vec![n, m], dw)?,
        Tensor::new(vec![m], db)?,
    ))
}
