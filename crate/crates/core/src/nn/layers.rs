//! Differentiable building blocks. Every forward returns what its backward
//! needs; backward functions accumulate parameter gradients into flat slices.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

pub(crate) fn view2<'a>(data: &'a [f64], rows: usize, cols: usize) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("tensor shape matches layout")
}

fn add_into(dst: &mut [f64], src: impl IntoIterator<Item = f64>) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `x W + b`.
pub(crate) fn affine(x: &ArrayView2<f64>, w: &[f64], b: &[f64]) -> Array2<f64> {
    let w = view2(w, x.ncols(), b.len());
    let mut y = x.dot(&w);
    y += &ArrayView1::from(b);
    y
}

/// Accumulates `dW`, `db`; returns `dx` when asked.
pub(crate) fn affine_backward(
    x: &ArrayView2<f64>,
    w: &[f64],
    dy: &Array2<f64>,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Array2<f64>> {
    let gw = x.t().dot(dy);
    add_into(dw, gw.iter().copied());
    add_into(db, dy.sum_axis(Axis(0)).iter().copied());
    need_dx.then(|| dy.dot(&view2(w, x.ncols(), dy.ncols()).t()))
}

pub(crate) fn relu(x: Array2<f64>) -> Array2<f64> {
    x.mapv_into(|v| v.max(0.0))
}

/// Gradient through a ReLU given its output.
pub(crate) fn relu_backward(y: &Array2<f64>, mut dy: Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut dy).and(y).for_each(|d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dy
}

/// Shape of a batch of channels-last sequences stored as `(batch * len, channels)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SeqShape {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
}

pub(crate) struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub out_len: usize,
}

fn im2col(x: &ArrayView2<f64>, shape: SeqShape, g: &ConvGeom) -> Array2<f64> {
    let c = shape.channels;
    let mut cols = Array2::<f64>::zeros((shape.batch * g.out_len, g.kernel * c));
    for b in 0..shape.batch {
        for o in 0..g.out_len {
            let mut row = cols.row_mut(b * g.out_len + o);
            let start = b * shape.len + o * g.stride;
            for k in 0..g.kernel {
                row.slice_mut(s![k * c..(k + 1) * c])
                    .assign(&x.row(start + k));
            }
        }
    }
    cols
}

/// Valid-padding 1-D convolution. Weight layout is `[kernel, c_in, c_out]`.
/// Returns the output and the unfolded input.
pub(crate) fn conv1d(
    x: &ArrayView2<f64>,
    shape: SeqShape,
    g: &ConvGeom,
    w: &[f64],
    b: &[f64],
) -> (Array2<f64>, Array2<f64>) {
    let cols = im2col(x, shape, g);
    let y = affine(&cols.view(), w, b);
    (y, cols)
}

/// Accumulates weight gradients; returns the input gradient when asked.
pub(crate) fn conv1d_backward(
    cols: &Array2<f64>,
    shape: SeqShape,
    g: &ConvGeom,
    w: &[f64],
    dy: &Array2<f64>,
    dw: &mut [f64],
    db: &mut [f64],
    need_dx: bool,
) -> Option<Array2<f64>> {
    let dcols = affine_backward(&cols.view(), w, dy, dw, db, need_dx)?;
    let c = shape.channels;
    let mut dx = Array2::<f64>::zeros((shape.batch * shape.len, c));
    for b in 0..shape.batch {
        for o in 0..g.out_len {
            let row = dcols.row(b * g.out_len + o);
            let start = b * shape.len + o * g.stride;
            for k in 0..g.kernel {
                let mut dst = dx.row_mut(start + k);
                dst += &row.slice(s![k * c..(k + 1) * c]);
            }
        }
    }
    Some(dx)
}

pub(crate) struct NormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Row-wise layer normalization with gain and bias.
pub(crate) fn layer_norm(x: &Array2<f64>, g: &[f64], b: &[f64], eps: f64) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let mut xhat = x - &mean.view().insert_axis(Axis(1));
    let var = xhat.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    xhat *= &inv_std.view().insert_axis(Axis(1));
    let mut y = &xhat * &ArrayView1::from(g);
    y += &ArrayView1::from(b);
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    cache: &NormCache,
    g: &[f64],
    dy: &Array2<f64>,
    dg: &mut [f64],
    db: &mut [f64],
) -> Array2<f64> {
    add_into(dg, (dy * &cache.xhat).sum_axis(Axis(0)).iter().copied());
    add_into(db, dy.sum_axis(Axis(0)).iter().copied());
    let d = dy.ncols() as f64;
    let dxhat = dy * &ArrayView1::from(g);
    let mean_d = dxhat.sum_axis(Axis(1)) / d;
    let mean_dx = (&dxhat * &cache.xhat).sum_axis(Axis(1)) / d;
    let mut dx = dxhat - &mean_d.view().insert_axis(Axis(1));
    dx -= &(&cache.xhat * &mean_dx.view().insert_axis(Axis(1)));
    dx *= &cache.inv_std.view().insert_axis(Axis(1));
    dx
}

pub(crate) fn softmax_rows(mut x: Array2<f64>) -> Array2<f64> {
    for mut row in x.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    x
}

/// Gradient through a row softmax given its output.
pub(crate) fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner = (dp * p).sum_axis(Axis(1));
    let mut dx = dp - &inner.view().insert_axis(Axis(1));
    dx *= p;
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn numeric<F: Fn(&Array2<f64>) -> f64>(f: F, x: &Array2<f64>) -> Array2<f64> {
        let h = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut xp = x.clone();
            xp[[r, c]] += h;
            let mut xm = x.clone();
            xm[[r, c]] -= h;
            g[[r, c]] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn close(a: &Array2<f64>, b: &Array2<f64>) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6 * (1.0 + x.abs()))
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let p = softmax_rows(array![[1000.0, 1000.0], [0.0, -5.0]]);
        assert!((p[[0, 0]] - 0.5).abs() < 1e-15);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_gradient() {
        let x = array![[0.3, -1.2, 2.0, 0.5], [1.0, 1.5, -0.7, 0.1]];
        let g = [1.1, 0.9, -0.5, 2.0];
        let b = [0.1, 0.0, 0.3, -0.2];
        let wts = array![[0.7, -0.3, 1.2, 0.4], [-1.0, 0.2, 0.5, 0.9]];
        let f = |x: &Array2<f64>| (layer_norm(x, &g, &b, 1e-5).0 * &wts).sum();
        let (_, cache) = layer_norm(&x, &g, &b, 1e-5);
        let (mut dg, mut db) = (vec![0.0; 4], vec![0.0; 4]);
        let dx = layer_norm_backward(&cache, &g, &wts, &mut dg, &mut db);
        assert!(close(&dx, &numeric(f, &x)));
    }

    #[test]
    fn conv_gradient() {
        let shape = SeqShape { batch: 2, len: 7, channels: 2 };
        let geom = ConvGeom { kernel: 3, stride: 2, out_len: 3 };
        let x = Array2::from_shape_fn((14, 2), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
        let w: Vec<f64> = (0..3 * 2 * 2).map(|i| (i as f64 * 0.37).sin()).collect();
        let bias = [0.1, -0.2];
        let wts = Array2::from_shape_fn((6, 2), |(i, j)| (i + 2 * j) as f64 * 0.1 - 0.3);
        let f = |x: &Array2<f64>| (conv1d(&x.view(), shape, &geom, &w, &bias).0 * &wts).sum();
        let (_, cols) = conv1d(&x.view(), shape, &geom, &w, &bias);
        let (mut dw, mut db) = (vec![0.0; 12], vec![0.0; 2]);
        let dx = conv1d_backward(&cols, shape, &geom, &w, &wts, &mut dw, &mut db, true).unwrap();
        assert!(close(&dx, &numeric(f, &x)));
    }

    #[test]
    fn softmax_gradient() {
        let x = array![[0.2, -0.4, 1.0], [3.0, 0.0, -1.0]];
        let wts = array![[1.0, 2.0, -1.0], [0.5, -0.5, 0.3]];
        let f = |x: &Array2<f64>| (softmax_rows(x.clone()) * &wts).sum();
        let p = softmax_rows(x.clone());
        assert!(close(&softmax_rows_backward(&p, &wts), &numeric(f, &x)));
    }
}
