//! Strided 2-D convolution and transposed convolution via im2col + GEMM.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::params::{ParamId, ParamStore};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::{Shape, Tensor};

/// Kernel geometry shared by both convolution flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Geometry {
    pub const DOWN2: Geometry = Geometry {
        kernel: 4,
        stride: 2,
        padding: 1,
    };

    pub fn conv_out(&self, size: usize) -> usize {
        (size + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn transposed_out(&self, size: usize) -> usize {
        (size - 1) * self.stride + self.kernel - 2 * self.padding
    }
}

/// Unfold `image` into a `(c*k*k) x (n*oh*ow)` row-major matrix.
pub(crate) fn im2col<T: Scalar>(image: &[T], shape: Shape, g: Geometry, oh: usize, ow: usize) -> Vec<T> {
    let Shape { n, c, h, w } = shape;
    let k = g.kernel;
    let cols = n * oh * ow;
    let mut out = vec![T::zero(); c * k * k * cols];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for ni in 0..n {
                    let src = &image[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ni * oh + oy) * ow;
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[base + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add columns back into an image of `shape`.
pub(crate) fn col2im<T: Scalar>(cols_mat: &[T], shape: Shape, g: Geometry, oh: usize, ow: usize) -> Vec<T> {
    let Shape { n, c, h, w } = shape;
    let k = g.kernel;
    let cols = n * oh * ow;
    let mut image = vec![T::zero(); shape.len()];
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols_mat[row * cols..(row + 1) * cols];
                for ni in 0..n {
                    let dst = &mut image[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for oy in 0..oh {
                        let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ni * oh + oy) * ow;
                        for ox in 0..ow {
                            let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                let d = &mut dst[iy as usize * w + ix as usize];
                                *d = *d + src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    image
}

/// `(n, c, p)` -> `(c, n, p)`.
pub(crate) fn to_channel_major<T: Scalar>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for ni in 0..n {
        for ci in 0..c {
            let src = &data[(ni * c + ci) * p..(ni * c + ci + 1) * p];
            out[(ci * n + ni) * p..(ci * n + ni + 1) * p].copy_from_slice(src);
        }
    }
    out
}

/// `(c, n, p)` -> `(n, c, p)`.
pub(crate) fn from_channel_major<T: Scalar>(data: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for ci in 0..c {
        for ni in 0..n {
            let src = &data[(ci * n + ni) * p..(ci * n + ni + 1) * p];
            out[(ni * c + ci) * p..(ni * c + ci + 1) * p].copy_from_slice(src);
        }
    }
    out
}

fn add_channel_bias<T: Scalar>(data: &mut [T], bias: &[T], n: usize, c: usize, p: usize) {
    for ni in 0..n {
        for (ci, &b) in bias.iter().enumerate().take(c) {
            for v in &mut data[(ni * c + ci) * p..(ni * c + ci + 1) * p] {
                *v = *v + b;
            }
        }
    }
}

fn accumulate_channel_sums<T: Scalar>(grad: &[T], out: &mut [T], n: usize, c: usize, p: usize) {
    for ni in 0..n {
        for (ci, acc) in out.iter_mut().enumerate().take(c) {
            let s: T = grad[(ni * c + ci) * p..(ni * c + ci + 1) * p].iter().copied().sum();
            *acc = *acc + s;
        }
    }
}

/// Weight layout `(out, in, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: Geometry,
}

pub(crate) struct ConvCache<T> {
    cols: Vec<T>,
    in_shape: Shape,
    out_shape: Shape,
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
    ) -> Self {
        Self::build(params, rng, name, in_channels, out_channels, geometry, init_std, true)
    }

    /// No bias parameter; for layers followed by a batch norm, where a bias
    /// would cancel against the batch mean.
    pub fn new_unbiased<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
    ) -> Self {
        Self::build(params, rng, name, in_channels, out_channels, geometry, init_std, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn build<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
        with_bias: bool,
    ) -> Self {
        let k = geometry.kernel;
        let weight = params.push_gaussian(
            alloc::format!("{name}.weight"),
            vec![out_channels, in_channels, k, k],
            init_std,
            rng,
        );
        let bias = with_bias.then(|| params.push_filled(alloc::format!("{name}.bias"), vec![out_channels], T::zero()));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            geometry,
        }
    }

    pub fn output_shape(&self, s: Shape) -> Shape {
        Shape::new(
            s.n,
            self.out_channels,
            self.geometry.conv_out(s.h),
            self.geometry.conv_out(s.w),
        )
    }

    fn linear_part<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> (Vec<T>, Vec<T>, Shape) {
        let in_shape = x.shape();
        let out_shape = self.output_shape(in_shape);
        let cols = im2col(x.data(), in_shape, self.geometry, out_shape.h, out_shape.w);
        let kk = self.in_channels * self.geometry.kernel * self.geometry.kernel;
        let l = out_shape.n * out_shape.plane();
        let mut y_mat = vec![T::zero(); self.out_channels * l];
        gemm(
            MatRef::new(params.get(self.weight), self.out_channels, kk),
            MatRef::new(&cols, kk, l),
            T::zero(),
            &mut y_mat,
        );
        let y = from_channel_major(&y_mat, out_shape.n, self.out_channels, out_shape.plane());
        (y, cols, out_shape)
    }

    pub(crate) fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
        let in_shape = x.shape();
        let (mut y, cols, out_shape) = self.linear_part(params, x);
        if let Some(bias) = self.bias {
            add_channel_bias(&mut y, params.get(bias), out_shape.n, out_shape.c, out_shape.plane());
        }
        let out = Tensor::from_vec(out_shape, y).expect("conv output shape");
        (
            out,
            ConvCache {
                cols,
                in_shape,
                out_shape,
            },
        )
    }

    /// Convolution without bias, used when propagating tangents.
    pub(crate) fn apply_weight<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Tensor<T> {
        let (y, _, out_shape) = self.linear_part(params, x);
        Tensor::from_vec(out_shape, y).expect("conv output shape")
    }

    fn weight_grad_from_cols<T: Scalar>(&self, cols: &[T], grad_out: &Tensor<T>, grads: &mut ParamStore<T>) -> Vec<T> {
        let gs = grad_out.shape();
        let kk = self.in_channels * self.geometry.kernel * self.geometry.kernel;
        let l = gs.n * gs.plane();
        let gy_mat = to_channel_major(grad_out.data(), gs.n, gs.c, gs.plane());
        gemm(
            MatRef::new(&gy_mat, self.out_channels, l),
            MatRef::new(cols, kk, l).t(),
            T::one(),
            grads.get_mut(self.weight),
        );
        gy_mat
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let gs = cache.out_shape;
        let gy_mat = self.weight_grad_from_cols(&cache.cols, grad_out, grads);
        if let Some(bias) = self.bias {
            accumulate_channel_sums(grad_out.data(), grads.get_mut(bias), gs.n, gs.c, gs.plane());
        }
        self.input_grad_from_mat(params, &gy_mat, cache.in_shape, gs)
    }

    fn input_grad_from_mat<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        gy_mat: &[T],
        in_shape: Shape,
        out_shape: Shape,
    ) -> Tensor<T> {
        let kk = self.in_channels * self.geometry.kernel * self.geometry.kernel;
        let l = out_shape.n * out_shape.plane();
        let mut gcols = vec![T::zero(); kk * l];
        gemm(
            MatRef::new(params.get(self.weight), self.out_channels, kk).t(),
            MatRef::new(gy_mat, self.out_channels, l),
            T::zero(),
            &mut gcols,
        );
        let gx = col2im(&gcols, in_shape, self.geometry, out_shape.h, out_shape.w);
        Tensor::from_vec(in_shape, gx).expect("conv input grad shape")
    }

    /// Input gradient without touching parameter gradients.
    pub(crate) fn input_grad<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Tensor<T> {
        let gs = cache.out_shape;
        let gy_mat = to_channel_major(grad_out.data(), gs.n, gs.c, gs.plane());
        self.input_grad_from_mat(params, &gy_mat, cache.in_shape, gs)
    }

    /// Accumulate `d<input, W^T u>/dW` for an arbitrary `input` tensor.
    pub(crate) fn accumulate_weight_grad<T: Scalar>(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) {
        let gs = grad_out.shape();
        let cols = im2col(input.data(), input.shape(), self.geometry, gs.h, gs.w);
        self.weight_grad_from_cols(&cols, grad_out, grads);
    }
}

/// Weight layout `(in, out, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: Geometry,
}

pub(crate) struct ConvTCache<T> {
    x_mat: Vec<T>,
    in_shape: Shape,
    out_shape: Shape,
}

impl ConvTranspose2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
    ) -> Self {
        Self::build(params, rng, name, in_channels, out_channels, geometry, init_std, true)
    }

    /// No bias parameter; for layers followed by a batch norm, where a bias
    /// would cancel against the batch mean.
    pub fn new_unbiased<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
    ) -> Self {
        Self::build(params, rng, name, in_channels, out_channels, geometry, init_std, false)
    }

    #[allow(clippy::too_many_arguments)]
    fn build<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        geometry: Geometry,
        init_std: f64,
        with_bias: bool,
    ) -> Self {
        let k = geometry.kernel;
        let weight = params.push_gaussian(
            alloc::format!("{name}.weight"),
            vec![in_channels, out_channels, k, k],
            init_std,
            rng,
        );
        let bias = with_bias.then(|| params.push_filled(alloc::format!("{name}.bias"), vec![out_channels], T::zero()));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            geometry,
        }
    }

    pub fn output_shape(&self, s: Shape) -> Shape {
        Shape::new(
            s.n,
            self.out_channels,
            self.geometry.transposed_out(s.h),
            self.geometry.transposed_out(s.w),
        )
    }

    fn cols_rows(&self) -> usize {
        self.out_channels * self.geometry.kernel * self.geometry.kernel
    }

    pub(crate) fn forward<T: Scalar>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> (Tensor<T>, ConvTCache<T>) {
        let in_shape = x.shape();
        let out_shape = self.output_shape(in_shape);
        let l = in_shape.n * in_shape.plane();
        let x_mat = to_channel_major(x.data(), in_shape.n, in_shape.c, in_shape.plane());
        let mut cols = vec![T::zero(); self.cols_rows() * l];
        gemm(
            MatRef::new(params.get(self.weight), self.in_channels, self.cols_rows()).t(),
            MatRef::new(&x_mat, self.in_channels, l),
            T::zero(),
            &mut cols,
        );
        let mut y = col2im(&cols, out_shape, self.geometry, in_shape.h, in_shape.w);
        if let Some(bias) = self.bias {
            add_channel_bias(&mut y, params.get(bias), out_shape.n, out_shape.c, out_shape.plane());
        }
        (
            Tensor::from_vec(out_shape, y).expect("conv-transpose output shape"),
            ConvTCache {
                x_mat,
                in_shape,
                out_shape,
            },
        )
    }

    pub(crate) fn backward<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        cache: &ConvTCache<T>,
        grad_out: &Tensor<T>,
        grads: &mut ParamStore<T>,
    ) -> Tensor<T> {
        let (is, os) = (cache.in_shape, cache.out_shape);
        let l = is.n * is.plane();
        let gcols = im2col(grad_out.data(), os, self.geometry, is.h, is.w);
        gemm(
            MatRef::new(&cache.x_mat, self.in_channels, l),
            MatRef::new(&gcols, self.cols_rows(), l).t(),
            T::one(),
            grads.get_mut(self.weight),
        );
        if let Some(bias) = self.bias {
            accumulate_channel_sums(grad_out.data(), grads.get_mut(bias), os.n, os.c, os.plane());
        }
        let mut gx_mat = vec![T::zero(); self.in_channels * l];
        gemm(
            MatRef::new(params.get(self.weight), self.in_channels, self.cols_rows()),
            MatRef::new(&gcols, self.cols_rows(), l),
            T::zero(),
            &mut gx_mat,
        );
        let gx = from_channel_major(&gx_mat, is.n, is.c, is.plane());
        Tensor::from_vec(is, gx).expect("conv-transpose input grad shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct 7-loop convolution.
    fn naive_conv(x: &[f64], s: Shape, w: &[f64], b: &[f64], co: usize, g: Geometry) -> Vec<f64> {
        let (oh, ow) = (g.conv_out(s.h), g.conv_out(s.w));
        let k = g.kernel;
        let mut y = vec![0.0; s.n * co * oh * ow];
        for n in 0..s.n {
            for o in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b[o];
                        for c in 0..s.c {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= s.h as isize || ix >= s.w as isize {
                                        continue;
                                    }
                                    acc += w[((o * s.c + c) * k + ky) * k + kx]
                                        * x[((n * s.c + c) * s.h + iy as usize) * s.w + ix as usize];
                                }
                            }
                        }
                        y[((n * co + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    /// Scatter formulation of the transposed convolution.
    fn naive_conv_t(x: &[f64], s: Shape, w: &[f64], b: &[f64], co: usize, g: Geometry) -> Vec<f64> {
        let (oh, ow) = (g.transposed_out(s.h), g.transposed_out(s.w));
        let k = g.kernel;
        let mut y = vec![0.0; s.n * co * oh * ow];
        for n in 0..s.n {
            for o in 0..co {
                for v in &mut y[(n * co + o) * oh * ow..(n * co + o + 1) * oh * ow] {
                    *v = b[o];
                }
            }
            for c in 0..s.c {
                for iy in 0..s.h {
                    for ix in 0..s.w {
                        let xv = x[((n * s.c + c) * s.h + iy) * s.w + ix];
                        for o in 0..co {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let oy = (iy * g.stride + ky) as isize - g.padding as isize;
                                    let ox = (ix * g.stride + kx) as isize - g.padding as isize;
                                    if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                        continue;
                                    }
                                    y[((n * co + o) * oh + oy as usize) * ow + ox as usize] +=
                                        w[((c * co + o) * k + ky) * k + kx] * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn random_tensor(rng: &mut ChaCha8Rng, s: Shape) -> Tensor<f64> {
        Tensor::from_vec(s, (0..s.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamStore::<f64>::new();
        let conv = Conv2d::new(&mut params, &mut rng, "c", 3, 5, Geometry::DOWN2, 0.3);
        params
            .get_mut(conv.bias.unwrap())
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-1.0..1.0));
        let s = Shape::new(2, 3, 8, 8);
        let x = random_tensor(&mut rng, s);
        let (y, _) = conv.forward(&params, &x);
        assert_eq!(y.shape(), Shape::new(2, 5, 4, 4));
        let expect = naive_conv(
            x.data(),
            s,
            params.get(conv.weight),
            params.get(conv.bias.unwrap()),
            5,
            Geometry::DOWN2,
        );
        for (a, b) in y.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_transpose_matches_scatter_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ParamStore::<f64>::new();
        let conv = ConvTranspose2d::new(&mut params, &mut rng, "t", 4, 3, Geometry::DOWN2, 0.3);
        params
            .get_mut(conv.bias.unwrap())
            .iter_mut()
            .for_each(|b| *b = rng.random_range(-1.0..1.0));
        let s = Shape::new(2, 4, 4, 4);
        let x = random_tensor(&mut rng, s);
        let (y, _) = conv.forward(&params, &x);
        assert_eq!(y.shape(), Shape::new(2, 3, 8, 8));
        let expect = naive_conv_t(
            x.data(),
            s,
            params.get(conv.weight),
            params.get(conv.bias.unwrap()),
            3,
            Geometry::DOWN2,
        );
        for (a, b) in y.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape::new(2, 2, 6, 6);
        let g = Geometry::DOWN2;
        let (oh, ow) = (g.conv_out(6), g.conv_out(6));
        let x = random_tensor(&mut rng, s);
        let cols = im2col(x.data(), s, g, oh, ow);
        let y: Vec<f64> = (0..cols.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let back = col2im(&y, s, g, oh, ow);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
