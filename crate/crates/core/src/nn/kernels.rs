//! Forward and backward kernels used by the graph.
//!
//! The heavy loops fan out over output channels (or matrix rows) through
//! [`crate::par`]. Each output element is accumulated by exactly one task in
//! a fixed order, so results do not depend on the thread count.

use super::Tensor;
use crate::par;

/// Reflects an out-of-range index back into `[0, n)`, then clamps. For
/// `n >= 2` this is ordinary reflection padding; a single row or column
/// degenerates to replication.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r.clamp(0, n - 1) as usize
}

pub fn pad_reflect(x: &Tensor, pad: usize) -> Tensor {
    let (c, h, w) = x.dims3();
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * ph * pw];
    let src = x.data();
    par::for_each_chunk_mut(&mut out, ph * pw, |ch, plane| {
        let s = &src[ch * h * w..(ch + 1) * h * w];
        for y in 0..ph {
            let sy = reflect_index(y as isize - pad as isize, h);
            for x in 0..pw {
                let sx = reflect_index(x as isize - pad as isize, w);
                plane[y * pw + x] = s[sy * w + sx];
            }
        }
    });
    Tensor::new(vec![c, ph, pw], out)
}

pub fn pad_reflect_backward(dy: &Tensor, pad: usize, h: usize, w: usize) -> Tensor {
    let (c, ph, pw) = dy.dims3();
    let mut out = vec![0.0; c * h * w];
    let g = dy.data();
    par::for_each_chunk_mut(&mut out, h * w, |ch, plane| {
        let s = &g[ch * ph * pw..(ch + 1) * ph * pw];
        for y in 0..ph {
            let sy = reflect_index(y as isize - pad as isize, h);
            for x in 0..pw {
                let sx = reflect_index(x as isize - pad as isize, w);
                plane[sy * w + sx] += s[y * pw + x];
            }
        }
    });
    Tensor::new(vec![c, h, w], out)
}

/// Stride-1 "valid" convolution. `x`: `(cin, h, w)`, `weight`:
/// `(cout, cin, k, k)`, `bias`: `(cout)`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (cin, h, w) = x.dims3();
    let (cout, wcin, k) = conv_dims(weight);
    assert_eq!(
        cin, wcin,
        "conv2d: input has {cin} channels, kernel expects {wcin}"
    );
    assert!(h >= k && w >= k, "conv2d: input {h}x{w} smaller than kernel {k}");
    let (ho, wo) = (h - k + 1, w - k + 1);
    let (xd, wd, bd) = (x.data(), weight.data(), bias.data());
    let mut out = vec![0.0; cout * ho * wo];
    par::for_each_chunk_mut(&mut out, ho * wo, |co, plane| {
        plane.fill(bd[co]);
        for ci in 0..cin {
            let xs = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((co * cin + ci) * k + ky) * k + kx];
                    for y in 0..ho {
                        let start = (y + ky) * w + kx;
                        let xrow = &xs[start..start + wo];
                        let orow = &mut plane[y * wo..(y + 1) * wo];
                        for (o, xv) in orow.iter_mut().zip(xrow) {
                            *o += wv * xv;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![cout, ho, wo], out)
}

pub fn conv2d_backward_input(dy: &Tensor, weight: &Tensor, h: usize, w: usize) -> Tensor {
    let (cout, ho, wo) = dy.dims3();
    let (_, cin, k) = conv_dims(weight);
    let (gd, wd) = (dy.data(), weight.data());
    let mut out = vec![0.0; cin * h * w];
    par::for_each_chunk_mut(&mut out, h * w, |ci, plane| {
        for co in 0..cout {
            let gs = &gd[co * ho * wo..(co + 1) * ho * wo];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((co * cin + ci) * k + ky) * k + kx];
                    for y in 0..ho {
                        let start = (y + ky) * w + kx;
                        let drow = &mut plane[start..start + wo];
                        let grow = &gs[y * wo..(y + 1) * wo];
                        for (d, g) in drow.iter_mut().zip(grow) {
                            *d += wv * g;
                        }
                    }
                }
            }
        }
    });
    Tensor::new(vec![cin, h, w], out)
}

/// Returns `(d_weight, d_bias)`.
pub fn conv2d_backward_params(dy: &Tensor, x: &Tensor, k: usize) -> (Tensor, Tensor) {
    let (cout, ho, wo) = dy.dims3();
    let (cin, h, w) = x.dims3();
    let (gd, xd) = (dy.data(), x.data());
    let mut dw = vec![0.0; cout * cin * k * k];
    par::for_each_chunk_mut(&mut dw, cin * k * k, |co, block| {
        let gs = &gd[co * ho * wo..(co + 1) * ho * wo];
        for ci in 0..cin {
            let xs = &xd[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..ho {
                        let start = (y + ky) * w + kx;
                        let xrow = &xs[start..start + wo];
                        let grow = &gs[y * wo..(y + 1) * wo];
                        acc += xrow.iter().zip(grow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    block[(ci * k + ky) * k + kx] = acc;
                }
            }
        }
    });
    let db = (0..cout)
        .map(|co| gd[co * ho * wo..(co + 1) * ho * wo].iter().sum())
        .collect();
    (
        Tensor::new(vec![cout, cin, k, k], dw),
        Tensor::new(vec![cout], db),
    )
}

fn conv_dims(weight: &Tensor) -> (usize, usize, usize) {
    match weight.shape()[..] {
        [cout, cin, k, k2] if k == k2 => (cout, cin, k),
        _ => panic!("conv weight must be (cout, cin, k, k), got {:?}", weight.shape()),
    }
}

/// 2x2 max pooling, stride 2, ceil mode. Returns the pooled tensor and the
/// flat input index of each maximum.
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<u32>) {
    let (c, h, w) = x.dims3();
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let xd = x.data();
    let mut out = vec![0.0; c * ho * wo];
    let mut arg = vec![0u32; c * ho * wo];
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let i = ch * h * w + y * w + x;
                        if xd[i] > best {
                            best = xd[i];
                            best_i = i;
                        }
                    }
                }
                let o = ch * ho * wo + oy * wo + ox;
                out[o] = best;
                arg[o] = best_i as u32;
            }
        }
    }
    (Tensor::new(vec![c, ho, wo], out), arg)
}

pub fn max_pool2_backward(dy: &Tensor, argmax: &[u32], in_shape: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(in_shape.to_vec());
    let d = out.data_mut();
    for (g, &i) in dy.data().iter().zip(argmax) {
        d[i as usize] += g;
    }
    out
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2(x: &Tensor) -> Tensor {
    let (c, h, w) = x.dims3();
    let (h2, w2) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = vec![0.0; c * h2 * w2];
    par::for_each_chunk_mut(&mut out, h2 * w2, |ch, plane| {
        let s = &xd[ch * h * w..(ch + 1) * h * w];
        for y in 0..h2 {
            for x in 0..w2 {
                plane[y * w2 + x] = s[(y / 2) * w + x / 2];
            }
        }
    });
    Tensor::new(vec![c, h2, w2], out)
}

pub fn upsample2_backward(dy: &Tensor) -> Tensor {
    let (c, h2, w2) = dy.dims3();
    let (h, w) = (h2 / 2, w2 / 2);
    let gd = dy.data();
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for x in 0..w2 {
                out[ch * h * w + (y / 2) * w + x / 2] += gd[ch * h2 * w2 + y * w2 + x];
            }
        }
    }
    Tensor::new(vec![c, h, w], out)
}

/// `(m, k) x (k, n) -> (m, n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    assert_eq!(k, k2, "matmul inner dimensions differ: {k} vs {k2}");
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    par::for_each_chunk_mut(&mut out, n.max(1), |i, row| {
        for p in 0..k {
            let av = ad[i * k + p];
            let brow = &bd[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    });
    Tensor::new(vec![m, n], out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = a.dims2();
    let ad = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = ad[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let (m, n) = x.dims2();
    let mut out = x.data().to_vec();
    if m == 0 || n == 0 {
        return Tensor::new(vec![m, n], out);
    }
    par::for_each_chunk_mut(&mut out, n, |_, row| {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    });
    Tensor::new(vec![m, n], out)
}

pub fn softmax_rows_backward(dy: &Tensor, y: &Tensor) -> Tensor {
    let (m, n) = y.dims2();
    let mut out = vec![0.0; m * n];
    let (gd, yd) = (dy.data(), y.data());
    par::for_each_chunk_mut(&mut out, n.max(1), |i, row| {
        let g = &gd[i * n..(i + 1) * n];
        let p = &yd[i * n..(i + 1) * n];
        let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
        for ((o, gv), pv) in row.iter_mut().zip(g).zip(p) {
            *o = pv * (gv - dot);
        }
    });
    Tensor::new(vec![m, n], out)
}

/// Per-channel mean and population variance over the spatial positions.
pub fn channel_stats(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (c, h, w) = x.dims3();
    let n = (h * w) as f64;
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    for plane in x.data().chunks_exact(h * w) {
        let mean = plane.iter().sum::<f64>() / n;
        let var = plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        means.push(mean);
        vars.push(var);
    }
    debug_assert_eq!(means.len(), c);
    (means, vars)
}
