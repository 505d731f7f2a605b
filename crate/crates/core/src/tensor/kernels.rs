//! Raw numeric loops behind the tensor ops.
//!
//! Everything here is deterministic: fixed iteration order, no threading.
//! Convolutions use a row-AXPY inner loop so LLVM can vectorize along the
//! image width; reductions accumulate in f64.

/// Symmetric reflect index (no edge repeat): -1 -> 1, n -> n-2.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

pub fn conv2d_out_dims(h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> (usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    (oh, ow)
}

/// Forward convolution, NCHW input, OIHW weight, zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    co: usize,
    kh: usize,
    kw: usize,
    bias: &[f32],
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, pad);
    let mut out = vec![0.0f32; n * co * oh * ow];

    if stride == 1 {
        for b in 0..n {
            for o in 0..co {
                let out_base = (b * co + o) * oh * ow;
                out[out_base..out_base + oh * ow].fill(bias[o]);
                for i in 0..ci {
                    let in_base = (b * ci + i) * h * w;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let s = weight[((o * ci + i) * kh + ky) * kw + kx];
                            if s == 0.0 {
                                continue;
                            }
                            // out[y][x] += s * in[y+ky-pad][x+kx-pad]
                            for y in 0..oh {
                                let iy = y as isize + ky as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let dx = kx as isize - pad as isize;
                                let x0 = (-dx).max(0) as usize;
                                let x1 = ow.min((w as isize - dx).max(0) as usize);
                                if x0 >= x1 {
                                    continue;
                                }
                                let orow = out_base + y * ow;
                                let irow = in_base + iy as usize * w;
                                let dst = &mut out[orow + x0..orow + x1];
                                let src = &input[(irow as isize + x0 as isize + dx) as usize..]
                                    [..x1 - x0];
                                for (d, &v) in dst.iter_mut().zip(src) {
                                    *d += s * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        // Generic strided path.
        for b in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias[o] as f64;
                        for i in 0..ci {
                            for ky in 0..kh {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (x * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let iv = input[((b * ci + i) * h + iy as usize) * w + ix as usize];
                                    let wv = weight[((o * ci + i) * kh + ky) * kw + kx];
                                    acc += (iv * wv) as f64;
                                }
                            }
                        }
                        out[((b * co + o) * oh + y) * ow + x] = acc as f32;
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_input(
    grad_out: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    weight: &[f32],
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, pad);
    let mut gin = vec![0.0f32; n * ci * h * w];

    if stride == 1 {
        // gin[iy][ix] += w[o][i][ky][kx] * g[iy-ky+pad][ix-kx+pad]
        for b in 0..n {
            for i in 0..ci {
                let gin_base = (b * ci + i) * h * w;
                for o in 0..co {
                    let go_base = (b * co + o) * oh * ow;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let s = weight[((o * ci + i) * kh + ky) * kw + kx];
                            if s == 0.0 {
                                continue;
                            }
                            for iy in 0..h {
                                let y = iy as isize - ky as isize + pad as isize;
                                if y < 0 || y >= oh as isize {
                                    continue;
                                }
                                let dx = pad as isize - kx as isize;
                                let ix0 = (-dx).max(0) as usize;
                                let ix1 = w.min((ow as isize - dx).max(0) as usize);
                                if ix0 >= ix1 {
                                    continue;
                                }
                                let grow = gin_base + iy * w;
                                let orow = go_base + y as usize * ow;
                                let dst = &mut gin[grow + ix0..grow + ix1];
                                let src = &grad_out
                                    [(orow as isize + ix0 as isize + dx) as usize..][..ix1 - ix0];
                                for (d, &v) in dst.iter_mut().zip(src) {
                                    *d += s * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        for b in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let g = grad_out[((b * co + o) * oh + y) * ow + x];
                        if g == 0.0 {
                            continue;
                        }
                        for i in 0..ci {
                            for ky in 0..kh {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (x * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    gin[((b * ci + i) * h + iy as usize) * w + ix as usize] +=
                                        g * weight[((o * ci + i) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    gin
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward_weight(
    grad_out: &[f32],
    input: &[f32],
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let (oh, ow) = conv2d_out_dims(h, w, kh, kw, stride, pad);
    let mut gw = vec![0.0f32; co * ci * kh * kw];

    for o in 0..co {
        for i in 0..ci {
            for ky in 0..kh {
                for kx in 0..kw {
                    let mut acc = 0.0f64;
                    for b in 0..n {
                        let go_base = (b * co + o) * oh * ow;
                        let in_base = (b * ci + i) * h * w;
                        for y in 0..oh {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            if stride == 1 {
                                let dx = kx as isize - pad as isize;
                                let x0 = (-dx).max(0) as usize;
                                let x1 = ow.min((w as isize - dx).max(0) as usize);
                                if x0 >= x1 {
                                    continue;
                                }
                                let orow = go_base + y * ow;
                                let irow = in_base + iy as usize * w;
                                let a = &grad_out[orow + x0..orow + x1];
                                let bvals = &input[(irow as isize + x0 as isize + dx) as usize..]
                                    [..x1 - x0];
                                let mut dot = 0.0f32;
                                for (&ga, &iv) in a.iter().zip(bvals) {
                                    dot += ga * iv;
                                }
                                acc += dot as f64;
                            } else {
                                for x in 0..ow {
                                    let ix = (x * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let ga = grad_out[go_base + y * ow + x];
                                    let iv = input[in_base + iy as usize * w + ix as usize];
                                    acc += (ga * iv) as f64;
                                }
                            }
                        }
                    }
                    gw[((o * ci + i) * kh + ky) * kw + kx] = acc as f32;
                }
            }
        }
    }
    gw
}

pub fn conv2d_backward_bias(grad_out: &[f32], n: usize, co: usize, oh: usize, ow: usize) -> Vec<f32> {
    let mut gb = vec![0.0f32; co];
    for o in 0..co {
        let mut acc = 0.0f64;
        for b in 0..n {
            let base = (b * co + o) * oh * ow;
            for &g in &grad_out[base..base + oh * ow] {
                acc += g as f64;
            }
        }
        gb[o] = acc as f32;
    }
    gb
}

pub fn avg_pool_2x2_forward(input: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0f32; planes * oh * ow];
    for p in 0..planes {
        let ib = p * h * w;
        let ob = p * oh * ow;
        for y in 0..oh {
            let r0 = ib + 2 * y * w;
            let r1 = r0 + w;
            for x in 0..ow {
                out[ob + y * ow + x] =
                    0.25 * (input[r0 + 2 * x] + input[r0 + 2 * x + 1] + input[r1 + 2 * x] + input[r1 + 2 * x + 1]);
            }
        }
    }
    out
}

pub fn avg_pool_2x2_backward(grad_out: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h / 2, w / 2);
    let mut gin = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let ib = p * h * w;
        let ob = p * oh * ow;
        for y in 0..h {
            for x in 0..w {
                gin[ib + y * w + x] = 0.25 * grad_out[ob + (y / 2) * ow + x / 2];
            }
        }
    }
    gin
}

pub fn upsample_nearest_2x_forward(input: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let (oh, ow) = (h * 2, w * 2);
    let mut out = vec![0.0f32; planes * oh * ow];
    for p in 0..planes {
        let ib = p * h * w;
        let ob = p * oh * ow;
        for y in 0..oh {
            for x in 0..ow {
                out[ob + y * ow + x] = input[ib + (y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample_nearest_2x_backward(grad_out: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let ow = w * 2;
    let mut gin = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let ib = p * h * w;
        let ob = p * h * 2 * ow;
        for y in 0..h {
            for x in 0..w {
                let o00 = ob + 2 * y * ow + 2 * x;
                let o10 = o00 + ow;
                gin[ib + y * w + x] = grad_out[o00] + grad_out[o00 + 1] + grad_out[o10] + grad_out[o10 + 1];
            }
        }
    }
    gin
}

/// 1D correlation along W with reflect padding, applied per row.
pub fn blur_w_forward(input: &[f32], planes: usize, h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let k = kernel.len();
    let c = k / 2;
    let mut out = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        for y in 0..h {
            let row = (p * h + y) * w;
            for (t, &kv) in kernel.iter().enumerate() {
                let dx = t as isize - c as isize;
                // interior: x + dx in [0, w)
                let x0 = (-dx).max(0) as usize;
                let x1 = w.min((w as isize - dx).max(0) as usize);
                let dst = &mut out[row + x0..row + x1];
                let src = &input[(row as isize + x0 as isize + dx) as usize..][..x1 - x0];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += kv * v;
                }
                // reflected borders
                for x in 0..x0 {
                    out[row + x] += kv * input[row + reflect(x as isize + dx, w)];
                }
                for x in x1..w {
                    out[row + x] += kv * input[row + reflect(x as isize + dx, w)];
                }
            }
        }
    }
    out
}

/// Adjoint of `blur_w_forward` (scatter form of the same loop).
pub fn blur_w_backward(grad_out: &[f32], planes: usize, h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let k = kernel.len();
    let c = k / 2;
    let mut gin = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        for y in 0..h {
            let row = (p * h + y) * w;
            for (t, &kv) in kernel.iter().enumerate() {
                let dx = t as isize - c as isize;
                let x0 = (-dx).max(0) as usize;
                let x1 = w.min((w as isize - dx).max(0) as usize);
                let src = &grad_out[row + x0..row + x1];
                let dst = &mut gin[(row as isize + x0 as isize + dx) as usize..][..x1 - x0];
                for (d, &g) in dst.iter_mut().zip(src) {
                    *d += kv * g;
                }
                for x in 0..x0 {
                    gin[row + reflect(x as isize + dx, w)] += kv * grad_out[row + x];
                }
                for x in x1..w {
                    gin[row + reflect(x as isize + dx, w)] += kv * grad_out[row + x];
                }
            }
        }
    }
    gin
}

/// 1D correlation along H with reflect padding, applied per column strip.
pub fn blur_h_forward(input: &[f32], planes: usize, h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let k = kernel.len();
    let c = k / 2;
    let mut out = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h {
            let orow = base + y * w;
            for (t, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - c as isize, h);
                let irow = base + sy * w;
                let dst = &mut out[orow..orow + w];
                let src = &input[irow..irow + w];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += kv * v;
                }
            }
        }
    }
    out
}

pub fn blur_h_backward(grad_out: &[f32], planes: usize, h: usize, w: usize, kernel: &[f32]) -> Vec<f32> {
    let k = kernel.len();
    let c = k / 2;
    let mut gin = vec![0.0f32; planes * h * w];
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h {
            let grow = base + y * w;
            for (t, &kv) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + t as isize - c as isize, h);
                let drow = base + sy * w;
                for x in 0..w {
                    gin[drow + x] += kv * grad_out[grow + x];
                }
            }
        }
    }
    gin
}

/// Accumulates in f64, sequential order.
pub fn sum_f64(data: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for &v in data {
        acc += v as f64;
    }
    acc
}
