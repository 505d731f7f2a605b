//! Reverse-mode pass: topological walk from a scalar loss, accumulating
//! gradients into every tensor with `requires_grad`.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::kernels;
use super::{Op, SpatialAxis, Tensor, POW_GRAD_CAP};

impl Tensor {
    /// Populates `grad` on every tracked tensor reachable from this scalar.
    ///
    /// Working gradients are fresh per call; persistent `grad` buffers on
    /// `requires_grad` tensors accumulate across calls until zeroed.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.is_tracked() {
            return Ok(());
        }

        let order = topo_order(self);
        let mut wgrads: HashMap<u64, Vec<f32>> = HashMap::new();
        wgrads.insert(self.id(), vec![1.0]);

        for node in order.iter().rev() {
            let Some(grad) = wgrads.remove(&node.id()) else {
                continue;
            };
            if node.requires_grad() {
                node.accumulate_grad(&grad);
            }
            propagate(node, &grad, &mut wgrads);
        }
        Ok(())
    }
}

/// Post-order over the tracked subgraph (iterative; graphs can be deep).
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // (node, next child index to visit)
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    visited.insert(root.id());
    while let Some((node, child_idx)) = stack.pop() {
        let parents = node.op().parent_tensors();
        if child_idx < parents.len() {
            stack.push((node.clone(), child_idx + 1));
            let p = &parents[child_idx];
            if p.is_tracked() && !visited.contains(&p.id()) {
                visited.insert(p.id());
                stack.push((p.clone(), 0));
            }
        } else {
            order.push(node);
        }
    }
    order
}

fn accumulate(target: &Tensor, contribution: Vec<f32>, wgrads: &mut HashMap<u64, Vec<f32>>) {
    if !target.is_tracked() {
        return;
    }
    match wgrads.entry(target.id()) {
        std::collections::hash_map::Entry::Occupied(mut e) => {
            let g = e.get_mut();
            for (a, b) in g.iter_mut().zip(&contribution) {
                *a += b;
            }
        }
        std::collections::hash_map::Entry::Vacant(e) => {
            e.insert(contribution);
        }
    }
}

fn propagate(node: &Tensor, grad: &[f32], wgrads: &mut HashMap<u64, Vec<f32>>) {
    match node.op() {
        Op::Leaf => {}

        Op::Add(a, b) => {
            accumulate(a, grad.to_vec(), wgrads);
            accumulate(b, grad.to_vec(), wgrads);
        }

        Op::Sub(a, b) => {
            accumulate(a, grad.to_vec(), wgrads);
            accumulate(b, grad.iter().map(|g| -g).collect(), wgrads);
        }

        Op::Mul(a, b) => {
            let da: Vec<f32> = grad.iter().zip(b.data().iter()).map(|(g, bv)| g * bv).collect();
            let db: Vec<f32> = grad.iter().zip(a.data().iter()).map(|(g, av)| g * av).collect();
            accumulate(a, da, wgrads);
            accumulate(b, db, wgrads);
        }

        Op::Div(a, b) => {
            let bd = b.data();
            let ad = a.data();
            let da: Vec<f32> = grad.iter().zip(bd.iter()).map(|(g, bv)| g / bv).collect();
            let db: Vec<f32> = grad
                .iter()
                .zip(ad.iter().zip(bd.iter()))
                .map(|(g, (av, bv))| -g * av / (bv * bv))
                .collect();
            drop(ad);
            drop(bd);
            accumulate(a, da, wgrads);
            accumulate(b, db, wgrads);
        }

        Op::AddScalar(a) => accumulate(a, grad.to_vec(), wgrads),

        Op::MulScalar(a, c) => {
            accumulate(a, grad.iter().map(|g| g * c).collect(), wgrads);
        }

        Op::PowScalar(a, p) => {
            // d/dx sign(x)|x|^p = p|x|^(p-1) on both branches; capped so the
            // p<1 singularity at 0 stays finite.
            let da: Vec<f32> = grad
                .iter()
                .zip(a.data().iter())
                .map(|(g, &x)| {
                    let local = p * x.abs().powf(p - 1.0);
                    g * local.min(POW_GRAD_CAP)
                })
                .collect();
            accumulate(a, da, wgrads);
        }

        Op::Abs(a) => {
            let da: Vec<f32> = grad
                .iter()
                .zip(a.data().iter())
                .map(|(g, &x)| g * sign(x))
                .collect();
            accumulate(a, da, wgrads);
        }

        Op::Clamp(a, lo, hi) => {
            let da: Vec<f32> = grad
                .iter()
                .zip(a.data().iter())
                .map(|(g, &x)| if x >= *lo && x <= *hi { *g } else { 0.0 })
                .collect();
            accumulate(a, da, wgrads);
        }

        Op::LeakyRelu(a, slope) => {
            let da: Vec<f32> = grad
                .iter()
                .zip(a.data().iter())
                .map(|(g, &x)| if x >= 0.0 { *g } else { g * slope })
                .collect();
            accumulate(a, da, wgrads);
        }

        Op::ReduceMean(a) => {
            let n = a.numel();
            let g = grad[0] / n as f32;
            accumulate(a, vec![g; n], wgrads);
        }

        Op::Reshape(a) => accumulate(a, grad.to_vec(), wgrads),

        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let is = input.shape();
            let ws = weight.shape();
            let (n, ci, h, w) = (is[0], is[1], is[2], is[3]);
            let (co, kh, kw) = (ws[0], ws[2], ws[3]);
            let (oh, ow) = kernels::conv2d_out_dims(h, w, kh, kw, *stride, *padding);
            if input.is_tracked() {
                let gin = kernels::conv2d_backward_input(
                    grad,
                    n,
                    ci,
                    h,
                    w,
                    &weight.data(),
                    co,
                    kh,
                    kw,
                    *stride,
                    *padding,
                );
                accumulate(input, gin, wgrads);
            }
            if weight.is_tracked() {
                let gw = kernels::conv2d_backward_weight(
                    grad,
                    &input.data(),
                    n,
                    ci,
                    h,
                    w,
                    co,
                    kh,
                    kw,
                    *stride,
                    *padding,
                );
                accumulate(weight, gw, wgrads);
            }
            if bias.is_tracked() {
                let gb = kernels::conv2d_backward_bias(grad, n, co, oh, ow);
                accumulate(bias, gb, wgrads);
            }
        }

        Op::AvgPool2x2(a) => {
            let s = a.shape();
            let gin = kernels::avg_pool_2x2_backward(grad, s[0] * s[1], s[2], s[3]);
            accumulate(a, gin, wgrads);
        }

        Op::UpsampleNearest2x(a) => {
            let s = a.shape();
            let gin = kernels::upsample_nearest_2x_backward(grad, s[0] * s[1], s[2], s[3]);
            accumulate(a, gin, wgrads);
        }

        Op::ConcatChannels(a, b) => {
            let sa = a.shape();
            let sb = b.shape();
            let (n, ca, cb, h, w) = (sa[0], sa[1], sb[1], sa[2], sa[3]);
            let plane = h * w;
            let mut ga = vec![0.0f32; n * ca * plane];
            let mut gb = vec![0.0f32; n * cb * plane];
            for bn in 0..n {
                let src = bn * (ca + cb) * plane;
                ga[bn * ca * plane..(bn + 1) * ca * plane]
                    .copy_from_slice(&grad[src..src + ca * plane]);
                gb[bn * cb * plane..(bn + 1) * cb * plane]
                    .copy_from_slice(&grad[src + ca * plane..src + (ca + cb) * plane]);
            }
            accumulate(a, ga, wgrads);
            accumulate(b, gb, wgrads);
        }

        Op::BlurAxis { input, kernel, axis } => {
            let s = input.shape();
            let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
            let gin = match axis {
                SpatialAxis::W => kernels::blur_w_backward(grad, planes, h, w, kernel),
                SpatialAxis::H => kernels::blur_h_backward(grad, planes, h, w, kernel),
            };
            accumulate(input, gin, wgrads);
        }

        Op::ChannelMatrix3 { input, m } => {
            let s = input.shape();
            let (batch, plane) = if s.len() == 3 {
                (1, s[1] * s[2])
            } else {
                (s[0], s[2] * s[3])
            };
            let mut gin = vec![0.0f32; input.numel()];
            for b in 0..batch {
                let base = b * 3 * plane;
                for p in 0..plane {
                    for k in 0..3 {
                        let mut acc = 0.0f32;
                        for (c, row) in m.iter().enumerate() {
                            acc += row[k] * grad[base + c * plane + p];
                        }
                        gin[base + k * plane + p] = acc;
                    }
                }
            }
            accumulate(input, gin, wgrads);
        }

        Op::GreenAverage(a) => {
            let s = a.shape();
            let (batch, plane) = if s.len() == 3 {
                (1, s[1] * s[2])
            } else {
                (s[0], s[2] * s[3])
            };
            let mut gin = vec![0.0f32; a.numel()];
            for b in 0..batch {
                let ib = b * 4 * plane;
                let ob = b * 3 * plane;
                for p in 0..plane {
                    gin[ib + p] = grad[ob + p];
                    gin[ib + plane + p] = 0.5 * grad[ob + plane + p];
                    gin[ib + 2 * plane + p] = 0.5 * grad[ob + plane + p];
                    gin[ib + 3 * plane + p] = grad[ob + 2 * plane + p];
                }
            }
            accumulate(a, gin, wgrads);
        }

        Op::Mosaic(a) => {
            let s = a.shape();
            let (batch, fh, fw) = if s.len() == 3 {
                (1, s[1], s[2])
            } else {
                (s[0], s[2], s[3])
            };
            let (h, w) = (fh / 2, fw / 2);
            let fplane = fh * fw;
            let plane = h * w;
            let mut gin = vec![0.0f32; a.numel()];
            for b in 0..batch {
                let ib = b * 3 * fplane;
                let ob = b * 4 * plane;
                for y in 0..h {
                    for x in 0..w {
                        let p = y * w + x;
                        let r0 = 2 * y * fw + 2 * x;
                        let r1 = r0 + fw;
                        gin[ib + r0] = grad[ob + p];
                        gin[ib + fplane + r0 + 1] = grad[ob + plane + p];
                        gin[ib + fplane + r1] = grad[ob + 2 * plane + p];
                        gin[ib + 2 * fplane + r1 + 1] = grad[ob + 3 * plane + p];
                    }
                }
            }
            accumulate(a, gin, wgrads);
        }
    }
}

#[inline]
fn sign(x: f32) -> f32 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
