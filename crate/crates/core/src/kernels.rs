//! Slice-level compute kernels shared by the differentiable graph and the
//! graph-free inference path.

use alloc::vec;

/// `out[m,p] = a[m,k] · b[k,p]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, p: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for t in 0..k {
            let av = a[i * k + t];
            if av == 0.0 {
                continue;
            }
            let brow = &b[t * p..(t + 1) * p];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Accumulates `ga += g · bᵀ` and `gb += aᵀ · g` for `out = a · b`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_backward(a: &[f64], b: &[f64], g: &[f64], m: usize, k: usize, p: usize, ga: Option<&mut [f64]>, gb: Option<&mut [f64]>) {
    if let Some(ga) = ga {
        for i in 0..m {
            let grow = &g[i * p..(i + 1) * p];
            for t in 0..k {
                let brow = &b[t * p..(t + 1) * p];
                ga[i * k + t] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    if let Some(gb) = gb {
        for i in 0..m {
            let grow = &g[i * p..(i + 1) * p];
            for t in 0..k {
                let av = a[i * k + t];
                if av == 0.0 {
                    continue;
                }
                let gbrow = &mut gb[t * p..(t + 1) * p];
                for (o, &gv) in gbrow.iter_mut().zip(grow) {
                    *o += av * gv;
                }
            }
        }
    }
}

/// Unfolds `x: [ci, h, w]` into `[ci·9, h·w]` patches under zero padding 1.
/// `cols` must arrive zeroed; padding cells are never written.
fn im2col(x: &[f64], ci: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for i in 0..ci {
        let plane = &x[i * hw..(i + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((i * 9) + ky * 3 + kx) * hw..((i * 9) + ky * 3 + kx + 1) * hw];
                let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let dst = &mut row[y * w + x0..y * w + x1];
                    let src = &plane[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                    dst.copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds patch gradients back onto `[ci, h, w]`.
fn col2im(cols: &[f64], ci: usize, h: usize, w: usize, gx: &mut [f64]) {
    let hw = h * w;
    for i in 0..ci {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((i * 9) + ky * 3 + kx) * hw..((i * 9) + ky * 3 + kx + 1) * hw];
                let (y0, y1) = (usize::from(ky == 0), if ky == 2 { h - 1 } else { h });
                let (x0, x1) = (usize::from(kx == 0), if kx == 2 { w - 1 } else { w });
                for y in y0..y1 {
                    let sy = y + ky - 1;
                    let dst = &mut gx[i * hw + sy * w + x0 + kx - 1..i * hw + sy * w + x1 + kx - 1];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// 3×3 cross-correlation, zero padding 1, stride 1.
/// `x: [ci, h, w]`, `k: [co, ci, 3, 3]`, `out: [co, h, w]`.
pub fn conv3x3(x: &[f64], k: &[f64], ci: usize, co: usize, h: usize, w: usize, out: &mut [f64]) {
    let mut cols = vec![0.0; ci * 9 * h * w];
    im2col(x, ci, h, w, &mut cols);
    matmul(k, &cols, co, ci * 9, h * w, out);
}

/// Accumulates input and kernel gradients of [`conv3x3`].
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(x: &[f64], k: &[f64], g: &[f64], ci: usize, co: usize, h: usize, w: usize, gx: Option<&mut [f64]>, gk: Option<&mut [f64]>) {
    let hw = h * w;
    if let Some(gk) = gk {
        let mut cols = vec![0.0; ci * 9 * hw];
        im2col(x, ci, h, w, &mut cols);
        matmul_backward(k, &cols, g, co, ci * 9, hw, Some(gk), None);
    }
    if let Some(gx) = gx {
        let mut cols = vec![0.0; ci * 9 * hw];
        matmul_backward(k, &[], g, co, ci * 9, hw, None, Some(&mut cols));
        col2im(&cols, ci, h, w, gx);
    }
}

/// Non-overlapping 2×2 average pooling of `[c, h, w]` (h, w even).
pub fn avg_pool2(x: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let base = ch * h * w;
                let s = x[base + 2 * y * w + 2 * xx]
                    + x[base + 2 * y * w + 2 * xx + 1]
                    + x[base + (2 * y + 1) * w + 2 * xx]
                    + x[base + (2 * y + 1) * w + 2 * xx + 1];
                out[ch * oh * ow + y * ow + xx] = 0.25 * s;
            }
        }
    }
}

pub fn avg_pool2_backward(g: &[f64], c: usize, h: usize, w: usize, gx: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let gv = 0.25 * g[ch * oh * ow + y * ow + xx];
                let base = ch * h * w;
                gx[base + 2 * y * w + 2 * xx] += gv;
                gx[base + 2 * y * w + 2 * xx + 1] += gv;
                gx[base + (2 * y + 1) * w + 2 * xx] += gv;
                gx[base + (2 * y + 1) * w + 2 * xx + 1] += gv;
            }
        }
    }
}

/// Per-channel mean over the trailing `hw` values.
pub fn global_avg_pool(x: &[f64], c: usize, hw: usize, out: &mut [f64]) {
    for ch in 0..c {
        out[ch] = x[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn naive_conv(x: &[f64], k: &[f64], ci: usize, co: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; co * h * w];
        for o in 0..co {
            for y in 0..h as isize {
                for xx in 0..w as isize {
                    let mut s = 0.0;
                    for i in 0..ci {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, xx + kx - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                s += k[((o * ci + i) * 3 + ky as usize) * 3 + kx as usize] * x[(i * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[(o * h + y as usize) * w + xx as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let (ci, co, h, w) = (2, 3, 5, 4);
        let x: Vec<f64> = (0..ci * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let k: Vec<f64> = (0..co * ci * 9).map(|i| ((i * 5) % 7) as f64 * 0.25 - 0.7).collect();
        let mut out = vec![0.0; co * h * w];
        conv3x3(&x, &k, ci, co, h, w, &mut out);
        let expect = naive_conv(&x, &k, ci, co, h, w);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_backward_matches_naive_adjoint() {
        let (ci, co, h, w) = (2, 3, 4, 5);
        let x: Vec<f64> = (0..ci * h * w).map(|i| ((i * 3) % 13) as f64 * 0.1 - 0.6).collect();
        let k: Vec<f64> = (0..co * ci * 9).map(|i| ((i * 7) % 5) as f64 * 0.2 - 0.4).collect();
        let g: Vec<f64> = (0..co * h * w).map(|i| ((i * 11) % 9) as f64 * 0.1 - 0.4).collect();
        let (mut gx, mut gk) = (vec![0.0; x.len()], vec![0.0; k.len()]);
        conv3x3_backward(&x, &k, &g, ci, co, h, w, Some(&mut gx), Some(&mut gk));
        // <g, conv(x, k)> is bilinear, so each partial is the conv of a unit vector.
        let inner = |x: &[f64], k: &[f64]| naive_conv(x, k, ci, co, h, w).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..x.len() {
            let mut e = vec![0.0; x.len()];
            e[j] = 1.0;
            assert!((inner(&e, &k) - gx[j]).abs() < 1e-12);
        }
        for j in 0..k.len() {
            let mut e = vec![0.0; k.len()];
            e[j] = 1.0;
            assert!((inner(&x, &e) - gk[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_small() {
        let mut out = vec![0.0; 2];
        matmul(&[1.0, 2.0, 3.0, 4.0], &[5.0, 6.0], 2, 2, 1, &mut out);
        assert_eq!(out, vec![17.0, 39.0]);
    }
}
