//! Dense layers stored as views into one flat parameter vector.

use serde::{Deserialize, Serialize};

/// Weight block (`n_out × n_in`, row-major) at `w_off`, bias at `b_off`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub n_out: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl LayerShape {
    pub fn n_params(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

/// Lays out consecutive layers of the given widths starting at `*offset`.
pub(crate) fn layout(widths: &[usize], offset: &mut usize) -> Vec<LayerShape> {
    widths
        .windows(2)
        .map(|w| {
            let l = LayerShape {
                n_in: w[0],
                n_out: w[1],
                w_off: *offset,
                b_off: *offset + w[0] * w[1],
            };
            *offset += l.n_params();
            l
        })
        .collect()
}

const GEMM_MIN_ROWS: usize = 4;

/// `out (b × n_out) = a (b × n_in) · Wᵀ + bias`.
pub(crate) fn forward(p: &[f64], l: &LayerShape, a: &[f64], b: usize, out: &mut [f64]) {
    let (ni, no) = (l.n_in, l.n_out);
    let w = &p[l.w_off..l.w_off + ni * no];
    let bias = &p[l.b_off..l.b_off + no];
    debug_assert_eq!(a.len(), b * ni);
    debug_assert_eq!(out.len(), b * no);
    for row in out.chunks_exact_mut(no) {
        row.copy_from_slice(bias);
    }
    if b < GEMM_MIN_ROWS {
        for r in 0..b {
            let x = &a[r * ni..(r + 1) * ni];
            for (o, dst) in out[r * no..(r + 1) * no].iter_mut().enumerate() {
                *dst += dot(&w[o * ni..(o + 1) * ni], x);
            }
        }
        return;
    }
    // SAFETY: all slices are bounds-checked above to hold the strided extents.
    unsafe {
        matrixmultiply::dgemm(
            b,
            ni,
            no,
            1.0,
            a.as_ptr(),
            ni as isize,
            1,
            w.as_ptr(),
            1,
            ni as isize,
            1.0,
            out.as_mut_ptr(),
            no as isize,
            1,
        );
    }
}

/// Accumulates `dW += dzᵀ a`, `db += Σ_rows dz` into `g`, and if requested
/// writes `da = dz · W`.
pub(crate) fn backward(
    p: &[f64],
    g: &mut [f64],
    l: &LayerShape,
    a: &[f64],
    dz: &[f64],
    b: usize,
    da: Option<&mut [f64]>,
) {
    let (ni, no) = (l.n_in, l.n_out);
    let w = &p[l.w_off..l.w_off + ni * no];
    debug_assert_eq!(dz.len(), b * no);
    {
        let gw = &mut g[l.w_off..l.w_off + ni * no];
        if b < GEMM_MIN_ROWS {
            for r in 0..b {
                let x = &a[r * ni..(r + 1) * ni];
                for o in 0..no {
                    let d = dz[r * no + o];
                    if d != 0.0 {
                        axpy(d, x, &mut gw[o * ni..(o + 1) * ni]);
                    }
                }
            }
        } else {
            // SAFETY: gw holds no × ni values; dz holds b × no; a holds b × ni.
            unsafe {
                matrixmultiply::dgemm(
                    no,
                    b,
                    ni,
                    1.0,
                    dz.as_ptr(),
                    1,
                    no as isize,
                    a.as_ptr(),
                    ni as isize,
                    1,
                    1.0,
                    gw.as_mut_ptr(),
                    ni as isize,
                    1,
                );
            }
        }
    }
    let gb = &mut g[l.b_off..l.b_off + no];
    for row in dz.chunks_exact(no) {
        for (acc, d) in gb.iter_mut().zip(row) {
            *acc += d;
        }
    }
    if let Some(da) = da {
        debug_assert_eq!(da.len(), b * ni);
        if b < GEMM_MIN_ROWS {
            da.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..b {
                for o in 0..no {
                    let d = dz[r * no + o];
                    if d != 0.0 {
                        axpy(d, &w[o * ni..(o + 1) * ni], &mut da[r * ni..(r + 1) * ni]);
                    }
                }
            }
        } else {
            // SAFETY: da holds b × ni values; w holds no × ni.
            unsafe {
                matrixmultiply::dgemm(
                    b,
                    no,
                    ni,
                    1.0,
                    dz.as_ptr(),
                    no as isize,
                    1,
                    w.as_ptr(),
                    ni as isize,
                    1,
                    0.0,
                    da.as_mut_ptr(),
                    ni as isize,
                    1,
                );
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = acc[0] + acc[1] + acc[2] + acc[3];
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(p: &[f64], l: &LayerShape, a: &[f64], b: usize) -> Vec<f64> {
        let mut out = vec![0.0; b * l.n_out];
        for r in 0..b {
            for o in 0..l.n_out {
                let mut s = p[l.b_off + o];
                for i in 0..l.n_in {
                    s += p[l.w_off + o * l.n_in + i] * a[r * l.n_in + i];
                }
                out[r * l.n_out + o] = s;
            }
        }
        out
    }

    #[test]
    fn gemm_and_loop_paths_agree() {
        let mut off = 0;
        let ls = layout(&[5, 7], &mut off);
        let l = ls[0];
        let p: Vec<f64> = (0..off)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0)
            .collect();
        for b in [1, 3, 9] {
            let a: Vec<f64> = (0..b * 5)
                .map(|i| ((i * 13 % 7) as f64 - 3.0) / 3.0)
                .collect();
            let mut out = vec![0.0; b * 7];
            forward(&p, &l, &a, b, &mut out);
            let want = naive_forward(&p, &l, &a, b);
            for (x, y) in out.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
            let dz: Vec<f64> = (0..b * 7).map(|i| (i as f64 * 0.3).sin()).collect();
            let mut g = vec![0.0; off];
            let mut da = vec![0.0; b * 5];
            backward(&p, &mut g, &l, &a, &dz, b, Some(&mut da));
            for i in 0..5 {
                for o in 0..7 {
                    let want: f64 = (0..b).map(|r| dz[r * 7 + o] * a[r * 5 + i]).sum();
                    assert!((g[l.w_off + o * 5 + i] - want).abs() < 1e-12);
                }
            }
            for r in 0..b {
                for i in 0..5 {
                    let want: f64 = (0..7).map(|o| dz[r * 7 + o] * p[l.w_off + o * 5 + i]).sum();
                    assert!((da[r * 5 + i] - want).abs() < 1e-12);
                }
            }
        }
    }
}
