//! Row-major dense kernels shared by the backbones.

/// `out[b, :] = bias + x[b, :] @ w` for `w` of shape `[n_in, n_out]`.
pub(crate) fn affine(x: &[f64], n_in: usize, w: &[f64], bias: &[f64], out: &mut Vec<f64>) {
    let n_out = bias.len();
    let rows = x.len() / n_in;
    out.clear();
    out.reserve(rows * n_out);
    for r in 0..rows {
        out.extend_from_slice(bias);
        let o = &mut out[r * n_out..(r + 1) * n_out];
        for (k, &a) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wk = &w[k * n_out..(k + 1) * n_out];
            for (oj, wj) in o.iter_mut().zip(wk) {
                *oj += a * wj;
            }
        }
    }
}

/// Accumulates `dw += x^T dz`, `db += sum_rows dz`, and writes `dx = dz w^T`
/// when requested.
pub(crate) fn affine_backward(
    x: &[f64],
    n_in: usize,
    w: &[f64],
    dz: &[f64],
    n_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut Vec<f64>>,
) {
    let rows = dz.len() / n_out;
    for r in 0..rows {
        let dzr = &dz[r * n_out..(r + 1) * n_out];
        for (b, d) in db.iter_mut().zip(dzr) {
            *b += d;
        }
        for (k, &a) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let dwk = &mut dw[k * n_out..(k + 1) * n_out];
            for (g, d) in dwk.iter_mut().zip(dzr) {
                *g += a * d;
            }
        }
    }
    if let Some(dx) = dx {
        dx.clear();
        dx.resize(rows * n_in, 0.0);
        for r in 0..rows {
            let dzr = &dz[r * n_out..(r + 1) * n_out];
            let dxr = &mut dx[r * n_in..(r + 1) * n_in];
            for (k, g) in dxr.iter_mut().enumerate() {
                let wk = &w[k * n_out..(k + 1) * n_out];
                *g = wk.iter().zip(dzr).map(|(a, b)| a * b).sum();
            }
        }
    }
}

pub(crate) fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_hand_product() {
        // x: 2x2, w: 2x3
        let x = [1.0, 2.0, 0.0, -1.0];
        let w = [1.0, 0.0, 2.0, 0.5, 1.0, -1.0];
        let b = [0.1, 0.2, 0.3];
        let mut out = Vec::new();
        affine(&x, 2, &w, &b, &mut out);
        let expected = [2.1, 2.2, 0.3, -0.4, -0.8, 1.3];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_backward_shapes() {
        let x = [1.0, 2.0];
        let w = [1.0, 0.0, 2.0, 0.5, 1.0, -1.0];
        let dz = [1.0, -1.0, 0.5];
        let mut dw = vec![0.0; 6];
        let mut db = vec![0.0; 3];
        let mut dx = Vec::new();
        affine_backward(&x, 2, &w, &dz, 3, &mut dw, &mut db, Some(&mut dx));
        assert_eq!(dw, vec![1.0, -1.0, 0.5, 2.0, -2.0, 1.0]);
        assert_eq!(db, vec![1.0, -1.0, 0.5]);
        assert_eq!(dx, vec![2.0, -1.0]);
    }
}
