//! Mean cross-entropy, its gradient by backpropagation, and the exact
//! Hessian-vector product by forward-mode differentiation of the backward
//! pass.
//!
//! `head` restricts the softmax to a subset of output units; labels are
//! then positions within `head`. Units outside the head get zero gradient.

use super::model::{sigmoid, softmax, Dims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    /// Rows whose argmax over the head matches the label.
    pub correct: usize,
}

struct Scratch {
    h: Vec<f64>,
    z: Vec<f64>,
    dh: Vec<f64>,
}

impl Scratch {
    fn new(d: Dims) -> Self {
        Self {
            h: vec![0.0; d.hidden],
            z: vec![0.0; d.output],
            dh: vec![0.0; d.hidden],
        }
    }
}

fn full_head(d: Dims) -> Vec<usize> {
    (0..d.output).collect()
}

/// Mean loss over the batch; writes the mean gradient into `grad`.
pub fn loss_and_grad(
    p: &[f64],
    d: Dims,
    xs: &[&[f64]],
    ys: &[usize],
    head: Option<&[usize]>,
    grad: &mut [f64],
) -> LossStats {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty(), "empty batch");
    let owned;
    let head = match head {
        Some(h) => h,
        None => {
            owned = full_head(d);
            &owned
        }
    };
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (w1, rest) = p.split_at(d.b1());
    let (b1, rest) = rest.split_at(d.hidden);
    let (w2, b2) = rest.split_at(d.output * d.hidden);
    let (gw1, grest) = grad.split_at_mut(d.b1());
    let (gb1, grest) = grest.split_at_mut(d.hidden);
    let (gw2, gb2) = grest.split_at_mut(d.output * d.hidden);
    let mut s = Scratch::new(d);
    let k = head.len();
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, &y) in xs.iter().zip(ys) {
        for j in 0..d.hidden {
            let row = &w1[j * d.input..(j + 1) * d.input];
            s.h[j] = sigmoid(row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + b1[j]);
        }
        let z = &mut s.z[..k];
        for (i, &c) in head.iter().enumerate() {
            let row = &w2[c * d.hidden..(c + 1) * d.hidden];
            z[i] = row.iter().zip(&s.h).map(|(w, v)| w * v).sum::<f64>() + b2[c];
        }
        if super::model::argmax(z) == y {
            correct += 1;
        }
        softmax(z);
        loss -= z[y].max(f64::MIN_POSITIVE).ln();
        z[y] -= 1.0;
        s.dh.iter_mut().for_each(|v| *v = 0.0);
        for (i, &c) in head.iter().enumerate() {
            let dz = z[i];
            let row = &w2[c * d.hidden..(c + 1) * d.hidden];
            let grow = &mut gw2[c * d.hidden..(c + 1) * d.hidden];
            for j in 0..d.hidden {
                grow[j] += dz * s.h[j];
                s.dh[j] += dz * row[j];
            }
            gb2[c] += dz;
        }
        for j in 0..d.hidden {
            let da = s.dh[j] * s.h[j] * (1.0 - s.h[j]);
            let grow = &mut gw1[j * d.input..(j + 1) * d.input];
            for (g, v) in grow.iter_mut().zip(x.iter()) {
                *g += da * v;
            }
            gb1[j] += da;
        }
    }
    let n = xs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    LossStats {
        loss: loss / n,
        correct,
    }
}

/// Writes `H v` into `out`, where `H` is the Hessian of the mean loss.
pub fn hessian_vector(
    p: &[f64],
    d: Dims,
    xs: &[&[f64]],
    ys: &[usize],
    head: Option<&[usize]>,
    v: &[f64],
    out: &mut [f64],
) {
    assert_eq!(xs.len(), ys.len());
    assert!(!xs.is_empty(), "empty batch");
    let owned;
    let head = match head {
        Some(h) => h,
        None => {
            owned = full_head(d);
            &owned
        }
    };
    out.iter_mut().for_each(|g| *g = 0.0);
    let (w1, rest) = p.split_at(d.b1());
    let (b1, rest) = rest.split_at(d.hidden);
    let (w2, b2) = rest.split_at(d.output * d.hidden);
    let (v1, vrest) = v.split_at(d.b1());
    let (c1, vrest) = vrest.split_at(d.hidden);
    let (v2, c2) = vrest.split_at(d.output * d.hidden);
    let (ow1, orest) = out.split_at_mut(d.b1());
    let (ob1, orest) = orest.split_at_mut(d.hidden);
    let (ow2, ob2) = orest.split_at_mut(d.output * d.hidden);

    let k = head.len();
    let mut h = vec![0.0; d.hidden];
    let mut rh = vec![0.0; d.hidden];
    let mut ra = vec![0.0; d.hidden];
    let mut pz = vec![0.0; k];
    let mut rz = vec![0.0; k];
    let mut rdz = vec![0.0; k];
    let mut dh = vec![0.0; d.hidden];
    let mut rdh = vec![0.0; d.hidden];
    for (x, &y) in xs.iter().zip(ys) {
        for j in 0..d.hidden {
            let row = &w1[j * d.input..(j + 1) * d.input];
            let vrow = &v1[j * d.input..(j + 1) * d.input];
            h[j] = sigmoid(row.iter().zip(x.iter()).map(|(w, xv)| w * xv).sum::<f64>() + b1[j]);
            ra[j] = vrow.iter().zip(x.iter()).map(|(w, xv)| w * xv).sum::<f64>() + c1[j];
            rh[j] = h[j] * (1.0 - h[j]) * ra[j];
        }
        for (i, &c) in head.iter().enumerate() {
            let row = &w2[c * d.hidden..(c + 1) * d.hidden];
            let vrow = &v2[c * d.hidden..(c + 1) * d.hidden];
            let mut zi = b2[c];
            let mut rzi = c2[c];
            for j in 0..d.hidden {
                zi += row[j] * h[j];
                rzi += vrow[j] * h[j] + row[j] * rh[j];
            }
            pz[i] = zi;
            rz[i] = rzi;
        }
        softmax(&mut pz);
        let mean_rz: f64 = pz.iter().zip(&rz).map(|(a, b)| a * b).sum();
        for i in 0..k {
            rdz[i] = pz[i] * (rz[i] - mean_rz);
        }
        let mut dz = pz.clone();
        dz[y] -= 1.0;
        dh.iter_mut().for_each(|e| *e = 0.0);
        rdh.iter_mut().for_each(|e| *e = 0.0);
        for (i, &c) in head.iter().enumerate() {
            let row = &w2[c * d.hidden..(c + 1) * d.hidden];
            let vrow = &v2[c * d.hidden..(c + 1) * d.hidden];
            let orow = &mut ow2[c * d.hidden..(c + 1) * d.hidden];
            for j in 0..d.hidden {
                orow[j] += rdz[i] * h[j] + dz[i] * rh[j];
                dh[j] += dz[i] * row[j];
                rdh[j] += vrow[j] * dz[i] + row[j] * rdz[i];
            }
            ob2[c] += rdz[i];
        }
        for j in 0..d.hidden {
            let s1 = h[j] * (1.0 - h[j]);
            let s2 = s1 * (1.0 - 2.0 * h[j]);
            let rda = rdh[j] * s1 + dh[j] * s2 * ra[j];
            let orow = &mut ow1[j * d.input..(j + 1) * d.input];
            for (o, xv) in orow.iter_mut().zip(x.iter()) {
                *o += rda * xv;
            }
            ob1[j] += rda;
        }
    }
    let n = xs.len() as f64;
    out.iter_mut().for_each(|g| *g /= n);
}

/// Mean loss only.
pub fn loss(p: &[f64], d: Dims, xs: &[&[f64]], ys: &[usize], head: Option<&[usize]>) -> f64 {
    let mut g = vec![0.0; p.len()];
    loss_and_grad(p, d, xs, ys, head, &mut g).loss
}
