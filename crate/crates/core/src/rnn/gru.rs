use super::Scalar;
use crate::error::{Error, Result};

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Borrowed parameters of one GRU layer.
///
/// `w` is `3n x input_width` and `u` is `3n x n`, both row-major with gate
/// rows ordered update (z), reset (r), candidate (h); `b` holds `3n` biases.
#[derive(Debug, Clone, Copy)]
pub struct GruLayer<'a, T> {
    pub input_width: usize,
    pub hidden: usize,
    pub w: &'a [T],
    pub u: &'a [T],
    pub b: &'a [T],
}

pub(crate) struct Scratch<T> {
    /// `W x + b` for all three gates.
    pub ax: Vec<T>,
    pub rh: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    pub fn new(n: usize) -> Self {
        Self {
            ax: vec![T::zero(); 3 * n],
            rh: vec![T::zero(); n],
        }
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// One GRU step, writing gates and the new hidden state into the given
/// slices (each of length `n`):
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// hc = tanh(W_h x + U_h (r * h) + b_h)
/// h' = (1 - z) * h + z * hc
/// ```
#[allow(clippy::too_many_arguments)]
pub(crate) fn forward_into<T: Scalar>(
    layer: &GruLayer<'_, T>,
    x: &[T],
    h_prev: &[T],
    scratch: &mut Scratch<T>,
    z: &mut [T],
    r: &mut [T],
    hc: &mut [T],
    h: &mut [T],
) {
    let n = layer.hidden;
    let iw = layer.input_width;
    for (k, ax) in scratch.ax.iter_mut().enumerate() {
        *ax = layer.b[k] + dot(&layer.w[k * iw..(k + 1) * iw], x);
    }
    for j in 0..n {
        z[j] = sigmoid(scratch.ax[j] + dot(&layer.u[j * n..(j + 1) * n], h_prev));
        let k = n + j;
        r[j] = sigmoid(scratch.ax[k] + dot(&layer.u[k * n..(k + 1) * n], h_prev));
        scratch.rh[j] = r[j] * h_prev[j];
    }
    for j in 0..n {
        let k = 2 * n + j;
        hc[j] = (scratch.ax[k] + dot(&layer.u[k * n..(k + 1) * n], &scratch.rh)).tanh();
        h[j] = (T::one() - z[j]) * h_prev[j] + z[j] * hc[j];
    }
}

/// Advance one GRU layer by one step.
pub fn gru_step<T: Scalar>(layer: &GruLayer<'_, T>, x: &[T], h_prev: &[T]) -> Result<Vec<T>> {
    let n = layer.hidden;
    if x.len() != layer.input_width {
        return Err(Error::shape("gru input", layer.input_width, x.len()));
    }
    if h_prev.len() != n {
        return Err(Error::shape("gru hidden state", n, h_prev.len()));
    }
    let expected = [
        (3 * n * layer.input_width, layer.w.len()),
        (3 * n * n, layer.u.len()),
        (3 * n, layer.b.len()),
    ];
    if let Some(&(e, a)) = expected.iter().find(|(e, a)| e != a) {
        return Err(Error::shape("gru parameters", e, a));
    }
    let mut scratch = Scratch::new(n);
    let (mut z, mut r, mut hc, mut h) = (
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
        vec![T::zero(); n],
    );
    forward_into(layer, x, h_prev, &mut scratch, &mut z, &mut r, &mut hc, &mut h);
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_zero_state_stays_zero() {
        let (w, u, b) = (vec![0.0f64; 6 * 3], vec![0.0; 6 * 2], vec![0.0; 6]);
        let layer = GruLayer {
            input_width: 3,
            hidden: 2,
            w: &w,
            u: &u,
            b: &b,
        };
        let h = gru_step(&layer, &[1.0, -2.0, 0.5], &[0.0, 0.0]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn hand_set_two_unit_cell() {
        // input width 1, hidden 2; rows: z0 z1 r0 r1 h0 h1
        let w = [0.5, -0.3, 0.8, 0.1, -0.6, 0.9];
        let u = [
            0.2, -0.1, //
            0.4, 0.3, //
            -0.5, 0.7, //
            0.6, -0.2, //
            0.3, 0.1, //
            -0.4, 0.5,
        ];
        let b = [0.1, 0.0, -0.1, 0.2, 0.05, -0.05];
        let layer = GruLayer {
            input_width: 1,
            hidden: 2,
            w: &w,
            u: &u,
            b: &b,
        };
        let x = 0.7f64;
        let hp = [0.25f64, -0.4];
        let h = gru_step(&layer, &[x], &hp).unwrap();

        // Scalar arithmetic, unit by unit.
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let z0 = s(0.5 * x + 0.2 * hp[0] - 0.1 * hp[1] + 0.1);
        let z1 = s(-0.3 * x + 0.4 * hp[0] + 0.3 * hp[1] + 0.0);
        let r0 = s(0.8 * x - 0.5 * hp[0] + 0.7 * hp[1] - 0.1);
        let r1 = s(0.1 * x + 0.6 * hp[0] - 0.2 * hp[1] + 0.2);
        let (rh0, rh1) = (r0 * hp[0], r1 * hp[1]);
        let c0 = (-0.6 * x + 0.3 * rh0 + 0.1 * rh1 + 0.05).tanh();
        let c1 = (0.9 * x - 0.4 * rh0 + 0.5 * rh1 - 0.05).tanh();
        let h0 = (1.0 - z0) * hp[0] + z0 * c0;
        let h1 = (1.0 - z1) * hp[1] + z1 * c1;
        assert!((h[0] - h0).abs() < 1e-14);
        assert!((h[1] - h1).abs() < 1e-14);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (w, u, b) = (vec![0.0f32; 6], vec![0.0; 12], vec![0.0; 6]);
        let layer = GruLayer {
            input_width: 1,
            hidden: 2,
            w: &w,
            u: &u,
            b: &b,
        };
        assert!(gru_step(&layer, &[0.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(gru_step(&layer, &[0.0], &[0.0]).is_err());
    }
}
