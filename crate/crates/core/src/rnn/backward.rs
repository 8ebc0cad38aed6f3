//! Backpropagation through time for [`Network`].

use super::{msle, msle_grad, Network, Scalar, Trace};
use crate::error::{Error, Result};

/// Gradient of a loss with respect to every parameter, in the network's
/// flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::zero(); len],
        }
    }

    pub fn global_norm(&self) -> T {
        self.values.iter().map(|&g| g * g).sum::<T>().sqrt()
    }
}

#[inline]
fn axpy_outer<T: Scalar>(m: &mut [T], cols: usize, a: &[T], x: &[T]) {
    for (row, &ai) in m.chunks_exact_mut(cols).zip(a) {
        if ai == T::zero() {
            continue;
        }
        for (mij, &xj) in row.iter_mut().zip(x) {
            *mij += ai * xj;
        }
    }
}

/// `out += M^T a` for a row-major `rows x cols` matrix.
#[inline]
fn add_transpose_mul<T: Scalar>(out: &mut [T], m: &[T], cols: usize, a: &[T]) {
    for (row, &ai) in m.chunks_exact(cols).zip(a) {
        if ai == T::zero() {
            continue;
        }
        for (o, &mij) in out.iter_mut().zip(row) {
            *o += mij * ai;
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Gradients of the sequence MSLE with respect to every parameter.
    pub fn backward(&self, trace: &Trace<T>, targets: &[T]) -> Result<(T, Gradients<T>)> {
        let mut grads = Gradients::zeros(self.param_count());
        let loss = self.accumulate_gradients(trace, targets, &mut grads.values, T::one())?;
        Ok((loss, grads))
    }

    /// Add `weight * d(loss)/d(params)` into `grads` and return the
    /// sequence loss. Backpropagates through the whole sequence unless the
    /// configuration sets a truncation window.
    pub fn accumulate_gradients(
        &self,
        trace: &Trace<T>,
        targets: &[T],
        grads: &mut [T],
        weight: T,
    ) -> Result<T> {
        if trace.version != self.version {
            return Err(Error::InvalidInput(
                "stale trace: parameters changed after the forward pass".into(),
            ));
        }
        let ow = self.config.output_width;
        let steps = trace.steps;
        if targets.len() != steps * ow {
            return Err(Error::shape("targets", steps * ow, targets.len()));
        }
        if grads.len() != self.param_count() {
            return Err(Error::shape("gradients", self.param_count(), grads.len()));
        }
        let loss = msle(&trace.outputs, targets)?;

        let n = self.layout.hidden;
        let nl = self.config.hidden_layers;
        let iw = self.config.input_width;
        let scale = weight / T::from_usize(steps * ow).unwrap();
        let window = self.config.bptt_window.unwrap_or(usize::MAX);
        let one = T::one();

        let ro_w = &self.params[self.layout.readout_w.range()];
        let zeros = vec![T::zero(); n];
        // Recurrent gradient flowing into h[l][t-1] from step t.
        let mut carry = vec![vec![T::zero(); n]; nl];
        let mut dh = vec![T::zero(); n];
        let mut dx = vec![T::zero(); n.max(iw)];
        let mut da = vec![T::zero(); 3 * n];
        let mut drh = vec![T::zero(); n];
        let mut rh = vec![T::zero(); n];
        let mut dao = vec![T::zero(); ow];
        let mut dhp_buf = vec![T::zero(); n];

        for t in (0..steps).rev() {
            // Readout.
            let y = &trace.outputs[t * ow..(t + 1) * ow];
            let tgt = &targets[t * ow..(t + 1) * ow];
            for o in 0..ow {
                let dy = msle_grad(y[o], tgt[o], scale);
                dao[o] = dy * y[o] * (one - y[o]);
            }
            let top = &trace.h[nl - 1][t * n..(t + 1) * n];
            {
                let gw = &mut grads[self.layout.readout_w.range()];
                axpy_outer(gw, n, &dao, top);
            }
            for (g, &d) in grads[self.layout.readout_b.range()].iter_mut().zip(&dao) {
                *g += d;
            }
            dh.iter_mut().for_each(|v| *v = T::zero());
            add_transpose_mul(&mut dh, ro_w, n, &dao);

            for l in (0..nl).rev() {
                let ll = &self.layout.layers[l];
                let lw = ll.input_width;
                let w = &self.params[ll.w.range()];
                let u = &self.params[ll.u.range()];
                let span = t * n..(t + 1) * n;
                let (z, r, hc) = (
                    &trace.z[l][span.clone()],
                    &trace.r[l][span.clone()],
                    &trace.hc[l][span],
                );
                let hp: &[T] = if t == 0 {
                    &zeros
                } else {
                    &trace.h[l][(t - 1) * n..t * n]
                };
                let x: &[T] = if l == 0 {
                    &trace.inputs[t * iw..(t + 1) * iw]
                } else {
                    &trace.h[l - 1][t * n..(t + 1) * n]
                };

                let dhp = &mut dhp_buf;
                for j in 0..n {
                    let d = dh[j] + carry[l][j];
                    let dz = d * (hc[j] - hp[j]);
                    let dhc = d * z[j];
                    dhp[j] = d * (one - z[j]);
                    da[j] = dz * z[j] * (one - z[j]);
                    da[2 * n + j] = dhc * (one - hc[j] * hc[j]);
                    rh[j] = r[j] * hp[j];
                }
                // Candidate path through U_h (r * h_prev).
                drh.iter_mut().for_each(|v| *v = T::zero());
                add_transpose_mul(&mut drh, &u[2 * n * n..], n, &da[2 * n..]);
                for j in 0..n {
                    let dr = drh[j] * hp[j];
                    dhp[j] += drh[j] * r[j];
                    da[n + j] = dr * r[j] * (one - r[j]);
                }

                let gw = &mut grads[ll.w.range()];
                axpy_outer(gw, lw, &da, x);
                let gu = &mut grads[ll.u.range()];
                axpy_outer(&mut gu[..2 * n * n], n, &da[..2 * n], hp);
                axpy_outer(&mut gu[2 * n * n..], n, &da[2 * n..], &rh);
                for (g, &d) in grads[ll.b.range()].iter_mut().zip(&da) {
                    *g += d;
                }

                add_transpose_mul(dhp, &u[..2 * n * n], n, &da[..2 * n]);
                carry[l].copy_from_slice(dhp);

                if l > 0 {
                    let dxl = &mut dx[..lw];
                    dxl.iter_mut().for_each(|v| *v = T::zero());
                    add_transpose_mul(dxl, w, lw, &da);
                    dh.copy_from_slice(dxl);
                }
            }

            if t % window == 0 {
                carry.iter_mut().flatten().for_each(|v| *v = T::zero());
            }
        }
        Ok(loss)
    }
}
