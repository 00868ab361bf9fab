//! One-hidden-layer tanh encoder with L2-normalised output.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `h = normalize(W2 tanh(W1 x + b1) + b2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// hidden × input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// output × hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Array2<f64>,
    pub norms: Array1<f64>,
    pub out: Array2<f64>,
}

/// Rows `0..a`, columns `0..b` of a random orthogonal `max(a,b)` square matrix,
/// scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(a: usize, b: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let n = a.max(b);
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        loop {
            let mut v: Array1<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            // two Gram-Schmidt passes for stability
            for _ in 0..2 {
                for i in 0..j {
                    let qi = q.column(i);
                    let p = qi.dot(&v);
                    v.scaled_add(-p, &qi);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                q.column_mut(j).assign(&(v / norm));
                break;
            }
        }
    }
    q.slice(ndarray::s![..a, ..b]).mapv(|v| v * gain)
}

impl EncoderParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((output, hidden)),
            b2: Array1::zeros(output),
        }
    }

    /// Orthogonal weights (scaled by the two gains) and zero biases.
    pub fn orthogonal_init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        gain1: f64,
        gain2: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: orthogonal(hidden, input, gain1, rng),
            b1: Array1::zeros(hidden),
            w2: orthogonal(output, hidden, gain2, rng),
            b2: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.w1.dim() == other.w1.dim()
            && self.b1.dim() == other.b1.dim()
            && self.w2.dim() == other.w2.dim()
            && self.b2.dim() == other.b2.dim()
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Forward> {
        if x.ncols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} columns, encoder expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut hidden = x.dot(&self.w1.t()) + &self.b1;
        hidden.mapv_inplace(f64::tanh);
        let mut out = hidden.dot(&self.w2.t()) + &self.b2;
        let mut norms = Array1::zeros(out.nrows());
        for (i, mut r) in out.rows_mut().into_iter().enumerate() {
            let n = r.dot(&r).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidState(format!(
                    "encoder output row {i} has norm {n}"
                )));
            }
            r.mapv_inplace(|v| v / n);
            norms[i] = n;
        }
        Ok(Forward { hidden, norms, out })
    }

    /// Unit-norm outputs only.
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.out)
    }

    /// Parameter gradients given `grad_out = ∂L/∂h` for the normalised
    /// outputs of [`EncoderParams::forward`] on `x`.
    pub fn backward(&self, x: &Array2<f64>, fw: &Forward, grad_out: &Array2<f64>) -> Self {
        // through the normalisation: (g − h (h·g)) / ‖z‖
        let mut gz = grad_out.clone();
        for ((mut g, h), &n) in gz.rows_mut().into_iter().zip(fw.out.rows()).zip(&fw.norms) {
            let p = h.dot(&g);
            Zip::from(&mut g)
                .and(&h)
                .for_each(|g, &h| *g = (*g - h * p) / n);
        }
        let w2 = gz.t().dot(&fw.hidden);
        let b2 = gz.sum_axis(Axis(0));
        let mut ga = gz.dot(&self.w2);
        Zip::from(&mut ga)
            .and(&fw.hidden)
            .for_each(|g, &a| *g *= 1.0 - a * a);
        let w1 = ga.t().dot(x);
        let b1 = ga.sum_axis(Axis(0));
        Self { w1, b1, w2, b2 }
    }

    pub fn norm_sq(&self) -> f64 {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .map(|v| v * v)
            .sum()
    }

    pub fn scale(&mut self, a: f64) {
        self.w1 *= a;
        self.b1 *= a;
        self.w2 *= a;
        self.b2 *= a;
    }

    /// `self ← m·self + (1 − m)·other`.
    pub fn ema_from(&mut self, other: &Self, m: f64) {
        let mix = |a: &mut f64, &b: &f64| *a = m * *a + (1.0 - m) * b;
        Zip::from(&mut self.w1).and(&other.w1).for_each(mix);
        Zip::from(&mut self.b1).and(&other.b1).for_each(mix);
        Zip::from(&mut self.w2).and(&other.w2).for_each(mix);
        Zip::from(&mut self.b2).and(&other.b2).for_each(mix);
    }

    /// All parameters in the order w1, b1, w2, b2 (row-major).
    pub fn to_vec(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .copied()
            .collect()
    }

    /// Inverse of [`EncoderParams::to_vec`] for a template of the same shape.
    pub fn from_vec_like(template: &Self, v: &[f64]) -> Result<Self> {
        let mut out = template.clone();
        let n = out.to_vec().len();
        if v.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} parameters, got {}",
                v.len()
            )));
        }
        let mut it = v.iter().copied();
        for p in out
            .w1
            .iter_mut()
            .chain(out.b1.iter_mut())
            .chain(out.w2.iter_mut())
            .chain(out.b2.iter_mut())
        {
            *p = it.next().expect("length checked");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn orthogonal_columns() {
        let mut rng = stream(3, "t");
        let q = orthogonal(6, 4, 1.0, &mut rng);
        let g = q.t().dot(&q);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn outputs_are_unit_norm() {
        let mut rng = stream(1, "t");
        let e = EncoderParams::orthogonal_init(5, 7, 3, 0.5, 1.0, &mut rng);
        let x = Array2::from_shape_fn((9, 5), |(i, j)| (i as f64 - 4.0) * 0.3 + j as f64 * 0.1);
        let h = e.encode(&x).unwrap();
        for r in h.rows() {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_half() {
        let mut a = EncoderParams::zeros(2, 2, 2);
        let mut b = a.clone();
        b.w1.fill(2.0);
        a.ema_from(&b, 0.5);
        assert!(a.w1.iter().all(|&v| v == 1.0));
        a.ema_from(&b, 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn vec_round_trip() {
        let mut rng = stream(2, "t");
        let e = EncoderParams::orthogonal_init(3, 4, 2, 1.0, 1.0, &mut rng);
        let back = EncoderParams::from_vec_like(&e, &e.to_vec()).unwrap();
        assert_eq!(back, e);
    }
}
