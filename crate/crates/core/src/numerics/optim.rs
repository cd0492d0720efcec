use super::matrix::DenseMatrix;

/// Adaptive-moment gradient descent with bias-corrected first and second
/// moment estimates, one accumulator pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) t: u64,
    pub(crate) m: Vec<DenseMatrix>,
    pub(crate) v: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new<'a>(lr: f64, shapes: impl IntoIterator<Item = &'a DenseMatrix>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|p| (DenseMatrix::zeros(p.rows(), p.cols()), DenseMatrix::zeros(p.rows(), p.cols())))
            .unzip();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m,
            v,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. Parameters whose gradient is `None` are left
    /// untouched and their moments are not advanced.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[Option<&DenseMatrix>]) {
        assert_eq!(params.len(), self.m.len(), "Adam parameter count");
        assert_eq!(grads.len(), self.m.len(), "Adam gradient count");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else { continue };
            let m = self.m[i].values_mut();
            let v = self.v[i].values_mut();
            for (((pv, &gv), mv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(m).zip(v) {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    pub fn moments(&self) -> (&[DenseMatrix], &[DenseMatrix]) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore(&mut self, t: u64, m: Vec<DenseMatrix>, v: Vec<DenseMatrix>) {
        self.t = t;
        self.m = m;
        self.v = v;
    }
}
