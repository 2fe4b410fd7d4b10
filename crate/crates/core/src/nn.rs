//! Small dense-network toolkit with hand-written backward passes: matrices,
//! affine layers, a gated recurrent unit, and SGD/Adam.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Mat {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-scale..=scale)).collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `out += W x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(i), x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_add(x, &mut out);
        out
    }

    /// `out += Wᵀ g`
    pub fn matvec_t_add(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!(g.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 {
                axpy(gi, self.row(i), out);
            }
        }
    }

    /// `W += g xᵀ`
    pub fn outer_add(&mut self, g: &[f64], x: &[f64]) {
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 {
                axpy(gi, x, self.row_mut(i));
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax_inplace(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    x.iter_mut().for_each(|v| *v /= s);
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    softmax_inplace(&mut y);
    y
}

/// Backward through `y = softmax(x)`: returns `dL/dx` given `dL/dy`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let s = dot(y, dy);
    y.iter().zip(dy).map(|(yi, gi)| yi * (gi - s)).collect()
}

pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn scale_all(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    fn add_scaled(&mut self, other: &Self, s: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(s, b, a);
        }
    }
}

impl Parameters for Mat {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.data]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.data]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        Linear {
            w: Mat::uniform(output, input, scale, rng),
            b: vec![0.0; output],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.clone();
        self.w.matvec_add(x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and `Wᵀ dy` into `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear, dx: &mut [f64]) {
        grad.w.outer_add(dy, x);
        axpy(1.0, dy, &mut grad.b);
        self.w.matvec_t_add(dy, dx);
    }
}

impl Parameters for Linear {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w.data, &self.b]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w.data, &mut self.b]
    }
}

/// Gated recurrent unit; gate order in the stacked weights is
/// reset, update, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub hidden: usize,
    pub wx: Mat,
    pub wh: Mat,
    pub bx: Vec<f64>,
    pub bh: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    xs: Vec<Vec<f64>>,
    /// `hs[0]` is the initial state, `hs[t + 1]` follows input `t`.
    pub hs: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    hn: Vec<Vec<f64>>,
}

impl GruCache {
    pub fn last(&self) -> &[f64] {
        self.hs.last().unwrap()
    }
}

impl Gru {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        Gru {
            hidden,
            wx: Mat::uniform(3 * hidden, input, scale, rng),
            wh: Mat::uniform(3 * hidden, hidden, scale, rng),
            bx: vec![0.0; 3 * hidden],
            bh: vec![0.0; 3 * hidden],
        }
    }

    pub fn input_size(&self) -> usize {
        self.wx.cols
    }

    pub fn forward(&self, xs: Vec<Vec<f64>>, h0: Option<Vec<f64>>) -> GruCache {
        let hd = self.hidden;
        let mut cache = GruCache {
            hs: vec![h0.unwrap_or_else(|| vec![0.0; hd])],
            r: Vec::with_capacity(xs.len()),
            z: Vec::with_capacity(xs.len()),
            n: Vec::with_capacity(xs.len()),
            hn: Vec::with_capacity(xs.len()),
            xs: Vec::new(),
        };
        for x in &xs {
            let h = cache.hs.last().unwrap();
            let mut gx = self.bx.clone();
            self.wx.matvec_add(x, &mut gx);
            let mut gh = self.bh.clone();
            self.wh.matvec_add(h, &mut gh);
            let mut r = vec![0.0; hd];
            let mut z = vec![0.0; hd];
            let mut n = vec![0.0; hd];
            let mut next = vec![0.0; hd];
            for k in 0..hd {
                r[k] = sigmoid(gx[k] + gh[k]);
                z[k] = sigmoid(gx[hd + k] + gh[hd + k]);
                n[k] = (gx[2 * hd + k] + r[k] * gh[2 * hd + k]).tanh();
                next[k] = (1.0 - z[k]) * n[k] + z[k] * h[k];
            }
            cache.r.push(r);
            cache.z.push(z);
            cache.n.push(n);
            cache.hn.push(gh[2 * hd..].to_vec());
            cache.hs.push(next);
        }
        cache.xs = xs;
        cache
    }

    /// Backpropagates `dhs[t]` (gradient w.r.t. `hs[t + 1]`) through time.
    /// Returns the gradients w.r.t. each input and the initial state.
    pub fn backward(&self, cache: &GruCache, dhs: &[Vec<f64>], grad: &mut Gru) -> (Vec<Vec<f64>>, Vec<f64>) {
        let hd = self.hidden;
        let steps = cache.xs.len();
        let mut dxs = vec![vec![0.0; self.wx.cols]; steps];
        let mut dh = vec![0.0; hd];
        let mut gx = vec![0.0; 3 * hd];
        let mut gh = vec![0.0; 3 * hd];
        for t in (0..steps).rev() {
            axpy(1.0, &dhs[t], &mut dh);
            let (r, z, n, hn, hprev) = (&cache.r[t], &cache.z[t], &cache.n[t], &cache.hn[t], &cache.hs[t]);
            let mut dprev = vec![0.0; hd];
            for k in 0..hd {
                let dn = dh[k] * (1.0 - z[k]);
                let dz = dh[k] * (hprev[k] - n[k]);
                dprev[k] = dh[k] * z[k];
                let dan = dn * (1.0 - n[k] * n[k]);
                let dr = dan * hn[k];
                let dar = dr * r[k] * (1.0 - r[k]);
                let daz = dz * z[k] * (1.0 - z[k]);
                gx[k] = dar;
                gx[hd + k] = daz;
                gx[2 * hd + k] = dan;
                gh[k] = dar;
                gh[hd + k] = daz;
                gh[2 * hd + k] = dan * r[k];
            }
            grad.wx.outer_add(&gx, &cache.xs[t]);
            axpy(1.0, &gx, &mut grad.bx);
            self.wx.matvec_t_add(&gx, &mut dxs[t]);
            grad.wh.outer_add(&gh, hprev);
            axpy(1.0, &gh, &mut grad.bh);
            self.wh.matvec_t_add(&gh, &mut dprev);
            dh = dprev;
        }
        (dxs, dh)
    }
}

impl Parameters for Gru {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.wx.data, &self.wh.data, &self.bx, &self.bh]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.wx.data, &mut self.wh.data, &mut self.bx, &mut self.bh]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }

    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over a flat list of tensors. Tensor order must be
/// the same on every call.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), m) in params.into_iter().zip(grads).zip(&mut self.m) {
                    if momentum == 0.0 {
                        axpy(-self.lr, g, p);
                    } else {
                        for ((pi, gi), mi) in p.iter_mut().zip(g).zip(m.iter_mut()) {
                            *mi = momentum * *mi + gi;
                            *pi -= self.lr * *mi;
                        }
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    for k in 0..p.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                        p[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Central-difference gradient checking.
pub mod gradcheck {
    use super::Parameters;

    /// Compares `analytic` against five-point central differences of `loss` for every
    /// scalar parameter. Passes when the relative error is within `tol` or
    /// both values are below `abs_floor`.
    pub fn check<P: Parameters + Clone>(
        params: &P,
        analytic: &P,
        loss: impl Fn(&P) -> f64,
        tol: f64,
        abs_floor: f64,
    ) -> Summary {
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        let mut compared = 0;
        let mut total = 0;
        let n_tensors = params.tensors().len();
        for t in 0..n_tensors {
            let len = params.tensors()[t].len();
            for k in 0..len {
                let at = |d: f64| {
                    let mut p = params.clone();
                    p.tensors_mut()[t][k] += d;
                    loss(&p)
                };
                let numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
                let a = analytic.tensors()[t][k];
                let diff = (a - numeric).abs();
                total += 1;
                if a.abs() < abs_floor && numeric.abs() < abs_floor {
                    continue;
                }
                let rel = diff / a.abs().max(numeric.abs());
                worst = worst.max(rel);
                compared += 1;
                assert!(rel <= tol, "tensor {t} index {k}: analytic {a} numeric {numeric} rel {rel}");
            }
        }
        Summary { worst, compared, total }
    }

    /// Outcome of a gradient check.
    #[derive(Debug, Clone, Copy)]
    pub struct Summary {
        /// Largest relative error among compared entries.
        pub worst: f64,
        /// Entries with a value at or above the absolute floor.
        pub compared: usize,
        /// All scalar parameters.
        pub total: usize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[derive(Clone)]
    struct Toy {
        gru: Gru,
        head: Linear,
    }

    impl Parameters for Toy {
        fn tensors(&self) -> Vec<&[f64]> {
            let mut v = self.gru.tensors();
            v.extend(self.head.tensors());
            v
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            let mut v = self.gru.tensors_mut();
            v.extend(self.head.tensors_mut());
            v
        }
    }

    fn xs() -> Vec<Vec<f64>> {
        vec![vec![0.3, -0.2, 0.5], vec![-0.7, 0.1, 0.2], vec![0.05, 0.9, -0.4]]
    }

    fn loss(m: &Toy) -> f64 {
        let c = m.gru.forward(xs(), None);
        let y = m.head.forward(c.last());
        // per-step penalty plus a softmax cross-entropy on the head
        let p = softmax(&y);
        let step: f64 = c.hs[1..].iter().map(|h| h.iter().map(|x| x * x).sum::<f64>()).sum();
        -p[1].ln() + 0.5 * step
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Toy {
            gru: Gru::new(3, 4, &mut rng),
            head: Linear::new(4, 3, &mut rng),
        };
        let c = m.gru.forward(xs(), None);
        let y = m.head.forward(c.last());
        let p = softmax(&y);
        let mut dy = p.clone();
        dy[1] -= 1.0;
        let mut g = m.clone().zero_like();
        let mut dh_last = vec![0.0; 4];
        m.head.backward(c.last(), &dy, &mut g.head, &mut dh_last);
        let mut dhs: Vec<Vec<f64>> = c.hs[1..].to_vec();
        axpy(1.0, &dh_last, dhs.last_mut().unwrap());
        m.gru.backward(&c, &dhs, &mut g.gru);
        gradcheck::check(&m, &g, loss, 1e-4, 1e-9);
    }

    #[test]
    fn softmax_is_normalized_and_shift_invariant() {
        let x = [1.0, 2.0, -3.0, 0.5];
        let a = softmax(&x);
        let b = softmax(&x.map(|v| v + 100.0));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Optimizer::new(OptimizerKind::adam(), 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(vec![&mut p], vec![&g]);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2));
    }
}
