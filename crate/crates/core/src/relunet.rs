//! Bias-free deep ReLU network under squared loss, split into the last layer
//! `x = vec(W_Λ)` and the earlier layers `u = (vec(W_1), …, vec(W_{Λ−1}))`.
//!
//! Layers: `F_0 = X`, `F_ℓ = relu(F_{ℓ−1} W_ℓ)` for `ℓ < Λ`, and the linear
//! output `F_Λ = F_{Λ−1} W_Λ`. Loss: `½ ‖F_Λ − Y‖_F²`. Vectorization is
//! row-major throughout.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{
    gaussian_matrix, matmul, matmul_tr, min_norm_solve, svd, tr_matmul, LinalgError, Matrix, Rng,
    Vector,
};
use crate::objective::{ObjectiveConstants, ObjectiveError, PartitionedObjective};
use crate::optim::{IterTrace, Method, OptConfig, OptError, TraceBuilder};

/// Training data and layer widths `d_0, …, d_Λ`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReluNet {
    pub widths: Vec<usize>,
    pub x_data: Matrix,
    pub y_data: Matrix,
}

impl ReluNet {
    pub fn new(widths: Vec<usize>, x_data: Matrix, y_data: Matrix) -> Result<Self, ObjectiveError> {
        if widths.len() < 3 {
            return Err(ObjectiveError::InvalidConstants(
                "a network needs depth at least 2".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(ObjectiveError::InvalidConstants(
                "layer widths must be positive".into(),
            ));
        }
        let n = x_data.rows();
        if n == 0
            || x_data.cols() != widths[0]
            || y_data.rows() != n
            || y_data.cols() != *widths.last().unwrap()
        {
            return Err(LinalgError::DimensionMismatch {
                op: "relu net data",
                left: x_data.shape(),
                right: y_data.shape(),
            }
            .into());
        }
        Ok(ReluNet {
            widths,
            x_data,
            y_data,
        })
    }

    /// `Λ`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn samples(&self) -> usize {
        self.x_data.rows()
    }

    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    /// `(d1, d2)`: parameters in the last layer and in all earlier layers.
    pub fn split_dims(&self) -> (usize, usize) {
        let depth = self.depth();
        let d1 = self.widths[depth - 1] * self.widths[depth];
        let d2 = (0..depth - 1)
            .map(|l| self.widths[l] * self.widths[l + 1])
            .sum();
        (d1, d2)
    }

    fn check_weights(&self, weights: &[Matrix]) {
        assert_eq!(weights.len(), self.depth(), "wrong number of layers");
        for (l, w) in weights.iter().enumerate() {
            assert_eq!(
                w.shape(),
                self.layer_shape(l),
                "layer {l} has the wrong shape"
            );
        }
    }

    /// Layer outputs `F_0, …, F_Λ`.
    pub fn forward(&self, weights: &[Matrix]) -> Vec<Matrix> {
        self.check_weights(weights);
        let depth = self.depth();
        let mut outs = Vec::with_capacity(depth + 1);
        outs.push(self.x_data.clone());
        for (l, w) in weights.iter().enumerate() {
            let pre = matmul(outs.last().unwrap(), w).expect("shapes checked");
            outs.push(if l + 1 < depth {
                pre.map(|z| z.max(0.0))
            } else {
                pre
            });
        }
        outs
    }

    pub fn mse_loss(&self, weights: &[Matrix]) -> f64 {
        let out = self.forward(weights);
        0.5 * out[self.depth()].sub(&self.y_data).frobenius_norm().powi(2)
    }

    /// Loss and `∂L/∂W_ℓ` for every layer, with `relu'(0) = 0`.
    pub fn backprop(&self, weights: &[Matrix]) -> (f64, Vec<Matrix>) {
        let outs = self.forward(weights);
        let depth = self.depth();
        let resid = outs[depth].sub(&self.y_data);
        let loss = 0.5 * resid.frobenius_norm().powi(2);
        let mut grads: Vec<Matrix> = Vec::with_capacity(depth);
        let mut delta = resid;
        for l in (0..depth).rev() {
            if l + 1 < depth {
                // F_{l+1} = relu(pre) is positive exactly where pre is.
                let f = &outs[l + 1];
                for (d, &a) in delta.as_mut_slice().iter_mut().zip(f.as_slice()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            grads.push(tr_matmul(&outs[l], &delta).expect("shapes checked"));
            if l > 0 {
                delta = matmul_tr(&delta, &weights[l]).expect("shapes checked");
            }
        }
        grads.reverse();
        (loss, grads)
    }

    /// `(x, u)` from per-layer weights.
    pub fn flatten(&self, weights: &[Matrix]) -> (Vector, Vector) {
        let depth = self.depth();
        let x = Vector::from_slice(weights[depth - 1].as_slice());
        let mut u = Vec::with_capacity(self.split_dims().1);
        for w in &weights[..depth - 1] {
            u.extend_from_slice(w.as_slice());
        }
        (x, Vector::new(u))
    }

    /// Per-layer weights from `(x, u)`.
    pub fn unflatten(&self, x: &Vector, u: &Vector) -> Vec<Matrix> {
        let depth = self.depth();
        let (d1, d2) = self.split_dims();
        assert_eq!((x.dim(), u.dim()), (d1, d2), "parameter dimensions");
        let mut out = Vec::with_capacity(depth);
        let mut off = 0;
        for l in 0..depth - 1 {
            let (r, c) = self.layer_shape(l);
            out.push(Matrix::from_vec(r, c, u.as_slice()[off..off + r * c].to_vec()).unwrap());
            off += r * c;
        }
        let (r, c) = self.layer_shape(depth - 1);
        out.push(Matrix::from_vec(r, c, x.as_slice().to_vec()).unwrap());
        out
    }
}

/// Gaussian initialization: hidden layers `N(0, 1/d_{ℓ−1})`, last layer
/// `N(0, d_{Λ−1}^{−3/2})`.
pub fn init_scaled_gaussian(rng: &mut Rng, widths: &[usize]) -> Vec<Matrix> {
    assert!(
        widths.len() >= 3,
        "init_scaled_gaussian: depth must be at least 2"
    );
    let depth = widths.len() - 1;
    (0..depth)
        .map(|l| {
            let fan_in = widths[l] as f64;
            let std = if l + 1 < depth {
                fan_in.powf(-0.5)
            } else {
                fan_in.powf(-0.75)
            };
            gaussian_matrix(rng, widths[l], widths[l + 1], std)
        })
        .collect()
}

/// `n` unit-norm inputs in `ℝ^{d0}` with pairwise distances above `1e-3`,
/// and Gaussian targets rescaled so that `‖Y‖_F = √n`.
pub fn make_dataset(
    rng: &mut Rng,
    n: usize,
    d0: usize,
    dl: usize,
) -> Result<(Matrix, Matrix), ObjectiveError> {
    if n == 0 || d0 == 0 || dl == 0 {
        return Err(ObjectiveError::InvalidConstants(
            "dataset dimensions must be positive".into(),
        ));
    }
    for _ in 0..100 {
        let mut x = gaussian_matrix(rng, n, d0, 1.0);
        for i in 0..n {
            let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..d0 {
                x[(i, j)] /= norm;
            }
        }
        let distinct = (0..n).all(|i| {
            (0..i).all(|k| {
                let d2: f64 = x
                    .row(i)
                    .iter()
                    .zip(x.row(k))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() > 1e-3
            })
        });
        if !distinct {
            continue;
        }
        let y = gaussian_matrix(rng, n, dl, 1.0);
        let y = y.scale((n as f64).sqrt() / y.frobenius_norm());
        return Ok((x, y));
    }
    Err(ObjectiveError::InvalidConstants(alloc::format!(
        "could not draw {n} distinct unit rows in dimension {d0}"
    )))
}

/// Constants of the split network objective around an initialization.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetConstants {
    /// Smallest (`n`-th) singular value of `F_{Λ−1}` at initialization.
    pub alpha0: f64,
    /// `λ_ℓ = 2 ‖W_ℓ(0)‖₂`.
    pub lambda: Vec<f64>,
    pub mu: f64,
    pub l1: f64,
    pub l2: f64,
    pub g1: f64,
    pub g2: f64,
    pub r_x: f64,
    pub r_u: f64,
    pub kappa: f64,
}

impl NetConstants {
    pub fn objective_constants(&self) -> Result<ObjectiveConstants, ObjectiveError> {
        ObjectiveConstants::new(
            self.mu, self.l1, self.l2, self.g1, self.g2, self.r_x, self.r_u, 0.0,
        )
    }
}

/// Constants from the initialization:
///
/// ```text
/// μ = α₀²/2,  L₁ = ‖X‖_F² λ²_{1→Λ−1},  L₂ = 1,
/// G₁ = √Λ ‖X‖_F λ_{1→Λ} / min_{ℓ<Λ} λ_ℓ,  G₂ = (2‖X‖_F λ_{1→Λ} + ‖Y‖_F) G₁,
/// R_x = λ_Λ/2,  R_u = ½ min_{ℓ<Λ} λ_ℓ · min{1, α₀ / (2√Λ ‖X‖_F λ_{1→Λ−1})}
/// ```
///
/// where `λ_{i→j} = ∏_{ℓ=i}^{j} λ_ℓ`.
pub fn net_constants(net: &ReluNet, weights0: &[Matrix]) -> Result<NetConstants, ObjectiveError> {
    let depth = net.depth();
    let n = net.samples();
    if net.widths[depth - 1] < n {
        return Err(ObjectiveError::InvalidConstants(alloc::format!(
            "penultimate width {} is below the sample count {n}, so the feature matrix cannot have full row rank",
            net.widths[depth - 1]
        )));
    }
    let outs = net.forward(weights0);
    let alpha0 = svd(&outs[depth - 1])?.sigma_min();
    let mut lambda = Vec::with_capacity(depth);
    for w in weights0 {
        lambda.push(2.0 * svd(w)?.sigma_max());
    }
    let lam_hidden: f64 = lambda[..depth - 1].iter().product();
    let lam_all = lam_hidden * lambda[depth - 1];
    let lam_min = lambda[..depth - 1]
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let xf = net.x_data.frobenius_norm();
    let yf = net.y_data.frobenius_norm();
    let sl = (depth as f64).sqrt();
    let mu = alpha0 * alpha0 / 2.0;
    let l1 = xf * xf * lam_hidden * lam_hidden;
    let g1 = sl * xf * lam_all / lam_min;
    let g2 = (2.0 * xf * lam_all + yf) * g1;
    let r_x = lambda[depth - 1] / 2.0;
    let r_u = 0.5 * lam_min * 1f64.min(alpha0 / (2.0 * sl * xf * lam_hidden));
    Ok(NetConstants {
        alpha0,
        lambda,
        mu,
        l1,
        l2: 1.0,
        g1,
        g2,
        r_x,
        r_u,
        kappa: l1 / mu,
    })
}

/// A [`ReluNet`] viewed as a partitioned objective.
#[derive(Debug, Clone)]
pub struct NetObjective {
    net: ReluNet,
    constants: ObjectiveConstants,
}

impl NetObjective {
    pub fn new(net: ReluNet, constants: ObjectiveConstants) -> Self {
        NetObjective { net, constants }
    }

    pub fn net(&self) -> &ReluNet {
        &self.net
    }
}

impl PartitionedObjective for NetObjective {
    fn dims(&self) -> (usize, usize) {
        self.net.split_dims()
    }

    fn eval(&self, x: &Vector, u: &Vector) -> f64 {
        self.net.mse_loss(&self.net.unflatten(x, u))
    }

    fn grad1(&self, x: &Vector, u: &Vector) -> Vector {
        self.grads(x, u).0
    }

    fn grad2(&self, x: &Vector, u: &Vector) -> Vector {
        self.grads(x, u).1
    }

    fn grads(&self, x: &Vector, u: &Vector) -> (Vector, Vector) {
        let (_, g) = self.net.backprop(&self.net.unflatten(x, u));
        self.net.flatten(&g)
    }

    /// Minimum-norm least-squares last layer `W = Q R^{−T} Y` with
    /// `F_{Λ−1}ᵀ = QR`, which fits the data exactly when `F_{Λ−1}` has full
    /// row rank.
    fn inner_argmin(&self, u: &Vector) -> Result<Vector, ObjectiveError> {
        let depth = self.net.depth();
        let (d1, _) = self.net.split_dims();
        let weights = self.net.unflatten(&Vector::zeros(d1), u);
        let outs = self.net.forward(&weights);
        let w = min_norm_solve(&outs[depth - 1], &self.net.y_data)?;
        Ok(Vector::from_slice(w.as_slice()))
    }

    fn has_inner_argmin(&self) -> bool {
        true
    }

    fn constants(&self) -> ObjectiveConstants {
        self.constants
    }
}

/// Per-layer Nesterov:
/// `W_ℓ(k+1) = Ŵ_ℓ(k) − η ∇_{W_ℓ} L(θ̂(k))`,
/// `Ŵ_ℓ(k+1) = W_ℓ(k+1) + β (W_ℓ(k+1) − W_ℓ(k))`.
///
/// The trace reports the split `x = vec(W_Λ)`, `u = (vec(W_1), …)`. With
/// `cfg.method == Gd` the momentum step is skipped.
pub fn run_nesterov_net(
    net: &ReluNet,
    weights0: &[Matrix],
    cfg: &OptConfig,
) -> Result<IterTrace, OptError> {
    cfg.validate()?;
    net.check_weights(weights0);
    let beta = if cfg.method == Method::Gd {
        0.0
    } else {
        cfg.beta
    };
    let (x0, u0) = net.flatten(weights0);
    let mut tb = TraceBuilder::new(cfg, 0.0, &x0, &u0);
    let mut w: Vec<Matrix> = weights0.to_vec();
    let mut what: Vec<Matrix> = weights0.to_vec();
    let (_, mut grads) = net.backprop(&what);
    let loss = net.mse_loss(&w);
    let (g1, g2) = grad_norms(&grads);
    if tb.push(cfg, 0, loss, g1, g2, &x0, &u0, &x0, &u0, None)? {
        return Ok(tb.finish());
    }
    let (mut x, mut u) = (x0, u0);
    for k in 0..cfg.max_iters {
        let mut w_new = Vec::with_capacity(w.len());
        for (l, g) in grads.iter().enumerate() {
            let mut next = what[l].clone();
            for (a, &b) in next.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += -cfg.eta * b;
            }
            if beta == 0.0 {
                what[l] = next.clone();
            } else {
                let mut ext = next.clone();
                for ((e, &n), &o) in ext
                    .as_mut_slice()
                    .iter_mut()
                    .zip(next.as_slice())
                    .zip(w[l].as_slice())
                {
                    *e += beta * (n - o);
                }
                what[l] = ext;
            }
            w_new.push(next);
        }
        w = w_new;
        (_, grads) = net.backprop(&what);
        let loss = net.mse_loss(&w);
        let (g1, g2) = grad_norms(&grads);
        let (x_new, u_new) = net.flatten(&w);
        let (y, v) = net.flatten(&what);
        let x_prev = core::mem::replace(&mut x, x_new);
        let u_prev = core::mem::replace(&mut u, u_new);
        if tb.push(
            cfg,
            k + 1,
            loss,
            g1,
            g2,
            &x,
            &u,
            &y,
            &v,
            Some((&x_prev, &u_prev)),
        )? {
            break;
        }
    }
    Ok(tb.finish())
}

fn grad_norms(grads: &[Matrix]) -> (f64, f64) {
    let (last, rest) = grads.split_last().expect("at least one layer");
    let g1 = Vector::from_slice(last.as_slice()).norm();
    let g2 = Vector::new(
        rest.iter()
            .flat_map(|g| g.as_slice().iter().copied())
            .collect(),
    )
    .norm();
    (g1, g2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::fd_grad;
    use crate::optim::{run_gd, run_nesterov};
    use crate::oracles::relu_net_outputs;
    use alloc::vec;

    fn small_net(seed: u64, widths: Vec<usize>) -> (ReluNet, Vec<Matrix>) {
        let mut rng = Rng::new(seed);
        let (x, y) = make_dataset(&mut rng, 5, widths[0], *widths.last().unwrap()).unwrap();
        let net = ReluNet::new(widths.clone(), x, y).unwrap();
        let w = init_scaled_gaussian(&mut rng, &widths);
        (net, w)
    }

    #[test]
    fn relu_is_inert_on_nonnegative_inputs() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [0.5, 0.0]]);
        let net = ReluNet::new(vec![2, 2, 2], x.clone(), Matrix::zeros(2, 2)).unwrap();
        let w = vec![Matrix::identity(2), Matrix::identity(2)];
        assert_eq!(net.forward(&w)[2], x);
        let zero = vec![Matrix::zeros(2, 2), Matrix::identity(2)];
        assert_eq!(net.forward(&zero)[2].max_abs(), 0.0);
    }

    #[test]
    fn forward_matches_oracle() {
        let (net, w) = small_net(3, vec![3, 7, 6, 2]);
        let a = net.forward(&w);
        let b = relu_net_outputs(&net.x_data, &w);
        for (p, q) in a.iter().zip(&b) {
            assert!(p.sub(q).max_abs() <= 1e-14);
        }
    }

    #[test]
    fn loss_examples() {
        let y = Matrix::from_rows(&[[2.0], [0.0]]);
        let net = ReluNet::new(vec![1, 1, 1], Matrix::from_rows(&[[1.0], [1.0]]), y).unwrap();
        let w = vec![Matrix::identity(1), Matrix::zeros(1, 1)];
        assert_eq!(net.mse_loss(&w), 2.0);
        let fit = ReluNet::new(
            vec![1, 1, 1],
            Matrix::from_rows(&[[1.0]]),
            Matrix::from_rows(&[[3.0]]),
        )
        .unwrap();
        let w = vec![Matrix::identity(1), Matrix::from_rows(&[[3.0]])];
        assert_eq!(fit.mse_loss(&w), 0.0);
        assert!(fit.backprop(&w).1.iter().all(|g| g.max_abs() == 0.0));
    }

    #[test]
    fn last_layer_gradient_closed_form() {
        let (net, w) = small_net(4, vec![3, 8, 2]);
        let (_, g) = net.backprop(&w);
        let f = &net.forward(&w)[1];
        let expected = tr_matmul(f, &matmul(f, &w[1]).unwrap().sub(&net.y_data)).unwrap();
        assert!(g[1].sub(&expected).max_abs() <= 1e-14);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (net, w) = small_net(5, vec![3, 6, 5, 2]);
        let c = ObjectiveConstants::new(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let obj = NetObjective::new(net.clone(), c);
        let (x, u) = net.flatten(&w);
        let (fd1, fd2) = fd_grad(&obj, &x, &u, 1e-6);
        let (g1, g2) = obj.grads(&x, &u);
        assert!(fd1.dist(&g1) <= 1e-5 * (1.0 + g1.norm()));
        assert!(fd2.dist(&g2) <= 1e-5 * (1.0 + g2.norm()));
    }

    #[test]
    fn flatten_roundtrip() {
        let (net, w) = small_net(6, vec![2, 4, 3, 1]);
        let (x, u) = net.flatten(&w);
        assert_eq!(net.split_dims(), (3, 8 + 12));
        assert_eq!(net.unflatten(&x, &u), w);
    }

    #[test]
    fn init_scales() {
        let mut rng = Rng::new(8);
        let w = init_scaled_gaussian(&mut rng, &[16, 200, 100, 50]);
        let std = |m: &Matrix| {
            let n = m.as_slice().len() as f64;
            (m.as_slice().iter().map(|v| v * v).sum::<f64>() / n).sqrt()
        };
        assert!((std(&w[0]) / 16f64.powf(-0.5) - 1.0).abs() < 0.05);
        assert!((std(&w[1]) / 200f64.powf(-0.5) - 1.0).abs() < 0.05);
        assert!((std(&w[2]) / 100f64.powf(-0.75) - 1.0).abs() < 0.05);
    }

    #[test]
    fn dataset_properties() {
        let mut rng = Rng::new(1);
        let (x, y) = make_dataset(&mut rng, 16, 8, 1).unwrap();
        assert!((x.frobenius_norm() - 4.0).abs() < 1e-14);
        assert!((y.frobenius_norm() - 4.0).abs() < 1e-14);
        let again = make_dataset(&mut Rng::new(1), 16, 8, 1).unwrap();
        assert_eq!(again, (x, y));
        assert!(make_dataset(&mut Rng::new(1), 3, 1, 1).is_err());
    }

    #[test]
    fn orthonormal_features_give_unit_alpha() {
        // F_1 = relu(X W_1) = X when X, W_1 = I are nonnegative.
        let x = Matrix::identity(2);
        let net = ReluNet::new(vec![2, 2, 1], x, Matrix::from_rows(&[[1.0], [0.0]])).unwrap();
        let w = vec![Matrix::identity(2), Matrix::from_rows(&[[0.5], [0.5]])];
        let nc = net_constants(&net, &w).unwrap();
        assert!((nc.alpha0 - 1.0).abs() < 1e-14);
        assert!((nc.mu - 0.5).abs() < 1e-14);
        assert!((nc.lambda[0] - 2.0).abs() < 1e-14);
        assert!((nc.kappa - 2.0 * nc.l1 / (nc.alpha0 * nc.alpha0)).abs() < 1e-12);
    }

    #[test]
    fn narrow_penultimate_layer_is_rejected() {
        let (net, w) = small_net(2, vec![3, 4, 1]);
        assert!(net_constants(&net, &w).is_err());
    }

    #[test]
    fn inner_argmin_interpolates() {
        let (net, w) = small_net(9, vec![3, 16, 1]);
        let nc = net_constants(&net, &w).unwrap();
        let obj = NetObjective::new(net.clone(), nc.objective_constants().unwrap());
        let (_, u) = net.flatten(&w);
        let xs = obj.inner_argmin(&u).unwrap();
        assert!(obj.eval(&xs, &u) < 1e-20);
    }

    #[test]
    fn per_layer_engine_matches_generic_engine() {
        let (net, w) = small_net(10, vec![3, 8, 8, 1]);
        let c = ObjectiveConstants::new(0.1, 10.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let obj = NetObjective::new(net.clone(), c);
        let (x0, u0) = net.flatten(&w);
        for (method, beta) in [(Method::Nesterov, 0.9), (Method::Gd, 0.0)] {
            let cfg = OptConfig::fixed(method, 0.02, beta, 60).with_store_every(1);
            let a = run_nesterov_net(&net, &w, &cfg).unwrap();
            let b = match method {
                Method::Gd => run_gd(&obj, &x0, &u0, &cfg).unwrap(),
                Method::Nesterov => run_nesterov(&obj, &x0, &u0, &cfg).unwrap(),
            };
            assert_eq!(a.len(), b.len());
            for (ra, rb) in a.records.iter().zip(&b.records) {
                assert!((ra.f - rb.f).abs() <= 1e-13 * (1.0 + rb.f.abs()));
                let (pa, pb) = (ra.point.as_ref().unwrap(), rb.point.as_ref().unwrap());
                assert!(pa.x.dist(&pb.x) <= 1e-13 && pa.u.dist(&pb.u) <= 1e-13);
                assert!(pa.y.dist(&pb.y) <= 1e-13 && pa.v.dist(&pb.v) <= 1e-13);
            }
        }
    }
}
