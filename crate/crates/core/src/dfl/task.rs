//! Synthetic learning problems with constants that can be certified.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `F_i(w) = ½‖A_i w − b_i‖² / n_i`, full-batch gradients plus Gaussian noise.
    Quadratic,
    /// Binary logistic loss with mini-batches drawn with replacement.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dim: usize,
    /// Samples per device.
    pub samples: usize,
    /// Spread of the per-device optima around a shared centre.
    pub heterogeneity: f64,
    /// Target noise (quadratic) or label flip probability (logistic).
    #[serde(default)]
    pub label_noise: f64,
    /// Standard deviation σ_l of the Gaussian perturbation added to every
    /// stochastic gradient (split evenly over coordinates).
    #[serde(default)]
    pub grad_noise: f64,
    /// Mini-batch size for the logistic task.
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_batch() -> usize {
    8
}

impl TaskSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.dim == 0 {
            bad.push("task.dim must be positive".into());
        }
        if self.samples == 0 {
            bad.push("task.samples must be positive".into());
        }
        if !(self.heterogeneity >= 0.0) {
            bad.push("task.heterogeneity must be nonnegative".into());
        }
        if !(self.grad_noise >= 0.0) {
            bad.push("task.grad_noise must be nonnegative".into());
        }
        match self.kind {
            TaskKind::Quadratic if !(self.label_noise >= 0.0) => bad.push("task.label_noise must be nonnegative".into()),
            TaskKind::Logistic if !(0.0..0.5).contains(&self.label_noise) => {
                bad.push("task.label_noise must lie in [0, 0.5) for the logistic task".into())
            }
            TaskKind::Logistic if self.batch == 0 => bad.push("task.batch must be positive".into()),
            _ => {}
        }
        bad
    }
}

#[derive(Debug, Clone)]
struct DeviceData {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LearningTask {
    kind: TaskKind,
    dim: usize,
    grad_noise: f64,
    batch: usize,
    devices: Vec<DeviceData>,
    optimum: Option<DVector<f64>>,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| gaussian(rng))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LearningTask {
    /// Draws `m` device datasets from the task stream of `seed`.
    pub fn generate(spec: &TaskSpec, m: usize, seed: u64) -> Result<Self> {
        let bad = spec.validate();
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        if m == 0 {
            return Err(Error::arg("need at least one device"));
        }
        let d = spec.dim;
        let mut rng = stream(seed, Role::Task, 0, 0);
        let centre = gaussian_vec(d, &mut rng);
        let devices: Vec<DeviceData> = (0..m)
            .map(|i| {
                let mut rng = stream(seed, Role::Task, 1, i as u64);
                let target = &centre + gaussian_vec(d, &mut rng) * spec.heterogeneity;
                let x = DMatrix::from_fn(spec.samples, d, |_, _| gaussian(&mut rng));
                let clean = &x * &target;
                let y = match spec.kind {
                    TaskKind::Quadratic => clean.map(|v| v + spec.label_noise * gaussian(&mut rng)),
                    TaskKind::Logistic => clean.map(|v| {
                        let label = rng.random::<f64>() < sigmoid(v);
                        let flip = rng.random::<f64>() < spec.label_noise;
                        f64::from(u8::from(label != flip))
                    }),
                };
                DeviceData { x, y }
            })
            .collect();
        let mut task = LearningTask {
            kind: spec.kind,
            dim: d,
            grad_noise: spec.grad_noise,
            batch: spec.batch,
            devices,
            optimum: None,
        };
        if spec.kind == TaskKind::Quadratic {
            let (h, c) = task.normal_equations();
            let w = h
                .lu()
                .solve(&c)
                .ok_or_else(|| Error::ConstructionFailure("global Hessian is singular; add samples".into()))?;
            task.optimum = Some(w);
        }
        Ok(task)
    }

    /// `(Σ_i H_i / m, Σ_i c_i / m)` with `∇F(w) = H w − c`.
    fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.devices.len() as f64;
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let mut c = DVector::zeros(self.dim);
        for dev in &self.devices {
            let n = dev.x.nrows() as f64;
            h += dev.x.tr_mul(&dev.x) / (n * m);
            c += dev.x.tr_mul(&dev.y) / (n * m);
        }
        (h, c)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.devices.len()
    }

    pub fn grad_noise(&self) -> f64 {
        self.grad_noise
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Closed-form minimizer of the global loss (quadratic task only).
    pub fn optimum(&self) -> Option<&DVector<f64>> {
        self.optimum.as_ref()
    }

    pub fn local_loss(&self, i: usize, w: &DVector<f64>) -> f64 {
        let dev = &self.devices[i];
        let z = &dev.x * w;
        let n = dev.x.nrows() as f64;
        match self.kind {
            TaskKind::Quadratic => 0.5 * (z - &dev.y).norm_squared() / n,
            TaskKind::Logistic => z.iter().zip(dev.y.iter()).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / n,
        }
    }

    pub fn local_grad(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        let dev = &self.devices[i];
        let n = dev.x.nrows() as f64;
        let z = &dev.x * w;
        let r = match self.kind {
            TaskKind::Quadratic => z - &dev.y,
            TaskKind::Logistic => DVector::from_fn(z.len(), |k, _| sigmoid(z[k]) - dev.y[k]),
        };
        dev.x.tr_mul(&r) / n
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        (0..self.m()).map(|i| self.local_loss(i, w)).sum::<f64>() / self.m() as f64
    }

    pub fn grad(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for i in 0..self.m() {
            g += self.local_grad(i, w);
        }
        g / self.m() as f64
    }

    /// `F(w*)` for the quadratic task.
    pub fn optimal_loss(&self) -> Option<f64> {
        self.optimum.as_ref().map(|w| self.loss(w))
    }

    /// One stochastic gradient `∇f_i(w; ξ)`.
    pub fn stochastic_grad<R: Rng + ?Sized>(&self, i: usize, w: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let mut g = match self.kind {
            TaskKind::Quadratic => self.local_grad(i, w),
            TaskKind::Logistic => {
                let dev = &self.devices[i];
                let n = dev.x.nrows();
                let mut g = DVector::zeros(self.dim);
                for _ in 0..self.batch {
                    let k = rng.random_range(0..n);
                    let row = dev.x.row(k);
                    let r = sigmoid(row.dot(&w.transpose())) - dev.y[k];
                    g += row.transpose() * r;
                }
                g / self.batch as f64
            }
        };
        if self.grad_noise > 0.0 {
            let scale = self.grad_noise / (self.dim as f64).sqrt();
            g += gaussian_vec(self.dim, rng) * scale;
        }
        g
    }

    /// Largest smoothness constant over devices.
    pub fn smoothness(&self) -> f64 {
        self.devices
            .iter()
            .map(|dev| {
                let h = dev.x.tr_mul(&dev.x) / dev.x.nrows() as f64;
                let top = SymmetricEigen::new(h).eigenvalues.max();
                match self.kind {
                    TaskKind::Quadratic => top,
                    TaskKind::Logistic => top / 4.0,
                }
            })
            .fold(0.0, f64::max)
    }

    fn local_hessian(&self, i: usize) -> DMatrix<f64> {
        let dev = &self.devices[i];
        dev.x.tr_mul(&dev.x) / dev.x.nrows() as f64
    }

    fn max_row_norm_sq(&self) -> f64 {
        self.devices
            .iter()
            .flat_map(|dev| dev.x.row_iter().map(|r| r.norm_squared()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}

fn spectral_norm(a: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a).eigenvalues.amax()
}

/// Smoothness, variance and gradient bounds together with the step size and
/// local step count they were certified for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConsts {
    pub l: f64,
    pub sigma_l: f64,
    pub sigma_g: f64,
    pub g: f64,
    pub eta: f64,
    pub k_steps: usize,
    /// For the quadratic task: radius of the ball around `w*` on which
    /// `sigma_g` and `g` hold. Infinite when the bounds are global.
    pub radius: f64,
}

impl LearnConsts {
    pub fn c1(&self) -> f64 {
        self.sigma_l.powi(2) + 4.0 * self.k_steps as f64 * self.sigma_g.powi(2)
    }

    /// Step size `√m / (64 L K √T)`.
    pub fn bound_eta(l: f64, m: usize, k_steps: usize, horizon: usize) -> f64 {
        (m as f64).sqrt() / (64.0 * l * k_steps as f64 * (horizon.max(1) as f64).sqrt())
    }

    /// Builds the constants from the task data.
    ///
    /// Logistic bounds are global: per-sample gradients are bounded by the
    /// largest feature norm. Quadratic bounds hold on the ball around `w*`
    /// of radius `safety · max(‖w_init − w*‖, max_i ‖w_i* − w*‖)`, using
    /// `‖∇F_i(w)‖ ≤ ‖H_i‖·‖w − w*‖ + ‖∇F_i(w*)‖`.
    pub fn certify(task: &LearningTask, w_init: &DVector<f64>, k_steps: usize, eta: f64, safety: f64) -> Result<Self> {
        if !(safety >= 1.0) || k_steps == 0 || !(eta >= 0.0) {
            return Err(Error::arg("certification needs safety ≥ 1, K ≥ 1 and η ≥ 0"));
        }
        let l = task.smoothness();
        let noise2 = task.grad_noise().powi(2);
        match task.kind() {
            TaskKind::Logistic => {
                let x2 = task.max_row_norm_sq();
                Ok(LearnConsts {
                    l,
                    sigma_l: (x2 / task.batch() as f64 + noise2).sqrt(),
                    sigma_g: 2.0 * x2.sqrt(),
                    g: (x2 + noise2).sqrt(),
                    eta,
                    k_steps,
                    radius: f64::INFINITY,
                })
            }
            TaskKind::Quadratic => {
                let w_star = task.optimum().expect("quadratic optimum");
                let mut reach = (w_init - w_star).norm();
                for i in 0..task.m() {
                    if let Some(wi) = task.local_hessian(i).lu().solve(&task.local_grad(i, &DVector::zeros(task.dim()))) {
                        // ∇F_i(w) = H_i w − c_i, so w_i* = H_i⁻¹ c_i = −H_i⁻¹ ∇F_i(0).
                        reach = reach.max((-wi - w_star).norm());
                    }
                }
                let radius = safety * reach.max(1e-12);
                let h_bar = (0..task.m()).fold(DMatrix::zeros(task.dim(), task.dim()), |acc, i| acc + task.local_hessian(i))
                    / task.m() as f64;
                let mut g_max: f64 = 0.0;
                let mut gap_max: f64 = 0.0;
                for i in 0..task.m() {
                    let at_star = task.local_grad(i, w_star).norm();
                    let h = task.local_hessian(i);
                    g_max = g_max.max(spectral_norm(h.clone()) * radius + at_star);
                    gap_max = gap_max.max(spectral_norm(h - &h_bar) * radius + at_star);
                }
                Ok(LearnConsts {
                    l,
                    sigma_l: task.grad_noise(),
                    sigma_g: gap_max,
                    g: (g_max * g_max + noise2).sqrt(),
                    eta,
                    k_steps,
                    radius,
                })
            }
        }
    }
}
