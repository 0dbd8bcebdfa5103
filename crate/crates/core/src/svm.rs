//! Soft-margin kernel SVM trained with Platt's sequential minimal
//! optimization, lifted to multiclass by one-vs-rest.
//!
//! The decision function is `f(x) = Σ αᵢyᵢK(xᵢ, x) + b`. Training keeps an
//! error cache `Eᵢ = f(xᵢ) − yᵢ` for every point and picks the second
//! multiplier by the largest `|E₁ − E₂|` among unbound points, falling back
//! to scans that start at a seeded random offset.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hurdat2::StatusCode;
use crate::labels::{argmax, LabelSet};
use crate::matrix::{check_dim, dot, squared_distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => (-gamma * squared_distance(a, b)).exp(),
        }
    }
}

/// Kernel as configured; an RBF without `gamma` uses `1 / (d · var(X))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear,
    Rbf {
        #[serde(default)]
        gamma: Option<f64>,
    },
}

impl KernelSpec {
    pub fn resolve(&self, x: &Matrix) -> Kernel {
        match *self {
            KernelSpec::Linear => Kernel::Linear,
            KernelSpec::Rbf { gamma: Some(gamma) } => Kernel::Rbf { gamma },
            KernelSpec::Rbf { gamma: None } => {
                let n = (x.rows() * x.cols()) as f64;
                let mean = x.iter_rows().flatten().sum::<f64>() / n;
                let var = x.iter_rows().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let gamma = if var > 0.0 { 1.0 / (x.cols() as f64 * var) } else { 1.0 };
                Kernel::Rbf { gamma }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    pub tol: f64,
    /// Upper bound on outer SMO sweeps.
    pub max_passes: usize,
    pub seed: u64,
    /// Kernel row cache budget per binary machine.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            kernel: KernelSpec::Rbf { gamma: None },
            tol: 1e-3,
            max_passes: 500,
            seed: 42,
            cache_mb: 256,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidConfig(format!("svm C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) || self.max_passes == 0 {
            return Err(Error::InvalidConfig("svm tol and max_passes must be positive".into()));
        }
        if let KernelSpec::Rbf { gamma: Some(g) } = self.kernel {
            if !(g > 0.0) {
                return Err(Error::InvalidConfig("rbf gamma must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub kernel: Kernel,
    pub c: f64,
    pub tol: f64,
    pub support_vectors: Matrix,
    /// `αᵢ·yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
}

/// Full solver output, including every multiplier.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub model: BinarySvm,
    pub alpha: Vec<f64>,
    pub converged: bool,
    pub passes: usize,
}

struct KernelRows<'a> {
    x: &'a Matrix,
    kernel: Kernel,
    rows: Vec<Option<Arc<Vec<f64>>>>,
    fifo: VecDeque<usize>,
    capacity: usize,
}

impl KernelRows<'_> {
    fn row(&mut self, i: usize) -> Arc<Vec<f64>> {
        if let Some(r) = &self.rows[i] {
            return Arc::clone(r);
        }
        let xi = self.x.row(i);
        let r: Arc<Vec<f64>> = Arc::new(self.x.iter_rows().map(|xj| self.kernel.eval(xi, xj)).collect());
        if self.fifo.len() >= self.capacity {
            if let Some(old) = self.fifo.pop_front() {
                self.rows[old] = None;
            }
        }
        self.fifo.push_back(i);
        self.rows[i] = Some(Arc::clone(&r));
        r
    }
}

struct Smo<'a> {
    y: &'a [f64],
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    errors: Vec<f64>,
    bias: f64,
    kernel: KernelRows<'a>,
    diag: Vec<f64>,
    rng: ChaCha8Rng,
}

const ALPHA_EPS: f64 = 1e-12;

impl Smo<'_> {
    fn is_unbound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (self.c + a2 - a1).min(self.c))
        } else {
            ((a1 + a2 - self.c).max(0.0), (a1 + a2).min(self.c))
        };
        if hi - lo <= ALPHA_EPS {
            return false;
        }
        let row1 = self.kernel.row(i1);
        let row2 = self.kernel.row(i2);
        let (k11, k12, k22) = (self.diag[i1], row1[i2], self.diag[i2]);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2_new = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Objective at the segment ends; pick the better one.
            let f1 = y1 * e1 - a1 * k11 - s * a2 * k12;
            let f2 = y2 * e2 - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj = |a1x: f64, a2x: f64| {
                a1x * f1 + a2x * f2 + 0.5 * a1x * a1x * k11 + 0.5 * a2x * a2x * k22 + s * a1x * a2x * k12
            };
            let (lobj, hobj) = (obj(l1, lo), obj(h1, hi));
            if lobj < hobj - ALPHA_EPS {
                lo
            } else if lobj > hobj + ALPHA_EPS {
                hi
            } else {
                a2
            }
        };
        if a2_new < ALPHA_EPS {
            a2_new = 0.0;
        } else if a2_new > self.c - ALPHA_EPS {
            a2_new = self.c;
        }
        if (a2_new - a2).abs() < ALPHA_EPS * (a2 + a2_new + ALPHA_EPS) {
            return false;
        }
        let mut a1_new = a1 + s * (a2 - a2_new);
        if a1_new < ALPHA_EPS {
            a1_new = 0.0;
        } else if a1_new > self.c - ALPHA_EPS {
            a1_new = self.c;
        }
        let (d1, d2) = (y1 * (a1_new - a1), y2 * (a2_new - a2));
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let b_new = if a1_new > 0.0 && a1_new < self.c {
            b1
        } else if a2_new > 0.0 && a2_new < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = b_new - self.bias;
        for (k, e) in self.errors.iter_mut().enumerate() {
            *e += d1 * row1[k] + d2 * row2[k] + db;
        }
        self.alpha[i1] = a1_new;
        self.alpha[i2] = a2_new;
        self.bias = b_new;
        true
    }

    fn violates_kkt(&self, i: usize) -> bool {
        let r = self.errors[i] * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates_kkt(i2) {
            return false;
        }
        let n = self.y.len();
        let e2 = self.errors[i2];
        let mut best: Option<(usize, f64)> = None;
        let mut unbound = 0;
        for i in 0..n {
            if self.is_unbound(i) {
                unbound += 1;
                let gap = (self.errors[i] - e2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if unbound > 1 {
            if let Some((i1, _)) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let start = self.rng.random_range(0..n);
        for k in 0..n {
            let i1 = (start + k) % n;
            if self.is_unbound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        let start = self.rng.random_range(0..n);
        for k in 0..n {
            if self.take_step((start + k) % n, i2) {
                return true;
            }
        }
        false
    }
}

/// Trains one binary machine. `y` holds ±1 labels.
pub fn train_binary(x: &Matrix, y: &[f64], kernel: Kernel, config: &SvmConfig) -> Result<SmoSolution> {
    config.validate()?;
    check_dim(x.rows(), y.len())?;
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidConfig("binary svm labels must be -1 or +1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::InsufficientData("binary svm needs both classes present".into()));
    }
    let n = x.rows();
    let capacity = ((config.cache_mb << 20) / (n * 8).max(1)).max(2);
    let diag = x.iter_rows().map(|r| kernel.eval(r, r)).collect();
    let mut smo = Smo {
        y,
        c: config.c,
        tol: config.tol,
        alpha: vec![0.0; n],
        errors: y.iter().map(|v| -v).collect(),
        bias: 0.0,
        kernel: KernelRows {
            x,
            kernel,
            rows: vec![None; n],
            fifo: VecDeque::new(),
            capacity,
        },
        diag,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };

    let mut examine_all = true;
    let mut passes = 0;
    let mut converged = false;
    while passes < config.max_passes {
        passes += 1;
        let mut changed = 0;
        for i in 0..n {
            if (examine_all || smo.is_unbound(i)) && smo.examine(i) {
                changed += 1;
            }
        }
        if examine_all {
            if changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {passes} passes without meeting tol {}", config.tol);
    }

    let support: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > 0.0).collect();
    let sv_rows: Vec<&[f64]> = support.iter().map(|&i| x.row(i)).collect();
    let support_vectors = if sv_rows.is_empty() {
        Matrix::zeros(0, x.cols())
    } else {
        Matrix::from_rows(&sv_rows)?
    };
    let model = BinarySvm {
        kernel,
        c: config.c,
        tol: config.tol,
        support_vectors,
        dual_coef: support.iter().map(|&i| smo.alpha[i] * y[i]).collect(),
        bias: smo.bias,
    };
    Ok(SmoSolution {
        model,
        alpha: smo.alpha,
        converged,
        passes,
    })
}

pub fn fit_binary(x: &Matrix, y: &[f64], kernel: Kernel, config: &SvmConfig) -> Result<BinarySvm> {
    train_binary(x, y, kernel, config).map(|s| s.model)
}

impl BinarySvm {
    pub fn n_features(&self) -> usize {
        self.support_vectors.cols()
    }

    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features(), x.len())?;
        Ok(self.decision_unchecked(x))
    }

    fn decision_unchecked(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter_rows()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }
}

pub fn decision(model: &BinarySvm, x: &[f64]) -> Result<f64> {
    model.decision(x)
}

/// Dual objective `Σα − ½ΣΣ αᵢαⱼyᵢyⱼK(xᵢ, xⱼ)`.
pub fn dual_objective(x: &Matrix, y: &[f64], alpha: &[f64], kernel: Kernel) -> f64 {
    let n = x.rows();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval(x.row(i), x.row(j));
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvrSvm {
    pub classes: LabelSet,
    pub machines: Vec<BinarySvm>,
    pub n_features: usize,
}

/// One machine per class, each separating that class from the rest.
pub fn fit_ovr(x: &Matrix, labels: &[usize], classes: LabelSet, config: &SvmConfig) -> Result<OvrSvm> {
    config.validate()?;
    check_dim(x.rows(), labels.len())?;
    if classes.len() < 2 {
        return Err(Error::InsufficientData("one-vs-rest needs at least 2 classes".into()));
    }
    for (k, class) in classes.classes().iter().enumerate() {
        if !labels.contains(&k) {
            return Err(Error::InsufficientData(format!("class {class} absent from training data")));
        }
    }
    let kernel = config.kernel.resolve(x);
    let machines = (0..classes.len())
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
            let cfg = SvmConfig {
                seed: config.seed.wrapping_add(k as u64),
                ..*config
            };
            fit_binary(x, &y, kernel, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OvrSvm {
        classes,
        machines,
        n_features: x.cols(),
    })
}

impl OvrSvm {
    pub fn decisions(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_features, x.len())?;
        Ok(self.machines.iter().map(|m| m.decision_unchecked(x)).collect())
    }

    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.decisions(x)?))
    }
}

pub fn predict_ovr(model: &OvrSvm, x: &[f64]) -> Result<StatusCode> {
    Ok(model.classes.get(model.predict_index(x)?).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tight() -> SvmConfig {
        SvmConfig {
            tol: 1e-6,
            max_passes: 10_000,
            ..SvmConfig::default()
        }
    }

    #[test]
    fn two_point_max_margin() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let y = [-1.0, 1.0];
        let sol = train_binary(&x, &y, Kernel::Linear, &tight()).unwrap();
        let m = &sol.model;
        assert!((m.decision(&[1.0, 0.0]).unwrap()).abs() < 1e-9, "separator midway");
        assert!((m.decision(&[0.0, 0.0]).unwrap() + 1.0).abs() < 1e-6);
        assert!((m.decision(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-6);
        // |w| = 1 so the margin 2/|w| equals the distance between the points
        let w0: f64 = m.support_vectors.iter_rows().zip(&m.dual_coef).map(|(r, c)| c * r[0]).sum();
        assert!((2.0 / w0 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn xor_rbf() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let y = [1.0, 1.0, -1.0, -1.0];
        let cfg = SvmConfig { c: 10.0, ..tight() };
        let m = fit_binary(&x, &y, Kernel::Rbf { gamma: 1.0 }, &cfg).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert!(m.decision(x.row(i)).unwrap() * yi > 0.0);
        }
    }

    #[test]
    fn label_flip_flips_sign() {
        let x = Matrix::from_rows(&[[0.0], [0.5], [2.0], [3.0]]).unwrap();
        let y = [-1.0, -1.0, 1.0, 1.0];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let a = fit_binary(&x, &y, Kernel::Linear, &tight()).unwrap();
        let b = fit_binary(&x, &neg, Kernel::Linear, &tight()).unwrap();
        for p in [[-1.0], [1.0], [4.0]] {
            assert!((a.decision(&p).unwrap() + b.decision(&p).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_gamma_is_nearly_constant() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let y = [-1.0, -1.0, 1.0, 1.0];
        let m = fit_binary(&x, &y, Kernel::Rbf { gamma: 1e-8 }, &SvmConfig::default()).unwrap();
        let lo = m.decision(&[-5.0]).unwrap();
        let hi = m.decision(&[8.0]).unwrap();
        let spread = (hi - lo).abs();
        assert!(spread < 1e-4 * m.c * 4.0 * 13.0 * 13.0, "spread {spread}");
    }

    #[test]
    fn errors() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(fit_binary(&x, &[1.0, 1.0], Kernel::Linear, &SvmConfig::default()).is_err());
        let bad = SvmConfig { c: 0.0, ..SvmConfig::default() };
        assert!(fit_binary(&x, &[1.0, -1.0], Kernel::Linear, &bad).is_err());
        let m = fit_binary(&x, &[1.0, -1.0], Kernel::Linear, &SvmConfig::default()).unwrap();
        assert!(m.decision(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn ovr_two_class_matches_binary_sign() {
        let x = Matrix::from_rows(&[[0.0], [0.5], [2.0], [3.0], [0.2], [2.5]]).unwrap();
        let labels = [0, 0, 1, 1, 0, 1];
        let classes = LabelSet::new(vec![StatusCode::HU, StatusCode::TS]);
        let ovr = fit_ovr(&x, &labels, classes, &SvmConfig::default()).unwrap();
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let kernel = SvmConfig::default().kernel.resolve(&x);
        let cfg = SvmConfig { seed: 43, ..SvmConfig::default() };
        let bin = fit_binary(&x, &y, kernel, &cfg).unwrap();
        for p in [[-1.0], [1.0], [1.3], [4.0]] {
            let expected = if bin.decision(&p).unwrap() > 0.0 { StatusCode::TS } else { StatusCode::HU };
            assert_eq!(predict_ovr(&ovr, &p).unwrap(), expected, "{p:?}");
        }
        assert!(fit_ovr(&x, &[0; 6], LabelSet::new(vec![StatusCode::HU, StatusCode::TS]), &SvmConfig::default()).is_err());
    }
}
