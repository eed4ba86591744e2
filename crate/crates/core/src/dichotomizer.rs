//! RBF-kernel soft-margin SVM trained by sequential minimal optimization,
//! emitting signed hyperplane distances.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::StandardScaler;
use crate::dichotomy::{DissimilaritySample, Label};
use crate::error::{Error, Result};
use crate::evaluation::user_threshold_eer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub gamma: f64,
    pub c: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || self.c <= 0.0 {
            return Err(Error::Config("kernel params require gamma > 0 and C > 0".into()));
        }
        Ok(())
    }
}

/// Standard hyperparameter grids: 7 C values and 8 gamma values.
pub fn default_c_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0]
}

pub fn default_gamma_grid() -> Vec<f64> {
    vec![2f64.powi(-11), 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0]
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub tol: f64,
    pub max_passes: usize,
    pub seed: u64,
    /// Kernel rows kept in the LRU cache.
    pub cache_rows: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            tol: 1e-3,
            max_passes: 20_000,
            seed: 0,
            cache_rows: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomizerModel {
    pub support_vectors: Vec<Vec<f64>>,
    /// alpha_i * y_i for each support vector.
    pub dual_coefficients: Vec<f64>,
    pub bias: f64,
    pub params: KernelParams,
    /// The scaler fitted on the training dissimilarity set; reused verbatim
    /// for every query, including transfer to foreign datasets.
    pub scaler: StandardScaler,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

impl DichotomizerModel {
    pub fn dims(&self) -> usize {
        self.scaler.dims()
    }

    /// Signed distance to the hyperplane; positive side = genuine side.
    /// Expects `u` already standardized.
    pub fn decision_value(&self, u: &[f64]) -> Result<f64> {
        if !self.support_vectors.is_empty() && u.len() != self.support_vectors[0].len() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors[0].len(),
                actual: u.len(),
            });
        }
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            f += coef * rbf(self.params.gamma, sv, u);
        }
        Ok(f)
    }

    /// Scales a raw dissimilarity vector with the training scaler, then
    /// scores it.
    pub fn score_raw(&self, u: &[f64]) -> Result<f64> {
        self.decision_value(&self.scaler.transform(u)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Model {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Model {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::Model {
                path: path.display().to_string(),
                message: format!("unsupported model format version {}", file.version),
            });
        }
        Ok(file.model)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: DichotomizerModel,
}

/// Solver state exposed for diagnostics and oracle comparison.
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    /// One alpha per training sample, training order.
    pub alpha: Vec<f64>,
    pub passes: usize,
    /// Dual objective sum(alpha) - 1/2 sum alpha_i alpha_j y_i y_j K_ij.
    pub objective: f64,
    /// Max KKT violation over training points at exit.
    pub kkt_residual: f64,
}

struct RowCache {
    capacity: usize,
    rows: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
}

impl RowCache {
    fn new(capacity: usize) -> Self {
        RowCache {
            capacity: capacity.max(2),
            rows: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn get(&mut self, i: usize, x: &[Vec<f64>], gamma: f64) -> Vec<f64> {
        if let Some(row) = self.rows.get(&i) {
            return row.clone();
        }
        let row: Vec<f64> = x.iter().map(|xj| rbf(gamma, &x[i], xj)).collect();
        if self.rows.len() >= self.capacity {
            while let Some(old) = self.order.pop_front() {
                if self.rows.remove(&old).is_some() {
                    break;
                }
            }
        }
        self.rows.insert(i, row.clone());
        self.order.push_back(i);
        row
    }
}

struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: Vec<f64>,
    c: f64,
    gamma: f64,
    tol: f64,
    alpha: Vec<f64>,
    bias: f64,
    errors: Vec<f64>,
    cache: RowCache,
    rng: ChaCha8Rng,
}

const STEP_EPS: f64 = 1e-12;

impl<'a> Smo<'a> {
    fn new(x: &'a [Vec<f64>], y: Vec<f64>, params: &KernelParams, opts: &TrainOptions) -> Self {
        let n = x.len();
        let errors = y.iter().map(|yi| -yi).collect();
        Smo {
            x,
            y,
            c: params.c,
            gamma: params.gamma,
            tol: opts.tol,
            alpha: vec![0.0; n],
            bias: 0.0,
            errors,
            cache: RowCache::new(opts.cache_rows),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
        }
    }

    fn is_free(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.errors[i1], self.errors[i2]);
        let s = y1 * y2;
        let (low, high) = if (y1 - y2).abs() > 0.5 {
            ((a2_old - a1_old).max(0.0), (self.c + a2_old - a1_old).min(self.c))
        } else {
            ((a1_old + a2_old - self.c).max(0.0), (a1_old + a2_old).min(self.c))
        };
        if low >= high {
            return false;
        }
        let row1 = self.cache.get(i1, self.x, self.gamma);
        let row2 = self.cache.get(i2, self.x, self.gamma);
        let (k11, k12, k22) = (row1[i1], row1[i2], row2[i2]);
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(low, high)
        } else {
            // flat direction: evaluate the objective at both clip bounds
            let f1 = y1 * e1 - a1_old * k11 - s * a2_old * k12;
            let f2 = y2 * e2 - s * a1_old * k12 - a2_old * k22;
            let l1 = a1_old + s * (a2_old - low);
            let h1 = a1_old + s * (a2_old - high);
            let lobj = l1 * f1 + low * f2
                + 0.5 * l1 * l1 * k11
                + 0.5 * low * low * k22
                + s * low * l1 * k12;
            let hobj = h1 * f1 + high * f2
                + 0.5 * h1 * h1 * k11
                + 0.5 * high * high * k22
                + s * high * h1 * k12;
            if lobj < hobj - STEP_EPS {
                low
            } else if lobj > hobj + STEP_EPS {
                high
            } else {
                a2_old
            }
        };
        if a2 < STEP_EPS {
            a2 = 0.0;
        } else if a2 > self.c - STEP_EPS {
            a2 = self.c;
        }
        if (a2 - a2_old).abs() < STEP_EPS * (a2 + a2_old + STEP_EPS) {
            return false;
        }
        let a1 = a1_old + s * (a2_old - a2);
        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);

        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let new_bias = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = new_bias - self.bias;
        for j in 0..self.x.len() {
            self.errors[j] += d1 * row1[j] + d2 * row2[j] + db;
        }
        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        self.bias = new_bias;
        true
    }

    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.errors[i2];
        let r2 = e2 * y2;
        if !((r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0)) {
            return false;
        }
        let non_bound: Vec<usize> = (0..self.x.len()).filter(|&i| self.is_free(i)).collect();
        if non_bound.len() > 1 {
            // second-choice heuristic: maximize |E1 - E2|
            let i1 = non_bound
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    (self.errors[a] - e2)
                        .abs()
                        .total_cmp(&(self.errors[b] - e2).abs())
                })
                .expect("non-empty");
            if self.take_step(i1, i2) {
                return true;
            }
        }
        if !non_bound.is_empty() {
            let start = self.rng.gen_range(0..non_bound.len());
            for off in 0..non_bound.len() {
                let i1 = non_bound[(start + off) % non_bound.len()];
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let n = self.x.len();
        let start = self.rng.gen_range(0..n);
        for off in 0..n {
            let i1 = (start + off) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }

    fn kkt_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.x.len() {
            let yf = self.y[i] * (self.errors[i] + self.y[i]);
            let v = if self.alpha[i] <= 0.0 {
                (1.0 - yf).max(0.0)
            } else if self.alpha[i] >= self.c {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    fn objective(&mut self) -> f64 {
        let mut obj: f64 = self.alpha.iter().sum();
        let live: Vec<usize> = (0..self.x.len()).filter(|&i| self.alpha[i] > 0.0).collect();
        for &i in &live {
            for &j in &live {
                obj -= 0.5
                    * self.alpha[i]
                    * self.alpha[j]
                    * self.y[i]
                    * self.y[j]
                    * rbf(self.gamma, &self.x[i], &self.x[j]);
            }
        }
        obj
    }
}

/// Trains the dichotomizer on already standardized vectors. The scaler that
/// produced them is embedded in the model for later reuse.
pub fn train(
    vectors: &[Vec<f64>],
    labels: &[Label],
    params: &KernelParams,
    opts: &TrainOptions,
    scaler: StandardScaler,
) -> Result<DichotomizerModel> {
    train_detailed(vectors, labels, params, opts, scaler).map(|(m, _)| m)
}

pub fn train_detailed(
    vectors: &[Vec<f64>],
    labels: &[Label],
    params: &KernelParams,
    opts: &TrainOptions,
    scaler: StandardScaler,
) -> Result<(DichotomizerModel, TrainDiagnostics)> {
    params.validate()?;
    if vectors.is_empty() {
        return Err(Error::EmptyInput("train requires samples"));
    }
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: vectors.len(),
            actual: labels.len(),
        });
    }
    if opts.tol <= 0.0 {
        return Err(Error::Config("tol must be positive".into()));
    }
    let has_pos = labels.iter().any(|&l| l == Label::Positive);
    let has_neg = labels.iter().any(|&l| l == Label::Negative);
    if !has_pos || !has_neg {
        return Err(Error::SingleClass);
    }
    let y: Vec<f64> = labels
        .iter()
        .map(|l| if *l == Label::Positive { 1.0 } else { -1.0 })
        .collect();

    let mut smo = Smo::new(vectors, y, params, opts);
    let n = vectors.len();
    let mut passes = 0usize;
    let mut examine_all = true;
    let mut num_changed = 1usize;
    while num_changed > 0 || examine_all {
        passes += 1;
        if passes > opts.max_passes {
            return Err(Error::NonConvergence {
                max_passes: opts.max_passes,
                residual: smo.kkt_residual(),
            });
        }
        num_changed = 0;
        for i in 0..n {
            if examine_all || smo.is_free(i) {
                if smo.examine(i) {
                    num_changed += 1;
                }
            }
        }
        if examine_all {
            examine_all = false;
        } else if num_changed == 0 {
            examine_all = true;
        }
    }

    // Recompute the bias from the KKT conditions: free support vectors pin
    // it exactly (averaged for numerical robustness); when every multiplier
    // sits on the box, any value inside [b_lo, b_hi] certifies optimality
    // and the midpoint is used. The running SMO bias can drift outside that
    // interval on degenerate problems.
    let f0: Vec<f64> = (0..n)
        .map(|i| {
            let mut f = 0.0;
            for j in 0..n {
                if smo.alpha[j] > 0.0 {
                    f += smo.alpha[j] * smo.y[j] * rbf(params.gamma, &vectors[j], &vectors[i]);
                }
            }
            f
        })
        .collect();
    // Multipliers can land within rounding error of a box bound; treating
    // those as free would poison the bias average with bound targets.
    let bound_eps = smo.c * 1e-9;
    let at_lower = |a: f64| a <= bound_eps;
    let at_upper = |a: f64| a >= smo.c - bound_eps;
    let free: Vec<usize> = (0..n)
        .filter(|&i| !at_lower(smo.alpha[i]) && !at_upper(smo.alpha[i]))
        .collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&i| smo.y[i] - f0[i]).sum::<f64>() / free.len() as f64
    } else {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..n {
            // b making this point's margin exactly 1.
            let target = smo.y[i] - f0[i];
            if (smo.y[i] > 0.0) == at_upper(smo.alpha[i]) {
                hi = hi.min(target);
            } else {
                lo = lo.max(target);
            }
        }
        if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            smo.bias
        }
    };
    let kkt_residual = (0..n)
        .map(|i| {
            let yf = smo.y[i] * (f0[i] + bias);
            if at_lower(smo.alpha[i]) {
                (1.0 - yf).max(0.0)
            } else if at_upper(smo.alpha[i]) {
                (yf - 1.0).max(0.0)
            } else {
                (yf - 1.0).abs()
            }
        })
        .fold(0.0, f64::max);

    let mut support_vectors = Vec::new();
    let mut dual_coefficients = Vec::new();
    for i in 0..n {
        if smo.alpha[i] > 0.0 {
            support_vectors.push(vectors[i].clone());
            dual_coefficients.push(smo.alpha[i] * smo.y[i]);
        }
    }
    let diagnostics = TrainDiagnostics {
        objective: smo.objective(),
        kkt_residual,
        alpha: smo.alpha,
        passes,
    };
    let model = DichotomizerModel {
        support_vectors,
        dual_coefficients,
        bias,
        params: *params,
        scaler,
    };
    Ok((model, diagnostics))
}

/// Selects the (C, gamma) pair minimizing validation EER; ties resolve to
/// the smaller C, then the smaller gamma. Train and validation sets must be
/// disjoint and already standardized by the same scaler.
pub fn grid_search(
    train_set: &[DissimilaritySample],
    validation: &[DissimilaritySample],
    c_grid: &[f64],
    gamma_grid: &[f64],
    opts: &TrainOptions,
) -> Result<KernelParams> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::EmptyInput("grid_search requires non-empty grids"));
    }
    let vectors: Vec<Vec<f64>> = train_set.iter().map(|s| s.u.clone()).collect();
    let labels: Vec<Label> = train_set.iter().map(|s| s.label).collect();
    let dims = vectors.first().map(|v| v.len()).unwrap_or(0);
    let mut cs = c_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    let mut gammas = gamma_grid.to_vec();
    gammas.sort_by(f64::total_cmp);

    let mut best: Option<(f64, KernelParams)> = None;
    for &c in &cs {
        for &gamma in &gammas {
            let params = KernelParams { gamma, c };
            let model = train(&vectors, &labels, &params, opts, StandardScaler::identity(dims))?;
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            for s in validation {
                let score = model.decision_value(&s.u)?;
                match s.label {
                    Label::Positive => pos.push(score),
                    Label::Negative => neg.push(score),
                }
            }
            let (_, eer) = user_threshold_eer(&pos, &neg)?;
            if best.as_ref().map_or(true, |(b, _)| eer < *b) {
                best = Some((eer, params));
            }
        }
    }
    Ok(best.expect("grids non-empty").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::QueryKind;
    use rand::Rng;

    fn smoke_opts() -> TrainOptions {
        TrainOptions {
            tol: 1e-6,
            ..TrainOptions::default()
        }
    }

    fn labels(y: &[i32]) -> Vec<Label> {
        y.iter()
            .map(|&v| if v > 0 { Label::Positive } else { Label::Negative })
            .collect()
    }

    #[test]
    fn two_point_problem_matches_closed_form() {
        // one point per class: alpha1 = alpha2 = min(C, 1/(1 - K12)),
        // boundary through the midpoint in kernel geometry.
        let x = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let params = KernelParams { gamma: 0.25, c: 10.0 };
        let (model, diag) =
            train_detailed(&x, &labels(&[1, -1]), &params, &smoke_opts(), StandardScaler::identity(2))
                .unwrap();
        let k12 = (-0.25f64 * 4.0).exp();
        let expected_alpha = 1.0 / (1.0 - k12);
        assert!((diag.alpha[0] - expected_alpha).abs() < 1e-6, "alpha {:?}", diag.alpha);
        assert!((diag.alpha[1] - expected_alpha).abs() < 1e-6);
        let f0 = model.decision_value(&x[0]).unwrap();
        let f1 = model.decision_value(&x[1]).unwrap();
        assert!(f0 > 0.0 && f1 < 0.0);
        assert!((f0 - 1.0).abs() < 1e-6);
        assert!((f1 + 1.0).abs() < 1e-6);
        // midpoint scores zero by symmetry
        let mid = model.decision_value(&[1.0, 0.0]).unwrap();
        assert!(mid.abs() < 1e-9, "midpoint {mid}");
    }

    #[test]
    fn xor_all_support_vectors_classified() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = labels(&[1, 1, -1, -1]);
        let params = KernelParams { gamma: 1.0, c: 10.0 };
        let (model, diag) =
            train_detailed(&x, &y, &params, &smoke_opts(), StandardScaler::identity(2)).unwrap();
        assert_eq!(model.support_vectors.len(), 4);
        for (xi, yi) in x.iter().zip(&y) {
            let f = model.decision_value(xi).unwrap();
            let sign = if *yi == Label::Positive { 1.0 } else { -1.0 };
            assert!(f * sign > 0.0, "misclassified {xi:?}: f = {f}");
        }
        assert!(diag.kkt_residual <= 1e-6);
    }

    #[test]
    fn dual_feasibility_and_kkt_on_random_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..60 {
            let pos = rng.gen_bool(0.5);
            let base = if pos { 0.0 } else { 1.5 };
            x.push(vec![base + rng.gen_range(-1.0..1.0), base + rng.gen_range(-1.0..1.0)]);
            y.push(if pos { Label::Positive } else { Label::Negative });
        }
        let params = KernelParams { gamma: 0.5, c: 1.0 };
        let opts = TrainOptions { tol: 1e-4, ..TrainOptions::default() };
        let (model, diag) =
            train_detailed(&x, &y, &params, &opts, StandardScaler::identity(2)).unwrap();
        for &a in &diag.alpha {
            assert!((-1e-12..=params.c + 1e-12).contains(&a));
        }
        let sum: f64 = model.dual_coefficients.iter().sum();
        assert!(sum.abs() < 1e-6, "sum of dual coefficients {sum}");
        assert!(diag.kkt_residual <= opts.tol * 1.01, "residual {}", diag.kkt_residual);
        // margin condition on a free support vector
        if let Some(i) = (0..x.len()).find(|&i| diag.alpha[i] > 1e-6 && diag.alpha[i] < params.c - 1e-6)
        {
            let f = model.decision_value(&x[i]).unwrap();
            assert!((f.abs() - 1.0).abs() <= 2.0 * opts.tol, "free SV margin {f}");
        }
    }

    #[test]
    fn prediction_deterministic_and_continuous() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = labels(&[1, 1, -1, -1]);
        let params = KernelParams { gamma: 1.0, c: 5.0 };
        let model = train(&x, &y, &params, &smoke_opts(), StandardScaler::identity(1)).unwrap();
        let a = model.decision_value(&[1.3]).unwrap();
        let b = model.decision_value(&[1.3]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());

        // Lipschitz bound of the RBF expansion: |f(u+e) - f(u)| <= sum|coef| * sqrt(2 gamma / e) * |e|
        let l: f64 = model.dual_coefficients.iter().map(|c| c.abs()).sum::<f64>()
            * (2.0 * params.gamma / std::f64::consts::E).sqrt();
        let eps = 1e-4;
        for u in [0.2, 1.1, 2.7] {
            let df = (model.decision_value(&[u + eps]).unwrap() - model.decision_value(&[u]).unwrap()).abs();
            assert!(df <= l * eps * 1.001, "df {df} exceeds bound {}", l * eps);
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        let err = train(
            &x,
            &labels(&[1, 1]),
            &KernelParams { gamma: 1.0, c: 1.0 },
            &TrainOptions::default(),
            StandardScaler::identity(1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingleClass));
    }

    #[test]
    fn nonconvergence_carries_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            x.push(vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            y.push(if i % 2 == 0 { Label::Positive } else { Label::Negative });
        }
        let opts = TrainOptions { tol: 1e-10, max_passes: 1, ..TrainOptions::default() };
        let err = train(&x, &y, &KernelParams { gamma: 1.0, c: 100.0 }, &opts, StandardScaler::identity(2))
            .unwrap_err();
        match err {
            Error::NonConvergence { residual, .. } => assert!(residual > 0.0),
            other => panic!("unexpected error {other}"),
        }
    }

    fn val_samples(xs: &[(f64, Label)]) -> Vec<DissimilaritySample> {
        xs.iter()
            .map(|(v, l)| DissimilaritySample {
                u: vec![*v],
                label: *l,
                query_kind: QueryKind::Genuine,
                query_ref: (0, 0),
                reference_ref: (0, 0),
            })
            .collect()
    }

    #[test]
    fn grid_search_single_pair_and_ties() {
        let train_set = val_samples(&[
            (0.0, Label::Positive),
            (0.2, Label::Positive),
            (2.0, Label::Negative),
            (2.2, Label::Negative),
        ]);
        let validation = val_samples(&[(0.1, Label::Positive), (2.1, Label::Negative)]);
        let opts = TrainOptions::default();
        let p = grid_search(&train_set, &validation, &[0.5], &[0.25], &opts).unwrap();
        assert_eq!((p.c, p.gamma), (0.5, 0.25));
        // separable validation: every candidate reaches EER 0, smallest pair wins
        let p = grid_search(&train_set, &validation, &[2.0, 1.0], &[0.5, 0.25], &opts).unwrap();
        assert_eq!((p.c, p.gamma), (1.0, 0.25));
        assert!(grid_search(&train_set, &validation, &[], &[1.0], &opts).is_err());
    }

    #[test]
    fn default_grids_have_56_pairs() {
        assert_eq!(default_c_grid().len() * default_gamma_grid().len(), 56);
    }

    #[test]
    fn model_round_trips_through_file() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let params = KernelParams { gamma: 1.0, c: 1.0 };
        let model = train(&x, &labels(&[1, -1]), &params, &smoke_opts(), StandardScaler::identity(2))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = DichotomizerModel::load(&path).unwrap();
        assert_eq!(model, back);
    }
}
