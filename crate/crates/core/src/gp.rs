//! Exact Gaussian-process regression over 2-D pair features, one independent
//! expert per principle.
//!
//! Outcomes are standardized per expert (heterogeneous outcome scales across
//! tasks), the RBF kernel carries one lengthscale per feature dimension, and
//! hyperparameters are chosen by exhaustive log-space grid search on the log
//! marginal likelihood followed by one coordinate-descent refinement pass.
//! Factorization degeneracies are handled by a bounded jitter ladder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::semantic::PairFeature;

/// Escalation ladder added to the diagonal when factorization fails.
pub const JITTER_LADDER: [f64; 4] = [1e-10, 1e-8, 1e-6, 1e-4];

const LENGTHSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);

/// RBF kernel hyperparameters, in standardized-outcome units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct KernelParams<S: Scalar> {
    /// One lengthscale per feature dimension (dot, distance).
    pub lengthscales: [S; 2],
    pub signal_variance: S,
    /// Observation-noise variance on the kernel diagonal (standardized units).
    pub noise_variance: S,
}

impl<S: Scalar> KernelParams<S> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lengthscales[0],
            self.lengthscales[1],
            self.signal_variance,
            self.noise_variance,
        ];
        if all.iter().any(|v| !v.is_finite() || *v <= S::zero()) {
            return Err(Error::validation(
                "kernel parameters must be strictly positive and finite",
            ));
        }
        Ok(())
    }

    fn kernel(&self, a: &PairFeature<S>, b: &PairFeature<S>) -> S {
        let half = S::from_f64c(0.5);
        let d0 = (a.dot - b.dot) / self.lengthscales[0];
        let d1 = (a.distance - b.distance) / self.lengthscales[1];
        self.signal_variance * (-half * (d0 * d0 + d1 * d1)).exp()
    }
}

/// Fitting configuration. `noise_variance_raw` (observation-noise variance
/// in outcome units) seeds the prior expert's noise and floors the fitted
/// noise: during fitting the noise is a gridded parameter like the rest,
/// but no expert may claim less noise than the apparatus itself carries.
/// An expert whose feature map cannot explain the outcomes is therefore
/// forced to absorb the residual scatter into its fitted noise level
/// instead of memorizing conflicts at microscopic lengthscales.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig<S: Scalar> {
    pub noise_variance_raw: S,
    /// Grid points per parameter over `[grid_lo, grid_hi]` (log-spaced,
    /// relative to data scale).
    pub grid_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    /// Above this training size the full grid is skipped when a warm start
    /// is available; see `fit`.
    pub full_grid_max_n: usize,
    /// With a warm start past `refine_every_below`, run the refinement pass
    /// only every this many points.
    pub refine_stride: usize,
    pub refine_every_below: usize,
}

impl<S: Scalar> FitConfig<S> {
    pub fn new(noise_variance_raw: S) -> Self {
        FitConfig {
            noise_variance_raw,
            grid_points: 7,
            grid_lo: 1e-2,
            grid_hi: 1e2,
            full_grid_max_n: 30,
            refine_stride: 5,
            refine_every_below: 60,
        }
    }
}

/// Posterior prediction, de-standardized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Prediction<S: Scalar> {
    pub mean: S,
    pub variance: S,
}

/// Immutable fitted expert. `fit` produces a new value; refits never mutate.
#[derive(Debug, Clone)]
pub struct GpExpert<S: Scalar> {
    params: KernelParams<S>,
    x: Vec<PairFeature<S>>,
    y_std: Vec<S>,
    out_mean: S,
    out_std: S,
    /// Packed lower-triangular Cholesky factor of K + (noise + jitter) I.
    chol: Vec<S>,
    alpha: Vec<S>,
    jitter: S,
}

pub(crate) fn standardize<S: Scalar>(outcomes: &[S]) -> (S, S) {
    let n = outcomes.len();
    if n == 0 {
        return (S::zero(), S::one());
    }
    let nf = S::from_f64c(n as f64);
    let mean = outcomes.iter().copied().sum::<S>() / nf;
    let var = outcomes
        .iter()
        .map(|y| (*y - mean) * (*y - mean))
        .sum::<S>()
        / nf;
    let std = var.sqrt();
    if std < S::from_f64c(1e-9) {
        (S::zero(), S::one())
    } else {
        (mean, std)
    }
}

/// In-place Cholesky of a packed lower-triangular symmetric matrix.
/// `a[i*(i+1)/2 + j]` holds entry (i, j) for j <= i.
fn cholesky_packed<S: Scalar>(a: &mut [S], n: usize) -> std::result::Result<(), usize> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * (i + 1) / 2 + j];
            for k in 0..j {
                sum = sum - a[i * (i + 1) / 2 + k] * a[j * (j + 1) / 2 + k];
            }
            if i == j {
                if sum <= S::zero() || !sum.is_finite() {
                    return Err(i);
                }
                a[i * (i + 1) / 2 + j] = sum.sqrt();
            } else {
                a[i * (i + 1) / 2 + j] = sum / a[j * (j + 1) / 2 + j];
            }
        }
    }
    Ok(())
}

fn forward_solve<S: Scalar>(l: &[S], n: usize, b: &mut [S]) {
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum = sum - l[i * (i + 1) / 2 + k] * b[k];
        }
        b[i] = sum / l[i * (i + 1) / 2 + i];
    }
}

fn backward_solve<S: Scalar>(l: &[S], n: usize, b: &mut [S]) {
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in (i + 1)..n {
            sum = sum - l[k * (k + 1) / 2 + i] * b[k];
        }
        b[i] = sum / l[i * (i + 1) / 2 + i];
    }
}

/// Inverse of a packed lower-triangular matrix (also packed, lower).
fn invert_lower_packed<S: Scalar>(l: &[S], n: usize) -> Vec<S> {
    let mut inv = vec![S::zero(); n * (n + 1) / 2];
    for j in 0..n {
        inv[j * (j + 1) / 2 + j] = S::one() / l[j * (j + 1) / 2 + j];
        for i in (j + 1)..n {
            let mut sum = S::zero();
            for k in j..i {
                sum = sum - l[i * (i + 1) / 2 + k] * inv[k * (k + 1) / 2 + j];
            }
            inv[i * (i + 1) / 2 + j] = sum / l[i * (i + 1) / 2 + i];
        }
    }
    inv
}

impl<S: Scalar> GpExpert<S> {
    /// Expert with an empty training set: predictions fall back to the prior.
    pub fn prior(params: KernelParams<S>) -> Result<Self> {
        params.validate()?;
        Ok(GpExpert {
            params,
            x: Vec::new(),
            y_std: Vec::new(),
            out_mean: S::zero(),
            out_std: S::one(),
            chol: Vec::new(),
            alpha: Vec::new(),
            jitter: S::zero(),
        })
    }

    /// Fit with fixed hyperparameters. Standardization is recomputed from the
    /// observations, so identical inputs always rebuild the identical expert.
    pub fn fit_with_params(
        observations: &[(PairFeature<S>, S)],
        params: KernelParams<S>,
    ) -> Result<Self> {
        params.validate()?;
        if observations.is_empty() {
            return Self::prior(params);
        }
        for (x, y) in observations {
            if !x.is_finite() {
                return Err(Error::validation("non-finite pair feature"));
            }
            if !y.is_finite() {
                return Err(Error::validation("non-finite outcome"));
            }
        }
        let outcomes: Vec<S> = observations.iter().map(|(_, y)| *y).collect();
        let (out_mean, out_std) = standardize(&outcomes);
        let y_std: Vec<S> = outcomes.iter().map(|y| (*y - out_mean) / out_std).collect();
        let x: Vec<PairFeature<S>> = observations.iter().map(|(f, _)| *f).collect();

        let n = x.len();
        let mut base = vec![S::zero(); n * (n + 1) / 2];
        for i in 0..n {
            for j in 0..=i {
                base[i * (i + 1) / 2 + j] = params.kernel(&x[i], &x[j]);
            }
        }
        let mut last_fail = 0usize;
        for &jit in JITTER_LADDER.iter() {
            let jitter = S::from_f64c(jit);
            let mut k = base.clone();
            for i in 0..n {
                let idx = i * (i + 1) / 2 + i;
                k[idx] = k[idx] + params.noise_variance + jitter;
            }
            match cholesky_packed(&mut k, n) {
                Ok(()) => {
                    let mut alpha = y_std.clone();
                    forward_solve(&k, n, &mut alpha);
                    backward_solve(&k, n, &mut alpha);
                    return Ok(GpExpert {
                        params,
                        x,
                        y_std,
                        out_mean,
                        out_std,
                        chol: k,
                        alpha,
                        jitter,
                    });
                }
                Err(row) => last_fail = row,
            }
        }
        Err(Error::Numerical(format!(
            "kernel factorization failed at row {last_fail} for n={n} after max jitter {:.0e} \
             (lengthscales {:?}, signal {}, noise {})",
            JITTER_LADDER[JITTER_LADDER.len() - 1],
            params.lengthscales.map(|v| v.to_f64c()),
            params.signal_variance,
            params.noise_variance,
        )))
    }

    /// Fit with hyperparameters chosen to maximize the log marginal
    /// likelihood over a fixed log-space grid (7 values per parameter over
    /// [1e-2, 1e2] relative to data scale), followed by one coordinate-descent
    /// refinement pass. Beyond `full_grid_max_n` points a warm start skips the
    /// grid and keeps refining on a stride; this keeps long-horizon refits
    /// tractable while every round still yields a deterministic refit of the
    /// full history.
    pub fn fit(
        observations: &[(PairFeature<S>, S)],
        cfg: &FitConfig<S>,
        warm_start: Option<&KernelParams<S>>,
    ) -> Result<Self> {
        let n = observations.len();
        if n == 0 {
            return Self::prior(KernelParams {
                lengthscales: [S::one(), S::one()],
                signal_variance: S::one(),
                noise_variance: clamp_noise(cfg.noise_variance_raw),
            });
        }
        let outcomes: Vec<S> = observations.iter().map(|(_, y)| *y).collect();
        let (_, out_std) = standardize(&outcomes);
        let noise_floor = clamp_noise(cfg.noise_variance_raw / (out_std * out_std));

        let use_grid = n <= cfg.full_grid_max_n || warm_start.is_none();
        let mut best = if use_grid {
            grid_search(observations, cfg, noise_floor)?
        } else {
            let mut p = *warm_start.expect("warm start present");
            // floors move with the data scale and resolution
            let floors = resolution_floors(observations);
            p.noise_variance = p.noise_variance.max(noise_floor);
            p.lengthscales[0] = clip_lengthscale(p.lengthscales[0], floors[0]);
            p.lengthscales[1] = clip_lengthscale(p.lengthscales[1], floors[1]);
            p
        };
        let refine = use_grid || n <= cfg.refine_every_below || n.is_multiple_of(cfg.refine_stride);
        if refine {
            best = refine_pass(observations, best, noise_floor)?;
        }
        Self::fit_with_params(observations, best)
    }

    pub fn params(&self) -> &KernelParams<S> {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn outcome_mean(&self) -> S {
        self.out_mean
    }

    pub fn outcome_std(&self) -> S {
        self.out_std
    }

    /// Diagonal jitter the factorization settled on.
    pub fn jitter(&self) -> S {
        self.jitter
    }

    /// Exact posterior mean and latent variance at a query point,
    /// de-standardized. Variance excludes observation noise and is clamped
    /// below by 1e-12.
    pub fn predict(&self, x: &PairFeature<S>) -> Result<Prediction<S>> {
        if !x.is_finite() {
            return Err(Error::validation("non-finite pair feature"));
        }
        let n = self.x.len();
        if n == 0 {
            return Ok(Prediction {
                mean: self.out_mean,
                variance: self.params.signal_variance * self.out_std * self.out_std,
            });
        }
        let mut kvec: Vec<S> = self.x.iter().map(|xi| self.params.kernel(x, xi)).collect();
        let mean_std = kvec
            .iter()
            .zip(&self.alpha)
            .map(|(k, a)| *k * *a)
            .sum::<S>();
        forward_solve(&self.chol, n, &mut kvec);
        let explained = kvec.iter().map(|v| *v * *v).sum::<S>();
        let var_std = self.params.signal_variance - explained;
        let mean = self.out_mean + mean_std * self.out_std;
        let variance = (var_std * self.out_std * self.out_std).max(S::from_f64c(1e-12));
        Ok(Prediction { mean, variance })
    }

    /// Log density of outcome `y` under the predictive at `x` with
    /// observation noise added: N(y; mu(x), var(x) + obs_noise_variance).
    pub fn log_likelihood_of(&self, x: &PairFeature<S>, y: S, obs_noise_variance: S) -> Result<S> {
        if obs_noise_variance <= S::zero() {
            return Err(Error::validation("observation noise variance must be > 0"));
        }
        if !y.is_finite() {
            return Err(Error::validation("non-finite outcome"));
        }
        let p = self.predict(x)?;
        let v = p.variance + obs_noise_variance;
        let r = y - p.mean;
        let half = S::from_f64c(0.5);
        Ok(-half * (S::ln_2pi() + v.ln()) - r * r / (S::from_f64c(2.0) * v))
    }

    /// Exact leave-one-out predictive log-density of each training outcome:
    /// the density of y_i under the posterior given every other training
    /// point (Rasmussen & Williams 5.4.2), de-standardized. Unlike the
    /// in-sample density at a training point, this cannot be inflated by
    /// interpolating noise, so it is what the belief update accumulates.
    pub fn loo_log_likelihoods(&self) -> Result<Vec<S>> {
        let n = self.x.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        // Q = (K + (noise + jitter) I)^{-1}; Q_ii from the inverse Cholesky
        // factor, Q y is the existing alpha vector.
        let linv = invert_lower_packed(&self.chol, n);
        let half = S::from_f64c(0.5);
        let s2 = self.out_std * self.out_std;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            // Q_ii = sum_k (L^-1)_{ki}^2 over k >= i
            let mut qii = S::zero();
            for k in i..n {
                let v = linv[k * (k + 1) / 2 + i];
                qii = qii + v * v;
            }
            if qii <= S::zero() || !qii.is_finite() {
                return Err(Error::Numerical("degenerate LOO variance".to_string()));
            }
            let var = s2 / qii; // de-standardized predictive variance
            let resid = self.out_std * self.alpha[i] / qii; // y_i - mu_{-i}
            out.push(-half * (S::ln_2pi() + var.ln()) - resid * resid / (S::from_f64c(2.0) * var));
        }
        Ok(out)
    }

    /// Exact log marginal likelihood of the standardized outcomes under the
    /// current hyperparameters.
    pub fn log_marginal_likelihood(&self) -> Result<S> {
        let n = self.x.len();
        if n == 0 {
            return Err(Error::validation(
                "log marginal likelihood needs a nonempty training set",
            ));
        }
        let half = S::from_f64c(0.5);
        let fit_term = self
            .y_std
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| *y * *a)
            .sum::<S>();
        let logdet = (0..n)
            .map(|i| self.chol[i * (i + 1) / 2 + i].ln())
            .sum::<S>();
        Ok(-half * fit_term - logdet - half * S::from_f64c(n as f64) * S::ln_2pi())
    }
}

fn clamp_noise<S: Scalar>(v: S) -> S {
    v.max(S::from_f64c(1e-10))
}

fn clip_lengthscale<S: Scalar>(v: S, floor: S) -> S {
    v.max(S::from_f64c(LENGTHSCALE_BOUNDS.0))
        .max(floor)
        .min(S::from_f64c(LENGTHSCALE_BOUNDS.1))
}

fn dim_values<S: Scalar>(observations: &[(PairFeature<S>, S)], dim: usize) -> Vec<S> {
    observations
        .iter()
        .map(|(f, _)| if dim == 0 { f.dot } else { f.distance })
        .collect()
}

fn feature_scales<S: Scalar>(observations: &[(PairFeature<S>, S)]) -> [S; 2] {
    let n = observations.len();
    let nf = S::from_f64c(n as f64);
    let mut scales = [S::one(); 2];
    for (dim, scale) in scales.iter_mut().enumerate() {
        let vals = dim_values(observations, dim);
        let mean = vals.iter().copied().sum::<S>() / nf;
        let var = vals.iter().map(|v| (*v - mean) * (*v - mean)).sum::<S>() / nf;
        let std = var.sqrt();
        *scale = if std < S::from_f64c(1e-12) {
            S::one()
        } else {
            std
        };
    }
    scales
}

/// Lengthscales are only identifiable down to the sampling resolution:
/// below the nearest-neighbor spacing the marginal likelihood develops
/// degenerate interpolation maxima that memorize conflicting outcomes and
/// break posterior discrimination. Floor each dimension's lengthscale at
/// twice the median nearest-neighbor gap of its observed values.
fn resolution_floors<S: Scalar>(observations: &[(PairFeature<S>, S)]) -> [S; 2] {
    let mut floors = [S::zero(); 2];
    for (dim, floor) in floors.iter_mut().enumerate() {
        let mut vals = dim_values(observations, dim);
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mut gaps: Vec<S> = vals
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|g| *g > S::zero())
            .collect();
        if gaps.is_empty() {
            continue;
        }
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        *floor = S::from_f64c(2.0) * gaps[gaps.len() / 2];
    }
    floors
}

/// Marginal likelihood of `observations` at fixed `params`; -inf when the
/// factorization fails at every jitter level so grid search skips the point.
fn lml_at<S: Scalar>(observations: &[(PairFeature<S>, S)], params: KernelParams<S>) -> S {
    match GpExpert::fit_with_params(observations, params) {
        Ok(e) => e.log_marginal_likelihood().unwrap_or(S::neg_infinity()),
        Err(_) => S::neg_infinity(),
    }
}

/// Exhaustive grid over all four kernel parameters: lengthscales relative to
/// the per-dimension feature spread, signal and noise variance relative to
/// the (unit) standardized outcome variance. The correlation matrix is cached
/// per lengthscale pair so the inner two loops only rescale and refactorize.
fn grid_search<S: Scalar>(
    observations: &[(PairFeature<S>, S)],
    cfg: &FitConfig<S>,
    noise_floor: S,
) -> Result<KernelParams<S>> {
    let scales = feature_scales(observations);
    let floors = resolution_floors(observations);
    let m = cfg.grid_points.max(2);
    let lo = cfg.grid_lo.ln();
    let hi = cfg.grid_hi.ln();
    let factors: Vec<S> = (0..m)
        .map(|j| S::from_f64c((lo + (hi - lo) * j as f64 / (m - 1) as f64).exp()))
        .collect();
    // noise values anchored to the observation-noise floor; sub-floor grid
    // points collapse onto the floor, so deduplicate
    let mut noises: Vec<S> = factors
        .iter()
        .map(|f| (noise_floor * *f).max(noise_floor))
        .collect();
    noises.dedup_by(|a, b| a == b);
    let mut l0s: Vec<S> = factors
        .iter()
        .map(|f| clip_lengthscale(scales[0] * *f, floors[0]))
        .collect();
    l0s.dedup_by(|a, b| a == b);
    let mut l1s: Vec<S> = factors
        .iter()
        .map(|f| clip_lengthscale(scales[1] * *f, floors[1]))
        .collect();
    l1s.dedup_by(|a, b| a == b);

    let n = observations.len();
    let outcomes: Vec<S> = observations.iter().map(|(_, y)| *y).collect();
    let (mean, std) = standardize(&outcomes);
    let y_std: Vec<S> = outcomes.iter().map(|y| (*y - mean) / std).collect();

    // packed squared differences per feature dimension
    let size = n * (n + 1) / 2;
    let mut d0 = vec![S::zero(); size];
    let mut d1 = vec![S::zero(); size];
    for i in 0..n {
        for j in 0..=i {
            let a = &observations[i].0;
            let b = &observations[j].0;
            d0[i * (i + 1) / 2 + j] = (a.dot - b.dot) * (a.dot - b.dot);
            d1[i * (i + 1) / 2 + j] = (a.distance - b.distance) * (a.distance - b.distance);
        }
    }

    let jitter = S::from_f64c(JITTER_LADDER[0]);
    let half = S::from_f64c(0.5);
    let mut corr = vec![S::zero(); size];
    let mut k_buf = vec![S::zero(); size];
    let mut alpha = vec![S::zero(); n];

    let mut best: Option<(S, KernelParams<S>)> = None;
    for &l0 in &l0s {
        for &l1 in &l1s {
            let inv0 = S::one() / (l0 * l0);
            let inv1 = S::one() / (l1 * l1);
            for idx in 0..size {
                corr[idx] = (-half * (d0[idx] * inv0 + d1[idx] * inv1)).exp();
            }
            for &fs in &factors {
                for &fn_ in &noises {
                    let cand = KernelParams {
                        lengthscales: [l0, l1],
                        signal_variance: fs,
                        noise_variance: fn_,
                    };
                    for idx in 0..size {
                        k_buf[idx] = fs * corr[idx];
                    }
                    for i in 0..n {
                        let idx = i * (i + 1) / 2 + i;
                        k_buf[idx] = k_buf[idx] + fn_ + jitter;
                    }
                    if cholesky_packed(&mut k_buf, n).is_err() {
                        continue;
                    }
                    alpha.copy_from_slice(&y_std);
                    forward_solve(&k_buf, n, &mut alpha);
                    backward_solve(&k_buf, n, &mut alpha);
                    let fit_term = y_std.iter().zip(&alpha).map(|(y, a)| *y * *a).sum::<S>();
                    let logdet = (0..n).map(|i| k_buf[i * (i + 1) / 2 + i].ln()).sum::<S>();
                    let lml =
                        -half * fit_term - logdet - half * S::from_f64c(n as f64) * S::ln_2pi();
                    let better = match &best {
                        None => true,
                        Some((b, _)) => lml > *b,
                    };
                    if better {
                        best = Some((lml, cand));
                    }
                }
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Numerical("grid search failed: no factorizable hyperparameter point".to_string())
    })
}

/// One coordinate-descent pass: each parameter in turn tries four log-space
/// perturbations (sub-grid steps) and keeps the best.
fn refine_pass<S: Scalar>(
    observations: &[(PairFeature<S>, S)],
    start: KernelParams<S>,
    noise_floor: S,
) -> Result<KernelParams<S>> {
    let floors = resolution_floors(observations);
    let steps: Vec<S> = [-1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]
        .iter()
        .map(|e| S::from_f64c(10f64.powf(*e)))
        .collect();
    let mut best = start;
    best.lengthscales[0] = clip_lengthscale(best.lengthscales[0], floors[0]);
    best.lengthscales[1] = clip_lengthscale(best.lengthscales[1], floors[1]);
    let mut best_lml = lml_at(observations, best);
    for coord in 0..4 {
        for &s in &steps {
            let mut cand = best;
            match coord {
                0 => cand.lengthscales[0] = clip_lengthscale(cand.lengthscales[0] * s, floors[0]),
                1 => cand.lengthscales[1] = clip_lengthscale(cand.lengthscales[1] * s, floors[1]),
                2 => cand.signal_variance = cand.signal_variance * s,
                _ => cand.noise_variance = (cand.noise_variance * s).max(noise_floor),
            }
            let lml = lml_at(observations, cand);
            if lml > best_lml {
                best_lml = lml;
                best = cand;
            }
        }
    }
    Ok(best)
}
