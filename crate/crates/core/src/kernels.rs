//! Value-weighted features and dual-form ridge regression over them.
//!
//! Learners never touch the mixing vectors directly: everything they
//! estimate goes through the Gram matrix of value-weighted features
//! `phi_V(z) = sum_{s'} phi(s' | z) V(s')`, its regularized inverse applied
//! to observed targets (the dual weights), and the induced posterior-style
//! widths. Observations carry a per-row normalizer so the same machinery
//! serves both plain and variance-weighted regression; a normalizer of 1
//! recovers the unweighted case.
//!
//! The confidence radius (`beta`) schedules live here too, one per learner
//! flavor, together with the variance estimator that feeds the weighted
//! one.

use crate::game::KernelMixtureGame;
use crate::linalg::{dot, factor_spd, Cholesky, LinalgError};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

pub type FeatureVector = Vec<f64>;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid parameter: {0}")]
    BadParams(String),
    #[error("feature dimension mismatch: state holds {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `phi_V(z) = sum_{s'} phi(s' | z) V(s')`. For `|V| <= 1` pointwise this
/// has Euclidean norm at most 1 by construction of the feature map.
pub fn value_feature(
    game: &KernelMixtureGame,
    x: usize,
    a: usize,
    b: usize,
    values: &[f64],
) -> FeatureVector {
    debug_assert_eq!(values.len(), game.n_states);
    let z = game.z_index(x, a, b);
    let mut out = vec![0.0; game.feature_dim];
    for (s, &v) in values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (o, &f) in out.iter_mut().zip(game.feature(z, s)) {
            *o += v * f;
        }
    }
    out
}

/// The doubly value-weighted kernel
/// `k_{V1,V2}(z1, z2) = sum_{s1,s2} V1(s1) V2(s2) <phi(s1|z1), phi(s2|z2)>`,
/// computed through its factored form `<phi_V1(z1), phi_V2(z2)>`.
pub fn weighted_kernel(
    game: &KernelMixtureGame,
    z1: (usize, usize, usize),
    z2: (usize, usize, usize),
    v1: &[f64],
    v2: &[f64],
) -> f64 {
    let f1 = value_feature(game, z1.0, z1.1, z1.2, v1);
    let f2 = value_feature(game, z2.0, z2.1, z2.2, v2);
    dot(&f1, &f2)
}

/// Growing kernel ridge regression in dual form.
///
/// Holds observations `(feature_p, target_p, normalizer_p)` and maintains a
/// Cholesky factor of `K + lambda I` where
/// `K[p][q] = <feature_p, feature_q> / (normalizer_p * normalizer_q)`,
/// plus the dual weight vector `(K + lambda I)^{-1} (target / normalizer)`.
/// Appending an observation extends the factor in O(n^2); if the extension
/// ever loses positive definiteness the factorization is redone from
/// scratch with an escalating diagonal jitter.
#[derive(Debug)]
pub struct GramState {
    lambda: f64,
    dim: usize,
    feats: Vec<f64>,
    norms: Vec<f64>,
    targets: Vec<f64>,
    chol: Cholesky,
    jitter: f64,
    dual: Vec<f64>,
    clip_events: AtomicU64,
}

impl GramState {
    pub fn new(lambda: f64, dim: usize) -> Result<Self, KernelError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(KernelError::BadParams(format!("lambda {lambda} must be positive")));
        }
        if dim == 0 {
            return Err(KernelError::BadParams("feature dimension must be positive".into()));
        }
        Ok(GramState {
            lambda,
            dim,
            feats: Vec::new(),
            norms: Vec::new(),
            targets: Vec::new(),
            chol: Cholesky::empty(),
            jitter: 0.0,
            dual: Vec::new(),
            clip_events: AtomicU64::new(0),
        })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Regularizer actually inside the current factor (base plus any jitter
    /// a rescue factorization needed).
    pub fn lambda_effective(&self) -> f64 {
        self.lambda + self.jitter
    }

    /// Number of times a width computation had to clamp a negative value
    /// under its square root.
    pub fn clip_count(&self) -> u64 {
        self.clip_events.load(Ordering::Relaxed)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[f64], f64, f64)> + '_ {
        (0..self.len()).map(move |p| {
            (
                &self.feats[p * self.dim..(p + 1) * self.dim],
                self.targets[p],
                self.norms[p],
            )
        })
    }

    fn feat(&self, p: usize) -> &[f64] {
        &self.feats[p * self.dim..(p + 1) * self.dim]
    }

    /// Appends one observation and refreshes the dual weights.
    pub fn append(
        &mut self,
        feature: &[f64],
        target: f64,
        normalizer: f64,
    ) -> Result<(), KernelError> {
        if feature.len() != self.dim {
            return Err(KernelError::DimensionMismatch { expected: self.dim, got: feature.len() });
        }
        if feature.iter().any(|v| !v.is_finite()) || !target.is_finite() || !normalizer.is_finite() {
            return Err(KernelError::NonFinite);
        }
        if !(normalizer > 0.0) {
            return Err(KernelError::BadParams(format!(
                "normalizer {normalizer} must be positive"
            )));
        }
        let n = self.len();
        let cross: Vec<f64> = (0..n)
            .map(|p| dot(self.feat(p), feature) / (self.norms[p] * normalizer))
            .collect();
        let diag = dot(feature, feature) / (normalizer * normalizer) + self.lambda_effective();
        let extended = self.chol.append_row(&cross, diag).is_ok();
        self.feats.extend_from_slice(feature);
        self.norms.push(normalizer);
        self.targets.push(target);
        if !extended {
            self.refactor()?;
        }
        self.refresh_dual();
        Ok(())
    }

    /// Rebuilds the factorization from the stored observations, escalating
    /// jitter as needed.
    fn refactor(&mut self) -> Result<(), KernelError> {
        let n = self.len();
        let mut gram = vec![vec![0.0; n]; n];
        for p in 0..n {
            for q in 0..=p {
                let v = dot(self.feat(p), self.feat(q)) / (self.norms[p] * self.norms[q]);
                gram[p][q] = v;
                gram[q][p] = v;
            }
        }
        let (chol, jitter) = factor_spd(&gram, self.lambda)?;
        self.chol = chol;
        self.jitter = jitter;
        Ok(())
    }

    fn refresh_dual(&mut self) {
        let mut y: Vec<f64> = self
            .targets
            .iter()
            .zip(&self.norms)
            .map(|(t, r)| t / r)
            .collect();
        self.chol.solve(&mut y);
        self.dual = y;
    }

    /// Query-side kernel vector `k(z)[p] = <feature_p, query> / normalizer_p`.
    fn kernel_column(&self, query: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|p| dot(self.feat(p), query) / self.norms[p])
            .collect()
    }

    /// Ridge prediction at an (unnormalized) query feature.
    pub fn mean(&self, query: &[f64]) -> f64 {
        debug_assert_eq!(query.len(), self.dim);
        dot(&self.kernel_column(query), &self.dual)
    }

    /// Posterior-style width
    /// `lambda^{-1/2} [k(z,z) - k(z)^T (K + lambda I)^{-1} k(z)]^{1/2}`;
    /// negative values inside the root are clamped to zero and counted.
    pub fn width(&self, query: &[f64]) -> f64 {
        debug_assert_eq!(query.len(), self.dim);
        let k_self = dot(query, query);
        if k_self == 0.0 {
            return 0.0;
        }
        let mut col = self.kernel_column(query);
        self.chol.solve_lower(&mut col);
        self.finish_width(k_self, dot(&col, &col))
    }

    fn finish_width(&self, k_self: f64, explained: f64) -> f64 {
        let mut s = k_self - explained;
        if s < 0.0 {
            self.clip_events.fetch_add(1, Ordering::Relaxed);
            s = 0.0;
        }
        (s / self.lambda_effective()).sqrt()
    }

    /// Means and widths for a batch of queries in one factor sweep. Same
    /// arithmetic as [`GramState::mean`] / [`GramState::width`], but the
    /// triangular solve runs over all columns at once, which is markedly
    /// faster once the factor outgrows cache.
    pub fn query_batch(&self, queries: &[FeatureVector]) -> Vec<(f64, f64)> {
        let nq = queries.len();
        let n = self.len();
        let self_kernels: Vec<f64> = queries.iter().map(|q| dot(q, q)).collect();
        if n == 0 || self_kernels.iter().all(|&v| v == 0.0) {
            return self_kernels
                .iter()
                .map(|&k| (0.0, (k / self.lambda_effective()).sqrt()))
                .collect();
        }
        let mut cols = vec![0.0; n * nq];
        for p in 0..n {
            let f = self.feat(p);
            let inv = 1.0 / self.norms[p];
            let row = &mut cols[p * nq..(p + 1) * nq];
            for (j, q) in queries.iter().enumerate() {
                row[j] = dot(f, q) * inv;
            }
        }
        let mut means = vec![0.0; nq];
        for p in 0..n {
            let w = self.dual[p];
            for (m, &c) in means.iter_mut().zip(&cols[p * nq..(p + 1) * nq]) {
                *m += w * c;
            }
        }
        self.chol.solve_lower_multi(&mut cols, nq);
        let mut explained = vec![0.0; nq];
        for p in 0..n {
            for (e, &c) in explained.iter_mut().zip(&cols[p * nq..(p + 1) * nq]) {
                *e += c * c;
            }
        }
        means
            .into_iter()
            .zip(self_kernels)
            .zip(explained)
            .map(|((m, k), e)| (m, self.finish_width(k, e)))
            .collect()
    }

    /// `1/2 log det(I + K / lambda)`, the information gain of the
    /// observations held so far.
    pub fn information_gain(&self) -> f64 {
        let n = self.len() as f64;
        self.chol.diag().map(f64::ln).sum::<f64>() - 0.5 * n * self.lambda_effective().ln()
    }

    /// Max-norm residual of the dual system `(K + lambda I) w = y`, relative
    /// to the target scale; a consistency probe for tests and the oracle
    /// checker.
    pub fn dual_residual(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        // K w computed through the features: K w = Psi (Psi^T w-normalized),
        // avoiding storage of K itself.
        let mut combo = vec![0.0; self.dim];
        for p in 0..n {
            let c = self.dual[p] / self.norms[p];
            for (o, &f) in combo.iter_mut().zip(self.feat(p)) {
                *o += c * f;
            }
        }
        let mut worst = 0.0f64;
        let mut scale = 1.0f64;
        for p in 0..n {
            let y = self.targets[p] / self.norms[p];
            scale = scale.max(y.abs());
            let lhs = dot(self.feat(p), &combo) / self.norms[p]
                + self.lambda_effective() * self.dual[p];
            worst = worst.max((lhs - y).abs());
        }
        worst / scale
    }

    /// Deliberately breaks the cached dual weights so tests can confirm the
    /// residual probe notices.
    #[doc(hidden)]
    pub fn debug_corrupt_dual(&mut self) {
        if let Some(v) = self.dual.first_mut() {
            *v += 0.5;
        }
    }
}

// ---------------------------------------------------------------------------
// Confidence radius schedules.

/// Shared inputs of the radius schedules. `alpha`, `lambda1`, `lambda2` are
/// only consulted by the Bernstein schedule; `iota` only by the
/// misspecification-aware one.
#[derive(Debug, Clone)]
pub struct BonusParams {
    pub horizon: usize,
    pub delta: f64,
    pub lambda: f64,
    pub b_norm: f64,
    pub beta_scale: f64,
    pub iota: f64,
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl BonusParams {
    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::BadParams(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta {} outside (0, 1)", self.delta));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta_scale", self.beta_scale),
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be positive and finite"));
            }
        }
        if self.b_norm < 0.0 || self.iota < 0.0 {
            return bad("b_norm and iota must be nonnegative".into());
        }
        Ok(())
    }
}

/// Hoeffding-style radius
/// `H sqrt(2 gamma_hat + 2 + 4 log(1/delta) + 2 lambda (B/H)^2)`, times the
/// configured scale. Always at least `H sqrt(2)` at unit scale, which is
/// what the optimism induction needs.
pub fn beta_hoeffding(p: &BonusParams, gamma_hat: f64) -> f64 {
    debug_assert!(gamma_hat >= 0.0);
    let h = p.horizon as f64;
    let ratio = p.b_norm / h;
    p.beta_scale
        * h
        * (2.0 * gamma_hat + 2.0 + 4.0 * (1.0 / p.delta).ln() + 2.0 * p.lambda * ratio * ratio)
            .sqrt()
}

/// Misspecification-aware radius: the Hoeffding form with enlarged
/// constants and an additive `3 iota^2 t` term that absorbs the per-episode
/// model bias.
pub fn beta_misspecified(p: &BonusParams, gamma_hat: f64, t: usize) -> f64 {
    debug_assert!(gamma_hat >= 0.0);
    let h = p.horizon as f64;
    let ratio = p.b_norm / h;
    p.beta_scale
        * h
        * (2.0 * gamma_hat
            + 3.0
            + 6.0 * (1.0 / p.delta).ln()
            + 3.0 * p.lambda * ratio * ratio
            + 3.0 * p.iota * p.iota * t as f64)
            .sqrt()
}

/// The three radii used by the variance-weighted learner at episode `t`:
/// `first` guards the weighted first-moment regression, `second` the plain
/// second-moment regression, and `fine` is the tightened radius applied to
/// the value bonus itself.
#[derive(Debug, Clone, Copy)]
pub struct BernsteinBetas {
    pub first: f64,
    pub second: f64,
    pub fine: f64,
}

/// Bernstein-style schedule. `gamma1` is an information gain estimate for
/// the weighted first-moment regression, `gamma2` for the second-moment
/// one, and `L = log(4 t^2 H / delta)` the shared deviation log term.
pub fn beta_bernstein(p: &BonusParams, gamma1: f64, gamma2: f64, t: usize) -> BernsteinBetas {
    debug_assert!(gamma1 >= 0.0 && gamma2 >= 0.0 && t >= 1);
    let h = p.horizon as f64;
    let l = (4.0 * (t * t) as f64 * h / p.delta).ln();
    let sl = l.sqrt();
    let first = (16.0 * h / p.alpha) * gamma1.sqrt() * sl
        + (8.0 * h / p.alpha) * l
        + p.lambda1.sqrt() * p.b_norm;
    let second =
        16.0 * h * h * gamma2.sqrt() * sl + 8.0 * h * h * l + p.lambda2.sqrt() * p.b_norm;
    let fine = 16.0 * gamma1.sqrt() * sl + (8.0 * h / p.alpha) * l + p.lambda1.sqrt() * p.b_norm;
    BernsteinBetas {
        first: p.beta_scale * first,
        second: p.beta_scale * second,
        fine: p.beta_scale * fine,
    }
}

/// Output of [`variance_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct VarianceEstimate {
    /// Squared normalizer `max(v_est + error_term, alpha^2)`.
    pub r_sq: f64,
    /// The width-driven error allowance.
    pub error_term: f64,
    /// Plug-in variance: clipped second moment minus squared clipped first
    /// moment (may be negative before the allowance is added).
    pub v_est: f64,
    pub width_first: f64,
    pub width_second: f64,
}

/// Estimated conditional variance of the next-step value at a query triple,
/// inflated by the regression widths enough to dominate the truth on the
/// usual concentration event, and floored at `alpha^2`:
///
/// `v_est = clip_[0,H^2](second moment pred) - clip_[-H,H](first moment pred)^2`
/// `error = min(H^2, beta2 w2) + min(H^2, 2 H beta1 w1)`
/// `r_sq  = max(v_est + error, alpha^2)`.
pub fn variance_estimate(
    first: &GramState,
    second: &GramState,
    phi_v: &[f64],
    phi_v_sq: &[f64],
    betas: &BernsteinBetas,
    horizon: usize,
    alpha: f64,
) -> VarianceEstimate {
    let h = horizon as f64;
    let h_sq = h * h;
    let m1 = first.mean(phi_v).clamp(-h, h);
    let m2 = second.mean(phi_v_sq).clamp(0.0, h_sq);
    let v_est = m2 - m1 * m1;
    let width_first = first.width(phi_v);
    let width_second = second.width(phi_v_sq);
    let error_term =
        (betas.second * width_second).min(h_sq) + (2.0 * h * betas.first * width_first).min(h_sq);
    VarianceEstimate {
        r_sq: (v_est + error_term).max(alpha * alpha),
        error_term,
        v_est,
        width_first,
        width_second,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_random_game, GameConfig};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn params() -> BonusParams {
        BonusParams {
            horizon: 1,
            delta: std::f64::consts::E.recip(), // log(1/delta) = 1
            lambda: 1.0,
            b_norm: 1.0,
            beta_scale: 1.0,
            iota: 0.0,
            alpha: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }

    #[test]
    fn hoeffding_radius_closed_form() {
        let p = params();
        // 2*2 + 2 + 4*1 + 2*1*1 = 12.
        assert_relative_eq!(beta_hoeffding(&p, 2.0), 12f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn hoeffding_radius_dominates_horizon() {
        let mut p = params();
        for horizon in [1, 3, 7] {
            p.horizon = horizon;
            for delta in [0.05, 0.5, 0.99] {
                p.delta = delta;
                assert!(beta_hoeffding(&p, 0.0) >= horizon as f64);
            }
        }
    }

    #[test]
    fn misspecified_radius_closed_form() {
        let mut p = params();
        p.delta = 1.0 - 1e-15; // log(1/delta) ~ 0
        p.iota = 0.1;
        // 0 + 3 + 0 + 3*1*1 + 3 * 0.01 * 100 = 9.
        assert_relative_eq!(beta_misspecified(&p, 0.0, 100), 3.0, epsilon = 1e-9);
        // With iota = 0 the bias term vanishes and the radius stops growing
        // with t.
        p.iota = 0.0;
        assert_relative_eq!(
            beta_misspecified(&p, 0.0, 10),
            beta_misspecified(&p, 0.0, 10_000),
            epsilon = 1e-12
        );
    }

    #[test]
    fn bernstein_radii_reduce_to_log_terms() {
        let mut p = params();
        p.horizon = 2;
        p.delta = 0.1;
        p.alpha = 0.5;
        p.b_norm = 0.0;
        let h = 2.0f64;
        let t = 7usize;
        let l = (4.0 * 49.0 * h / 0.1).ln();
        let b = beta_bernstein(&p, 0.0, 0.0, t);
        assert_relative_eq!(b.first, (8.0 * h / 0.5) * l, epsilon = 1e-12);
        assert_relative_eq!(b.second, 8.0 * h * h * l, epsilon = 1e-12);
        assert_relative_eq!(b.fine, (8.0 * h / 0.5) * l, epsilon = 1e-12);
    }

    #[test]
    fn bernstein_sqrt_log_coefficients_are_consistent() {
        // The sqrt(log) coefficient of the fine radius equals that of the
        // first-moment radius rescaled by alpha / H; isolate the
        // coefficients by differencing out the gamma-independent terms.
        let mut p = params();
        p.horizon = 3;
        p.alpha = 0.7;
        p.delta = 0.05;
        let t = 11;
        let gamma = 2.3;
        let base = beta_bernstein(&p, 0.0, 0.0, t);
        let with_gamma = beta_bernstein(&p, gamma, 0.0, t);
        let coeff_first = (with_gamma.first - base.first) / gamma.sqrt();
        let coeff_fine = (with_gamma.fine - base.fine) / gamma.sqrt();
        assert_relative_eq!(
            coeff_fine,
            coeff_first * p.alpha / p.horizon as f64,
            epsilon = 1e-9
        );
    }

    #[test]
    fn empty_state_closed_forms() {
        let state = GramState::new(2.0, 3).unwrap();
        let q = vec![0.5, -0.5, 1.0];
        assert_relative_eq!(state.mean(&q), 0.0);
        let expected = (dot(&q, &q) / 2.0).sqrt();
        assert_relative_eq!(state.width(&q), expected, epsilon = 1e-12);
        assert_relative_eq!(state.information_gain(), 0.0);
    }

    #[test]
    fn single_observation_ridge_closed_form() {
        let lambda = 0.7;
        let mut state = GramState::new(lambda, 2).unwrap();
        let phi = vec![0.6, -0.3];
        let y = 1.4;
        state.append(&phi, y, 1.0).unwrap();
        let k = dot(&phi, &phi);
        assert_relative_eq!(state.mean(&phi), y * k / (k + lambda), epsilon = 1e-12);
        let width_sq = (k - k * k / (k + lambda)) / lambda;
        assert_relative_eq!(state.width(&phi), width_sq.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn information_gain_single_unit_feature() {
        let mut state = GramState::new(1.0, 4).unwrap();
        state.append(&[1.0, 0.0, 0.0, 0.0], 0.3, 1.0).unwrap();
        assert_relative_eq!(state.information_gain(), 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn normalizers_match_explicitly_scaled_data() {
        let mut rng = StdRng::seed_from_u64(31);
        let dim = 4;
        let mut weighted = GramState::new(0.9, dim).unwrap();
        let mut scaled = GramState::new(0.9, dim).unwrap();
        for _ in 0..25 {
            let phi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = rng.gen_range(-2.0..2.0);
            let r = rng.gen_range(0.5..3.0);
            weighted.append(&phi, y, r).unwrap();
            let phi_scaled: Vec<f64> = phi.iter().map(|v| v / r).collect();
            scaled.append(&phi_scaled, y / r, 1.0).unwrap();
        }
        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert_relative_eq!(weighted.mean(&q), scaled.mean(&q), epsilon = 1e-9);
        assert_relative_eq!(weighted.width(&q), scaled.width(&q), epsilon = 1e-9);
        assert_relative_eq!(
            weighted.information_gain(),
            scaled.information_gain(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn batch_queries_match_single_queries() {
        let mut rng = StdRng::seed_from_u64(8);
        let dim = 5;
        let mut state = GramState::new(1.1, dim).unwrap();
        for _ in 0..40 {
            let phi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            state.append(&phi, rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0)).unwrap();
        }
        let queries: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                if i == 4 {
                    vec![0.0; dim] // exercise the zero-query path
                } else {
                    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
                }
            })
            .collect();
        let batch = state.query_batch(&queries);
        for (q, &(m, w)) in queries.iter().zip(&batch) {
            assert_relative_eq!(m, state.mean(q), epsilon = 1e-10);
            assert_relative_eq!(w, state.width(q), epsilon = 1e-10);
        }
    }

    #[test]
    fn widths_shrink_as_data_accumulates() {
        let mut rng = StdRng::seed_from_u64(12);
        let dim = 3;
        let mut state = GramState::new(1.0, dim).unwrap();
        let q: Vec<f64> = vec![0.3, -0.8, 0.5];
        let mut last = state.width(&q);
        for _ in 0..30 {
            let phi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            state.append(&phi, rng.gen_range(-1.0..1.0), 1.0).unwrap();
            let w = state.width(&q);
            assert!(w <= last + 1e-10, "width grew from {last} to {w}");
            last = w;
        }
    }

    #[test]
    fn dual_residual_small_and_corruptible() {
        let mut rng = StdRng::seed_from_u64(77);
        let dim = 6;
        let mut state = GramState::new(0.5, dim).unwrap();
        for _ in 0..50 {
            let phi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            state.append(&phi, rng.gen_range(-3.0..3.0), 1.0).unwrap();
        }
        assert!(state.dual_residual() <= 1e-8, "residual {}", state.dual_residual());
        state.debug_corrupt_dual();
        assert!(state.dual_residual() > 1e-3);
    }

    #[test]
    fn weighted_kernel_matches_double_sum() {
        let mut rng = StdRng::seed_from_u64(4);
        let config = GameConfig::new(3, 2, 2, 4);
        let game = generate_random_game(&config, &mut rng).unwrap();
        let v1: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v2: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (z1, z2) = ((0, 1, 0), (2, 0, 1));
        let mut by_sum = 0.0;
        for s1 in 0..3 {
            for s2 in 0..3 {
                let f1 = game.feature(game.z_index(z1.0, z1.1, z1.2), s1);
                let f2 = game.feature(game.z_index(z2.0, z2.1, z2.2), s2);
                by_sum += v1[s1] * v2[s2] * dot(f1, f2);
            }
        }
        let direct = weighted_kernel(&game, z1, z2, &v1, &v2);
        assert_relative_eq!(direct, by_sum, epsilon = 1e-12);
    }

    #[test]
    fn value_feature_norm_bounded_by_one() {
        let mut rng = StdRng::seed_from_u64(21);
        let config = GameConfig::new(4, 2, 2, 6);
        let game = generate_random_game(&config, &mut rng).unwrap();
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for x in 0..4 {
                for a in 0..2 {
                    for b in 0..2 {
                        let f = value_feature(&game, x, a, b, &v);
                        assert!(dot(&f, &f).sqrt() <= 1.0 + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn variance_estimate_on_empty_states() {
        let first = GramState::new(1.0, 3).unwrap();
        let second = GramState::new(4.0, 3).unwrap();
        let phi_v = vec![0.6, 0.0, 0.8];
        let phi_v_sq = vec![1.0, 2.0, 2.0];
        let betas = BernsteinBetas { first: 2.0, second: 3.0, fine: 2.0 };
        let horizon = 2;
        let alpha = 0.4;
        let est = variance_estimate(&first, &second, &phi_v, &phi_v_sq, &betas, horizon, alpha);
        assert_relative_eq!(est.v_est, 0.0);
        let w1 = dot(&phi_v, &phi_v).sqrt(); // lambda = 1
        let w2 = (dot(&phi_v_sq, &phi_v_sq) / 4.0).sqrt();
        let expected_err = (3.0 * w2).min(4.0) + (2.0 * 2.0 * 2.0 * w1).min(4.0);
        assert_relative_eq!(est.error_term, expected_err, epsilon = 1e-12);
        assert!(est.r_sq >= alpha * alpha);
    }

    #[test]
    fn bonus_params_validation_rejects_bad_delta() {
        let mut p = params();
        p.delta = 1.5;
        assert!(p.validate().is_err());
        p.delta = 0.5;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn append_rejects_mismatched_dimension() {
        let mut state = GramState::new(1.0, 3).unwrap();
        assert!(matches!(
            state.append(&[1.0, 2.0], 0.0, 1.0),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }
}
