//! The Bayes denoiser as the welfare-maximizing reconstruction, checked in
//! closed form for an isotropic Gaussian prior and affine estimators.
//!
//! Welfare is negative mean squared reconstruction error. All Monte Carlo
//! checks use a band of four standard errors.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::stream_rng;

/// Acceptance band, in standard errors.
pub const SE_BAND: f64 = 4.0;

const ENDPOINT_TOL: f64 = 1e-6;
const CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
}

/// Prior `N(mu0, var0 I_d)` noised as `x_t = alpha_t x_0 + sigma_t eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianDiffusionSpec {
    pub mu0: f64,
    pub var0: f64,
    pub dim: usize,
    pub schedule: Vec<ScheduleEntry>,
}

impl GaussianDiffusionSpec {
    pub fn new(mu0: f64, var0: f64, dim: usize, mut schedule: Vec<ScheduleEntry>) -> Result<Self> {
        schedule.sort_by(|a, b| a.t.total_cmp(&b.t));
        let spec = GaussianDiffusionSpec {
            mu0,
            var0,
            dim,
            schedule,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Variance-preserving cosine schedule on `points` evenly spaced times in [0,1].
    pub fn variance_preserving(mu0: f64, var0: f64, dim: usize, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::config("a schedule needs at least 2 points"));
        }
        let schedule = (0..points)
            .map(|i| {
                let t = i as f64 / (points - 1) as f64;
                let (alpha, sigma) = if i == points - 1 {
                    (0.0, 1.0)
                } else {
                    let a = (std::f64::consts::FRAC_PI_2 * t).cos();
                    (a, (1.0 - a * a).sqrt())
                };
                ScheduleEntry { t, alpha, sigma }
            })
            .collect();
        Self::new(mu0, var0, dim, schedule)
    }

    /// Adds or replaces the entry at `entry.t`.
    pub fn with_entry(mut self, entry: ScheduleEntry) -> Result<Self> {
        self.schedule.retain(|e| e.t != entry.t);
        self.schedule.push(entry);
        Self::new(self.mu0, self.var0, self.dim, self.schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !self.mu0.is_finite() || !(self.var0 >= 0.0) || !self.var0.is_finite() {
            return Err(Error::config("prior mean must be finite and variance nonnegative"));
        }
        if self
            .schedule
            .iter()
            .any(|e| !(e.sigma >= 0.0) || !e.alpha.is_finite() || !e.sigma.is_finite() || !e.t.is_finite())
        {
            return Err(Error::config("schedule entries need finite alpha and sigma >= 0"));
        }
        let (Some(first), Some(last)) = (self.schedule.first(), self.schedule.last()) else {
            return Err(Error::config("empty schedule"));
        };
        let near = |x: f64, y: f64| (x - y).abs() <= ENDPOINT_TOL;
        if !(near(first.t, 0.0) && near(first.alpha, 1.0) && near(first.sigma, 0.0)) {
            return Err(Error::config("schedule must start at t=0 with alpha=1, sigma=0"));
        }
        if !(near(last.t, 1.0) && near(last.alpha, 0.0) && near(last.sigma, 1.0)) {
            return Err(Error::config("schedule must end at t=1 with alpha=0, sigma=1"));
        }
        Ok(())
    }

    pub fn entry(&self, t: f64) -> Result<ScheduleEntry> {
        self.schedule
            .iter()
            .copied()
            .find(|e| (e.t - t).abs() <= 1e-12)
            .ok_or_else(|| Error::input(format!("t={t} is not in the schedule")))
    }

    /// `Var(x_t)` per coordinate.
    fn marginal_var(&self, e: ScheduleEntry) -> f64 {
        e.alpha * e.alpha * self.var0 + e.sigma * e.sigma
    }
}

/// Flattened `n x dim` draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardSamples {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub eps: Vec<f64>,
    pub xt: Vec<f64>,
}

impl ForwardSamples {
    pub fn len(&self) -> usize {
        self.x0.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.x0.is_empty()
    }
}

/// Draws `n` pairs; chunk `c` of the output uses RNG stream `c`, so results
/// do not depend on `exec`.
pub fn forward_sample_with(
    exec: Execution,
    spec: &GaussianDiffusionSpec,
    t: f64,
    seed: u64,
    n: usize,
) -> Result<ForwardSamples> {
    let e = spec.entry(t)?;
    let d = spec.dim;
    let sd0 = spec.var0.sqrt();
    let chunks = exec.map_indexed(n.div_ceil(CHUNK), |c| {
        let mut rng = stream_rng(seed, c as u64);
        let m = CHUNK.min(n - c * CHUNK) * d;
        let (mut x0, mut eps, mut xt) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for _ in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            let w: f64 = rng.sample(StandardNormal);
            let x = spec.mu0 + sd0 * z;
            x0.push(x);
            eps.push(w);
            xt.push(e.alpha * x + e.sigma * w);
        }
        (x0, eps, xt)
    });
    let mut out = ForwardSamples {
        dim: d,
        x0: Vec::with_capacity(n * d),
        eps: Vec::with_capacity(n * d),
        xt: Vec::with_capacity(n * d),
    };
    for (a, b, c) in chunks {
        out.x0.extend(a);
        out.eps.extend(b);
        out.xt.extend(c);
    }
    Ok(out)
}

pub fn forward_sample(spec: &GaussianDiffusionSpec, t: f64, seed: u64, n: usize) -> Result<ForwardSamples> {
    forward_sample_with(Execution::default(), spec, t, seed, n)
}

/// Coordinatewise affine reconstruction `x_hat = gain * x_t + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub gain: f64,
    pub offset: f64,
}

impl Estimator {
    pub fn identity() -> Self {
        Estimator { gain: 1.0, offset: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        Estimator { gain: 0.0, offset: c }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.gain * x + self.offset
    }

    pub fn perturbed(&self, d_gain: f64, d_offset: f64) -> Self {
        Estimator {
            gain: self.gain + d_gain,
            offset: self.offset + d_offset,
        }
    }
}

/// Posterior mean `E[x0 | x_t]`.
pub fn bayes_denoiser(spec: &GaussianDiffusionSpec, t: f64) -> Result<Estimator> {
    let e = spec.entry(t)?;
    let v = spec.marginal_var(e);
    if v == 0.0 {
        return Err(Error::Degenerate(format!("alpha^2 var0 + sigma^2 = 0 at t={t}")));
    }
    let gain = e.alpha * spec.var0 / v;
    Ok(Estimator {
        gain,
        offset: spec.mu0 * (1.0 - gain * e.alpha),
    })
}

/// `E[eps | x_t]` for one coordinate.
pub fn posterior_noise(spec: &GaussianDiffusionSpec, e: ScheduleEntry, x: f64) -> f64 {
    e.sigma * (x - e.alpha * spec.mu0) / spec.marginal_var(e)
}

/// Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        McEstimate {
            mean,
            std_error: (var / n.max(1) as f64).sqrt(),
        }
    }
}

fn per_sample<F: Fn(usize) -> f64>(samples: &ForwardSamples, f: F) -> impl Iterator<Item = f64> {
    let d = samples.dim;
    (0..samples.len()).map(move |i| (i * d..(i + 1) * d).map(&f).sum())
}

fn loss_sample(samples: &ForwardSamples, est: Estimator) -> impl Iterator<Item = f64> + '_ {
    per_sample(samples, move |j| -(samples.x0[j] - est.apply(samples.xt[j])).powi(2))
}

/// `-E||x0 - x_hat(x_t)||^2` estimated from `n` draws.
pub fn welfare_of(est: &Estimator, spec: &GaussianDiffusionSpec, t: f64, n: usize, seed: u64) -> Result<McEstimate> {
    if n < 2 {
        return Err(Error::input("welfare estimate needs n >= 2"));
    }
    let samples = forward_sample(spec, t, seed, n)?;
    Ok(McEstimate::of(loss_sample(&samples, *est)))
}

/// 20 gain and offset perturbations, none of them zero.
pub fn default_perturbations() -> Vec<(f64, f64)> {
    let gains = [-0.8, -0.4, -0.2, -0.1, -0.05, 0.05, 0.1, 0.2, 0.4, 0.8];
    gains
        .iter()
        .flat_map(|&g| [(g, 0.0), (g, 0.1)])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbationResult {
    pub delta_gain: f64,
    pub delta_offset: f64,
    pub welfare: McEstimate,
    /// Paired `welfare(bayes) - welfare(other)`.
    pub gap: McEstimate,
    /// `E||bayes(x_t) - other(x_t)||^2` in closed form.
    pub predicted_gap: f64,
    /// Paired `E<x0 - bayes(x_t), bayes(x_t) - other(x_t)>`.
    pub cross_term: McEstimate,
    pub dominance_ok: bool,
    pub gap_ok: bool,
    pub orthogonal_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominanceReport {
    pub t: f64,
    pub welfare_bayes: McEstimate,
    pub results: Vec<PerturbationResult>,
    pub passed: bool,
}

fn within_band(x: f64, se: f64) -> bool {
    x.abs() <= SE_BAND * se + 1e-12
}

/// Compares the Bayes rule against perturbed affine rules on common samples.
pub fn planner_dominance_check(
    spec: &GaussianDiffusionSpec,
    t: f64,
    perturbations: &[(f64, f64)],
    n: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if n < 2 {
        return Err(Error::input("dominance check needs n >= 2"));
    }
    let e = spec.entry(t)?;
    let bayes = bayes_denoiser(spec, t)?;
    let samples = forward_sample(spec, t, seed, n)?;
    let welfare_bayes = McEstimate::of(loss_sample(&samples, bayes));
    let mean_x = e.alpha * spec.mu0;
    let second_moment = spec.marginal_var(e) + mean_x * mean_x;
    let results: Vec<PerturbationResult> = perturbations
        .iter()
        .map(|&(dg, db)| {
            let other = bayes.perturbed(dg, db);
            let welfare = McEstimate::of(loss_sample(&samples, other));
            let gap = McEstimate::of(per_sample(&samples, |j| {
                let (x0, x) = (samples.x0[j], samples.xt[j]);
                (x0 - other.apply(x)).powi(2) - (x0 - bayes.apply(x)).powi(2)
            }));
            let cross_term = McEstimate::of(per_sample(&samples, |j| {
                let (x0, x) = (samples.x0[j], samples.xt[j]);
                (x0 - bayes.apply(x)) * (bayes.apply(x) - other.apply(x))
            }));
            // bayes - other = -(dg x + db)
            let predicted_gap =
                spec.dim as f64 * (dg * dg * second_moment + 2.0 * dg * db * mean_x + db * db);
            PerturbationResult {
                delta_gain: dg,
                delta_offset: db,
                welfare,
                dominance_ok: gap.mean >= -SE_BAND * gap.std_error,
                gap_ok: within_band(gap.mean - predicted_gap, gap.std_error),
                orthogonal_ok: within_band(cross_term.mean, cross_term.std_error),
                gap,
                predicted_gap,
                cross_term,
            }
        })
        .collect();
    let passed = results.iter().all(|r| r.dominance_ok && r.gap_ok && r.orthogonal_ok);
    Ok(DominanceReport {
        t,
        welfare_bayes,
        results,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub t: f64,
    /// Largest `|(x_t - sigma E[eps|x_t]) / alpha - bayes(x_t)|` over the draws.
    pub max_err: Option<f64>,
    /// Why the check did not run.
    pub skipped: Option<String>,
}

/// Checks that the denoiser implied by the optimal noise predictor is the Bayes rule.
pub fn corollary_identity_check(spec: &GaussianDiffusionSpec, t: f64, n: usize, seed: u64) -> Result<IdentityReport> {
    let e = spec.entry(t)?;
    if e.alpha == 0.0 {
        return Ok(IdentityReport {
            t,
            max_err: None,
            skipped: Some("alpha_t = 0: the noise-prediction form divides by zero".into()),
        });
    }
    let bayes = bayes_denoiser(spec, t)?;
    let samples = forward_sample(spec, t, seed, n)?;
    let max_err = samples
        .xt
        .iter()
        .map(|&x| {
            let implied = (x - e.sigma * posterior_noise(spec, e, x)) / e.alpha;
            (implied - bayes.apply(x)).abs()
        })
        .fold(0.0, f64::max);
    Ok(IdentityReport {
        t,
        max_err: Some(max_err),
        skipped: None,
    })
}

/// Per-time-point summary written by the command line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionReport {
    pub t: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub welfare_bayes: McEstimate,
    pub gaps: Vec<PerturbationResult>,
    pub identity_max_err: Option<f64>,
    pub passed: bool,
}

/// Runs both checks at every schedule point. Point `i` uses seed `seed + i`.
pub fn diffusion_report(
    spec: &GaussianDiffusionSpec,
    perturbations: &[(f64, f64)],
    n: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<DiffusionReport>> {
    exec.map_slice(&spec.schedule, |e| -> Result<DiffusionReport> {
        let i = spec.schedule.iter().position(|x| x.t == e.t).unwrap_or(0) as u64;
        let dom = planner_dominance_check(spec, e.t, perturbations, n, seed.wrapping_add(i))?;
        let id = corollary_identity_check(spec, e.t, n, seed.wrapping_add(i))?;
        let id_ok = id.max_err.is_none_or(|m| m < 1e-9);
        Ok(DiffusionReport {
            t: e.t,
            alpha: e.alpha,
            sigma: e.sigma,
            welfare_bayes: dom.welfare_bayes,
            passed: dom.passed && id_ok,
            gaps: dom.results,
            identity_max_err: id.max_err,
        })
    })
    .into_iter()
    .collect()
}

/// A spec with one random interior point, for identity checks.
pub fn random_spec(seed: u64) -> (GaussianDiffusionSpec, f64) {
    let mut rng = stream_rng(seed, 0);
    let mu0 = rng.random_range(-2.0..2.0);
    let var0 = rng.random_range(0.1..4.0);
    let dim = rng.random_range(1..=8);
    let alpha = rng.random_range(0.05..=1.0);
    let sigma = rng.random_range(0.0..1.5);
    let t = 0.5;
    let schedule = vec![
        ScheduleEntry { t: 0.0, alpha: 1.0, sigma: 0.0 },
        ScheduleEntry { t, alpha, sigma },
        ScheduleEntry { t: 1.0, alpha: 0.0, sigma: 1.0 },
    ];
    (
        GaussianDiffusionSpec::new(mu0, var0, dim, schedule).expect("drawn within range"),
        t,
    )
}
