//! Hierarchical Bayesian linear model of journal prestige on productivity,
//! optionally with career age as a second predictor.
//!
//! Per researcher `j` with observations `(I_t, P_t, A_t)`:
//!
//! ```text
//! I_t ~ Normal(c_j + b_j * P_t (+ g_j * A_t), eps)
//! c_j ~ Normal(mu_c, sigma_c)      b_j ~ Normal(mu_p, sigma_p)
//! g_j ~ Normal(mu_a, sigma_a)
//! ```
//!
//! with weakly informative priors `mu_* ~ Normal(0, sqrt(1e5))`,
//! `sigma_*^2 ~ InvGamma(1e-3, 1)` and `eps ~ Uniform(0, 100)` on the noise
//! standard deviation. All blocks except `eps` are conditionally conjugate
//! and sampled by Gibbs; `eps` takes a shrinking slice step on its bounded
//! support. Chains run independently on per-chain substreams and are
//! initialized from jittered per-researcher least squares.
//!
//! The conditional-parameter functions are exported so tests can check
//! each Gibbs block against grid integration of the joint density.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{kde, mean, ols_line, quantile, sample_sd, sample_var};
use crate::plane::CareerRecord;
use crate::rng;
use crate::{Error, Result};

/// Prior settings. Defaults reproduce the reference analysis; tests use
/// tightened proper ranges where calibration demands it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Priors {
    /// Upper bound of the uniform prior on the noise SD.
    pub eps_max: f64,
    /// SD of the zero-centered normal prior on group means.
    pub mu_sd: f64,
    /// Inverse-gamma shape on group variances.
    pub sigma_shape: f64,
    /// Inverse-gamma scale on group variances.
    pub sigma_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors { eps_max: 100.0, mu_sd: 1e5_f64.sqrt(), sigma_shape: 1e-3, sigma_scale: 1.0 }
    }
}

/// Model and sampler settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HierarchicalModelSpec {
    pub include_age: bool,
    pub priors: Priors,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for HierarchicalModelSpec {
    fn default() -> Self {
        HierarchicalModelSpec {
            include_age: false,
            priors: Priors::default(),
            chains: 8,
            iterations: 10_000,
            burn_in: 5_000,
        }
    }
}

impl HierarchicalModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::Config("need at least 1 chain".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn_in must be smaller than iterations".into()));
        }
        Ok(())
    }
}

/// One researcher's regression rows with cached cross-products.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ObsBlock {
    pub researcher_id: String,
    pub prestige: Vec<f64>,
    pub productivity: Vec<f64>,
    pub age: Vec<f64>,
    n: f64,
    sum_i: f64,
    sum_p: f64,
    sum_a: f64,
    sum_ii: f64,
    sum_pp: f64,
    sum_aa: f64,
    sum_ip: f64,
    sum_ia: f64,
    sum_pa: f64,
}

impl ObsBlock {
    pub fn new(researcher_id: String, prestige: Vec<f64>, productivity: Vec<f64>, age: Vec<f64>) -> Self {
        assert_eq!(prestige.len(), productivity.len());
        assert_eq!(prestige.len(), age.len());
        let mut block = ObsBlock { researcher_id, prestige, productivity, age, ..Default::default() };
        block.n = block.prestige.len() as f64;
        for k in 0..block.prestige.len() {
            let (i, p, a) = (block.prestige[k], block.productivity[k], block.age[k]);
            block.sum_i += i;
            block.sum_p += p;
            block.sum_a += a;
            block.sum_ii += i * i;
            block.sum_pp += p * p;
            block.sum_aa += a * a;
            block.sum_ip += i * p;
            block.sum_ia += i * a;
            block.sum_pa += p * a;
        }
        block
    }

    pub fn len(&self) -> usize {
        self.prestige.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prestige.is_empty()
    }

    /// Residual sum of squares at the given researcher coefficients.
    fn ssr(&self, c: f64, b: f64, g: f64) -> f64 {
        self.sum_ii + c * c * self.n + b * b * self.sum_pp + g * g * self.sum_aa
            - 2.0 * c * self.sum_i
            - 2.0 * b * self.sum_ip
            - 2.0 * g * self.sum_ia
            + 2.0 * c * b * self.sum_p
            + 2.0 * c * g * self.sum_a
            + 2.0 * b * g * self.sum_pa
    }
}

/// Per-discipline regression input.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RegressionData {
    pub blocks: Vec<ObsBlock>,
}

impl RegressionData {
    pub fn n_obs(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }
}

/// Selection outcome: per-discipline data plus skipped disciplines.
#[derive(Debug, Clone, Default)]
pub struct BayesSelection {
    pub by_discipline: std::collections::BTreeMap<String, RegressionData>,
    /// Disciplines skipped for having fewer than 2 eligible researchers.
    pub skipped: Vec<(String, usize)>,
}

/// Keep non-outlier researchers with career length strictly greater than
/// `min_career_length` (default 5) and their career years with age >= 1.
pub fn select_bayes_sample(careers: &[CareerRecord], min_career_length: i32) -> BayesSelection {
    let mut grouped: std::collections::BTreeMap<String, Vec<ObsBlock>> =
        std::collections::BTreeMap::new();
    for career in careers {
        if career.category.is_outlier() || career.career_length <= min_career_length {
            continue;
        }
        let mut prestige = Vec::new();
        let mut productivity = Vec::new();
        let mut age = Vec::new();
        for (cy, _) in &career.years {
            if cy.career_age >= 1 {
                prestige.push(cy.prestige_z);
                productivity.push(cy.productivity_z);
                age.push(cy.career_age as f64);
            }
        }
        if prestige.is_empty() {
            continue;
        }
        grouped.entry(career.discipline.clone()).or_default().push(ObsBlock::new(
            career.researcher_id.clone(),
            prestige,
            productivity,
            age,
        ));
    }
    let mut selection = BayesSelection::default();
    for (discipline, blocks) in grouped {
        if blocks.len() < 2 {
            selection.skipped.push((discipline, blocks.len()));
        } else {
            selection.by_discipline.insert(discipline, RegressionData { blocks });
        }
    }
    selection
}

/// Sampler state for one iteration.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub intercepts: Vec<f64>,
    pub slopes_p: Vec<f64>,
    pub slopes_a: Vec<f64>,
    pub mu_c: f64,
    pub var_c: f64,
    pub mu_p: f64,
    pub var_p: f64,
    pub mu_a: f64,
    pub var_a: f64,
    pub eps: f64,
}

const VAR_FLOOR: f64 = 1e-12;
const VAR_CEIL: f64 = 1e12;

/// Conditional `(mean, var)` of researcher `j`'s intercept.
pub fn intercept_conditional(
    block: &ObsBlock,
    slope_p: f64,
    slope_a: f64,
    eps: f64,
    mu_c: f64,
    var_c: f64,
) -> (f64, f64) {
    let resid_sum = block.sum_i - slope_p * block.sum_p - slope_a * block.sum_a;
    let prec = block.n / (eps * eps) + 1.0 / var_c;
    let mean = (resid_sum / (eps * eps) + mu_c / var_c) / prec;
    (mean, 1.0 / prec)
}

/// Conditional `(mean, var)` of researcher `j`'s productivity slope.
pub fn slope_p_conditional(
    block: &ObsBlock,
    intercept: f64,
    slope_a: f64,
    eps: f64,
    mu_p: f64,
    var_p: f64,
) -> (f64, f64) {
    let xy = block.sum_ip - intercept * block.sum_p - slope_a * block.sum_pa;
    let prec = block.sum_pp / (eps * eps) + 1.0 / var_p;
    let mean = (xy / (eps * eps) + mu_p / var_p) / prec;
    (mean, 1.0 / prec)
}

/// Conditional `(mean, var)` of researcher `j`'s age slope.
pub fn slope_a_conditional(
    block: &ObsBlock,
    intercept: f64,
    slope_p: f64,
    eps: f64,
    mu_a: f64,
    var_a: f64,
) -> (f64, f64) {
    let xy = block.sum_ia - intercept * block.sum_a - slope_p * block.sum_pa;
    let prec = block.sum_aa / (eps * eps) + 1.0 / var_a;
    let mean = (xy / (eps * eps) + mu_a / var_a) / prec;
    (mean, 1.0 / prec)
}

/// Conditional `(mean, var)` of a group mean given the researcher values.
pub fn group_mean_conditional(values: &[f64], group_var: f64, prior_sd: f64) -> (f64, f64) {
    let j = values.len() as f64;
    let prec = j / group_var + 1.0 / (prior_sd * prior_sd);
    let mean = values.iter().sum::<f64>() / group_var / prec;
    (mean, 1.0 / prec)
}

/// Conditional inverse-gamma `(shape, scale)` of a group variance.
pub fn group_var_conditional(values: &[f64], mu: f64, shape: f64, scale: f64) -> (f64, f64) {
    let j = values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (shape + j / 2.0, scale + ss / 2.0)
}

/// Unnormalized log conditional density of the noise SD.
pub fn eps_log_density(n_obs: f64, ssr: f64, eps: f64) -> f64 {
    -n_obs * eps.ln() - ssr / (2.0 * eps * eps)
}

fn draw_normal<R: Rng>(rng: &mut R, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.max(0.0).sqrt()).expect("finite normal parameters").sample(rng)
}

fn draw_inverse_gamma<R: Rng>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / scale).expect("valid gamma parameters");
    let g: f64 = gamma.sample(rng);
    (1.0 / g).clamp(VAR_FLOOR, VAR_CEIL)
}

/// Shrinking slice step for `eps` on `(0, eps_max)`.
fn slice_eps<R: Rng>(rng: &mut R, n_obs: f64, ssr: f64, current: f64, eps_max: f64) -> f64 {
    if n_obs == 0.0 {
        return rng.random_range(0.0..eps_max).max(VAR_FLOOR);
    }
    let current = current.clamp(1e-12, eps_max);
    let height = eps_log_density(n_obs, ssr, current) - rng.sample::<f64, _>(rand_distr::Exp1);
    let mut lo = 0.0f64;
    let mut hi = eps_max;
    for _ in 0..200 {
        let cand = rng.random_range(lo..hi);
        if cand > 0.0 && eps_log_density(n_obs, ssr, cand) > height {
            return cand;
        }
        if cand < current {
            lo = cand;
        } else {
            hi = cand;
        }
    }
    current
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainSamples {
    pub mu_c: Vec<f64>,
    pub sigma_c: Vec<f64>,
    pub mu_p: Vec<f64>,
    pub sigma_p: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub eps: Vec<f64>,
    /// Researcher-level draws indexed `[researcher][draw]`.
    pub intercepts: Vec<Vec<f64>>,
    pub slopes_p: Vec<Vec<f64>>,
    pub slopes_a: Vec<Vec<f64>>,
}

/// Posterior draws across chains (burn-in already discarded).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub researcher_ids: Vec<String>,
    pub include_age: bool,
    pub chains: Vec<ChainSamples>,
}

impl PosteriorSamples {
    /// Per-chain slices of a group-level parameter.
    pub fn group_param(&self, name: &str) -> Option<Vec<&[f64]>> {
        fn pick<'a>(c: &'a ChainSamples, name: &str) -> Option<&'a [f64]> {
            match name {
                "mu_c" => Some(&c.mu_c),
                "sigma_c" => Some(&c.sigma_c),
                "mu_p" => Some(&c.mu_p),
                "sigma_p" => Some(&c.sigma_p),
                "mu_a" => Some(&c.mu_a),
                "sigma_a" => Some(&c.sigma_a),
                "eps" => Some(&c.eps),
                _ => None,
            }
        }
        let mut out = Vec::with_capacity(self.chains.len());
        for c in &self.chains {
            out.push(pick(c, name)?);
        }
        Some(out)
    }

    /// Pooled post-burn-in draws of a group-level parameter.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        self.group_param(name)
            .map(|chains| chains.into_iter().flatten().copied().collect())
    }

    pub fn group_param_names(&self) -> Vec<&'static str> {
        if self.include_age {
            vec!["mu_c", "sigma_c", "mu_p", "sigma_p", "mu_a", "sigma_a", "eps"]
        } else {
            vec!["mu_c", "sigma_c", "mu_p", "sigma_p", "eps"]
        }
    }
}

fn init_state<R: Rng>(data: &RegressionData, spec: &HierarchicalModelSpec, rng: &mut R) -> GibbsState {
    let mut intercepts = Vec::with_capacity(data.blocks.len());
    let mut slopes_p = Vec::with_capacity(data.blocks.len());
    let mut slopes_a = vec![0.0; data.blocks.len()];
    let mut resid_sds = Vec::new();
    for block in &data.blocks {
        let fit = ols_line(&block.productivity, &block.prestige);
        let (b0, b1) = match fit {
            Some((b0, b1, _)) => (b0, b1),
            None => (mean(&block.prestige), 0.0),
        };
        let b0 = if b0.is_finite() { b0 } else { 0.0 };
        let b1 = if b1.is_finite() { b1 } else { 0.0 };
        intercepts.push(b0 + 0.1 * draw_normal(rng, 0.0, 1.0));
        slopes_p.push(b1 + 0.1 * draw_normal(rng, 0.0, 1.0));
        let ssr = block.ssr(b0, b1, 0.0);
        if block.n > 2.0 {
            resid_sds.push((ssr / (block.n - 2.0)).max(0.0).sqrt());
        }
    }
    if spec.include_age {
        for s in slopes_a.iter_mut() {
            *s = 0.01 * draw_normal(rng, 0.0, 1.0);
        }
    }
    let eps0 = if resid_sds.is_empty() { 1.0 } else { mean(&resid_sds) };
    GibbsState {
        mu_c: mean(&intercepts),
        var_c: sample_var(&intercepts).max(0.01),
        mu_p: mean(&slopes_p),
        var_p: sample_var(&slopes_p).max(0.01),
        mu_a: mean(&slopes_a),
        var_a: sample_var(&slopes_a).max(1e-4),
        eps: eps0.clamp(0.05, spec.priors.eps_max * 0.99),
        intercepts,
        slopes_p,
        slopes_a,
    }
}

/// One full Gibbs sweep over all blocks.
pub fn gibbs_sweep<R: Rng>(
    data: &RegressionData,
    spec: &HierarchicalModelSpec,
    state: &mut GibbsState,
    rng: &mut R,
) {
    let priors = &spec.priors;
    for (j, block) in data.blocks.iter().enumerate() {
        let (m, v) = intercept_conditional(
            block,
            state.slopes_p[j],
            state.slopes_a[j],
            state.eps,
            state.mu_c,
            state.var_c,
        );
        state.intercepts[j] = draw_normal(rng, m, v);
        let (m, v) = slope_p_conditional(
            block,
            state.intercepts[j],
            state.slopes_a[j],
            state.eps,
            state.mu_p,
            state.var_p,
        );
        state.slopes_p[j] = draw_normal(rng, m, v);
        if spec.include_age {
            let (m, v) = slope_a_conditional(
                block,
                state.intercepts[j],
                state.slopes_p[j],
                state.eps,
                state.mu_a,
                state.var_a,
            );
            state.slopes_a[j] = draw_normal(rng, m, v);
        }
    }

    let (m, v) = group_mean_conditional(&state.intercepts, state.var_c, priors.mu_sd);
    state.mu_c = draw_normal(rng, m, v);
    let (shape, scale) =
        group_var_conditional(&state.intercepts, state.mu_c, priors.sigma_shape, priors.sigma_scale);
    state.var_c = draw_inverse_gamma(rng, shape, scale);

    let (m, v) = group_mean_conditional(&state.slopes_p, state.var_p, priors.mu_sd);
    state.mu_p = draw_normal(rng, m, v);
    let (shape, scale) =
        group_var_conditional(&state.slopes_p, state.mu_p, priors.sigma_shape, priors.sigma_scale);
    state.var_p = draw_inverse_gamma(rng, shape, scale);

    if spec.include_age {
        let (m, v) = group_mean_conditional(&state.slopes_a, state.var_a, priors.mu_sd);
        state.mu_a = draw_normal(rng, m, v);
        let (shape, scale) = group_var_conditional(
            &state.slopes_a,
            state.mu_a,
            priors.sigma_shape,
            priors.sigma_scale,
        );
        state.var_a = draw_inverse_gamma(rng, shape, scale);
    }

    let ssr: f64 = data
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| b.ssr(state.intercepts[j], state.slopes_p[j], state.slopes_a[j]))
        .sum::<f64>()
        .max(0.0);
    state.eps = slice_eps(rng, data.n_obs() as f64, ssr, state.eps, priors.eps_max);
}

/// Draw from the joint posterior with `spec.chains` independent chains.
///
/// `label` keys the substreams (one per chain), so a fit is reproducible
/// from `(seed, label)` alone and identical under serial or parallel
/// chain execution.
pub fn fit_hierarchical(
    data: &RegressionData,
    spec: &HierarchicalModelSpec,
    seed: u64,
    label: &str,
) -> Result<PosteriorSamples> {
    spec.validate()?;
    let n_keep = spec.iterations - spec.burn_in;
    let chains: Vec<ChainSamples> = (0..spec.chains)
        .into_par_iter()
        .map(|chain_idx| {
            let mut stream =
                rng::substream(seed, &["bayes", label, "chain", &chain_idx.to_string()]);
            let mut state = init_state(data, spec, &mut stream);
            let mut out = ChainSamples {
                intercepts: vec![Vec::with_capacity(n_keep); data.blocks.len()],
                slopes_p: vec![Vec::with_capacity(n_keep); data.blocks.len()],
                slopes_a: vec![Vec::with_capacity(n_keep); data.blocks.len()],
                ..ChainSamples::default()
            };
            for iter in 0..spec.iterations {
                gibbs_sweep(data, spec, &mut state, &mut stream);
                if iter >= spec.burn_in {
                    out.mu_c.push(state.mu_c);
                    out.sigma_c.push(state.var_c.sqrt());
                    out.mu_p.push(state.mu_p);
                    out.sigma_p.push(state.var_p.sqrt());
                    if spec.include_age {
                        out.mu_a.push(state.mu_a);
                        out.sigma_a.push(state.var_a.sqrt());
                    }
                    out.eps.push(state.eps);
                    for (j, c) in state.intercepts.iter().enumerate() {
                        out.intercepts[j].push(*c);
                    }
                    for (j, b) in state.slopes_p.iter().enumerate() {
                        out.slopes_p[j].push(*b);
                    }
                    if spec.include_age {
                        for (j, g) in state.slopes_a.iter().enumerate() {
                            out.slopes_a[j].push(*g);
                        }
                    }
                }
            }
            out
        })
        .collect();

    Ok(PosteriorSamples {
        researcher_ids: data.blocks.iter().map(|b| b.researcher_id.clone()).collect(),
        include_age: spec.include_age,
        chains,
    })
}

/// Split-chain Gelman-Rubin statistic.
///
/// Each chain is halved; `R = sqrt(((n-1)/n * W + B/n) / W)` over the
/// split halves. Zero within-chain variance is flagged as an error.
pub fn rhat(chains: &[&[f64]]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Config("rhat needs at least 2 chains".into()));
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if min_len < 4 {
        return Err(Error::Data("rhat needs at least 4 draws per chain".into()));
    }
    let half = min_len / 2;
    let mut split: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        split.push(&c[..half]);
        split.push(&c[min_len - half..min_len]);
    }
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = split.iter().map(|c| sample_var(c)).collect();
    let w = mean(&vars);
    if w <= 0.0 {
        return Err(Error::Numerical("degenerate chains: zero within-chain variance".into()));
    }
    let n = half as f64;
    let b = n * sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Summary of one parameter's pooled posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: Option<f64>,
    pub flag: Option<String>,
}

/// Posterior summary over all group-level parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    pub n_chains: usize,
    pub n_draws_per_chain: usize,
    pub n_researchers: usize,
}

/// Pooled mean/SD/central-95% summaries with split R-hat per parameter.
pub fn posterior_summary(samples: &PosteriorSamples) -> PosteriorSummary {
    let mut params = Vec::new();
    for name in samples.group_param_names() {
        let per_chain = samples.group_param(name).expect("known parameter");
        let pooled: Vec<f64> = per_chain.iter().flat_map(|c| c.iter().copied()).collect();
        let r = rhat(&per_chain).ok();
        let mut flag = None;
        if r.is_none() && per_chain.len() >= 2 {
            flag = Some("degenerate chains".to_string());
        }
        if name == "eps" {
            let m = mean(&pooled);
            if m < 1e-3 {
                flag = Some(format!("eps near zero boundary (mean {m:.2e})"));
            }
        }
        params.push(ParamSummary {
            name: name.to_string(),
            mean: mean(&pooled),
            sd: sample_sd(&pooled),
            q025: quantile(&pooled, 0.025),
            q975: quantile(&pooled, 0.975),
            rhat: r,
            flag,
        });
    }
    PosteriorSummary {
        params,
        n_chains: samples.chains.len(),
        n_draws_per_chain: samples.chains.first().map(|c| c.mu_c.len()).unwrap_or(0),
        n_researchers: samples.researcher_ids.len(),
    }
}

/// Kernel-density export of a pooled group parameter, for ridgeline plots.
pub fn density_export(samples: &PosteriorSamples, name: &str, n_grid: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let pooled = samples.pooled(name)?;
    if pooled.is_empty() {
        return None;
    }
    Some(kde(&pooled, n_grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent log joint density of the model, written directly from
    /// the model statement (used by the grid-integration checks).
    fn log_joint(data: &RegressionData, s: &GibbsState, priors: &Priors, include_age: bool) -> f64 {
        let ln_normal = |x: f64, mu: f64, sd: f64| {
            -0.5 * ((x - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
        };
        let mut lp = 0.0;
        // Likelihood
        for (j, b) in data.blocks.iter().enumerate() {
            for t in 0..b.len() {
                let mu = s.intercepts[j]
                    + s.slopes_p[j] * b.productivity[t]
                    + if include_age { s.slopes_a[j] * b.age[t] } else { 0.0 };
                lp += ln_normal(b.prestige[t], mu, s.eps);
            }
        }
        // Researcher level
        for j in 0..data.blocks.len() {
            lp += ln_normal(s.intercepts[j], s.mu_c, s.var_c.sqrt());
            lp += ln_normal(s.slopes_p[j], s.mu_p, s.var_p.sqrt());
            if include_age {
                lp += ln_normal(s.slopes_a[j], s.mu_a, s.var_a.sqrt());
            }
        }
        // Group level
        lp += ln_normal(s.mu_c, 0.0, priors.mu_sd);
        lp += ln_normal(s.mu_p, 0.0, priors.mu_sd);
        if include_age {
            lp += ln_normal(s.mu_a, 0.0, priors.mu_sd);
        }
        let ln_invgamma = |v: f64, shape: f64, scale: f64| {
            -(shape + 1.0) * v.ln() - scale / v
        };
        lp += ln_invgamma(s.var_c, priors.sigma_shape, priors.sigma_scale);
        lp += ln_invgamma(s.var_p, priors.sigma_shape, priors.sigma_scale);
        if include_age {
            lp += ln_invgamma(s.var_a, priors.sigma_shape, priors.sigma_scale);
        }
        // eps prior uniform on (0, eps_max): constant inside the support.
        lp
    }

    fn toy_data() -> RegressionData {
        // 3 researchers, small fixed design.
        let blocks = vec![
            ObsBlock::new(
                "a".into(),
                vec![0.4, -0.2, 0.9, 0.1],
                vec![0.5, -1.0, 2.0, 0.0],
                vec![1.0, 2.0, 3.0, 4.0],
            ),
            ObsBlock::new(
                "b".into(),
                vec![-0.5, -0.1, 0.3],
                vec![1.5, 0.2, -0.7],
                vec![2.0, 3.0, 4.0],
            ),
            ObsBlock::new(
                "c".into(),
                vec![0.0, 0.6, -0.8, 0.2, -0.3],
                vec![0.3, 1.1, -1.9, 0.4, -0.2],
                vec![1.0, 2.0, 3.0, 4.0, 5.0],
            ),
        ];
        RegressionData { blocks }
    }

    fn toy_state() -> GibbsState {
        GibbsState {
            intercepts: vec![0.1, -0.2, 0.05],
            slopes_p: vec![-0.1, 0.2, -0.25],
            slopes_a: vec![0.01, -0.02, 0.0],
            mu_c: 0.03,
            var_c: 0.25,
            mu_p: -0.1,
            var_p: 0.09,
            mu_a: 0.0,
            var_a: 0.01,
            eps: 0.7,
        }
    }

    /// Normalize a grid of log densities into probabilities.
    fn normalize_grid(logs: &[f64]) -> Vec<f64> {
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|v| v / total).collect()
    }

    /// Each conjugate conditional must match the corresponding axis of the
    /// brute-force joint on a 2-parameter grid slice (all other
    /// coordinates held fixed).
    #[test]
    fn conditionals_match_grid_integration() {
        let data = toy_data();
        let priors = Priors { eps_max: 10.0, mu_sd: 10.0, sigma_shape: 2.0, sigma_scale: 0.5 };
        let base = toy_state();
        let include_age = true;
        let n_grid = 401;

        // (c_0, b_0) slice: conditional of c_0 at each fixed b_0.
        let (cm, cv) = intercept_conditional(
            &data.blocks[0], base.slopes_p[0], base.slopes_a[0], base.eps, base.mu_c, base.var_c,
        );
        let c_grid: Vec<f64> =
            (0..n_grid).map(|k| cm - 5.0 * cv.sqrt() + 10.0 * cv.sqrt() * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = c_grid
            .iter()
            .map(|&c| {
                let mut s = base.clone();
                s.intercepts[0] = c;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> =
            c_grid.iter().map(|&c| -0.5 * (c - cm) * (c - cm) / cv).collect();
        let closed = normalize_grid(&closed_logs);
        for (b, c) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(b, c, epsilon = 1e-8);
        }

        // b_0 conditional.
        let (bm, bv) = slope_p_conditional(
            &data.blocks[0], base.intercepts[0], base.slopes_a[0], base.eps, base.mu_p, base.var_p,
        );
        let b_grid: Vec<f64> =
            (0..n_grid).map(|k| bm - 5.0 * bv.sqrt() + 10.0 * bv.sqrt() * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = b_grid
            .iter()
            .map(|&b| {
                let mut s = base.clone();
                s.slopes_p[0] = b;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> =
            b_grid.iter().map(|&b| -0.5 * (b - bm) * (b - bm) / bv).collect();
        let closed = normalize_grid(&closed_logs);
        for (x, y) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }

        // g_0 conditional.
        let (gm, gv) = slope_a_conditional(
            &data.blocks[0], base.intercepts[0], base.slopes_p[0], base.eps, base.mu_a, base.var_a,
        );
        let g_grid: Vec<f64> =
            (0..n_grid).map(|k| gm - 5.0 * gv.sqrt() + 10.0 * gv.sqrt() * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = g_grid
            .iter()
            .map(|&g| {
                let mut s = base.clone();
                s.slopes_a[0] = g;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> =
            g_grid.iter().map(|&g| -0.5 * (g - gm) * (g - gm) / gv).collect();
        let closed = normalize_grid(&closed_logs);
        for (x, y) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }

        // mu_c conditional.
        let (mm, mv) = group_mean_conditional(&base.intercepts, base.var_c, priors.mu_sd);
        let m_grid: Vec<f64> =
            (0..n_grid).map(|k| mm - 5.0 * mv.sqrt() + 10.0 * mv.sqrt() * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = m_grid
            .iter()
            .map(|&m| {
                let mut s = base.clone();
                s.mu_c = m;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> =
            m_grid.iter().map(|&m| -0.5 * (m - mm) * (m - mm) / mv).collect();
        let closed = normalize_grid(&closed_logs);
        for (x, y) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }

        // var_c conditional: inverse gamma.
        let (shape, scale) =
            group_var_conditional(&base.intercepts, base.mu_c, priors.sigma_shape, priors.sigma_scale);
        let v_grid: Vec<f64> =
            (0..n_grid).map(|k| 0.01 + 2.0 * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = v_grid
            .iter()
            .map(|&v| {
                let mut s = base.clone();
                s.var_c = v;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> =
            v_grid.iter().map(|&v| -(shape + 1.0) * v.ln() - scale / v).collect();
        let closed = normalize_grid(&closed_logs);
        for (x, y) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }

        // eps conditional shape: compare the exported log density with the
        // joint along the eps axis (up to a constant).
        let ssr: f64 = data
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| b.ssr(base.intercepts[j], base.slopes_p[j], base.slopes_a[j]))
            .sum();
        let e_grid: Vec<f64> =
            (0..n_grid).map(|k| 0.2 + 2.0 * k as f64 / (n_grid - 1) as f64).collect();
        let joint_logs: Vec<f64> = e_grid
            .iter()
            .map(|&e| {
                let mut s = base.clone();
                s.eps = e;
                log_joint(&data, &s, &priors, include_age)
            })
            .collect();
        let brute = normalize_grid(&joint_logs);
        let closed_logs: Vec<f64> = e_grid
            .iter()
            .map(|&e| eps_log_density(data.n_obs() as f64, ssr, e))
            .collect();
        let closed = normalize_grid(&closed_logs);
        for (x, y) in brute.iter().zip(&closed) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
    }

    fn simulate_model(
        n_researchers: usize,
        n_years: usize,
        truth: (f64, f64, f64, f64, f64, f64, f64),
        include_age: bool,
        seed: u64,
    ) -> RegressionData {
        let (mu_c, sigma_c, mu_p, sigma_p, mu_a, sigma_a, eps) = truth;
        let mut stream = rng::substream(seed, &["bayes-sim"]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut blocks = Vec::new();
        for j in 0..n_researchers {
            let c = mu_c + sigma_c * normal.sample(&mut stream);
            let b = mu_p + sigma_p * normal.sample(&mut stream);
            let g = if include_age { mu_a + sigma_a * normal.sample(&mut stream) } else { 0.0 };
            let mut prestige = Vec::new();
            let mut productivity = Vec::new();
            let mut age = Vec::new();
            for t in 0..n_years {
                let p = 1.2 * normal.sample(&mut stream);
                let a = (t + 1) as f64;
                let i = c + b * p + g * a + eps * normal.sample(&mut stream);
                prestige.push(i);
                productivity.push(p);
                age.push(a);
            }
            blocks.push(ObsBlock::new(format!("r{j}"), prestige, productivity, age));
        }
        RegressionData { blocks }
    }

    fn desk_spec(include_age: bool) -> HierarchicalModelSpec {
        HierarchicalModelSpec {
            include_age,
            priors: Priors::default(),
            chains: 4,
            iterations: 2000,
            burn_in: 1000,
        }
    }

    #[test]
    fn recovers_planted_group_slope() {
        let truth = (0.1, 0.4, -0.2, 0.1, 0.0, 0.0, 0.8);
        let data = simulate_model(50, 15, truth, false, 100);
        let samples = fit_hierarchical(&data, &desk_spec(false), 7, "unit").unwrap();
        let summary = posterior_summary(&samples);
        let mu_p = summary.params.iter().find(|p| p.name == "mu_p").unwrap();
        assert!(
            mu_p.q025 <= -0.2 && -0.2 <= mu_p.q975,
            "interval [{}, {}] misses -0.2",
            mu_p.q025,
            mu_p.q975
        );
        assert!(mu_p.q025 <= mu_p.mean && mu_p.mean <= mu_p.q975);
        for p in &summary.params {
            if let Some(r) = p.rhat {
                assert!(r < 1.1, "{} has rhat {r}", p.name);
            }
        }
    }

    #[test]
    fn null_effect_interval_contains_zero() {
        let truth = (0.3, 0.3, 0.0, 1e-6, 0.0, 0.0, 0.6);
        let data = simulate_model(30, 10, truth, false, 101);
        let samples = fit_hierarchical(&data, &desk_spec(false), 11, "unit").unwrap();
        let summary = posterior_summary(&samples);
        let mu_p = summary.params.iter().find(|p| p.name == "mu_p").unwrap();
        assert!(mu_p.q025 <= 0.0 && 0.0 <= mu_p.q975);
    }

    fn batch_se(draws: &[f64]) -> f64 {
        let n_batches = 20;
        let len = draws.len() / n_batches;
        let means: Vec<f64> =
            (0..n_batches).map(|k| mean(&draws[k * len..(k + 1) * len])).collect();
        sample_sd(&means) / (n_batches as f64).sqrt()
    }

    #[test]
    fn different_seeds_agree_within_mc_error() {
        let truth = (0.0, 0.3, -0.15, 0.1, 0.0, 0.0, 0.7);
        let data = simulate_model(25, 10, truth, false, 102);
        let s1 = fit_hierarchical(&data, &desk_spec(false), 1, "unit").unwrap();
        let s2 = fit_hierarchical(&data, &desk_spec(false), 2, "unit").unwrap();
        let d1 = s1.pooled("mu_p").unwrap();
        let d2 = s2.pooled("mu_p").unwrap();
        let se = (batch_se(&d1).powi(2) + batch_se(&d2).powi(2)).sqrt();
        assert!(
            (mean(&d1) - mean(&d2)).abs() < 3.0 * se,
            "means {} vs {} with pooled se {se}",
            mean(&d1),
            mean(&d2)
        );
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let data = simulate_model(10, 6, (0.0, 0.2, -0.1, 0.1, 0.0, 0.0, 0.5), false, 103);
        let spec = HierarchicalModelSpec { chains: 2, iterations: 200, burn_in: 100, ..desk_spec(false) };
        let a = fit_hierarchical(&data, &spec, 5, "unit").unwrap();
        let b = fit_hierarchical(&data, &spec, 5, "unit").unwrap();
        assert_eq!(a.chains[0].mu_p, b.chains[0].mu_p);
        assert_eq!(a.chains[1].eps, b.chains[1].eps);
    }

    #[test]
    fn rhat_flags_and_values() {
        // Identical constant chains are degenerate.
        let c = vec![1.0; 100];
        assert!(rhat(&[&c, &c]).is_err());

        // IID normal chains mix.
        let mut stream = rng::substream(6, &["rhat"]);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let chains: Vec<Vec<f64>> =
            (0..4).map(|_| (0..5000).map(|_| normal.sample(&mut stream)).collect()).collect();
        let views: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let r = rhat(&views).unwrap();
        assert!(r < 1.01, "rhat {r}");

        // Separated chains do not.
        let c1: Vec<f64> = (0..1000).map(|_| normal.sample(&mut stream)).collect();
        let c2: Vec<f64> = (0..1000).map(|_| 10.0 + normal.sample(&mut stream)).collect();
        let r = rhat(&[&c1, &c2]).unwrap();
        assert!(r > 1.1, "rhat {r}");
    }

    #[test]
    fn empty_data_recovers_prior_on_group_mean() {
        let data = RegressionData::default();
        let spec = HierarchicalModelSpec {
            chains: 1,
            iterations: 2100,
            burn_in: 100,
            ..HierarchicalModelSpec::default()
        };
        let samples = fit_hierarchical(&data, &spec, 8, "prior").unwrap();
        let draws = samples.pooled("mu_p").unwrap();
        let sd = sample_sd(&draws);
        let prior_sd = 1e5_f64.sqrt();
        assert!(
            (sd - prior_sd).abs() / prior_sd < 0.10,
            "prior sd {sd} vs {prior_sd}"
        );
    }

    #[test]
    fn degenerate_data_flags_eps_boundary() {
        // All prestige identical: the residual variance collapses.
        let blocks = vec![
            ObsBlock::new("a".into(), vec![1.0; 6], vec![0.1, -0.2, 0.3, 0.0, 0.2, -0.1], vec![1.0; 6]),
            ObsBlock::new("b".into(), vec![1.0; 6], vec![0.2, -0.1, 0.4, 0.1, -0.3, 0.0], vec![1.0; 6]),
        ];
        let data = RegressionData { blocks };
        let spec = HierarchicalModelSpec { chains: 2, iterations: 600, burn_in: 300, ..desk_spec(false) };
        let samples = fit_hierarchical(&data, &spec, 9, "degenerate").unwrap();
        let summary = posterior_summary(&samples);
        let eps = summary.params.iter().find(|p| p.name == "eps").unwrap();
        assert!(
            eps.flag.as_deref().unwrap_or("").contains("boundary") || eps.mean < 1e-2,
            "eps mean {} flag {:?}",
            eps.mean,
            eps.flag
        );
    }

    #[test]
    fn age_and_ageless_models_agree_on_age_free_data() {
        let truth = (0.1, 0.3, -0.2, 0.1, 0.0, 0.0, 0.8);
        let data = simulate_model(40, 12, truth, false, 104);
        let without = fit_hierarchical(&data, &desk_spec(false), 3, "noage").unwrap();
        let with = fit_hierarchical(&data, &desk_spec(true), 3, "age").unwrap();
        let d0 = without.pooled("mu_p").unwrap();
        let d1 = with.pooled("mu_p").unwrap();
        let se = (batch_se(&d0).powi(2) + batch_se(&d1).powi(2)).sqrt();
        assert!(
            (mean(&d0) - mean(&d1)).abs() < 3.0 * se.max(0.005),
            "mu_p {} vs {} (se {se})",
            mean(&d0),
            mean(&d1)
        );
    }

    #[test]
    fn draws_respect_supports() {
        let data = simulate_model(10, 8, (0.0, 0.3, -0.1, 0.1, 0.0, 0.0, 0.6), false, 105);
        let spec = HierarchicalModelSpec { chains: 2, iterations: 400, burn_in: 100, ..desk_spec(false) };
        let samples = fit_hierarchical(&data, &spec, 10, "support").unwrap();
        for chain in &samples.chains {
            assert!(chain.sigma_c.iter().all(|&v| v > 0.0));
            assert!(chain.sigma_p.iter().all(|&v| v > 0.0));
            assert!(chain.eps.iter().all(|&v| v > 0.0 && v < 100.0));
        }
    }

    /// Simulation-based calibration: the rank of the true group slope in
    /// its posterior should be uniform over repeated prior draws.
    #[test]
    fn sbc_ranks_are_approximately_uniform() {
        let tight = Priors { eps_max: 2.0, mu_sd: 0.7, sigma_shape: 4.0, sigma_scale: 1.0 };
        let spec = HierarchicalModelSpec {
            include_age: false,
            priors: tight,
            chains: 1,
            iterations: 1200,
            burn_in: 400,
        };
        let n_datasets = 120;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut us = Vec::with_capacity(n_datasets);
        for ds in 0..n_datasets {
            let mut stream = rng::substream(500 + ds as u64, &["sbc-gen"]);
            // Draw truth from the prior.
            let mu_c = tight.mu_sd * normal.sample(&mut stream);
            let var_c = draw_inverse_gamma(&mut stream, tight.sigma_shape, tight.sigma_scale);
            let mu_p = tight.mu_sd * normal.sample(&mut stream);
            let var_p = draw_inverse_gamma(&mut stream, tight.sigma_shape, tight.sigma_scale);
            let eps: f64 = stream.random_range(0.0..tight.eps_max).max(1e-3);
            let mut blocks = Vec::new();
            for j in 0..8 {
                let c = mu_c + var_c.sqrt() * normal.sample(&mut stream);
                let b = mu_p + var_p.sqrt() * normal.sample(&mut stream);
                let mut prestige = Vec::new();
                let mut productivity = Vec::new();
                for _ in 0..6 {
                    let p = normal.sample(&mut stream);
                    prestige.push(c + b * p + eps * normal.sample(&mut stream));
                    productivity.push(p);
                }
                let age = vec![0.0; 6];
                blocks.push(ObsBlock::new(format!("r{j}"), prestige, productivity, age));
            }
            let data = RegressionData { blocks };
            let samples = fit_hierarchical(&data, &spec, 900 + ds as u64, "sbc").unwrap();
            // Thin to weaken autocorrelation before ranking.
            let draws: Vec<f64> =
                samples.pooled("mu_p").unwrap().into_iter().step_by(8).collect();
            let rank = draws.iter().filter(|&&d| d < mu_p).count();
            us.push((rank as f64 + 0.5) / (draws.len() as f64 + 1.0));
        }
        let ks = crate::numeric::ks_uniform(&us);
        assert!(ks < 0.15, "SBC KS distance {ks}");
    }
}
