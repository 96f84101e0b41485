//! Rendering and dataset construction.
//!
//! Lambda factors are mixed into a D-dimensional observation vector by a
//! fixed seeded two-layer tanh network. Two domains exist: `Synthetic` and
//! `RealProxy`. Both share the identity-channel weights, so who a sample
//! depicts survives the domain switch, while the nuisance channels are mixed
//! by different weights and the real proxy additionally passes through an
//! appearance perturbation (smoothing, gain, bias). That manufactures a
//! controllable domain gap without any real data.
//!
//! Dataset construction follows a grouped recipe: `group_identities[g]`
//! identities, each with `group_depths[g]` samples. Every identity gets one
//! fixed identity vector; per sample, the attributes selected for variation
//! are redrawn while the rest stay pinned at the canonical neutral value, the
//! residual noise channel is always redrawn, and identity mixup is applied
//! according to the requested mode. Per-identity substreams make the output
//! independent of build order.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::factor::{
    identity_mixup, sample_mixup_ratio, sample_z, FactorError, FactorMapper, FactorRole,
    FactorVector, LatentConfig, MixupMode, SoftLabel, Space,
};
use crate::fmath;
use crate::linalg::{self, Mat};
use crate::seed::{self, tag, CoreRng};

/// Rendering domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Synthetic,
    RealProxy,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Synthetic => "synthetic",
            Domain::RealProxy => "real_proxy",
        }
    }
}

/// Errors from the synthesizer.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    Factor(FactorError),
    BundleDimension { role: FactorRole, expected: usize, got: usize },
    EmptySpec,
    GroupLengthMismatch { identities: usize, depths: usize },
    ZeroGroup { group: usize },
    MixupNeedsTwoIdentities,
    PairCountNotDivisible { n_pairs: usize },
    DatasetTooSmall { why: &'static str },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::Factor(e) => write!(f, "{e}"),
            SynthError::BundleDimension { role, expected, got } => {
                write!(f, "{} vector has length {got}, renderer expects {expected}", role.name())
            }
            SynthError::EmptySpec => write!(f, "dataset spec has no groups"),
            SynthError::GroupLengthMismatch { identities, depths } => {
                write!(f, "group lists differ in length: {identities} identity groups, {depths} depth groups")
            }
            SynthError::ZeroGroup { group } => {
                write!(f, "group {group} has zero identities or zero depth")
            }
            SynthError::MixupNeedsTwoIdentities => {
                write!(f, "identity mixup needs at least two identities")
            }
            SynthError::PairCountNotDivisible { n_pairs } => {
                write!(f, "pair count {n_pairs} is not divisible by 20 (10 folds, balanced halves)")
            }
            SynthError::DatasetTooSmall { why } => write!(f, "dataset too small: {why}"),
        }
    }
}

impl core::error::Error for SynthError {}

impl From<FactorError> for SynthError {
    fn from(e: FactorError) -> Self {
        SynthError::Factor(e)
    }
}

/// An observation vector; every component lies in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= -1.0 && *v <= 1.0));
        Observation { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Appearance perturbation for the real-proxy domain: a length-3
/// moving-average smoothing, then per-observation gain and bias, then a
/// clamp back into [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub smoothing: bool,
    pub gain: (f64, f64),
    pub bias: (f64, f64),
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig { smoothing: true, gain: (0.7, 1.3), bias: (-0.1, 0.1) }
    }
}

impl PerturbConfig {
    /// A configuration that leaves observations untouched.
    pub fn identity() -> Self {
        PerturbConfig { smoothing: false, gain: (1.0, 1.0), bias: (0.0, 0.0) }
    }
}

/// Applies the appearance perturbation. Gain is drawn before bias.
pub fn appearance_perturb(obs: &Observation, cfg: &PerturbConfig, rng: &mut CoreRng) -> Observation {
    let gain = if cfg.gain.0 == cfg.gain.1 { cfg.gain.0 } else { rng.random_range(cfg.gain.0..cfg.gain.1) };
    let bias = if cfg.bias.0 == cfg.bias.1 { cfg.bias.0 } else { rng.random_range(cfg.bias.0..cfg.bias.1) };
    let n = obs.values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let smoothed = if cfg.smoothing {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            let window = &obs.values[lo..=hi];
            window.iter().sum::<f64>() / window.len() as f64
        } else {
            obs.values[i]
        };
        out.push((gain * smoothed + bias).clamp(-1.0, 1.0));
    }
    Observation { values: out }
}

/// Fixed mixing network that turns a lambda bundle into an observation.
///
/// Input columns are grouped by channel in role order; the identity block is
/// drawn from a domain-independent stream, the nuisance and noise blocks from
/// domain-keyed streams. The output layer and the biases are shared across
/// domains.
#[derive(Debug, Clone)]
pub struct RenderParams {
    pub domain: Domain,
    pub render_seed: u64,
    pub perturb: PerturbConfig,
    role_dims: [usize; 5],
    w_in: Mat, // hidden x total
    b_in: Vec<f64>,
    w_out: Mat, // obs_dim x hidden
    b_out: Vec<f64>,
}

impl RenderParams {
    pub fn new(latent: &LatentConfig, obs_dim: usize, render_seed: u64, domain: Domain) -> Self {
        let role_dims = [
            latent.identity_dim,
            latent.expression_dim,
            latent.illumination_dim,
            latent.pose_dim,
            latent.noise_dim,
        ];
        let total: usize = role_dims.iter().sum();
        let hidden = (2 * total).max(obs_dim);
        let sd_in = 2.0 / fmath::sqrt(total.max(1) as f64);

        let mut w_in = Mat::zeros(hidden, total);
        let mut col = 0;
        for role in FactorRole::ALL {
            let dim = role_dims[role.index()];
            let stream = match (role, domain) {
                (FactorRole::Identity, _) => seed::derive(render_seed, tag::RENDER, 0),
                (_, Domain::Synthetic) => seed::derive(render_seed, tag::RENDER, 10 + role.index() as u64),
                (_, Domain::RealProxy) => seed::derive(render_seed, tag::RENDER, 20 + role.index() as u64),
            };
            let mut rng = seed::rng_from(stream);
            for c in col..col + dim {
                for r in 0..hidden {
                    w_in.set(r, c, normal(&mut rng) * sd_in);
                }
            }
            col += dim;
        }

        let mut rng = seed::rng_from(seed::derive(render_seed, tag::RENDER, 1));
        let b_in = (0..hidden).map(|_| normal(&mut rng) * 0.2).collect();
        let mut w_out = Mat::zeros(obs_dim, hidden);
        let sd_out = 1.6 / fmath::sqrt(hidden as f64);
        for v in w_out.data_mut() {
            *v = normal(&mut rng) * sd_out;
        }
        let b_out = (0..obs_dim).map(|_| normal(&mut rng) * 0.1).collect();

        RenderParams {
            domain,
            render_seed,
            perturb: PerturbConfig::default(),
            role_dims,
            w_in,
            b_in,
            w_out,
            b_out,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.w_out.rows()
    }

    pub fn total_latent_dim(&self) -> usize {
        self.role_dims.iter().sum()
    }
}

fn normal(rng: &mut CoreRng) -> f64 {
    StandardNormal.sample(rng)
}

/// The five lambda-space factors that drive one render.
#[derive(Debug, Clone)]
pub struct LambdaBundle {
    pub identity: FactorVector,
    pub expression: FactorVector,
    pub illumination: FactorVector,
    pub pose: FactorVector,
    pub noise: FactorVector,
}

impl LambdaBundle {
    fn as_array(&self) -> [&FactorVector; 5] {
        [&self.identity, &self.expression, &self.illumination, &self.pose, &self.noise]
    }
}

/// Renders without the real-proxy perturbation; pure in `(bundle, params)`.
pub fn render_clean(bundle: &LambdaBundle, params: &RenderParams) -> Result<Observation, SynthError> {
    let mut concat = Vec::with_capacity(params.total_latent_dim());
    for (role, fv) in FactorRole::ALL.iter().zip(bundle.as_array()) {
        if fv.space != Space::Lambda {
            return Err(FactorError::WrongSpace { expected: Space::Lambda, got: fv.space }.into());
        }
        if fv.role != *role {
            return Err(FactorError::WrongRole { expected: *role, got: fv.role }.into());
        }
        let expected = params.role_dims[role.index()];
        if fv.len() != expected {
            return Err(SynthError::BundleDimension { role: *role, expected, got: fv.len() });
        }
        concat.extend_from_slice(&fv.values);
    }
    let mut hidden = params.b_in.clone();
    for (h, row) in hidden.iter_mut().zip(params.w_in.iter_rows()) {
        *h = fmath::tanh(*h + linalg::dot(row, &concat));
    }
    let mut out = params.b_out.clone();
    for (o, row) in out.iter_mut().zip(params.w_out.iter_rows()) {
        *o = fmath::tanh(*o + linalg::dot(row, &hidden));
    }
    Ok(Observation { values: out })
}

/// Full render: the clean mix plus, for the real proxy, the appearance
/// perturbation drawn from `rng`.
pub fn render(bundle: &LambdaBundle, params: &RenderParams, rng: &mut CoreRng) -> Result<Observation, SynthError> {
    let clean = render_clean(bundle, params)?;
    Ok(match params.domain {
        Domain::Synthetic => clean,
        Domain::RealProxy => appearance_perturb(&clean, &params.perturb, rng),
    })
}

/// Where a sample came from: the mixup ratio and the identities involved.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub phi: Option<f64>,
    pub primary: usize,
    pub secondary: Option<usize>,
}

/// One labelled observation.
#[derive(Debug, Clone)]
pub struct Sample {
    pub observation: Observation,
    pub label: SoftLabel,
    pub domain: Domain,
    pub provenance: Provenance,
}

/// Which nuisance attributes vary within an identity. The empty set is the
/// "Non" configuration; the residual noise channel always varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AttributeVariation {
    pub expression: bool,
    pub pose: bool,
    pub illumination: bool,
}

impl AttributeVariation {
    pub fn all() -> Self {
        AttributeVariation { expression: true, pose: true, illumination: true }
    }

    pub fn none() -> Self {
        AttributeVariation::default()
    }

    pub fn only(role: FactorRole) -> Self {
        let mut v = AttributeVariation::none();
        match role {
            FactorRole::Expression => v.expression = true,
            FactorRole::Pose => v.pose = true,
            FactorRole::Illumination => v.illumination = true,
            _ => {}
        }
        v
    }

    fn varies(&self, role: FactorRole) -> bool {
        match role {
            FactorRole::Expression => self.expression,
            FactorRole::Pose => self.pose,
            FactorRole::Illumination => self.illumination,
            FactorRole::Noise => true,
            FactorRole::Identity => false,
        }
    }
}

/// Identity-mixup mode for dataset construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImMode {
    Off,
    SoftLabelFullGrid,
    PrimaryLabelNarrowGrid,
}

impl ImMode {
    fn mixup_mode(self) -> Option<MixupMode> {
        match self {
            ImMode::Off => None,
            ImMode::SoftLabelFullGrid => Some(MixupMode::SoftLabelFullGrid),
            ImMode::PrimaryLabelNarrowGrid => Some(MixupMode::PrimaryLabelNarrowGrid),
        }
    }
}

/// Declarative dataset recipe.
///
/// Group `g` contributes `group_identities[g]` identities with
/// `group_depths[g]` samples each; a balanced `N_S` dataset is the single
/// group `[N]` / `[S]`. Held-out specs draw identities from a disjoint
/// stream so their identity vectors never collide with training sets built
/// from the same seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub group_identities: Vec<usize>,
    pub group_depths: Vec<usize>,
    pub attribute_variation: AttributeVariation,
    pub im_mode: ImMode,
    pub domain: Domain,
    pub seed: u64,
    pub held_out: bool,
}

impl DatasetSpec {
    /// Single-group balanced spec: `identities` classes, `depth` samples each.
    pub fn balanced(identities: usize, depth: usize, domain: Domain, seed: u64) -> Self {
        DatasetSpec {
            group_identities: vec![identities],
            group_depths: vec![depth],
            attribute_variation: AttributeVariation::all(),
            im_mode: ImMode::Off,
            domain,
            seed,
            held_out: false,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.group_identities.is_empty() {
            return Err(SynthError::EmptySpec);
        }
        if self.group_identities.len() != self.group_depths.len() {
            return Err(SynthError::GroupLengthMismatch {
                identities: self.group_identities.len(),
                depths: self.group_depths.len(),
            });
        }
        for (g, (&id, &n)) in self.group_identities.iter().zip(&self.group_depths).enumerate() {
            if id == 0 || n == 0 {
                return Err(SynthError::ZeroGroup { group: g });
            }
        }
        Ok(())
    }

    pub fn total_identities(&self) -> usize {
        self.group_identities.iter().sum()
    }

    pub fn total_samples(&self) -> usize {
        self.group_identities.iter().zip(&self.group_depths).map(|(&id, &n)| id * n).sum()
    }

    /// Per-identity sample counts in label order.
    pub fn depths_per_identity(&self) -> impl Iterator<Item = usize> + '_ {
        self.group_identities
            .iter()
            .zip(&self.group_depths)
            .flat_map(|(&id, &n)| core::iter::repeat(n).take(id))
    }

    /// Population standard deviation of per-identity sample counts; the
    /// imbalance measure for long-tail constructions.
    pub fn depth_stddev(&self) -> f64 {
        let k = self.total_identities() as f64;
        let mean = self.total_samples() as f64 / k;
        let var = self
            .depths_per_identity()
            .map(|n| {
                let d = n as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / k;
        fmath::sqrt(var)
    }
}

/// Shared generator settings used by every dataset of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub latent: LatentConfig,
    pub obs_dim: usize,
    pub render_seed: u64,
    /// Variance multiplier on the expression z-draw; the default mirrors the
    /// channel's limited diversity. Set to 1.0 for full variation.
    pub expression_diversity: f64,
}

impl GeneratorConfig {
    pub fn new(mapper_seed: u64, render_seed: u64) -> Self {
        GeneratorConfig {
            latent: LatentConfig::new(mapper_seed),
            obs_dim: 64,
            render_seed,
            expression_diversity: 0.3,
        }
    }
}

/// A fully built dataset: dense labels `0..class_count`, one domain.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_count: usize,
    pub obs_dim: usize,
    pub domain: Domain,
    /// Lambda-space identity vectors per class; empty for datasets
    /// deserialized from disk (the file format does not carry them).
    pub identity_alphas: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample indices grouped by the provenance-primary identity.
    pub fn samples_by_identity(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.provenance.primary].push(i);
        }
        groups
    }

    /// Observations as a row-major matrix, one row per sample.
    pub fn observation_matrix(&self) -> Mat {
        let mut m = Mat::zeros(self.samples.len(), self.obs_dim);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(s.observation.values());
        }
        m
    }
}

fn alpha_tag(held_out: bool) -> u64 {
    if held_out {
        tag::ALPHA_HELD_OUT
    } else {
        tag::ALPHA
    }
}

/// Builds a dataset from its spec and the shared generator configuration.
pub fn build_dataset(spec: &DatasetSpec, gen: &GeneratorConfig) -> Result<Dataset, SynthError> {
    spec.validate()?;
    gen.latent.validate()?;
    let k = spec.total_identities();
    if spec.im_mode.mixup_mode().is_some() && k < 2 {
        return Err(SynthError::MixupNeedsTwoIdentities);
    }

    let mapper = FactorMapper::new(&gen.latent);
    let params = RenderParams::new(&gen.latent, gen.obs_dim, gen.render_seed, spec.domain);

    // One fixed identity vector per class, from per-identity substreams.
    let alphas: Vec<FactorVector> = (0..k)
        .map(|i| {
            let mut rng = seed::rng_from(seed::derive(spec.seed, alpha_tag(spec.held_out), i as u64));
            let z = sample_z(FactorRole::Identity, &gen.latent, &mut rng);
            mapper.map_to_lambda(&z).map_err(SynthError::from)
        })
        .collect::<Result<_, _>>()?;

    let canonical_expression = mapper.canonical_lambda(FactorRole::Expression);
    let canonical_illumination = mapper.canonical_lambda(FactorRole::Illumination);
    let canonical_pose = mapper.canonical_lambda(FactorRole::Pose);

    let draw_nuisance = |role: FactorRole, canonical: &FactorVector, rng: &mut CoreRng| {
        if spec.attribute_variation.varies(role) {
            let mut z = sample_z(role, &gen.latent, rng);
            if role == FactorRole::Expression {
                linalg::scale(gen.expression_diversity, &mut z.values);
            }
            mapper.map_to_lambda(&z).map_err(SynthError::from)
        } else {
            Ok(canonical.clone())
        }
    };

    let mut samples = Vec::with_capacity(spec.total_samples());
    for (identity, depth) in spec.depths_per_identity().enumerate() {
        let mut rng = seed::rng_from(seed::derive(spec.seed, tag::SAMPLES, identity as u64));
        for _ in 0..depth {
            let expression = draw_nuisance(FactorRole::Expression, &canonical_expression, &mut rng)?;
            let illumination = draw_nuisance(FactorRole::Illumination, &canonical_illumination, &mut rng)?;
            let pose = draw_nuisance(FactorRole::Pose, &canonical_pose, &mut rng)?;
            let noise = mapper.map_to_lambda(&sample_z(FactorRole::Noise, &gen.latent, &mut rng))?;

            let (alpha, label, provenance) = match spec.im_mode.mixup_mode() {
                None => (
                    alphas[identity].clone(),
                    SoftLabel::hard(identity),
                    Provenance { phi: None, primary: identity, secondary: None },
                ),
                Some(mode) => {
                    let phi = sample_mixup_ratio(mode, &mut rng);
                    // Partner drawn uniformly among the other identities.
                    let mut partner = rng.random_range(0..k - 1);
                    if partner >= identity {
                        partner += 1;
                    }
                    let (mixed, label) =
                        identity_mixup(&alphas[identity], &alphas[partner], identity, partner, phi)?;
                    (
                        mixed,
                        label,
                        Provenance { phi: Some(phi.value()), primary: identity, secondary: Some(partner) },
                    )
                }
            };

            let bundle = LambdaBundle { identity: alpha, expression, illumination, pose, noise };
            let observation = render(&bundle, &params, &mut rng)?;
            samples.push(Sample { observation, label, domain: spec.domain, provenance });
        }
    }

    Ok(Dataset {
        samples,
        class_count: k,
        obs_dim: gen.obs_dim,
        domain: spec.domain,
        identity_alphas: alphas.into_iter().map(|a| a.values).collect(),
    })
}

/// One verification pair: two sample indices and whether they share an
/// identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

/// Balanced pair protocol: equal positives and negatives, split into 10
/// equally sized folds that are each balanced individually.
#[derive(Debug, Clone)]
pub struct PairSet {
    pairs: Vec<Pair>,
    folds: Vec<Vec<usize>>,
}

impl PairSet {
    pub const FOLDS: usize = 10;

    /// Assembles a pair set from raw pairs, partitioning them in order into
    /// 10 folds. Errors if the counts cannot balance.
    pub fn from_pairs(pairs: Vec<Pair>) -> Result<Self, SynthError> {
        if pairs.is_empty() || pairs.len() % 20 != 0 {
            return Err(SynthError::PairCountNotDivisible { n_pairs: pairs.len() });
        }
        let per_fold = pairs.len() / Self::FOLDS;
        let mut folds = vec![Vec::with_capacity(per_fold); Self::FOLDS];
        for i in 0..pairs.len() {
            folds[i / per_fold].push(i);
        }
        for fold in &folds {
            let positives = fold.iter().filter(|&&i| pairs[i].same).count();
            if positives * 2 != fold.len() {
                return Err(SynthError::DatasetTooSmall { why: "folds are not balanced" });
            }
        }
        Ok(PairSet { pairs, folds })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Builds the 10-fold verification pair protocol over a test dataset.
///
/// `n_pairs` must be divisible by 20 so each fold holds an equal number of
/// positives and negatives. Pairs are distinct; positives pair two different
/// samples of one identity, negatives pair samples of two identities.
pub fn build_pair_protocol(dataset: &Dataset, n_pairs: usize, rng: &mut CoreRng) -> Result<PairSet, SynthError> {
    if n_pairs == 0 || n_pairs % 20 != 0 {
        return Err(SynthError::PairCountNotDivisible { n_pairs });
    }
    let groups = dataset.samples_by_identity();
    let half = n_pairs / 2;

    let eligible: Vec<usize> = (0..groups.len()).filter(|&c| groups[c].len() >= 2).collect();
    let nonempty: Vec<usize> = (0..groups.len()).filter(|&c| !groups[c].is_empty()).collect();
    if eligible.is_empty() {
        return Err(SynthError::DatasetTooSmall { why: "no identity has two samples" });
    }
    if nonempty.len() < 2 {
        return Err(SynthError::DatasetTooSmall { why: "negative pairs need two identities" });
    }
    let positive_capacity: usize = groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum();
    let total: usize = groups.iter().map(Vec::len).sum();
    let negative_capacity =
        (total * total - groups.iter().map(|g| g.len() * g.len()).sum::<usize>()) / 2;
    if positive_capacity < half {
        return Err(SynthError::DatasetTooSmall { why: "not enough distinct positive pairs" });
    }
    if negative_capacity < half {
        return Err(SynthError::DatasetTooSmall { why: "not enough distinct negative pairs" });
    }

    let mut seen = BTreeSet::new();
    let mut positives = Vec::with_capacity(half);
    while positives.len() < half {
        let class = eligible[rng.random_range(0..eligible.len())];
        let group = &groups[class];
        let i = rng.random_range(0..group.len());
        let mut j = rng.random_range(0..group.len() - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = ordered(group[i], group[j]);
        if seen.insert((a, b)) {
            positives.push(Pair { a, b, same: true });
        }
    }

    let mut negatives = Vec::with_capacity(half);
    while negatives.len() < half {
        let i = rng.random_range(0..nonempty.len());
        let mut j = rng.random_range(0..nonempty.len() - 1);
        if j >= i {
            j += 1;
        }
        let (ci, cj) = (nonempty[i], nonempty[j]);
        let a = groups[ci][rng.random_range(0..groups[ci].len())];
        let b = groups[cj][rng.random_range(0..groups[cj].len())];
        let (a, b) = ordered(a, b);
        if seen.insert((a, b)) {
            negatives.push(Pair { a, b, same: false });
        }
    }

    // Interleave shuffled halves fold by fold so each fold stays balanced.
    positives.shuffle(rng);
    negatives.shuffle(rng);
    let per_fold_half = half / PairSet::FOLDS;
    let mut pairs = Vec::with_capacity(n_pairs);
    for f in 0..PairSet::FOLDS {
        pairs.extend_from_slice(&positives[f * per_fold_half..(f + 1) * per_fold_half]);
        pairs.extend_from_slice(&negatives[f * per_fold_half..(f + 1) * per_fold_half]);
    }
    PairSet::from_pairs(pairs)
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;

    fn generator() -> GeneratorConfig {
        GeneratorConfig::new(0xaaaa, 0xbbbb)
    }

    fn bundle_for(gen: &GeneratorConfig, seed: u64) -> LambdaBundle {
        let mapper = FactorMapper::new(&gen.latent);
        let mut rng = rng_from(seed);
        let map = |role| mapper.map_to_lambda(&sample_z(role, &gen.latent, &mut rng)).unwrap();
        LambdaBundle {
            identity: map(FactorRole::Identity),
            expression: map(FactorRole::Expression),
            illumination: map(FactorRole::Illumination),
            pose: map(FactorRole::Pose),
            noise: map(FactorRole::Noise),
        }
    }

    #[test]
    fn render_is_deterministic_and_bounded() {
        let gen = generator();
        let params = RenderParams::new(&gen.latent, gen.obs_dim, gen.render_seed, Domain::Synthetic);
        let bundle = bundle_for(&gen, 1);
        let a = render(&bundle, &params, &mut rng_from(0)).unwrap();
        let b = render(&bundle, &params, &mut rng_from(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert!(a.values().iter().all(|v| *v > -1.0 && *v < 1.0));
    }

    #[test]
    fn render_rejects_dimension_mismatch() {
        let gen = generator();
        let params = RenderParams::new(&gen.latent, gen.obs_dim, gen.render_seed, Domain::Synthetic);
        let mut bundle = bundle_for(&gen, 2);
        bundle.pose.values.push(0.0);
        assert!(matches!(
            render_clean(&bundle, &params),
            Err(SynthError::BundleDimension { role: FactorRole::Pose, .. })
        ));
    }

    #[test]
    fn render_is_identity_sensitive() {
        let gen = generator();
        let params = RenderParams::new(&gen.latent, gen.obs_dim, gen.render_seed, Domain::Synthetic);
        let bundle_a = bundle_for(&gen, 3);
        let mut bundle_b = bundle_a.clone();
        let mapper = FactorMapper::new(&gen.latent);
        let mut rng = rng_from(999);
        bundle_b.identity = mapper
            .map_to_lambda(&sample_z(FactorRole::Identity, &gen.latent, &mut rng))
            .unwrap();
        let a = render_clean(&bundle_a, &params).unwrap();
        let b = render_clean(&bundle_b, &params).unwrap();
        let dist = linalg::euclidean_distance(a.values(), b.values());
        assert!(dist > 1e-4, "identity change moved the render by only {dist}");
    }

    #[test]
    fn perturb_identity_config_is_noop() {
        let obs = Observation::new(vec![0.3, -0.7, 0.1, 0.9]);
        let out = appearance_perturb(&obs, &PerturbConfig::identity(), &mut rng_from(1));
        assert_eq!(out, obs);
    }

    #[test]
    fn smoothing_preserves_constant_vectors() {
        let obs = Observation::new(vec![0.25; 16]);
        let cfg = PerturbConfig { smoothing: true, gain: (1.0, 1.0), bias: (0.0, 0.0) };
        let out = appearance_perturb(&obs, &cfg, &mut rng_from(1));
        assert_eq!(out, obs);
    }

    #[test]
    fn perturb_gain_is_uniform_per_decile() {
        // Constant observation, bias disabled: the output reads off the gain.
        let obs = Observation::new(vec![0.5; 8]);
        let cfg = PerturbConfig { smoothing: true, gain: (0.7, 1.3), bias: (0.0, 0.0) };
        let mut rng = rng_from(77);
        let n = 10_000;
        let mut deciles = [0usize; 10];
        let mut displacement = 0.0;
        for _ in 0..n {
            let out = appearance_perturb(&obs, &cfg, &mut rng);
            displacement += linalg::euclidean_distance(out.values(), obs.values());
            let gain = out.values()[0] / 0.5;
            let d = (((gain - 0.7) / 0.6) * 10.0).floor().clamp(0.0, 9.0) as usize;
            deciles[d] += 1;
        }
        assert!(displacement / n as f64 > 0.0);
        for (d, &count) in deciles.iter().enumerate() {
            let freq = count as f64 / n as f64;
            assert!((freq - 0.1).abs() < 0.02, "decile {d} frequency {freq}");
        }
    }

    #[test]
    fn long_tail_specs_match_published_statistics() {
        let ub1 = DatasetSpec {
            group_identities: vec![400; 5],
            group_depths: vec![2, 2, 6, 40, 200],
            ..DatasetSpec::balanced(1, 1, Domain::Synthetic, 0)
        };
        let ub2 = DatasetSpec {
            group_identities: vec![400; 5],
            group_depths: vec![4, 16, 30, 80, 120],
            ..DatasetSpec::balanced(1, 1, Domain::Synthetic, 0)
        };
        let balanced = DatasetSpec {
            group_identities: vec![400; 5],
            group_depths: vec![50; 5],
            ..DatasetSpec::balanced(1, 1, Domain::Synthetic, 0)
        };
        for spec in [&ub1, &ub2, &balanced] {
            assert_eq!(spec.total_identities(), 2_000);
            assert_eq!(spec.total_samples(), 100_000);
        }
        assert!((ub1.depth_stddev() - 76.35).abs() < 0.01, "ub1 stddev {}", ub1.depth_stddev());
        assert!((ub2.depth_stddev() - 43.52).abs() < 0.01, "ub2 stddev {}", ub2.depth_stddev());
        assert_eq!(balanced.depth_stddev(), 0.0);
    }

    #[test]
    fn build_dataset_counts_and_labels() {
        let gen = generator();
        let spec = DatasetSpec {
            group_identities: vec![3, 2],
            group_depths: vec![4, 6],
            ..DatasetSpec::balanced(1, 1, Domain::Synthetic, 5)
        };
        let ds = build_dataset(&spec, &gen).unwrap();
        assert_eq!(ds.len(), 3 * 4 + 2 * 6);
        assert_eq!(ds.class_count, 5);
        let groups = ds.samples_by_identity();
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 4, 6, 6]);
        for s in &ds.samples {
            assert!(s.label.max_class() < ds.class_count);
        }
    }

    #[test]
    fn build_dataset_rejects_bad_specs() {
        let gen = generator();
        let mut spec = DatasetSpec::balanced(0, 5, Domain::Synthetic, 1);
        assert!(matches!(build_dataset(&spec, &gen), Err(SynthError::ZeroGroup { .. })));
        spec = DatasetSpec::balanced(5, 0, Domain::Synthetic, 1);
        assert!(matches!(build_dataset(&spec, &gen), Err(SynthError::ZeroGroup { .. })));
        spec = DatasetSpec::balanced(5, 2, Domain::Synthetic, 1);
        spec.group_depths.push(3);
        assert!(matches!(build_dataset(&spec, &gen), Err(SynthError::GroupLengthMismatch { .. })));
        spec = DatasetSpec::balanced(1, 4, Domain::Synthetic, 1);
        spec.im_mode = ImMode::SoftLabelFullGrid;
        assert!(matches!(build_dataset(&spec, &gen), Err(SynthError::MixupNeedsTwoIdentities)));
    }

    #[test]
    fn attribute_pinning_collapses_classes_to_points() {
        let mut gen = generator();
        gen.latent.noise_dim = 0;
        let mut spec = DatasetSpec::balanced(3, 5, Domain::Synthetic, 9);
        spec.attribute_variation = AttributeVariation::none();
        let ds = build_dataset(&spec, &gen).unwrap();
        for group in ds.samples_by_identity() {
            let first = &ds.samples[group[0]].observation;
            for &i in &group {
                assert_eq!(&ds.samples[i].observation, first);
            }
        }
    }

    #[test]
    fn determinism_and_domain_gap() {
        let gen = generator();
        let spec = DatasetSpec::balanced(4, 3, Domain::Synthetic, 21);
        let a = build_dataset(&spec, &gen).unwrap();
        let b = build_dataset(&spec, &gen).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.observation, y.observation);
            assert_eq!(x.label, y.label);
        }
        let mut real_spec = spec.clone();
        real_spec.domain = Domain::RealProxy;
        let r = build_dataset(&real_spec, &gen).unwrap();
        // Same seeds, same identities; only the domain changed.
        let mean_gap: f64 = a
            .samples
            .iter()
            .zip(&r.samples)
            .map(|(s, t)| linalg::euclidean_distance(s.observation.values(), t.observation.values()))
            .sum::<f64>()
            / a.len() as f64;
        assert!(mean_gap > 0.0, "no gap between matched domain renders");
    }

    #[test]
    fn held_out_identities_do_not_collide() {
        let gen = generator();
        let train = build_dataset(&DatasetSpec::balanced(20, 2, Domain::Synthetic, 33), &gen).unwrap();
        let mut spec = DatasetSpec::balanced(20, 2, Domain::Synthetic, 33);
        spec.held_out = true;
        let test = build_dataset(&spec, &gen).unwrap();
        for ta in &train.identity_alphas {
            for ha in &test.identity_alphas {
                assert_ne!(ta, ha);
            }
        }
    }

    #[test]
    fn im_modes_shape_labels() {
        let gen = generator();
        let mut spec = DatasetSpec::balanced(6, 10, Domain::Synthetic, 55);
        spec.im_mode = ImMode::SoftLabelFullGrid;
        let soft = build_dataset(&spec, &gen).unwrap();
        assert!(soft.samples.iter().any(|s| !s.label.is_hard()));
        for s in &soft.samples {
            assert_eq!(s.provenance.phi.is_some(), true);
            let entries = s.label.entries();
            let sum: f64 = entries.iter().map(|e| e.1).sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
        spec.im_mode = ImMode::PrimaryLabelNarrowGrid;
        let narrow = build_dataset(&spec, &gen).unwrap();
        for s in &narrow.samples {
            assert!(s.label.is_hard());
            assert_eq!(s.label.primary(), s.provenance.primary);
            assert!(s.provenance.phi.unwrap() >= 0.6);
        }
    }

    #[test]
    fn pair_protocol_structure() {
        let gen = generator();
        let ds = build_dataset(&DatasetSpec::balanced(30, 12, Domain::Synthetic, 7), &gen).unwrap();
        let pairs = build_pair_protocol(&ds, 6_000, &mut rng_from(1)).unwrap();
        assert_eq!(pairs.len(), 6_000);
        assert_eq!(pairs.folds().len(), 10);
        let positives = pairs.pairs().iter().filter(|p| p.same).count();
        assert_eq!(positives, 3_000);
        for fold in pairs.folds() {
            assert_eq!(fold.len(), 600);
            assert_eq!(fold.iter().filter(|&&i| pairs.pairs()[i].same).count(), 300);
        }
        // Distinctness.
        let unique: BTreeSet<(usize, usize)> = pairs.pairs().iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(unique.len(), 6_000);
        // Determinism.
        let again = build_pair_protocol(&ds, 6_000, &mut rng_from(1)).unwrap();
        assert_eq!(pairs.pairs(), again.pairs());
    }

    #[test]
    fn pair_protocol_rejects_degenerate_inputs() {
        let gen = generator();
        let one_id = build_dataset(&DatasetSpec::balanced(1, 30, Domain::Synthetic, 3), &gen).unwrap();
        assert!(matches!(
            build_pair_protocol(&one_id, 40, &mut rng_from(0)),
            Err(SynthError::DatasetTooSmall { .. })
        ));
        let ds = build_dataset(&DatasetSpec::balanced(4, 4, Domain::Synthetic, 3), &gen).unwrap();
        assert!(matches!(
            build_pair_protocol(&ds, 50, &mut rng_from(0)),
            Err(SynthError::PairCountNotDivisible { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn dataset_counts_obey_group_arithmetic(
            groups in proptest::collection::vec((1usize..4, 1usize..5), 1..4),
            seed in 0u64..1_000,
        ) {
            let gen = generator();
            let spec = DatasetSpec {
                group_identities: groups.iter().map(|g| g.0).collect(),
                group_depths: groups.iter().map(|g| g.1).collect(),
                ..DatasetSpec::balanced(1, 1, Domain::Synthetic, seed)
            };
            let ds = build_dataset(&spec, &gen).unwrap();
            prop_assert_eq!(ds.len(), spec.total_samples());
            prop_assert_eq!(ds.class_count, spec.total_identities());
            let groups = ds.samples_by_identity();
            let depths: alloc::vec::Vec<usize> = spec.depths_per_identity().collect();
            prop_assert_eq!(groups.iter().map(|g| g.len()).collect::<alloc::vec::Vec<_>>(), depths);
        }
    }
}
