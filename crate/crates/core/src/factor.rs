//! Disentangled latent factors and identity mixup.
//!
//! An observation is controlled by five independent latent channels:
//! identity, expression, illumination, pose, and residual noise. Each channel
//! is drawn in z-space from a standard normal and pushed through a fixed,
//! seeded two-layer tanh map into lambda-space, whose components always lie
//! strictly inside (-1, 1). Identity mixup interpolates two identity vectors
//! (and their labels) on a fixed ratio grid.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fmath;
use crate::linalg::{self, Mat};
use crate::seed::{self, tag, CoreRng};

/// The five independent latent channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FactorRole {
    Identity,
    Expression,
    Illumination,
    Pose,
    Noise,
}

impl FactorRole {
    pub const ALL: [FactorRole; 5] = [
        FactorRole::Identity,
        FactorRole::Expression,
        FactorRole::Illumination,
        FactorRole::Pose,
        FactorRole::Noise,
    ];

    pub fn index(self) -> usize {
        match self {
            FactorRole::Identity => 0,
            FactorRole::Expression => 1,
            FactorRole::Illumination => 2,
            FactorRole::Pose => 3,
            FactorRole::Noise => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FactorRole::Identity => "identity",
            FactorRole::Expression => "expression",
            FactorRole::Illumination => "illumination",
            FactorRole::Pose => "pose",
            FactorRole::Noise => "noise",
        }
    }
}

/// Which space a factor vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Z,
    Lambda,
}

/// One latent channel value: a role, a space, and a real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector {
    pub role: FactorRole,
    pub space: Space,
    pub values: Vec<f64>,
}

impl FactorVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-role dimensions plus the mapper seed.
///
/// The dimensions are artifact choices. `noise_dim` may be zero, which pins
/// the residual channel entirely; all other channels need at least one
/// component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentConfig {
    pub identity_dim: usize,
    pub expression_dim: usize,
    pub illumination_dim: usize,
    pub pose_dim: usize,
    pub noise_dim: usize,
    pub mapper_seed: u64,
}

impl LatentConfig {
    pub fn new(mapper_seed: u64) -> Self {
        LatentConfig {
            identity_dim: 16,
            expression_dim: 4,
            illumination_dim: 4,
            pose_dim: 3,
            noise_dim: 8,
            mapper_seed,
        }
    }

    pub fn dim(&self, role: FactorRole) -> usize {
        match role {
            FactorRole::Identity => self.identity_dim,
            FactorRole::Expression => self.expression_dim,
            FactorRole::Illumination => self.illumination_dim,
            FactorRole::Pose => self.pose_dim,
            FactorRole::Noise => self.noise_dim,
        }
    }

    /// Total lambda dimension across all five channels.
    pub fn total_dim(&self) -> usize {
        FactorRole::ALL.iter().map(|&r| self.dim(r)).sum()
    }

    pub fn validate(&self) -> Result<(), FactorError> {
        for role in [FactorRole::Identity, FactorRole::Expression, FactorRole::Illumination, FactorRole::Pose] {
            if self.dim(role) == 0 {
                return Err(FactorError::ZeroDimension { role });
            }
        }
        Ok(())
    }
}

/// Errors from factor-space operations.
#[derive(Debug, Clone, PartialEq)]
pub enum FactorError {
    DimensionMismatch { role: FactorRole, expected: usize, got: usize },
    WrongSpace { expected: Space, got: Space },
    WrongRole { expected: FactorRole, got: FactorRole },
    ZeroDimension { role: FactorRole },
    RatioOffGrid { value: f64 },
    DuplicateClasses { class: usize },
    BadLabelWeights { w1: f64, w2: f64 },
}

impl fmt::Display for FactorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactorError::DimensionMismatch { role, expected, got } => {
                write!(f, "{} vector has length {got}, configured dimension is {expected}", role.name())
            }
            FactorError::WrongSpace { expected, got } => {
                write!(f, "expected a {expected:?}-space vector, got {got:?}")
            }
            FactorError::WrongRole { expected, got } => {
                write!(f, "expected role {}, got {}", expected.name(), got.name())
            }
            FactorError::ZeroDimension { role } => {
                write!(f, "{} dimension must be at least 1", role.name())
            }
            FactorError::RatioOffGrid { value } => {
                write!(f, "mixup ratio {value} is not on the mode's 0.05 grid")
            }
            FactorError::DuplicateClasses { class } => {
                write!(f, "soft label references class {class} twice")
            }
            FactorError::BadLabelWeights { w1, w2 } => {
                write!(f, "label weights ({w1}, {w2}) must lie in [0, 1] and sum to 1")
            }
        }
    }
}

impl core::error::Error for FactorError {}

/// A label as a convex combination of one or two classes.
///
/// Entries are kept in canonical order (descending weight, ascending class on
/// ties) so equal labels compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    entries: Vec<(usize, f64)>,
}

impl SoftLabel {
    pub fn hard(class: usize) -> Self {
        SoftLabel { entries: vec![(class, 1.0)] }
    }

    /// Two-class label. Weight-0/1 inputs collapse to the hard label.
    pub fn mixed(c1: usize, w1: f64, c2: usize, w2: f64) -> Result<Self, FactorError> {
        if !(0.0..=1.0).contains(&w1) || !(0.0..=1.0).contains(&w2) || ((w1 + w2) - 1.0).abs() > 1e-12 {
            return Err(FactorError::BadLabelWeights { w1, w2 });
        }
        if w1 == 1.0 || w2 == 0.0 {
            return Ok(SoftLabel::hard(c1));
        }
        if w2 == 1.0 || w1 == 0.0 {
            return Ok(SoftLabel::hard(c2));
        }
        if c1 == c2 {
            return Err(FactorError::DuplicateClasses { class: c1 });
        }
        let entries = if w1 > w2 || (w1 == w2 && c1 < c2) {
            vec![(c1, w1), (c2, w2)]
        } else {
            vec![(c2, w2), (c1, w1)]
        };
        Ok(SoftLabel { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_hard(&self) -> bool {
        self.entries.len() == 1
    }

    /// The heaviest class (first entry in canonical order).
    pub fn primary(&self) -> usize {
        self.entries[0].0
    }

    pub fn max_class(&self) -> usize {
        self.entries.iter().map(|&(c, _)| c).max().unwrap_or(0)
    }
}

/// Ratio grids for identity mixup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixupMode {
    /// phi in {0.00, 0.05, ..., 1.00}; both classes enter the label.
    SoftLabelFullGrid,
    /// phi in {0.60, 0.65, ..., 1.00}; the primary label is kept unchanged.
    PrimaryLabelNarrowGrid,
}

impl MixupMode {
    fn index_range(self) -> core::ops::RangeInclusive<u8> {
        match self {
            MixupMode::SoftLabelFullGrid => 0..=20,
            MixupMode::PrimaryLabelNarrowGrid => 12..=20,
        }
    }
}

/// An interpolation ratio pinned to its mode's 0.05 grid.
///
/// Stored as the grid index so `value()` and `complement()` are consistent
/// f64s across uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixupRatio {
    index: u8,
    mode: MixupMode,
}

impl MixupRatio {
    pub fn from_index(index: u8, mode: MixupMode) -> Result<Self, FactorError> {
        if !mode.index_range().contains(&index) {
            return Err(FactorError::RatioOffGrid { value: f64::from(index) / 20.0 });
        }
        Ok(MixupRatio { index, mode })
    }

    /// Accepts a value that sits on the mode's grid within 1e-9.
    pub fn from_value(value: f64, mode: MixupMode) -> Result<Self, FactorError> {
        let scaled = value * 20.0;
        let k = fmath::round(scaled);
        if !(0.0..=20.0).contains(&k) || (scaled - k).abs() > 2e-8 {
            return Err(FactorError::RatioOffGrid { value });
        }
        MixupRatio::from_index(k as u8, mode).map_err(|_| FactorError::RatioOffGrid { value })
    }

    pub fn value(self) -> f64 {
        f64::from(self.index) / 20.0
    }

    /// The grid point `1 - value()`, exact as a grid member.
    pub fn complement_value(self) -> f64 {
        f64::from(20 - self.index) / 20.0
    }

    pub fn mode(self) -> MixupMode {
        self.mode
    }

    pub fn grid_index(self) -> u8 {
        self.index
    }
}

/// Draws a ratio uniformly from the mode's grid.
pub fn sample_mixup_ratio(mode: MixupMode, rng: &mut CoreRng) -> MixupRatio {
    let range = mode.index_range();
    let lo = *range.start();
    let hi = *range.end();
    let index = rng.random_range(lo..=hi);
    MixupRatio { index, mode }
}

/// Draws a z-space vector for `role`, each component standard normal.
pub fn sample_z(role: FactorRole, cfg: &LatentConfig, rng: &mut CoreRng) -> FactorVector {
    let dim = cfg.dim(role);
    let values = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    FactorVector { role, space: Space::Z, values }
}

/// Interpolates two identity vectors and their labels on the phi grid.
///
/// The vector is `phi * alpha1 + (1 - phi) * alpha2` with both coefficients
/// taken from the grid, so swapping the arguments and complementing phi gives
/// a bitwise-identical result. Endpoints return the untouched input.
pub fn identity_mixup(
    alpha1: &FactorVector,
    alpha2: &FactorVector,
    eta1: usize,
    eta2: usize,
    phi: MixupRatio,
) -> Result<(FactorVector, SoftLabel), FactorError> {
    for alpha in [alpha1, alpha2] {
        if alpha.role != FactorRole::Identity {
            return Err(FactorError::WrongRole { expected: FactorRole::Identity, got: alpha.role });
        }
        if alpha.space != Space::Lambda {
            return Err(FactorError::WrongSpace { expected: Space::Lambda, got: alpha.space });
        }
    }
    if alpha1.len() != alpha2.len() {
        return Err(FactorError::DimensionMismatch {
            role: FactorRole::Identity,
            expected: alpha1.len(),
            got: alpha2.len(),
        });
    }
    let endpoint = phi.grid_index() == 0 || phi.grid_index() == 20;
    if eta1 == eta2 && !endpoint {
        return Err(FactorError::DuplicateClasses { class: eta1 });
    }

    if phi.grid_index() == 20 {
        return Ok((alpha1.clone(), SoftLabel::hard(eta1)));
    }
    if phi.grid_index() == 0 {
        return Ok((alpha2.clone(), SoftLabel::hard(eta2)));
    }

    let w1 = phi.value();
    let w2 = phi.complement_value();
    let values = alpha1
        .values
        .iter()
        .zip(&alpha2.values)
        .map(|(a, b)| w1 * a + w2 * b)
        .collect();
    let mixed = FactorVector { role: FactorRole::Identity, space: Space::Lambda, values };
    let label = match phi.mode() {
        MixupMode::SoftLabelFullGrid => SoftLabel::mixed(eta1, w1, eta2, w2)?,
        MixupMode::PrimaryLabelNarrowGrid => SoftLabel::hard(eta1),
    };
    Ok((mixed, label))
}

/// The fixed z-to-lambda map: one seeded two-layer tanh network per role.
///
/// Weights are a pure function of `(mapper_seed, role)`; the map never
/// trains. The final tanh keeps every lambda component strictly inside
/// (-1, 1).
#[derive(Debug, Clone)]
pub struct FactorMapper {
    cfg: LatentConfig,
    per_role: Vec<RoleMap>,
}

#[derive(Debug, Clone)]
struct RoleMap {
    w1: Mat, // hidden x dim
    b1: Vec<f64>,
    w2: Mat, // dim x hidden
    b2: Vec<f64>,
}

impl FactorMapper {
    pub fn new(cfg: &LatentConfig) -> Self {
        let per_role = FactorRole::ALL
            .iter()
            .map(|&role| {
                let dim = cfg.dim(role);
                let hidden = dim * 2;
                let mut rng = seed::rng_from(seed::derive(cfg.mapper_seed, tag::MAPPER, role.index() as u64));
                let w1 = random_mat(hidden, dim, 1.0 / fmath::sqrt(dim.max(1) as f64), &mut rng);
                let b1 = random_vec(hidden, 0.3, &mut rng);
                let w2 = random_mat(dim, hidden, 1.0 / fmath::sqrt(hidden.max(1) as f64), &mut rng);
                let b2 = random_vec(dim, 0.3, &mut rng);
                RoleMap { w1, b1, w2, b2 }
            })
            .collect();
        FactorMapper { cfg: cfg.clone(), per_role }
    }

    pub fn config(&self) -> &LatentConfig {
        &self.cfg
    }

    /// Maps a z-space vector into lambda-space.
    pub fn map_to_lambda(&self, z: &FactorVector) -> Result<FactorVector, FactorError> {
        if z.space != Space::Z {
            return Err(FactorError::WrongSpace { expected: Space::Z, got: z.space });
        }
        let dim = self.cfg.dim(z.role);
        if z.len() != dim {
            return Err(FactorError::DimensionMismatch { role: z.role, expected: dim, got: z.len() });
        }
        let map = &self.per_role[z.role.index()];
        let mut hidden = map.b1.clone();
        for (h, row) in hidden.iter_mut().zip(map.w1.iter_rows()) {
            *h = fmath::tanh(*h + linalg::dot(row, &z.values));
        }
        let mut out = map.b2.clone();
        for (o, row) in out.iter_mut().zip(map.w2.iter_rows()) {
            *o = fmath::tanh(*o + linalg::dot(row, &hidden));
        }
        Ok(FactorVector { role: z.role, space: Space::Lambda, values: out })
    }

    /// Lambda image of the zero z-vector: the canonical "neutral" value used
    /// to pin attributes that are not varied.
    pub fn canonical_lambda(&self, role: FactorRole) -> FactorVector {
        let zero = FactorVector { role, space: Space::Z, values: vec![0.0; self.cfg.dim(role)] };
        self.map_to_lambda(&zero).expect("zero vector always has the configured dimension")
    }
}

fn random_mat(rows: usize, cols: usize, sd: f64, rng: &mut CoreRng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in m.data_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *v = n * sd;
    }
    m
}

fn random_vec(len: usize, sd: f64, rng: &mut CoreRng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let n: f64 = StandardNormal.sample(rng);
            n * sd
        })
        .collect()
}
