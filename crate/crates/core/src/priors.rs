//! Latent distributions fed to generators, and uniform one-hot label sources.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymmetricEigen};
use crate::rng::Rng;
use crate::NUM_CLASSES;

/// One Gaussian component of a 2-D mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: [f64; 2],
    /// Row-major 2x2 covariance.
    pub covariance: [[f64; 2]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct MixturePrior {
    components: Vec<Component>,
    weights: Vec<f64>,
    factors: Vec<[[f64; 2]; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureSpec {
    components: Vec<Component>,
    weights: Vec<f64>,
}

impl TryFrom<MixtureSpec> for MixturePrior {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        Self::new(spec.components, spec.weights)
    }
}

impl From<MixturePrior> for MixtureSpec {
    fn from(p: MixturePrior) -> Self {
        Self {
            components: p.components,
            weights: p.weights,
        }
    }
}

impl MixturePrior {
    pub fn new(components: Vec<Component>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} components with {} weights",
                components.len(),
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights must be a probability vector, sum is {total}"
            )));
        }
        let factors = components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                psd_factor(&c.covariance).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "covariance of component {i} is not symmetric PSD"
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            components,
            weights,
            factors,
        })
    }

    /// Four equally weighted isotropic components with means on the ± axes:
    /// `s·(1,0)`, `s·(0,1)`, `s·(−1,0)`, `s·(0,−1)`. Adjacent means are
    /// orthogonal.
    pub fn orthogonal(separation: f64, stddev: f64) -> Result<Self> {
        if !(separation > 0.0) || !(stddev > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "separation and stddev must be positive, got {separation} and {stddev}"
            )));
        }
        let var = stddev * stddev;
        let components = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]
            .into_iter()
            .map(|[x, y]| Component {
                mean: [separation * x, separation * y],
                covariance: [[var, 0.0], [0.0, var]],
            })
            .collect();
        Self::new(components, vec![0.25; 4])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> Vec<[f64; 2]> {
        self.components.iter().map(|c| c.mean).collect()
    }

    /// Index of the mean closest to `point` (lowest index on ties).
    pub fn nearest_mode(&self, point: &[f64]) -> usize {
        nearest(&self.means(), point)
    }

    /// Draws the component first, then the point, so the returned ids are
    /// the exact ground truth for each row.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
        let ids: Vec<usize> = (0..n).map(|_| self.draw_component(rng)).collect();
        let points = self.sample_components(&ids, rng);
        (points, ids)
    }

    /// One point per requested component id.
    pub fn sample_components(&self, ids: &[usize], rng: &mut Rng) -> Matrix {
        let mut out = Matrix::zeros(ids.len(), 2);
        for (r, &k) in ids.iter().enumerate() {
            let (e0, e1): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
            let c = &self.components[k];
            let l = &self.factors[k];
            out.set(r, 0, c.mean[0] + l[0][0] * e0 + l[0][1] * e1);
            out.set(r, 1, c.mean[1] + l[1][0] * e0 + l[1][1] * e1);
        }
        out
    }

    fn draw_component(&self, rng: &mut Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }
}

/// Symmetric square root of a 2x2 PSD matrix, used as a sampling factor.
fn psd_factor(cov: &[[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    if (cov[0][1] - cov[1][0]).abs() > 1e-12 {
        return None;
    }
    let m = Matrix::from_rows(cov).ok()?;
    let eig = SymmetricEigen::new(&m).ok()?;
    if eig.values.iter().any(|&l| l < -1e-12) {
        return None;
    }
    let root = eig.reconstruct_with(|l| l.max(0.0).sqrt());
    Some([
        [root.get(0, 0), root.get(0, 1)],
        [root.get(1, 0), root.get(1, 1)],
    ])
}

pub(crate) fn nearest(means: &[[f64; 2]], point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, m) in means.iter().enumerate() {
        let d = (point[0] - m[0]).powi(2) + (point[1] - m[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Zero-mean, identity-covariance Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    dim: usize,
}

impl NormalPrior {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("normal prior needs dim >= 1".into()));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Matrix {
        let data = (0..n * self.dim)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Matrix::from_vec(n, self.dim, data).expect("sized buffer")
    }
}

/// Either prior, as carried by a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Mixture(MixturePrior),
    Normal(NormalPrior),
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Mixture(_) => 2,
            Prior::Normal(p) => p.dim(),
        }
    }

    /// Samples plus the mixture component of each row (`None` for a normal prior).
    pub fn sample(&self, n: usize, rng: &mut Rng) -> (Matrix, Option<Vec<usize>>) {
        match self {
            Prior::Mixture(m) => {
                let (x, ids) = m.sample(n, rng);
                (x, Some(ids))
            }
            Prior::Normal(p) => (p.sample(n, rng), None),
        }
    }
}

/// Uniform class ids encoded as one-hot rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSource {
    pub num_classes: usize,
}

impl Default for LabelSource {
    fn default() -> Self {
        Self {
            num_classes: NUM_CLASSES,
        }
    }
}

impl LabelSource {
    pub fn one_hot(&self, n: usize, rng: &mut Rng) -> (Matrix, Vec<usize>) {
        let ids: Vec<usize> = (0..n)
            .map(|_| rng.random_range(0..self.num_classes))
            .collect();
        (one_hot_matrix(&ids, self.num_classes), ids)
    }
}

/// Encodes class ids as one-hot rows.
pub fn one_hot_matrix(ids: &[usize], num_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(ids.len(), num_classes);
    for (r, &k) in ids.iter().enumerate() {
        m.set(r, k, 1.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn orthogonal_mixture_layout() {
        let p = MixturePrior::orthogonal(3.0, 0.5).unwrap();
        let means = p.means();
        assert_eq!(
            means,
            vec![[3.0, 0.0], [0.0, 3.0], [-3.0, 0.0], [0.0, -3.0]]
        );
        assert_eq!(p.weights(), &[0.25; 4]);
        for k in 0..4 {
            let (a, b) = (means[k], means[(k + 1) % 4]);
            assert_eq!(a[0] * b[0] + a[1] * b[1], 0.0);
            assert!(((a[0] * a[0] + a[1] * a[1]).sqrt() - 3.0).abs() < 1e-15);
        }
        assert!(MixturePrior::orthogonal(0.0, 1.0).is_err());
        assert!(MixturePrior::orthogonal(1.0, -1.0).is_err());
    }

    #[test]
    fn rejects_bad_weights_and_covariances() {
        let c = Component {
            mean: [0.0, 0.0],
            covariance: [[1.0, 0.0], [0.0, 1.0]],
        };
        assert!(MixturePrior::new(vec![c.clone(), c.clone()], vec![0.5, 0.6]).is_err());
        let bad = Component {
            mean: [0.0, 0.0],
            covariance: [[1.0, 2.0], [2.0, 1.0]],
        };
        assert!(MixturePrior::new(vec![bad], vec![1.0]).is_err());
    }

    #[test]
    fn single_sample_has_one_id() {
        let p = MixturePrior::orthogonal(3.0, 0.5).unwrap();
        let (x, ids) = p.sample(1, &mut seeded(0));
        assert_eq!(x.shape(), (1, 2));
        assert_eq!(ids.len(), 1);
    }

    #[test]
    fn one_hot_rows_are_valid_and_replayable() {
        let src = LabelSource::default();
        let (m, ids) = src.one_hot(50, &mut seeded(5));
        for (r, &k) in ids.iter().enumerate() {
            assert_eq!(crate::nn::one_hot_class(m.row(r)), Some(k));
        }
        let (m2, ids2) = src.one_hot(50, &mut seeded(5));
        assert_eq!(m, m2);
        assert_eq!(ids, ids2);
    }
}
