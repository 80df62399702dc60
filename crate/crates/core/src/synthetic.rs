//! Stochastic-block-model graphs with class-centred Gaussian features, used
//! as stand-ins for text-attributed graphs.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{GraphDataset, Splits};
use crate::error::{OmogError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainSpec {
    pub name: String,
    pub seed: u64,
    pub n: usize,
    /// Number of SBM blocks. Node `i` sits in block `i % communities` and
    /// carries class `block % num_classes`.
    pub communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub num_classes: usize,
    /// One row per class; also used verbatim as the label embeddings.
    pub centers: Array2<f32>,
    pub noise: f64,
}

impl SyntheticDomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_intra) || !(0.0..=1.0).contains(&self.p_inter) {
            return Err(OmogError::Config("edge probabilities must lie in [0, 1]".into()));
        }
        if !(self.noise > 0.0) || !self.noise.is_finite() {
            return Err(OmogError::Config("noise scale must be > 0".into()));
        }
        if self.num_classes == 0 || self.num_classes > self.n {
            return Err(OmogError::Config(format!(
                "class count {} must be in 1..=n ({})",
                self.num_classes, self.n
            )));
        }
        if self.communities < self.num_classes {
            return Err(OmogError::Config(format!(
                "need at least one community per class ({} < {})",
                self.communities, self.num_classes
            )));
        }
        if self.centers.nrows() != self.num_classes {
            return Err(OmogError::Shape(format!(
                "{} centers for {} classes",
                self.centers.nrows(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn community_of(&self, node: usize) -> usize {
        node % self.communities
    }

    pub fn class_of(&self, node: usize) -> u32 {
        (self.community_of(node) % self.num_classes) as u32
    }
}

/// Deterministic in `spec` (seed included).
pub fn generate_synthetic_domain(spec: &SyntheticDomainSpec) -> Result<GraphDataset> {
    spec.validate()?;
    let n = spec.n;
    let d = spec.centers.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut edges = Vec::new();
    for u in 0..n {
        let cu = spec.community_of(u);
        for v in (u + 1)..n {
            let p = if spec.community_of(v) == cu {
                spec.p_intra
            } else {
                spec.p_inter
            };
            if rng.gen::<f64>() < p {
                edges.push((u as u32, v as u32));
            }
        }
    }

    let noise = Normal::new(0.0, spec.noise).expect("noise validated");
    let mut features = Array2::<f32>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = spec.class_of(i);
        labels.push(Some(c));
        let center = spec.centers.row(c as usize);
        for (x, &m) in features.row_mut(i).iter_mut().zip(center.iter()) {
            *x = (m as f64 + noise.sample(&mut rng)) as f32;
        }
    }

    GraphDataset::new(
        spec.name.clone(),
        features,
        &edges,
        Some(labels),
        Some(spec.centers.clone()),
        Splits::default(),
    )
}

/// Layout of a multi-domain synthetic benchmark.
///
/// Domains are grouped into families. Every class centre is the sum of a
/// family offset shared by all classes of the family, a class direction
/// drawn inside the family's private block of coordinates, and a small
/// per-domain perturbation. Domains in the same family are therefore
/// related; domains in different families place their class signal on
/// disjoint coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSuiteSpec {
    pub seed: u64,
    pub num_domains: usize,
    pub families: usize,
    pub n: usize,
    pub d: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub family_offset_scale: f64,
    pub class_scale: f64,
    pub domain_jitter: f64,
    /// Length of a per-domain shift added to every class centre.
    pub domain_offset_scale: f64,
    pub noise: f64,
}

impl Default for DomainSuiteSpec {
    fn default() -> Self {
        DomainSuiteSpec {
            seed: 0,
            num_domains: 4,
            families: 2,
            n: 400,
            d: 32,
            num_classes: 4,
            p_intra: 0.05,
            p_inter: 0.005,
            family_offset_scale: 1.0,
            class_scale: 1.0,
            domain_jitter: 0.3,
            domain_offset_scale: 0.0,
            noise: 0.6,
        }
    }
}

impl DomainSuiteSpec {
    pub fn domain_name(&self, index: usize) -> String {
        format!("domain{index}")
    }

    /// Family of domain `index` (round-robin).
    pub fn family_of(&self, index: usize) -> usize {
        index % self.families
    }

    /// One spec per domain, deterministic in `self.seed`.
    pub fn domain_specs(&self) -> Result<Vec<SyntheticDomainSpec>> {
        if self.families == 0 || self.d < self.families {
            return Err(OmogError::Config("need 1 <= families <= d".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_0fd0_a1a5);
        let block = self.d / self.families;

        let family_offsets: Vec<Vec<f64>> = (0..self.families)
            .map(|_| gaussian_unit(&mut rng, self.d, self.family_offset_scale))
            .collect();
        // Class directions live on the family's private coordinate block.
        let family_classes: Vec<Vec<Vec<f64>>> = (0..self.families)
            .map(|f| {
                (0..self.num_classes)
                    .map(|_| {
                        let local = gaussian_unit(&mut rng, block, self.class_scale);
                        let mut full = vec![0.0; self.d];
                        full[f * block..(f + 1) * block].copy_from_slice(&local);
                        full
                    })
                    .collect()
            })
            .collect();

        (0..self.num_domains)
            .map(|p| {
                let f = self.family_of(p);
                let offset = gaussian_unit(&mut rng, self.d, self.domain_offset_scale);
                let mut centers = Array2::<f32>::zeros((self.num_classes, self.d));
                for c in 0..self.num_classes {
                    for j in 0..self.d {
                        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * self.domain_jitter
                            / (self.d as f64).sqrt();
                        centers[[c, j]] =
                            (family_offsets[f][j] + offset[j] + family_classes[f][c][j] + jitter) as f32;
                    }
                }
                Ok(SyntheticDomainSpec {
                    name: self.domain_name(p),
                    seed: self.seed.wrapping_mul(1_000_003).wrapping_add(p as u64),
                    n: self.n,
                    communities: self.num_classes,
                    p_intra: self.p_intra,
                    p_inter: self.p_inter,
                    num_classes: self.num_classes,
                    centers,
                    noise: self.noise,
                })
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<GraphDataset>> {
        self.domain_specs()?
            .iter()
            .map(generate_synthetic_domain)
            .collect()
    }
}

/// Random direction of the given Euclidean length.
fn gaussian_unit(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * scale / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(noise: f64, p_inter: f64) -> SyntheticDomainSpec {
        SyntheticDomainSpec {
            name: "t".into(),
            seed: 7,
            n: 40,
            communities: 4,
            p_intra: 0.3,
            p_inter,
            num_classes: 4,
            centers: Array2::from_shape_fn((4, 3), |(c, j)| (c * 3 + j) as f32 + 1.0),
            noise,
        }
    }

    #[test]
    fn degenerate_noise_gives_exact_centers_and_pure_components() {
        let s = spec(1e-12, 0.0);
        let ds = generate_synthetic_domain(&s).unwrap();
        for i in 0..ds.n() {
            let c = s.class_of(i) as usize;
            assert_eq!(ds.features.row(i), s.centers.row(c));
        }
        for (u, v) in ds.adjacency.edges() {
            assert_eq!(ds.label(u as usize), ds.label(v as usize));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(0.5, 0.05);
        assert_eq!(
            generate_synthetic_domain(&s).unwrap(),
            generate_synthetic_domain(&s).unwrap()
        );
    }

    #[test]
    fn rejects_more_classes_than_nodes() {
        let mut s = spec(0.5, 0.05);
        s.n = 3;
        assert!(generate_synthetic_domain(&s).is_err());
    }

    #[test]
    fn rejects_bad_probabilities_and_noise() {
        let mut s = spec(0.5, 1.5);
        assert!(s.validate().is_err());
        s.p_inter = 0.1;
        s.noise = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn intra_block_density_matches_probability() {
        let s = SyntheticDomainSpec {
            name: "dense".into(),
            seed: 3,
            n: 400,
            communities: 4,
            p_intra: 0.1,
            p_inter: 0.01,
            num_classes: 4,
            centers: Array2::zeros((4, 2)),
            noise: 0.1,
        };
        let ds = generate_synthetic_domain(&s).unwrap();
        let intra = ds
            .adjacency
            .edges()
            .iter()
            .filter(|(u, v)| s.community_of(*u as usize) == s.community_of(*v as usize))
            .count();
        // 4 blocks of 100 nodes: 4 * C(100, 2) candidate pairs.
        let pairs = 4.0 * 100.0 * 99.0 / 2.0;
        let density = intra as f64 / pairs;
        assert!((density - 0.1).abs() <= 0.03, "density {density}");
    }

    #[test]
    fn suite_domains_share_family_structure() {
        let suite = DomainSuiteSpec::default();
        let specs = suite.domain_specs().unwrap();
        assert_eq!(specs.len(), 4);
        assert_eq!(suite.family_of(0), suite.family_of(2));
        assert_ne!(suite.family_of(0), suite.family_of(1));
        let names: Vec<_> = specs.iter().map(|s| s.name.clone()).collect();
        assert_eq!(names, ["domain0", "domain1", "domain2", "domain3"]);
    }
}
