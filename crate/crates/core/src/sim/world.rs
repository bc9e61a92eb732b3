use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mix_all, Pose};
use crate::descriptor::{GlobalDescriptor, ObservationDescriptors, Segments};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub seed: u64,
    /// Descriptor dimension; must be even.
    pub dim: usize,
    /// Metres per unit of embedded position.
    pub length_scale: f64,
    /// Weight of the heading components of the embedding.
    pub heading_weight: f64,
    /// Distance ahead of the camera, in metres, that the view is centred on.
    pub view_depth: f64,
    /// Angular offset of the left and right segments, in radians.
    pub segment_offset: f64,
    pub noise_std: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 512,
            length_scale: 2.0,
            heading_weight: 0.7,
            view_depth: 1.5,
            segment_offset: 0.378,
            noise_std: 0.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 || !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!("sim dim {} must be even and at least 2", self.dim)));
        }
        if !(self.length_scale > 0.0) {
            return Err(Error::Config("length_scale must be positive".into()));
        }
        for (name, v) in [
            ("heading_weight", self.heading_weight),
            ("view_depth", self.view_depth),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.segment_offset.is_finite() {
            return Err(Error::Config("segment_offset must be finite".into()));
        }
        Ok(())
    }
}

/// Which part of the image a descriptor stands for; keys the noise stream.
#[derive(Clone, Copy, Debug)]
enum View {
    Full = 0,
    Left = 1,
    Right = 2,
}

#[derive(Clone, Debug)]
pub struct SimWorld {
    params: SimParams,
    /// Row-major `dim/2 x 4` projection.
    w: Vec<[f64; 4]>,
    b: Vec<f64>,
}

impl SimWorld {
    pub fn new(params: SimParams) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let half = params.dim / 2;
        let w = (0..half)
            .map(|_| std::array::from_fn(|_| StandardNormal.sample(&mut rng)))
            .collect();
        let b = (0..half).map(|_| rng.random_range(0.0..TAU)).collect();
        Ok(Self { params, w, b })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    fn embed(&self, x: f64, y: f64, theta: f64) -> [f64; 4] {
        let p = &self.params;
        let (s, c) = theta.sin_cos();
        [
            (x + p.view_depth * c) / p.length_scale,
            (y + p.view_depth * s) / p.length_scale,
            p.heading_weight * c,
            p.heading_weight * s,
        ]
    }

    fn render(&self, pose: &Pose, theta: f64, view: View) -> GlobalDescriptor {
        let e = self.embed(pose.x, pose.y, theta);
        let half = self.w.len();
        let mut v = vec![0.0; 2 * half];
        for (k, (row, b)) in self.w.iter().zip(&self.b).enumerate() {
            let z = row[0] * e[0] + row[1] * e[1] + row[2] * e[2] + row[3] * e[3] + b;
            let (s, c) = z.sin_cos();
            v[k] = c;
            v[half + k] = s;
        }
        if self.params.noise_std > 0.0 {
            let seed = mix_all(&[
                self.params.seed,
                pose.x.to_bits(),
                pose.y.to_bits(),
                pose.theta.to_bits(),
                view as u64,
            ]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, self.params.noise_std).expect("noise_std validated");
            for x in v.iter_mut() {
                *x += normal.sample(&mut rng);
            }
        }
        GlobalDescriptor::normalize(&v).expect("random features have norm sqrt(dim/2) before noise")
    }

    /// Full-view descriptor at `pose`.
    pub fn full_descriptor(&self, pose: &Pose) -> GlobalDescriptor {
        self.render(pose, pose.theta, View::Full)
    }

    /// Full view plus left/middle/right segments, tagged with frame 0.
    pub fn descriptor_at(&self, pose: &Pose) -> ObservationDescriptors {
        self.observe(pose, 0)
    }

    pub fn observe(&self, pose: &Pose, frame_index: u64) -> ObservationDescriptors {
        let off = self.params.segment_offset;
        let full = self.full_descriptor(pose);
        let segments = Segments {
            left: self.render(pose, pose.theta + off, View::Left),
            middle: full.clone(),
            right: self.render(pose, pose.theta - off, View::Right),
        };
        ObservationDescriptors::new(frame_index, full).with_segments(segments)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::cosine_similarity;
    use std::f64::consts::PI;

    fn world(seed: u64) -> SimWorld {
        SimWorld::new(SimParams {
            seed,
            ..SimParams::default()
        })
        .unwrap()
    }

    fn sim(w: &SimWorld, a: Pose, b: Pose) -> f64 {
        cosine_similarity(&w.full_descriptor(&a), &w.full_descriptor(&b)).unwrap().value()
    }

    #[test]
    fn same_pose_is_identical() {
        let w = world(3);
        let p = Pose::new(1.0, -2.0, 0.4);
        assert_eq!(w.descriptor_at(&p), w.descriptor_at(&p));
        assert_eq!(sim(&w, p, p), 1.0);
        let again = world(3);
        assert_eq!(again.descriptor_at(&p), w.descriptor_at(&p));
    }

    #[test]
    fn noise_is_deterministic_per_pose() {
        let w = SimWorld::new(SimParams {
            seed: 1,
            noise_std: 0.05,
            ..SimParams::default()
        })
        .unwrap();
        let p = Pose::new(0.5, 0.5, 0.0);
        assert_eq!(w.full_descriptor(&p), w.full_descriptor(&p));
        let clean = world(1);
        assert!(sim(&clean, p, p) > cosine_similarity(&clean.full_descriptor(&p), &w.full_descriptor(&p)).unwrap().value());
    }

    #[test]
    fn segments_are_rotated_views() {
        let w = world(2);
        let p = Pose::new(0.0, 0.0, 0.3);
        let obs = w.descriptor_at(&p);
        let seg = obs.segments().unwrap();
        assert_eq!(seg.middle, obs.full);
        let off = w.params().segment_offset;
        let left = w.full_descriptor(&Pose::new(0.0, 0.0, 0.3 + off));
        let right = w.full_descriptor(&Pose::new(0.0, 0.0, 0.3 - off));
        assert!(cosine_similarity(&seg.left, &left).unwrap().value() > 1.0 - 1e-12);
        assert!(cosine_similarity(&seg.right, &right).unwrap().value() > 1.0 - 1e-12);
        assert!(cosine_similarity(&seg.left, &seg.right).unwrap().value() < 0.99);
    }

    #[test]
    fn far_poses_decorrelate_on_average() {
        let l = SimParams::default().length_scale;
        let mean: f64 = (0..100)
            .map(|s| {
                let w = world(s);
                sim(&w, Pose::new(0.0, 0.0, 0.0), Pose::new(10.0 * l, 0.0, 0.0))
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean.abs() <= 0.2, "mean {mean}");
    }

    #[test]
    fn reversed_heading_falls_below_node_threshold() {
        let mean: f64 = (0..100)
            .map(|s| {
                let w = world(s);
                sim(&w, Pose::new(0.0, 0.0, 0.0), Pose::new(0.0, 0.0, PI))
            })
            .sum::<f64>()
            / 100.0;
        assert!(mean < 0.60, "mean {mean}");
    }

    #[test]
    fn mean_similarity_decays_with_distance() {
        let dists: Vec<f64> = (0..25).map(|i| i as f64 * 0.25).collect();
        let means: Vec<f64> = dists
            .iter()
            .map(|&d| {
                (0..100)
                    .map(|s| {
                        let w = world(s);
                        let h = 0.3 * s as f64;
                        sim(&w, Pose::new(0.0, 0.0, h), Pose::new(d * h.cos(), d * h.sin(), h))
                    })
                    .sum::<f64>()
                    / 100.0
            })
            .collect();
        let mut pairs = 0;
        let mut violations = 0;
        for i in 0..means.len() {
            for j in i + 1..means.len() {
                pairs += 1;
                if means[j] > means[i] {
                    violations += 1;
                }
            }
        }
        assert!(violations as f64 <= 0.02 * pairs as f64, "{violations}/{pairs}");
    }

    #[test]
    fn rejects_odd_dim() {
        assert!(SimWorld::new(SimParams {
            dim: 7,
            ..SimParams::default()
        })
        .is_err());
    }
}
