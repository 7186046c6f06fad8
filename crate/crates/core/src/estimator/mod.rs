//! Rotation estimators mapping an image pair `(I^s, I^g)` to the relative
//! rotation in the camera-aligned object frame.
//!
//! Estimators see only depth images and intrinsics. The oracle kinds also
//! receive the true relative rotation as context.

mod brute;
pub mod wire;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use brute::{brute_force_cost, grid_candidates, BruteForce, BruteForceTrace};
pub use wire::ExternalEstimator;

use crate::clock::Stopwatch;
use crate::error::{Error, Result};
use crate::render::{CameraModel, DepthImage};
use crate::rng::{stream, KitRng};
use crate::so3::{rad, sample_with_angle, UnitQuaternion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub rotation: UnitQuaternion,
    pub confidence: Option<f64>,
    /// Seconds spent producing the estimate.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum EstimatorSpec {
    Perfect,
    NoisyOracle {
        sigma_deg: f64,
    },
    BruteForce {
        grid_step_deg: f64,
        /// Maximum improving sweeps per refinement step size.
        refine_iters: u32,
        /// Largest grid rotation angle, degrees.
        #[serde(default = "default_max_angle")]
        max_angle_deg: f64,
        /// Upper bound on points per cloud after farthest-point sampling.
        #[serde(default = "default_max_points")]
        max_points: usize,
        /// Charge moved points that turn away from the camera a fixed
        /// penalty instead of matching them.
        #[serde(default = "default_visibility")]
        visibility: bool,
    },
    External {
        /// `tcp://host:port` or `stdio:<command> [args...]`.
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        /// When set, both images are cropped around their foreground with
        /// this margin and resampled to the server's raster size.
        #[serde(default)]
        crop_margin: Option<f64>,
    },
}

fn default_max_angle() -> f64 {
    90.0
}

fn default_max_points() -> usize {
    2048
}

fn default_visibility() -> bool {
    true
}

fn default_timeout() -> f64 {
    30.0
}

impl EstimatorSpec {
    pub fn brute_force(grid_step_deg: f64) -> Self {
        EstimatorSpec::BruteForce {
            grid_step_deg,
            refine_iters: 4,
            max_angle_deg: default_max_angle(),
            max_points: default_max_points(),
            visibility: default_visibility(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorSpec::Perfect => Ok(()),
            EstimatorSpec::NoisyOracle { sigma_deg } => {
                if *sigma_deg >= 0.0 && sigma_deg.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "sigma_deg must be >= 0, got {sigma_deg}"
                    )))
                }
            }
            EstimatorSpec::BruteForce {
                grid_step_deg,
                max_angle_deg,
                max_points,
                ..
            } => {
                if !(*grid_step_deg > 0.0 && *grid_step_deg <= 90.0) {
                    return Err(Error::Config(format!(
                        "grid_step_deg must lie in (0, 90], got {grid_step_deg}"
                    )));
                }
                if !(*max_angle_deg > 0.0 && *max_angle_deg <= 180.0) {
                    return Err(Error::Config(format!(
                        "max_angle_deg must lie in (0, 180], got {max_angle_deg}"
                    )));
                }
                if *max_points < 3 {
                    return Err(Error::Config("max_points must be at least 3".into()));
                }
                Ok(())
            }
            EstimatorSpec::External {
                endpoint,
                timeout_s,
                crop_margin,
            } => {
                wire::Endpoint::parse(endpoint)?;
                if timeout_s.is_nan() || *timeout_s <= 0.0 {
                    return Err(Error::Config(format!(
                        "timeout_s must be > 0, got {timeout_s}"
                    )));
                }
                if crop_margin.is_some_and(|m| m.is_nan() || m < 0.0) {
                    return Err(Error::Config("crop_margin must be >= 0".into()));
                }
                Ok(())
            }
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorSpec::Perfect => "perfect",
            EstimatorSpec::NoisyOracle { .. } => "noisy_oracle",
            EstimatorSpec::BruteForce { .. } => "brute_force",
            EstimatorSpec::External { .. } => "external",
        }
    }
}

/// Inputs for one estimate.
#[derive(Debug, Clone, Copy)]
pub struct EstimateRequest<'a> {
    pub image_start: &'a DepthImage,
    pub image_goal: &'a DepthImage,
    pub camera: &'a CameraModel,
    /// True relative rotation, used only by the oracle kinds.
    pub context: Option<UnitQuaternion>,
}

pub trait RotationEstimator {
    fn estimate(&mut self, req: &EstimateRequest<'_>) -> Result<RotationEstimate>;
}

fn check_pair(req: &EstimateRequest<'_>) -> Result<()> {
    let (s, g) = (req.image_start, req.image_goal);
    if s.width() != g.width() || s.height() != g.height() {
        return Err(Error::DimensionMismatch {
            expected_w: s.width(),
            expected_h: s.height(),
            got_w: g.width(),
            got_h: g.height(),
        });
    }
    Ok(())
}

pub struct PerfectOracle;

impl RotationEstimator for PerfectOracle {
    fn estimate(&mut self, req: &EstimateRequest<'_>) -> Result<RotationEstimate> {
        check_pair(req)?;
        let rotation = req.context.ok_or(Error::MissingContext)?;
        Ok(RotationEstimate {
            rotation,
            confidence: Some(1.0),
            latency: 0.0,
        })
    }
}

/// Returns the context rotated by a random axis through an angle drawn from
/// `|Normal(0, sigma)|`.
pub struct NoisyOracle {
    sigma: f64,
    rng: KitRng,
}

impl NoisyOracle {
    pub fn new(sigma_deg: f64, rng: KitRng) -> Result<Self> {
        EstimatorSpec::NoisyOracle { sigma_deg }.validate()?;
        Ok(NoisyOracle {
            sigma: rad(sigma_deg),
            rng,
        })
    }

    fn noise_angle<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let n = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        n.sample(rng).abs()
    }
}

impl RotationEstimator for NoisyOracle {
    fn estimate(&mut self, req: &EstimateRequest<'_>) -> Result<RotationEstimate> {
        check_pair(req)?;
        let truth = req.context.ok_or(Error::MissingContext)?;
        let angle = Self::noise_angle(self.sigma, &mut self.rng);
        let noise = sample_with_angle(&mut self.rng, angle);
        Ok(RotationEstimate {
            rotation: noise.compose(&truth),
            confidence: None,
            latency: 0.0,
        })
    }
}

/// Builds the estimator selected by `spec`; `seed` drives its random
/// choices.
pub fn build(spec: &EstimatorSpec, seed: u64) -> Result<Box<dyn RotationEstimator + Send>> {
    spec.validate()?;
    Ok(match spec {
        EstimatorSpec::Perfect => Box::new(PerfectOracle),
        EstimatorSpec::NoisyOracle { sigma_deg } => {
            Box::new(NoisyOracle::new(*sigma_deg, stream(seed, "noisy-oracle"))?)
        }
        EstimatorSpec::BruteForce {
            grid_step_deg,
            refine_iters,
            max_angle_deg,
            max_points,
            visibility,
        } => Box::new(
            BruteForce::new(
                *grid_step_deg,
                *refine_iters,
                *max_angle_deg,
                *max_points,
                seed,
            )?
            .with_visibility(*visibility),
        ),
        EstimatorSpec::External {
            endpoint,
            timeout_s,
            crop_margin,
        } => Box::new(ExternalEstimator::connect(
            endpoint,
            *timeout_s,
            *crop_margin,
        )?),
    })
}

/// One-shot estimate; builds a fresh estimator for the call.
pub fn estimate(
    spec: &EstimatorSpec,
    image_start: &DepthImage,
    image_goal: &DepthImage,
    camera: &CameraModel,
    context: Option<UnitQuaternion>,
    seed: u64,
) -> Result<RotationEstimate> {
    let sw = Stopwatch::start();
    let mut est = build(spec, seed)?;
    let mut out = est.estimate(&EstimateRequest {
        image_start,
        image_goal,
        camera,
        context,
    })?;
    out.latency = sw.elapsed();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::so3::{deg, geodesic_angle};

    fn blank() -> DepthImage {
        DepthImage::zeros(8, 8)
    }

    fn req<'a>(
        img: &'a DepthImage,
        cam: &'a CameraModel,
        context: Option<UnitQuaternion>,
    ) -> EstimateRequest<'a> {
        EstimateRequest {
            image_start: img,
            image_goal: img,
            camera: cam,
            context,
        }
    }

    #[test]
    fn oracles() {
        let img = blank();
        let cam = CameraModel::default();
        let truth = UnitQuaternion::rot_x(rad(17.0));
        let out = PerfectOracle
            .estimate(&req(&img, &cam, Some(truth)))
            .unwrap();
        assert_eq!(out.rotation, truth);
        assert!(matches!(
            PerfectOracle.estimate(&req(&img, &cam, None)),
            Err(Error::MissingContext)
        ));
        let mut exact = NoisyOracle::new(0.0, seeded(1)).unwrap();
        assert_eq!(
            exact
                .estimate(&req(&img, &cam, Some(truth)))
                .unwrap()
                .rotation,
            truth
        );
        assert!(NoisyOracle::new(-1.0, seeded(1)).is_err());
    }

    #[test]
    fn noisy_oracle_mean_error() {
        let img = blank();
        let cam = CameraModel::default();
        let sigma = 3.0;
        let mut est = NoisyOracle::new(sigma, seeded(5)).unwrap();
        let truth = UnitQuaternion::rot_y(0.3);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let r = est
                    .estimate(&req(&img, &cam, Some(truth)))
                    .unwrap()
                    .rotation;
                deg(geodesic_angle(&r, &truth))
            })
            .sum::<f64>()
            / n as f64;
        let expected = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean - expected).abs() < 0.1 * expected,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn spec_serde_and_validation() {
        let spec: EstimatorSpec =
            serde_json::from_str(r#"{"kind":"BRUTE_FORCE","grid_step_deg":10,"refine_iters":3}"#)
                .unwrap();
        assert_eq!(
            spec,
            EstimatorSpec::BruteForce {
                grid_step_deg: 10.0,
                refine_iters: 3,
                max_angle_deg: 90.0,
                max_points: 2048,
                visibility: true
            }
        );
        assert!(EstimatorSpec::brute_force(0.0).validate().is_err());
        assert!(EstimatorSpec::brute_force(91.0).validate().is_err());
        assert!(EstimatorSpec::NoisyOracle { sigma_deg: -0.1 }
            .validate()
            .is_err());
        assert!(serde_json::from_str::<EstimatorSpec>(
            r#"{"kind":"NOISY_ORACLE","sigma_deg":1,"x":1}"#
        )
        .is_err());
    }
}
