use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, Point3, RoomSpec};
use crate::beam::KINECT_OFFSETS;
use crate::error::{Error, Result};

const MAX_DRAWS: usize = 10_000;

/// Randomization ranges for [`sample_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConstraints {
    /// Relative jitter of each room dimension (0.2 = +-20 %).
    pub dim_jitter: f64,
    pub min_distance: f64,
    pub max_distance: f64,
    /// Minimum distance of every source and microphone to any surface.
    pub clearance: f64,
    /// Nominal speech angle of incidence, degrees from broadside.
    pub speech_aoi_deg: f64,
    pub noise_aoi_deg: f64,
    /// Uniform angle jitter around the nominal angles, degrees.
    pub aoi_jitter_deg: f64,
    /// Maximum source height offset relative to the array, metres.
    pub height_jitter: f64,
    pub mic_offsets: Vec<f64>,
    /// Use the mean geometry instead of sampling.
    pub zero_jitter: bool,
}

impl Default for SceneConstraints {
    fn default() -> Self {
        Self {
            dim_jitter: 0.2,
            min_distance: 1.6,
            max_distance: 2.4,
            clearance: 1.0,
            speech_aoi_deg: 45.0,
            noise_aoi_deg: -45.0,
            aoi_jitter_deg: 30.0,
            height_jitter: 0.3,
            mic_offsets: KINECT_OFFSETS.to_vec(),
            zero_jitter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGeometry {
    pub room: RoomSpec,
    pub array: ArrayGeometry,
    pub src_speech: Point3,
    pub src_noise: Point3,
    /// Horizontal-plane angles of incidence at the array, radians.
    pub aoi_speech: f64,
    pub aoi_noise: f64,
}

impl SceneGeometry {
    /// The mean of every sampling distribution: nominal room, array in the
    /// middle of the floor plan at mid height, sources at the mean distance and
    /// nominal angles, level with the array.
    pub fn mean(nominal: &RoomSpec, constraints: &SceneConstraints) -> Result<SceneGeometry> {
        let array = ArrayGeometry {
            mic_offsets: constraints.mic_offsets.clone(),
            center: Point3::new(nominal.width / 2.0, nominal.depth / 2.0, nominal.height / 2.0),
            orientation: 0.0,
        };
        let range = 0.5 * (constraints.min_distance + constraints.max_distance);
        let scene = Self::assemble(*nominal, array, range, range, constraints, 0.0, 0.0, 0.0, 0.0);
        if !scene.satisfies(constraints) {
            return Err(Error::Unsatisfiable(1));
        }
        Ok(scene)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        room: RoomSpec,
        array: ArrayGeometry,
        speech_dist: f64,
        noise_dist: f64,
        constraints: &SceneConstraints,
        speech_jitter: f64,
        noise_jitter: f64,
        speech_dz: f64,
        noise_dz: f64,
    ) -> SceneGeometry {
        let place = |dist: f64, aoi: f64, dz: f64| {
            let range = (dist * dist - dz * dz).max(0.0).sqrt();
            array.point_at(range, aoi, dz)
        };
        let aoi_speech = (constraints.speech_aoi_deg + speech_jitter).to_radians();
        let aoi_noise = (constraints.noise_aoi_deg + noise_jitter).to_radians();
        let src_speech = place(speech_dist, aoi_speech, speech_dz);
        let src_noise = place(noise_dist, aoi_noise, noise_dz);
        SceneGeometry {
            room,
            aoi_speech: array.aoi_of(&src_speech),
            aoi_noise: array.aoi_of(&src_noise),
            array,
            src_speech,
            src_noise,
        }
    }

    /// Distance from the speech source to the array centre.
    pub fn speaker_distance(&self) -> f64 {
        self.src_speech.distance(&self.array.center)
    }

    /// Smallest surface clearance over both sources and every microphone.
    pub fn min_clearance(&self) -> f64 {
        self.array
            .mic_positions()
            .iter()
            .chain([&self.src_speech, &self.src_noise])
            .map(|p| self.room.clearance(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn satisfies(&self, c: &SceneConstraints) -> bool {
        let d = self.speaker_distance();
        let eps = 1e-9;
        d >= c.min_distance - eps
            && d <= c.max_distance + eps
            && self.min_clearance() >= c.clearance - eps
            && self.aoi_speech.abs() <= std::f64::consts::FRAC_PI_2
            && self.aoi_noise.abs() <= std::f64::consts::FRAC_PI_2
    }
}

/// Draws a random scene by rejection sampling; deterministic for a given seed.
pub fn sample_scene(seed: u64, nominal: &RoomSpec, constraints: &SceneConstraints) -> Result<SceneGeometry> {
    nominal.validate()?;
    if constraints.zero_jitter {
        return SceneGeometry::mean(nominal, constraints);
    }
    if constraints.min_distance > constraints.max_distance || constraints.min_distance <= 0.0 {
        return Err(Error::config("invalid speaker distance range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = |rng: &mut ChaCha8Rng, x: f64, rel: f64| x * (1.0 + rng.random_range(-rel..=rel));
    let c = constraints;
    for _ in 0..MAX_DRAWS {
        let room = RoomSpec {
            height: jitter(&mut rng, nominal.height, c.dim_jitter),
            width: jitter(&mut rng, nominal.width, c.dim_jitter),
            depth: jitter(&mut rng, nominal.depth, c.dim_jitter),
            ..*nominal
        };
        let inside = |rng: &mut ChaCha8Rng, extent: f64| {
            if extent > 2.0 * c.clearance {
                rng.random_range(c.clearance..=extent - c.clearance)
            } else {
                extent / 2.0
            }
        };
        let center = Point3::new(
            inside(&mut rng, room.width),
            inside(&mut rng, room.depth),
            inside(&mut rng, room.height),
        );
        let array = ArrayGeometry {
            mic_offsets: c.mic_offsets.clone(),
            center,
            orientation: rng.random_range(0.0..std::f64::consts::TAU),
        };
        let dist = |rng: &mut ChaCha8Rng| rng.random_range(c.min_distance..=c.max_distance);
        let speech_dist = dist(&mut rng);
        let noise_dist = dist(&mut rng);
        let angle = |rng: &mut ChaCha8Rng| rng.random_range(-c.aoi_jitter_deg..=c.aoi_jitter_deg);
        let speech_jitter = angle(&mut rng);
        let noise_jitter = angle(&mut rng);
        let height = |rng: &mut ChaCha8Rng| {
            if c.height_jitter > 0.0 {
                rng.random_range(-c.height_jitter..=c.height_jitter)
            } else {
                0.0
            }
        };
        let speech_dz = height(&mut rng);
        let noise_dz = height(&mut rng);
        let scene = SceneGeometry::assemble(
            room,
            array,
            speech_dist,
            noise_dist,
            c,
            speech_jitter,
            noise_jitter,
            speech_dz,
            noise_dz,
        );
        if scene.satisfies(c) {
            return Ok(scene);
        }
    }
    Err(Error::Unsatisfiable(MAX_DRAWS))
}
