//! Shoebox room acoustics: image-source impulse responses, randomized scene
//! geometry, and beamformed impulse-response quadruples.
//!
//! Coordinates are metres with `x` along the room width, `y` along its depth and
//! `z` up. All walls share one energy absorption coefficient.

mod scene;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::beam::{steering_delays, BeamformerConfig};
use crate::dsp::{ImpulseResponse, SAMPLE_RATE, SPEED_OF_SOUND};
use crate::error::{Error, Result};

pub use scene::{sample_scene, SceneConstraints, SceneGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }

    fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub height: f64,
    pub width: f64,
    pub depth: f64,
    /// Fraction of energy absorbed per wall reflection, in (0, 1].
    pub absorption: f64,
    pub max_order: u32,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            height: 2.5,
            width: 6.0,
            depth: 6.0,
            absorption: 0.35,
            max_order: 10,
        }
    }
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.height, self.width, self.depth]
            .iter()
            .any(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(Error::Geometry("room dimensions must be positive".into()));
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::config(format!(
                "absorption {} outside (0, 1]",
                self.absorption
            )));
        }
        Ok(())
    }

    /// Extent along axis 0 (width, x), 1 (depth, y) or 2 (height, z).
    fn extent(&self, axis: usize) -> f64 {
        match axis {
            0 => self.width,
            1 => self.depth,
            _ => self.height,
        }
    }

    fn contains_strictly(&self, p: &Point3) -> bool {
        (0..3).all(|a| p.coord(a) > 0.0 && p.coord(a) < self.extent(a))
    }

    /// Smallest distance from `p` to any wall, the floor or the ceiling.
    pub fn clearance(&self, p: &Point3) -> f64 {
        (0..3)
            .map(|a| p.coord(a).min(self.extent(a) - p.coord(a)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One mirrored source: its position and how many walls it reflected off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Point3,
    pub reflections: u32,
}

/// Every image of `src` with at most `room.max_order` reflections.
///
/// Along each axis the images are indexed by a signed integer `a`: even `a` is a
/// translation by `a * L`, odd `a` additionally mirrors the source, and `|a|` is
/// the number of reflections off that axis's walls.
pub fn image_sources(room: &RoomSpec, src: &Point3) -> Vec<ImageSource> {
    let n = room.max_order as i64;
    let mut images = Vec::new();
    for a in -n..=n {
        let rest_a = n - a.abs();
        for b in -rest_a..=rest_a {
            let rest_b = rest_a - b.abs();
            for c in -rest_b..=rest_b {
                let position = Point3::new(
                    image_coord(a, src.x, room.width),
                    image_coord(b, src.y, room.depth),
                    image_coord(c, src.z, room.height),
                );
                images.push(ImageSource {
                    position,
                    reflections: (a.abs() + b.abs() + c.abs()) as u32,
                });
            }
        }
    }
    images
}

fn image_coord(index: i64, s: f64, len: f64) -> f64 {
    let mirrored = index.rem_euclid(2) == 1;
    let n = (index + mirrored as i64) / 2;
    let base = if mirrored { -s } else { s };
    base + 2.0 * n as f64 * len
}

/// Number of images for reflection order `n`: lattice points with `|a|+|b|+|c| <= n`.
pub fn image_count(n: u32) -> usize {
    let n = n as usize;
    (2 * n + 1) * (2 * n * n + 2 * n + 3) / 3
}

/// Integer-sample propagation delay for distance `d` metres.
pub fn propagation_delay(d: f64) -> usize {
    (d / SPEED_OF_SOUND * SAMPLE_RATE as f64).round() as usize
}

/// Image-source impulse response from `src` to an omnidirectional `mic`.
///
/// Each image contributes `(1 - absorption)^(r/2) / (4 pi d)` at sample
/// `round(d / c * fs)`, `r` being its reflection count.
pub fn image_source_rir(room: &RoomSpec, src: &Point3, mic: &Point3) -> Result<ImpulseResponse> {
    room.validate()?;
    if !room.contains_strictly(src) || !room.contains_strictly(mic) {
        return Err(Error::Geometry("source and microphone must be inside the room".into()));
    }
    if src.distance(mic) < 1e-9 {
        return Err(Error::Geometry("source and microphone coincide".into()));
    }
    let reflect = (1.0 - room.absorption).sqrt();
    let contributions: Vec<(usize, f64)> = image_sources(room, src)
        .into_iter()
        .map(|img| {
            let d = img.position.distance(mic);
            let amp = reflect.powi(img.reflections as i32) / (4.0 * PI * d);
            (propagation_delay(d), amp)
        })
        .collect();
    let len = contributions.iter().map(|(k, _)| k + 1).max().unwrap_or(1);
    let mut taps = vec![0.0; len];
    for (k, amp) in contributions {
        taps[k] += amp;
    }
    ImpulseResponse::new(taps)
}

/// Beamformed impulse responses `h_pq`: look direction `p`, source `q`
/// (0 = target speech, 1 = noise).
#[derive(Debug, Clone, PartialEq)]
pub struct RirQuadruple {
    pub h00: ImpulseResponse,
    pub h01: ImpulseResponse,
    pub h10: ImpulseResponse,
    pub h11: ImpulseResponse,
}

impl RirQuadruple {
    /// The same response on all four paths.
    pub fn uniform(h: ImpulseResponse) -> Self {
        Self {
            h00: h.clone(),
            h01: h.clone(),
            h10: h.clone(),
            h11: h,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &ImpulseResponse)> {
        [
            ("h00", &self.h00),
            ("h01", &self.h01),
            ("h10", &self.h10),
            ("h11", &self.h11),
        ]
        .into_iter()
    }
}

/// Sums per-microphone responses after steering each by its delay.
pub fn beamform_rirs(mic_rirs: &[ImpulseResponse], beam: &BeamformerConfig) -> Result<ImpulseResponse> {
    if mic_rirs.len() != beam.mics() {
        return Err(Error::shape(format!(
            "{} microphone responses for a {}-microphone beamformer",
            mic_rirs.len(),
            beam.mics()
        )));
    }
    let delays = steering_delays(beam).samples;
    let len = mic_rirs
        .iter()
        .zip(&delays)
        .map(|(h, &d)| (h.len() as i64 + d).max(1) as usize)
        .max()
        .unwrap_or(1);
    let mut taps = vec![0.0; len];
    for (h, &d) in mic_rirs.iter().zip(&delays) {
        for (i, &t) in h.iter().enumerate() {
            let j = i as i64 + d;
            if j >= 0 {
                taps[j as usize] += t;
            }
        }
    }
    ImpulseResponse::new(taps)
}

/// Renders `h00, h01, h10, h11` for a scene, steering the array at the true
/// angles of incidence of the speech (look 0) and noise (look 1) sources.
pub fn render_quadruple(scene: &SceneGeometry) -> Result<RirQuadruple> {
    let mics = scene.array.mic_positions();
    let per_source = |src: &Point3| -> Result<Vec<ImpulseResponse>> {
        mics.iter()
            .map(|m| image_source_rir(&scene.room, src, m))
            .collect()
    };
    let speech = per_source(&scene.src_speech)?;
    let noise = per_source(&scene.src_noise)?;
    let base = BeamformerConfig::new(scene.array.mic_offsets.clone(), 0.0)?;
    let look0 = base.with_look(scene.aoi_speech);
    let look1 = base.with_look(scene.aoi_noise);
    look0.validate()?;
    look1.validate()?;
    Ok(RirQuadruple {
        h00: beamform_rirs(&speech, &look0)?,
        h01: beamform_rirs(&noise, &look0)?,
        h10: beamform_rirs(&speech, &look1)?,
        h11: beamform_rirs(&noise, &look1)?,
    })
}

/// Linear array: microphone offsets along an axis rotated `orientation` radians
/// (azimuth) in the horizontal plane, centred at `center`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub mic_offsets: Vec<f64>,
    pub center: Point3,
    pub orientation: f64,
}

impl ArrayGeometry {
    pub fn axis(&self) -> (f64, f64) {
        (self.orientation.cos(), self.orientation.sin())
    }

    /// Horizontal unit vector perpendicular to the axis; angle 0 looks this way.
    pub fn broadside(&self) -> (f64, f64) {
        (-self.orientation.sin(), self.orientation.cos())
    }

    pub fn mic_positions(&self) -> Vec<Point3> {
        let (ax, ay) = self.axis();
        self.mic_offsets
            .iter()
            .map(|o| Point3::new(self.center.x + o * ax, self.center.y + o * ay, self.center.z))
            .collect()
    }

    /// Horizontal-plane angle of incidence of a source at `p`.
    pub fn aoi_of(&self, p: &Point3) -> f64 {
        let (dx, dy) = (p.x - self.center.x, p.y - self.center.y);
        let (ax, ay) = self.axis();
        let (bx, by) = self.broadside();
        (dx * ax + dy * ay).atan2(dx * bx + dy * by)
    }

    /// Point at horizontal range `range`, height offset `dz`, angle `aoi`.
    pub fn point_at(&self, range: f64, aoi: f64, dz: f64) -> Point3 {
        let (ax, ay) = self.axis();
        let (bx, by) = self.broadside();
        let (s, c) = aoi.sin_cos();
        Point3::new(
            self.center.x + range * (s * ax + c * bx),
            self.center.y + range * (s * ay + c * by),
            self.center.z + dz,
        )
    }
}
