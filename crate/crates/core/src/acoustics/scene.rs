use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const ROOM_WIDTH: (f64, f64) = (2.5, 5.0);
pub const ROOM_LENGTH: (f64, f64) = (3.0, 9.0);
pub const ROOM_HEIGHT: (f64, f64) = (2.2, 3.5);
pub const T60_RANGE: (f64, f64) = (0.2, 0.5);

pub const NUM_MICS: usize = 3;
pub const ARRAY_DIAMETER: f64 = 0.10;
pub const ARRAY_HEIGHT: f64 = 1.5;
pub const ARRAY_WALL_CLEARANCE: f64 = 1.0;

pub const TARGET_RANGE: (f64, f64) = (0.3, 1.0);
pub const NUM_INTERFERERS: usize = 5;
pub const INTERFERER_MIN_DISTANCE: f64 = 1.0;
/// Angular half-width of the interferer-free wedge around the target ray.
pub const INTERFERER_EXCLUSION: f64 = 20.0 * PI / 180.0;
pub const SPEAKER_HEIGHT_MEAN: f64 = 1.6;
pub const SPEAKER_HEIGHT_STD: f64 = 0.08;
/// Minimum source-to-surface distance.
pub const SOURCE_WALL_MARGIN: f64 = 0.1;
/// Height clearance from floor and ceiling for sampled speakers.
pub const HEIGHT_CLEARANCE: f64 = 0.2;

pub const MAX_REJECTIONS: usize = 10_000;
/// Draws per interferer segment before the whole scene is redrawn.
pub const SEGMENT_ATTEMPTS: usize = 200;

pub type Point = [f64; 3];

/// Room, array pose and source layout of one simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// (width, length, height) in metres.
    pub room: Point,
    pub t60: f64,
    pub mic_center: Point,
    pub mic_rotation: f64,
    pub mic_positions: Vec<Point>,
    pub target_pos: Point,
    pub interferer_pos: Vec<Point>,
    pub seed: u64,
}

impl Scene {
    /// Target first, then interferers.
    pub fn sources(&self) -> Vec<Point> {
        std::iter::once(self.target_pos)
            .chain(self.interferer_pos.iter().copied())
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.room.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [w, l, h] = self.room;
        2.0 * (w * l + w * h + l * h)
    }

    pub fn target_distance(&self) -> f64 {
        horizontal_distance(&self.target_pos, &self.mic_center)
    }
}

/// Microphone coordinates of the circular array, channel 0 on the rotation ray.
pub fn circular_array(center: Point, rotation: f64) -> Vec<Point> {
    let r = ARRAY_DIAMETER / 2.0;
    (0..NUM_MICS)
        .map(|m| {
            let a = rotation + 2.0 * PI * m as f64 / NUM_MICS as f64;
            [center[0] + r * a.cos(), center[1] + r * a.sin(), center[2]]
        })
        .collect()
}

pub fn horizontal_distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Angle of `p` as seen from `center` in the xy-plane, in [0, 2π).
pub fn azimuth(center: &Point, p: &Point) -> f64 {
    (p[1] - center[1]).atan2(p[0] - center[0]).rem_euclid(2.0 * PI)
}

/// Signed difference `a - b` wrapped to (-π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

pub fn inside_room(room: &Point, p: &Point, margin: f64) -> bool {
    p.iter()
        .zip(room)
        .all(|(&x, &size)| x >= margin && x <= size - margin)
}

/// Angular segment `j` of the interferer region: (start, width) relative to
/// the target ray.
pub fn interferer_segment(j: usize) -> (f64, f64) {
    let width = (2.0 * PI - 2.0 * INTERFERER_EXCLUSION) / NUM_INTERFERERS as f64;
    (INTERFERER_EXCLUSION + j as f64 * width, width)
}

fn speaker_height(rng: &mut ChaCha8Rng, room_height: f64) -> f64 {
    let normal = Normal::new(SPEAKER_HEIGHT_MEAN, SPEAKER_HEIGHT_STD).expect("valid std");
    normal
        .sample(rng)
        .clamp(HEIGHT_CLEARANCE, room_height - HEIGHT_CLEARANCE)
}

/// Draws a scene following the six-speaker extraction recipe.
///
/// Room size and T60 are uniform over their ranges, the array centre keeps
/// 1 m clearance from the walls, the target sits on the array's rotation ray
/// and each interferer is drawn uniformly over the floor area of its angular
/// segment. Draws violating a constraint are rejected and redrawn.
pub fn sample_scene(seed: u64) -> Result<Scene> {
    let mut rng = rng_from_seed(seed);
    let mut rejections = 0usize;
    'scene: loop {
        if rejections > MAX_REJECTIONS {
            return Err(Error::SceneRejected(rejections));
        }
        let room = [
            rng.gen_range(ROOM_WIDTH.0..=ROOM_WIDTH.1),
            rng.gen_range(ROOM_LENGTH.0..=ROOM_LENGTH.1),
            rng.gen_range(ROOM_HEIGHT.0..=ROOM_HEIGHT.1),
        ];
        let t60 = rng.gen_range(T60_RANGE.0..=T60_RANGE.1);
        let mic_center = [
            rng.gen_range(ARRAY_WALL_CLEARANCE..=room[0] - ARRAY_WALL_CLEARANCE),
            rng.gen_range(ARRAY_WALL_CLEARANCE..=room[1] - ARRAY_WALL_CLEARANCE),
            ARRAY_HEIGHT,
        ];
        let rotation = rng.gen_range(0.0..2.0 * PI);

        let range = rng.gen_range(TARGET_RANGE.0..=TARGET_RANGE.1);
        let target_pos = [
            mic_center[0] + range * rotation.cos(),
            mic_center[1] + range * rotation.sin(),
            speaker_height(&mut rng, room[2]),
        ];
        if !inside_room(&room, &target_pos, SOURCE_WALL_MARGIN) {
            rejections += 1;
            continue 'scene;
        }

        let mut interferer_pos = Vec::with_capacity(NUM_INTERFERERS);
        for j in 0..NUM_INTERFERERS {
            let (start, width) = interferer_segment(j);
            let mut attempts = 0;
            loop {
                if rejections > MAX_REJECTIONS {
                    return Err(Error::SceneRejected(rejections));
                }
                if attempts == SEGMENT_ATTEMPTS {
                    continue 'scene;
                }
                attempts += 1;
                let p = [
                    rng.gen_range(SOURCE_WALL_MARGIN..=room[0] - SOURCE_WALL_MARGIN),
                    rng.gen_range(SOURCE_WALL_MARGIN..=room[1] - SOURCE_WALL_MARGIN),
                    0.0,
                ];
                let rel = angle_diff(azimuth(&mic_center, &p), rotation).rem_euclid(2.0 * PI);
                if horizontal_distance(&p, &mic_center) >= INTERFERER_MIN_DISTANCE
                    && rel >= start
                    && rel < start + width
                {
                    interferer_pos.push([p[0], p[1], speaker_height(&mut rng, room[2])]);
                    break;
                }
                rejections += 1;
            }
        }

        return Ok(Scene {
            room,
            t60,
            mic_center,
            mic_rotation: rotation,
            mic_positions: circular_array(mic_center, rotation),
            target_pos,
            interferer_pos,
            seed,
        });
    }
}

/// Checks every geometric constraint of a sampled scene; returns the first
/// violation as text.
pub fn validate_scene(scene: &Scene) -> std::result::Result<(), String> {
    let [w, l, h] = scene.room;
    let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
    if !within(w, ROOM_WIDTH) || !within(l, ROOM_LENGTH) || !within(h, ROOM_HEIGHT) {
        return Err(format!("room {:?} out of range", scene.room));
    }
    if !within(scene.t60, T60_RANGE) {
        return Err(format!("t60 {} out of range", scene.t60));
    }
    let c = scene.mic_center;
    if c[0] < ARRAY_WALL_CLEARANCE
        || c[0] > w - ARRAY_WALL_CLEARANCE
        || c[1] < ARRAY_WALL_CLEARANCE
        || c[1] > l - ARRAY_WALL_CLEARANCE
        || (c[2] - ARRAY_HEIGHT).abs() > 1e-12
    {
        return Err(format!("array centre {c:?} violates wall clearance"));
    }
    if scene.mic_positions.len() != NUM_MICS {
        return Err("wrong number of microphones".into());
    }
    for m in &scene.mic_positions {
        if (distance(m, &c) - ARRAY_DIAMETER / 2.0).abs() > 1e-9 {
            return Err(format!("microphone {m:?} off the array circle"));
        }
    }
    let r = scene.target_distance();
    if !within(r, TARGET_RANGE) {
        return Err(format!("target range {r}"));
    }
    if angle_diff(azimuth(&c, &scene.target_pos), scene.mic_rotation).abs() > 1e-9 {
        return Err("target off the rotation ray".into());
    }
    if scene.interferer_pos.len() != NUM_INTERFERERS {
        return Err("wrong number of interferers".into());
    }
    for (j, p) in scene.interferer_pos.iter().enumerate() {
        if horizontal_distance(p, &c) < INTERFERER_MIN_DISTANCE {
            return Err(format!("interferer {j} too close"));
        }
        let rel = angle_diff(azimuth(&c, p), scene.mic_rotation);
        if rel.abs() < INTERFERER_EXCLUSION {
            return Err(format!("interferer {j} inside the exclusion wedge"));
        }
        let (start, width) = interferer_segment(j);
        let rel = rel.rem_euclid(2.0 * PI);
        if rel < start - 1e-12 || rel > start + width + 1e-12 {
            return Err(format!("interferer {j} outside its segment"));
        }
    }
    for (j, p) in scene.sources().iter().enumerate() {
        if !inside_room(&scene.room, p, 0.0) {
            return Err(format!("source {j} outside the room"));
        }
    }
    Ok(())
}
