//! The seeded standard scene suites.
//!
//! Both suites share one rig: 160x96 pixels, `fx = fy = 100`, and cameras at
//! `t-1` / `t+1` displaced 0.4 m left / right of the time-`t` camera. A
//! static point at depth `z` therefore moves `40 / z` pixels horizontally
//! between `t` and either neighbour.
//!
//! Moving-suite sprites sit at `z_t = 40 / n` for integer `n`, so their
//! time-`t` appearance lands on whole pixels in both neighbour views and
//! their inverse depth coincides with a default hypothesis bin. Every sprite
//! footprint, in every camera and at every time, keeps a 16 px margin from
//! the image border and stays clear of the other sprites.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SPEC_VERSION;
use super::{CameraPlacement, CameraSpec, ObjectSpec, PlaneSpec, PriorSpec, SceneSpec, TextureSpec};

pub const SUITE_WIDTH: usize = 160;
pub const SUITE_HEIGHT: usize = 96;
pub const SUITE_FOCAL: f64 = 100.0;
pub const SUITE_BASELINE: f64 = 0.4;
/// Default suite size.
pub const SUITE_SIZE: usize = 20;

const MARGIN: f64 = 16.0;
const SPRITE_GAP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    /// Rigid scenes, no dynamic objects.
    Static,
    /// One fronto-parallel background with one or two moving sprites.
    Moving,
}

impl std::str::FromStr for SuiteKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "static" => Ok(SuiteKind::Static),
            "moving" => Ok(SuiteKind::Moving),
            _ => Err(crate::Error::InvalidParameter(format!(
                "suite kind {s:?}: expected `static` or `moving`"
            ))),
        }
    }
}

pub fn suite_camera() -> CameraSpec {
    CameraSpec {
        fx: SUITE_FOCAL,
        fy: SUITE_FOCAL,
        cx: (SUITE_WIDTH as f64 - 1.0) / 2.0,
        cy: (SUITE_HEIGHT as f64 - 1.0) / 2.0,
        width: SUITE_WIDTH,
        height: SUITE_HEIGHT,
        prev: CameraPlacement {
            position: [-SUITE_BASELINE, 0.0, 0.0],
            rotation_deg: [0.0; 3],
        },
        next: CameraPlacement {
            position: [SUITE_BASELINE, 0.0, 0.0],
            rotation_deg: [0.0; 3],
        },
    }
}

/// `count` scenes of `kind`, fully determined by `seed`.
pub fn standard_suite(kind: SuiteKind, count: usize, seed: u64) -> Vec<SceneSpec> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9));
            match kind {
                SuiteKind::Static => static_scene(&mut rng),
                SuiteKind::Moving => moving_scene(&mut rng),
            }
        })
        .collect()
}

/// Base lattice of plane textures in pixels. Coarse lattices keep bilinear
/// resampling error well below the cost change of one hypothesis bin.
const PLANE_CELL_PX: std::ops::Range<f64> = 44.0..56.0;
/// Base lattice of sprite textures in pixels; sprites are small.
const SPRITE_CELL_PX: std::ops::Range<f64> = 14.0..18.0;

/// Texture whose base lattice projects to `cell_px` pixels at depth `z`.
fn texture(rng: &mut ChaCha8Rng, z: f64, cell_px: std::ops::Range<f64>) -> TextureSpec {
    let px: f64 = rng.random_range(cell_px);
    TextureSpec {
        contrast: rng.random_range(0.3..0.4),
        ..TextureSpec::value_noise(rng.random(), px * z / SUITE_FOCAL)
    }
}

fn static_scene(rng: &mut ChaCha8Rng) -> SceneSpec {
    let mut camera = suite_camera();
    let depth = rng.random_range(5.0..8.0);
    let tilted = rng.random_bool(0.5);
    let normal = if tilted {
        [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), 1.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let mut planes = vec![PlaneSpec {
        depth,
        offset: [0.0, 0.0],
        normal,
        half_extent: None,
        texture: texture(rng, depth, PLANE_CELL_PX),
    }];
    if rng.random_bool(0.5) {
        let z = rng.random_range(3.2..4.5);
        let half_px = [rng.random_range(18.0..30.0), rng.random_range(12.0..20.0)];
        let centre_px = [rng.random_range(-30.0..30.0), rng.random_range(-12.0..12.0)];
        planes.push(PlaneSpec {
            depth: z,
            offset: [centre_px[0] * z / SUITE_FOCAL, centre_px[1] * z / SUITE_FOCAL],
            normal: [0.0, 0.0, 1.0],
            half_extent: Some([half_px[0] * z / SUITE_FOCAL, half_px[1] * z / SUITE_FOCAL]),
            texture: texture(rng, z, PLANE_CELL_PX),
        });
    }
    for (placement, sign) in [(&mut camera.prev, -1.0), (&mut camera.next, 1.0)] {
        placement.position = [
            sign * SUITE_BASELINE + rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.2..0.2),
        ];
        if rng.random_bool(0.5) {
            placement.rotation_deg = [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
        }
    }
    SceneSpec {
        spec_version: SPEC_VERSION,
        camera,
        planes,
        objects: vec![],
        prior: PriorSpec::default(),
    }
}

/// Pixel bounding box `[u0, u1, v0, v1]` of a sprite centred at `c` seen
/// from a camera at `cam`.
fn footprint(c: [f64; 3], size: [f64; 2], cam: [f64; 3]) -> [f64; 4] {
    let cx = (SUITE_WIDTH as f64 - 1.0) / 2.0;
    let cy = (SUITE_HEIGHT as f64 - 1.0) / 2.0;
    let z = c[2] - cam[2];
    let u = |x: f64| SUITE_FOCAL * (x - cam[0]) / z + cx;
    let v = |y: f64| SUITE_FOCAL * (y - cam[1]) / z + cy;
    [
        u(c[0] - size[0] / 2.0),
        u(c[0] + size[0] / 2.0),
        v(c[1] - size[1] / 2.0),
        v(c[1] + size[1] / 2.0),
    ]
}

fn inside(b: &[f64; 4]) -> bool {
    b[0] >= MARGIN
        && b[2] >= MARGIN
        && b[1] <= SUITE_WIDTH as f64 - 1.0 - MARGIN
        && b[3] <= SUITE_HEIGHT as f64 - 1.0 - MARGIN
}

fn disjoint(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a[1] + SPRITE_GAP < b[0] || b[1] + SPRITE_GAP < a[0] || a[3] + SPRITE_GAP < b[2] || b[3] + SPRITE_GAP < a[2]
}

/// Every footprint that the pipeline touches: each time step in each camera.
fn footprints(o: &ObjectSpec, cams: &[[f64; 3]; 3]) -> Vec<[f64; 4]> {
    let mut out = Vec::with_capacity(9);
    for cam in cams {
        for c in &o.trajectory {
            out.push(footprint(*c, o.size, *cam));
        }
    }
    out
}

fn moving_scene(rng: &mut ChaCha8Rng) -> SceneSpec {
    let camera = suite_camera();
    let cams = [camera.prev.position, [0.0; 3], camera.next.position];
    let depth = rng.random_range(10.0..14.0);
    let planes = vec![PlaneSpec {
        depth,
        offset: [0.0, 0.0],
        normal: [0.0, 0.0, 1.0],
        half_extent: None,
        texture: texture(rng, depth, PLANE_CELL_PX),
    }];
    let wanted = if rng.random_bool(0.5) { 2 } else { 1 };
    let mut objects: Vec<ObjectSpec> = Vec::new();
    let mut boxes: Vec<[f64; 4]> = Vec::new();
    let mut attempts = 0;
    while objects.len() < wanted || objects.is_empty() {
        attempts += 1;
        if attempts > 10_000 && !objects.is_empty() {
            break;
        }
        let n: u32 = rng.random_range(6..=11);
        let z = 40.0 / n as f64;
        let size = [
            rng.random_range(18.0..30.0) * z / SUITE_FOCAL,
            rng.random_range(14.0..24.0) * z / SUITE_FOCAL,
        ];
        let centre = [
            rng.random_range(-50.0..50.0) * z / SUITE_FOCAL,
            rng.random_range(-15.0..15.0) * z / SUITE_FOCAL,
            z,
        ];
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let motion = [
            sign * rng.random_range(0.3..0.7),
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.3..0.3),
        ];
        let at = |k: f64| {
            [
                centre[0] + k * motion[0],
                centre[1] + k * motion[1],
                centre[2] + k * motion[2],
            ]
        };
        let obj = ObjectSpec {
            size,
            trajectory: [at(-1.0), centre, at(1.0)],
            texture: texture(rng, z, SPRITE_CELL_PX),
        };
        let fp = footprints(&obj, &cams);
        if !fp.iter().all(inside) {
            continue;
        }
        // Boxes are compared per slot so that only simultaneous views are
        // required to be disjoint; time-t appearances splatted into the
        // neighbour views must also stay clear.
        let clear = objects.iter().enumerate().all(|(j, _)| {
            let other = &boxes[j * 9..(j + 1) * 9];
            fp.iter().all(|a| other.iter().all(|b| disjoint(a, b)))
        });
        if !clear {
            continue;
        }
        boxes.extend(fp);
        objects.push(obj);
    }
    SceneSpec {
        spec_version: SPEC_VERSION,
        camera,
        planes,
        objects,
        prior: PriorSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenesim::render;

    #[test]
    fn suites_are_seeded() {
        for kind in [SuiteKind::Static, SuiteKind::Moving] {
            let a = standard_suite(kind, 4, 11);
            assert_eq!(a, standard_suite(kind, 4, 11));
            assert_ne!(a, standard_suite(kind, 4, 12));
        }
    }

    #[test]
    fn suite_scenes_render() {
        for s in standard_suite(SuiteKind::Static, 3, 1)
            .into_iter()
            .chain(standard_suite(SuiteKind::Moving, 3, 1))
        {
            let t = render(&s).unwrap();
            assert_eq!(t.intrinsics.width, SUITE_WIDTH);
        }
    }

    #[test]
    fn sprite_disparity_is_integral() {
        for s in standard_suite(SuiteKind::Moving, SUITE_SIZE, 0) {
            assert!(!s.objects.is_empty());
            for o in &s.objects {
                let n = 40.0 / o.trajectory[1][2];
                assert!((n - n.round()).abs() < 1e-12 && (6.0..=11.0).contains(&n.round()));
            }
        }
    }
}
