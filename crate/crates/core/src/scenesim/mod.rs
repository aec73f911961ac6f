//! Analytic renderer for layered textured planes with moving billboard
//! sprites.
//!
//! The world frame is the camera frame at time `t`. Each pixel is ray-cast
//! through its center and takes the color of the nearest surface, so depth,
//! dynamic masks and images are exact closed-form quantities. The renderer
//! provides every ground truth the rest of the crate is tested against.

mod config;
mod prior;
pub mod suite;
mod texture;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, DepthMap, ImageBuffer, Mask, RigidPose};

pub(crate) use config::parse_toml;
pub use config::{load_scene, parse_scene, SPEC_VERSION};
pub use prior::{make_prior, PriorMode};
pub use texture::{TextureKind, TextureSpec, OCTAVES};

/// One of the three frames of a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Prev,
    Current,
    Next,
}

impl Frame {
    pub const ALL: [Frame; 3] = [Frame::Prev, Frame::Current, Frame::Next];

    pub fn index(self) -> usize {
        match self {
            Frame::Prev => 0,
            Frame::Current => 1,
            Frame::Next => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Frame::Prev => "prev",
            Frame::Current => "cur",
            Frame::Next => "next",
        }
    }
}

/// Where the camera sits in the world (the time-`t` camera frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CameraPlacement {
    /// Camera center, meters.
    pub position: [f64; 3],
    /// Camera-to-world rotation as an axis-angle vector, degrees.
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl CameraPlacement {
    fn rotation(&self) -> Matrix3<f64> {
        let aa = Vector3::from(self.rotation_deg.map(f64::to_radians));
        *Rotation3::new(aa).matrix()
    }

    /// Pose mapping time-`t` camera coordinates into this camera.
    pub fn pose_from_current(&self) -> RigidPose {
        let rt = self.rotation().transpose();
        let c = Vector3::from(self.position);
        RigidPose::new(rt, -(rt * c)).expect("rotation built from axis-angle is orthonormal")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera at `t-1`.
    #[serde(default)]
    pub prev: CameraPlacement,
    /// Camera at `t+1`.
    #[serde(default)]
    pub next: CameraPlacement,
}

impl CameraSpec {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    fn placement(&self, frame: Frame) -> CameraPlacement {
        match frame {
            Frame::Prev => self.prev,
            Frame::Current => CameraPlacement::default(),
            Frame::Next => self.next,
        }
    }
}

/// Textured plane. Infinite unless `half_extent` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    /// z of the plane's anchor point in the world, meters.
    pub depth: f64,
    /// Lateral (x, y) offset of the anchor point.
    #[serde(default)]
    pub offset: [f64; 2],
    /// Plane normal; `[0, 0, 1]` is fronto-parallel to the time-`t` camera.
    #[serde(default = "default_normal")]
    pub normal: [f64; 3],
    /// Half-size along the plane's in-surface axes, meters.
    #[serde(default)]
    pub half_extent: Option<[f64; 2]>,
    pub texture: TextureSpec,
}

fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Fronto-parallel rectangular billboard moving through the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Width and height, meters.
    pub size: [f64; 2],
    /// Center at `t-1`, `t`, `t+1` in world coordinates, meters.
    pub trajectory: [[f64; 3]; 3],
    pub texture: TextureSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default)]
    pub mode: PriorMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            mode: PriorMode::Exact,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub spec_version: u32,
    pub camera: CameraSpec,
    #[serde(rename = "plane", default)]
    pub planes: Vec<PlaneSpec>,
    #[serde(rename = "object", default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub prior: PriorSpec,
}

/// Three rendered frames with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTriplet {
    pub intrinsics: CameraIntrinsics,
    pub images: [ImageBuffer; 3],
    pub depths: [DepthMap; 3],
    /// Dynamic-object masks `S`.
    pub masks: [Mask; 3],
    pub pose_to_prev: RigidPose,
    pub pose_to_next: RigidPose,
}

impl FrameTriplet {
    pub fn image(&self, f: Frame) -> &ImageBuffer {
        &self.images[f.index()]
    }

    pub fn depth(&self, f: Frame) -> &DepthMap {
        &self.depths[f.index()]
    }

    pub fn mask(&self, f: Frame) -> &Mask {
        &self.masks[f.index()]
    }

    /// Pose from the current camera into `f`'s camera.
    pub fn pose_to(&self, f: Frame) -> RigidPose {
        match f {
            Frame::Prev => self.pose_to_prev,
            Frame::Current => RigidPose::identity(),
            Frame::Next => self.pose_to_next,
        }
    }

    /// Checks that all buffers agree with the intrinsics and each other.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        self.intrinsics.validate()?;
        let c = self.images[0].channels();
        for f in Frame::ALL {
            self.image(f).check_dims("triplet image", w, h)?;
            self.depth(f).check_dims("triplet depth", w, h)?;
            self.mask(f).check_dims("triplet mask", w, h)?;
            if self.image(f).channels() != c {
                return Err(Error::InvalidImage("triplet images differ in channel count".into()));
            }
        }
        self.pose_to_prev.validate()?;
        self.pose_to_next.validate()?;
        Ok(())
    }
}

/// A single rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image: ImageBuffer,
    pub depth: DepthMap,
    pub mask: Mask,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::SpecVersion {
                found: self.spec_version,
                supported: SPEC_VERSION,
            });
        }
        self.camera.intrinsics()?;
        for (name, p) in [("prev", self.camera.prev), ("next", self.camera.next)] {
            if p.position.iter().chain(&p.rotation_deg).any(|v| !v.is_finite()) {
                return Err(Error::InvalidScene(format!("camera.{name} has non-finite values")));
            }
        }
        if self.planes.is_empty() {
            return Err(Error::InvalidScene("at least one background plane is required".into()));
        }
        for (i, p) in self.planes.iter().enumerate() {
            if !(p.depth.is_finite() && p.depth > 0.0) {
                return Err(Error::InvalidScene(format!("plane {i}: depth must be > 0")));
            }
            let n = Vector3::from(p.normal);
            if !(n.norm() > 1e-12) {
                return Err(Error::InvalidScene(format!("plane {i}: zero normal")));
            }
            if let Some(e) = p.half_extent {
                if !(e[0] > 0.0 && e[1] > 0.0) {
                    return Err(Error::InvalidScene(format!("plane {i}: half_extent must be > 0")));
                }
            }
            validate_texture(&p.texture, &format!("plane {i}"))?;
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return Err(Error::InvalidScene(format!("object {i}: size must be > 0")));
            }
            for c in &o.trajectory {
                if !c.iter().all(|v| v.is_finite()) || !(c[2] > 0.0) {
                    return Err(Error::InvalidScene(format!(
                        "object {i}: trajectory depths must be finite and > 0"
                    )));
                }
            }
            validate_texture(&o.texture, &format!("object {i}"))?;
        }
        self.prior.mode.validate()?;
        Ok(())
    }
}

fn validate_texture(t: &TextureSpec, what: &str) -> Result<()> {
    if t.kind == TextureKind::Constant {
        return Err(Error::InvalidScene(format!(
            "{what}: constant textures have zero variance and make matching ill-posed"
        )));
    }
    if !(t.cell.is_finite() && t.cell > 0.0) {
        return Err(Error::InvalidScene(format!("{what}: texture cell must be > 0")));
    }
    if !(t.contrast.is_finite() && t.contrast > 0.0) {
        return Err(Error::InvalidScene(format!("{what}: texture contrast must be > 0")));
    }
    if !(0.0..=1.0).contains(&t.mean) {
        return Err(Error::InvalidScene(format!("{what}: texture mean must lie in [0, 1]")));
    }
    Ok(())
}

/// Surface geometry prepared for ray casting.
struct Surface {
    center: Vector3<f64>,
    normal: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    half: Option<[f64; 2]>,
    texture: TextureSpec,
    sprite: bool,
}

impl Surface {
    fn plane(p: &PlaneSpec) -> Self {
        let n = Vector3::from(p.normal).normalize();
        let up = if n.y.abs() < 0.9 {
            Vector3::new(0.0, 1.0, 0.0)
        } else {
            Vector3::new(1.0, 0.0, 0.0)
        };
        let e1 = up.cross(&n).normalize();
        let e2 = n.cross(&e1);
        Self {
            center: Vector3::new(p.offset[0], p.offset[1], p.depth),
            normal: n,
            e1,
            e2,
            half: p.half_extent,
            texture: p.texture,
            sprite: false,
        }
    }

    fn sprite(o: &ObjectSpec, at: Frame) -> Self {
        Self {
            center: Vector3::from(o.trajectory[at.index()]),
            normal: Vector3::new(0.0, 0.0, 1.0),
            e1: Vector3::new(1.0, 0.0, 0.0),
            e2: Vector3::new(0.0, 1.0, 0.0),
            half: Some([o.size[0] * 0.5, o.size[1] * 0.5]),
            texture: o.texture,
            sprite: true,
        }
    }

    /// Ray parameter and surface coordinates of the hit, if any.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-15 {
            return None;
        }
        let lambda = self.normal.dot(&(self.center - origin)) / denom;
        if !(lambda > 0.0) {
            return None;
        }
        let rel = origin + dir * lambda - self.center;
        let (s, t) = (rel.dot(&self.e1), rel.dot(&self.e2));
        if let Some([hx, hy]) = self.half {
            if s.abs() > hx || t.abs() > hy {
                return None;
            }
        }
        Some((lambda, s, t))
    }
}

/// Renders the three frames of `spec`.
pub fn render(spec: &SceneSpec) -> Result<FrameTriplet> {
    spec.validate()?;
    let intrinsics = spec.camera.intrinsics()?;
    let views: Vec<View> = Frame::ALL
        .iter()
        .map(|&f| render_view(spec, f, f))
        .collect::<Result<_>>()?;
    check_objects_visible(spec)?;
    let [p, c, n]: [View; 3] = views.try_into().expect("three frames");
    Ok(FrameTriplet {
        intrinsics,
        images: [p.image, c.image, n.image],
        depths: [p.depth, c.depth, n.depth],
        masks: [p.mask, c.mask, n.mask],
        pose_to_prev: spec.camera.prev.pose_from_current(),
        pose_to_next: spec.camera.next.pose_from_current(),
    })
}

/// Renders the scene from camera `camera` with the sprites placed where they
/// are at time `objects_at`.
///
/// `render_view(spec, Frame::Prev, Frame::Current)` is the "object frozen at
/// its time-`t` pose, seen from the `t-1` camera" view.
pub fn render_view(spec: &SceneSpec, camera: Frame, objects_at: Frame) -> Result<View> {
    let k = spec.camera.intrinsics()?;
    let placement = spec.camera.placement(camera);
    let rot = placement.rotation();
    let origin = Vector3::from(placement.position);

    let mut surfaces: Vec<Surface> = spec.objects.iter().map(|o| Surface::sprite(o, objects_at)).collect();
    surfaces.extend(spec.planes.iter().map(Surface::plane));

    let (w, h) = (k.width, k.height);
    // (depth, color, on a sprite) per pixel
    type Sample = (f64, [f64; 3], bool);
    let rows: Vec<Result<Vec<Sample>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = rot * k.ray(x as f64, y as f64);
                    let mut best: Option<(f64, &Surface, f64, f64)> = None;
                    for s in &surfaces {
                        if let Some((lambda, su, tv)) = s.intersect(&origin, &dir) {
                            if best.is_none_or(|b| lambda < b.0) {
                                best = Some((lambda, s, su, tv));
                            }
                        }
                    }
                    match best {
                        Some((lambda, s, su, tv)) => Ok((lambda, s.texture.eval(su, tv), s.sprite)),
                        None => Err(Error::RayMiss {
                            u: x,
                            v: y,
                            frame: camera.name(),
                        }),
                    }
                })
                .collect()
        })
        .collect();

    let mut image = ImageBuffer::zeros(w, h, 3);
    let mut depth = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, (lambda, rgb, sprite)) in row?.into_iter().enumerate() {
            image.set_pixel(x, y, &rgb);
            depth.push(lambda);
            mask.push(sprite);
        }
    }
    Ok(View {
        image,
        depth: DepthMap::from_depths(w, h, depth)?,
        mask: Mask::from_vec(w, h, mask)?,
    })
}

/// Rejects sprites hidden behind the background at time `t`.
fn check_objects_visible(spec: &SceneSpec) -> Result<()> {
    let planes: Vec<Surface> = spec.planes.iter().map(Surface::plane).collect();
    for (i, o) in spec.objects.iter().enumerate() {
        let c = Vector3::from(o.trajectory[1]);
        let dir = c / c.z;
        let nearest = planes
            .iter()
            .filter_map(|p| p.intersect(&Vector3::zeros(), &dir).map(|h| h.0))
            .fold(f64::INFINITY, f64::min);
        if nearest <= c.z {
            return Err(Error::InvalidScene(format!(
                "object {i} at depth {} is behind the background (plane hit at {nearest})",
                c.z
            )));
        }
    }
    Ok(())
}
