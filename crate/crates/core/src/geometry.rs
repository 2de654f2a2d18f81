//! Pinhole projection, rigid ego-motion transforms and bilinear feature
//! sampling.
//!
//! Ego frame: x forward, y left, z up. Camera frame: +z along the optical
//! axis, +x right, +y down.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation is a reflection")]
    Reflection,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("focal lengths must be positive")]
    BadFocal,
    #[error("near plane must be positive")]
    BadNearPlane,
    #[error("image and feature sizes must be at least 2x2")]
    TooSmall,
    #[error("feature map data has {found} values, expected {expected}")]
    BadLength { expected: usize, found: usize },
}

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Rotation followed by translation: `p' = R p + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Frame-t ego coordinates to current ego coordinates.
pub type RigidPose = RigidTransform;

#[derive(Serialize, Deserialize)]
struct RawTransform {
    /// Row-major.
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = GeometryError;
    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        RigidTransform::new(Matrix3::from_row_slice(&raw.rotation), Vector3::from(raw.translation))
    }
}

impl From<RigidTransform> for RawTransform {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        RawTransform {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: t.translation.into(),
        }
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("rigid transform"));
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        if rotation.determinant() < 0.0 {
            return Err(GeometryError::Reflection);
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    /// Rotation about +z by `yaw` radians, then translation.
    pub fn from_yaw_translation(yaw: f64, translation: [f64; 3]) -> Self {
        let (s, c) = yaw.sin_cos();
        Self { rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), translation: Vector3::from(translation) }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        (self.rotation * Vector3::from(p) + self.translation).into()
    }

    pub fn inverse_apply(&self, p: [f64; 3]) -> [f64; 3] {
        (self.rotation.transpose() * (Vector3::from(p) - self.translation)).into()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { translation: -(rt * self.translation), rotation: rt }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.rotation - Matrix3::identity()).amax() <= tol && self.translation.amax() <= tol
    }
}

/// Express a current-frame point in frame-t ego coordinates.
pub fn compensate_ego_motion(point_current: [f64; 3], pose_t: &RigidPose) -> [f64; 3] {
    pose_t.inverse_apply(point_current)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

pub const DEFAULT_NEAR_PLANE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera", into = "RawCamera")]
pub struct CameraModel {
    intrinsics: Intrinsics,
    /// `[width, height]` in pixels.
    image_size: [u32; 2],
    /// Ego to camera.
    extrinsic: RigidTransform,
    near_plane: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCamera {
    intrinsics: Intrinsics,
    image_size: [u32; 2],
    extrinsic: RigidTransform,
    #[serde(default = "default_near")]
    near_plane: f64,
}

fn default_near() -> f64 {
    DEFAULT_NEAR_PLANE
}

impl TryFrom<RawCamera> for CameraModel {
    type Error = GeometryError;
    fn try_from(r: RawCamera) -> Result<Self, Self::Error> {
        CameraModel::new(r.intrinsics, r.image_size, r.extrinsic, r.near_plane)
    }
}

impl From<CameraModel> for RawCamera {
    fn from(c: CameraModel) -> Self {
        RawCamera {
            intrinsics: c.intrinsics,
            image_size: c.image_size,
            extrinsic: c.extrinsic,
            near_plane: c.near_plane,
        }
    }
}

impl CameraModel {
    pub fn new(
        intrinsics: Intrinsics,
        image_size: [u32; 2],
        extrinsic: RigidTransform,
        near_plane: f64,
    ) -> Result<Self, GeometryError> {
        let Intrinsics { fx, fy, cx, cy } = intrinsics;
        if ![fx, fy, cx, cy, near_plane].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("camera"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::BadFocal);
        }
        if near_plane <= 0.0 {
            return Err(GeometryError::BadNearPlane);
        }
        if image_size[0] < 2 || image_size[1] < 2 {
            return Err(GeometryError::TooSmall);
        }
        Ok(Self { intrinsics, image_size, extrinsic, near_plane })
    }

    /// A camera at `position` (ego frame) looking along `yaw` (radians from
    /// +x towards +y), pitched down by `pitch`, with the principal point at
    /// the image center.
    pub fn mounted(
        yaw: f64,
        pitch: f64,
        position: [f64; 3],
        focal: f64,
        image_size: [u32; 2],
    ) -> Result<Self, GeometryError> {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = Vector3::new(cp * cy, cp * sy, -sp);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * Vector3::from(position));
        let intr = Intrinsics { fx: focal, fy: focal, cx: image_size[0] as f64 / 2.0, cy: image_size[1] as f64 / 2.0 };
        CameraModel::new(intr, image_size, RigidTransform::new(rotation, translation)?, DEFAULT_NEAR_PLANE)
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn image_size(&self) -> [u32; 2] {
        self.image_size
    }

    pub fn extrinsic(&self) -> &RigidTransform {
        &self.extrinsic
    }

    pub fn near_plane(&self) -> f64 {
        self.near_plane
    }
}

/// Pixel coordinates of an ego-frame point, or `None` when it lies behind
/// the near plane or outside `[0, W) x [0, H)`.
pub fn project_to_view(point_ego: [f64; 3], cam: &CameraModel) -> Option<[f64; 2]> {
    let [xc, yc, zc] = cam.extrinsic.apply(point_ego);
    if zc <= cam.near_plane {
        return None;
    }
    let k = &cam.intrinsics;
    let u = k.fx * xc / zc + k.cx;
    let v = k.fy * yc / zc + k.cy;
    let [w, h] = cam.image_size;
    (u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64).then_some([u, v])
}

/// Map a pixel position to feature-grid coordinates, aligning cell centers.
pub fn pixel_to_feature_coords(pixel: [f64; 2], image_size: [u32; 2], feature_size: [usize; 2]) -> [f64; 2] {
    let map = |p: f64, img: u32, feat: usize| (p + 0.5) * feat as f64 / img as f64 - 0.5;
    [map(pixel[0], image_size[0], feature_size[0]), map(pixel[1], image_size[1], feature_size[1])]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<CameraModel>,
}

impl CameraRig {
    pub fn new(cameras: Vec<CameraModel>) -> Self {
        Self { cameras }
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    /// Evenly spaced horizontal cameras at `height` above the ego origin.
    pub fn surround(views: usize, height: f64, focal: f64, image_size: [u32; 2]) -> Self {
        let cameras = (0..views)
            .map(|i| {
                let yaw = i as f64 * std::f64::consts::TAU / views as f64;
                CameraModel::mounted(yaw, 0.0, [0.0, 0.0, height], focal, image_size).expect("valid surround camera")
            })
            .collect();
        Self { cameras }
    }
}

/// Dense `H x W x C` feature grid, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureMap", into = "RawFeatureMap")]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawFeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TryFrom<RawFeatureMap> for FeatureMap {
    type Error = GeometryError;
    fn try_from(r: RawFeatureMap) -> Result<Self, Self::Error> {
        FeatureMap::new(r.height, r.width, r.channels, r.data)
    }
}

impl From<FeatureMap> for RawFeatureMap {
    fn from(f: FeatureMap) -> Self {
        RawFeatureMap { height: f.height, width: f.width, channels: f.channels, data: f.data }
    }
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self, GeometryError> {
        if height < 2 || width < 2 {
            return Err(GeometryError::TooSmall);
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(GeometryError::BadLength { expected, found: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("feature map"));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, GeometryError> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `[width, height]`.
    pub fn size(&self) -> [usize; 2] {
        [self.width, self.height]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Feature vector at column `x`, row `y`.
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Apply `f` to every cell vector, producing a map with `out_channels`.
    pub fn map_cells(&self, out_channels: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> FeatureMap {
        let mut data = vec![0.0; self.height * self.width * out_channels];
        for (src, dst) in self.data.chunks_exact(self.channels).zip(data.chunks_exact_mut(out_channels)) {
            f(src, dst);
        }
        FeatureMap { height: self.height, width: self.width, channels: out_channels, data }
    }
}

struct BilinearStencil {
    x0: usize,
    y0: usize,
    fx: f64,
    fy: f64,
    u_clamped: bool,
    v_clamped: bool,
}

fn stencil(fm: &FeatureMap, u: f64, v: f64) -> BilinearStencil {
    let umax = (fm.width - 1) as f64;
    let vmax = (fm.height - 1) as f64;
    let uc = u.clamp(0.0, umax);
    let vc = v.clamp(0.0, vmax);
    let x0 = (uc.floor() as usize).min(fm.width - 2);
    let y0 = (vc.floor() as usize).min(fm.height - 2);
    BilinearStencil {
        x0,
        y0,
        fx: uc - x0 as f64,
        fy: vc - y0 as f64,
        u_clamped: !(u > 0.0 && u < umax),
        v_clamped: !(v > 0.0 && v < vmax),
    }
}

/// Add `weight * bilinear(fm, u, v)` into `out`.
pub fn bilinear_accumulate(fm: &FeatureMap, u: f64, v: f64, weight: f64, out: &mut [f64]) {
    let s = stencil(fm, u, v);
    let w00 = (1.0 - s.fx) * (1.0 - s.fy);
    let w10 = s.fx * (1.0 - s.fy);
    let w01 = (1.0 - s.fx) * s.fy;
    let w11 = s.fx * s.fy;
    let c00 = fm.cell(s.x0, s.y0);
    let c10 = fm.cell(s.x0 + 1, s.y0);
    let c01 = fm.cell(s.x0, s.y0 + 1);
    let c11 = fm.cell(s.x0 + 1, s.y0 + 1);
    for (c, o) in out.iter_mut().enumerate() {
        *o += weight * (w00 * c00[c] + w10 * c10[c] + w01 * c01[c] + w11 * c11[c]);
    }
}

/// Bilinear interpolation at feature-grid coordinates `(u, v)`
/// (`u` along the width). Coordinates are clamped to the grid.
pub fn bilinear_sample(fm: &FeatureMap, u: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; fm.channels];
    bilinear_accumulate(fm, u, v, 1.0, &mut out);
    out
}

/// Sampled features and their derivatives with respect to `u` and `v`.
/// Derivatives along a clamped axis are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGrad {
    pub value: Vec<f64>,
    pub d_u: Vec<f64>,
    pub d_v: Vec<f64>,
}

pub fn bilinear_sample_grad(fm: &FeatureMap, u: f64, v: f64) -> BilinearGrad {
    let s = stencil(fm, u, v);
    let c00 = fm.cell(s.x0, s.y0);
    let c10 = fm.cell(s.x0 + 1, s.y0);
    let c01 = fm.cell(s.x0, s.y0 + 1);
    let c11 = fm.cell(s.x0 + 1, s.y0 + 1);
    let mut value = vec![0.0; fm.channels];
    bilinear_accumulate(fm, u, v, 1.0, &mut value);
    let d_u = (0..fm.channels)
        .map(|c| if s.u_clamped { 0.0 } else { (1.0 - s.fy) * (c10[c] - c00[c]) + s.fy * (c11[c] - c01[c]) })
        .collect();
    let d_v = (0..fm.channels)
        .map(|c| if s.v_clamped { 0.0 } else { (1.0 - s.fx) * (c01[c] - c00[c]) + s.fx * (c11[c] - c10[c]) })
        .collect();
    BilinearGrad { value, d_u, d_v }
}
