use serde::{Deserialize, Serialize};

use super::{ObjectId, Pose, WorldState};

/// Which scene content a camera renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "view")]
pub enum CameraView {
    /// The scene as it is now.
    TopCurrent,
    /// The scene with every required insertion satisfied.
    TopGoal,
    /// A single object, isolated and centered.
    ObjectCloseup { object_id: ObjectId },
    /// Tool-mounted downward camera; the held object is not visible to it.
    Wrist,
}

/// Integer pixel position; `(0, 0)` is the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: i64,
    pub y: i64,
}

/// Orthographic top-down camera. Pixel `(i, j)` images the world point
/// `(origin_x + i * mpp, origin_y - j * mpp)`; image rows run toward -y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub view: CameraView,
    pub origin_x: f64,
    pub origin_y: f64,
    pub meters_per_pixel: f64,
    pub width_px: u32,
    pub height_px: u32,
}

pub const OVERVIEW_WIDTH: u32 = 320;
pub const OVERVIEW_HEIGHT: u32 = 240;
pub const OVERVIEW_MPP: f64 = 0.002;
pub const CLOSEUP_SIZE: u32 = 160;
pub const CLOSEUP_MPP: f64 = 0.0005;
pub const WRIST_SIZE: u32 = 160;
pub const WRIST_MPP: f64 = 0.0002;

impl Camera {
    /// Camera centered on `(cx, cy)`.
    pub fn centered(view: CameraView, cx: f64, cy: f64, mpp: f64, width_px: u32, height_px: u32) -> Self {
        Camera {
            view,
            origin_x: cx - (width_px / 2) as f64 * mpp,
            origin_y: cy + (height_px / 2) as f64 * mpp,
            meters_per_pixel: mpp,
            width_px,
            height_px,
        }
    }

    /// Overview camera covering the default 0.64 m x 0.48 m table area.
    pub fn top(view: CameraView) -> Self {
        Camera::centered(view, 0.0, 0.0, OVERVIEW_MPP, OVERVIEW_WIDTH, OVERVIEW_HEIGHT)
    }

    pub fn closeup(world: &WorldState, object_id: ObjectId) -> Option<Self> {
        let obj = world.object(object_id)?;
        Some(Camera::centered(
            CameraView::ObjectCloseup { object_id },
            obj.pose.x,
            obj.pose.y,
            CLOSEUP_MPP,
            CLOSEUP_SIZE,
            CLOSEUP_SIZE,
        ))
    }

    pub fn wrist(tool: &Pose) -> Self {
        Camera::centered(CameraView::Wrist, tool.x, tool.y, WRIST_MPP, WRIST_SIZE, WRIST_SIZE)
    }

    /// Continuous pixel coordinates of a world point.
    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.origin_x) / self.meters_per_pixel,
            (self.origin_y - y) / self.meters_per_pixel,
        )
    }

    /// Nearest pixel to a world point (may lie outside the image).
    pub fn pixel_of(&self, x: f64, y: f64) -> PixelCoord {
        let (u, v) = self.project(x, y);
        PixelCoord { x: u.round() as i64, y: v.round() as i64 }
    }

    /// World point imaged at the center of pixel `(u, v)`; accepts fractional pixels.
    pub fn unproject(&self, u: f64, v: f64) -> (f64, f64) {
        (
            self.origin_x + u * self.meters_per_pixel,
            self.origin_y - v * self.meters_per_pixel,
        )
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width_px as i64 && p.y < self.height_px as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn overview_maps_table_origin_to_image_center() {
        let cam = Camera::top(CameraView::TopCurrent);
        assert_eq!(cam.pixel_of(0.0, 0.0), PixelCoord { x: 160, y: 120 });
        assert_eq!(cam.pixel_of(-0.32, 0.24), PixelCoord { x: 0, y: 0 });
        // +y is up in the world, down the rows in the image.
        assert!(cam.pixel_of(0.0, 0.1).y < 120);
    }

    proptest! {
        #[test]
        fn pixel_round_trip_within_one_pixel(u in 0.0f64..319.0, v in 0.0f64..239.0) {
            let cam = Camera::top(CameraView::TopCurrent);
            let (x, y) = cam.unproject(u, v);
            let p = cam.pixel_of(x, y);
            prop_assert!((p.x as f64 - u).abs() <= 0.5 + 1e-9);
            prop_assert!((p.y as f64 - v).abs() <= 0.5 + 1e-9);
            let (bx, by) = cam.unproject(p.x as f64, p.y as f64);
            prop_assert!((bx - x).hypot(by - y) < cam.meters_per_pixel);
        }
    }
}
