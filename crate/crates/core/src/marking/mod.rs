//! Set-of-mark overlays: numbered discs drawn at annotation points so a
//! reasoning model can refer to scene entities by a bare integer.
//!
//! Marker ids share one namespace across the image triplet. Pickable
//! objects use 1..=99 and target locations use 101..=199.

mod font;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{render, Camera, CameraView, ObjectKind, PixelCoord, RasterImage, Rgb, SceneObject, WorldError, WorldState};

pub use font::{text_extent, GLYPH_H, GLYPH_W};

pub const OBJECT_MARKERS: std::ops::RangeInclusive<u32> = 1..=99;
pub const LOCATION_MARKERS: std::ops::RangeInclusive<u32> = 101..=199;
const LOCATION_OFFSET: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MarkerId(pub u32);

impl MarkerId {
    /// Ground-truth marker for a scene object: gears keep their object id,
    /// shafts and plates are offset into the location range.
    pub fn for_object(obj: &SceneObject) -> Self {
        match obj.kind {
            ObjectKind::Gear { .. } => MarkerId(obj.object_id.0),
            ObjectKind::Shaft { .. } | ObjectKind::BasePlate { .. } => {
                MarkerId(obj.object_id.0 + LOCATION_OFFSET)
            }
        }
    }

    pub fn is_object(self) -> bool {
        OBJECT_MARKERS.contains(&self.0)
    }

    pub fn is_location(self) -> bool {
        LOCATION_MARKERS.contains(&self.0)
    }
}

impl fmt::Display for MarkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One numbered point. Serializes as `{"id":1,"x":120,"y":88,"label":"red gear"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointAnnotation {
    #[serde(rename = "id")]
    pub marker_id: MarkerId,
    #[serde(flatten)]
    pub pixel: PixelCoord,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkStyle {
    pub disc_radius_px: u32,
    pub font_scale: u32,
    pub object_disc_color: Rgb,
    pub location_disc_color: Rgb,
    pub text_color: Rgb,
}

impl Default for MarkStyle {
    fn default() -> Self {
        MarkStyle {
            disc_radius_px: 11,
            font_scale: 1,
            object_disc_color: [16, 16, 16],
            location_disc_color: [24, 40, 150],
            text_color: [255, 255, 255],
        }
    }
}

impl MarkStyle {
    fn disc_color(&self, id: MarkerId) -> Rgb {
        if id.is_location() {
            self.location_disc_color
        } else {
            self.object_disc_color
        }
    }

    /// Top-left corner of the label text for a marker at `center`.
    fn text_origin(&self, center: PixelCoord, digits: usize) -> (i64, i64) {
        let (w, h) = text_extent(digits, self.font_scale);
        (center.x - (w / 2) as i64, center.y - (h / 2) as i64)
    }

    /// The disc must contain every glyph pixel of a three-digit label.
    pub fn validate(&self) -> Result<(), MarkError> {
        if self.font_scale == 0 {
            return Err(MarkError::InvalidStyle("font scale must be at least 1".into()));
        }
        let center = PixelCoord { x: 0, y: 0 };
        let (ox, oy) = self.text_origin(center, 3);
        let (w, h) = text_extent(3, self.font_scale);
        let r2 = (self.disc_radius_px as i64).pow(2);
        for (x, y) in [(ox, oy), (ox + w as i64 - 1, oy), (ox, oy + h as i64 - 1), (ox + w as i64 - 1, oy + h as i64 - 1)] {
            if x * x + y * y > r2 {
                return Err(MarkError::InvalidStyle(format!(
                    "disc radius {} too small for glyphs at scale {}",
                    self.disc_radius_px, self.font_scale
                )));
            }
        }
        Ok(())
    }

    /// Pixels covered by a marker disc at `center`, clipped to the image.
    pub fn footprint(&self, center: PixelCoord, width: u32, height: u32) -> Vec<(u32, u32)> {
        let r = self.disc_radius_px as i64;
        let mut out = Vec::new();
        for y in (center.y - r).max(0)..=(center.y + r).min(height as i64 - 1) {
            for x in (center.x - r).max(0)..=(center.x + r).min(width as i64 - 1) {
                if (x - center.x).pow(2) + (y - center.y).pow(2) <= r * r {
                    out.push((x as u32, y as u32));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkError {
    #[error("annotation {id} at ({x}, {y}) lies outside the {width}x{height} image")]
    AnnotationOutOfBounds { id: MarkerId, x: i64, y: i64, width: u32, height: u32 },
    #[error("marker id {0} appears twice in one annotation set")]
    DuplicateMarkerId(MarkerId),
    #[error("marker id {id} labels both {first:?} and {second:?} across the triplet")]
    DuplicateMarkerIdAcrossTriplet { id: MarkerId, first: String, second: String },
    #[error("invalid mark style: {0}")]
    InvalidStyle(String),
}

/// Task-object, current-state and goal-state images.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTriplet {
    pub object_img: RasterImage,
    pub current_img: RasterImage,
    pub goal_img: RasterImage,
}

impl ImageTriplet {
    pub fn hashes(&self) -> [String; 3] {
        [self.object_img.content_hash(), self.current_img.content_hash(), self.goal_img.content_hash()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletAnnotations {
    pub object: Vec<PointAnnotation>,
    pub current: Vec<PointAnnotation>,
    pub goal: Vec<PointAnnotation>,
}

impl TripletAnnotations {
    pub fn iter(&self) -> impl Iterator<Item = &PointAnnotation> {
        self.object.iter().chain(&self.current).chain(&self.goal)
    }

    pub fn marker_ids(&self) -> BTreeSet<MarkerId> {
        self.iter().map(|a| a.marker_id).collect()
    }

    pub fn label_of(&self, id: MarkerId) -> Option<&str> {
        self.iter().find(|a| a.marker_id == id).map(|a| a.label.as_str())
    }

    /// Marker used for `label`, preferring the current-state image.
    pub fn marker_for_label(&self, label: &str) -> Option<MarkerId> {
        self.current
            .iter()
            .chain(&self.goal)
            .chain(&self.object)
            .find(|a| a.label == label)
            .map(|a| a.marker_id)
    }

    /// Checks that a marker id never names two different labels.
    pub fn check_shared_namespace(&self) -> Result<(), MarkError> {
        let mut seen: BTreeMap<MarkerId, &str> = BTreeMap::new();
        for a in self.iter() {
            match seen.get(&a.marker_id) {
                Some(first) if *first != a.label => {
                    return Err(MarkError::DuplicateMarkerIdAcrossTriplet {
                        id: a.marker_id,
                        first: first.to_string(),
                        second: a.label.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert(a.marker_id, &a.label);
                }
            }
        }
        Ok(())
    }
}

/// Cameras used for the object, current and goal images of one world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletCameras {
    pub object: Camera,
    pub current: Camera,
    pub goal: Camera,
}

impl TripletCameras {
    /// The object camera frames the first gear named in the goal, falling
    /// back to the lowest-id gear and then to the overview.
    pub fn for_world(world: &WorldState) -> Self {
        let focus = world
            .goal
            .required_insertions
            .first()
            .map(|&(g, _)| g)
            .or_else(|| world.objects.iter().filter(|o| o.kind.is_gear()).map(|o| o.object_id).min());
        TripletCameras {
            object: focus
                .and_then(|id| Camera::closeup(world, id))
                .unwrap_or_else(|| Camera::top(CameraView::TopCurrent)),
            current: Camera::top(CameraView::TopCurrent),
            goal: Camera::top(CameraView::TopGoal),
        }
    }
}

pub fn render_triplet(world: &WorldState, cameras: &TripletCameras) -> Result<ImageTriplet, WorldError> {
    Ok(ImageTriplet {
        object_img: render(world, &cameras.object)?,
        current_img: render(world, &cameras.current)?,
        goal_img: render(world, &cameras.goal)?,
    })
}

/// A marked triplet together with the annotation sets drawn on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedTriplet {
    pub images: ImageTriplet,
    pub annotations: TripletAnnotations,
}

/// Draw numbered discs on a copy of `image`, in ascending marker order.
pub fn mark_image(image: &RasterImage, annotations: &[PointAnnotation], style: &MarkStyle) -> Result<RasterImage, MarkError> {
    style.validate()?;
    let mut ids = BTreeSet::new();
    for a in annotations {
        if !image.in_bounds(a.pixel.x, a.pixel.y) {
            return Err(MarkError::AnnotationOutOfBounds {
                id: a.marker_id,
                x: a.pixel.x,
                y: a.pixel.y,
                width: image.width(),
                height: image.height(),
            });
        }
        if !ids.insert(a.marker_id) {
            return Err(MarkError::DuplicateMarkerId(a.marker_id));
        }
    }
    let mut sorted: Vec<&PointAnnotation> = annotations.iter().collect();
    sorted.sort_by_key(|a| a.marker_id);

    let mut out = image.clone();
    for a in sorted {
        let disc = style.disc_color(a.marker_id);
        for (x, y) in style.footprint(a.pixel, out.width(), out.height()) {
            out.set(x, y, disc);
        }
        let text = a.marker_id.0.to_string();
        let (ox, oy) = style.text_origin(a.pixel, text.len());
        for (dx, dy) in font::text_pixels(&text, style.font_scale) {
            let (x, y) = (ox + dx as i64, oy + dy as i64);
            if out.in_bounds(x, y) {
                out.set(x as u32, y as u32, style.text_color);
            }
        }
    }
    Ok(out)
}

/// Mark each image of the triplet with its own annotation set.
pub fn mark_triplet(triplet: &ImageTriplet, annotations: &TripletAnnotations, style: &MarkStyle) -> Result<MarkedTriplet, MarkError> {
    annotations.check_shared_namespace()?;
    Ok(MarkedTriplet {
        images: ImageTriplet {
            object_img: mark_image(&triplet.object_img, &annotations.object, style)?,
            current_img: mark_image(&triplet.current_img, &annotations.current, style)?,
            goal_img: mark_image(&triplet.goal_img, &annotations.goal, style)?,
        },
        annotations: annotations.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(id: u32, x: i64, y: i64, label: &str) -> PointAnnotation {
        PointAnnotation { marker_id: MarkerId(id), pixel: PixelCoord { x, y }, label: label.into() }
    }

    fn blank() -> RasterImage {
        RasterImage::filled(64, 48, [200, 200, 200])
    }

    #[test]
    fn empty_annotation_list_is_identity() {
        let img = blank();
        assert_eq!(mark_image(&img, &[], &MarkStyle::default()).unwrap(), img);
    }

    #[test]
    fn only_footprint_pixels_change() {
        let img = blank();
        let style = MarkStyle::default();
        let a = ann(7, 32, 24, "red gear");
        let out = mark_image(&img, std::slice::from_ref(&a), &style).unwrap();
        let footprint: BTreeSet<(u32, u32)> = style.footprint(a.pixel, 64, 48).into_iter().collect();
        let mut changed = BTreeSet::new();
        for y in 0..48 {
            for x in 0..64 {
                if out.get(x, y) != img.get(x, y) {
                    changed.insert((x, y));
                }
            }
        }
        assert_eq!(changed, footprint);
    }

    #[test]
    fn negative_coordinate_out_of_bounds() {
        let err = mark_image(&blank(), &[ann(1, -3, 10, "x")], &MarkStyle::default()).unwrap_err();
        assert!(matches!(err, MarkError::AnnotationOutOfBounds { x: -3, y: 10, .. }));
    }

    #[test]
    fn conflicting_labels_across_triplet_rejected() {
        let t = ImageTriplet { object_img: blank(), current_img: blank(), goal_img: blank() };
        let anns = TripletAnnotations {
            object: vec![],
            current: vec![ann(3, 10, 10, "red gear")],
            goal: vec![ann(3, 20, 20, "blue gear")],
        };
        assert!(matches!(
            mark_triplet(&t, &anns, &MarkStyle::default()),
            Err(MarkError::DuplicateMarkerIdAcrossTriplet { .. })
        ));
        let same = TripletAnnotations { goal: vec![ann(3, 20, 20, "red gear")], ..anns };
        assert!(mark_triplet(&t, &same, &MarkStyle::default()).is_ok());
    }

    #[test]
    fn marking_twice_gives_same_bytes() {
        let anns = [ann(1, 10, 10, "a"), ann(101, 40, 30, "b"), ann(2, 16, 14, "c")];
        let style = MarkStyle::default();
        let once = mark_image(&blank(), &anns, &style).unwrap();
        assert_eq!(mark_image(&once, &anns, &style).unwrap(), once);
    }

    #[test]
    fn later_markers_drawn_on_top() {
        let style = MarkStyle::default();
        let out = mark_image(&blank(), &[ann(101, 20, 20, "b"), ann(1, 22, 20, "a")], &style).unwrap();
        // the location marker is drawn last, so the overlap carries its disc color
        let overlap_px = out.get(31, 20);
        assert!(overlap_px == style.location_disc_color || overlap_px == style.text_color);
    }

    #[test]
    fn default_style_holds_three_digit_labels() {
        MarkStyle::default().validate().unwrap();
        let small = MarkStyle { disc_radius_px: 8, ..MarkStyle::default() };
        assert!(small.validate().is_err());
    }

    #[test]
    fn annotation_json_shape() {
        let text = serde_json::to_string(&[ann(1, 120, 88, "red gear")]).unwrap();
        assert_eq!(text, r#"[{"id":1,"x":120,"y":88,"label":"red gear"}]"#);
        let back: Vec<PointAnnotation> = serde_json::from_str(&text).unwrap();
        assert_eq!(back[0], ann(1, 120, 88, "red gear"));
    }
}
