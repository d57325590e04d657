//! The layout model: a canvas, a background caption and an ordered list of
//! captioned boxes. Every edit in the system is an edit to one of these.

use std::collections::HashSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::InvariantError;
use crate::geometry::{coverage, iou, BoundingBox, Canvas, UnitRatio};

/// Coverage at or above which a drawn selector picks up an object.
pub const SELECTION_COVERAGE: (u64, u64) = (7, 10);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u64,
    pub caption: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl SceneObject {
    pub fn new(id: u64, caption: impl Into<String>, bbox: BoundingBox) -> Self {
        Self {
            id,
            caption: caption.into(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    pub canvas: Canvas,
    pub background: String,
    pub objects: Vec<SceneObject>,
}

impl Layout {
    pub fn new(canvas: Canvas, background: impl Into<String>) -> Self {
        Self {
            canvas,
            background: background.into(),
            objects: Vec::new(),
        }
    }

    pub fn with_object(mut self, id: u64, caption: impl Into<String>, bbox: BoundingBox) -> Self {
        self.objects.push(SceneObject::new(id, caption, bbox));
        self
    }

    pub fn validate(&self) -> Result<(), InvariantError> {
        if !self.canvas.is_valid() {
            return Err(InvariantError::CanvasTooSmall {
                width: self.canvas.width,
                height: self.canvas.height,
            });
        }
        let mut seen = HashSet::with_capacity(self.objects.len());
        for obj in &self.objects {
            if !seen.insert(obj.id) {
                return Err(InvariantError::DuplicateId(obj.id));
            }
            if !obj.bbox.is_valid() {
                return Err(InvariantError::NonPositiveBox(obj.id));
            }
            if obj.caption.trim().is_empty() {
                return Err(InvariantError::EmptyCaption(obj.id));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u64) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn max_id(&self) -> Option<u64> {
        self.objects.iter().map(|o| o.id).max()
    }

    /// Id for a newly added object: one past the largest id, or 0.
    pub fn next_id(&self) -> u64 {
        self.max_id().map_or(0, |m| m + 1)
    }
}

/// Objects picked up by a user-drawn selector box.
///
/// Objects covered at least 70% are returned by descending coverage, then
/// ascending id. When none qualifies, the single object with the highest
/// non-zero IoU is returned. An empty result means nothing was selected.
pub fn resolve_selection(layout: &Layout, selector: &BoundingBox) -> Vec<u64> {
    let threshold = Ratio::new(SELECTION_COVERAGE.0, SELECTION_COVERAGE.1);
    let mut covered: Vec<(UnitRatio, u64)> = layout
        .objects
        .iter()
        .map(|o| (coverage(selector, &o.bbox), o.id))
        .filter(|(c, _)| *c >= threshold)
        .collect();
    if !covered.is_empty() {
        covered.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        return covered.into_iter().map(|(_, id)| id).collect();
    }

    let mut best: Option<(UnitRatio, u64)> = None;
    for obj in &layout.objects {
        let score = iou(selector, &obj.bbox);
        if score == Ratio::from_integer(0) {
            continue;
        }
        let better = match best {
            None => true,
            Some((s, id)) => score > s || (score == s && obj.id < id),
        };
        if better {
            best = Some((score, obj.id));
        }
    }
    best.map(|(_, id)| vec![id]).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Layout {
        Layout::new(Canvas::default(), "a wooden table")
            .with_object(0, "an orange", BoundingBox::new(10, 10, 50, 50))
            .with_object(1, "an orange", BoundingBox::new(200, 10, 50, 50))
            .with_object(2, "a plate", BoundingBox::new(10, 300, 120, 60))
    }

    #[test]
    fn exact_selector_picks_one() {
        assert_eq!(resolve_selection(&scene(), &BoundingBox::new(200, 10, 50, 50)), vec![1]);
    }

    #[test]
    fn disjoint_selector_picks_nothing() {
        assert!(resolve_selection(&scene(), &BoundingBox::new(400, 400, 20, 20)).is_empty());
    }

    #[test]
    fn stacked_objects_ordered_by_coverage() {
        // selector rows 1..18 cover 9 rows of the top object and 8 of the bottom
        let layout = Layout::new(Canvas::default(), "bg")
            .with_object(5, "bottom", BoundingBox::new(0, 10, 10, 10))
            .with_object(7, "top", BoundingBox::new(0, 0, 10, 10));
        let selector = BoundingBox::new(0, 1, 10, 17);
        let brute = |o: &BoundingBox| {
            let mut n = 0u64;
            for x in o.x..o.x + o.width as i32 {
                for y in o.y..o.y + o.height as i32 {
                    if x >= selector.x
                        && x < selector.x + selector.width as i32
                        && y >= selector.y
                        && y < selector.y + selector.height as i32
                    {
                        n += 1;
                    }
                }
            }
            Ratio::new(n, o.area())
        };
        assert_eq!(brute(&layout.objects[1].bbox), Ratio::new(9, 10));
        assert_eq!(brute(&layout.objects[0].bbox), Ratio::new(8, 10));
        assert_eq!(resolve_selection(&layout, &selector), vec![7, 5]);
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let layout = Layout::new(Canvas::default(), "bg")
            .with_object(9, "a", BoundingBox::new(0, 0, 10, 10))
            .with_object(3, "b", BoundingBox::new(0, 0, 10, 10));
        assert_eq!(resolve_selection(&layout, &BoundingBox::new(0, 0, 10, 10)), vec![3, 9]);
    }

    #[test]
    fn falls_back_to_best_iou() {
        // selector covers only 40% of object 0 and 20% of object 1
        let layout = Layout::new(Canvas::default(), "bg")
            .with_object(0, "a", BoundingBox::new(0, 0, 10, 10))
            .with_object(1, "b", BoundingBox::new(10, 0, 10, 10));
        let selector = BoundingBox::new(6, 0, 6, 10);
        assert_eq!(resolve_selection(&layout, &selector), vec![0]);
    }

    #[test]
    fn invariants_are_checked() {
        let dup = scene().with_object(1, "x", BoundingBox::new(0, 0, 1, 1));
        assert_eq!(dup.validate(), Err(InvariantError::DuplicateId(1)));
        let mut flat = scene();
        flat.objects[0].bbox.width = 0;
        assert_eq!(flat.validate(), Err(InvariantError::NonPositiveBox(0)));
        let mut blank = scene();
        blank.objects[2].caption = "  ".into();
        assert_eq!(blank.validate(), Err(InvariantError::EmptyCaption(2)));
        assert!(Layout::new(Canvas::new(8, 512), "bg").validate().is_err());
    }

    #[test]
    fn next_id_is_fresh() {
        assert_eq!(Layout::new(Canvas::default(), "bg").next_id(), 0);
        assert_eq!(scene().next_id(), 3);
    }
}
