//! Box matching and per-image accuracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-image precision or recall below this marks a misclassification.
pub const MISCLASSIFICATION_THRESHOLD: f64 = 0.75;
/// A prediction detects a ground truth when their IoU exceeds this.
pub const MATCH_IOU: f64 = 0.5;

pub const DEFAULT_CATEGORY: &str = "car";

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("average accuracy of an empty result list")]
    Empty,
    #[error("invalid box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
}

/// Axis-aligned box in pixel coordinates, `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(a: [f64; 4]) -> Self {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn checked(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, MetricsError> {
        let b = BBox::new(x_min, y_min, x_max, y_max);
        if b.is_valid() {
            Ok(b)
        } else {
            Err(MetricsError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.y_min, self.x_max, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x_min.max(other.x_min),
            self.y_min.max(other.y_min),
            self.x_max.min(other.x_max),
            self.y_max.min(other.y_max),
        );
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    /// Clip to `[0,w] x [0,h]`; `None` if nothing remains.
    pub fn clip(&self, w: f64, h: f64) -> Option<BBox> {
        self.intersection(&BBox::new(0.0, 0.0, w, h))
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Detection {
            category: DEFAULT_CATEGORY.to_string(),
            bbox,
            score,
        }
    }

    pub fn check(&self) -> Result<(), MetricsError> {
        if !self.bbox.is_valid() {
            let b = self.bbox;
            return Err(MetricsError::InvalidBox(b.x_min, b.y_min, b.x_max, b.y_max));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(MetricsError::InvalidScore(self.score));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub misclassified: bool,
}

impl EvalResult {
    /// Derives precision, recall and the verdict from raw counts. Empty
    /// denominators give 1.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp > 0 {
            tp as f64 / (tp + fp) as f64
        } else {
            1.0
        };
        let recall = if tp + fn_ > 0 {
            tp as f64 / (tp + fn_) as f64
        } else {
            1.0
        };
        EvalResult {
            tp,
            fp,
            fn_,
            precision,
            recall,
            misclassified: precision < MISCLASSIFICATION_THRESHOLD
                || recall < MISCLASSIFICATION_THRESHOLD,
        }
    }

    /// `min(p, r)`, the per-image quality score.
    pub fn quality(&self) -> f64 {
        self.precision.min(self.recall)
    }
}

/// Greedy matching: predictions in descending score order each claim the
/// unmatched ground truth of highest IoU, provided that IoU exceeds 0.5.
pub fn match_detections(preds: &[Detection], gts: &[BBox]) -> EvalResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    for &p in &order {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !taken[*g])
            .map(|(g, gt)| (g, iou(&preds[p].bbox, gt)))
            .filter(|(_, v)| *v > MATCH_IOU)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
        }
    }
    EvalResult::from_counts(tp, preds.len() - tp, gts.len() - tp)
}

/// Mean per-image precision and recall over a test set.
pub fn average_accuracy(results: &[EvalResult]) -> Result<(f64, f64), MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = results.len() as f64;
    let ap = results.iter().map(|r| r.precision).sum::<f64>() / n;
    let ar = results.iter().map(|r| r.recall).sum::<f64>() / n;
    Ok((ap, ar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 0.0, 3.0, 2.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_precision_is_not_misclassified() {
        let gts: Vec<BBox> = (0..3)
            .map(|i| BBox::new(i as f64 * 20.0, 0.0, i as f64 * 20.0 + 10.0, 10.0))
            .collect();
        // shrink by 0.5px on one side: IoU = 9.5/10 > 0.9
        let mut preds: Vec<Detection> = gts
            .iter()
            .map(|g| Detection::new(BBox::new(g.x_min, g.y_min, g.x_max - 0.5, g.y_max), 0.9))
            .collect();
        preds.push(Detection::new(BBox::new(100.0, 100.0, 110.0, 110.0), 0.3));
        let r = match_detections(&preds, &gts);
        assert_eq!((r.tp, r.fp, r.fn_), (3, 1, 0));
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 1.0);
        assert!(!r.misclassified);
    }

    #[test]
    fn vacuous_and_missed() {
        let r = match_detections(&[], &[]);
        assert_eq!((r.precision, r.recall, r.misclassified), (1.0, 1.0, false));
        let r = match_detections(&[], &[BBox::new(0.0, 0.0, 1.0, 1.0)]);
        assert_eq!((r.tp, r.fn_), (0, 1));
        assert_eq!(r.recall, 0.0);
        assert!(r.misclassified);
    }

    #[test]
    fn higher_score_claims_first() {
        let gt = [BBox::new(0.0, 0.0, 10.0, 10.0)];
        let preds = [
            Detection::new(BBox::new(0.0, 0.0, 10.0, 9.0), 0.2),
            Detection::new(BBox::new(0.0, 0.0, 10.0, 7.0), 0.9),
        ];
        let r = match_detections(&preds, &gt);
        assert_eq!((r.tp, r.fp), (1, 1));
    }

    #[test]
    fn average_accuracy_cases() {
        assert_eq!(average_accuracy(&[]), Err(MetricsError::Empty));
        let perfect = EvalResult::from_counts(1, 0, 0);
        assert_eq!(average_accuracy(&[perfect, perfect]).unwrap(), (1.0, 1.0));
        let half = EvalResult::from_counts(1, 1, 0);
        assert_eq!(average_accuracy(&[perfect, half]).unwrap().0, 0.75);
    }

    #[test]
    fn detection_wire_format() {
        let d = Detection::new(BBox::new(1.0, 2.0, 3.0, 4.0), 0.5);
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v, serde_json::json!({"category": "car", "box": [1.0, 2.0, 3.0, 4.0], "score": 0.5}));
        assert_eq!(Detection { score: 1.5, ..d }.check(), Err(MetricsError::InvalidScore(1.5)));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0f64..50.0, 0.0f64..50.0, 0.5f64..30.0, 0.5f64..30.0)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_translation_invariant(a in arb_box(), b in arb_box(), dx in -20.0f64..20.0, dy in -20.0f64..20.0) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
            prop_assert!((v - iou(&a.translate(dx, dy), &b.translate(dx, dy))).abs() < 1e-9);
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn matching_counts_are_consistent(
            gts in proptest::collection::vec(arb_box(), 0..6),
            preds in proptest::collection::vec((arb_box(), 0.0f64..=1.0), 0..6),
        ) {
            let preds: Vec<Detection> = preds.into_iter().map(|(b, s)| Detection::new(b, s)).collect();
            let r = match_detections(&preds, &gts);
            prop_assert!(r.tp <= preds.len().min(gts.len()));
            prop_assert_eq!(r.tp + r.fp, preds.len());
            prop_assert_eq!(r.tp + r.fn_, gts.len());
        }
    }
}
