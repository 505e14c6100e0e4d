//! Detection geometry and metrics: IoU, NMS, anchor offsets, focal and
//! smooth-L1 losses, and all-points average precision over annotation files.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before taking logs.
pub const P_CLAMP: f64 = 1e-7;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.28;
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl Box {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        if !finite || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(Error::Validation(format!("degenerate box {self}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    fn cmp_coords(&self, other: &Self) -> Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

impl fmt::Display for Box {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: Box, confidence: f64) -> Result<Self> {
        bbox.validate()?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Validation(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { bbox, confidence })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: Box,
}

impl Anchor {
    pub fn new(bbox: Box) -> Result<Self> {
        bbox.validate()?;
        Ok(Self { bbox })
    }

    pub fn width(&self) -> f64 {
        self.bbox.width()
    }

    pub fn height(&self) -> f64 {
        self.bbox.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub gamma: f64,
    pub alpha: f64,
    /// Weight of the focal term in [`detection_loss`].
    pub lambda: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
            lambda: 1.0,
        }
    }
}

impl FocalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("invalid focal parameters {self:?}")));
        }
        Ok(())
    }
}

pub fn iou(a: &Box, b: &Box) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok((inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0))
}

/// Greedy non-maximum suppression. Confidence ties keep input order.
pub fn nms(dets: &[Detection], threshold: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("NMS threshold {threshold} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].confidence.total_cmp(&dets[i].confidence).then(i.cmp(&j)));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let mut suppressed = false;
        for k in &kept {
            if iou(&k.bbox, &dets[i].bbox)? > threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(dets[i]);
        }
    }
    Ok(kept)
}

/// Corner offsets of `gt` relative to `anchor`: x by anchor width, y by height.
pub fn encode_offsets(gt: &Box, anchor: &Anchor) -> Result<[f64; 4]> {
    let (aw, ah) = (anchor.width(), anchor.height());
    if !(aw > 0.0 && ah > 0.0) {
        return Err(Error::Validation("anchor has zero extent".into()));
    }
    let a = &anchor.bbox;
    Ok([
        (gt.x1 - a.x1) / aw,
        (gt.y1 - a.y1) / ah,
        (gt.x2 - a.x2) / aw,
        (gt.y2 - a.y2) / ah,
    ])
}

pub fn decode_offsets(t: &[f64; 4], anchor: &Anchor) -> Result<Box> {
    let (aw, ah) = (anchor.width(), anchor.height());
    if !(aw > 0.0 && ah > 0.0) {
        return Err(Error::Validation("anchor has zero extent".into()));
    }
    let a = &anchor.bbox;
    Box::new(
        a.x1 + t[0] * aw,
        a.y1 + t[1] * ah,
        a.x2 + t[2] * aw,
        a.y2 + t[3] * ah,
    )
}

/// `-alpha_t (1 - p_t)^gamma ln(p_t)` for a label `y` of `+1` or `-1`.
pub fn focal_loss(p: f64, y: i8, params: &FocalParams) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::Validation(format!("probability {p} is not finite")));
    }
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    let (pt, alpha_t) = match y {
        1 => (p, params.alpha),
        -1 => (1.0 - p, 1.0 - params.alpha),
        _ => return Err(Error::Validation(format!("label must be +1 or -1, got {y}"))),
    };
    Ok(-alpha_t * (1.0 - pt).powf(params.gamma) * pt.ln())
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

pub fn regression_loss(predicted: &[f64; 4], target: &[f64; 4]) -> f64 {
    predicted
        .iter()
        .zip(target)
        .map(|(p, y)| smooth_l1(p - y))
        .sum()
}

pub fn detection_loss(regression: f64, focal: f64, params: &FocalParams) -> f64 {
    regression + params.lambda * focal
}

/// One operating point of the precision-recall sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub confidence: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    pub curve: Vec<PrPoint>,
    pub true_positives: usize,
    pub ground_truths: usize,
}

/// All-points average precision over a set of images.
///
/// Detections below `conf_thresh` are dropped. The rest are ranked by
/// confidence, then image and box coordinates, and matched greedily to the
/// unmatched ground truth of highest IoU (at least `iou_thresh`). Curve points
/// are taken only at confidence-tier boundaries, so reordering detections that
/// share a confidence cannot change the result.
pub fn average_precision(
    dets: &BTreeMap<ImageId, Vec<Detection>>,
    gts: &BTreeMap<ImageId, Vec<Box>>,
    iou_thresh: f64,
    conf_thresh: f64,
) -> Result<ApResult> {
    let total_gt: usize = gts.values().map(Vec::len).sum();
    if total_gt == 0 {
        return Err(Error::Evaluation("average precision needs at least one ground truth".into()));
    }
    let mut ranked: Vec<(&ImageId, &Detection)> = dets
        .iter()
        .flat_map(|(id, ds)| ds.iter().map(move |d| (id, d)))
        .filter(|(_, d)| d.confidence >= conf_thresh)
        .collect();
    ranked.sort_by(|(ia, a), (ib, b)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(ia.cmp(ib))
            .then(a.bbox.cmp_coords(&b.bbox))
    });

    let mut used: BTreeMap<&ImageId, Vec<bool>> =
        gts.iter().map(|(id, g)| (id, vec![false; g.len()])).collect();
    let mut tp = 0usize;
    let mut curve = Vec::new();
    for (n, (id, det)) in ranked.iter().enumerate() {
        if let (Some(boxes), Some(flags)) = (gts.get(*id), used.get_mut(id)) {
            let mut best: Option<(f64, usize)> = None;
            for (g, gt) in boxes.iter().enumerate() {
                if flags[g] {
                    continue;
                }
                let v = iou(&det.bbox, gt)?;
                if v >= iou_thresh && best.map_or(true, |(bv, _)| v > bv) {
                    best = Some((v, g));
                }
            }
            if let Some((_, g)) = best {
                flags[g] = true;
                tp += 1;
            }
        }
        let tier_end = ranked
            .get(n + 1)
            .map_or(true, |(_, next)| next.confidence != det.confidence);
        if tier_end {
            curve.push(PrPoint {
                confidence: det.confidence,
                precision: tp as f64 / (n + 1) as f64,
                recall: tp as f64 / total_gt as f64,
            });
        }
    }

    // Area under the monotone precision envelope.
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    let mut prev_recall = 0.0;
    let mut segments = Vec::with_capacity(curve.len());
    for pt in curve.iter().rev() {
        envelope = envelope.max(pt.precision);
        segments.push((pt.recall, envelope));
    }
    for &(recall, precision) in segments.iter().rev() {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ApResult {
        ap,
        curve,
        true_positives: tp,
        ground_truths: total_gt,
    })
}

/// Image key in annotation files; either an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageId {
    Number(u64),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub boxes: Vec<BoxRecord>,
}

/// Parse an annotation or detection file: a JSON array of
/// `{"image_id": .., "boxes": [{"x1": .., "y1": .., "x2": .., "y2": .., "confidence": ..}]}`.
pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<ImageRecord>> {
    serde_json::from_str(text).map_err(|e| Error::json(path, &e))
}

pub fn load_annotations(path: &Path) -> Result<Vec<ImageRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, path)
}

/// Ground-truth boxes per image; confidences, if present, are ignored.
pub fn ground_truth_map(records: &[ImageRecord]) -> Result<BTreeMap<ImageId, Vec<Box>>> {
    let mut out: BTreeMap<ImageId, Vec<Box>> = BTreeMap::new();
    for r in records {
        let entry = out.entry(r.image_id.clone()).or_default();
        for b in &r.boxes {
            entry.push(Box::new(b.x1, b.y1, b.x2, b.y2)?);
        }
    }
    Ok(out)
}

/// Detections per image; a missing confidence counts as 1.
pub fn detection_map(records: &[ImageRecord]) -> Result<BTreeMap<ImageId, Vec<Detection>>> {
    let mut out: BTreeMap<ImageId, Vec<Detection>> = BTreeMap::new();
    for r in records {
        let entry = out.entry(r.image_id.clone()).or_default();
        for b in &r.boxes {
            entry.push(Detection::new(
                Box::new(b.x1, b.y1, b.x2, b.y2)?,
                b.confidence.unwrap_or(1.0),
            )?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use proptest::prelude::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> Box {
        Box::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: Box, c: f64) -> Detection {
        Detection::new(b, c).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        assert!((iou(&a, &bx(1.0, 1.0, 3.0, 3.0)).unwrap() - 1.0 / 7.0).abs() < 1e-12);
        let bad = Box { x1: 1.0, y1: 0.0, x2: 1.0, y2: 2.0 };
        assert!(iou(&a, &bad).is_err());
    }

    #[test]
    fn nms_examples() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(nms(&[det(a, 0.5)], 0.28).unwrap(), vec![det(a, 0.5)]);
        let kept = nms(&[det(a, 0.8), det(a, 0.9)], 0.28).unwrap();
        assert_eq!(kept, vec![det(a, 0.9)]);
        // A and B overlap by a third of the union area; B and C likewise; A and C are disjoint.
        let ba = bx(0.0, 0.0, 2.0, 1.0);
        let bb = bx(1.0, 0.0, 3.0, 1.0);
        let bc = bx(2.0, 0.0, 4.0, 1.0);
        let kept = nms(&[det(bc, 0.7), det(ba, 0.9), det(bb, 0.8)], 0.28).unwrap();
        assert_eq!(kept, vec![det(ba, 0.9), det(bc, 0.7)]);
        // Ties keep the earlier input.
        let kept = nms(&[det(bb, 0.5), det(ba, 0.5)], 0.28).unwrap();
        assert_eq!(kept[0], det(bb, 0.5));
    }

    #[test]
    fn offset_examples() {
        let anchor = Anchor::new(bx(0.0, 0.0, 10.0, 10.0)).unwrap();
        let gt = bx(1.0, 2.0, 11.0, 12.0);
        let t = encode_offsets(&gt, &anchor).unwrap();
        for (v, e) in t.iter().zip([0.1, 0.2, 0.1, 0.2]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert_eq!(encode_offsets(&anchor.bbox, &anchor).unwrap(), [0.0; 4]);
        assert_eq!(decode_offsets(&[0.0; 4], &anchor).unwrap(), anchor.bbox);
        let back = decode_offsets(&[0.1, 0.2, 0.1, 0.2], &anchor).unwrap();
        assert!(back.coords().iter().zip(gt.coords()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(decode_offsets(&[0.0, 0.0, -2.0, 0.0], &anchor).is_err());
    }

    #[test]
    fn focal_examples() {
        let ce = FocalParams { gamma: 0.0, alpha: 1.0, lambda: 1.0 };
        assert!((focal_loss(0.5, 1, &ce).unwrap() - 2f64.ln()).abs() < 1e-12);
        let v = focal_loss(0.9, 1, &FocalParams::default()).unwrap();
        assert!((v - 0.25 * 0.01 * -(0.9f64.ln())).abs() < 1e-15);
        assert!((v - 2.634e-4).abs() < 1e-7);
        assert!(focal_loss(1.0, 1, &FocalParams::default()).unwrap() < 1e-20);
        assert!(focal_loss(0.0, 1, &FocalParams::default()).unwrap().is_finite());
        assert!(focal_loss(0.5, 0, &ce).is_err());
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((focal_loss(p, 1, &ce).unwrap() + p.ln()).abs() <= 1e-12);
        }
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(3.0), 2.5);
        let h = 1e-6;
        for knee in [1.0, -1.0] {
            let left = (smooth_l1(knee - h) - smooth_l1(knee - 2.0 * h)) / h;
            let right = (smooth_l1(knee + 2.0 * h) - smooth_l1(knee + h)) / h;
            assert!((left - right).abs() < 1e-5);
            assert!((smooth_l1(knee - 1e-12) - smooth_l1(knee + 1e-12)).abs() < 1e-11);
        }
        assert_eq!(regression_loss(&[0.5; 4], &[0.0; 4]), 0.5);
        assert_eq!(regression_loss(&[2.0, 0.0, 0.0, 0.0], &[0.0; 4]), 1.5);
        assert_eq!(regression_loss(&[0.3; 4], &[0.3; 4]), 0.0);
        let p = FocalParams::default();
        assert_eq!(detection_loss(0.5, 0.25, &p), 0.75);
        assert_eq!(detection_loss(0.5, 0.0, &p), 0.5);
        assert_eq!(detection_loss(0.5, 9.0, &FocalParams { lambda: 0.0, ..p }), 0.5);
    }

    fn one_image(dets: Vec<Detection>, gts: Vec<Box>) -> ApResult {
        let d = BTreeMap::from([(ImageId::Number(0), dets)]);
        let g = BTreeMap::from([(ImageId::Number(0), gts)]);
        average_precision(&d, &g, 0.5, 0.5).unwrap()
    }

    #[test]
    fn ap_examples() {
        let g1 = bx(0.0, 0.0, 10.0, 10.0);
        let g2 = bx(20.0, 20.0, 30.0, 30.0);
        let miss = bx(50.0, 50.0, 60.0, 60.0);
        let r = one_image(vec![det(g1, 0.9), det(miss, 0.8), det(g2, 0.7)], vec![g1, g2]);
        assert!((r.ap - 5.0 / 6.0).abs() < 1e-9);
        let pts: Vec<(f64, f64)> = r.curve.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pts, vec![(1.0, 0.5), (0.5, 0.5), (2.0 / 3.0, 1.0)]);

        assert_eq!(one_image(vec![det(g1, 0.9), det(g2, 0.8)], vec![g1, g2]).ap, 1.0);
        assert_eq!(one_image(vec![det(miss, 0.9)], vec![g1]).ap, 0.0);
        assert_eq!(one_image(vec![], vec![g1]).ap, 0.0);
        // Duplicate detections of one box: the second is a false positive.
        let r = one_image(vec![det(g1, 0.9), det(g1, 0.8)], vec![g1]);
        assert_eq!((r.ap, r.true_positives), (1.0, 1));
        // Below the confidence threshold nothing counts.
        assert_eq!(one_image(vec![det(g1, 0.4)], vec![g1]).ap, 0.0);
        let empty: BTreeMap<ImageId, Vec<Box>> = BTreeMap::new();
        assert!(average_precision(&BTreeMap::new(), &empty, 0.5, 0.5).is_err());
    }

    #[test]
    fn annotation_format() {
        let text = r#"[
  {"image_id": 3, "boxes": [{"x1": 0, "y1": 0, "x2": 2, "y2": 2, "confidence": 0.75}]},
  {"image_id": "cam-1", "boxes": []}
]"#;
        let recs = parse_annotations(text, Path::new("d.json")).unwrap();
        assert_eq!(recs[0].image_id, ImageId::Number(3));
        assert_eq!(recs[1].image_id, ImageId::Name("cam-1".into()));
        let dets = detection_map(&recs).unwrap();
        assert_eq!(dets[&ImageId::Number(3)][0].confidence, 0.75);
        let err = parse_annotations("[\n {\"image_id\": 1, \"boxes\": [}\n]", Path::new("bad.json"))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    fn arb_box() -> impl Strategy<Value = Box> {
        (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_properties(a in arb_box(), b in arb_box()) {
            let v = iou(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&b, &a).unwrap());
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn nms_properties(boxes in prop::collection::vec((arb_box(), 0.0..1.0f64), 0..12), t in 0.0..1.0f64) {
            let dets: Vec<Detection> = boxes.iter().map(|&(b, c)| det(b, c)).collect();
            let kept = nms(&dets, t).unwrap();
            for k in &kept {
                prop_assert!(dets.contains(k));
            }
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox).unwrap() <= t);
                    prop_assert!(kept[i].confidence >= kept[j].confidence);
                }
            }
            prop_assert_eq!(nms(&kept, t).unwrap(), kept);
        }

        #[test]
        fn offsets_round_trip(gt in arb_box(), a in arb_box()) {
            let anchor = Anchor::new(a).unwrap();
            let back = decode_offsets(&encode_offsets(&gt, &anchor).unwrap(), &anchor).unwrap();
            for (x, y) in back.coords().iter().zip(gt.coords()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
            let t = [0.1, -0.05, 0.2, 0.03];
            let t2 = encode_offsets(&decode_offsets(&t, &anchor).unwrap(), &anchor).unwrap();
            for (x, y) in t.iter().zip(t2) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn ap_ignores_order_within_confidence_tiers(seed in 0u64..2000) {
            let mut rng = Rng::new(seed);
            let mut gts = BTreeMap::new();
            let mut dets = BTreeMap::new();
            for img in 0..3u64 {
                let g: Vec<Box> = (0..3).map(|_| {
                    let (x, y) = (rng.below(40) as f64, rng.below(40) as f64);
                    bx(x, y, x + 8.0, y + 8.0)
                }).collect();
                let mut d = Vec::new();
                for gt in &g {
                    for _ in 0..2 {
                        let (dx, dy) = (rng.below(6) as f64 - 3.0, rng.below(6) as f64 - 3.0);
                        // Three coarse tiers so ties are common.
                        let c = [0.6, 0.75, 0.9][rng.below(3)];
                        d.push(det(bx(gt.x1 + dx, gt.y1 + dy, gt.x2 + dx, gt.y2 + dy), c));
                    }
                }
                gts.insert(ImageId::Number(img), g);
                dets.insert(ImageId::Number(img), d);
            }
            let base = average_precision(&dets, &gts, 0.5, 0.5).unwrap().ap;
            for d in dets.values_mut() {
                rng.shuffle(d);
            }
            prop_assert_eq!(average_precision(&dets, &gts, 0.5, 0.5).unwrap().ap, base);
        }
    }
}
