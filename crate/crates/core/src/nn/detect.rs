use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::analysis::{Criticality, CriticalKind};
use crate::error::{Error, Result};
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HeadConfig {
    pub grid: usize,
    pub boxes: usize,
    pub classes: usize,
}

impl HeadConfig {
    /// Raw channels per cell: 5 box/objectness logits per box plus class logits.
    pub const fn channels(&self) -> usize {
        self.boxes * (5 + self.classes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeParams {
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { conf_threshold: 0.6, nms_iou: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub match_iou: f64,
    /// Matched boxes below this IoU count as drifted.
    pub tolerable_iou: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams { match_iou: 0.5, tolerable_iou: 0.8 }
    }
}

/// Box centre and size, normalized to the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    fn corners(&self) -> (f64, f64, f64, f64) {
        (self.x - self.w / 2.0, self.y - self.h / 2.0, self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let (ax0, ay0, ax1, ay1) = self.corners();
        let (bx0, by0, bx1, by1) = other.corners();
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
        let inter = iw * ih;
        let union = self.w * self.h + other.w * other.h - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub confidence: f64,
    /// `cell · boxes + box`, the tie-breaker after confidence.
    pub anchor: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// YOLO-style decode followed by class-agnostic greedy NMS.
pub fn decode_detections(raw: &Tensor, head: &HeadConfig, params: &DecodeParams) -> Result<Vec<Detection>> {
    if raw.dims() != (head.channels(), head.grid, head.grid) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}x{}", head.channels(), head.grid, head.grid),
            actual: format!("{}x{}x{}", raw.channels, raw.height, raw.width),
        });
    }
    let g = head.grid as f64;
    let value = |c: usize, y: usize, x: usize| numerics::to_f64(raw.get(c, y, x), raw.precision);
    let mut candidates = Vec::new();
    for gy in 0..head.grid {
        for gx in 0..head.grid {
            for b in 0..head.boxes {
                let base = b * (5 + head.classes);
                let confidence = sigmoid(value(base + 4, gy, gx));
                if confidence.is_nan() || confidence < params.conf_threshold {
                    continue;
                }
                let bbox = BBox {
                    x: (gx as f64 + sigmoid(value(base, gy, gx))) / g,
                    y: (gy as f64 + sigmoid(value(base + 1, gy, gx))) / g,
                    w: sigmoid(value(base + 2, gy, gx)),
                    h: sigmoid(value(base + 3, gy, gx)),
                };
                if !bbox.is_finite() {
                    continue;
                }
                let mut class_id = 0;
                let mut best = f64::NEG_INFINITY;
                for k in 0..head.classes {
                    let v = value(base + 5 + k, gy, gx);
                    if v > best {
                        best = v;
                        class_id = k;
                    }
                }
                candidates.push(Detection { bbox, class_id, confidence, anchor: (gy * head.grid + gx) * head.boxes + b });
            }
        }
    }
    candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.anchor.cmp(&b.anchor)));
    let mut kept: Vec<Detection> = Vec::new();
    for d in candidates {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < params.nms_iou) {
            kept.push(d);
        }
    }
    Ok(kept)
}

/// Compares faulty detections against golden ones.
///
/// Pairs are matched greedily by descending IoU (ties by index). Unmatched
/// faulty boxes win over unmatched golden boxes, then class changes, then drift.
pub fn classify_criticality(golden: &[Detection], faulty: &[Detection], params: &MatchParams) -> Criticality {
    let mut pairs = Vec::new();
    for (i, g) in golden.iter().enumerate() {
        for (j, f) in faulty.iter().enumerate() {
            let iou = g.bbox.iou(&f.bbox);
            if iou >= params.match_iou {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut g_match = alloc::vec![None; golden.len()];
    let mut f_used = alloc::vec![false; faulty.len()];
    for (iou, i, j) in pairs {
        if g_match[i].is_none() && !f_used[j] {
            g_match[i] = Some((j, iou));
            f_used[j] = true;
        }
    }
    if f_used.iter().any(|u| !u) {
        return Criticality::Critical(CriticalKind::FalsePositive);
    }
    if g_match.iter().any(Option::is_none) {
        return Criticality::Critical(CriticalKind::Misdetection);
    }
    let matched = || g_match.iter().enumerate().filter_map(|(i, m)| m.map(|(j, iou)| (i, j, iou)));
    if matched().any(|(i, j, _)| golden[i].class_id != faulty[j].class_id) {
        return Criticality::Critical(CriticalKind::ClassChange);
    }
    if matched().any(|(_, _, iou)| iou < params.tolerable_iou) {
        return Criticality::Critical(CriticalKind::BoxDrift);
    }
    Criticality::Tolerable
}
