use crate::events::BoundingBox;
use crate::ndiff::Real;
use crate::{Error, Result};

/// Intersection over union of two boxes; 0 when either is degenerate.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Real {
    let ((ax0, ay0, ax1, ay1), (bx0, by0, bx1, by1)) = (a.corners(), b.corners());
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Fraction of `predicted[k] == truth[k]`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<Real> {
    if predicted.is_empty() {
        return Err(Error::config("accuracy of an empty set is undefined"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::shape("accuracy", format!("{} predictions for {} labels", predicted.len(), truth.len())));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as Real / predicted.len() as Real)
}

/// One prediction per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredBox {
    pub class_id: usize,
    pub confidence: Real,
    pub bbox: BoundingBox,
}

/// Area under the precision envelope for one ranked list of hits, given
/// the number of ground-truth objects.
pub fn average_precision(ranked_hits: &[bool], n_truth: usize) -> Real {
    if n_truth == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked_hits.len());
    for (k, &hit) in ranked_hits.iter().enumerate() {
        tp += usize::from(hit);
        points.push((tp as Real / n_truth as Real, tp as Real / (k + 1) as Real));
    }
    // envelope: precision at recall r is the best precision at any recall ≥ r
    for k in (0..points.len().saturating_sub(1)).rev() {
        points[k].1 = points[k].1.max(points[k + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in points {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// mAP at IoU 0.5 with one prediction and one ground-truth object per
/// sample. For every class, predictions of that class are ranked by
/// confidence (ties by sample order); a prediction is a true positive when
/// its sample's object has that class and IoU ≥ 0.5. The mean runs over
/// classes with at least one ground-truth object.
pub fn map50(predictions: &[ScoredBox], truths: &[(usize, BoundingBox)]) -> Result<Real> {
    if predictions.is_empty() {
        return Err(Error::config("mAP of an empty set is undefined"));
    }
    if predictions.len() != truths.len() {
        return Err(Error::shape("map50", format!("{} predictions for {} samples", predictions.len(), truths.len())));
    }
    let n_classes = truths.iter().map(|t| t.0).chain(predictions.iter().map(|p| p.class_id)).max().unwrap() + 1;
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..n_classes {
        let n_truth = truths.iter().filter(|t| t.0 == c).count();
        if n_truth == 0 {
            continue;
        }
        let mut ranked: Vec<usize> = (0..predictions.len()).filter(|&k| predictions[k].class_id == c).collect();
        ranked.sort_by(|&a, &b| predictions[b].confidence.total_cmp(&predictions[a].confidence).then(a.cmp(&b)));
        let hits: Vec<bool> = ranked
            .iter()
            .map(|&k| truths[k].0 == c && iou(&predictions[k].bbox, &truths[k].1) >= 0.5)
            .collect();
        total += average_precision(&hits, n_truth);
        counted += 1;
    }
    Ok(total / counted as Real)
}
