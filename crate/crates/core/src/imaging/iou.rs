use crate::scalar::Field;

use super::{BinaryMask, Box, Result};

/// Pixel IoU `|a ∩ b| / |a ∪ b|`. Two empty masks agree perfectly (1).
pub fn mask_iou<T: Field>(a: &BinaryMask, b: &BinaryMask) -> Result<T> {
    a.same_shape(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.bits().iter().zip(b.bits()) {
        inter += usize::from(p && q);
        union += usize::from(p || q);
    }
    if union == 0 {
        return Ok(T::one());
    }
    Ok(T::from_count(inter) / T::from_count(union))
}

/// Closed-form IoU of two boxes.
pub fn box_iou<T: Field>(a: &Box, b: &Box) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    T::from_count(inter as usize) / T::from_count(union as usize)
}

/// One-to-one matching by descending IoU. Pairs with zero overlap are never
/// matched; equal IoUs resolve to the smaller (detection, truth) index.
/// Returns `(detection, truth, iou)` triples in matching order.
pub fn greedy_match<T: Field>(detections: &[Box], truths: &[Box]) -> Vec<(usize, usize, T)> {
    let mut pairs: Vec<(usize, usize, T)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            if d.intersection_area(t) > 0 {
                pairs.push((i, j, box_iou(d, t)));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    let mut det_used = vec![false; detections.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut out = Vec::new();
    for (i, j, iou) in pairs {
        if !det_used[i] && !truth_used[j] {
            det_used[i] = true;
            truth_used[j] = true;
            out.push((i, j, iou));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn mask_cases() {
        let a = Box { x0: 0, y0: 0, x1: 10, y1: 10 }.to_mask(30, 30);
        let shifted = Box { x0: 5, y0: 0, x1: 15, y1: 10 }.to_mask(30, 30);
        let far = Box { x0: 20, y0: 20, x1: 25, y1: 25 }.to_mask(30, 30);
        assert_eq!(mask_iou::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou::<f64>(&a, &far).unwrap(), 0.0);
        assert_eq!(mask_iou::<Ratio<i64>>(&a, &shifted).unwrap(), Ratio::new(50, 150));
        let empty = BinaryMask::new(30, 30);
        assert_eq!(mask_iou::<f64>(&empty, &empty).unwrap(), 1.0);
        assert!(mask_iou::<f64>(&a, &BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn box_cases() {
        let a = Box { x0: 0, y0: 0, x1: 10, y1: 10 };
        let b = Box { x0: 5, y0: 0, x1: 15, y1: 10 };
        let c = Box { x0: 10, y0: 10, x1: 12, y1: 12 };
        assert_eq!(box_iou::<f64>(&a, &a), 1.0);
        assert_eq!(box_iou::<f64>(&a, &c), 0.0);
        assert_eq!(box_iou::<Ratio<i64>>(&a, &b), Ratio::new(1, 3));
        let raster: f64 = mask_iou(&a.to_mask(20, 20), &b.to_mask(20, 20)).unwrap();
        assert!((box_iou::<f64>(&a, &b) - raster).abs() <= 1e-12);
        assert!((box_iou::<f32>(&a, &b) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn greedy_prefers_best_pair() {
        let t = [Box { x0: 0, y0: 0, x1: 10, y1: 10 }, Box { x0: 8, y0: 0, x1: 18, y1: 10 }];
        // d0 overlaps both truths, best with t1; d1 matches t0 at 9/10 first
        let d = [Box { x0: 7, y0: 0, x1: 17, y1: 10 }, Box { x0: 0, y0: 0, x1: 9, y1: 10 }];
        let m = greedy_match::<Ratio<i64>>(&d, &t);
        assert_eq!(m, vec![(1, 0, Ratio::new(9, 10)), (0, 1, Ratio::new(9, 11))]);
        assert!(greedy_match::<f64>(&d, &[]).is_empty());
    }
}
