//! IoU, NMS, anchor offsets, focal loss and average precision on toy boxes.

use std::collections::BTreeMap;

use herdmetric::detgeom::{
    average_precision, decode_offsets, encode_offsets, focal_loss, iou, nms, Anchor, Box,
    Detection, FocalParams, ImageId, DEFAULT_NMS_THRESHOLD,
};

fn main() -> herdmetric::Result<()> {
    let cow = Box::new(0.0, 0.0, 10.0, 10.0)?;
    let shifted = Box::new(1.0, 1.0, 11.0, 11.0)?;
    println!("IoU {:.4}", iou(&cow, &shifted)?);

    let raw = vec![
        Detection::new(cow, 0.95)?,
        Detection::new(shifted, 0.90)?,
        Detection::new(Box::new(30.0, 30.0, 40.0, 40.0)?, 0.60)?,
    ];
    let kept = nms(&raw, DEFAULT_NMS_THRESHOLD)?;
    println!("NMS keeps {} of {}", kept.len(), raw.len());

    let anchor = Anchor::new(Box::new(-1.0, 0.0, 9.0, 12.0)?)?;
    let t = encode_offsets(&cow, &anchor)?;
    println!("offsets {t:.4?} decode to {}", decode_offsets(&t, &anchor)?);

    let fp = FocalParams::default();
    for p in [0.1, 0.5, 0.9] {
        println!("focal p={p}: positive {:.5}, negative {:.5}", focal_loss(p, 1, &fp)?, focal_loss(p, -1, &fp)?);
    }

    let truth = Box::new(30.0, 30.0, 40.0, 40.0)?;
    let dets = BTreeMap::from([(ImageId::Number(1), kept)]);
    let gts = BTreeMap::from([(ImageId::Number(1), vec![cow, truth])]);
    let ap = average_precision(&dets, &gts, 0.5, 0.5)?;
    println!("AP {:.4} ({} of {} found)", ap.ap, ap.true_positives, ap.ground_truths);
    Ok(())
}
