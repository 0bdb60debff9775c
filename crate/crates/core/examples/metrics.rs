//! Pixel accuracy and intersection over union from a confusion matrix.
//!
//! cargo run --example metrics

use ccfmap::metrics::{iou, per_class_accuracy, pixel_accuracy, ConfusionMatrix, EvalReport};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // rows are the true class, columns the predicted one
    let cm = ConfusionMatrix::from_rows(&[&[50, 10], &[5, 35]]);
    println!("pixel accuracy: {:.5}", pixel_accuracy(&cm)?);
    println!("per-class accuracy: {:?}", per_class_accuracy(&cm));
    let scores = iou(&cm)?;
    println!("IoU: {:?}, mean {:.5}", scores.per_class, scores.mean);

    // a class absent from truth and prediction has no IoU and is left out of the mean
    let one_sided = ConfusionMatrix::from_rows(&[&[20, 0], &[0, 0]]);
    let scores = iou(&one_sided)?;
    println!("one-class matrix IoU: {:?}, mean {:.2}", scores.per_class, scores.mean);

    let report = EvalReport::from_confusion(cm, "north", "south")?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
