//! Walk a frame through the preprocessing pipeline and check that joints ride
//! along with the same geometry, including under augmentation.
//!
//! ```bash
//! cargo run -p massnet --example preprocess_pipeline
//! ```

use massnet::data::{JointSet, Posture, PressureFrame, Sample};
use massnet::preprocess::{
    augment_sample, preprocess_pipeline, AugmentOp, PreprocessConfig,
};
use ndarray::Array2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a native-resolution frame (56x40, like a fabric mat) with one joint at
    // the grid center
    let mut grid = Array2::zeros((56, 40));
    grid[(28, 20)] = 10.0;
    grid[(20, 15)] = 4.0;
    let sample = Sample::new(PressureFrame::new(grid)?, "demo", 62.0, Posture::LeftSide)?
        .with_joints(JointSet::new(vec![(28.0, 20.0); 14])?);

    let cfg = PreprocessConfig::default(); // upsample x3, 5x5 smooth, pad to 192x192
    let processed = preprocess_pipeline(&sample, &cfg, 10.0, 14)?;
    println!(
        "56x40 native frame -> {}x{} tensor",
        processed.frame.nrows(),
        processed.frame.ncols()
    );
    println!(
        "joint (28, 20) -> normalized ({:.3}, {:.3})  [expect (0.500, 0.500)]",
        processed.joints[0], processed.joints[1]
    );

    // augmentations transform frame and joints with the same map
    let flipped = augment_sample(&sample, AugmentOp::HFlip)?;
    println!(
        "\nhflip: argmax {:?} -> {:?}, joint -> {:?}, posture {} -> {}",
        sample.frame.argmax(),
        flipped.frame.argmax(),
        flipped.joints.as_ref().unwrap().coords()[0],
        sample.posture,
        flipped.posture,
    );

    let shifted = augment_sample(&sample, AugmentOp::Shift(3, -2))?;
    println!(
        "shift(3, -2): argmax {:?} -> {:?}, joint -> {:?}",
        sample.frame.argmax(),
        shifted.frame.argmax(),
        shifted.joints.as_ref().unwrap().coords()[0],
    );

    let rotated = augment_sample(&sample, AugmentOp::Rotate(12.0))?;
    let (ar, ac) = rotated.frame.argmax();
    let (jr, jc) = rotated.joints.as_ref().unwrap().coords()[0];
    println!(
        "rotate(12 deg): argmax ({ar}, {ac}) vs joint ({jr:.2}, {jc:.2})  [within 1 px]"
    );
    println!(
        "weight untouched by augmentation: {} kg",
        rotated.weight_kg
    );
    Ok(())
}
