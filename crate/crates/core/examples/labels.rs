//! Label-constrained classifier answers and the stacked face/object baseline.
//!
//! ```text
//! cargo run --example labels -- "happy, person, cup"
//! ```

use ehk::ermodels::{format_baseline, parse_classifier_output, Detection};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "neutral, person, chair, box".into());
    let p = parse_classifier_output(&raw)?;
    println!("emotion {:?}, objects {:?}", p.emotion_label, p.objects);

    let detections = [
        Detection::new("person", 0.95)?,
        Detection::new("scissors", 0.86)?,
        Detection::new("chair", 0.81)?,
        Detection::new("cup", 0.40)?,
    ];
    println!("baseline: {}", format_baseline("neutral", &detections, 0.8));
    Ok(())
}
