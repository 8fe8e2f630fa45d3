//! Score toy detections and proposals against constructed ground truth,
//! printing the per-class AP table and a two-threshold recall table.
//!
//! Usage: `cargo run --example evaluate_detections`

use anyhow::Result;

use scene_synth::bbox::BBox;
use scene_synth::eval::{
    evaluate_detections, format_ap_table, format_recall_table, recall_table, ApVariant,
    Detection, GroundTruth, Proposal,
};

fn gt(image: &str, label: &str, bbox: [f64; 4]) -> GroundTruth {
    GroundTruth {
        image: image.into(),
        label: label.into(),
        bbox: bbox.into(),
    }
}

fn det(image: &str, label: &str, bbox: [f64; 4], score: f64) -> Detection {
    Detection {
        image: image.into(),
        label: label.into(),
        bbox: bbox.into(),
        score,
    }
}

fn main() -> Result<()> {
    let ground_truth = vec![
        gt("img0", "cereal", [40.0, 30.0, 120.0, 140.0]),
        gt("img0", "can", [160.0, 80.0, 200.0, 150.0]),
        gt("img1", "cereal", [10.0, 10.0, 90.0, 120.0]),
        gt("img1", "bowl", [140.0, 90.0, 220.0, 150.0]),
    ];
    let detections = vec![
        det("img0", "cereal", [42.0, 32.0, 118.0, 138.0], 0.95), // good hit
        det("img0", "can", [162.0, 82.0, 198.0, 148.0], 0.88),   // good hit
        det("img0", "can", [161.0, 81.0, 199.0, 149.0], 0.70),   // duplicate -> FP
        det("img1", "cereal", [15.0, 20.0, 95.0, 125.0], 0.82),  // good hit
        det("img1", "bowl", [30.0, 30.0, 70.0, 60.0], 0.65),     // miss -> FP
    ];

    let report = evaluate_detections(&detections, &ground_truth, 0.5, ApVariant::AllPoints);
    println!("{}", format_ap_table(&report));

    // class-agnostic proposals for two datasets at two IoU thresholds
    let proposals_a: Vec<Proposal> = ground_truth
        .iter()
        .take(3)
        .map(|g| Proposal {
            image: g.image.clone(),
            bbox: BBox::new(g.bbox.x_min + 12.0, g.bbox.y_min, g.bbox.x_max + 12.0, g.bbox.y_max),
            score: Some(0.5),
        })
        .collect();
    let proposals_b: Vec<Proposal> = ground_truth
        .iter()
        .map(|g| Proposal {
            image: g.image.clone(),
            bbox: g.bbox,
            score: None,
        })
        .collect();
    let table = recall_table(
        &[
            ("shifted".to_string(), ground_truth.clone(), proposals_a),
            ("exact".to_string(), ground_truth, proposals_b),
        ],
        &[0.5, 0.7],
    );
    println!("{}", format_recall_table(&table));
    Ok(())
}
