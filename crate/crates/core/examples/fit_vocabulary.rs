//! Fits a K-disk motion vocabulary and measures how well it reconstructs the
//! expert tracks it was fitted on.

use anchorplay::scenario::{generate_synthetic_scenario, Template};
use anchorplay::tokenizer::{collect_segments, fit_kdisk_target_k, track_segment, DEFAULT_DISTANCE_LAMBDA};

fn main() -> anchorplay::error::Result<()> {
    let scenarios: Vec<_> = (0..12u64)
        .map(|i| generate_synthetic_scenario(Template::ALL[i as usize % 3], 6, i))
        .collect::<Result<_, _>>()?;
    let segs = collect_segments(scenarios.iter().flat_map(|s| s.tracks.iter()), 2);
    for k in [16, 32, 64] {
        let fit = fit_kdisk_target_k(&segs, k, DEFAULT_DISTANCE_LAMBDA, 0)?;
        let v = &fit.vocab;
        let mut worst: f64 = 0.0;
        for s in &scenarios {
            for tr in &s.tracks {
                for t in 0..tr.len().saturating_sub(2) {
                    if let Some(seg) = track_segment(tr, t, 2) {
                        worst = worst.max(v.nearest_distance(&seg));
                    }
                }
            }
        }
        println!(
            "K target {k:>2}: {} tokens, radius {:.4}, coverage {:.3}, worst window error {:.4}",
            v.len(),
            v.radius,
            fit.coverage,
            worst
        );
    }
    Ok(())
}
