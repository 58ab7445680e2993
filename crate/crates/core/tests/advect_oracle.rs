mod common;

use common::AdvectOracle;
use deeptraj::advect::{extract_trajectories, AdvectParams};
use deeptraj::flow::FlowField;
use deeptraj::image::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn split(f: &FlowField) -> (Vec<f64>, Vec<f64>) {
    (f.u().to_vec(), f.v().to_vec())
}

#[test]
fn rotational_field_matches_scalar_integrator() {
    let (w, h) = (32usize, 32usize);
    let c = 15.5;
    let rot = FlowField::from_fn(w, h, |x, y| (-(y as f64 - c) * 0.1, (x as f64 - c) * 0.1));
    let flows = vec![rot; 20];
    let params = AdvectParams {
        stride: 3,
        min_extent: 0.0,
        coherence_cos_min: -1.0,
        magnitude_min: 0.0,
        use_foreground_mask: false,
    };
    let got = extract_trajectories(&flows, None, &params).unwrap();
    let oracle = AdvectOracle { stride: 3, magnitude_min: 0.0, cos_min: -1.0, use_mask: false };
    let raw: Vec<_> = flows.iter().map(split).collect();
    let want: Vec<_> = oracle.run(w, h, &raw, None).into_iter().filter(|p| !p.is_empty()).collect();
    assert_eq!(got.len(), want.len());
    for (g, o) in got.iter().zip(&want) {
        assert_eq!(g.len(), o.len());
        for (p, q) in g.points.iter().zip(o) {
            assert_eq!(p.t, q.0);
            assert!((p.x - q.1).abs() <= 1e-9 && (p.y - q.2).abs() <= 1e-9);
        }
    }
    // particles near the center stay inside for all 20 steps
    assert!(got.iter().any(|t| t.len() == 20));
}

#[test]
fn translating_blob_gate_count_matches_oracle() {
    let (w, h) = (32usize, 24usize);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut flows = Vec::new();
    let mut masks = Vec::new();
    for t in 0..6 {
        let cx = 8.0 + 1.5 * t as f64;
        let inside = |x: usize, y: usize| ((x as f64 - cx).powi(2) + (y as f64 - 12.0).powi(2)) < 36.0;
        let jitter: f64 = rng.random_range(-0.1..0.1);
        flows.push(FlowField::from_fn(w, h, |x, y| {
            if inside(x, y) { (1.5 + jitter, 0.1) } else { (0.01, 0.0) }
        }));
        masks.push(GrayImage::from_fn(w, h, |x, y| if inside(x, y) { 1.0 } else { 0.0 }));
    }
    let params = AdvectParams { stride: 2, min_extent: 0.0, ..Default::default() };
    let got = extract_trajectories(&flows, Some(&masks), &params).unwrap();
    let oracle = AdvectOracle {
        stride: 2,
        magnitude_min: params.magnitude_min,
        cos_min: params.coherence_cos_min,
        use_mask: true,
    };
    let raw: Vec<_> = flows.iter().map(split).collect();
    let raw_masks: Vec<Vec<f64>> = masks.iter().map(|m| m.data().to_vec()).collect();
    let want = oracle.run(w, h, &raw, Some(&raw_masks));
    let want_count = want.iter().filter(|p| !p.is_empty()).count();
    assert!(want_count > 0);
    assert_eq!(got.len(), want_count);
}
