mod common;

use common::{block_match_mode, interior_aee, Texture};
use deeptraj::flow::{compute_flow, FlowParams};

fn check_translation(seed: u64, d: (i64, i64), bound: f64) {
    let tex = Texture::seeded(seed);
    let prev = tex.render(64, 64, 0.0, 0.0);
    let next = tex.render(64, 64, d.0 as f64, d.1 as f64);
    assert_eq!(block_match_mode(&prev, &next, 9, 3), d, "oracle disagrees with construction");
    let flow = compute_flow(&prev, &next, &FlowParams::default()).unwrap();
    let aee = interior_aee(flow.u(), flow.v(), 64, 64, (d.0 as f64, d.1 as f64), 8);
    assert!(aee < bound, "seed {seed} d {d:?}: AEE {aee}");
}

#[test]
fn unit_horizontal_translation() {
    check_translation(1, (1, 0), 0.25);
}

#[test]
fn diagonal_translation() {
    check_translation(2, (2, 1), 0.3);
}
