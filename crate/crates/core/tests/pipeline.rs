use std::sync::Arc;

use bihm_core::bubbletree::{analyze, BubbleTreeConfig};
use bihm_core::fixtures::{stereographic_bubble, BubbleProfile};
use bihm_core::flow::{perturbed_constant, FlowConfig, FlowState};
use bihm_core::grid4::{decode_bhm4, encode_bhm4, BallGrid4, Field, S3Quadrature};
use bihm_core::manifold::TargetManifold;
use bihm_core::pohozaev::{pohozaev_extrinsic, AnnulusBounds};
use bihm_core::s3harmonics::AnnulusSampling;
use bihm_core::tension::{manifold_distance, tension_extrinsic};

fn grid(radius: f64, h: f64) -> Arc<BallGrid4> {
    BallGrid4::new(radius, h).unwrap()
}

#[test]
fn flow_slice_feeds_the_forced_pohozaev_identity() {
    let m = TargetManifold::sphere(3).unwrap();
    let g = grid(0.75, 1.0 / 12.0);
    let u0 = perturbed_constant(&g, &m, &[0.0, 0.0, 1.0], 0.25, 2).unwrap();
    let mut state = FlowState::new(u0, m.clone(), FlowConfig { snapshot_every: 5, ..Default::default() }).unwrap();
    state.run(15).unwrap();
    assert!(state.manifold_distance() <= 1e-12);
    let e: Vec<f64> = state.energy_trace.iter().map(|e| e.1).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0]));

    let slice = state.select_time_slice().unwrap();
    let sampling = AnnulusSampling { shell_ratio: 1.05, sphere: S3Quadrature::new(8, 8, 16) };
    let rep = pohozaev_extrinsic(&slice.u, &slice.f, &m, AnnulusBounds::new(0.1, 0.2).unwrap(), &sampling).unwrap();
    assert!(rep.approximate_map_extension);
    assert!(rep.relative_residual.abs() < 0.05, "{rep:?}");
}

#[test]
fn snapshots_survive_a_bhm4_round_trip() {
    let m = TargetManifold::sphere(3).unwrap();
    let g = grid(0.5, 0.125);
    let u = perturbed_constant(&g, &m, &[1.0, 0.0, 0.0], 0.2, 0).unwrap();
    let back = decode_bhm4(&encode_bhm4(&u)).unwrap();
    assert_eq!(manifold_distance(&back, &m), manifold_distance(&u, &m));
    let a = tension_extrinsic(&u, &m).unwrap().field;
    let b = tension_extrinsic(&back, &m).unwrap().field;
    assert_eq!(a.sub(&b).max_norm(&bihm_core::grid4::Region::Whole), 0.0);
}

#[test]
fn bubble_tree_of_a_planted_bubble() {
    let g = grid(0.375, 1.0 / 32.0);
    let profile = BubbleProfile::calibrated(0.35);
    let u = profile.plant(&g, [0.01, 0.0, -0.01, 0.005], 0.1);
    let tree = analyze(&u, &BubbleTreeConfig { eps0: 0.35, ..Default::default() }).unwrap();
    assert_eq!(tree.bubbles.len(), 1);
    let b = &tree.bubbles[0];
    assert!(b.scale > 0.05 && b.scale < 0.2, "{}", b.scale);
    assert_eq!(tree.necks.len(), 1);
    let rep = &tree.report;
    assert!(rep.total_energy > rep.limit_region_energy);
    assert!(rep.bookkeeping_defect.abs() < 0.2 * rep.total_energy, "{rep:?}");
}

#[test]
fn constant_map_has_no_bubbles() {
    let g = grid(0.375, 1.0 / 16.0);
    let u = Field::constant(&g, &[0.0, 0.0, 0.0, 0.0, 1.0]);
    let tree = analyze(&u, &BubbleTreeConfig::default()).unwrap();
    assert!(tree.points.is_empty() && tree.bubbles.is_empty());
    let wide = stereographic_bubble(&g, [0.0; 4], 2.0);
    assert!(analyze(&wide, &BubbleTreeConfig::default()).unwrap().bubbles.is_empty());
}
