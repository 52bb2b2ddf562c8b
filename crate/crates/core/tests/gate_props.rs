use std::f64::consts::PI;

use proptest::prelude::*;
use spraygate_core::gate::{gate_detections, gate_mask, GateConfig};
use spraygate_core::{Box3D, Detection, RadarTarget, RadarTargetList};

fn detection() -> impl Strategy<Value = Detection> {
    (
        -10.0..10.0f64,
        -10.0..10.0f64,
        0.0..2.0f64,
        0.5..3.0f64,
        1.0..6.0f64,
        0.5..2.5f64,
        -PI..PI,
        0.0..=1.0f64,
    )
        .prop_map(|(x, y, z, w, l, h, t, c)| {
            Detection::new(Box3D::new(x, y, z, w, l, h, t).unwrap(), c).unwrap()
        })
}

fn targets() -> impl Strategy<Value = RadarTargetList> {
    prop::collection::vec(
        (-12.0..12.0f64, -12.0..12.0f64, -1.0..3.0f64, -5.0..5.0f64),
        0..12,
    )
    .prop_map(|ts| {
        RadarTargetList::new(
            ts.into_iter()
                .map(|(x, y, z, v)| RadarTarget { x, y, z, v })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn survivors_grow_with_gamma(
        dets in prop::collection::vec(detection(), 0..10),
        radar in targets(),
        g1 in 0.0..3.0f64,
        g2 in 0.0..3.0f64,
        require_count in 1usize..3,
        snap in any::<bool>(),
    ) {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let cfg = |gamma| GateConfig { gamma, require_count, snap_target_z: snap };
        let a = gate_mask(&dets, &radar, &cfg(lo)).unwrap();
        let b = gate_mask(&dets, &radar, &cfg(hi)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(!x || *y);
        }
    }

    #[test]
    fn survivors_do_not_depend_on_target_order(dets in prop::collection::vec(detection(), 0..10), radar in targets(), gamma in 0.0..2.0f64) {
        let cfg = GateConfig { gamma, ..Default::default() };
        let mut reversed = radar.targets().to_vec();
        reversed.reverse();
        let reversed = RadarTargetList::new(reversed).unwrap();
        prop_assert_eq!(gate_mask(&dets, &radar, &cfg).unwrap(), gate_mask(&dets, &reversed, &cfg).unwrap());
    }

    #[test]
    fn survivors_keep_input_order(dets in prop::collection::vec(detection(), 0..10), radar in targets()) {
        let cfg = GateConfig::default();
        let mask = gate_mask(&dets, &radar, &cfg).unwrap();
        let kept = gate_detections(&dets, &radar, &cfg).unwrap();
        let want: Vec<Detection> = dets.iter().zip(&mask).filter(|(_, k)| **k).map(|(d, _)| *d).collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn stricter_count_keeps_fewer(dets in prop::collection::vec(detection(), 0..10), radar in targets(), gamma in 0.0..2.0f64) {
        let one = gate_mask(&dets, &radar, &GateConfig { gamma, require_count: 1, ..Default::default() }).unwrap();
        let two = gate_mask(&dets, &radar, &GateConfig { gamma, require_count: 2, ..Default::default() }).unwrap();
        for (a, b) in one.iter().zip(&two) {
            prop_assert!(!b || *a);
        }
    }
}

#[test]
fn no_targets_removes_everything() {
    let d = Detection::new(Box3D::new(10.0, 0.0, 0.8, 1.9, 4.5, 1.6, 0.0).unwrap(), 0.9).unwrap();
    assert!(
        gate_detections(&[d], &RadarTargetList::default(), &GateConfig::default())
            .unwrap()
            .is_empty()
    );
}

#[test]
fn negative_gamma_is_rejected() {
    let cfg = GateConfig {
        gamma: -0.1,
        ..Default::default()
    };
    assert!(gate_mask(&[], &RadarTargetList::default(), &cfg).is_err());
}
