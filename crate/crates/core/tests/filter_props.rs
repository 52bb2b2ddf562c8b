use proptest::prelude::*;
use spraygate_core::filter::*;
use spraygate_core::{ExecMode, Point, PointCloud, ScoreArray};

fn points() -> impl Strategy<Value = Vec<[f32; 3]>> {
    prop::collection::vec([-30.0..30.0f32, -30.0..30.0f32, -1.0..3.0f32], 8..200)
}

fn cloud(pts: &[[f32; 3]]) -> PointCloud {
    PointCloud::new(pts.iter().map(|p| Point::new(p[0], p[1], p[2], 0.0)).collect()).unwrap()
}

fn d(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    (0..3)
        .map(|c| (a[c] as f64 - b[c] as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn range(p: &[f32; 3]) -> f64 {
    (p[0] as f64).hypot(p[1] as f64)
}

fn dsor_oracle(pts: &[[f32; 3]], p: &DsorParams) -> Vec<bool> {
    let mean: Vec<f64> = pts
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut ds: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| d(a, b))
                .collect();
            ds.sort_by(f64::total_cmp);
            ds[..p.k].iter().sum::<f64>() / p.k as f64
        })
        .collect();
    let n = mean.len() as f64;
    let mu = mean.iter().sum::<f64>() / n;
    let sigma = (mean.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n).sqrt();
    pts.iter()
        .zip(&mean)
        .map(|(q, m)| *m <= (mu + p.s * sigma) * p.m * range(q).max(1.0))
        .collect()
}

fn dror_oracle(pts: &[[f32; 3]], p: &DrorParams) -> Vec<bool> {
    pts.iter()
        .enumerate()
        .map(|(i, a)| {
            let r = p.min_radius.max(p.alpha * range(a));
            let count = pts
                .iter()
                .enumerate()
                .filter(|&(j, b)| {
                    let d2: f64 = (0..3).map(|c| (a[c] as f64 - b[c] as f64).powi(2)).sum();
                    j != i && d2 <= r * r
                })
                .count();
            count >= p.min_neighbors
        })
        .collect()
}

fn mismatches(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

proptest! {
    #[test]
    fn threshold_is_monotone_in_tau(scores in prop::collection::vec(-5.0..5.0f32, 1..300), t1 in -5.0..5.0f64, t2 in -5.0..5.0f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let m_lo = threshold_mask(&scores, Threshold::new(lo).unwrap(), ExecMode::Sequential);
        let m_hi = threshold_mask(&scores, Threshold::new(hi).unwrap(), ExecMode::Sequential);
        for (a, b) in m_lo.iter().zip(&m_hi) {
            prop_assert!(!a || *b);
        }
    }

    #[test]
    fn threshold_parallel_equals_sequential(scores in prop::collection::vec(-5.0..5.0f32, 0..2000), t in -5.0..5.0f64) {
        let tau = Threshold::new(t).unwrap();
        prop_assert_eq!(
            threshold_mask(&scores, tau, ExecMode::Sequential),
            threshold_mask(&scores, tau, ExecMode::Parallel)
        );
    }

    #[test]
    fn calibration_hits_the_target_rate(mut scores in prop::collection::vec(-10.0..10.0f32, 1..2000), tpr in 0.01..1.0f64) {
        scores.sort_by(f32::total_cmp);
        scores.dedup();
        let n = scores.len() as f64;
        let tau = calibrate_threshold(&scores, tpr).unwrap();
        let kept = scores.iter().filter(|&&s| tau.is_valid(s)).count() as f64 / n;
        prop_assert!(kept >= tpr - 1e-9, "{kept} < {tpr}");
        prop_assert!(kept <= tpr + 1.0 / n + 1e-9, "{kept} > {tpr} + 1/{n}");
    }

    #[test]
    fn dsor_matches_brute_force(pts in points(), k in 1usize..6, s in 0.1..2.0f64, m in 0.05..0.5f64) {
        let p = DsorParams { k, s, m };
        let got = dsor_filter_with(&cloud(&pts), &p, ExecMode::Sequential).unwrap().keep_mask;
        prop_assert!(mismatches(&got, &dsor_oracle(&pts, &p)) == 0);
    }

    #[test]
    fn dror_matches_brute_force(pts in points(), alpha in 0.01..0.2f64, min_radius in 0.1..3.0f64, min_neighbors in 1usize..5) {
        let p = DrorParams { alpha, min_radius, min_neighbors };
        let got = dror_filter_with(&cloud(&pts), &p, ExecMode::Sequential).unwrap().keep_mask;
        prop_assert_eq!(got, dror_oracle(&pts, &p));
    }

    #[test]
    fn filters_commute_with_point_order(pts in points(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<[f32; 3]> = perm.iter().map(|&i| pts[i]).collect();
        for method in [FilterMethod::Dsor(DsorParams::default()), FilterMethod::Dror(DrorParams { min_radius: 1.0, ..Default::default() })] {
            let a = method.mask(&cloud(&pts), None, ExecMode::Parallel).unwrap();
            let b = method.mask(&cloud(&shuffled), None, ExecMode::Sequential).unwrap();
            let a_perm: Vec<bool> = perm.iter().map(|&i| a[i]).collect();
            prop_assert!(mismatches(&a_perm, &b) == 0, "{}", method.name());
        }
    }
}

#[test]
fn threshold_filter_keeps_boundary_scores() {
    let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
    let s = ScoreArray::new(vec![0.5, 1.0, 1.5]).unwrap();
    let r = threshold_filter(&c, &s, Threshold::new(1.0).unwrap()).unwrap();
    assert_eq!(r.keep_mask, vec![true, true, false]);
    assert_eq!(r.kept(), 2);
}

#[test]
fn dsor_on_a_tiny_cloud_keeps_everything() {
    let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let r = dsor_filter(&c, &DsorParams::default()).unwrap();
    assert_eq!(r.keep_mask, vec![true, true]);
}
