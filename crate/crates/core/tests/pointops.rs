use std::collections::HashSet;

use cadseq::pointops::{
    read_ply, read_xyz, resample_distribution, resample_indices, surface_variation, write_ply, write_xyz, CloudFile,
};
use cadseq::{Execution, V3};
use proptest::prelude::*;

fn points(n: usize) -> impl Strategy<Value = Vec<V3>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| V3::new(x, y, z)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_is_a_distribution_with_uniform_floor(
        scores in prop::collection::vec(0.0..1.0f64, 1..200),
        lambda in 0.0..1.0f64,
        beta in 0.0..20.0f64,
    ) {
        let p = resample_distribution(&scores, lambda, beta);
        let n = scores.len() as f64;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= (1.0 - lambda) / n * (1.0 - 1e-12)));
        // Monotone in the score.
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] < scores[j] {
                    prop_assert!(p[i] <= p[j] * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn without_replacement_draws_distinct_indices(
        scores in prop::collection::vec(0.0..1.0f64, 1..120),
        frac in 0.0..=1.0f64,
        seed in 0u64..10_000,
    ) {
        let m = (frac * scores.len() as f64) as usize;
        let idx = resample_indices(&scores, m, 0.7, 5.0, seed, false).unwrap();
        prop_assert_eq!(idx.len(), m);
        prop_assert_eq!(idx.iter().collect::<HashSet<_>>().len(), m);
        prop_assert!(idx.iter().all(|&i| i < scores.len()));
        prop_assert_eq!(&idx, &resample_indices(&scores, m, 0.7, 5.0, seed, false).unwrap());
        prop_assert!(resample_indices(&scores, scores.len() + 1, 0.7, 5.0, seed, false).is_err());
    }

    #[test]
    fn planar_clouds_have_no_variation(pts in points(60), k in 4usize..12) {
        let flat: Vec<V3> = pts.iter().map(|p| V3::new(p.x, p.y, 0.3)).collect();
        let s = surface_variation(&flat, k, Execution::Sequential).unwrap();
        prop_assert!(s.iter().all(|v| v.abs() < 1e-9), "{:?}", s);
    }

    #[test]
    fn variation_is_bounded_and_execution_independent(pts in points(80), k in 4usize..16) {
        let s = surface_variation(&pts, k, Execution::Sequential).unwrap();
        prop_assert!(s.iter().all(|v| (0.0..=1.0 / 3.0 + 1e-12).contains(v)));
        prop_assert_eq!(s, surface_variation(&pts, k, Execution::Parallel).unwrap());
        prop_assert!(surface_variation(&pts, 3, Execution::Sequential).is_err());
        prop_assert!(surface_variation(&pts[..k], k, Execution::Sequential).is_err());
    }

    #[test]
    fn ply_and_xyz_round_trip(pts in points(30), q in prop::collection::vec(-1e3..1e3f64, 30)) {
        let normals: Vec<V3> = pts.iter().map(|p| if p.norm() > 0.0 { p.normalize() } else { V3::z() }).collect();
        let cloud = CloudFile { points: pts.clone(), normals: Some(normals), quality: Some(q), comments: vec!["seed 4".into()] };
        let mut buf = Vec::new();
        write_ply(&cloud, &mut buf).unwrap();
        prop_assert_eq!(read_ply(&mut buf.as_slice()).unwrap(), cloud);

        let plain = CloudFile { points: pts, ..CloudFile::default() };
        let mut buf = Vec::new();
        write_xyz(&plain, &mut buf).unwrap();
        prop_assert_eq!(read_xyz(&mut buf.as_slice()).unwrap().points, plain.points);
    }
}

#[test]
fn degenerate_mixtures() {
    let s = [0.1, 0.9, 0.5];
    assert_eq!(resample_distribution(&s, 0.0, 5.0), vec![1.0 / 3.0; 3]);
    assert_eq!(resample_distribution(&s, 0.7, 0.0), vec![1.0 / 3.0; 3]);
    assert!(resample_distribution(&[], 0.7, 5.0).is_empty());
    assert!(resample_indices(&[], 1, 0.7, 5.0, 0, true).is_err());
    let idx = resample_indices(&s, 50, 1.0, 1e6, 9, true).unwrap();
    assert!(idx.iter().all(|&i| i == 1));
}

#[test]
fn truncated_ply_is_an_error() {
    let cloud = CloudFile { points: vec![V3::new(1.0, 2.0, 3.0); 4], ..CloudFile::default() };
    let mut buf = Vec::new();
    write_ply(&cloud, &mut buf).unwrap();
    buf.truncate(buf.len() - 5);
    assert!(read_ply(&mut buf.as_slice()).is_err());
    assert!(read_ply(&mut &b"ply\nformat ascii 1.0\n"[..]).is_err());
}
