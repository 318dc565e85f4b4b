use coatprint::ace::{cull, decode, encode, permute_anchor, AceSequence};
use coatprint::augment::{warp_homography, Homography, WarpParams};
use coatprint::capture::degrade_visibility;
use coatprint::linalg::Matrix;
use coatprint::loss::{id_loss, itc_loss, triplet_hard_loss, FeatureBatch, LogitBatch};
use coatprint::matching::{histogram_lower_bound, sequence_distance, MatchConfig, MatchMode};
use coatprint::minutiae::MinutiaKind;
use coatprint::raster::{Point2, Raster};
use coatprint::rbf::RbfWarp;
use proptest::prelude::*;

fn token(region: usize) -> impl Strategy<Value = String> {
    (0usize..4, 0u32..6, 0u8..8).prop_map(move |(k, rc, b)| {
        let kind = ['R', 'B', 'C', 'E'][k];
        // convergences open downward: buckets 5 to 8 only
        let bucket = if kind == 'C' { 5 + b % 4 } else { 1 + b };
        format!("{kind}{rc}a{bucket}{}", ['F', 'M', 'H'][region])
    })
}

/// Regions go out along the body and back, starting anywhere on the cycle.
fn scan_regions(max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..3, 1..=max)
        .prop_flat_map(|r| {
            let n = r.len();
            (Just(r), 0..=n, 0..n)
        })
        .prop_map(|(mut r, split, rot)| {
            r[..split].sort_unstable();
            r[split..].sort_unstable_by(|a, b| b.cmp(a));
            r.rotate_left(rot);
            r
        })
}

fn text(max: usize) -> impl Strategy<Value = String> {
    scan_regions(max)
        .prop_flat_map(|regions| regions.into_iter().map(token).collect::<Vec<_>>())
        .prop_map(|t| t.join(";"))
}

fn sequence(max: usize) -> impl Strategy<Value = AceSequence> {
    text(max).prop_map(|t| decode(&t).expect("grammatical"))
}

fn conserved(s: &AceSequence) -> u64 {
    s.ridge_counts.iter().map(|&c| u64::from(c)).sum::<u64>()
        + s.minutiae.iter().filter(|m| m.kind == MinutiaKind::Ridge).count() as u64
}

fn rotate_anchor(s: &AceSequence, by: usize) -> AceSequence {
    let mut r = s.clone();
    r.anchor_index = (s.anchor_index + by) % s.len();
    r
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |i, j| data[(i * cols + j) % data.len()])
}

fn permute_rows(m: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(perm[i], j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn grammatical_text_roundtrips(t in text(20)) {
        let s = decode(&t).unwrap();
        prop_assert_eq!(encode(&s).unwrap().into_string(), t);
    }

    #[test]
    fn every_anchor_rotation_decodes_to_the_same_cycle(s in sequence(12), by in 0usize..12) {
        let r = rotate_anchor(&s, by);
        let back = decode(encode(&r).unwrap().as_str()).unwrap();
        prop_assert!(back.cyclically_equivalent(&s));
    }

    #[test]
    fn cull_removes_floor_fraction_and_conserves(s in sequence(20), f in 0.0f64..0.95, seed: u64) {
        let n = s.len();
        let remove = (f * n as f64).floor() as usize;
        match cull(&s, f, seed) {
            Ok(c) => {
                prop_assert_eq!(c.len(), n - remove);
                prop_assert_eq!(conserved(&c), conserved(&s));
                c.validate().unwrap();
            }
            Err(_) => prop_assert_eq!(remove, n),
        }
        prop_assert_eq!(cull(&s, 0.0, seed).unwrap(), s);
    }

    #[test]
    fn permute_anchor_count_and_distinctness(s in sequence(20), k in 1usize..12, w in 0usize..10, seed: u64) {
        prop_assume!(w < s.len());
        let out = permute_anchor(&s, k, w, seed).unwrap();
        // the cyclic window holds at most 2w + 1 distinct anchors
        prop_assert_eq!(out.len(), k.min((2 * w + 1).min(s.len())));
        prop_assert_eq!(&out[0], &s);
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                prop_assert_ne!(out[i].anchor_index, out[j].anchor_index);
            }
        }
    }

    #[test]
    fn demotion_never_creates_junctions(s in sequence(16), p in 0.0f64..=1.0, seed: u64) {
        let d = degrade_visibility(&s, p, seed).unwrap();
        let ridges = |q: &AceSequence| q.minutiae.iter().filter(|m| m.kind == MinutiaKind::Ridge).count();
        let junctions = |q: &AceSequence| q.len() - ridges(q);
        prop_assert!(ridges(&d) >= ridges(&s));
        prop_assert!(junctions(&d) <= junctions(&s));
    }

    #[test]
    fn distance_is_a_symmetric_rotation_invariant_premetric(a in sequence(10), b in sequence(10), ra in 0usize..10, rb in 0usize..10) {
        let cfg = MatchConfig::default();
        let d = sequence_distance(&a, &b, &cfg).unwrap().cost;
        prop_assert!(d >= 0.0);
        prop_assert_eq!(sequence_distance(&a, &a, &cfg).unwrap().cost, 0.0);
        prop_assert!((d - sequence_distance(&b, &a, &cfg).unwrap().cost).abs() < 1e-12);
        let rotated = sequence_distance(&rotate_anchor(&a, ra), &rotate_anchor(&b, rb), &cfg).unwrap().cost;
        prop_assert!((d - rotated).abs() < 1e-12);
    }

    #[test]
    fn histogram_bound_never_exceeds_distance(a in sequence(10), b in sequence(10)) {
        for mode in [MatchMode::Cyclic, MatchMode::Anchored] {
            let cfg = MatchConfig { mode, ..MatchConfig::default() };
            let d = sequence_distance(&a, &b, &cfg).unwrap().cost;
            let lb = histogram_lower_bound(&a.anchored_tokens(), &b.anchored_tokens(), &cfg.weights);
            prop_assert!(lb <= d + 1e-12, "bound {} above distance {}", lb, d);
        }
    }

    #[test]
    fn losses_are_permutation_equivariant(
        data in prop::collection::vec(-2.0f64..2.0, 48),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let labels: Vec<i64> = (0..6).map(|i| i % 3).collect();
        let x = matrix(6, 4, &data);
        let plabels: Vec<i64> = perm.iter().map(|&i| labels[i]).collect();
        let t0 = triplet_hard_loss(&FeatureBatch::new(x.clone(), labels).unwrap(), 0.2, 0.3).unwrap().loss;
        let t1 = triplet_hard_loss(&FeatureBatch::new(permute_rows(&x, &perm), plabels).unwrap(), 0.2, 0.3).unwrap().loss;
        prop_assert!(t0 >= 0.0);
        prop_assert!((t0 - t1).abs() < 1e-12);

        let y = matrix(6, 4, &data[24..]);
        let i0 = itc_loss(&x, &y, 50.0).unwrap();
        let i1 = itc_loss(&permute_rows(&x, &perm), &permute_rows(&y, &perm), 50.0).unwrap();
        prop_assert!(i0 >= 0.0);
        prop_assert!((i0 - i1).abs() < 1e-12);

        let ids: Vec<usize> = (0..6).map(|i| i % 4).collect();
        let batch = LogitBatch { image_logits: x.clone(), text_logits: y.clone(), labels: ids.clone() };
        let pbatch = LogitBatch {
            image_logits: permute_rows(&x, &perm),
            text_logits: permute_rows(&y, &perm),
            labels: perm.iter().map(|&i| ids[i]).collect(),
        };
        let d0 = id_loss(&batch).unwrap();
        prop_assert!(d0 >= 0.0);
        prop_assert!((d0 - id_loss(&pbatch).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn itc_ignores_positive_row_scaling(
        data in prop::collection::vec(-2.0f64..2.0, 40),
        scales in prop::collection::vec(0.1f64..10.0, 10),
    ) {
        let x = matrix(5, 4, &data);
        let y = matrix(5, 4, &data[20..]);
        prop_assume!((0..5).all(|i| x.row(i).iter().any(|v| v.abs() > 1e-3) && y.row(i).iter().any(|v| v.abs() > 1e-3)));
        let xs = Matrix::from_fn(5, 4, |i, j| x[(i, j)] * scales[i]);
        let ys = Matrix::from_fn(5, 4, |i, j| y[(i, j)] * scales[5 + i]);
        let a = itc_loss(&x, &y, 50.0).unwrap();
        let b = itc_loss(&xs, &ys, 50.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn rbf_is_linear_in_data_and_deterministic(
        pts in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0, -5.0f64..5.0, -5.0f64..5.0), 2..8),
        probe in (0.0f64..100.0, 0.0f64..100.0),
    ) {
        let nodes: Vec<Point2<f64>> = pts.iter().map(|p| Point2::new(p.0, p.1)).collect();
        // near-duplicate nodes make the system singular by design
        for i in 0..nodes.len() {
            for j in i + 1..nodes.len() {
                prop_assume!(nodes[i].dist(nodes[j]) > 1.0);
            }
        }
        let disp: Vec<Point2<f64>> = pts.iter().map(|p| Point2::new(p.2, p.3)).collect();
        let twice: Vec<Point2<f64>> = disp.iter().map(|d| Point2::new(2.0 * d.x, 2.0 * d.y)).collect();
        let eps = 30.0;
        let w = RbfWarp::fit(&nodes, &disp, eps).unwrap();
        let w2 = RbfWarp::fit(&nodes, &twice, eps).unwrap();
        prop_assert!(w.max_node_residual(&disp) < 1e-8);
        let q = Point2::new(probe.0, probe.1);
        let (a, b) = (w.evaluate(q), w2.evaluate(q));
        let scale = 1.0 + a.x.abs().max(a.y.abs());
        prop_assert!((2.0 * a.x - b.x).abs() < 1e-8 * scale && (2.0 * a.y - b.y).abs() < 1e-8 * scale);
        let again = RbfWarp::fit(&nodes, &disp, eps).unwrap();
        let bits = |r: &RbfWarp<f64>| r.weights.iter().flat_map(|w| [w[0].to_bits(), w[1].to_bits()]).collect::<Vec<_>>();
        prop_assert_eq!(bits(&w), bits(&again));
    }

    #[test]
    fn identity_homography_is_an_exact_copy(w in 1usize..24, h in 1usize..24, seed: u32) {
        let img = Raster::from_fn(w, h, |x, y| ((x * 31 + y * 17 + seed as usize) % 97) as f64 / 97.0);
        let out = warp_homography(&img, &Homography::identity(), 0.0).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn transport_commutes_with_composition(
        deg in -30.0f64..30.0, s in 0.8f64..1.2, tx in -10.0f64..10.0, ty in -10.0f64..10.0,
        px in 0.0f64..64.0, py in 0.0f64..64.0,
    ) {
        let c = Point2::new(32.0, 32.0);
        let a = Homography::rotation_about(c, deg);
        let b = Homography::scaling_about(c, s).then_after(&Homography::translation(tx, ty));
        let p = Point2::new(px, py);
        let seq = b.apply(a.apply(p));
        let comp = b.then_after(&a).apply(p);
        prop_assert!(seq.dist(comp) < 1e-9);
    }

    #[test]
    fn local_transport_inverts_the_sampling_map(
        sx in 10.0f64..50.0, sy in 10.0f64..50.0, dx in -6.0f64..6.0, dy in -6.0f64..6.0,
        k0 in 0.5f64..20.0, px in 0.0f64..64.0, py in 0.0f64..64.0,
    ) {
        let start = Point2::new(sx, sy);
        let w = WarpParams::new(start, Point2::new(sx + dx, sy + dy), k0, 20.0).unwrap();
        let q = Point2::new(px, py);
        let p = w.transport(q);
        prop_assert!(w.source_point(p).dist(q) < 1e-9);
    }
}
