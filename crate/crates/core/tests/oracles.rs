//! Implementation-vs-oracle checks. Every oracle here is a direct,
//! unoptimized recomputation that shares no code path with the library
//! routine it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stereo_bp::bp::run;
use stereo_bp::{
    bad_pixel_rate, build_cost_volume, downsample_volume, exact_map_chain, exact_map_grid_small,
    extract_disparity, labeling_energy, lift_messages, ncc_score, prune_candidates,
    update_message, BpConfig, CandidateCount, CostVolume, Direction, DisparityMap, GrayImage,
    MessageField, NccParams, Schedule, SmoothnessParams,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
}

fn random_volume(rng: &mut ChaCha8Rng, w: usize, h: usize, l: usize, max: f64) -> CostVolume {
    let costs = (0..w * h * l).map(|_| rng.gen_range(0.0..max)).collect();
    CostVolume::new(w, h, l, costs).unwrap()
}

/// Textbook NCC: means, centered products, square roots.
fn ncc_oracle(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma: f64 = a.iter().sum::<f64>() / n;
    let mb: f64 = b.iter().sum::<f64>() / n;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let da: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let db: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da.sqrt() * db.sqrt())
    }
}

fn window(img: &GrayImage, cx: usize, cy: usize, r: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            v.push(f64::from(img.get(x, y)));
        }
    }
    v
}

#[test]
fn ncc_score_matches_direct_summation() {
    let mut rng = rng(11);
    for _ in 0..200 {
        let left = random_image(&mut rng, 3, 3);
        let right = random_image(&mut rng, 3, 3);
        let got = ncc_score(&left, &right, 1, 1, 0, 1).unwrap();
        let want = ncc_oracle(&window(&left, 1, 1, 1), &window(&right, 1, 1, 1));
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn cost_volume_matches_per_element_oracle() {
    let mut rng = rng(12);
    let (w, h, l) = (16, 16, 5);
    let left = random_image(&mut rng, w, h);
    let right = random_image(&mut rng, w, h);
    let params = NccParams {
        window_radius: 2,
        data_weight: 1.3,
        data_truncation: 1.1,
        candidate_count: CandidateCount::All,
    };
    let vol = build_cost_volume(&left, &right, l, &params).unwrap();
    let r = params.window_radius;
    for y in 0..h {
        for x in 0..w {
            for d in 0..l {
                let inside = y >= r && y + r < h && x + r < w && x >= d + r;
                let want = if inside {
                    let s = ncc_oracle(&window(&left, x, y, r), &window(&right, x - d, y, r));
                    (params.data_weight * (1.0 - s)).min(params.data_truncation)
                } else {
                    params.data_truncation
                };
                let got = vol.cost(x, y, d);
                assert!((got - want).abs() < 1e-12, "({x},{y},{d}): {got} vs {want}");
            }
        }
    }
}

#[test]
fn zero_shift_pair_prefers_zero() {
    let mut rng = rng(13);
    let img = random_image(&mut rng, 12, 12);
    let vol = build_cost_volume(&img, &img, 4, &NccParams::default()).unwrap();
    for y in 2..10 {
        for x in 5..10 {
            assert_eq!(vol.cost(x, y, 0), 0.0);
            assert!((1..4).all(|d| vol.cost(x, y, d) >= vol.cost(x, y, 0)));
        }
    }
}

#[test]
fn pruning_matches_sort_oracle() {
    let mut rng = rng(14);
    for trial in 0..50 {
        let l = rng.gen_range(1..=7);
        let k = rng.gen_range(1..=l);
        // Quantized costs make ties common.
        let costs: Vec<f64> = (0..6 * l).map(|_| f64::from(rng.gen_range(0..4u8)) * 0.25).collect();
        let vol = CostVolume::new(3, 2, l, costs).unwrap();
        let pruned = prune_candidates(&vol, CandidateCount::Top(k), 1.0).unwrap();
        for p in 0..6 {
            let px = vol.pixel_costs(p);
            let mut pairs: Vec<(f64, usize)> = px.iter().copied().zip(0..).collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut keep: Vec<usize> = pairs[..k].iter().map(|&(_, d)| d).collect();
            keep.sort();
            if k < l {
                assert_eq!(pruned.candidates(p % 3, p / 3), keep, "trial {trial}");
                for (d, (&c, &got)) in px.iter().zip(pruned.pixel_costs(p)).enumerate() {
                    let want = if keep.contains(&d) { c } else { c.max(1.0) };
                    assert_eq!(got, want);
                }
            } else {
                assert_eq!(pruned, vol);
            }
        }
    }
}

#[test]
fn downsample_matches_double_loop() {
    let mut rng = rng(15);
    let vol = random_volume(&mut rng, 5, 7, 3, 1.0);
    let coarse = downsample_volume(&vol);
    assert_eq!((coarse.width(), coarse.height(), coarse.levels()), (3, 4, 3));
    for cy in 0..4 {
        for cx in 0..3 {
            for d in 0..3 {
                let mut sum = 0.0;
                for y in 2 * cy..(2 * cy + 2).min(7) {
                    for x in 2 * cx..(2 * cx + 2).min(5) {
                        sum += vol.cost(x, y, d);
                    }
                }
                assert!((coarse.cost(cx, cy, d) - sum).abs() < 1e-12);
            }
        }
    }
}

/// O(L^2) message: direct minimization over every sender label.
fn message_oracle(h: &[f64], params: &SmoothnessParams) -> Vec<f64> {
    let l = h.len();
    let raw: Vec<f64> = (0..l)
        .map(|dq| {
            (0..l)
                .map(|dp| h[dp] + (params.slope * (dp as f64 - dq as f64).abs()).min(params.truncation))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let m = raw.iter().copied().fold(f64::INFINITY, f64::min);
    raw.iter().map(|v| v - m).collect()
}

#[test]
fn update_message_matches_quadratic_minimization() {
    let mut rng = rng(16);
    for _ in 0..100 {
        let l = rng.gen_range(1..=9);
        let vol = random_volume(&mut rng, 3, 3, l, 5.0);
        let mut field = MessageField::zeros(3, 3, l);
        for y in 0..3 {
            for x in 0..3 {
                for side in Direction::ALL {
                    if side.neighbor(x, y, 3, 3).is_some() {
                        let m: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..3.0)).collect();
                        field.set_incoming(x, y, side, &m);
                    }
                }
            }
        }
        let params = SmoothnessParams::new(rng.gen_range(0.0..2.0), rng.gen_range(0.1..4.0)).unwrap();
        let toward = Direction::ALL[rng.gen_range(0..4)];
        let got = update_message(&vol, &field, 1, 1, toward, &params).unwrap();
        let mut h = vol.pixel_costs(4).to_vec();
        for side in Direction::ALL.into_iter().filter(|s| *s != toward) {
            for (a, b) in h.iter_mut().zip(field.incoming(1, 1, side)) {
                *a += b;
            }
        }
        let want = message_oracle(&h, &params);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{got:?} vs {want:?}");
        }
        assert_eq!(got.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    }
}

fn chain_volume(costs: &[Vec<f64>]) -> CostVolume {
    let l = costs[0].len();
    CostVolume::new(costs.len(), 1, l, costs.concat()).unwrap()
}

#[test]
fn chain_messages_are_dp_prefixes() {
    let mut rng = rng(17);
    let params = SmoothnessParams::new(1.0, 2.0).unwrap();
    let costs: Vec<Vec<f64>> = (0..4).map(|_| (0..4).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
    let vol = chain_volume(&costs);
    let config = BpConfig {
        max_sweeps: 4,
        schedule: Schedule::Full,
        smoothness: params,
        ..BpConfig::default()
    };
    let out = run(&vol, MessageField::zeros(4, 1, 4), &config).unwrap();

    // Forward DP prefix: f_0 = c_0, f_i(d) = min_e f_{i-1}(e) + V(e, d) + c_i(d).
    // The message into node i from the left is min_e f_{i-1}(e) + V(e, d), normalized.
    let mut prefix = costs[0].clone();
    for (i, node_costs) in costs.iter().enumerate().skip(1) {
        let msg = message_oracle(&prefix, &params);
        let got = out.field.incoming(i, 0, Direction::Left);
        for (g, w) in got.iter().zip(&msg) {
            assert!((g - w).abs() < 1e-9, "node {i}: {got:?} vs {msg:?}");
        }
        prefix = msg.iter().zip(node_costs).map(|(m, c)| m + c).collect();
    }
    let mut suffix = costs[3].clone();
    for i in (0..3).rev() {
        let msg = message_oracle(&suffix, &params);
        let got = out.field.incoming(i, 0, Direction::Right);
        for (g, w) in got.iter().zip(&msg) {
            assert!((g - w).abs() < 1e-9, "node {i}: {got:?} vs {msg:?}");
        }
        suffix = msg.iter().zip(&costs[i]).map(|(m, c)| m + c).collect();
    }
}

fn enumerate_chain(costs: &[Vec<f64>], params: &SmoothnessParams) -> f64 {
    let n = costs.len();
    let l = costs[0].len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut e: f64 = labels.iter().zip(costs).map(|(&d, c)| c[d]).sum();
        for w in labels.windows(2) {
            e += (params.slope * w[0].abs_diff(w[1]) as f64).min(params.truncation);
        }
        best = best.min(e);
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < l {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn chain_dp_matches_enumeration() {
    let mut rng = rng(18);
    for _ in 0..200 {
        let n = rng.gen_range(1..=8);
        let l = rng.gen_range(1..=4);
        let costs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..l).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let params = SmoothnessParams::new(rng.gen_range(0.0..3.0), rng.gen_range(0.5..5.0)).unwrap();
        let sol = exact_map_chain(&costs, &params).unwrap();
        let want = enumerate_chain(&costs, &params);
        assert!((sol.energy - want).abs() < 1e-9);
        // The returned labels achieve the returned energy.
        let map = DisparityMap::from_labels(n, 1, sol.labels.iter().map(|&d| d as u32).collect()).unwrap();
        let e = labeling_energy(&chain_volume(&costs), &map, &params).unwrap();
        assert!((e - sol.energy).abs() < 1e-9);
    }
}

/// Energy re-summed pixel by pixel, with every edge visited from both ends
/// and halved.
fn energy_oracle(vol: &CostVolume, labels: &[u32], params: &SmoothnessParams) -> f64 {
    let (w, h) = (vol.width(), vol.height());
    let mut data = 0.0;
    let mut pair = 0.0;
    for y in 0..h {
        for x in 0..w {
            let d = labels[y * w + x] as usize;
            data += vol.cost(x, y, d);
            for side in Direction::ALL {
                if let Some((nx, ny)) = side.neighbor(x, y, w, h) {
                    let e = labels[ny * w + nx] as usize;
                    pair += 0.5 * (params.slope * d.abs_diff(e) as f64).min(params.truncation);
                }
            }
        }
    }
    data + pair
}

#[test]
fn labeling_energy_matches_resummation() {
    let mut rng = rng(19);
    for _ in 0..100 {
        let (w, h, l) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
        let vol = random_volume(&mut rng, w, h, l, 3.0);
        let labels: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..l as u32)).collect();
        let params = SmoothnessParams::new(rng.gen_range(0.0..2.0), rng.gen_range(0.5..3.0)).unwrap();
        let map = DisparityMap::from_labels(w, h, labels.clone()).unwrap();
        let got = labeling_energy(&vol, &map, &params).unwrap();
        assert!((got - energy_oracle(&vol, &labels, &params)).abs() < 1e-9);
    }
}

#[test]
fn bad_pixel_rate_matches_recount() {
    let mut rng = rng(20);
    for _ in 0..100 {
        let (w, h) = (rng.gen_range(1..10), rng.gen_range(1..10));
        let truth: Vec<Option<u32>> = (0..w * h)
            .map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..20)) })
            .collect();
        let result: Vec<u32> = (0..w * h).map(|_| rng.gen_range(0..20)).collect();
        let border = rng.gen_range(0..4);
        let threshold = rng.gen_range(0.5..3.0);
        let (mut bad, mut eval) = (0, 0);
        for p in 0..w * h {
            if let Some(t) = truth[p] {
                if p % w >= border {
                    eval += 1;
                    if (f64::from(result[p]) - f64::from(t)).abs() > threshold {
                        bad += 1;
                    }
                }
            }
        }
        let report = bad_pixel_rate(
            &DisparityMap::from_labels(w, h, result).unwrap(),
            &DisparityMap::new(w, h, truth, 1).unwrap(),
            threshold,
            border,
        )
        .unwrap();
        assert_eq!(report.evaluated_count, eval);
        assert_eq!(report.evaluated_count + report.excluded_count, w * h);
        let want = if eval == 0 { 0.0 } else { bad as f64 / eval as f64 };
        assert_eq!(report.bad_pixel_rate, want);
    }
}

#[test]
fn lift_is_parent_copy() {
    let mut rng = rng(21);
    for (fw, fh) in [(5usize, 3usize), (4, 4), (1, 7), (6, 1)] {
        let (cw, ch) = (fw.div_ceil(2), fh.div_ceil(2));
        let mut coarse = MessageField::zeros(cw, ch, 3);
        for y in 0..ch {
            for x in 0..cw {
                for side in Direction::ALL {
                    let v: Vec<f64> = vec![0.0, rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0)];
                    coarse.set_incoming(x, y, side, &v);
                }
            }
        }
        let fine = lift_messages(&coarse, fw, fh).unwrap();
        for y in 0..fh {
            for x in 0..fw {
                for side in Direction::ALL {
                    assert_eq!(fine.incoming(x, y, side), coarse.incoming(x / 2, y / 2, side));
                    let min = fine.incoming(x, y, side).iter().copied().fold(f64::INFINITY, f64::min);
                    assert_eq!(min, 0.0);
                }
            }
        }
    }
}

#[test]
fn bp_on_chain_reaches_dp_map() {
    let mut rng = rng(22);
    let params = SmoothnessParams::new(1.0, 2.0).unwrap();
    for _ in 0..30 {
        let n = rng.gen_range(1..=12);
        let l = rng.gen_range(1..=6);
        let costs: Vec<Vec<f64>> =
            (0..n).map(|_| (0..l).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let vol = chain_volume(&costs);
        let config = BpConfig {
            max_sweeps: n,
            schedule: Schedule::Full,
            smoothness: params,
            ..BpConfig::default()
        };
        let out = run(&vol, MessageField::zeros(n, 1, l), &config).unwrap();
        let map = extract_disparity(&vol, &out.field).unwrap();
        let dp = exact_map_chain(&costs, &params).unwrap();
        let labels: Vec<usize> = map.labels().iter().map(|l| l.unwrap() as usize).collect();
        assert_eq!(labels, dp.labels);
    }
}

#[test]
fn exhaustive_grid_bounds_bp() {
    let mut rng = rng(23);
    let params = SmoothnessParams::default();
    for _ in 0..10 {
        let vol = random_volume(&mut rng, 2, 3, 3, 4.0);
        let exact = exact_map_grid_small(&vol, &params).unwrap();
        let out = run(&vol, MessageField::zeros(2, 3, 3), &BpConfig::default()).unwrap();
        let map = extract_disparity(&vol, &out.field).unwrap();
        assert!(labeling_energy(&vol, &map, &params).unwrap() >= exact.energy);
    }
}
