//! End-to-end acceptance gates for the whole crate.
//!
//! Each test prints one `[acceptance NN] <name>: PASS` line (visible under
//! `--nocapture`; failures surface through the usual panic output).
//! Tolerances are pinned next to each check.

use graphdpo::{
    baseline_multi_negative, baseline_pro_listmle, build_from_labels, finite_diff_check,
    gen_task, grad_graph_loss, grad_total_with_weights, graph_loss_layered, graph_loss_naive,
    gt_standing, lambda_gt, local_losses, loss_scaling_bench, sweep_lambda_gt,
    total_loss_with_weights, train, AdamW, ObjectiveKind, PreferenceGraph, PreferenceLabeling,
    ScheduleParams, ScoreSet, TrainConfig,
};
use graphdpo::oracle::{pl_permutation_nll, PermutationOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pass(number: u8, name: &str) {
    println!("[acceptance {number:02}] {name}: PASS");
}

fn random_labels(rng: &mut ChaCha8Rng, k: usize, max_bands: usize) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(0..max_bands) as f64).collect()
}

fn random_scores(rng: &mut ChaCha8Rng, k: usize, half_range: f64) -> Vec<f64> {
    (0..k).map(|_| rng.gen_range(-half_range..half_range)).collect()
}

fn graph_of(labels: &[f64]) -> PreferenceGraph {
    build_from_labels(&PreferenceLabeling::new(labels.to_vec())).unwrap()
}

#[test]
fn c01_two_response_loss_is_the_pairwise_logistic() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let raw = random_scores(&mut rng, 2, 3.0);
        let better_first = rng.gen_bool(0.5);
        let labels = if better_first { [1.0, 0.0] } else { [0.0, 1.0] };
        let g = graph_of(&labels);
        let scores = ScoreSet::center(raw, None).unwrap();
        let cs = scores.centered();
        let (w, l) = if better_first { (cs[0], cs[1]) } else { (cs[1], cs[0]) };
        // -log sigmoid(w - l) via the stable softplus of the negated margin
        let margin = l - w;
        let expected = if margin > 0.0 {
            margin + (-margin).exp().ln_1p()
        } else {
            margin.exp().ln_1p()
        };
        for loss in [
            graph_loss_naive(&scores, &g).unwrap().loss,
            graph_loss_layered(&scores, &g).unwrap().loss,
        ] {
            assert!(
                (loss - expected).abs() < 1e-10,
                "pairwise identity violated: {loss} vs {expected}"
            );
        }
    }
    pass(1, "two-response loss is the pairwise logistic");
}

#[test]
fn c02_linear_evaluation_matches_quadratic_and_outscales_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let k = rng.gen_range(2..=64);
        let bands = rng.gen_range(1..=k.min(7));
        let labels = random_labels(&mut rng, k, bands);
        let scores = ScoreSet::center(random_scores(&mut rng, k, 2.0), None).unwrap();
        let g = graph_of(&labels);
        let naive = graph_loss_naive(&scores, &g).unwrap();
        let layered = graph_loss_layered(&scores, &g).unwrap();
        assert!(
            (naive.loss - layered.loss).abs() < 1e-9,
            "K={k}: naive {} vs layered {}",
            naive.loss,
            layered.loss
        );
        assert_eq!(naive.contributing_nodes, layered.contributing_nodes);
    }

    let rows = loss_scaling_bench(&[8, 16, 32, 64], 7).unwrap();
    for pair in rows.windows(2) {
        assert!(
            pair[1].ratio > pair[0].ratio,
            "time ratio must grow with K: {:?}",
            rows.iter().map(|r| (r.k, r.ratio)).collect::<Vec<_>>()
        );
    }
    pass(2, "linear evaluation matches quadratic and outscales it");
}

#[test]
fn c03_strict_chains_reduce_to_the_listwise_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..200 {
        let k = rng.gen_range(2..=12);
        // Distinct labels make a strict chain; the descending-label order
        // is the permutation whose likelihood the chain must reproduce.
        let mut labels: Vec<f64> = (0..k).map(|i| i as f64).collect();
        for i in (1..k).rev() {
            labels.swap(i, rng.gen_range(0..=i));
        }
        let raw = random_scores(&mut rng, k, 2.0);
        let g = graph_of(&labels);
        let scores = ScoreSet::center(raw.clone(), None).unwrap();

        let total: f64 = local_losses(&scores, &g)
            .unwrap()
            .into_iter()
            .flatten()
            .sum();

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| labels[b].total_cmp(&labels[a]));
        let nll = pl_permutation_nll(&raw, &PermutationOrder::new(order).unwrap()).unwrap();
        assert!(
            (total - nll).abs() < 1e-9,
            "K={k}: summed local losses {total} vs listwise {nll}"
        );
    }
    pass(3, "strict chains reduce to the listwise likelihood");
}

#[test]
fn c04_analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let anchor_weight = 1.3;
    for i in 0..100 {
        let k = 2 + (i % 15);
        let bands = rng.gen_range(1..=k);
        let labels = random_labels(&mut rng, k, bands);
        let labeling = PreferenceLabeling::new(labels.clone());
        let g = build_from_labels(&labeling).unwrap();
        let anchored = i % 2 == 0;

        if anchored {
            let gt_label = rng.gen_range(0..=bands) as f64 - 0.5;
            let standing = gt_standing(&labeling, &g, gt_label).unwrap();
            let point = random_scores(&mut rng, k + 1, 1.0);
            let loss_at = |x: &[f64]| {
                let (resp, gt) = x.split_at(k);
                let scores = ScoreSet::center(resp.to_vec(), Some(gt[0])).unwrap();
                total_loss_with_weights(&scores, &g, Some(standing), None, anchor_weight, 0.0)
                    .unwrap()
                    .total
            };
            let (resp, gt) = point.split_at(k);
            let scores = ScoreSet::center(resp.to_vec(), Some(gt[0])).unwrap();
            let grad =
                grad_total_with_weights(&scores, &g, Some(standing), anchor_weight).unwrap();
            let mut analytic = grad.per_response.clone();
            analytic.push(grad.gt.unwrap());
            let report = finite_diff_check(loss_at, &point, &analytic, 1e-6).unwrap();
            assert!(
                report.max_rel_error < 1e-5,
                "anchored K={k}: max rel error {}",
                report.max_rel_error
            );
        } else {
            let point = random_scores(&mut rng, k, 1.0);
            let loss_at = |x: &[f64]| {
                let scores = ScoreSet::center(x.to_vec(), None).unwrap();
                graph_loss_layered(&scores, &g).unwrap().loss
            };
            let scores = ScoreSet::center(point.clone(), None).unwrap();
            let grad = grad_graph_loss(&scores, &g).unwrap();
            let report =
                finite_diff_check(loss_at, &point, &grad.per_response, 1e-6).unwrap();
            assert!(
                report.max_rel_error < 1e-5,
                "plain K={k}: max rel error {}",
                report.max_rel_error
            );
        }
    }
    pass(4, "analytic gradients match finite differences");
}

#[test]
fn c05_ties_contribute_no_loss_and_no_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..200 {
        let k = rng.gen_range(2..=12);
        let scores = ScoreSet::center(random_scores(&mut rng, k, 2.0), None).unwrap();
        let g = graph_of(&vec![1.0; k]);
        assert_eq!(graph_loss_naive(&scores, &g).unwrap().loss, 0.0);
        assert_eq!(graph_loss_layered(&scores, &g).unwrap().loss, 0.0);
        let grad = grad_graph_loss(&scores, &g).unwrap();
        assert!(grad.per_response.iter().all(|&c| c == 0.0));
    }

    for _ in 0..200 {
        let k = rng.gen_range(4..=12);
        let labels = random_labels(&mut rng, k, 3);
        let g = graph_of(&labels);
        let raw = random_scores(&mut rng, k, 2.0);
        let gt_raw = rng.gen_range(-1.0..1.0);
        let labeling = PreferenceLabeling::new(labels.clone());
        let standing = gt_standing(&labeling, &g, 1.0).unwrap();
        let total = |r: &[f64]| {
            let scores = ScoreSet::center(r.to_vec(), Some(gt_raw)).unwrap();
            total_loss_with_weights(&scores, &g, Some(standing), None, 1.7, 0.0)
                .unwrap()
                .total
        };
        let baseline = total(&raw);
        // Swap scores inside one class; every class member is exchangeable.
        for class in (0..k).filter(|&i| labels.iter().filter(|&&l| l == labels[i]).count() > 1) {
            let partner = (0..k)
                .find(|&j| j != class && labels[j] == labels[class])
                .unwrap();
            let mut permuted = raw.clone();
            permuted.swap(class, partner);
            assert!(
                (total(&permuted) - baseline).abs() < 1e-9,
                "within-class swap changed the loss"
            );
        }
    }
    pass(5, "ties contribute no loss and no gradient");
}

#[test]
fn c06_descent_on_scores_orders_every_edge() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for instance in 0..50 {
        let k = rng.gen_range(2..=10);
        let labels = loop {
            let candidate = random_labels(&mut rng, k, 4);
            if candidate.iter().any(|&l| l != candidate[0]) {
                break candidate;
            }
        };
        let g = graph_of(&labels);
        let mut raw = random_scores(&mut rng, k, 1.0);
        let mut optimizer = AdamW::new(k, 0.9, 0.999, 0.0);
        let mut converged = false;
        for _ in 0..50_000 {
            let scores = ScoreSet::center(raw.clone(), None).unwrap();
            if graph_loss_layered(&scores, &g).unwrap().loss < 1e-4 {
                converged = true;
                break;
            }
            let grad = grad_graph_loss(&scores, &g).unwrap();
            optimizer.step(&mut raw, &grad.per_response, 0.1);
        }
        assert!(converged, "instance {instance} (K={k}) did not reach loss < 1e-4");
        for (better, worse) in g.edges() {
            assert!(
                raw[better] >= raw[worse] - 1e-2,
                "edge ({better} -> {worse}) left unordered: {} vs {}",
                raw[better],
                raw[worse]
            );
        }
    }
    pass(6, "descent on scores orders every edge");
}

#[test]
fn c07_two_class_losses_collapse_to_multi_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..500 {
        let k = rng.gen_range(2..=16);
        let mut labels = random_labels(&mut rng, k, 2);
        labels[0] = 1.0;
        labels[k - 1] = 0.0;
        let scores = ScoreSet::center(random_scores(&mut rng, k, 2.0), None).unwrap();
        let graph_loss = graph_loss_layered(&scores, &graph_of(&labels)).unwrap().loss;
        let multi = baseline_multi_negative(&scores, &labels).unwrap().loss;
        assert!(
            (graph_loss - multi).abs() < 1e-9,
            "two-class disagreement: {graph_loss} vs {multi}"
        );
    }
    pass(7, "two-class losses collapse to multi-negative");
}

#[test]
fn c08_training_reaches_the_top_band_and_anchoring_never_slows_it() {
    let threshold = 0.95;
    let mut report = String::new();
    for seed in [0u64, 1, 2] {
        let task = gen_task(seed, 200, 16, 4, 0.0).unwrap();
        let run_with = |objective: ObjectiveKind| {
            let config = TrainConfig { objective, seed, ..TrainConfig::default() };
            train(&task, &config).unwrap()
        };

        let plain = run_with(ObjectiveKind::GraphDpo);
        let anchored = run_with(ObjectiveKind::GraphDpoGt);
        let plain_steps = plain
            .steps_to_top1(threshold)
            .unwrap_or_else(|| panic!("seed {seed}: plain run never reached {threshold}"));
        let anchored_steps = anchored
            .steps_to_top1(threshold)
            .unwrap_or_else(|| panic!("seed {seed}: anchored run never reached {threshold}"));
        assert!(
            anchored_steps <= plain_steps,
            "seed {seed}: anchored needed {anchored_steps} steps vs plain {plain_steps}"
        );

        report.push_str(&format!(
            "  seed {seed}: graphdpo {plain_steps}, graphdpo+gt {anchored_steps}"
        ));
        for objective in [ObjectiveKind::DpoPairwise, ObjectiveKind::ProListMle] {
            let run = run_with(objective);
            match run.steps_to_top1(threshold) {
                Some(steps) => report.push_str(&format!(", {objective} {steps}")),
                None => report.push_str(&format!(
                    ", {objective} >{} (final {:.3})",
                    run.final_metrics().step,
                    run.final_metrics().top1_accuracy
                )),
            }
        }
        report.push('\n');
    }
    println!("steps to top1 >= {threshold} (baselines reported, not asserted):\n{report}");
    pass(8, "training reaches the top band and anchoring never slows it");
}

#[test]
fn c09_anchor_schedule_is_linear_and_the_sweep_band_is_flat() {
    let params = ScheduleParams::default();
    let total = params.total_steps;
    assert_eq!(lambda_gt(0, &params), 2.5);
    assert_eq!(lambda_gt(total, &params), 1.0);
    for i in 0..10 {
        let t = i * total / 9;
        let expected = 2.5 + (1.0 - 2.5) * (t as f64 / total as f64);
        assert!(
            (lambda_gt(t, &params) - expected).abs() < 1e-15,
            "nonlinear at t={t}"
        );
    }

    let task = gen_task(0, 200, 16, 4, 0.0).unwrap();
    let base = TrainConfig::default();
    let band_grid = [2.0, 8.0 / 3.5, 2.4, 2.5, 8.0 / 3.0];
    let rows = sweep_lambda_gt(&task, &base, &band_grid).unwrap();
    assert!(rows.iter().all(|r| r.in_guidance_band));
    let max = rows.iter().map(|r| r.final_top1).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.final_top1).fold(f64::INFINITY, f64::min);
    assert!(
        max - min <= 0.05,
        "final accuracy spread {} over the guidance band",
        max - min
    );
    pass(9, "anchor schedule is linear and the sweep band is flat");
}

#[test]
fn c10_all_tied_comparisons_still_push_the_listwise_baseline() {
    let labels = [1.0, 1.0, 1.0, 1.0];
    let scores = ScoreSet::center(vec![0.3, -0.2, 0.5, -0.6], None).unwrap();
    let g = graph_of(&labels);

    let graph_grad = grad_graph_loss(&scores, &g).unwrap();
    assert!(graph_grad.per_response.iter().all(|&c| c == 0.0));

    let listwise = baseline_pro_listmle(&scores, &labels).unwrap();
    let norm: f64 = listwise.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(norm > 1e-3, "listwise gradient vanished on the tied fixture");
    pass(10, "all-tied comparisons still push the listwise baseline");
}
