//! Central finite-difference checks of every backward formula, end to end
//! through the network: plain CE, both soft-target orders, the composite,
//! and the joint objective with an auxiliary linear head hanging off the
//! feature extractor.

use dtcs_core::*;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct Case {
    dims: Vec<usize>,
    batch: usize,
    alpha: f64,
    tau: f64,
    order: KlOrder,
    seed: u64,
}

fn logits_input(rows: usize, cols: usize, seed: u64) -> (Mat, Vec<usize>, Mat) {
    // deterministic, mildly irregular values well away from ReLU kinks
    let gen = |k: usize, scale: f64| {
        let t = (k as f64 * 0.7311 + seed as f64 * 0.137).sin();
        scale * t + 0.05
    };
    let x = Mat::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|k| gen(k, 1.3)).collect(),
    )
    .unwrap();
    let y: Vec<usize> = (0..rows).map(|r| (r * 7 + seed as usize) % 3).collect();
    (x, y, Mat::zeros(0, 0))
}

fn loss_value(model: &MlpModel, case: &Case, x: &Mat, y: &[usize], t: Option<&Mat>) -> f64 {
    let mut tape = Tape::new();
    let xid = tape.leaf(x.clone(), false);
    let pass = model.forward(&mut tape, xid).unwrap();
    let (node, _, _) =
        domain_loss(&mut tape, pass.logits, y, t, case.alpha, case.tau, case.order).unwrap();
    tape.value(node).get(0, 0)
}

fn analytic_grad(model: &MlpModel, case: &Case, x: &Mat, y: &[usize], t: Option<&Mat>) -> Vec<f64> {
    let mut tape = Tape::new();
    let params = model.register_params(&mut tape);
    let xid = tape.leaf(x.clone(), false);
    let pass = model.forward_with(&mut tape, xid, &params).unwrap();
    let (node, _, _) =
        domain_loss(&mut tape, pass.logits, y, t, case.alpha, case.tau, case.order).unwrap();
    tape.backward(node).unwrap();
    let mut flat = Vec::new();
    for &(w, b) in &params {
        for id in [w, b] {
            match tape.grad(id) {
                Some(g) => flat.extend_from_slice(g.as_slice()),
                None => flat.extend(std::iter::repeat(0.0).take(tape.value(id).len())),
            }
        }
    }
    flat
}

#[test]
fn composite_gradients_match_finite_differences() {
    let cases = vec![
        Case { dims: vec![2, 3], batch: 1, alpha: 1.0, tau: 2.0, order: KlOrder::TeacherFirst, seed: 1 },
        Case { dims: vec![3, 3], batch: 4, alpha: 1.0, tau: 1.0, order: KlOrder::TeacherFirst, seed: 2 },
        Case { dims: vec![2, 5, 3], batch: 2, alpha: 0.1, tau: 2.0, order: KlOrder::TeacherFirst, seed: 3 },
        Case { dims: vec![4, 8, 3], batch: 5, alpha: 0.1, tau: 2.0, order: KlOrder::TeacherFirst, seed: 4 },
        Case { dims: vec![3, 6, 6, 3], batch: 3, alpha: 0.5, tau: 0.5, order: KlOrder::TeacherFirst, seed: 5 },
        Case { dims: vec![2, 4, 3], batch: 4, alpha: 0.0, tau: 5.0, order: KlOrder::TeacherFirst, seed: 6 },
        Case { dims: vec![2, 4, 3], batch: 4, alpha: 0.1, tau: 2.0, order: KlOrder::PredictionFirst, seed: 7 },
        Case { dims: vec![3, 7, 3], batch: 2, alpha: 0.5, tau: 1.0, order: KlOrder::PredictionFirst, seed: 8 },
        Case { dims: vec![5, 9, 3], batch: 6, alpha: 0.2, tau: 3.0, order: KlOrder::TeacherFirst, seed: 9 },
        Case { dims: vec![4, 6, 5, 3], batch: 3, alpha: 0.0, tau: 0.7, order: KlOrder::PredictionFirst, seed: 10 },
    ];
    for case in &cases {
        let model = MlpModel::new(&case.dims, case.seed).unwrap();
        let (x, y, _) = logits_input(case.batch, case.dims[0], case.seed);
        let target = if case.alpha < 1.0 {
            let teacher = MlpModel::new(&case.dims, case.seed + 100).unwrap();
            Some(teacher.apply(&x).unwrap())
        } else {
            None
        };
        let analytic = analytic_grad(&model, case, &x, &y, target.as_ref());
        let mut flat = model.flatten_params();
        let mut worst = 0.0f64;
        for k in 0..flat.len() {
            let keep = flat[k];
            flat[k] = keep + H;
            let mut m = model.clone();
            m.set_from_flat(&flat).unwrap();
            let up = loss_value(&m, case, &x, &y, target.as_ref());
            flat[k] = keep - H;
            m.set_from_flat(&flat).unwrap();
            let down = loss_value(&m, case, &x, &y, target.as_ref());
            flat[k] = keep;
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max(rel_err(analytic[k], numeric));
        }
        assert!(
            worst < TOL,
            "dims {:?} alpha {} tau {} {:?}: worst rel err {worst}",
            case.dims,
            case.alpha,
            case.tau,
            case.order
        );
    }
}

#[test]
fn weighted_multi_domain_objective_matches_finite_differences() {
    // three domains through shared parameters, non-uniform weights
    let dims = [3usize, 6, 4];
    let model = MlpModel::new(&dims, 42).unwrap();
    let weights = [0.2, 0.5, 0.3];
    let batches: Vec<(Mat, Vec<usize>)> = (0..3)
        .map(|d| {
            let (x, _, _) = logits_input(4, 3, 60 + d);
            let y = (0..4).map(|r| (r + d as usize) % 4).collect();
            (x, y)
        })
        .collect();
    let teachers: Vec<Mat> = batches
        .iter()
        .enumerate()
        .map(|(d, (x, _))| MlpModel::new(&dims, 200 + d as u64).unwrap().apply(x).unwrap())
        .collect();

    let eval = |m: &MlpModel| -> f64 {
        let mut tape = Tape::new();
        let params = m.register_params(&mut tape);
        let mut nodes = Vec::new();
        for (d, (x, y)) in batches.iter().enumerate() {
            let xid = tape.leaf(x.clone(), false);
            let pass = m.forward_with(&mut tape, xid, &params).unwrap();
            let (node, _, _) = domain_loss(
                &mut tape,
                pass.logits,
                y,
                Some(&teachers[d]),
                0.1,
                2.0,
                KlOrder::TeacherFirst,
            )
            .unwrap();
            nodes.push(node);
        }
        let total = weighted_total_loss(&mut tape, &nodes, &weights).unwrap();
        tape.value(total).get(0, 0)
    };

    // analytic
    let mut tape = Tape::new();
    let params = model.register_params(&mut tape);
    let mut nodes = Vec::new();
    for (d, (x, y)) in batches.iter().enumerate() {
        let xid = tape.leaf(x.clone(), false);
        let pass = model.forward_with(&mut tape, xid, &params).unwrap();
        let (node, _, _) = domain_loss(
            &mut tape,
            pass.logits,
            y,
            Some(&teachers[d]),
            0.1,
            2.0,
            KlOrder::TeacherFirst,
        )
        .unwrap();
        nodes.push(node);
    }
    let total = weighted_total_loss(&mut tape, &nodes, &weights).unwrap();
    tape.backward(total).unwrap();
    let mut analytic = Vec::new();
    for &(w, b) in &params {
        for id in [w, b] {
            analytic.extend_from_slice(tape.grad(id).unwrap().as_slice());
        }
    }

    let mut flat = model.flatten_params();
    let mut worst = 0.0f64;
    for k in 0..flat.len() {
        let keep = flat[k];
        let mut m = model.clone();
        flat[k] = keep + H;
        m.set_from_flat(&flat).unwrap();
        let up = eval(&m);
        flat[k] = keep - H;
        m.set_from_flat(&flat).unwrap();
        let down = eval(&m);
        flat[k] = keep;
        worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * H)));
    }
    assert!(worst < TOL, "worst rel err {worst}");
}

#[test]
fn joint_head_objective_matches_finite_differences() {
    // main composite + auxiliary head CE sharing the feature extractor:
    // gradient fan-out at the features node, checked over model AND head
    let dims = [2usize, 6, 3];
    let model = MlpModel::new(&dims, 77).unwrap();
    let head = MlpModel::new(&[6, 3], 78).unwrap();
    let (x, y, _) = logits_input(4, 2, 11);

    let eval = |m: &MlpModel, h: &MlpModel| -> f64 {
        let mut tape = Tape::new();
        let params = m.register_params(&mut tape);
        let head_params = h.register_params(&mut tape);
        let xid = tape.leaf(x.clone(), false);
        let pass = m.forward_with(&mut tape, xid, &params).unwrap();
        let (main, _, _) =
            domain_loss(&mut tape, pass.logits, &y, None, 1.0, 2.0, KlOrder::TeacherFirst)
                .unwrap();
        let head_pass = h.forward_with(&mut tape, pass.features, &head_params).unwrap();
        let head_ce = tape.mean_cross_entropy(head_pass.logits, &y).unwrap();
        let joint = tape.weighted_sum(&[(main, 1.0), (head_ce, 0.5)]).unwrap();
        tape.value(joint).get(0, 0)
    };

    let mut tape = Tape::new();
    let params = model.register_params(&mut tape);
    let head_params = head.register_params(&mut tape);
    let xid = tape.leaf(x.clone(), false);
    let pass = model.forward_with(&mut tape, xid, &params).unwrap();
    let (main, _, _) =
        domain_loss(&mut tape, pass.logits, &y, None, 1.0, 2.0, KlOrder::TeacherFirst).unwrap();
    let head_pass = head.forward_with(&mut tape, pass.features, &head_params).unwrap();
    let head_ce = tape.mean_cross_entropy(head_pass.logits, &y).unwrap();
    let joint = tape.weighted_sum(&[(main, 1.0), (head_ce, 0.5)]).unwrap();
    tape.backward(joint).unwrap();

    let collect = |tape: &Tape, ps: &[(NodeId, NodeId)]| {
        let mut flat = Vec::new();
        for &(w, b) in ps {
            for id in [w, b] {
                match tape.grad(id) {
                    Some(g) => flat.extend_from_slice(g.as_slice()),
                    None => flat.extend(std::iter::repeat(0.0).take(tape.value(id).len())),
                }
            }
        }
        flat
    };
    let analytic_model = collect(&tape, &params);
    let analytic_head = collect(&tape, &head_params);

    let mut worst = 0.0f64;
    let mut flat = model.flatten_params();
    for k in 0..flat.len() {
        let keep = flat[k];
        let mut m = model.clone();
        flat[k] = keep + H;
        m.set_from_flat(&flat).unwrap();
        let up = eval(&m, &head);
        flat[k] = keep - H;
        m.set_from_flat(&flat).unwrap();
        let down = eval(&m, &head);
        flat[k] = keep;
        worst = worst.max(rel_err(analytic_model[k], (up - down) / (2.0 * H)));
    }
    let mut flat = head.flatten_params();
    for k in 0..flat.len() {
        let keep = flat[k];
        let mut h = head.clone();
        flat[k] = keep + H;
        h.set_from_flat(&flat).unwrap();
        let up = eval(&model, &h);
        flat[k] = keep - H;
        h.set_from_flat(&flat).unwrap();
        let down = eval(&model, &h);
        flat[k] = keep;
        worst = worst.max(rel_err(analytic_head[k], (up - down) / (2.0 * H)));
    }
    assert!(worst < TOL, "worst rel err {worst}");
}
