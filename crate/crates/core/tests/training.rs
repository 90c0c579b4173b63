mod common;

use std::collections::BTreeMap;

use common::{tiny_model, tiny_train, world};
use facestn::data::{DataSource, DatasetKind};
use facestn::model::{hash_params, FaceNet, Trainable};
use facestn::numerics::Module;
use facestn::training::{
    glob_match, read_checkpoint, step_lr, write_checkpoint, BranchWeights, TrainConfig, Trainer,
};
use facestn::seed;

fn grads(net: &FaceNet) -> BTreeMap<String, Vec<f32>> {
    let mut out = BTreeMap::new();
    net.visit_params(&mut |p| {
        let g = p.value.grad().map_or_else(|| vec![0.0; p.value.len()], <[f32]>::to_vec);
        out.insert(p.name.clone(), g);
    });
    out
}

fn params(net: &FaceNet) -> BTreeMap<String, Vec<f32>> {
    net.export_params().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect()
}

fn is_detection(name: &str) -> bool {
    ["mnet.*", "rpn.*", "det.*"].iter().any(|p| glob_match(p, name))
}

#[test]
fn schedule_contract_on_an_instrumented_run() {
    let w = world();
    let cfg = TrainConfig {
        stage_fractions: (0.3, 0.6),
        ..tiny_train(10)
    };
    let net = FaceNet::new(tiny_model(w.num_classes()), 1).unwrap();
    let mut tr = Trainer::new(net, &w, cfg.clone(), 1).unwrap();
    let mut frozen_start = None;
    let mut datasets = Vec::new();
    while !tr.done() {
        let before = params(&tr.net);
        if tr.schedule().stage_index(tr.iter()) == Some(2) && frozen_start.is_none() {
            frozen_start = Some(tr.net.export_params());
        }
        let mut seen = None;
        let r = tr
            .step_inspect(|net, info| seen = Some((grads(net), *info)))
            .unwrap();
        let (g, info) = seen.unwrap();
        datasets.push(info.dataset);
        assert_eq!(r.row.lr, step_lr(cfg.base_lr, cfg.gamma, cfg.stepsize, r.row.iter));
        assert_eq!(r.row.lr, cfg.base_lr * cfg.gamma.powi((r.row.iter / cfg.stepsize) as i32));
        for (name, grad) in &g {
            let zero_weight = (name.starts_with("rpn.") && info.weights.rpn == 0.0)
                || (name.starts_with("det.") && info.weights.det == 0.0)
                || (name.starts_with("recog.") && info.weights.recog == 0.0);
            if zero_weight {
                assert!(grad.iter().all(|&v| v == 0.0), "iter {} {name} has gradient", info.iter);
            }
        }
        let after = params(&tr.net);
        let stage = &tr.schedule().stages[info.stage];
        for (name, v) in &after {
            if !stage.trains(name) && name != "recog.centers" {
                assert_eq!(v, &before[name], "iter {} moved frozen {name}", info.iter);
            }
        }
    }
    assert_eq!(
        datasets,
        [
            DatasetKind::Detection,
            DatasetKind::Detection,
            DatasetKind::Detection,
            DatasetKind::Detection,
            DatasetKind::Recognition,
            DatasetKind::Detection,
            DatasetKind::Recognition,
            DatasetKind::Recognition,
            DatasetKind::Recognition,
            DatasetKind::Recognition,
        ]
    );
    let start = frozen_start.expect("run reaches the last stage");
    let end = tr.net.export_params();
    let detection = |ps: &[(String, facestn::Tensor)]| {
        hash_params(&ps.iter().filter(|(n, _)| is_detection(n)).cloned().collect::<Vec<_>>())
    };
    assert_eq!(detection(&start), detection(&end));
}

#[test]
fn same_seed_gives_bit_identical_checkpoints() {
    let w = world();
    let run = || {
        let net = FaceNet::new(tiny_model(w.num_classes()), 5).unwrap();
        let mut tr = Trainer::new(net, &w, tiny_train(6), 5).unwrap();
        while !tr.done() {
            tr.step().unwrap();
        }
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &tr.checkpoint()).unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn resume_matches_uninterrupted_training() {
    let w = world();
    let fresh = |init| {
        let net = FaceNet::new(tiny_model(w.num_classes()), init).unwrap();
        Trainer::new(net, &w, tiny_train(8), 2).unwrap()
    };
    let mut whole = fresh(2);
    while !whole.done() {
        whole.step().unwrap();
    }
    let mut first = fresh(2);
    for _ in 0..5 {
        first.step().unwrap();
    }
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &first.checkpoint()).unwrap();
    drop(first);
    let ckpt = read_checkpoint(&buf[..]).unwrap();
    // A differently initialised model must be fully overwritten by the restore.
    let mut second = fresh(99);
    second.restore(&ckpt).unwrap();
    assert_eq!(second.iter(), 5);
    while !second.done() {
        second.step().unwrap();
    }
    assert_eq!(second.net.param_hash(), whole.net.param_hash());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_checkpoint(&mut a, &whole.checkpoint()).unwrap();
    write_checkpoint(&mut b, &second.checkpoint()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let w = world();
    let net = FaceNet::new(tiny_model(w.num_classes()), 4).unwrap();
    let mut tr = Trainer::new(net, &w, tiny_train(3), 4).unwrap();
    tr.step().unwrap();
    let ckpt = tr.checkpoint();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &ckpt).unwrap();
    let back = read_checkpoint(&buf[..]).unwrap();
    assert_eq!(back, ckpt);
    assert!(!back.momentum.is_empty());
    let mut again = Vec::new();
    write_checkpoint(&mut again, &back).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn zero_center_weight_reduces_to_softmax() {
    let w = world();
    let mut cfg = tiny_model(w.num_classes());
    cfg.center_lambda = 0.0;
    let mut plain = FaceNet::new(cfg.clone(), 8).unwrap();
    let mut moved = FaceNet::new(cfg, 8).unwrap();
    for v in moved.centers.centers.data_mut() {
        *v += 3.0;
    }
    let weights = BranchWeights {
        rpn: 0.0,
        det: 0.0,
        recog: 1.0,
    };
    for i in 0..10u64 {
        let sample = w.sample(DatasetKind::Recognition, i).unwrap();
        plain.zero_grads();
        moved.zero_grads();
        let a = plain
            .train_sample(&sample, weights, Trainable::ALL, &mut seed::rng(8, "t", &[i]))
            .unwrap();
        let b = moved
            .train_sample(&sample, weights, Trainable::ALL, &mut seed::rng(8, "t", &[i]))
            .unwrap();
        assert!((a.softmax - b.softmax).abs() <= 1e-6);
        assert_eq!(a.center, 0.0);
        assert_eq!(b.center, 0.0);
        let (ga, gb) = (grads(&plain), grads(&moved));
        assert_eq!(ga, gb, "centers leaked into the gradient at sample {i}");
    }
}

#[test]
fn detection_stage_halves_its_loss() {
    let w = world();
    let iters = 120;
    let cfg = TrainConfig {
        base_lr: 0.01,
        stepsize: 1000,
        iter_size: 1,
        max_iter: 2 * iters,
        stage_fractions: (0.5, 0.8),
        checkpoint_interval: 1000,
        ..TrainConfig::default()
    };
    let net = FaceNet::new(tiny_model(w.num_classes()), 0).unwrap();
    let mut tr = Trainer::new(net, &w, cfg, 0).unwrap();
    let mut losses = Vec::new();
    for _ in 0..iters {
        let r = tr.step().unwrap();
        assert_eq!(r.info.stage, 0);
        losses.push(r.row.losses.rpn + r.row.losses.det);
    }
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[iters as usize - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.5 * head, "detection loss {head:.4} -> {tail:.4}");
}

#[test]
fn every_source_sample_is_addressable() {
    let w = world();
    assert_eq!(w.num_classes(), 20);
    let s = DataSource::sample(&w, DatasetKind::Recognition, 7).unwrap();
    assert!(s.identities.iter().all(|i| i.is_some_and(|i| i < 20)));
}

#[test]
fn restore_rejects_foreign_optimizer_state() {
    let w = world();
    let net = FaceNet::new(tiny_model(w.num_classes()), 4).unwrap();
    let mut tr = Trainer::new(net, &w, tiny_train(3), 4).unwrap();
    let mut ckpt = tr.checkpoint();
    ckpt.momentum.push(("nope.momentum".into(), facestn::Tensor::zeros(&[1])));
    assert!(matches!(tr.restore(&ckpt), Err(facestn::Error::StateMismatch(_))));
}
