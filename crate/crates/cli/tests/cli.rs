use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facestn::data::{load_image, save_png};
use facestn::gradcheck::{compare, numeric_grad, random_tensor, run_suite, Check, GradSuite};
use facestn::recognition::{read_embeddings, write_embeddings};
use facestn::Tensor;
use facestn_cli::{check_reports, CliError};
use rand_chacha::ChaCha8Rng;

const TINY: &str = "\
# small enough to train in seconds
model.backbone = 4,6,8,8,8
model.rpn_hidden = 8
model.pool = 6
model.det_width = 16
anchors.scales = 16,24,32
anchors.ratios = 1,1.5
recog.pool = 6
recog.widths = 4,6,8
recog.embed_dim = 16
data.eval_tiles = 4
data.val_pairs = 20
data.test_pairs = 20
solver.base_lr = 0.01
solver.iter_size = 1
solver.stepsize = 100
solver.max_iter = 6
train.checkpoint_interval = 3
";

fn facestn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facestn")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn checkpoints(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("ckpt_"))
        .collect();
    v.sort();
    v
}

#[test]
fn zero_iterations_write_only_the_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "solver.max_iter = 0\n");
    let out = tmp.path().join("run");
    let o = facestn(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(checkpoints(&out), ["ckpt_00000000.bin"]);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "share_depth=3"), "{echo}");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    assert!(!out.join(".lock").exists());
}

#[test]
fn runs_are_reproducible_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        let o = facestn(&["train", "--config", s(&cfg), "--out", s(dir)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(checkpoints(&a), ["ckpt_00000000.bin", "ckpt_00000003.bin", "ckpt_00000006.bin"]);
    let last = |d: &Path| fs::read(d.join("ckpt_00000006.bin")).unwrap();
    assert_eq!(last(&a), last(&b));

    let o = facestn(&["train", "--config", s(&cfg), "--out", s(&c), "--stop-at", "2"]);
    assert_eq!(code(&o), 0);
    assert_eq!(checkpoints(&c), ["ckpt_00000000.bin", "ckpt_00000002.bin"]);
    let o = facestn(&["train", "--config", s(&cfg), "--out", s(&c), "--resume"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(last(&a), last(&c));
    assert_eq!(
        fs::read_to_string(a.join("metrics.csv")).unwrap(),
        fs::read_to_string(c.join("metrics.csv")).unwrap()
    );

    // Evaluation reads the run's echoed config next to the checkpoint.
    let ckpt = a.join("ckpt_00000006.bin");
    let o = facestn(&["eval", "--checkpoint", s(&ckpt)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["eval.txt", "detection_sweep.csv", "verification.csv", "detections.txt"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    let bytes = fs::read(a.join("embeddings.emb")).unwrap();
    let embs = read_embeddings(&bytes[..]).unwrap();
    assert!(!embs.is_empty() && embs.iter().all(|e| e.dim() == 16));
    let mut again = Vec::new();
    write_embeddings(&mut again, &embs).unwrap();
    assert_eq!(again, bytes);

    // The saved detection list can be scored on its own.
    let rescored = tmp.path().join("rescored");
    let o = facestn(&[
        "eval",
        "--config",
        s(&cfg),
        "--detections",
        s(&a.join("detections.txt")),
        "--out",
        s(&rescored),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rescored.join("detection_sweep.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "solver.max_iter = 0\n");
    let missing = tmp.path().join("missing.conf");
    assert_eq!(code(&facestn(&["train", "--config", s(&missing), "--out", s(tmp.path())])), 2);

    let bad = tmp.path().join("bad.conf");
    fs::write(&bad, "model.wings = 2\n").unwrap();
    let o = facestn(&["train", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.wings"));

    assert_eq!(code(&facestn(&["eval", "--checkpoint", s(&tmp.path().join("none.bin"))])), 2);
    assert_eq!(code(&facestn(&["gradcheck", "no_such_op"])), 2);
    assert_eq!(code(&facestn(&["frobnicate"])), 2);

    // A checkpoint of a different architecture is a state mismatch.
    let run = tmp.path().join("run");
    assert_eq!(code(&facestn(&["train", "--config", s(&cfg), "--out", s(&run)])), 0);
    let wider = write_config(tmp.path(), "model.det_width = 24\n");
    let o = facestn(&[
        "eval",
        "--config",
        s(&wider),
        "--checkpoint",
        s(&run.join("ckpt_00000000.bin")),
        "--out",
        s(&tmp.path().join("ev")),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    // A finished run is not silently overwritten.
    assert_eq!(code(&facestn(&["train", "--config", s(&cfg), "--out", s(&run)])), 2);

    // A held lock refuses a second writer.
    fs::write(run.join(".lock"), "").unwrap();
    let o = facestn(&["train", "--config", s(&cfg), "--out", s(&run), "--resume"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("in use"));
}

#[test]
fn gradcheck_command_passes_a_suite() {
    let o = facestn(&["gradcheck", "relu", "--instances", "3"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().any(|l| l.starts_with("relu") && l.ends_with("pass")), "{text}");
    let o = facestn(&["gradcheck", "--list"]);
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l == "bilinear_sample"));
}

fn broken_relu(rng: &mut ChaCha8Rng) -> facestn::Result<Vec<Check>> {
    let x = random_tensor(rng, &[12]);
    let r = random_tensor(rng, &[12]);
    let mut f = |v: &[f64]| Ok(v.iter().zip(r.data()).map(|(a, b)| a.max(0.0) * b).sum());
    let (numeric, smooth) = numeric_grad(x.data(), &mut f)?;
    // Forgets the mask of negative inputs.
    let analytic = r.data().to_vec();
    Ok(vec![compare(&analytic, &numeric, &smooth)])
}

#[test]
fn gradcheck_reports_a_broken_backward_by_name() {
    let suite = GradSuite {
        name: "relu",
        run: broken_relu,
    };
    let report = run_suite(&suite, 5, 0).unwrap();
    assert!(!report.passed());
    let table = facestn_cli::format_gradcheck(&[report.clone()]);
    assert!(table.lines().any(|l| l.starts_with("relu") && l.ends_with("FAIL")), "{table}");
    match check_reports(&[report]) {
        Err(e @ CliError::Check(_)) => {
            assert_eq!(e.exit_code(), 1);
            assert!(e.to_string().contains("relu"));
        }
        other => panic!("expected a check failure, got {other:?}"),
    }
}

fn gradient_image(path: &Path, n: usize) -> Tensor {
    let data = (0..3 * n * n)
        .map(|i| {
            let (c, y, x) = (i / (n * n), i / n % n, i % n);
            ((x * 5 + y * 3 + c * 40) % 256) as f32 / 255.0
        })
        .collect();
    let t = Tensor::from_vec(&[3, n, n], data).unwrap();
    save_png(&t, path).unwrap();
    t
}

#[test]
fn transform_command() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("in.png");
    let img = gradient_image(&src, 33);
    let out = tmp.path().join("out.png");

    let o = facestn(&["transform", s(&src), "--out", s(&out), "--theta", "1,0,0,0,1,0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(load_image(&out).unwrap(), img);

    let half = tmp.path().join("half.png");
    let back = tmp.path().join("back.png");
    assert_eq!(code(&facestn(&["transform", s(&src), "--out", s(&half), "--alpha", "3.14159"])), 0);
    assert_eq!(code(&facestn(&["transform", s(&half), "--out", s(&back), "--alpha", "3.14159"])), 0);
    let back = load_image(&back).unwrap();
    let n = 33;
    for c in 0..3 {
        for y in 4..n - 4 {
            for x in 4..n - 4 {
                let i = (c * n + y) * n + x;
                assert!((back.data()[i] - img.data()[i]).abs() <= 2.0 / 255.0, "pixel {c},{y},{x}");
            }
        }
    }

    let gone = tmp.path().join("gone.png");
    assert_eq!(code(&facestn(&["transform", s(&src), "--out", s(&gone), "--tx", "5"])), 0);
    assert!(load_image(&gone).unwrap().data().iter().all(|&v| v == 0.0));

    let junk = tmp.path().join("junk.png");
    fs::write(&junk, b"not a png").unwrap();
    assert_eq!(code(&facestn(&["transform", s(&junk), "--out", s(&out), "--alpha", "1"])), 2);
    assert_eq!(code(&facestn(&["transform", s(&src), "--out", s(&out), "--theta", "1,0,0"])), 2);
}
