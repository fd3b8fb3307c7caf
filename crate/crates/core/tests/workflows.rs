//! End-to-end behaviour of the library and the `tsq` binary on small inputs.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use temporal_squeeze::data::{generate, load_frames, save_squeezed, SyntheticSpec, VideoRecord};
use temporal_squeeze::network::{Network, NetworkConfig};
use temporal_squeeze::tensor::read_tensor;
use temporal_squeeze::train::{evaluate, train, TrainConfig};
use temporal_squeeze::tspool::{ts_forward, ClipTensor};
use temporal_squeeze::Error;

const TSQ: &str = env!("CARGO_BIN_EXE_tsq");

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn reversal_pair(per_class: usize) -> Vec<VideoRecord<f64>> {
    generate(&SyntheticSpec::reversal_pair(16, 16, 3), per_class).unwrap()
}

// network --------------------------------------------------------------------

#[test]
fn single_class_has_zero_cross_entropy() {
    let net = Network::new(NetworkConfig::toy(4, 2, 1, 1)).unwrap();
    let mut r = rng(1);
    let params = net.init_params::<f64>(&mut r).unwrap();
    let clip = random_clip(&mut r, 4, 8, 8, 1);
    let pass = net.forward(&params, &[clip], &[0], false).unwrap();
    assert_eq!(pass.loss.classif, 0.0);
    assert!(pass.loss.proj_terms.iter().all(|&p| p >= 0.0));
}

#[test]
fn input_placement_has_one_projection_term() {
    let cfg = NetworkConfig::load(config_path("input_d3.json")).unwrap();
    let net = Network::new(cfg).unwrap();
    let mut r = rng(2);
    let params = net.init_params::<f64>(&mut r).unwrap();
    let clip = random_clip(&mut r, 10, 12, 12, 1);
    let pass = net.forward(&params, &[clip.clone()], &[1], false).unwrap();
    assert_eq!(pass.loss.proj_terms.len(), 1);
    let squeezed = ts_forward(&clip, &net.ts_params(&params, 0).unwrap()).unwrap();
    assert_eq!(squeezed.squeezed().y.shape(), &[3, 12, 12, 1]);
}

#[test]
fn pyramidal_placement_has_two_projection_terms() {
    let cfg = NetworkConfig::load(config_path("block1_d3_head_d1.json")).unwrap();
    let net = Network::new(cfg).unwrap();
    assert_eq!(net.num_ts_layers(), 2);
    let mut r = rng(3);
    let params = net.init_params::<f64>(&mut r).unwrap();
    let clip = random_clip(&mut r, 10, 12, 12, 1);
    let pass = net.forward(&params, &[clip], &[3], false).unwrap();
    assert_eq!(pass.loss.proj_terms.len(), 2);
}

// data -----------------------------------------------------------------------

#[test]
fn black_pngs_load_as_zeros() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        image::GrayImage::new(5, 4).save(dir.path().join(format!("f{i}.png"))).unwrap();
    }
    let clip: ClipTensor<f64> = load_frames(dir.path()).unwrap();
    assert_eq!(clip.frames().shape(), &[3, 4, 5, 1]);
    assert!(clip.frames().data().iter().all(|&x| x == 0.0));
}

#[test]
fn unequal_frame_sizes_name_the_offending_file() {
    let dir = tempfile::tempdir().unwrap();
    image::GrayImage::new(5, 4).save(dir.path().join("a.png")).unwrap();
    image::GrayImage::new(6, 4).save(dir.path().join("b.png")).unwrap();
    let err = load_frames::<f64>(dir.path()).unwrap_err();
    assert!(err.to_string().contains("b.png"), "{err}");
}

#[test]
fn saved_squeezed_stack_reloads_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let y = uniform_tensor(&mut rng(4), &[2, 3, 4, 1], -5.0, 5.0);
    save_squeezed(&y, dir.path()).unwrap();
    let back = read_tensor(dir.path().join("squeezed.tsq")).unwrap().into_precision::<f64>();
    let bits = |t: &[f64]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(back.shape(), y.shape());
    assert_eq!(bits(back.data()), bits(y.data()));
}

// training -------------------------------------------------------------------

#[test]
fn frozen_training_keeps_the_initialization() {
    let videos = reversal_pair(4);
    let net_cfg = NetworkConfig::load(config_path("toy_reversal_pair.json")).unwrap();
    let cfg = TrainConfig { epochs: 1, lr: 0.0, seed: 11, eval_clips_per_video: 3, ..TrainConfig::default() };
    let out = train(&videos, &videos, &net_cfg, &cfg, |_, _| Ok(())).unwrap();

    let net = Network::new(cfg.resolve(&net_cfg)).unwrap();
    // training seeds the same generator from its config
    let init = net.init_params::<f64>(&mut rng(cfg.seed)).unwrap();
    assert_eq!(out.checkpoint.params, init);
    let acc = evaluate(&net, &init, &videos, 3, false).unwrap().accuracy;
    assert_eq!(out.metrics[0].val_acc, acc);
}

#[test]
fn loss_falls_over_the_first_epochs() {
    let videos = reversal_pair(8);
    let net_cfg = NetworkConfig::load(config_path("toy_reversal_pair.json")).unwrap();
    let cfg = TrainConfig { epochs: 6, lr: 0.05, seed: 1, eval_clips_per_video: 2, ..TrainConfig::default() };
    let out = train(&videos, &videos, &net_cfg, &cfg, |_, _| Ok(())).unwrap();
    let (first, sixth) = (out.metrics[0].loss.total, out.metrics[5].loss.total);
    assert!(sixth < first, "epoch 5 loss {sixth} not below epoch 0 loss {first}");
}

#[test]
fn evaluating_nothing_is_a_config_error() {
    let net = Network::new(NetworkConfig::toy(4, 2, 1, 2)).unwrap();
    let params = net.init_params::<f64>(&mut rng(5)).unwrap();
    let r = evaluate::<f64>(&net, &params, &[], 1, false);
    assert!(matches!(r, Err(Error::Config(_))));
}

// command line ---------------------------------------------------------------

fn tsq(args: &[&str]) -> std::process::Output {
    Command::new(TSQ).args(args).output().unwrap()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn eval_with_missing_checkpoint_reports_config() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.tsqc");
    let o = tsq(&["eval", "--checkpoint", missing.to_str().unwrap(), "--data", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: config:"), "{}", stderr(&o));
}

#[test]
fn squeeze_rejects_more_basis_vectors_than_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let clip = random_clip(&mut rng(6), 10, 4, 4, 1);
    temporal_squeeze::data::save_frames(&clip, &frames).unwrap();
    let out = dir.path().join("out");
    let o = tsq(&["squeeze", "--frames", frames.to_str().unwrap(), "--k", "10", "--d", "11", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: config:"), "{}", stderr(&o));
}

#[test]
fn default_gradcheck_passes() {
    let o = tsq(&["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn pyramidal_config_trains_and_logs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let o = tsq(&[
        "gen-data", "--out", &p(&data), "--classes", "4", "--frames", "12", "--height", "12", "--width", "12",
        "--per-class", "5", "--seed", "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tsq(&[
        "train",
        "--config",
        &p(&config_path("block1_d3_head_d1.json")),
        "--data",
        &p(&data.join("train.json")),
        "--val",
        &p(&data.join("test.json")),
        "--out",
        &p(&run),
        "--epochs",
        "2",
        "--eval-clips",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("proj_0") && header.contains("proj_1"), "{header}");
    assert_eq!(lines.count(), 2);
}
