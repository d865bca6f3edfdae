use rvfuse_core::fusion::{train_fusion, predict_trace, TrainConfig};
use rvfuse_core::sim::{run_scenario, ScenarioConfig, NoiseModel};
use rvfuse_core::eval::ate;

fn noiseless_cfg() -> ScenarioConfig {
    let text = r#"
name = "noise-free"
[environment]
bounds = [0.0, 0.0, 20.0, 12.0]
[anchors]
positions = [[0.5, 0.5], [19.5, 0.5], [19.5, 11.5], [0.5, 11.5], [10.0, 6.0]]
[trajectory]
shape = "rectangle"
rect = [3.0, 2.0, 17.0, 10.0]
speed = 1.2
duration = 60.0
"#;
    let mut cfg = ScenarioConfig::from_toml(text).unwrap();
    cfg.noise = NoiseModel::noiseless();
    cfg
}

#[test]
fn probe_noise_free_training() {
    let cfg = noiseless_cfg();
    let traces: Vec<_> = (1..=2u64).map(|s| run_scenario(&cfg, s).unwrap()).collect();
    let tc = TrainConfig { epochs: 40, seed: 7, window_stride: 2, learning_rate: 3e-3, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let out = train_fusion(&traces, None, &tc).unwrap();
    eprintln!("trained in {:?}, params {}", t0.elapsed(), out.model.num_parameters());
    let best = out.log.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    eprintln!("best val loss {best:.5} -> RMSE {:.4}", best.sqrt());
    for r in out.log.iter() {
        eprintln!("epoch {} train {:.5} val {:.5}", r.epoch, r.train_loss, r.val_loss);
    }
    let eval_trace = run_scenario(&cfg, 3).unwrap();
    let est = predict_trace(&out.model, &eval_trace, None).unwrap();
    let s = ate(&est, &eval_trace.gt).unwrap();
    eprintln!("noise-free eval: median {:.4} mean {:.4} max {:.4}", s.median, s.mean, s.max);
}
