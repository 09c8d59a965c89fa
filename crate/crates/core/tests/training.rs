use petnn_core::cell::{param_count, CellConfig, UpdateVariant};
use petnn_core::eval::{efficiency_report, evaluate};
use petnn_core::run::{build_data, cmd_train, RunConfig, CHECKPOINT_FILE, METRICS_FILE};
use petnn_core::train::{Checkpoint, LossKind};
use petnn_core::{InitScheme, Model, Parameters, ResetPolicy, Rng, TrainConfig, Trainer};

fn adding_config(epochs: usize, out: &std::path::Path) -> RunConfig {
    let text = format!(
        r#"{{"seed": 5, "task": {{"kind": "adding", "length": 12, "n_train": 40, "n_val": 10, "n_test": 10}},
            "model": {{"hidden_dim": 6}}, "train": {{"epochs": {epochs}, "batch_size": 8, "learning_rate": 0.01}},
            "out_dir": {:?}}}"#,
        out.to_str().unwrap()
    );
    RunConfig::from_json(&text).unwrap()
}

fn trainer(cfg: &RunConfig) -> (Trainer, petnn_core::run::TaskData) {
    let data = build_data(&cfg.task, cfg.seed).unwrap();
    let model = cfg.model.build(data.input_dim(), data.out_dim(), cfg.seed).unwrap();
    (Trainer::new(model, cfg.train_config()).unwrap(), data)
}

#[test]
fn same_config_gives_byte_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = adding_config(2, dir.path());
    cmd_train(&cfg).unwrap();
    let first = std::fs::read(dir.path().join(CHECKPOINT_FILE)).unwrap();
    let manifest = std::fs::read(dir.path().join("manifest.json")).unwrap();
    cmd_train(&cfg).unwrap();
    assert_eq!(first, std::fs::read(dir.path().join(CHECKPOINT_FILE)).unwrap());
    assert_eq!(manifest, std::fs::read(dir.path().join("manifest.json")).unwrap());
}

#[test]
fn resume_from_checkpoint_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = adding_config(3, dir.path());
    let (mut straight, data) = trainer(&cfg);
    for _ in 0..3 {
        straight.train_epoch(&data.train).unwrap();
    }

    let (mut first, _) = trainer(&cfg);
    first.train_epoch(&data.train).unwrap();
    let path = dir.path().join("mid.json");
    first.to_checkpoint(cfg.to_value()).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    let mut resumed = Trainer::from_checkpoint(&ck, cfg.train_config()).unwrap();
    assert_eq!(resumed.epoch, 1);
    resumed.train_epoch(&data.train).unwrap();
    resumed.train_epoch(&data.train).unwrap();

    assert_eq!(resumed.model.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
               straight.model.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(resumed.to_checkpoint(cfg.to_value()), straight.to_checkpoint(cfg.to_value()));
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = adding_config(0, dir.path());
    let out = cmd_train(&cfg).unwrap();
    assert_eq!(out.trainer.epoch, 0);
    let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics, "epoch,split,loss,mse,mae,accuracy,wall_ms\n");
    let ck = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    let fresh = cfg.model.build(2, 1, cfg.seed).unwrap();
    assert_eq!(Model::from_doc(&ck.model).unwrap(), fresh);
}

#[test]
fn training_reduces_adding_loss_for_most_seeds() {
    let mut improved = 0;
    let seeds = 20;
    for seed in 0..seeds {
        let mut cfg = adding_config(3, std::path::Path::new("unused"));
        cfg.seed = seed;
        cfg.resolve();
        let (mut t, data) = trainer(&cfg);
        let before = evaluate(&t.model, &data.train, ResetPolicy::RESET, LossKind::Mse).unwrap().loss;
        for _ in 0..3 {
            t.train_epoch(&data.train).unwrap();
        }
        let after = evaluate(&t.model, &data.train, ResetPolicy::RESET, LossKind::Mse).unwrap().loss;
        if after < before {
            improved += 1;
        }
    }
    assert!(improved >= 19, "{improved}/{seeds}");
}

#[test]
fn retention_policies_change_only_carried_state() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = adding_config(1, dir.path());
    cfg.model.update_gate_bias = 0.0;
    let data = build_data(&cfg.task, cfg.seed).unwrap();
    let mut model = cfg.model.build(2, 1, cfg.seed).unwrap();
    // make units hold so that T and C survive a sequence
    for (name, d) in model.blocks_mut() {
        if name == "b_r" {
            d.fill(3.0);
        }
    }
    let reports: Vec<_> = ResetPolicy::ALL
        .iter()
        .map(|&p| evaluate(&model, &data.val, p, LossKind::Mse).unwrap().without_timing())
        .collect();
    assert_ne!(reports[0], reports[3]);
    let reset_twice = evaluate(&model, &data.val, ResetPolicy::RESET, LossKind::Mse).unwrap().without_timing();
    assert_eq!(reports[3], reset_twice);
}

#[test]
fn param_count_matches_enumeration() {
    let mut rng = Rng::new(31);
    for i in 0..20 {
        let d = 1 + rng.below(12);
        let h = 1 + rng.below(12);
        let cfg = CellConfig::new(d, h).with_variant(UpdateVariant::ALL[i % 4]);
        let model = Model::petnn(cfg, 3, &mut rng, InitScheme::GlorotUniform).unwrap();
        let cell_scalars = model.num_scalars() as u64 - (3 * h + 3) as u64;
        assert_eq!(param_count(&cfg), cell_scalars);
        if cfg.update_variant == UpdateVariant::SelfSelective {
            let (d, h) = (d as u64, h as u64);
            assert_eq!(cell_scalars, 4 * h * (d + h + 1) + 2 * h * (d + 1));
        }
        assert_eq!(model.param_count(), model.num_scalars() as u64);
    }
}

#[test]
fn recurrent_flops_are_linear_in_length() {
    let mut rng = Rng::new(32);
    for v in UpdateVariant::ALL {
        let model = Model::petnn(CellConfig::new(3, 7).with_variant(v), 2, &mut rng, InitScheme::GlorotUniform).unwrap();
        for len in [1, 17, 96, 500] {
            let a = efficiency_report(&model, len);
            let b = efficiency_report(&model, 2 * len);
            assert_eq!(b.recurrent_flops, 2 * a.recurrent_flops);
            assert_eq!(b.flops_per_sequence - b.head_flops, 2 * (a.flops_per_sequence - a.head_flops));
        }
    }
}

#[test]
fn trainer_rejects_bad_config() {
    let model = Model::petnn(CellConfig::new(1, 1), 1, &mut Rng::new(0), InitScheme::GlorotUniform).unwrap();
    let cfg = TrainConfig {
        batch_size: 0,
        loss: Some(LossKind::Mse),
        ..TrainConfig::default()
    };
    assert!(Trainer::new(model, cfg).is_err());
}
