use devmimic::dataset::{SplitSizes, Splits};
use devmimic::evaluation::mimicry;
use devmimic::machines::MachineKind;
use devmimic::pipeline::{read_splits, run_experiment, write_splits, ExperimentSpec};
use devmimic::rnn::Network;

#[test]
fn datasets_survive_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sizes = SplitSizes { train: 6, validation: 3, evaluation: 2, length: 9 };
    for kind in [MachineKind::Parity, MachineKind::SerialPort] {
        let splits = Splits::generate(kind, sizes, 5).unwrap();
        assert_eq!(write_splits(&splits, dir.path()).unwrap().len(), 3);
        assert_eq!(read_splits(dir.path(), kind).unwrap(), splits);
    }
}

#[test]
fn experiment_files_reload_into_the_same_networks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ExperimentSpec::from_toml(
        "machine = \"invert\"\npreset = \"16/4/4x16\"\nseed = 2\nn_networks = 2\n[training]\nmax_epochs = 3\n",
    )
    .unwrap();
    let out = run_experiment(&spec, dir.path(), true).unwrap();
    assert!(out.files.iter().all(|f| f.is_file()));
    assert_eq!(out.experiment.records.len(), 2);

    let splits = read_splits(&dir.path().join("data"), MachineKind::SingleInvert).unwrap();
    for (i, net) in out.experiment.networks.iter().enumerate() {
        let path = dir.path().join(format!("seed-{}/model.ckpt", 2 + i));
        let (loaded, step) = Network::<f32>::load_checkpoint(path).unwrap();
        assert_eq!(step, out.experiment.steps[i]);
        assert_eq!(loaded.params(), net.params());
        assert_eq!(
            mimicry(&loaded, &splits.evaluation).unwrap(),
            mimicry(net, &splits.evaluation).unwrap()
        );
    }
    assert_eq!(ExperimentSpec::load(dir.path().join("spec.toml")).unwrap(), spec);
}
