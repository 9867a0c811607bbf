//! Model file round trips and corruption handling.

use dct_bench::modelio::{model_hash, read_model, write_model, ModelHeader};
use dct_core::datagen::{build_supervised_pairs, build_unsupervised_dataset, BoxRegion, MvnPrior, PairKind, Prior};
use dct_core::encoder::DeepSetConfig;
use dct_core::rng::stream;
use dct_core::training::{train, ConditioningMode, GeneratorKind, TrainConfig, TrainingData, TransportModel};

fn trained(gen: GeneratorKind, cond: ConditioningMode, stochastic: bool) -> TransportModel {
    let prior = Prior::Mvn(MvnPrior::standard(2));
    let ds = build_unsupervised_dataset(&prior, 4, 12, 16, 0).unwrap();
    let pairs = build_supervised_pairs(PairKind::MvnShift, &prior, &BoxRegion::cube(2, 0.0, 2.5), 6, 16, 0).unwrap();
    let mut cfg = TrainConfig::mvn(gen, cond);
    cfg.encoder = DeepSetConfig {
        d_in: 2,
        d_h: 8,
        d_z: 4,
        blocks: 1,
        normalize: false,
    };
    cfg.map_hidden = 8;
    cfg.batch_size = 2;
    cfg.subsample = 8;
    cfg.epochs = 2;
    cfg.steps_per_epoch = Some(3);
    cfg.stochastic = stochastic;
    let data = match cond {
        ConditioningMode::Sc => TrainingData::from_pairs(&pairs),
        _ => TrainingData::from_dataset(&ds),
    };
    train(&cfg, &data).unwrap()
}

fn bytes(m: &TransportModel) -> Vec<u8> {
    let mut b = Vec::new();
    write_model(m, &mut b).unwrap();
    b
}

#[test]
fn every_generator_and_conditioning_round_trips() {
    for (g, c, s) in [
        (GeneratorKind::Swd, ConditioningMode::Stc, false),
        (GeneratorKind::Energy, ConditioningMode::OneHot, false),
        (GeneratorKind::Energy, ConditioningMode::Stc, true),
        (GeneratorKind::Fm, ConditioningMode::Sc, false),
    ] {
        let m = trained(g, c, s);
        let back = read_model(bytes(&m).as_slice()).unwrap();
        assert_eq!(back, m, "{g:?}/{c:?}");
        assert_eq!(model_hash(&back).unwrap(), model_hash(&m).unwrap());
        assert_eq!(ModelHeader::describe(&back), ModelHeader::describe(&m));
    }
}

#[test]
fn loaded_model_transports_identically() {
    let m = trained(GeneratorKind::Fm, ConditioningMode::Stc, false);
    let back = read_model(bytes(&m).as_slice()).unwrap();
    let ds = build_unsupervised_dataset(&Prior::Mvn(MvnPrior::standard(2)), 2, 2, 20, 9).unwrap();
    let a = m.transport(&ds.sets[0], Some(&ds.sets[1]), &mut stream(0, "t", 0)).unwrap();
    let b = back.transport(&ds.sets[0], Some(&ds.sets[1]), &mut stream(0, "t", 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corruption_is_detected() {
    let good = bytes(&trained(GeneratorKind::Swd, ConditioningMode::Stc, false));
    let mut flipped = good.clone();
    let mid = good.len() / 2;
    flipped[mid] ^= 0x01;
    assert!(read_model(flipped.as_slice()).is_err());
    assert!(read_model(&good[..good.len() - 1]).is_err());
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(read_model(magic.as_slice()).is_err());
    assert!(read_model(&[][..]).is_err());
}
