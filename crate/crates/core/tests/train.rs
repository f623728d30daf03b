use pgsr_core::models::{Checkpoint, ModelParams, Part, Strategy};
use pgsr_core::synth::{build_corpus, Corpus, CorpusSpec};
use pgsr_core::train::{
    alternate, evaluate, infer, train_g, train_t, LogRecord, TrainConfig, Trainer,
};
use pgsr_core::Error;

fn corpus() -> Corpus {
    build_corpus(&CorpusSpec {
        n_records: 10,
        seed: 5,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn config() -> TrainConfig {
    TrainConfig {
        lr_t: 1e-3,
        lr_g: 1e-3,
        epochs: 2,
        batch_size: 4,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut v = Vec::new();
    ck.write(&mut v).unwrap();
    v
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let c = corpus();
    let mut t = Trainer::new(
        &c,
        TrainConfig {
            lr_t: 0.0,
            lr_g: 0.0,
            ..config()
        },
    )
    .unwrap();
    let before = t.params.clone();
    t.iterate().unwrap();
    assert_eq!(t.params, before);
}

#[test]
fn an_iteration_is_one_t_epoch_then_one_g_epoch() {
    let c = corpus();
    let mut t = Trainer::new(&c, config()).unwrap();
    t.iterate().unwrap();
    // 8 training records in batches of 4.
    assert_eq!(t.step, 4);
    assert_eq!(t.epoch, 1);
    let phases: Vec<&str> = t
        .log
        .records
        .iter()
        .map(|r| match r {
            LogRecord::T { .. } => "t",
            LogRecord::G { .. } => "g",
            LogRecord::Eval { .. } => "e",
        })
        .collect();
    assert_eq!(phases, ["t", "t", "g", "g"]);
}

#[test]
fn same_seed_same_bytes() {
    let c = corpus();
    let (a, la) = alternate(&c, config()).unwrap();
    let (b, lb) = alternate(&c, config()).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(la.to_jsonl().unwrap(), lb.to_jsonl().unwrap());
    let (other, _) = alternate(
        &c,
        TrainConfig {
            seed: 10,
            ..config()
        },
    )
    .unwrap();
    assert_ne!(a.params, other.params);
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let c = corpus();
    let cfg = TrainConfig {
        epochs: 3,
        ..config()
    };
    let mut full = Trainer::new(&c, cfg.clone()).unwrap();
    full.run(None).unwrap();

    let mut first = Trainer::new(
        &c,
        TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    first.run(None).unwrap();
    let mut ck = first.checkpoint();
    ck.meta["train"]["epochs"] = 3.into();
    let ck = Checkpoint::read(bytes(&ck).as_slice()).unwrap();
    let mut rest = Trainer::resume(&c, &ck).unwrap();
    rest.run(None).unwrap();

    assert_eq!(bytes(&rest.checkpoint()), bytes(&full.checkpoint()));
    let tail = &full.log.records[first.log.records.len()..];
    assert_eq!(rest.log.records.as_slice(), tail);
}

#[test]
fn resume_refuses_another_corpus() {
    let c = corpus();
    let (ck, _) = alternate(
        &c,
        TrainConfig {
            epochs: 1,
            ..config()
        },
    )
    .unwrap();
    let other = build_corpus(&CorpusSpec {
        n_records: 10,
        seed: 6,
        ..CorpusSpec::default()
    })
    .unwrap();
    assert!(matches!(
        Trainer::resume(&other, &ck),
        Err(Error::Checkpoint(_))
    ));
}

#[test]
fn each_phase_touches_only_its_own_parts() {
    let c = corpus();
    let init = ModelParams::init(config().model, 1).unwrap();
    let (after_g, _) = train_g(&c, &init, config()).unwrap();
    assert_eq!(after_g.part_hash(Part::F), init.part_hash(Part::F));
    assert_eq!(after_g.part_hash(Part::E), init.part_hash(Part::E));

    let (after_t, _) = train_t(&c, config()).unwrap();
    let fresh = Trainer::new(&c, config()).unwrap().params;
    assert_eq!(after_t.part_hash(Part::G), fresh.part_hash(Part::G));
    assert_ne!(after_t.part_hash(Part::F), fresh.part_hash(Part::F));
}

#[test]
fn runaway_learning_rate_is_reported() {
    let c = corpus();
    let r = alternate(
        &c,
        TrainConfig {
            lr_t: 1e300,
            lr_g: 1e300,
            epochs: 3,
            ..config()
        },
    );
    assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
}

#[test]
fn inference_and_evaluation_shapes() {
    let c = corpus();
    let (ck, _) = alternate(
        &c,
        TrainConfig {
            epochs: 1,
            ..config()
        },
    )
    .unwrap();
    let obs = c.test()[0].observed.window(0.0, 2.0).unwrap();
    let inf = infer(&obs, &ck.params, Strategy::FwdBwd, 0).unwrap();
    assert_eq!(inf.s2.len(), 60);
    assert_eq!(inf.reconstructed.len(), 300);

    let (rows, summary) = evaluate(&c, &ck.params, Strategy::FwdBwd, 0).unwrap();
    assert_eq!(rows.len(), 10);
    assert_eq!(summary.clips, 10);
    assert!(rows[1].record_id.ends_with("_c1"), "{}", rows[1].record_id);
    assert!(summary.raw2s_psd.mae.is_finite() && summary.recon10s_psd.mae.is_finite());
}
