use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use pgsr_core::models::{infer_s2, reconstruct, Checkpoint, Strategy};
use pgsr_core::sigcore::{hr_psd, psd_band, Signal, HR_BAND_HI_HZ, HR_BAND_LO_HZ};
use pgsr_core::synth::{build_corpus, waveform, Corpus};
use pgsr_core::train::{
    ablate_blocks, ablate_hr_calc, ablate_loss, ablate_strategy, ablate_sudden, alternate,
    evaluate, infer, AblationRow, EvalRow, TrainConfig, Trainer,
};
use pgsr_core::Error;

use crate::args::{
    AblateArgs, Ablation, Cli, Command, CorpusArgs, EvalArgs, LeakageArgs, ReconstructArgs,
    TrainArgs,
};

/// 3 for numerical failures, 2 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Diverged { .. }) => 3,
        _ => 2,
    }
}

fn echo(config: serde_json::Value) {
    println!("{config}");
}

fn need_dir(p: &Path, what: &str) -> Result<()> {
    if !p.is_dir() {
        bail!("{what} {} is not a directory", p.display());
    }
    Ok(())
}

fn need_file(p: &Path, what: &str) -> Result<()> {
    if !p.is_file() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(())
}

fn need_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() && !d.is_dir() => {
            bail!("output directory {} does not exist", d.display())
        }
        _ => Ok(()),
    }
}

fn load_corpus(dir: &Path) -> Result<Corpus> {
    need_file(&dir.join("manifest.json"), "corpus manifest")?;
    Corpus::load(dir).with_context(|| format!("loading corpus {}", dir.display()))
}

fn trained_strategy(ck: &Checkpoint) -> Result<Strategy> {
    let cfg: TrainConfig = serde_json::from_value(ck.meta["train"].clone())
        .context("checkpoint carries no training configuration")?;
    Ok(cfg.strategy)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(a) => corpus(a),
        Command::LeakageDemo(a) => leakage(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Ablate(a) => ablate(a),
    }
}

fn corpus(a: CorpusArgs) -> Result<()> {
    need_parent(&a.out)?;
    let spec = a.corpus.spec(a.seed);
    echo(json!({ "command": "corpus", "out": a.out, "spec": spec }));
    let c = build_corpus(&spec)?;
    c.save(&a.out)?;
    println!(
        "{}",
        json!({ "records": c.records.len(), "train": c.train().len(), "test": c.test().len(), "hash": c.manifest.hash })
    );
    Ok(())
}

fn leakage(a: LeakageArgs) -> Result<()> {
    echo(
        json!({ "command": "leakage-demo", "fps": a.fps, "hr_bpm": a.hr_bpm, "out_dir": a.out_dir, "seed": a.seed }),
    );
    let (lo, hi) = (60.0 * HR_BAND_LO_HZ, 60.0 * HR_BAND_HI_HZ);
    if !(lo..=hi).contains(&a.hr_bpm) {
        return Err(Error::OutOfBand { bpm: a.hr_bpm })
            .context(format!("heart rate must lie in [{lo:.1}, {hi:.1}] bpm"));
    }
    if a.fps == 0 {
        bail!("fps must be positive");
    }
    fs::create_dir_all(&a.out_dir)?;
    let n = 10 * a.fps as usize;
    let phase0 = (pgsr_core::seeds::splitmix64(a.seed) >> 11) as f64 / (1u64 << 53) as f64
        * std::f64::consts::TAU;
    let x = waveform(&vec![a.hr_bpm; n], a.fps, phase0, &[1.0, 0.5, 0.25]);
    let long = Signal::new(x, a.fps)?;
    let short = long.window(0.0, 2.0)?;

    let mut csv = String::from("window_s,freq_hz,prob\n");
    let mut windows = Vec::new();
    for (dur, s) in [(2.0, &short), (10.0, &long)] {
        let d = psd_band(s)?;
        for (f, p) in d.bin_freqs_hz.iter().zip(&d.probs) {
            csv.push_str(&format!("{dur},{f},{p}\n"));
        }
        let est = hr_psd(s)?.bpm;
        windows.push(json!({
            "duration_s": dur,
            "bin_spacing_hz": 1.0 / dur,
            "bin_spacing_bpm": 60.0 / dur,
            "bins": d.len(),
            "est_bpm": est,
            "error_bpm": (est - a.hr_bpm).abs(),
        }));
    }
    fs::write(a.out_dir.join("psd.csv"), csv)?;
    let summary = json!({ "hr_bpm": a.hr_bpm, "fps": a.fps, "windows": windows });
    fs::write(
        a.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    println!("{summary}");
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    need_dir(&a.corpus, "corpus")?;
    if let Some(r) = &a.resume {
        need_file(r, "checkpoint")?;
    }
    let corpus = load_corpus(&a.corpus)?;
    let mut trainer = match &a.resume {
        Some(r) => Trainer::resume(&corpus, &Checkpoint::load(r)?)?,
        None => Trainer::new(&corpus, a.train.config(corpus.manifest.spec.fps))?,
    };
    echo(json!({
        "command": "train",
        "corpus": a.corpus,
        "out": a.out,
        "resume": a.resume,
        "train": trainer.config,
    }));
    fs::create_dir_all(&a.out)?;
    trainer.run(Some(&a.out))?;
    let ck_path = a.out.join("model.ckpt");
    trainer.checkpoint().save(&ck_path)?;
    fs::write(a.out.join("runlog.jsonl"), trainer.log.to_jsonl()?)?;
    println!(
        "{}",
        json!({ "checkpoint": ck_path, "epochs": trainer.epoch, "steps": trainer.step })
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    need_dir(&a.corpus, "corpus")?;
    need_file(&a.checkpoint, "checkpoint")?;
    need_parent(&a.out)?;
    let ck = Checkpoint::load_trained(&a.checkpoint)?;
    let strategy = match a.strategy {
        Some(s) => s.into(),
        None => trained_strategy(&ck)?,
    };
    echo(
        json!({ "command": "eval", "corpus": a.corpus, "checkpoint": a.checkpoint, "out": a.out, "strategy": strategy, "seed": a.seed }),
    );
    let corpus = load_corpus(&a.corpus)?;
    let (rows, summary) = evaluate(&corpus, &ck.params, strategy, a.seed)?;
    EvalRow::write_csv(&rows, fs::File::create(&a.out)?)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<()> {
    need_file(&a.input, "input")?;
    if let Some(c) = &a.checkpoint {
        need_file(c, "checkpoint")?;
    }
    need_parent(&a.out)?;
    let strategy: Strategy = a.strategy.into();
    echo(
        json!({ "command": "reconstruct", "input": a.input, "strategy": strategy, "checkpoint": a.checkpoint, "out": a.out, "seed": a.seed }),
    );
    let obs = Signal::load(&a.input)?;
    let ck = a
        .checkpoint
        .as_deref()
        .map(Checkpoint::load_trained)
        .transpose()?;
    let (s2, out) = match (&ck, strategy.is_learned()) {
        (Some(ck), true) => {
            let inf = infer(&obs, &ck.params, strategy, a.seed)?;
            (inf.s2, inf.reconstructed)
        }
        (None, true) => bail!("strategy {strategy} needs --checkpoint"),
        (Some(ck), false) => {
            let s2 = infer_s2(&obs, &ck.params)?;
            let out = reconstruct(&s2, strategy, None, a.seed)?;
            (s2, out)
        }
        (None, false) => (obs.clone(), reconstruct(&obs, strategy, None, a.seed)?),
    };
    out.save(&a.out)?;
    println!(
        "{}",
        json!({ "samples": out.len(), "s2_bpm": hr_psd(&s2)?.bpm, "reconstructed_bpm": hr_psd(&out)?.bpm })
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    need_dir(&a.corpus, "corpus")?;
    if let Some(c) = &a.checkpoint {
        need_file(c, "checkpoint")?;
    }
    need_parent(&a.out)?;
    let corpus = load_corpus(&a.corpus)?;
    let config = a.train.config(corpus.manifest.spec.fps);
    echo(
        json!({ "command": "ablate", "which": a.which, "corpus": a.corpus, "out": a.out, "checkpoint": a.checkpoint, "train": config }),
    );

    let trained = || -> Result<Checkpoint> {
        match &a.checkpoint {
            Some(p) => Ok(Checkpoint::load_trained(p)?),
            None => Ok(alternate(&corpus, config.clone())?.0),
        }
    };
    let rows = match a.which {
        Ablation::Loss => ablate_loss(&corpus, &config)?,
        Ablation::Strategy => ablate_strategy(&corpus, &config)?,
        Ablation::Blocks => ablate_blocks(&corpus, &config)?,
        Ablation::HrCalc => {
            let ck = trained()?;
            ablate_hr_calc(&corpus, &ck.params, trained_strategy(&ck)?, config.seed)?.0
        }
        Ablation::Sudden => {
            let ck = trained()?;
            let report = ablate_sudden(&corpus, &ck.params, trained_strategy(&ck)?, config.seed)?;
            println!("{}", serde_json::to_string(&report)?);
            report.rows()?
        }
    };
    AblationRow::write_csv(&rows, fs::File::create(&a.out)?)?;
    for r in &rows {
        println!("{}", serde_json::to_string(r)?);
    }
    Ok(())
}
