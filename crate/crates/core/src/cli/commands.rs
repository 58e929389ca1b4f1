use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Command, OutArg, RunConfig, SplitArg};
use crate::audio::{load_mono, write_wav_pcm16};
use crate::converter::{
    convert, griffin_lim_vocoder, mel_to_features, train_converter, ConverterHistory, ConverterModel,
};
use crate::diagnostics::{gradient_suite, GRADCHECK_TOLERANCE};
use crate::error::{Error, Result};
use crate::evalharness::{
    content_proxy_eval, emit_report, embed_conversions, likability_sweep, load_sweep_items, predictor_report,
    report_file_name, speaker_similarity_eval, LabeledEmbedding, Report, ReportFormat, ReportMeta, SweepItem,
};
use crate::manifest::{Manifest, Split};
use crate::predictor::{
    annotate_streaming, build_model, calibrate_on_split, train, CalibrationParams, LikabilityRating, PredictorModel,
    TrainHistory,
};
use crate::speaker::{load_embedding, MelStatsEmbedder};
use crate::synth::synth_corpus;
use crate::units::{
    fit_minibatch_kmeans, load_codebook, load_features, manifest_features, quantize, save_codebook,
    save_features, save_unit_records, stack_frames, Codebook, FeatureExtractor, UnitRecord,
};

/// Provenance written next to every command's outputs as `<command>.run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub outputs: Vec<PathBuf>,
}

struct Run {
    command: &'static str,
    cfg: RunConfig,
    out: PathBuf,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn new(command: &'static str, cfg: RunConfig, out: &OutArg) -> Result<Self> {
        cfg.validate()?;
        let out = out.out.clone().unwrap_or_else(|| cfg.paths.out_dir.clone());
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Self { command, cfg, out, outputs: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn meta(&self) -> ReportMeta {
        ReportMeta { seed: self.cfg.seed, config_hash: self.cfg.hash() }
    }

    fn emit<R: Report>(&mut self, report: &R, format: ReportFormat) -> Result<()> {
        let meta = self.meta();
        let path = self.path(&report_file_name(R::KIND, &meta, format));
        emit_report(report, &meta, &path, format)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn finish(self) -> Result<i32> {
        let record = RunRecord {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            config_hash: self.cfg.hash(),
            config: self.cfg,
            outputs: self.outputs,
        };
        let path = self.out.join(format!("{}.run.json", self.command));
        let text = serde_json::to_string_pretty(&record)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(0)
    }
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, purpose: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Data(format!("{purpose} needs --{flag}")))
}

pub(super) fn dispatch(cfg: RunConfig, command: Command) -> Result<i32> {
    match command {
        Command::SynthCorpus { out } => synth(cfg, &out),
        Command::TrainPredictor { manifest, ir_dir, epochs, out } => train_predictor(cfg, &manifest, ir_dir, epochs, &out),
        Command::Annotate { checkpoint, calibration, manifest, chunk, out } => {
            annotate(cfg, &checkpoint, &calibration, &manifest, chunk, &out)
        }
        Command::FitUnits { manifest, split, k, out } => fit_units(cfg, &manifest, split, k, &out),
        Command::Tokenize { codebook, manifest, split, out } => tokenize(cfg, &codebook, &manifest, split, &out),
        Command::TrainConverter { manifest, codebook, scale, steps, out } => {
            train_conv(cfg, &manifest, &codebook, scale, steps, &out)
        }
        Command::Convert { checkpoint, codebook, audio, features, speaker, target, scale, wav, out } => {
            let src = Source { audio, features };
            convert_cmd(cfg, &checkpoint, &codebook, &src, speaker.as_deref(), &target, scale, wav, &out)
        }
        Command::Evaluate {
            manifest,
            predictor,
            calibration,
            converter,
            codebook,
            sweep,
            content,
            similarity,
            predictor_report,
            split,
            format,
            scale,
            out,
        } => {
            let artifacts = Artifacts { predictor, calibration, converter, codebook };
            let mut sel = Selection { sweep, content, similarity, predictor_report };
            if !(sweep || content || similarity || predictor_report) {
                sel = artifacts.available();
            }
            evaluate(cfg, &manifest, &artifacts, sel, split, format, scale, &out)
        }
        Command::Gradcheck { seed } => gradcheck(seed),
    }
}

fn synth(cfg: RunConfig, out: &OutArg) -> Result<i32> {
    let mut run = Run::new("synth-corpus", cfg, out)?;
    let manifest = synth_corpus(&run.cfg.synth, &run.out)?;
    run.path("manifest.jsonl");
    for sub in ["wav", "emb", "ir"] {
        run.path(sub);
    }
    log::info!("wrote {} clips to {}", manifest.len(), run.out.display());
    run.finish()
}

fn fresh_predictor(cfg: &RunConfig) -> PredictorModel {
    let mut model = build_model(cfg.predictor.seed);
    model.mel = cfg.mel.clone();
    model.sample_rate = cfg.sample_rate;
    model
}

fn train_predictor(
    mut cfg: RunConfig,
    manifest: &Path,
    ir_dir: Option<PathBuf>,
    epochs: Option<usize>,
    out: &OutArg,
) -> Result<i32> {
    if ir_dir.is_some() {
        cfg.predictor.augment.ir_dir = ir_dir;
    }
    if let Some(e) = epochs {
        cfg.predictor.epochs = e;
    }
    if cfg.mel.n_mels != 80 {
        return Err(Error::Config("the predictor needs mel.n_mels = 80".into()));
    }
    let mut run = Run::new("train-predictor", cfg, out)?;
    let data = Manifest::load(manifest)?;
    let (model, history) = train(fresh_predictor(&run.cfg), &data, &run.cfg.predictor)?;
    let calib = calibrate_on_split(&model, &data, Split::Val)?;
    model.save(run.path("predictor.lkbl"))?;
    calib.save(run.path("calibration.json"))?;
    write_history(&run.path("predictor_history.csv"), &history)?;
    log::info!(
        "best epoch {} (val SRCC {:.4})",
        history.best_epoch,
        history.epochs.get(history.best_epoch).map_or(f64::NAN, |e| e.val_srcc)
    );
    run.finish()
}

fn write_history(path: &Path, h: &TrainHistory) -> Result<()> {
    let rows = h.epochs.iter().map(|e| {
        vec![
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_srcc.to_string(),
            (e.epoch == h.best_epoch).to_string(),
        ]
    });
    write_csv(path, &["epoch", "train_loss", "val_srcc", "best"], rows)
}

fn annotate(
    cfg: RunConfig,
    checkpoint: &Path,
    calibration: &Path,
    manifest: &Path,
    chunk: usize,
    out: &OutArg,
) -> Result<i32> {
    let mut run = Run::new("annotate", cfg, out)?;
    let model = PredictorModel::load(checkpoint)?;
    let calib = CalibrationParams::load(calibration)?;
    let (ann, rej) = (run.path("annotated.jsonl"), run.path("rejects.jsonl"));
    let summary = annotate_streaming(&model, &calib, manifest, &ann, &rej, chunk)?;
    log::info!("annotated {} records, rejected {}", summary.annotated, summary.rejected);
    run.finish()
}

fn fit_units(cfg: RunConfig, manifest: &Path, split: SplitArg, k: Option<usize>, out: &OutArg) -> Result<i32> {
    let mut cfg = cfg;
    if let Some(k) = k {
        cfg.units.k = k;
    }
    let mut run = Run::new("fit-units", cfg, out)?;
    let data = Manifest::load(manifest)?;
    let extractor = FeatureExtractor::new(run.cfg.mel.clone());
    let feats: Vec<_> = manifest_features(&data, split.split(), &extractor, run.cfg.sample_rate)?
        .into_iter()
        .map(|(_, f)| f)
        .collect();
    let (frames, dim) = stack_frames(&feats)?;
    let codebook = fit_minibatch_kmeans(&frames, dim, &run.cfg.units)?;
    save_codebook(run.path("codebook.lkbc"), &codebook)?;
    log::info!("fitted {} units over {} frames of dim {dim}", codebook.k(), frames.len() / dim);
    run.finish()
}

fn tokenize(cfg: RunConfig, codebook: &Path, manifest: &Path, split: SplitArg, out: &OutArg) -> Result<i32> {
    let mut run = Run::new("tokenize", cfg, out)?;
    let cb = load_codebook(codebook)?;
    let data = Manifest::load(manifest)?;
    let extractor = FeatureExtractor::new(run.cfg.mel.clone());
    let records = manifest_features(&data, split.split(), &extractor, run.cfg.sample_rate)?
        .into_iter()
        .map(|(id, f)| Ok(UnitRecord::new(id, &quantize(&cb, &f)?)))
        .collect::<Result<Vec<_>>>()?;
    save_unit_records(run.path("units.jsonl"), &records)?;
    log::info!("tokenized {} records", records.len());
    run.finish()
}

/// Speaker-embedding size of the first training record that has one.
fn embedding_dim(data: &Manifest) -> Result<usize> {
    let r = data
        .split(Split::Train)
        .find(|r| r.embedding.is_some())
        .ok_or_else(|| Error::Data("no training record has a speaker embedding".into()))?;
    let p = r.embedding.as_ref().expect("filtered above");
    Ok(load_embedding(data.resolve(p))?.dim())
}

fn train_conv(
    mut cfg: RunConfig,
    manifest: &Path,
    codebook: &Path,
    scale: Option<f64>,
    steps: Option<usize>,
    out: &OutArg,
) -> Result<i32> {
    if let Some(s) = scale {
        cfg.converter_train.s = s;
    }
    if let Some(n) = steps {
        cfg.converter_train.steps = n;
    }
    let data = Manifest::load(manifest)?;
    let cb = load_codebook(codebook)?;
    // Vocabulary and speaker size follow the data.
    cfg.converter.vocab = cb.k();
    cfg.converter.speaker_dim = embedding_dim(&data)?;
    cfg.converter.n_mels = cfg.mel.n_mels;
    let mut run = Run::new("train-converter", cfg, out)?;
    let mut model = ConverterModel::new(run.cfg.converter.clone())?;
    model.mel = run.cfg.mel.clone();
    model.sample_rate = run.cfg.sample_rate;
    let (model, history) = train_converter(model, &data, &cb, &run.cfg.converter_train)?;
    model.save(run.path("converter.lkbl"))?;
    write_converter_history(&run.path("converter_history.csv"), &history)?;
    log::info!("final loss {:.5}", history.steps.last().map_or(f64::NAN, |s| s.loss));
    run.finish()
}

fn write_converter_history(path: &Path, h: &ConverterHistory) -> Result<()> {
    let rows = h.steps.iter().map(|s| vec![s.step.to_string(), s.loss.to_string()]);
    write_csv(path, &["step", "loss"], rows)
}

struct Source {
    audio: Option<PathBuf>,
    features: Option<PathBuf>,
}

fn target_label(t: f64) -> String {
    format!("t{t:+.2}")
}

#[allow(clippy::too_many_arguments)]
fn convert_cmd(
    cfg: RunConfig,
    checkpoint: &Path,
    codebook: &Path,
    src: &Source,
    speaker: Option<&Path>,
    targets: &[f64],
    scale: Option<f64>,
    wav: bool,
    out: &OutArg,
) -> Result<i32> {
    let mut cfg = cfg;
    if let Some(s) = scale {
        cfg.eval.scale = s;
    }
    let speaker = speaker.ok_or_else(|| Error::Data("conversion needs a target speaker embedding (--speaker)".into()))?;
    if targets.is_empty() {
        return Err(Error::Data("conversion needs at least one --target rating".into()));
    }
    let mut run = Run::new("convert", cfg, out)?;
    let model = ConverterModel::load(checkpoint)?;
    let cb = load_codebook(codebook)?;
    let spk = load_embedding(speaker)?;
    let (stem, feats) = match (&src.audio, &src.features) {
        (Some(a), _) => {
            let w = load_mono(a, model.sample_rate)?;
            (a, FeatureExtractor::new(model.mel.clone()).extract(&w)?)
        }
        (None, Some(f)) => (f, load_features(f)?),
        (None, None) => return Err(Error::Data("conversion needs --audio or --features".into())),
    };
    let stem = stem.file_stem().map_or_else(|| "utt".into(), |s| s.to_string_lossy().into_owned());
    for &t in targets {
        let mel = convert(&model, &feats, &cb, &spk, LikabilityRating::splat(t), run.cfg.eval.scale)?;
        if wav {
            let w = griffin_lim_vocoder(&mel, model.sample_rate, run.cfg.eval.griffin_lim_iterations)?;
            write_wav_pcm16(run.path(&format!("{stem}_{}.wav", target_label(t))), &w)?;
        } else {
            save_features(run.path(&format!("{stem}_{}.lkbf", target_label(t))), &mel_to_features(&mel)?)?;
        }
    }
    log::info!("wrote {} conversions at s = {}", targets.len(), run.cfg.eval.scale);
    run.finish()
}

struct Artifacts {
    predictor: Option<PathBuf>,
    calibration: Option<PathBuf>,
    converter: Option<PathBuf>,
    codebook: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
struct Selection {
    sweep: bool,
    content: bool,
    similarity: bool,
    predictor_report: bool,
}

impl Artifacts {
    fn available(&self) -> Selection {
        let pred = self.predictor.is_some() && self.calibration.is_some();
        let conv = self.converter.is_some() && self.codebook.is_some();
        Selection { sweep: pred && conv, content: conv, similarity: conv, predictor_report: pred }
    }

    fn predictor(&self, purpose: &str) -> Result<(PredictorModel, CalibrationParams)> {
        let m = PredictorModel::load(require(&self.predictor, "predictor", purpose)?)?;
        let c = CalibrationParams::load(require(&self.calibration, "calibration", purpose)?)?;
        Ok((m, c))
    }

    fn converter(&self, purpose: &str) -> Result<(ConverterModel, Codebook)> {
        let m = ConverterModel::load(require(&self.converter, "converter", purpose)?)?;
        let c = load_codebook(require(&self.codebook, "codebook", purpose)?)?;
        Ok((m, c))
    }
}

/// Reference embeddings of the source utterances and embeddings of their
/// conversions, both from a mel-statistics embedder fitted on the sources.
fn similarity_report(
    converter: &ConverterModel,
    codebook: &Codebook,
    items: &[SweepItem],
    targets: &[f64],
    s: f64,
) -> Result<crate::evalharness::SimilarityReport> {
    let source_mels: Vec<_> = items.iter().map(|it| it.mel.clone()).collect();
    let embedder = MelStatsEmbedder::fit(&source_mels)?;
    let refs = items
        .iter()
        .map(|it| {
            Ok(LabeledEmbedding {
                id: it.id.clone(),
                speaker: it.speaker_name.clone(),
                embedding: crate::speaker::EmbeddingProvider::embed(&embedder, &it.mel)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mels = Vec::with_capacity(items.len() * targets.len());
    for it in items {
        for &t in targets {
            let mel = convert(converter, &it.features, codebook, &it.speaker, LikabilityRating::splat(t), s)?;
            mels.push((it.id.clone(), it.speaker_name.clone(), t, mel));
        }
    }
    speaker_similarity_eval(&refs, &embed_conversions(&embedder, &mels)?)
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    mut cfg: RunConfig,
    manifest: &Path,
    artifacts: &Artifacts,
    sel: Selection,
    split: Option<SplitArg>,
    format: Option<ReportFormat>,
    scale: Option<f64>,
    out: &OutArg,
) -> Result<i32> {
    if let Some(s) = scale {
        cfg.eval.scale = s;
    }
    if let Some(f) = format {
        cfg.eval.format = f;
    }
    let split = match split {
        Some(a) => a.split(),
        None => Some(cfg.eval.split),
    };
    if !(sel.sweep || sel.content || sel.similarity || sel.predictor_report) {
        return Err(Error::Data("nothing to evaluate: pass model artifacts or selection flags".into()));
    }
    let mut run = Run::new("evaluate", cfg, out)?;
    let data = Manifest::load(manifest)?;
    let targets = run.cfg.eval.targets.values()?;
    let (s, fmt) = (run.cfg.eval.scale, run.cfg.eval.format);

    if sel.predictor_report {
        let (model, calib) = artifacts.predictor("the predictor report")?;
        let eval_split = split.unwrap_or(Split::Test);
        let report = predictor_report(&model, &calib, &data, eval_split)?;
        run.emit(&report, fmt)?;
    }
    if sel.sweep || sel.content || sel.similarity {
        let (converter, codebook) = artifacts.converter("conversion reports")?;
        let items = load_sweep_items(&data, split, &codebook, &converter)?;
        if items.is_empty() {
            return Err(Error::Data("no records to convert in the selected split".into()));
        }
        if sel.sweep {
            let (predictor, calib) = artifacts.predictor("the likability sweep")?;
            let report = likability_sweep(&converter, &predictor, &calib, &codebook, &items, &targets, s)?;
            log::info!("sweep Spearman(target, prediction) {:.4}", report.target_srcc()?);
            run.emit(&report, fmt)?;
        }
        if sel.content {
            let report = content_proxy_eval(&converter, &codebook, &items, &targets, s)?;
            run.emit(&report, fmt)?;
        }
        if sel.similarity {
            let report = similarity_report(&converter, &codebook, &items, &targets, s)?;
            log::info!("similarity EER {:.4}, pass rate {:.3}", report.eer.eer, report.pass_rate());
            run.emit(&report, fmt)?;
        }
    }
    run.finish()
}

fn gradcheck(seed: u64) -> Result<i32> {
    let rows = gradient_suite(seed)?;
    let mut failed = 0;
    for r in &rows {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<12} {:>8} coords  max rel error {:.3e}  {verdict}",
            r.name, r.check.checked, r.check.max_rel_error
        );
        failed += usize::from(!r.passed());
    }
    println!("{} of {} checks below {GRADCHECK_TOLERANCE:e}", rows.len() - failed, rows.len());
    Ok(if failed == 0 { 0 } else { 1 })
}
