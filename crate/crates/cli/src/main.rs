//! `aud`: command-line front end for the acoustic unit discovery toolkit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use aud_core::audio::{load_wav, write_wav};
use aud_core::cluster::{build_similarity_matrix, cluster, read_clusters, write_clusters};
use aud_core::error::{AudError, Result};
use aud_core::gender::{self, classify_files, pool_frames, train_gender_models, vote_groups, Gender, GenderModelSet};
use aud_core::hmm::{self, init_inventory, self_train, AuInventory, Grammar, Stage, Transcription};
use aud_core::metrics::{bitrate, boundary_metrics, cluster_purity, label_stability, BoundaryScores};
use aud_core::pipeline::{
    build_exemplars, extract_corpus, load_assignment, load_features, load_segments, resynthesize_exemplar, run_pipeline,
    segment_corpus, segment_features, transcribe_corpus, CorpusManifest, PipelineConfig, RunLayout, StageLog,
};
use aud_core::segment::{read_segments, SegmentKind};
use aud_core::{matrix, ClusterAssignment};

#[derive(Parser)]
#[command(name = "aud", about = "Unsupervised acoustic unit discovery")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML pipeline configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(p) => PipelineConfig::load(p),
            None => Ok(PipelineConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Syllable-like segmentation of every utterance.
    Segment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// DTW similarity and mutual-kNN clustering of the syllable segments.
    Cluster {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Neighbourhood size; chosen automatically when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Also dump the similarity matrix as an AUDF file.
        #[arg(long)]
        similarity: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Initial HMM inventory from the clusters.
    Init {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Alternate Viterbi training and re-transcription until the labels settle.
    Selftrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Segment directory; stage 1 trains on the syllable segments.
        #[arg(long, required_if_eq("stage", "1"))]
        segments: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Convergence report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode every utterance into one symbol file per utterance.
    Transcribe {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "free-loop")]
        grammar: GrammarArg,
        #[command(flatten)]
        common: Common,
    },
    /// Train gender models (`--train`) or classify files with them (`--models`).
    Gender {
        #[arg(long)]
        manifest: PathBuf,
        /// Train from `file_id<TAB>m|f` labels and write the models to `--out`.
        #[arg(long, requires = "labels", conflicts_with = "models")]
        train: bool,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, required_unless_present = "train")]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluation reports.
    Eval {
        #[command(subcommand)]
        metric: Metric,
        /// Print JSON instead of the plain-text report.
        #[arg(long, global = true)]
        json: bool,
    },
    /// Every stage in order, resuming from a previous run in the same directory.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Exemplar-concatenation audio from the transcriptions of a finished run.
    Resynth {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Utterances to render; all when omitted.
        #[arg(long = "utt")]
        utterances: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Subcommand)]
enum Metric {
    /// Symbol rate times unigram entropy.
    Bitrate {
        #[arg(long)]
        transcriptions: PathBuf,
        /// Durations are read from these WAV files.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        exclude_silence: bool,
    },
    /// Boundary precision, recall and F1 of a segmentation against a reference.
    Boundaries {
        #[arg(long)]
        hypothesis: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        tolerance_ms: f64,
    },
    /// Cluster purity against `segment_id<TAB>label` truth.
    Purity {
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Fraction of frames with the same symbol in two aligned transcription sets.
    Stability {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, ValueEnum)]
enum GrammarArg {
    FreeLoop,
    ClusterTriplet,
}

impl From<GrammarArg> for Grammar {
    fn from(g: GrammarArg) -> Self {
        match g {
            GrammarArg::FreeLoop => Grammar::FreeLoop,
            GrammarArg::ClusterTriplet => Grammar::ClusterTriplet,
        }
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Segment { .. } => "segment",
            Command::Cluster { .. } => "cluster",
            Command::Init { .. } => "init",
            Command::Selftrain { .. } => "selftrain",
            Command::Transcribe { .. } => "transcribe",
            Command::Gender { .. } => "gender",
            Command::Eval { .. } => "eval",
            Command::Run { .. } => "run",
            Command::Resynth { .. } => "resynth",
        }
    }
}

fn version_text() -> String {
    format!(
        "{} (inventory schema {}, gender model schema {}, feature matrix {})",
        aud_core::VERSION,
        hmm::SCHEMA_VERSION,
        gender::SCHEMA_VERSION,
        String::from_utf8_lossy(matrix::MAGIC)
    )
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AudError + '_ {
    move |e| AudError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn emit(json: bool, value: &impl serde::Serialize, text: String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{text}");
    }
    Ok(())
}

fn syllables(manifest: &CorpusManifest, segments: &Path, cfg: &PipelineConfig) -> Result<Vec<(String, aud_core::FeatureSequence)>> {
    let features = extract_corpus(manifest, &cfg.features)?;
    let segs = load_segments(segments, manifest.ids())?;
    segment_features(&features, &segs, SegmentKind::Syllable)
}

/// `id<TAB>value` rows; blank and `#` lines skipped.
fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(n, l)| {
            let (a, b) = l.split_once('\t').ok_or_else(|| AudError::Parse {
                context: path.display().to_string(),
                message: format!("line {}: expected two tab-separated columns", n + 1),
            })?;
            Ok((a.to_string(), b.trim().to_string()))
        })
        .collect()
}

/// Utterance ids with a `<id>.txt` file in `dir`, sorted.
fn transcription_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".txt")).map(str::to_string))
        .collect();
    ids.sort();
    Ok(ids)
}

fn read_transcriptions(dir: &Path, ids: &[String]) -> Result<Vec<Transcription>> {
    ids.iter().map(|id| Transcription::read(dir, id)).collect()
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Segment { manifest, out, common } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            segment_corpus(&manifest, &cfg.segmentation, &out, &mut StageLog::default())?;
            print!("{}", fs::read_to_string(out.join("summary.txt")).map_err(io_err(&out))?);
        }
        Command::Cluster {
            manifest,
            segments,
            out,
            k,
            similarity,
            common,
        } => {
            let mut cfg = common.load()?;
            if k.is_some() {
                cfg.clustering.k = k;
            }
            let manifest = CorpusManifest::load(manifest)?;
            let syll = syllables(&manifest, &segments, &cfg)?;
            let sim = build_similarity_matrix(&syll, &cfg.clustering.dtw)?;
            let assignment = cluster(&sim, &cfg.clustering)?;
            if let Some(p) = similarity {
                sim.to_matrix()?.write(p)?;
            }
            let ids: Vec<String> = syll.into_iter().map(|(id, _)| id).collect();
            write_clusters(&out, &ids, &assignment)?;
            println!(
                "segments\t{}\nk\t{}\nclusters\t{}\nassigned\t{}",
                ids.len(),
                assignment.k_neighbors,
                assignment.n_clusters,
                assignment.assigned()
            );
        }
        Command::Init {
            manifest,
            segments,
            clusters,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            let features = extract_corpus(&manifest, &cfg.features)?;
            let segs = load_segments(&segments, manifest.ids())?;
            let syll = segment_features(&features, &segs, SegmentKind::Syllable)?;
            let sil = segment_features(&features, &segs, SegmentKind::Silence)?;
            let ids: Vec<String> = syll.iter().map(|(id, _)| id.clone()).collect();
            let assignment = load_assignment(&clusters, &ids)?;
            let seqs: Vec<_> = syll.into_iter().map(|(_, f)| f).collect();
            let sil: Vec<_> = sil.into_iter().map(|(_, f)| f).collect();
            let inv = init_inventory(&assignment, &seqs, &sil, &cfg.init)?;
            inv.save(&out)?;
            println!("units\t{}\nclusters\t{}", inv.len(), inv.clusters.len());
        }
        Command::Selftrain {
            manifest,
            inventory,
            stage,
            segments,
            out,
            report,
            common,
        } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            let inv = AuInventory::load(inventory)?;
            let (stage, corpus, st) = match (stage, segments) {
                (StageArg::One, Some(seg)) => (Stage::Stage1Syllables, syllables(&manifest, &seg, &cfg)?, &cfg.stage1),
                (StageArg::One, None) => return Err(AudError::Missing("--segments for stage 1".into())),
                (StageArg::Two, _) => (Stage::Stage2Continuous, extract_corpus(&manifest, &cfg.features)?, &cfg.stage2),
            };
            let (inv, _, rep) = self_train(&inv, &corpus, stage, st)?;
            inv.save(&out)?;
            if let Some(p) = report {
                write_file(&p, &(serde_json::to_string_pretty(&rep)? + "\n"))?;
            }
            for it in &rep.iterations {
                println!("{}\t{:.6}\t{:.6}", it.iteration, it.log_likelihood, it.change_fraction);
            }
            println!("stop\t{:?}\npasses\t{}\nconverged\t{}", rep.stop, rep.passes, rep.converged);
        }
        Command::Transcribe {
            manifest,
            inventory,
            out,
            grammar,
            common,
        } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            let inv = AuInventory::load(inventory)?;
            let features = extract_corpus(&manifest, &cfg.features)?;
            let trans = transcribe_corpus(&inv, &features, grammar.into(), &out)?;
            let warned = trans.iter().filter(|t| t.warning).count();
            println!("utterances\t{}\nbest_effort\t{warned}", trans.len());
        }
        Command::Gender {
            manifest,
            train,
            labels,
            models,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            let gcfg = cfg.seeded_gender();
            if train {
                let labels: BTreeMap<String, Gender> = read_pairs(labels.as_deref().expect("clap enforces --labels"))?
                    .into_iter()
                    .map(|(id, l)| Ok((id, l.parse()?)))
                    .collect::<Result<_>>()?;
                let feats = extract_corpus(&manifest, &gcfg.features)?;
                let mut male = Vec::new();
                let mut female = Vec::new();
                for (id, f) in &feats {
                    match labels.get(id) {
                        Some(Gender::Male) => male.push(f),
                        Some(Gender::Female) => female.push(f),
                        None => return Err(AudError::Missing(format!("gender label for {id}"))),
                    }
                }
                let set = train_gender_models(&pool_frames(male), &pool_frames(female), &gcfg)?;
                set.save(&out)?;
                println!("components\t{}\nrelevance\t{}", set.ubm.n_components(), set.relevance_factor);
            } else {
                let set = GenderModelSet::load(models.as_deref().expect("clap enforces --models"))?;
                let feats = extract_corpus(&manifest, &set.features)?;
                let decisions = classify_files(&set, &feats)?;
                let groups: Vec<String> = manifest.entries.iter().map(|e| e.group_key().to_string()).collect();
                let votes = vote_groups(&decisions, &groups)?;
                let mut text: String = decisions
                    .iter()
                    .map(|d| format!("{}\t{:.6}\t{}\n", d.file_id, d.llr, d.label))
                    .collect();
                let mut summary = String::from("# speaker\tlabel\tfiles\n");
                for (g, label) in &votes {
                    let n = groups.iter().filter(|x| *x == g).count();
                    summary.push_str(&format!("# {g}\t{label}\t{n}\n"));
                }
                text.push_str(&summary);
                write_file(&out, &text)?;
                print!("{summary}");
            }
        }
        Command::Eval { metric, json } => eval(metric, json)?,
        Command::Run { manifest, out, common } => {
            let cfg = common.load()?;
            let manifest = CorpusManifest::load(manifest)?;
            let s = run_pipeline(&manifest, &cfg, &out)?;
            for (stage, outcome) in &s.stages {
                println!("{stage}\t{outcome:?}");
            }
            println!(
                "clusters\t{}\nunits\t{}\nstage1\t{:?} after {} passes\nstage2\t{:?} after {} passes\nbitrate\t{:.4}",
                s.n_clusters, s.inventory_size, s.stage1.stop, s.stage1.passes, s.stage2.stop, s.stage2.passes, s.bitrate.bitrate
            );
        }
        Command::Resynth {
            run,
            out,
            utterances,
            common,
        } => {
            let cfg = match common.config {
                Some(_) => common.load()?,
                None => PipelineConfig::load(run.join("config.toml"))?,
            };
            let layout = RunLayout::new(&run);
            let manifest = CorpusManifest::load(run.join("manifest.tsv"))?;
            let inv = AuInventory::load(layout.inventory("stage2"))?;
            let ids: Vec<String> = manifest.ids().map(str::to_string).collect();
            let trans = read_transcriptions(&layout.transcriptions(), &ids)?;
            let features = load_features(&layout.features(), manifest.ids(), &cfg.features.frame)?;
            let store = build_exemplars(&manifest, &trans, &features, &cfg.features.frame)?;
            store.save(out.join("exemplars"))?;
            let wanted: Vec<&Transcription> = if utterances.is_empty() {
                trans.iter().collect()
            } else {
                utterances
                    .iter()
                    .map(|u| {
                        trans
                            .iter()
                            .find(|t| &t.utterance_id == u)
                            .ok_or_else(|| AudError::Missing(format!("transcription for {u}")))
                    })
                    .collect::<Result<_>>()?
            };
            for t in &wanted {
                let audio = resynthesize_exemplar(t, &inv, &store)?;
                write_wav(out.join(format!("{}.wav", t.utterance_id)), &audio)?;
            }
            println!("exemplars\t{}\nrendered\t{}", store.exemplars.len(), wanted.len());
        }
    }
    Ok(())
}

fn eval(metric: Metric, json: bool) -> Result<()> {
    match metric {
        Metric::Bitrate {
            transcriptions,
            manifest,
            exclude_silence,
        } => {
            let manifest = CorpusManifest::load(manifest)?;
            let ids: Vec<String> = manifest.ids().map(str::to_string).collect();
            let trans = read_transcriptions(&transcriptions, &ids)?;
            let duration = manifest
                .entries
                .iter()
                .map(|e| Ok(load_wav(&e.path)?.duration()))
                .sum::<Result<f64>>()?;
            let r = bitrate(&trans, duration, exclude_silence)?;
            let text = format!(
                "symbols\t{}\nduration_s\t{:.6}\nentropy_bits\t{:.6}\nbitrate\t{:.6}\n",
                r.n_symbols, r.total_duration, r.entropy_bits, r.bitrate
            );
            emit(json, &r, text)
        }
        Metric::Boundaries {
            hypothesis,
            reference,
            tolerance_ms,
        } => {
            let mut per = BTreeMap::new();
            for name in segment_files(&hypothesis)? {
                let id = name.trim_end_matches(".tsv");
                let hyp = read_segments(hypothesis.join(&name), id)?;
                let rf = read_segments(reference.join(&name), id)?;
                per.insert(id.to_string(), boundary_metrics(&hyp, &rf, tolerance_ms));
            }
            if per.is_empty() {
                return Err(AudError::EmptyInput(format!("no segment files in {}", hypothesis.display())));
            }
            let total = BoundaryScores::pooled(per.values());
            let text = format!(
                "utterances\t{}\nprecision\t{:.6}\nrecall\t{:.6}\nf1\t{:.6}\nmatched\t{}\nhypothesized\t{}\nreference\t{}\n",
                per.len(),
                total.precision,
                total.recall,
                total.f1,
                total.matched,
                total.hypothesized,
                total.reference
            );
            emit(json, &serde_json::json!({ "total": total, "utterances": per }), text)
        }
        Metric::Purity { clusters, truth } => {
            let rows = read_clusters(&clusters)?;
            let truth: BTreeMap<String, String> = read_pairs(&truth)?.into_iter().collect();
            let labels = rows
                .iter()
                .map(|(id, l)| match (l, truth.get(id)) {
                    (None, _) => Ok(String::new()),
                    (Some(_), Some(t)) => Ok(t.clone()),
                    (Some(_), None) => Err(AudError::Missing(format!("truth label for {id}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let labs: Vec<Option<usize>> = rows.iter().map(|(_, l)| *l).collect();
            let n_clusters = labs.iter().flatten().max().map_or(0, |m| m + 1);
            let assignment = ClusterAssignment {
                labels: labs,
                k_neighbors: 0,
                n_clusters,
            };
            let p = cluster_purity(&assignment, &labels)?;
            let value = serde_json::json!({
                "purity": p,
                "clusters": n_clusters,
                "assigned": assignment.assigned(),
                "segments": rows.len(),
            });
            let text = format!(
                "purity\t{p:.6}\nclusters\t{n_clusters}\nassigned\t{}\nsegments\t{}\n",
                assignment.assigned(),
                rows.len()
            );
            emit(json, &value, text)
        }
        Metric::Stability { before, after } => {
            let ids = transcription_ids(&before)?;
            let s = label_stability(&read_transcriptions(&before, &ids)?, &read_transcriptions(&after, &ids)?)?;
            emit(
                json,
                &serde_json::json!({ "stability": s, "utterances": ids.len() }),
                format!("stability\t{s:.6}\nutterances\t{}\n", ids.len()),
            )
        }
    }
}

fn segment_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .filter(|n| n.ends_with(".tsv"))
        .collect();
    names.sort();
    Ok(names)
}

fn main() -> ExitCode {
    let matches = Cli::command().version(version_text()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let name = cli.command.name();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let e = e.in_stage(name);
            eprintln!("aud: {e}");
            ExitCode::FAILURE
        }
    }
}
