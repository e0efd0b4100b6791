use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use framecnl::c60::{save_ruleset, LearnError, LearnerConfig};
use framecnl::corpus::{load_corpus, write_corpus};
use framecnl::eval::{align_files, evaluate, AnnotationFile};
use framecnl::nel::{load_gazetteer, Gazetteer};
use framecnl::parser::{attach_records, load_records, parse_all, write_records, AnnotationRecord, ParserModel};
use framecnl::registry::{load_registry, FrameRegistry};
use framecnl::training::{check_annotations, train_elements, train_targets, TrainOutcome};
use framecnl::verbalizer::{render_profile, roundtrip_model, verbalize, RoundtripConfig};
use framecnl::akr::TemporalStore;
use framecnl::Error;

#[derive(Parser)]
#[command(name = "framecnl", version, about = "Frame-semantic extraction, temporal fact store and CNL verbalization")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Target,
    Fe,
}

#[derive(Subcommand)]
enum Command {
    /// Learn rule files from an annotated corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, value_enum)]
        stage: Stage,
        /// Restrict to these frames (repeatable).
        #[arg(long)]
        frame: Vec<String>,
        /// Model directory; rule files go to `target/` or `fe/` below it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_literals: Option<usize>,
        #[arg(long)]
        min_laplace: Option<f64>,
        #[arg(long)]
        min_coverage: Option<u64>,
    },
    /// Parse a corpus with a trained model into annotation records.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Link and append parsed annotations to a store.
    Ingest {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Facts valid on one day, as JSON lines.
    Query {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        at: NaiveDate,
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Everything known about one entity, one line per instance.
    Profile {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        entity: String,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Accept entities the store does not mention yet.
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Render every stored instance as an annotated corpus.
    Verbalize {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted annotations against gold ones.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        per_frame: bool,
        #[arg(long)]
        json: bool,
    },
    /// Train on generated text and check verbalize → parse → ingest.
    Roundtrip {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        lang: String,
        #[arg(long, default_value_t = RoundtripConfig::default().instances_per_frame)]
        instances_per_frame: usize,
        #[arg(long, default_value_t = RoundtripConfig::default().training_per_frame)]
        training_per_frame: usize,
        /// Also save the trained model here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
}

fn registry(path: Option<&Path>) -> Result<FrameRegistry, Error> {
    match path {
        Some(p) => load_registry(p),
        None => Ok(FrameRegistry::default_registry()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn learner_config(max_literals: Option<usize>, min_laplace: Option<f64>, min_coverage: Option<u64>) -> Result<LearnerConfig, Error> {
    let mut c = LearnerConfig::default();
    if let Some(k) = max_literals {
        c.max_literals = k;
    }
    if let Some(x) = min_laplace {
        c.min_laplace = x;
    }
    if let Some(n) = min_coverage {
        c.min_coverage = n;
    }
    c.validate().map_err(Error::integrity)?;
    Ok(c)
}

fn report_training(outcomes: Vec<TrainOutcome>, dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for o in outcomes {
        match o.result {
            Ok(l) => {
                save_ruleset(dir.join(format!("{}.rules", o.label)), &l.ruleset)?;
                println!("{}\t{} rules\t{} positives\t{} uncovered", o.label, l.ruleset.rules.len(), l.positives, l.uncovered);
            }
            Err(LearnError::NoPositives(_)) => println!("{}\tno positives, skipped", o.label),
            Err(e) => return Err(Error::integrity(format!("{}: {e}", o.label))),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let jobs = cli.jobs;
    match cli.command {
        Command::Train { corpus, registry: reg, stage, frame, out, max_literals, min_laplace, min_coverage } => {
            let reg = registry(reg.as_deref())?;
            let config = learner_config(max_literals, min_laplace, min_coverage)?;
            let sentences = load_corpus(&corpus)?;
            check_annotations(&sentences, &reg).map_err(|m| Error::integrity(format!("{}: {m}", corpus.display())))?;
            for f in &frame {
                if !reg.contains(f) {
                    return Err(Error::integrity(format!("unknown frame `{f}`")));
                }
            }
            let frames = (!frame.is_empty()).then_some(frame.as_slice());
            match stage {
                Stage::Target => report_training(train_targets(&sentences, frames, &config, jobs), &out.join("target")),
                Stage::Fe => report_training(train_elements(&sentences, frames, &config, jobs), &out.join("fe")),
            }
        }
        Command::Parse { model, registry: reg, corpus, out } => {
            let model = ParserModel::load(&model, registry(reg.as_deref())?)?;
            let sentences = load_corpus(&corpus)?;
            let parsed = parse_all(&sentences, &model, jobs);
            let records: Vec<AnnotationRecord> = sentences
                .iter()
                .zip(&parsed)
                .enumerate()
                .flat_map(|(i, (s, anns))| anns.iter().map(move |a| AnnotationRecord::new(&s.doc_id, i, a)))
                .collect();
            write_file(&out, &write_records(&records))?;
            println!("{} annotations in {} sentences", records.len(), sentences.len());
            Ok(())
        }
        Command::Ingest { annotations, corpus, registry: reg, gazetteer, store } => {
            let reg = registry(reg.as_deref())?;
            let gaz = load_gazetteer(&gazetteer)?;
            let mut sentences = load_corpus(&corpus)?;
            let records = load_records(&annotations)?;
            attach_records(&mut sentences, &records)
                .map_err(|m| Error::integrity(format!("{}: {m}", annotations.display())))?;
            let mut st = TemporalStore::open(&store, reg)?;
            let from = st.log().len();
            let (mut new, mut merged) = (0usize, 0usize);
            for (i, s) in sentences.iter().enumerate() {
                for a in &s.annotations {
                    let outcome = st
                        .ingest(a, s, i, &gaz)
                        .map_err(|e| Error::integrity(format!("{} sentence {i}: {e}", s.doc_id)))?;
                    if outcome.merged {
                        merged += 1;
                    } else {
                        new += 1;
                    }
                }
            }
            st.append_log(&store, from)?;
            println!("{new} new, {merged} merged, {} instances", st.len());
            Ok(())
        }
        Command::Query { store, at, registry: reg } => {
            let st = TemporalStore::open(&store, registry(reg.as_deref())?)?;
            for inst in st.facts_at(at) {
                println!("{}", serde_json::to_string(inst).expect("instances serialize"));
            }
            Ok(())
        }
        Command::Profile { store, entity, lang, registry: reg, gazetteer } => {
            let reg = registry(reg.as_deref())?;
            let gaz: Option<Gazetteer> = gazetteer.as_deref().map(load_gazetteer).transpose()?;
            let st = TemporalStore::open(&store, reg)?;
            let profile = st.entity_profile(&entity, gaz.as_ref()).map_err(Error::integrity)?;
            print!("{}", render_profile(&profile, &lang, st.registry()));
            Ok(())
        }
        Command::Verbalize { store, lang, registry: reg, out } => {
            let st = TemporalStore::open(&store, registry(reg.as_deref())?)?;
            let sentences = st
                .instances()
                .iter()
                .map(|i| verbalize(i, &lang, st.registry()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Error::integrity)?;
            let text = write_corpus(&sentences);
            match out {
                Some(p) => write_file(&p, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Eval { gold, pred, per_frame, json } => {
            let g = AnnotationFile::load(&gold)?;
            let p = AnnotationFile::load(&pred)?;
            let (g, p) = align_files(&g, &p);
            let report = evaluate(&g, &p, per_frame).map_err(Error::integrity)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            } else {
                print!("{}", report.render());
            }
            Ok(())
        }
        Command::Roundtrip { registry: reg, lang, instances_per_frame, training_per_frame, model_out } => {
            let reg = registry(reg.as_deref())?;
            let config = RoundtripConfig { instances_per_frame, training_per_frame, jobs, ..RoundtripConfig::default() };
            let (model, report) = roundtrip_model(&reg, &lang, &config).map_err(Error::integrity)?;
            if let Some(dir) = model_out {
                model.save(dir)?;
            }
            print!("{}", report.render());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
