//! The five pipeline commands: simulate, fit, train, evaluate, act.

use std::path::{Path, PathBuf};

use banditkit::data::{parse_events, parse_feature_list, write_events, ActionCatalog, Dataset, EventsFile};
use banditkit::estimator::{evaluate_policy, evaluate_random_baseline, EstimatorConfig, ValueEstimate};
use banditkit::learner::{
    parse_model, select_model, train_naive, write_model, ArgmaxPolicy, CatalogPolicy, ModelMeta,
    SweepReport, TrainConfig,
};
use banditkit::propensity::{FitScope, PropensityTable};
use banditkit::simworld::{log_events, PolicySequence, SyntheticWorld};
use banditkit::{Error, Result};

use crate::manifest::RunManifest;
use crate::util::{read_file, thread_count};

/// Which part of a marked events file a command consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    All,
    Train,
    Test,
}

impl std::str::FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!(
                "unknown segment {other:?} (expected all, train, or test)"
            ))),
        }
    }
}

fn pick_segment(file: &EventsFile, segment: Segment) -> Result<Dataset> {
    match segment {
        Segment::All => Ok(file.dataset.clone()),
        Segment::Train => file.train(),
        Segment::Test => file.test(),
    }
}

fn load_events(path: &Path, catalog_path: Option<&Path>) -> Result<(EventsFile, ActionCatalog)> {
    let file_catalog = match catalog_path {
        Some(p) => Some(ActionCatalog::parse(&read_file(p)?).map_err(|e| prefix(p, e))?),
        None => None,
    };
    let text = read_file(path)?;
    let events = parse_events(&text, file_catalog.as_ref()).map_err(|e| prefix(path, e))?;
    let mut catalog = ActionCatalog::from_dataset(&events.dataset);
    if let Some(extra) = &file_catalog {
        catalog.absorb(extra);
    }
    Ok((events, catalog))
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub struct SimulateArgs {
    pub world: PathBuf,
    pub seq: PathBuf,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub split_at: Option<usize>,
    pub out: PathBuf,
    pub catalog_out: Option<PathBuf>,
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::start("simulate");
    manifest.input(&args.world)?;
    manifest.input(&args.seq)?;
    let world = SyntheticWorld::parse(&read_file(&args.world)?).map_err(|e| prefix(&args.world, e))?;
    let seq = PolicySequence::parse(&read_file(&args.seq)?, &world).map_err(|e| prefix(&args.seq, e))?;
    let seq = match args.rounds {
        Some(0) => return Err(Error::Config("--rounds must be >= 1".into())),
        Some(rounds) => seq.cycled(rounds)?,
        None => seq,
    };
    if let Some(at) = args.split_at {
        if at > seq.len() {
            return Err(Error::Config(format!(
                "--split-at {at} exceeds the {} simulated rounds",
                seq.len()
            )));
        }
    }
    manifest.config("seed", args.seed);
    manifest.config("rounds", seq.len());
    if let Some(at) = args.split_at {
        manifest.config("split_at", at);
    }
    let data = log_events(&world, &seq, args.seed);
    manifest.write_output(&args.out, &write_events(&data, args.split_at))?;
    if let Some(catalog_out) = &args.catalog_out {
        manifest.write_output(catalog_out, &world.catalog().to_text())?;
    }
    manifest.finish(&args.out)?;
    println!("simulated\t{}\tevents\t{}", args.out.display(), data.len());
    Ok(())
}

pub struct FitArgs {
    pub events: PathBuf,
    pub catalog: Option<PathBuf>,
    pub scope: FitScope,
    pub out: PathBuf,
}

pub fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut manifest = RunManifest::start("fit");
    manifest.input(&args.events)?;
    if let Some(c) = &args.catalog {
        manifest.input(c)?;
    }
    let (file, _) = load_events(&args.events, args.catalog.as_deref())?;
    let (scope_name, data) = match args.scope {
        FitScope::All => ("all", file.dataset.clone()),
        FitScope::Train => ("train", file.train()?),
        FitScope::Split => ("split", file.test()?),
    };
    manifest.config("scope", scope_name);
    let table = PropensityTable::fit_empirical(&data)?;
    manifest.write_output(&args.out, &table.to_text())?;
    manifest.finish(&args.out)?;
    println!(
        "fitted\t{}\tcontexts\t{}\tevents\t{}",
        args.out.display(),
        table.contexts().count(),
        data.len()
    );
    Ok(())
}

pub struct TrainArgs {
    pub events: PathBuf,
    pub table: PathBuf,
    pub catalog: Option<PathBuf>,
    pub tau: f64,
    pub learning_rates: Vec<f64>,
    pub passes: usize,
    pub seed: u64,
    pub naive: bool,
    pub unweighted: bool,
    pub segment: Segment,
    pub out: PathBuf,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::start("train");
    manifest.input(&args.events)?;
    manifest.input(&args.table)?;
    if let Some(c) = &args.catalog {
        manifest.input(c)?;
    }
    let (file, _) = load_events(&args.events, args.catalog.as_deref())?;
    let data = pick_segment(&file, args.segment)?;
    let table = PropensityTable::parse(&read_file(&args.table)?).map_err(|e| prefix(&args.table, e))?;

    let mut cfg = TrainConfig::new(args.tau);
    cfg.learning_rates = args.learning_rates.clone();
    cfg.passes = args.passes;
    cfg.seed = args.seed;
    cfg.weighted = !args.unweighted && !args.naive;
    if args.naive && !args.unweighted {
        // The naive baseline is unweighted by definition.
        eprintln!("warning: --naive forces unweighted training; importance weights are ignored");
    }

    manifest.config("tau", args.tau);
    manifest.config(
        "learning_rates",
        args.learning_rates
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.config("passes", args.passes);
    manifest.config("seed", args.seed);
    manifest.config("mode", if args.naive { "naive" } else { "weighted-feasible" });

    let threads = thread_count();
    let report: SweepReport = if args.naive {
        let (_, report) = train_naive(&data, &cfg, threads)?;
        report
    } else {
        select_model(&data, &table, &cfg, threads)?
    };
    for cand in &report.candidates {
        match cand.train_error {
            Some(err) => println!("candidate\t{}\t{err:.9}", cand.learning_rate),
            None => println!("candidate\t{}\tdiverged", cand.learning_rate),
        }
    }
    println!("selected\t{}\t{:.9}", report.learning_rate, report.train_error);
    let meta = ModelMeta {
        tau: args.tau,
        learning_rate: report.learning_rate,
        passes: args.passes,
    };
    manifest.write_output(&args.out, &write_model(&report.model, &meta))?;
    manifest.finish(&args.out)?;
    Ok(())
}

/// How a policy is specified on the evaluate command line.
pub enum PolicySpec {
    Random,
    Model(PathBuf),
    Naive(PathBuf),
}

impl PolicySpec {
    pub fn parse(raw: &str) -> Self {
        if raw == "random" {
            Self::Random
        } else if let Some(path) = raw.strip_prefix("model:") {
            Self::Model(PathBuf::from(path))
        } else if let Some(path) = raw.strip_prefix("naive:") {
            Self::Naive(PathBuf::from(path))
        } else {
            Self::Model(PathBuf::from(raw))
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Self::Random => "Random",
            Self::Model(_) => "Learned",
            Self::Naive(_) => "Naive",
        }
    }

    fn path(&self) -> Option<&Path> {
        match self {
            Self::Random => None,
            Self::Model(p) | Self::Naive(p) => Some(p),
        }
    }
}

pub struct EvaluateArgs {
    pub events: PathBuf,
    pub table: PathBuf,
    pub catalog: Option<PathBuf>,
    pub policies: Vec<PolicySpec>,
    pub tau: f64,
    pub delta: f64,
    pub seed: u64,
    pub segment: Segment,
    pub out: Option<PathBuf>,
}

fn report_row(method: &str, est: &ValueEstimate) -> String {
    format!(
        "{method}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
        est.tau, est.delta, est.t, est.point, est.ci_low, est.ci_high
    )
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg = EstimatorConfig::new(args.tau, args.delta)?;
    if args.policies.is_empty() {
        return Err(Error::Config("at least one --policy is required".into()));
    }
    let mut manifest = RunManifest::start("evaluate");
    manifest.input(&args.events)?;
    manifest.input(&args.table)?;
    if let Some(c) = &args.catalog {
        manifest.input(c)?;
    }
    for spec in &args.policies {
        if let Some(path) = spec.path() {
            manifest.input(path)?;
        }
    }
    manifest.config("tau", args.tau);
    manifest.config("delta", args.delta);
    manifest.config("seed", args.seed);

    let (file, catalog) = load_events(&args.events, args.catalog.as_deref())?;
    let data = pick_segment(&file, args.segment)?;
    let table = PropensityTable::parse(&read_file(&args.table)?).map_err(|e| prefix(&args.table, e))?;

    let mut report = String::from("method\ttau\tdelta\tT\testimate\tci_low\tci_high\n");
    for spec in &args.policies {
        let est = match spec {
            PolicySpec::Random => evaluate_random_baseline(&data, &table, cfg, args.seed)?,
            PolicySpec::Model(path) | PolicySpec::Naive(path) => {
                let (model, _) = parse_model(&read_file(path)?).map_err(|e| prefix(path, e))?;
                let policy = if matches!(spec, PolicySpec::Model(_)) {
                    ArgmaxPolicy::feasible(model)
                } else {
                    ArgmaxPolicy::naive(model)
                };
                let bridged = CatalogPolicy {
                    policy: &policy,
                    catalog: &catalog,
                    table: &table,
                };
                evaluate_policy(&data, &bridged, &table, cfg)?
            }
        };
        report.push_str(&report_row(spec.label(), &est));
        report.push('\n');
    }
    print!("{report}");
    if let Some(out) = &args.out {
        manifest.write_output(out, &report)?;
        manifest.finish(out)?;
    }
    Ok(())
}

pub struct ActArgs {
    pub model: PathBuf,
    pub catalog: PathBuf,
    pub context: String,
    pub candidates: Option<Vec<String>>,
}

pub fn cmd_act(args: ActArgs) -> Result<()> {
    let (model, _) = parse_model(&read_file(&args.model)?).map_err(|e| prefix(&args.model, e))?;
    let catalog = ActionCatalog::parse(&read_file(&args.catalog)?).map_err(|e| prefix(&args.catalog, e))?;
    let context = parse_feature_list(&args.context)?;
    let policy = ArgmaxPolicy::feasible(model);

    let candidates: Vec<(String, banditkit::SparseVector)> = match &args.candidates {
        Some(ids) => ids
            .iter()
            .map(|id| {
                catalog
                    .get(id)
                    .map(|f| (id.clone(), f.clone()))
                    .ok_or_else(|| Error::Format(format!("candidate {id:?} not in catalog")))
            })
            .collect::<Result<_>>()?,
        None => catalog.iter().map(|(id, f)| (id.to_string(), f.clone())).collect(),
    };
    for (id, features) in &candidates {
        println!("score\t{id}\t{:.9}", policy.model.predict(&context, features));
    }
    let chosen = policy.act(&context, candidates.iter().map(|(id, f)| (id.as_str(), f)))?;
    println!("chosen\t{chosen}");
    Ok(())
}
