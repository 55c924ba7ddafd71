//! Command-line front end. Every command writes machine-readable output to
//! the given writer and reports failures as a [`CliError`] with a named
//! class and an exit code: 0 ok, 1 internal, 2 input, 3 capacity/budget.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use storyweave::config::{ConfigError, EngineConfigFile};
use storyweave::data::{load_dataset, recommend_facts, Dataset, FactEngine, FieldSchema};
use storyweave::embed::{export_embedding_table, ReferenceEmbedder};
use storyweave::fact::{parse_fact_spec, Rule};
use storyweave::interp::{exhaustive_oracle, interpolate_with};
use storyweave::story::{Story, StoryDocument, StoryForm, StoryPiece};
use storyweave::{DataError, DataFact, EmbedError, Filter, InterpolationError, ParseError, Subspace};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{class}: {message}")]
    Input { class: &'static str, message: String },
    #[error("CapacityError: {0}")]
    Capacity(String),
    #[error("InternalError: {0:#}")]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    fn input(class: &'static str, message: impl Into<String>) -> Self {
        CliError::Input {
            class,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Capacity(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Input { class, .. } => class,
            CliError::Capacity(_) => "CapacityError",
            CliError::Internal(_) => "InternalError",
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let class = match &e {
            DataError::EmptyDataset => "EmptyDataset",
            DataError::Format { .. } => "FormatError",
            DataError::Schema(_) => "SchemaError",
            DataError::Domain { .. } => "DomainError",
            DataError::Type(_) => "TypeError",
            DataError::Capacity { .. } => return CliError::Capacity(e.to_string()),
            DataError::Invalid(report) if report.has(Rule::UnknownField) => "SchemaError",
            DataError::Invalid(_) => "ValidationError",
        };
        CliError::input(class, e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::input("ParseError", e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::input("ConfigError", e.to_string())
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Fact(_) => CliError::input("ValidationError", e.to_string()),
            EmbedError::Config(_) => CliError::input("ConfigError", e.to_string()),
            _ => CliError::Internal(e.into()),
        }
    }
}

impl From<InterpolationError> for CliError {
    fn from(e: InterpolationError) -> Self {
        match e {
            InterpolationError::DegenerateKeyframes | InterpolationError::DegenerateDirection => {
                CliError::input("DegenerateKeyframes", e.to_string())
            }
            InterpolationError::InvalidKeyframe(report) => DataError::Invalid(report).into(),
            InterpolationError::Config(_) => CliError::input("ConfigError", e.to_string()),
            InterpolationError::Data(d) => d.into(),
            InterpolationError::Embed(_) | InterpolationError::Dimension { .. } => CliError::Internal(e.into()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "storyweave", version, about = "Data facts, interpolation and stories from the command line")]
pub struct Cli {
    /// Engine configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a CSV and print its schema.
    Ingest { csv: PathBuf },
    /// Check a fact against a dataset. The fact is inline JSON or a file.
    Validate { csv: PathBuf, fact: String },
    /// Fill the gaps between successive keyframes with intermediate facts.
    Interpolate {
        csv: PathBuf,
        /// JSON array of fact specs, in story order.
        keyframes: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Most significant facts of a dataset.
    Recommend {
        csv: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Restrict to subspaces containing `Field=Value;Other=Value`.
        #[arg(long)]
        filters: Option<String>,
    },
    /// Exact best assignment of enumerated facts to the cut points.
    Oracle {
        csv: PathBuf,
        keyframes: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        title: Option<String>,
    },
    /// Write the embedding table of the given facts.
    Embed {
        csv: PathBuf,
        #[arg(required = true)]
        facts: Vec<String>,
        /// Output file; the table goes to stdout when omitted.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Render a story document.
    Export {
        document: PathBuf,
        #[arg(long, value_parser = parse_form)]
        form: Option<StoryForm>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Markdown,
}

fn parse_form(s: &str) -> Result<StoryForm, String> {
    s.parse()
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input("IoError", format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read(path)?)
        .map_err(|_| CliError::input("FormatError", format!("{} is not UTF-8", path.display())))
}

fn dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(load_dataset(&read(path)?)?)
}

/// A fact given inline as JSON or as the path of a fact-spec file.
fn fact_arg(arg: &str) -> Result<DataFact, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    Ok(parse_fact_spec(&text)?)
}

fn keyframes(path: &Path) -> Result<Vec<DataFact>, CliError> {
    let facts: Vec<DataFact> = serde_json::from_str(&read_text(path)?).map_err(|e| {
        CliError::input("ParseError", format!("{}: {e}", path.display()))
    })?;
    if facts.len() < 2 {
        return Err(CliError::input(
            "ParseError",
            format!("{}: need at least two keyframes, got {}", path.display(), facts.len()),
        ));
    }
    Ok(facts)
}

fn parse_filters(ds: &Dataset, text: &str) -> Result<Subspace, CliError> {
    let mut filters = Vec::new();
    for part in text.split(';').filter(|p| !p.is_empty()) {
        let (field, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::input("ParseError", format!("filter `{part}` is not Field=Value")))?;
        if ds.field(field).is_none() {
            return Err(CliError::input("SchemaError", format!("unknown field `{field}`")));
        }
        filters.push(Filter::new(field, value));
    }
    Ok(Subspace::new(filters))
}

fn title_of(title: Option<String>, csv: &Path) -> String {
    title.unwrap_or_else(|| {
        csv.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "story".into())
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).context("serializing output")?;
    writeln!(out, "{text}").context("writing output")?;
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Summary<'a> {
    dataset_id: &'a str,
    row_count: usize,
    schema: &'a [FieldSchema],
}

/// Keyframes in order, with the facts `fill` returns for each successive
/// pair inserted between them.
fn story_of(
    ds: &Dataset,
    title: String,
    keys: &[DataFact],
    mut fill: impl FnMut(&DataFact, &DataFact) -> Result<Vec<DataFact>, CliError>,
) -> Result<Story, CliError> {
    let mut story = Story::new("cli", title, ds.id());
    for (i, key) in keys.iter().enumerate() {
        story.pieces.push(StoryPiece::keyframe(key.clone()));
        if let Some(next) = keys.get(i + 1) {
            for fact in fill(key, next)? {
                story.pieces.push(StoryPiece {
                    provenance: storyweave::story::Provenance::Interpolated,
                    fact: Some(fact),
                    caption: None,
                });
            }
        }
    }
    Ok(story)
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => EngineConfigFile::load(path)?,
        None => EngineConfigFile::default(),
    };
    match cli.command {
        Command::Ingest { csv } => {
            let ds = dataset(&csv)?;
            write_json(
                out,
                &Summary {
                    dataset_id: ds.id(),
                    row_count: ds.row_count(),
                    schema: ds.schema(),
                },
            )
        }
        Command::Validate { csv, fact } => {
            let ds = dataset(&csv)?;
            let fact = fact_arg(&fact)?;
            let report = FactEngine::new(&ds, config.data.clone()).validate(&fact);
            write_json(out, &report)?;
            if report.valid {
                Ok(())
            } else {
                Err(DataError::Invalid(report).into())
            }
        }
        Command::Interpolate {
            csv,
            keyframes: kf,
            n,
            seed,
            title,
        } => {
            let ds = dataset(&csv)?;
            let keys = keyframes(&kf)?;
            if let Some(n) = n {
                config.interpolation.n = n;
            }
            if let Some(seed) = seed {
                config.interpolation.rng_seed = seed;
            }
            let embedder = ReferenceEmbedder::new(config.embedder.clone())?;
            let engine = FactEngine::new(&ds, config.data.clone());
            let story = story_of(&ds, title_of(title, &csv), &keys, |fs, ft| {
                let result = interpolate_with(&engine, fs, ft, &config.interpolation, &embedder)?;
                for w in &result.warnings {
                    let _ = writeln!(err, "warning: {w}");
                }
                Ok(result.facts)
            })?;
            let doc = StoryDocument::build(&story, &engine, StoryForm::Storyline);
            writeln!(out, "{}", doc.to_json()).context("writing output")?;
            Ok(())
        }
        Command::Recommend { csv, k, filters } => {
            let ds = dataset(&csv)?;
            let filters = filters.map(|f| parse_filters(&ds, &f)).transpose()?;
            write_json(out, &recommend_facts(&ds, k, filters.as_ref(), &config.data))
        }
        Command::Oracle {
            csv,
            keyframes: kf,
            n,
            title,
        } => {
            let ds = dataset(&csv)?;
            let keys = keyframes(&kf)?;
            let n = n.unwrap_or(config.interpolation.n);
            let embedder = ReferenceEmbedder::new(config.embedder.clone())?;
            let engine = FactEngine::new(&ds, config.data.clone());
            let story = story_of(&ds, title_of(title, &csv), &keys, |fs, ft| {
                let o = exhaustive_oracle(&ds, fs, ft, n, &embedder, &config.data, &config.data.caps)?;
                let _ = writeln!(
                    err,
                    "oracle: {} candidates, cost {:.6}, reward {:.6}",
                    o.candidates, o.cost, o.reward
                );
                Ok(o.facts)
            })?;
            let doc = StoryDocument::build(&story, &engine, StoryForm::Storyline);
            writeln!(out, "{}", doc.to_json()).context("writing output")?;
            Ok(())
        }
        Command::Embed { csv, facts, table } => {
            let ds = dataset(&csv)?;
            let engine = FactEngine::new(&ds, config.data.clone());
            let facts = facts.iter().map(|a| fact_arg(a)).collect::<Result<Vec<_>, _>>()?;
            for fact in &facts {
                let report = engine.validate(fact);
                if !report.valid {
                    return Err(DataError::Invalid(report).into());
                }
            }
            let embedder = ReferenceEmbedder::new(config.embedder.clone())?;
            let text = export_embedding_table(&facts, &embedder)?;
            match table {
                Some(path) => {
                    std::fs::write(&path, &text)
                        .map_err(|e| CliError::input("IoError", format!("{}: {e}", path.display())))?;
                    write_json(
                        out,
                        &serde_json::json!({
                            "table": path,
                            "dim": config.embedder.dimension,
                            "entries": text.lines().count() - 1,
                        }),
                    )
                }
                None => {
                    out.write_all(text.as_bytes()).context("writing output")?;
                    Ok(())
                }
            }
        }
        Command::Export {
            document,
            form,
            format,
        } => {
            let doc: StoryDocument = serde_json::from_str(&read_text(&document)?)
                .map_err(|e| CliError::input("ParseError", format!("{}: {e}", document.display())))?;
            let doc = match form {
                Some(f) => doc.with_form(f),
                None => doc,
            };
            let text = match format {
                Format::Json => doc.to_json() + "\n",
                Format::Markdown => doc.render_markdown(),
            };
            out.write_all(text.as_bytes()).context("writing output")?;
            Ok(())
        }
    }
}
