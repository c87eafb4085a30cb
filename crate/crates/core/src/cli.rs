//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::calibration::{auc, op_point, CalibrationParams, ScoredSet};
use crate::composition::{filter_views, merge, relabel, subset, unique_patient_indices, Predicate};
use crate::covariate::{
    build_covariate, class_mean_difference, CovariateParams, CovariateSpec, DifferenceImage, Mode, Target,
};
use crate::dataset::{Dataset, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::image::{write_png, PIXEL_MAX, PIXEL_MIN};
use crate::ingestion::{load_dataset, AdapterProfile};
use crate::io::{write_atomic, write_json};
use crate::manifest::{read_manifest, write_manifest};
use crate::taxonomy::{default_taxonomy, Pathology, TriState};
use crate::transforms::TransformChain;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Log level variable, e.g. `CXR_HARMON_LOG=debug`.
pub const LOG_ENV: &str = "CXR_HARMON_LOG";

#[derive(Debug, Parser)]
#[command(name = "cxr-harmon", version, about = "Harmonized chest X-ray dataset tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label counts of a profile or manifest.
    Stats(StatsArgs),
    /// Write preprocessed samples as float32 tensors.
    Preprocess(PreprocessArgs),
    /// Fit operating points from scored, labelled CSVs.
    Calibrate(CalibrateArgs),
    /// Calibrate scores with fitted operating points.
    Apply(ApplyArgs),
    /// Concatenate datasets into one manifest.
    Merge(MergeArgs),
    /// Keep selected rows of a dataset.
    Subset(SubsetArgs),
    /// Reorder, add and drop pathology columns.
    Relabel(RelabelArgs),
    /// Filter rows by view, patient or metadata predicate.
    Filter(FilterArgs),
    /// Build a covariate-shift split from two datasets.
    Covariate(CovariateArgs),
    /// Class-mean difference image of a dataset.
    Classdiff(ClassdiffArgs),
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Adapter profile (.json) or manifest (.csv).
    input: PathBuf,
    /// Machine-readable output (the default).
    #[arg(long, conflicts_with = "human")]
    json: bool,
    /// Printed summary with lineage tree and totals.
    #[arg(long)]
    human: bool,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    input: PathBuf,
    /// Output resolution; shorthand for `--transform crop,resize:RES`.
    #[arg(long, required_unless_present = "transform")]
    res: Option<usize>,
    /// Transform chain such as `crop,resize:224,augment:seed=7`.
    #[arg(long)]
    transform: Option<String>,
    /// Sample indices; all rows when omitted.
    #[arg(long, value_delimiter = ',')]
    index: Vec<usize>,
    /// Base augmentation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// CSV with `score` and `label` columns, plus optional `id` and
    /// `pathology` columns. Repeatable.
    #[arg(long, required = true)]
    scores: Vec<PathBuf>,
    /// Pathology of files without a `pathology` column; defaults to the file stem.
    #[arg(long)]
    pathology: Option<String>,
    /// Parameters JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ApplyArgs {
    /// Long (`score` column) or wide (one column per pathology) scores CSV.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    params: PathBuf,
    /// Pathology of a long file without a `pathology` column.
    #[arg(long)]
    pathology: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MergeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Relabel every input first: `default` or a comma-separated list.
    #[arg(long)]
    relabel: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SubsetArgs {
    input: PathBuf,
    /// Comma-separated indices.
    #[arg(long, value_delimiter = ',', required_unless_present = "indices")]
    index: Vec<usize>,
    /// File of indices, whitespace or comma separated.
    #[arg(long)]
    indices: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RelabelArgs {
    input: PathBuf,
    /// `default` or a comma-separated list of pathologies.
    #[arg(long)]
    to: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FilterArgs {
    input: PathBuf,
    /// Keep these views, comma-separated.
    #[arg(long, value_delimiter = ',')]
    views: Vec<String>,
    /// Keep the first image of each patient.
    #[arg(long)]
    unique_patients: bool,
    /// Row predicate `column op value`. Repeatable; all must hold.
    #[arg(long = "where")]
    predicates: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CovariateArgs {
    #[arg(long)]
    d1: PathBuf,
    #[arg(long)]
    d2: PathBuf,
    /// Target pathology of both sources.
    #[arg(long)]
    target: String,
    /// Override the target pathology of the first source.
    #[arg(long)]
    d1_target: Option<String>,
    /// Override the target pathology of the second source.
    #[arg(long)]
    d2_target: Option<String>,
    #[arg(long)]
    ratio: f64,
    /// train, valid or test.
    #[arg(long, default_value = "train")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pool_fractions: Option<Vec<f64>>,
    /// Output directory for `manifest.csv` and `provenance.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassdiffArgs {
    input: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    res: usize,
    /// 16-bit PNG to write; the mapping goes to the same name with `.json`.
    #[arg(long)]
    out: PathBuf,
}

/// Load an adapter profile (`.json`) or a manifest (anything else).
pub fn load_input(path: &Path) -> Result<Dataset> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let profile = AdapterProfile::from_file(path)?;
        let (ds, report) = load_dataset(&profile)?;
        if !report.dropped.is_empty() {
            log::warn!(
                "{}: dropped {} of {} rows with missing images",
                profile.name,
                report.dropped.len(),
                report.csv_rows
            );
        }
        Ok(ds)
    } else {
        read_manifest(path)
    }
}

fn parse_pathology_list(spec: &str) -> Result<Vec<Pathology>> {
    if spec == "default" {
        return Ok(default_taxonomy().as_slice().to_vec());
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Pathology::new(s).map_err(|e| Error::InvalidArgument(e.to_string())))
        .collect()
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(format!("create {}", p.display()), e))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Run with explicit arguments (including the program name), writing
/// command output to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                EXIT_USAGE
            } else {
                EXIT_DATA
            }
        }
    }
}

/// Process entry point: initializes logging and runs on `std::env::args`.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run(std::env::args_os(), &mut lock)
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    writeln!(out, "{text}").map_err(|e| Error::io("write stdout", e))
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Stats(a) => cmd_stats(a, out),
        Command::Preprocess(a) => cmd_preprocess(a, out),
        Command::Calibrate(a) => cmd_calibrate(a, out),
        Command::Apply(a) => cmd_apply(a, out),
        Command::Merge(a) => cmd_merge(a, out),
        Command::Subset(a) => cmd_subset(a, out),
        Command::Relabel(a) => cmd_relabel(a, out),
        Command::Filter(a) => cmd_filter(a, out),
        Command::Covariate(a) => cmd_covariate(a, out),
        Command::Classdiff(a) => cmd_classdiff(a, out),
    }
}

fn cmd_stats(a: StatsArgs, out: &mut dyn Write) -> Result<()> {
    let ds = load_input(&a.input)?;
    if a.human {
        writeln!(out, "{}", ds.render_summary()).map_err(|e| Error::io("write stdout", e))
    } else {
        emit(out, &ds.stats_json())
    }
}

fn dataset_written(ds: &Dataset, artifacts: &[String]) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "name": ds.name(),
        "num_samples": ds.len(),
        "summary": ds.render_summary(),
        "artifacts": artifacts,
    })
}

fn cmd_preprocess(a: PreprocessArgs, out: &mut dyn Write) -> Result<()> {
    let chain: TransformChain = match (&a.transform, a.res) {
        (Some(t), _) => t.parse()?,
        (None, Some(res)) => TransformChain::crop_resize(res)?,
        (None, None) => unreachable!("clap requires one of --res and --transform"),
    };
    let ds = load_input(&a.input)?;
    let indices: Vec<usize> = if a.index.is_empty() { (0..ds.len()).collect() } else { a.index.clone() };
    if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidArgument(format!("index {bad} out of range for {} samples", ds.len())));
    }
    ensure_dir(&a.out)?;
    let mut artifacts = Vec::new();
    for i in indices {
        let sample = ds.get_sample(i, Some(&chain), a.seed)?;
        let bytes: Vec<u8> = sample.img.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        let bin = a.out.join(format!("{i:06}.f32"));
        let header = a.out.join(format!("{i:06}.json"));
        write_atomic(&bin, &bytes)?;
        write_json(
            &header,
            &json!({
                "format_version": FORMAT_VERSION,
                "index": i,
                "data": bin.file_name().map(|n| n.to_string_lossy().into_owned()),
                "shape": sample.img.channel_shape(),
                "dtype": "float32",
                "byte_order": "little",
                "range": [PIXEL_MIN, PIXEL_MAX],
                "transform": chain.to_string(),
                "seed": a.seed,
                "labels": ds.pathologies().iter().zip(&sample.lab)
                    .map(|(p, t)| (p.to_string(), json!(t.as_bool().map(u8::from))))
                    .collect::<serde_json::Map<_, _>>(),
            }),
        )?;
        artifacts.push(display(&bin));
        artifacts.push(display(&header));
    }
    emit(out, &json!({"format_version": FORMAT_VERSION, "artifacts": artifacts}))
}

struct CsvTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<CsvTable> {
    let parse = |e: csv::Error| Error::CsvParse { path: path.to_path_buf(), message: e.to_string() };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Profile(format!("cannot open {}: {e}", path.display())),
        _ => parse(e),
    })?;
    let headers = rdr.headers().map_err(parse)?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()).map_err(parse))
        .collect::<Result<_>>()?;
    Ok(CsvTable { headers, rows })
}

impl CsvTable {
    fn col(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize> {
        self.col(name).ok_or_else(|| Error::Profile(format!("{} lacks column `{name}`", path.display())))
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidArgument(format!("csv encode: {e}"));
        w.write_record(&self.headers).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv encode: {e}")))
    }
}

fn parse_score(v: &str, path: &Path, row: usize) -> Result<Option<f64>> {
    let v = v.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    v.parse().map(Some).map_err(|_| Error::CsvParse {
        path: path.to_path_buf(),
        message: format!("row {}: score `{v}` is not a number", row + 1),
    })
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_calibrate(a: CalibrateArgs, out: &mut dyn Write) -> Result<()> {
    // pathology -> (scores, labels), in first-seen order
    let mut groups: Vec<(Pathology, Vec<f64>, Vec<TriState>)> = Vec::new();
    for path in &a.scores {
        let t = read_table(path)?;
        let sc = t.require("score", path)?;
        let lc = t.require("label", path)?;
        let pc = t.col("pathology");
        let fallback = a.pathology.clone().unwrap_or_else(|| file_stem(path));
        for (r, row) in t.rows.iter().enumerate() {
            let name = pc.map_or(fallback.as_str(), |j| row[j].as_str());
            let p = Pathology::new(name)?;
            let label = TriState::parse_csv(&row[lc]).ok_or_else(|| Error::CsvParse {
                path: path.clone(),
                message: format!("row {}: bad label `{}`", r + 1, row[lc]),
            })?;
            let Some(score) = parse_score(&row[sc], path, r)? else {
                continue;
            };
            let k = match groups.iter().position(|g| g.0 == p) {
                Some(k) => k,
                None => {
                    groups.push((p, Vec::new(), Vec::new()));
                    groups.len() - 1
                }
            };
            groups[k].1.push(score);
            groups[k].2.push(label);
        }
    }
    let mut params = CalibrationParams::new();
    let mut report = serde_json::Map::new();
    for (p, scores, labels) in groups {
        let set = ScoredSet::from_tristate(&scores, &labels)?;
        let opt = op_point(&set)?;
        params.insert(p.clone(), opt)?;
        report.insert(
            p.to_string(),
            json!({"opt": opt, "auc": auc(&set)?, "n": set.len(), "positives": set.positives()}),
        );
    }
    write_json(&a.out, &params.to_json())?;
    emit(
        out,
        &json!({"format_version": FORMAT_VERSION, "pathologies": report, "artifacts": [display(&a.out)]}),
    )
}

fn read_params(path: &Path) -> Result<CalibrationParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    CalibrationParams::from_json(&serde_json::from_str(&text)?)
}

fn cmd_apply(a: ApplyArgs, out: &mut dyn Write) -> Result<()> {
    let params = read_params(&a.params)?;
    let mut t = read_table(&a.scores)?;
    let calibrate = |p: &Pathology, cell: &mut String, r: usize| -> Result<()> {
        if let Some(x) = parse_score(cell, &a.scores, r)? {
            *cell = params.calibrate(p, x)?.to_string();
        }
        Ok(())
    };
    let mut calibrated = 0usize;
    if let Some(sc) = t.col("score") {
        let pc = t.col("pathology");
        let fixed = match (&a.pathology, pc) {
            (Some(p), _) => Some(Pathology::new(p)?),
            (None, Some(_)) => None,
            (None, None) if params.len() == 1 => params.iter().next().map(|(p, _)| p.clone()),
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "long scores file without a pathology column needs --pathology".into(),
                ))
            }
        };
        for (r, row) in t.rows.iter_mut().enumerate() {
            let p = match (&fixed, pc) {
                (Some(p), _) => p.clone(),
                (None, Some(j)) => Pathology::new(&row[j])?,
                (None, None) => unreachable!(),
            };
            calibrate(&p, &mut row[sc], r)?;
            calibrated += 1;
        }
    } else {
        let cols: Vec<(usize, Pathology)> = t
            .headers
            .iter()
            .enumerate()
            .filter_map(|(j, h)| Pathology::new(h).ok().filter(|p| params.get(p).is_some()).map(|p| (j, p)))
            .collect();
        if cols.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} has neither a `score` column nor columns named after calibrated pathologies",
                a.scores.display()
            )));
        }
        for (r, row) in t.rows.iter_mut().enumerate() {
            for (j, p) in &cols {
                calibrate(p, &mut row[*j], r)?;
                calibrated += 1;
            }
        }
    }
    write_atomic(&a.out, &t.to_bytes()?)?;
    emit(
        out,
        &json!({"format_version": FORMAT_VERSION, "calibrated": calibrated, "artifacts": [display(&a.out)]}),
    )
}

fn cmd_merge(a: MergeArgs, out: &mut dyn Write) -> Result<()> {
    let target = a.relabel.as_deref().map(parse_pathology_list).transpose()?;
    let mut parts = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        let ds = load_input(p)?;
        parts.push(match &target {
            Some(t) => relabel(&ds, t)?.0,
            None => ds,
        });
    }
    let merged = merge(&parts)?;
    write_manifest(&a.out, &merged)?;
    emit(out, &dataset_written(&merged, &[display(&a.out)]))
}

fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::InvalidArgument(format!("bad index `{s}` in {}", path.display())))
        })
        .collect()
}

fn cmd_subset(a: SubsetArgs, out: &mut dyn Write) -> Result<()> {
    let mut idxs = a.index.clone();
    if let Some(f) = &a.indices {
        idxs.extend(read_indices(f)?);
    }
    let ds = load_input(&a.input)?;
    let sub = subset(&ds, &idxs)?;
    write_manifest(&a.out, &sub)?;
    emit(out, &dataset_written(&sub, &[display(&a.out)]))
}

fn cmd_relabel(a: RelabelArgs, out: &mut dyn Write) -> Result<()> {
    let target = parse_pathology_list(&a.to)?;
    let ds = load_input(&a.input)?;
    let (ds, dropped) = relabel(&ds, &target)?;
    write_manifest(&a.out, &ds)?;
    let mut v = dataset_written(&ds, &[display(&a.out)]);
    v["dropped"] = json!(dropped.iter().map(Pathology::as_str).collect::<Vec<_>>());
    emit(out, &v)
}

fn cmd_filter(a: FilterArgs, out: &mut dyn Write) -> Result<()> {
    let predicates: Vec<Predicate> = a.predicates.iter().map(|p| p.parse()).collect::<Result<_>>()?;
    let mut ds = load_input(&a.input)?;
    if !a.views.is_empty() {
        let views: Vec<&str> = a.views.iter().map(String::as_str).collect();
        ds = filter_views(&ds, &views)?;
    }
    if a.unique_patients {
        ds = subset(&ds, &unique_patient_indices(&ds)?)?;
    }
    for p in &predicates {
        ds = subset(&ds, &p.indices(&ds)?)?;
    }
    write_manifest(&a.out, &ds)?;
    emit(out, &dataset_written(&ds, &[display(&a.out)]))
}

fn cmd_covariate(a: CovariateArgs, out: &mut dyn Write) -> Result<()> {
    let mode: Mode = a.mode.parse()?;
    let mut params = CovariateParams::new(&a.target, mode, a.ratio, a.seed);
    if let Some(t) = &a.d1_target {
        params.d1_target = Target::Pathology(t.clone());
    }
    if let Some(t) = &a.d2_target {
        params.d2_target = Target::Pathology(t.clone());
    }
    if let Some(f) = &a.pool_fractions {
        params.pool_fractions = [f[0], f[1], f[2]];
    }
    params.validate()?;
    let spec = CovariateSpec { d1: load_input(&a.d1)?, d2: load_input(&a.d2)?, params };
    let split = build_covariate(&spec)?;
    ensure_dir(&a.out)?;
    let manifest = a.out.join("manifest.csv");
    let provenance = a.out.join("provenance.json");
    write_atomic(&manifest, &split.manifest_bytes()?)?;
    write_json(
        &provenance,
        &json!({
            "format_version": FORMAT_VERSION,
            "d1": {"input": display(&a.d1), "name": spec.d1.name(), "num_samples": spec.d1.len()},
            "d2": {"input": display(&a.d2), "name": spec.d2.name(), "num_samples": spec.d2.len()},
            "params": spec.params,
            "effective_ratio": spec.params.effective_ratio(),
            "counts": split.counts,
            "num_samples": split.dataset.len(),
        }),
    )?;
    emit(
        out,
        &json!({
            "format_version": FORMAT_VERSION,
            "num_samples": split.dataset.len(),
            "counts": split.counts,
            "artifacts": [display(&manifest), display(&provenance)],
        }),
    )
}

fn cmd_classdiff(a: ClassdiffArgs, out: &mut dyn Write) -> Result<()> {
    let target = Pathology::new(&a.target).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ds = load_input(&a.input)?;
    let grid = class_mean_difference(&ds, &target, a.res)?;
    let img = DifferenceImage::from_grid(&grid)?;
    let sidecar = a.out.with_extension("json");
    write_png(&a.out, &img.image)?;
    let mut meta = img.sidecar();
    meta["target"] = json!(target.as_str());
    meta["res"] = json!(a.res);
    meta["dataset"] = json!(ds.name());
    write_json(&sidecar, &meta)?;
    emit(
        out,
        &json!({
            "format_version": FORMAT_VERSION,
            "min": img.min,
            "max": img.max,
            "artifacts": [display(&a.out), display(&sidecar)],
        }),
    )
}
