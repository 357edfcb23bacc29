use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellda::crossval::{crossval, CvOptions};
use cellda::error::{CliError, Result};
use cellda::io::{self, DEFAULT_NA_TOKENS};
use cellda::sim::{self, Contamination, Method};
use cellda::svg;
use cellda_core::classifier::{predict_given, train_celllda_with_report, train_cellqda_with_report};
use cellda_core::diagnostics::{cellmap_data, classmap_data};
use cellda_core::{DaConfig, DataSet, DiscriminantModel, Mode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cellda", version, about = "Cellwise robust quadratic and linear discriminant analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cellQDA or cellLDA model and write it as JSON.
    Train(TrainArgs),
    /// Classify the rows of a CSV file.
    Predict(PredictArgs),
    /// Flag outlying cells of every row against one class model.
    FlagCells(CellArgs),
    /// Run the simulation sweep and write one accuracy row per replication.
    Simulate(SimulateArgs),
    /// Replicated stratified k-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Write the class map table (and optionally an SVG).
    ClassmapData(ClassmapArgs),
    /// Write the cell map table of one class (and optionally an SVG).
    CellmapData(CellArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Cell contents read as missing (repeatable; default "NA" and "").
    #[arg(long = "na-token")]
    na_tokens: Vec<String>,
}

impl DataArgs {
    fn tokens(&self) -> Vec<String> {
        if self.na_tokens.is_empty() {
            DEFAULT_NA_TOKENS.iter().map(|s| s.to_string()).collect()
        } else {
            self.na_tokens.clone()
        }
    }

    fn read(&self, labels: Option<&str>) -> Result<DataSet> {
        io::read_csv(&self.input, labels, &self.tokens())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Qda,
    Lda,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Name of the class label column.
    #[arg(long)]
    labels: String,
    /// Output model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "qda")]
    mode: ModeArg,
    /// Coverage probability of the per-cell flagging cutoff.
    #[arg(long, default_value_t = 0.99)]
    cutoff: f64,
    /// Probability of the chi-squared quantile in the casewise rule.
    #[arg(long, default_value_t = 0.99)]
    case_cutoff: f64,
    /// Never assign cases to class 0 when predicting with this model.
    #[arg(long)]
    no_class0: bool,
    /// Optional CSV with per-class estimation diagnostics.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Label column; when present, PAC values are reported.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    no_class0: bool,
    /// Override the model's casewise cutoff probability.
    #[arg(long)]
    case_cutoff: Option<f64>,
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Class (name or 1-based number) whose model flags the cells. Defaults
    /// to each row's label when --labels is given.
    #[arg(long)]
    class: Option<String>,
    /// Label column. With --class, only rows of that class are reported.
    #[arg(long)]
    labels: Option<String>,
    /// Also write an SVG rendering.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ClassmapArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    labels: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write an SVG rendering for --class (default: the first class).
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long)]
    class: Option<String>,
    #[arg(long)]
    no_class0: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Clean,
    Cell,
    Case,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, value_enum, default_value = "qda")]
    mode: ModeArg,
    /// Contamination of the test set.
    #[arg(long, value_enum, default_value = "clean")]
    test: TestArg,
    /// Methods to run (repeatable; default: all four).
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Full-scale grid (d = 20, 200 cases per class, gamma 0..10).
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    labels: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "cellQDA")]
    method: String,
    /// Fraction of test cells masked before prediction.
    #[arg(long, default_value_t = 0.0)]
    missing_rate: f64,
    #[arg(long, default_value_t = 0.99)]
    cutoff: f64,
    #[arg(long, default_value_t = 0.99)]
    case_cutoff: f64,
    #[arg(long)]
    no_class0: bool,
    /// Per-fold CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::FlagCells(a) => cells(a),
        Command::Simulate(a) => simulate(a),
        Command::Crossval(a) => cv(a),
        Command::ClassmapData(a) => classmap(a),
        Command::CellmapData(a) => cells(a),
    }
}

fn config(cutoff: f64, case_cutoff: f64, no_class0: bool) -> Result<DaConfig> {
    let cfg = DaConfig { cell_cutoff: cutoff, case_cutoff, class0: !no_class0, ..DaConfig::default() };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

#[derive(Serialize)]
struct ReportRow {
    class: String,
    n_rows: usize,
    iterations: usize,
    final_objective: f64,
    flagged_cells: usize,
}

fn train(a: TrainArgs) -> Result<()> {
    let data = a.data.read(Some(&a.labels))?;
    let cfg = config(a.cutoff, a.case_cutoff, a.no_class0)?;
    let (model, reports) = match a.mode {
        ModeArg::Qda => train_cellqda_with_report(&data, &cfg)?,
        ModeArg::Lda => train_celllda_with_report(&data, &cfg)?,
    };
    io::save_model(&a.model, &model)?;
    if let Some(out) = a.out {
        let rows: Vec<ReportRow> = reports
            .iter()
            .map(|r| ReportRow {
                class: if r.class == 0 { "pooled".to_string() } else { model.class_names()[r.class - 1].clone() },
                n_rows: r.n_rows,
                iterations: r.iterations,
                final_objective: r.objective_trace.last().copied().unwrap_or(f64::NAN),
                flagged_cells: r.flag_counts.iter().sum(),
            })
            .collect();
        io::write_csv(out, &rows)?;
    }
    Ok(())
}

fn load_for(data_args: &DataArgs, model_path: &Path, labels: Option<&str>) -> Result<(DataSet, DiscriminantModel)> {
    let model = io::load_model(model_path)?;
    let data = data_args.read(labels)?;
    io::check_columns(&data, &model)?;
    let data = io::align_labels(data, &model)?;
    Ok((data, model))
}

#[derive(Serialize)]
struct PredictionRow {
    row: usize,
    label: usize,
    label_name: String,
    raw_label: usize,
    md2: f64,
    pac: Option<f64>,
    n_flags: usize,
}

fn label_name(model: &DiscriminantModel, g: usize) -> String {
    if g == 0 {
        "0".to_string()
    } else {
        model.class_names()[g - 1].clone()
    }
}

fn predict(a: PredictArgs) -> Result<()> {
    let (data, model) = load_for(&a.data, &a.model, a.labels.as_deref())?;
    let mut model = if a.no_class0 {
        let counts_na = model.config().casewise_counts_na;
        model.with_prediction_switches(false, counts_na)
    } else {
        model
    };
    if let Some(c) = a.case_cutoff {
        model = model.with_case_cutoff(c).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut rows = Vec::with_capacity(data.n_rows());
    for i in 0..data.n_rows() {
        let r = predict_given(data.row(i), data.na_row(i), data.label(i), &model)?;
        rows.push(PredictionRow {
            row: i + 1,
            label: r.label,
            label_name: label_name(&model, r.label),
            raw_label: r.raw_label,
            md2: r.md2_winner,
            pac: r.pac,
            n_flags: r.flags[r.raw_label - 1].n_outliers(),
        });
    }
    io::write_csv(&a.out, &rows)
}

fn resolve_class(model: &DiscriminantModel, s: &str) -> Result<usize> {
    if let Some(p) = model.class_names().iter().position(|n| n == s) {
        return Ok(p + 1);
    }
    match s.parse::<usize>() {
        Ok(g) if (1..=model.n_classes()).contains(&g) => Ok(g),
        _ => Err(CliError::Usage(format!("unknown class '{s}'"))),
    }
}

#[derive(Serialize)]
struct CellRow {
    row: usize,
    col: String,
    class: String,
    status: &'static str,
    stdres: f64,
}

fn cells(a: CellArgs) -> Result<()> {
    let (data, model) = load_for(&a.data, &a.model, a.labels.as_deref())?;
    let fixed = a.class.as_deref().map(|c| resolve_class(&model, c)).transpose()?;
    if fixed.is_none() && data.labels().is_none() {
        return Err(CliError::Usage("give --class or --labels".into()));
    }
    let mut table = Vec::new();
    let mut rendered = Vec::new();
    let mut row_names = Vec::new();
    for g in 1..=model.n_classes() {
        if fixed.is_some_and(|f| f != g) {
            continue;
        }
        let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.label(i).is_none_or(|l| l == g)).collect();
        let subset = data.select_rows(&rows);
        for c in cellmap_data(&model, &subset, g)? {
            let i = rows[c.row];
            table.push(CellRow {
                row: i + 1,
                col: model.col_names()[c.col].clone(),
                class: model.class_names()[g - 1].clone(),
                status: c.status.as_str(),
                stdres: c.stdres,
            });
            rendered.push(cellda_core::diagnostics::CellmapRow { row: rendered.len() / model.dim(), ..c });
            if c.col == 0 {
                row_names.push((i + 1).to_string());
            }
        }
    }
    table.sort_by_key(|r| r.row);
    io::write_csv(&a.out, &table)?;
    if let Some(path) = a.svg {
        let doc = svg::cellmap_svg(&rendered, model.col_names(), &row_names);
        std::fs::write(&path, doc).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassmapOut {
    row: usize,
    given: String,
    predicted: String,
    flagged_any: bool,
    md: f64,
    axis_coord: f64,
    pac: f64,
}

fn classmap(a: ClassmapArgs) -> Result<()> {
    let (data, model) = load_for(&a.data, &a.model, Some(&a.labels))?;
    let model = if a.no_class0 {
        let counts_na = model.config().casewise_counts_na;
        model.with_prediction_switches(false, counts_na)
    } else {
        model
    };
    let rows = classmap_data(&model, &data)?;
    let out: Vec<ClassmapOut> = rows
        .iter()
        .map(|r| ClassmapOut {
            row: r.case + 1,
            given: label_name(&model, r.given),
            predicted: label_name(&model, r.predicted),
            flagged_any: r.flagged_any,
            md: r.md,
            axis_coord: r.axis_coord,
            pac: r.pac,
        })
        .collect();
    io::write_csv(&a.out, &out)?;
    if let Some(path) = a.svg {
        let g = a.class.as_deref().map(|c| resolve_class(&model, c)).transpose()?.unwrap_or(1);
        let doc = svg::classmap_svg(&rows, g, &model.class_names()[g - 1]);
        std::fs::write(&path, doc).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.is_empty() {
        return Ok(Method::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| Method::parse(n).ok_or_else(|| CliError::Usage(format!("unknown method '{n}'"))))
        .collect()
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    let mode = match a.mode {
        ModeArg::Qda => Mode::Qda,
        ModeArg::Lda => Mode::Lda,
    };
    let test = match a.test {
        TestArg::Clean => Contamination::None,
        TestArg::Cell => Contamination::Cell,
        TestArg::Case => Contamination::Case,
    };
    let grid = sim::standard_grid(mode, test, a.full, a.seed);
    let rows = sim::run_sweep(&grid, &methods, a.reps)?;
    io::write_csv(&a.out, &rows)?;
    let summary = sim::summarize(&rows);
    let mut stdout = std::io::stdout().lock();
    io::write_csv_to(&mut stdout, &summary)
}

fn cv(a: CrossvalArgs) -> Result<()> {
    let method = Method::parse(&a.method).ok_or_else(|| CliError::Usage(format!("unknown method '{}'", a.method)))?;
    let data = a.data.read(Some(&a.labels))?;
    let cfg = config(a.cutoff, a.case_cutoff, a.no_class0)?;
    let opts = CvOptions { folds: a.folds, reps: a.reps, seed: a.seed, missing_rate: a.missing_rate };
    let report = crossval(&data, method, &cfg, &opts)?;
    if let Some(out) = &a.out {
        io::write_csv(out, &report.folds)?;
    }
    println!("method,folds,reps,mean_accuracy,sd_accuracy");
    println!("{},{},{},{},{}", method.name(), a.folds, a.reps, report.mean, report.sd);
    Ok(())
}
