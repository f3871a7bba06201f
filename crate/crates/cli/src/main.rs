use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use nak::dataset::{
    chronological_split, load_records, load_split, load_split_history, load_split_scale, save_split, Dataset,
    SplitWindows, TermRange,
};
use nak::eval::{evaluate, summary_table};
use nak::explain::{explain, instance_for_target};
use nak::ids::{CourseId, Term};
use nak::synth::{generate, SynthConfig};
use nak::training::{grid_csv, grid_search, history_csv, in_grade_space, train, Grid};
use nak::{Checkpoint, Error, GradeScale, Model, Result, TrainConfig};

/// Grade prediction with attention over prior courses.
#[derive(Parser, Debug)]
#[command(name = "nak", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ingest a grade file and write a chronological split.
    Split(SplitArgs),
    /// Train one model and write its checkpoint.
    Train(TrainArgs),
    /// Sweep a hyperparameter grid, ranked by validation MSE.
    Grid(GridArgs),
    /// Score checkpoints on a split's test set.
    Eval(EvalArgs),
    /// Show a NAK model's attention over a student's prior courses.
    Explain(ExplainArgs),
    /// Generate a synthetic dataset with planted prerequisites.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Last term whose targets are used for training.
    #[arg(long)]
    train_end: Term,
    /// Validation window, `START..END`.
    #[arg(long)]
    val: TermRange,
    /// Test window, `START..END`.
    #[arg(long)]
    test: TermRange,
    #[arg(long)]
    out: PathBuf,
    /// Grade-scale override file.
    #[arg(long)]
    scale: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Template config; the grid overrides its fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    grids: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint to score; repeat to compare several.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    split: PathBuf,
    /// Grade-scale override file; defaults to the split's scale.
    #[arg(long)]
    scale: Option<PathBuf>,
    /// Directory for per-model reports and the summary table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Split directory holding the student's history.
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    student: String,
    /// Comma-separated target courses.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<String>,
    /// Use a model that predicts actual grades, retraining one from the
    /// checkpoint's config if it was trained on row-centered grades.
    #[arg(long)]
    raw_grades: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<PathBuf>,
}

fn load_scale(path: Option<&Path>) -> Result<GradeScale> {
    path.map_or_else(|| Ok(GradeScale::default()), GradeScale::load)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn split_cmd(args: SplitArgs) -> Result<()> {
    let scale = load_scale(args.scale.as_deref())?;
    let data = Dataset::from_records(load_records(&args.data, &scale)?)?;
    let windows = SplitWindows::new(args.train_end, args.val, args.test)?;
    let split = chronological_split(&data, windows)?;
    save_split(&args.out, &data, &split, &scale)?;
    let c = &split.counts;
    println!(
        "train={} validation={} test={} dropped_rows={} excluded_few_priors={} excluded_unseen_course={}",
        c.train, c.validation, c.test, c.dropped_rows, c.excluded_few_priors, c.excluded_unseen_course
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut config = TrainConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let split = load_split(&args.split)?;
    let outcome = train(&config, &split)?;
    let best = outcome.best();
    Checkpoint::new(config, split.students, split.courses, outcome.model.clone()).save(&args.out)?;
    write(&with_suffix(&args.out, ".history.csv"), &history_csv(&outcome.history))?;
    println!("best_epoch={} val_mse={}", best.epoch, best.val_mse);
    Ok(())
}

fn grid_cmd(args: GridArgs) -> Result<()> {
    let mut template = TrainConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        template.seed = seed;
    }
    let grid = Grid::load(&args.grids)?;
    let split = load_split(&args.split)?;
    let entries = grid_search(&template, &grid, &split, args.jobs.max(1))?;
    let table = grid_csv(&entries);
    write(&args.out, &table)?;
    print!("{table}");
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let split = load_split(&args.split)?;
    let scale = match &args.scale {
        Some(p) => GradeScale::load(p)?,
        None => load_split_scale(&args.split)?,
    };
    let mut reports = Vec::new();
    for path in &args.models {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.courses != split.courses {
            return Err(Error::Checkpoint(format!(
                "{} was trained on a different course table",
                path.display()
            )));
        }
        let test = in_grade_space(&split.test, &ckpt.config);
        for inst in test.iter() {
            ckpt.model.check_instance(inst)?;
        }
        let report = evaluate(ckpt.kind.label(), &ckpt.model, &test, &scale)?;
        if let Some(dir) = &args.out {
            let stem = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy());
            write(
                &dir.join(format!("{stem}.report.txt")),
                &report.to_text(&split.students, &split.courses),
            )?;
        }
        reports.push(report);
    }
    let table = summary_table(&reports);
    if let Some(dir) = &args.out {
        write(&dir.join("summary.txt"), &table)?;
    }
    print!("{table}");
    Ok(())
}

fn explain_cmd(args: ExplainArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&args.model)?;
    if !ckpt.kind.is_nak() {
        return Err(Error::Parameter(format!("explain needs a NAK model, got {}", ckpt.kind)));
    }
    let history = load_split_history(&args.split)?;
    let student = history.student(&args.student)?;
    let targets: Vec<CourseId> = args
        .targets
        .iter()
        .map(|t| history.course(t.trim()))
        .collect::<Result<_>>()?;

    let mut config = ckpt.config.clone();
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let model = if args.raw_grades && !ckpt.config.raw_grades {
        config.raw_grades = true;
        let split = load_split(&args.split)?;
        train(&config, &split)?.model
    } else {
        ckpt.model
    };
    let Model::Nak(params) = &model else {
        unreachable!("kind checked above")
    };

    let timeline = &history.timelines[student.index()];
    let mut out = String::new();
    for target in targets {
        let mut inst = instance_for_target(timeline, target);
        if config.raw_grades {
            inst = inst.to_raw_space();
        }
        model.check_instance(&inst)?;
        out.push_str(&explain(params, &inst).to_text(&history.courses));
        out.push('\n');
    }
    print!("{out}");
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => SynthConfig::load(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let scale = load_scale(args.scale.as_deref())?;
    let data = generate(&config, &scale)?;
    data.write_dir(&args.out, &scale)?;
    write(&args.out.join("synth.toml"), &config.to_toml())?;
    println!(
        "records={} students={} courses={}",
        data.records.records.len(),
        data.records.students.len(),
        data.records.courses.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(a) => split_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Grid(a) => grid_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
