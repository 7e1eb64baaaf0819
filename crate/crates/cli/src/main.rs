use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use levelsets::mlp::{load_checkpoint, save_checkpoint, Mlp};
use levelsets::pl::{
    compile_to_mlp, enumerate_lambda, load_surface, random_star_polygon, unit_cube, unit_square, verify,
    write_verify_report,
};
use levelsets::projection::{project, sample_seeds, write_records_csv, SeedStrategy};
use levelsets::recon::{
    chamfer, extract_isosurface, hausdorff, load_cloud, save_mesh, write_metric_report, Metric, MetricRow,
};
use levelsets::train::{
    accuracy, emit_plots, extract_zero_set, pgd_attack, preset, train, AttackConfig, AttackObjective, RunConfig,
    RunDirectory, PRESETS,
};
use levelsets::{ErrorKind, MarginView, ProjectionConfig};

#[derive(Parser)]
#[command(name = "nlvl", version, about = "Sample, train and evaluate neural level sets")]
struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier (cross-entropy, output hinge or geometric SVM).
    TrainClassifier(TrainArgs),
    /// Adversarial margin training or its cross-entropy baseline.
    TrainRobust(TrainArgs),
    /// Reconstruct a curve or surface from a point cloud.
    TrainRecon(TrainArgs),
    /// Project seeds onto a level set of a saved network.
    Project(ProjectArgs),
    /// PGD-attack a finished classifier run and report robust accuracy.
    Attack(AttackArgs),
    /// Extract a level set of a saved network as OBJ.
    Extract(ExtractArgs),
    /// Compile a piecewise-linear surface into an exact ReLU network.
    CompilePl(CompileArgs),
    /// Chamfer and Hausdorff distances between two point files.
    EvalMetrics(MetricArgs),
    /// Regenerate the SVG plots of a run directory.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named configuration to start from instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Run seed; required so every run is reproducible.
    #[arg(long)]
    seed: u64,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Dotted config override, e.g. `--set svm.lambda=0.01`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Seed points, one per line; without it seeds are drawn uniformly.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Uniform seed box as `lo,hi` per axis, `;`-separated.
    #[arg(long, default_value = "-1,1;-1,1", allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target level, one value per output (or per class margin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    level: Vec<f64>,
    /// Project onto this class's decision boundary instead of raw outputs.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Xent,
    Margin,
}

#[derive(Args)]
struct AttackArgs {
    /// Finished run directory; its final checkpoint and test data are used.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long, value_enum)]
    objective: Option<Objective>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV of adversarial points with their labels and correctness.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    /// Box as `lo,hi` per axis, `;`-separated.
    #[arg(long, allow_hyphen_values = true)]
    bounds: String,
    #[arg(long, default_value_t = 100)]
    res: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    level: f64,
    /// Extract the class margin level set of a classifier.
    #[arg(long)]
    class: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompileArgs {
    /// Surface file (`v` vertex lines, optional `f` triangle lines).
    #[arg(long, conflicts_with_all = ["shape"])]
    surface: Option<PathBuf>,
    #[arg(long, value_enum)]
    shape: Option<Shape>,
    /// Vertex count for `--shape star`.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Random points for the verification report; 0 skips it.
    #[arg(long, default_value_t = 10_000)]
    verify: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Square,
    Cube,
    Star,
}

#[derive(Args)]
struct MetricArgs {
    a: PathBuf,
    b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    run: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<levelsets::Error>().map(|e| e.kind()) {
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numerical) => 4,
        _ => 2,
    }
}

fn parse_bounds(s: &str) -> Result<Vec<(f64, f64)>> {
    s.split(';')
        .map(|axis| {
            let (lo, hi) = axis
                .split_once(',')
                .with_context(|| format!("bounds axis {axis:?} is not lo,hi"))?;
            let lo: f64 = lo.trim().parse().with_context(|| format!("bad bound {lo:?}"))?;
            let hi: f64 = hi.trim().parse().with_context(|| format!("bad bound {hi:?}"))?;
            if !(lo < hi) {
                bail!("bounds axis {axis:?} needs lo < hi");
            }
            Ok((lo, hi))
        })
        .collect()
}

fn config_error(msg: String) -> anyhow::Error {
    levelsets::Error::Config(msg).into()
}

fn run_train(args: &TrainArgs, kind: &str) -> Result<()> {
    let base = match (&args.config, &args.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => {
            return Err(config_error(format!(
                "pass --config FILE or --preset NAME (one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    let mut sets = args.sets.clone();
    sets.push(format!("seed={}", args.seed));
    if let Some(e) = args.epochs {
        sets.push(format!("optim.epochs={e}"));
    }
    if let Some(lr) = args.lr {
        sets.push(format!("optim.lr={lr:e}"));
    }
    if let Some(b) = args.batch_size {
        sets.push(format!("optim.batch_size={b}"));
    }
    let cfg = base.with_overrides(&sets)?;
    if cfg.kind() != kind {
        return Err(config_error(format!(
            "config kind is {:?}, this subcommand trains {kind:?}",
            cfg.kind()
        )));
    }
    let run = RunDirectory::create(&args.out, &cfg)?;
    let summary = train(&cfg, &run)?;
    let m = &summary.metrics;
    let mut line = Vec::new();
    for c in &m.columns {
        if let Some(v) = m.last(c) {
            line.push(format!("{c}={v}"));
        }
    }
    println!("{}", line.join(" "));
    println!("run directory: {}", run.path().display());
    Ok(())
}

fn write_or_print(out: Option<&Path>, bytes: Vec<u8>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn run_project(a: &ProjectArgs) -> Result<()> {
    let mlp = load_checkpoint(&a.model)?;
    let seeds = match &a.seeds {
        Some(p) => load_cloud(p)?.points().clone(),
        None => sample_seeds(SeedStrategy::Uniform(&parse_bounds(&a.bounds)?), a.n, a.seed)?,
    };
    let cfg = ProjectionConfig::default().with_iters(a.iters).with_target(&a.level);
    let records = match a.class {
        Some(c) => project(&MarginView::new(&mlp, c)?, &seeds, &cfg)?,
        None => project(&mlp, &seeds, &cfg)?,
    };
    let converged = records.iter().filter(|r| r.converged).count();
    eprintln!("{converged}/{} seeds converged", records.len());
    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf)?;
    write_or_print(a.out.as_deref(), buf)
}

fn run_attack(a: &AttackArgs) -> Result<()> {
    let run = RunDirectory::open(&a.run)?;
    let mlp = run.load_final()?;
    let (data, mut cfg) = match run.config()? {
        RunConfig::Classifier(c) => (c.test.unwrap_or(c.data).load()?, AttackConfig::default()),
        RunConfig::Robust(c) => (c.test.unwrap_or(c.data).load()?, c.attack),
        RunConfig::Recon(_) => return Err(config_error("reconstruction runs have no classifier to attack".into())),
    };
    if let Some(e) = a.eps {
        cfg.eps_attack = e;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(s) = a.step_size {
        cfg.step_size = s;
    }
    let objectives = match a.objective {
        Some(Objective::Xent) => vec![AttackObjective::Xent],
        Some(Objective::Margin) => vec![AttackObjective::Margin],
        None => vec![AttackObjective::Xent, AttackObjective::Margin],
    };
    println!("clean_accuracy={}", accuracy(&mlp, &data));
    let mut csv = String::from("objective,index,label,correct");
    for k in 0..data.dim() {
        csv.push_str(&format!(",x{k}"));
    }
    csv.push('\n');
    for obj in objectives {
        cfg.objective = obj;
        let mut hits = 0;
        for i in 0..data.len() {
            let adv = pgd_attack(&mlp, data.x.row(i), data.labels[i], &cfg, a.seed.wrapping_add(i as u64))?;
            let ok = levelsets::train::is_correct(&mlp, &adv, data.labels[i]);
            hits += ok as usize;
            let name = match obj {
                AttackObjective::Xent => "xent",
                AttackObjective::Margin => "margin",
            };
            csv.push_str(&format!("{name},{i},{},{}", data.labels[i], ok as u8));
            for v in &adv {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        println!(
            "robust_accuracy_{:?}={} eps={} steps={}",
            obj,
            hits as f64 / data.len() as f64,
            cfg.eps_attack,
            cfg.steps
        );
    }
    if let Some(p) = &a.out {
        std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run_extract(a: &ExtractArgs) -> Result<()> {
    let mlp = load_checkpoint(&a.model)?;
    let bounds = parse_bounds(&a.bounds)?;
    let mesh = match a.class {
        Some(c) => extract_isosurface(&MarginView::new(&mlp, c)?, &bounds, a.res, a.level)?,
        None if a.level == 0.0 => extract_zero_set(&mlp, &bounds, a.res)?,
        None => extract_isosurface(&mlp, &bounds, a.res, a.level)?,
    };
    save_mesh(&mesh, &a.out)?;
    let closed = mesh.polylines.iter().filter(|p| p.closed).count();
    println!(
        "vertices={} polylines={} closed={} triangles={}",
        mesh.vertices.len(),
        mesh.polylines.len(),
        closed,
        mesh.triangles.len()
    );
    Ok(())
}

fn run_compile(a: &CompileArgs) -> Result<()> {
    let surface = match (&a.surface, a.shape) {
        (Some(p), _) => load_surface(p)?,
        (None, Some(Shape::Square)) => unit_square(),
        (None, Some(Shape::Cube)) => unit_cube(),
        (None, Some(Shape::Star)) => random_star_polygon(a.k, a.seed)?,
        (None, None) => return Err(config_error("pass --surface FILE or --shape".into())),
    };
    let lambda = enumerate_lambda(&surface)?;
    let mlp: Mlp = compile_to_mlp(&surface, &lambda)?;
    save_checkpoint(&mlp, &a.out)?;
    let widths: Vec<String> = mlp.layers().iter().map(|l| l.out_dim.to_string()).collect();
    println!(
        "planes={} sign_vectors={} minimal={} layers={}",
        surface.planes().len(),
        lambda.len(),
        lambda.minimal_count(),
        widths.join("x")
    );
    if a.verify > 0 {
        let rep = verify(&surface, &lambda, &mlp, a.verify, 8, a.seed)?;
        let mut buf = Vec::new();
        write_verify_report(&rep, &mut buf)?;
        write_or_print(a.report.as_deref(), buf)?;
    }
    Ok(())
}

fn run_metrics(a: &MetricArgs) -> Result<()> {
    let x = load_cloud(&a.a)?;
    let y = load_cloud(&a.b)?;
    let row = MetricRow {
        name: format!("{} vs {}", a.a.display(), a.b.display()).replace(',', ";"),
        chamfer_l1: chamfer(&x, &y, Metric::L1)?,
        chamfer_l2: chamfer(&x, &y, Metric::L2)?,
        hausdorff: hausdorff(&x, &y)?,
    };
    let mut buf = Vec::new();
    write_metric_report(&[row], &mut buf)?;
    write_or_print(a.out.as_deref(), buf)
}

fn run_plot(a: &PlotArgs) -> Result<()> {
    let run = RunDirectory::open(&a.run)?;
    for p in emit_plots(&run)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match &cli.command {
        Command::TrainClassifier(a) => run_train(a, "classifier"),
        Command::TrainRobust(a) => run_train(a, "robust"),
        Command::TrainRecon(a) => run_train(a, "recon"),
        Command::Project(a) => run_project(a),
        Command::Attack(a) => run_attack(a),
        Command::Extract(a) => run_extract(a),
        Command::CompilePl(a) => run_compile(a),
        Command::EvalMetrics(a) => run_metrics(a),
        Command::Plot(a) => run_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let e = |err: levelsets::Error| exit_code(&anyhow::Error::from(err));
        assert_eq!(e(levelsets::Error::Config("x".into())), 2);
        assert_eq!(e(levelsets::Error::Empty("cloud")), 3);
        assert_eq!(e(levelsets::Error::Numerical("diverged".into())), 4);
        assert_eq!(e(levelsets::Error::NoBracket { fa: 1.0, fb: 2.0 }), 4);
        let wrapped = anyhow::Error::from(levelsets::Error::NonFinite("loss")).context("training");
        assert_eq!(exit_code(&wrapped), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 2);
    }

    #[test]
    fn bounds_parse_per_axis() {
        assert_eq!(parse_bounds("-1,1; 0,2").unwrap(), vec![(-1.0, 1.0), (0.0, 2.0)]);
        assert!(parse_bounds("1,0").is_err());
        assert!(parse_bounds("1").is_err());
    }
}
