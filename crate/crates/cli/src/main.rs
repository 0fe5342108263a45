//! Command-line pipeline: data generation, training, evaluation, Pareto
//! analysis, C emission and the combined report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bme680_surrogates::codegen::{emit_c, emit_vectors, kernel_name, vectors_file_name};
use bme680_surrogates::datagen::{generate_mesh, generate_sequence_dataset, MeshSpec, SequenceSpec};
use bme680_surrogates::eval::{evaluate_instances, pareto_frontier, run_suite, test_datasets, EvalConfig, EvalRecord};
use bme680_surrogates::ir::{estimate_memory, CostTable};
use bme680_surrogates::model::{train, Family, TrainedModel};
use bme680_surrogates::{CalibrationConstants, Error, Quantity, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

const OUT_ENV: &str = "BME680_OUT_DIR";

#[derive(Parser)]
#[command(name = "bme680-surrogates", version, about = "Surrogate conversion routines for the BME680")]
struct Cli {
    /// JSON config: calibration, master_seed, cost_table, roster, output_dir, evaluation.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the env var and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled mesh or sequence dataset.
    GenData(GenData),
    /// Fit one family and write the model file.
    Train(Select),
    /// Evaluate families on the test sequences and write records.
    Evaluate(Select),
    /// Flag frontier membership of the stored records.
    Pareto,
    /// Write C kernels and golden vectors for trained models.
    EmitC(EmitC),
    /// Train and evaluate the roster; write CSV, JSON and plot data.
    Report(Report),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Mesh,
    Sequence,
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    quantity: String,
    #[arg(long, value_enum, default_value = "mesh")]
    kind: Kind,
    /// Mesh levels per input.
    #[arg(long, default_value_t = 20)]
    levels: usize,
    /// Mesh over the raw code domain instead of the inverse-refined grid.
    #[arg(long)]
    raw: bool,
    /// Sequence length.
    #[arg(long, default_value_t = 5000)]
    length: usize,
    /// Sequence seed (default: the first training seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Select {
    /// Quantity; all three when omitted.
    #[arg(long)]
    quantity: Option<String>,
    /// Family id such as `quadratic` or `gru-tanh-sigmoid`; the roster when omitted.
    #[arg(long)]
    family: Option<String>,
    /// `train`: the model seed. `evaluate`: overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Include sequence families for pressure and humidity.
    #[arg(long)]
    with_sequence: bool,
}

#[derive(Args)]
struct EmitC {
    #[command(flatten)]
    select: Select,
    /// Golden vectors per kernel.
    #[arg(long, default_value_t = 1000)]
    vectors: usize,
}

#[derive(Args)]
struct Report {
    #[arg(long)]
    quantity: Option<String>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    with_sequence: bool,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    calibration: Option<PathBuf>,
    master_seed: Option<u64>,
    cost_table: Option<PathBuf>,
    /// Family ids per quantity name; missing quantities use the default roster.
    roster: BTreeMap<String, Vec<String>>,
    output_dir: Option<PathBuf>,
    evaluation: Option<EvalConfig>,
}

struct Context {
    calib: CalibrationConstants,
    eval: EvalConfig,
    roster: BTreeMap<Quantity, Vec<Family>>,
    out: PathBuf,
}

/// Paths in the config resolve relative to the config file.
fn load_context(cli: &Cli) -> Result<Context> {
    let (cfg, base) = match &cli.config {
        Some(p) => {
            let cfg: ConfigFile = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ConfigFile::default(), PathBuf::new()),
    };
    let calib = match &cfg.calibration {
        Some(p) => CalibrationConstants::load(base.join(p))?,
        None => CalibrationConstants::fixture_c0(),
    };
    let mut eval = cfg.evaluation.unwrap_or_default();
    if let Some(s) = cfg.master_seed {
        eval.master_seed = s;
    }
    if let Some(p) = &cfg.cost_table {
        eval.cost_table = CostTable::load(base.join(p))?;
    }
    eval.validate()?;
    let mut roster = BTreeMap::new();
    for (name, ids) in &cfg.roster {
        let q: Quantity = name.parse()?;
        roster.insert(q, ids.iter().map(|s| s.parse()).collect::<Result<Vec<Family>>>()?);
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.map(|p| base.join(p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Context { calib, eval, roster, out })
}

impl Context {
    fn families(&self, q: Quantity, family: Option<&str>, with_sequence: bool) -> Result<Vec<Family>> {
        if let Some(f) = family {
            return Ok(vec![f.parse()?]);
        }
        Ok(match self.roster.get(&q) {
            Some(list) => list.clone(),
            None => Family::roster(with_sequence || q == Quantity::Temperature),
        })
    }

    fn echo_seeds(&self) {
        let train: Vec<u64> = (0..self.eval.seeds).map(|k| self.eval.train_seed(k)).collect();
        let test: Vec<u64> = (0..self.eval.dataset_count).map(|k| self.eval.test_seed(k)).collect();
        println!("seeds: master {} train {:?} test {:?}", self.eval.master_seed, train, test);
    }

    fn model_dir(&self, q: Quantity, f: &Family) -> PathBuf {
        self.out.join("models").join(q.name()).join(f.to_string())
    }

    /// Stored instances of a family, sorted by seed.
    fn stored_models(&self, q: Quantity, f: &Family) -> Result<Vec<TrainedModel>> {
        let dir = self.model_dir(q, f);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
        let mut models = paths.iter().map(TrainedModel::load).collect::<Result<Vec<_>>>()?;
        models.sort_by_key(|m| m.seed);
        Ok(models)
    }

    fn save_model(&self, m: &TrainedModel) -> Result<PathBuf> {
        let dir = self.model_dir(m.quantity, &m.family);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("seed{}.json", m.seed));
        m.save(&path)?;
        Ok(path)
    }

    /// Stored instances, or freshly trained ones on the protocol seeds.
    fn models_for(&self, q: Quantity, f: &Family) -> Result<Vec<TrainedModel>> {
        let stored = self.stored_models(q, f)?;
        if !stored.is_empty() {
            return Ok(stored);
        }
        (0..self.eval.instances(f))
            .map(|k| {
                let m = train(f, q, &self.calib, self.eval.train_seed(k), &self.eval.train)?;
                self.save_model(&m)?;
                Ok(m)
            })
            .collect()
    }
}

fn quantities(q: Option<&str>) -> Result<Vec<Quantity>> {
    match q {
        Some(s) => Ok(vec![s.parse()?]),
        None => Ok(Quantity::ALL.to_vec()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn gen_data(ctx: &Context, a: &GenData) -> Result<()> {
    let q: Quantity = a.quantity.parse()?;
    let dir = ctx.out.join("data");
    let (data, stem) = match a.kind {
        Kind::Mesh => {
            let spec = MeshSpec::new(a.levels, !a.raw)?;
            let stem = format!("{q}_mesh{}{}", a.levels, if a.raw { "_raw" } else { "" });
            (generate_mesh(q, spec, &ctx.calib)?, stem)
        }
        Kind::Sequence => {
            let seed = a.seed.unwrap_or(ctx.eval.train_seed(0));
            println!("seeds: sequence {seed} (inputs use {seed}..{})", seed + q.input_dim() as u64 - 1);
            (generate_sequence_dataset(q, SequenceSpec::new(a.length, seed), &ctx.calib)?, format!("{q}_seq{seed}"))
        }
    };
    data.write(&dir, &stem)?;
    println!("wrote {} ({} rows)", dir.join(format!("{stem}.csv")).display(), data.len());
    Ok(())
}

fn train_cmd(ctx: &Context, a: &Select) -> Result<()> {
    let seed = a.seed.unwrap_or(ctx.eval.train_seed(0));
    println!("seeds: model {seed}");
    for q in quantities(a.quantity.as_deref())? {
        for f in ctx.families(q, a.family.as_deref(), a.with_sequence)? {
            let m = train(&f, q, &ctx.calib, seed, &ctx.eval.train)?;
            let path = ctx.save_model(&m)?;
            println!("{q} {f}: {} training rows, stable {} -> {}", m.train_rows, m.stable(), path.display());
        }
    }
    Ok(())
}

fn record_line(r: &EvalRecord) -> String {
    format!(
        "{} {}: norm_rmse {:.4e} ({:.4e} {}) cost {} flash {} B ram {} B",
        r.quantity,
        r.model,
        r.norm_rmse,
        r.rmse_units,
        r.quantity.unit(),
        r.cost,
        r.flash_bytes,
        r.ram_bytes
    )
}

fn evaluate(ctx: &mut Context, a: &Select) -> Result<()> {
    if let Some(s) = a.seed {
        ctx.eval.master_seed = s;
    }
    ctx.echo_seeds();
    for q in quantities(a.quantity.as_deref())? {
        let tests = test_datasets(q, &ctx.calib, &ctx.eval)?;
        for f in ctx.families(q, a.family.as_deref(), a.with_sequence)? {
            let models = ctx.models_for(q, &f)?;
            let seeds: Vec<u64> = models.iter().map(|m| m.seed).collect();
            let r = evaluate_instances(&models, &tests, &ctx.eval.cost_table)?;
            println!("{} (model seeds {seeds:?})", record_line(&r));
            let text = serde_json::to_string_pretty(&r)? + "\n";
            write(&ctx.out.join("records").join(format!("{q}_{f}.json")), &text)?;
        }
    }
    Ok(())
}

fn pareto(ctx: &Context) -> Result<()> {
    let dir = ctx.out.join("records");
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(&dir) {
        Ok(rd) => rd.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?,
        Err(_) => Vec::new(),
    };
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let records = paths
        .iter()
        .map(|p| Ok(serde_json::from_str::<EvalRecord>(&std::fs::read_to_string(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    if records.is_empty() {
        return Err(Error::EmptyRoster);
    }
    ctx.echo_seeds();
    let points = pareto_frontier(&records);
    let mut csv = String::from("model,quantity,norm_rmse,cost,pareto\n");
    for p in &points {
        csv += &format!("{},{},{},{},{}\n", p.model, p.quantity, p.norm_rmse, p.cost, !p.dominated);
    }
    for q in Quantity::ALL {
        let on: Vec<&str> = points.iter().filter(|p| p.quantity == q && !p.dominated).map(|p| p.model.as_str()).collect();
        if points.iter().any(|p| p.quantity == q) {
            println!("{q} frontier: {}", on.join(", "));
        }
    }
    write(&ctx.out.join("pareto.csv"), &csv)
}

fn emit(ctx: &Context, a: &EmitC) -> Result<()> {
    ctx.echo_seeds();
    let dir = ctx.out.join("kernels");
    for q in quantities(a.select.quantity.as_deref())? {
        for f in ctx.families(q, a.select.family.as_deref(), a.select.with_sequence)? {
            let m = match a.select.seed {
                Some(seed) => train(&f, q, &ctx.calib, seed, &ctx.eval.train)?,
                None => ctx.models_for(q, &f)?.swap_remove(0),
            };
            let prog = m.lower()?;
            let name = kernel_name(q, &f.to_string());
            let (h, c) = emit_c(&prog, &name)?.write(&dir)?;
            // Vectors are seeded by the model seed so reruns reproduce them.
            let vectors = emit_vectors(&prog, a.vectors, m.seed)?;
            let vpath = dir.join(vectors_file_name(&name));
            std::fs::write(&vpath, vectors)?;
            let mem = estimate_memory(&prog);
            println!(
                "{q} {f} (seed {}): {} {} {} cost {} flash {} B ram {} B",
                m.seed,
                h.display(),
                c.display(),
                vpath.display(),
                ctx.eval.cost_table.cost(&prog),
                mem.flash_bytes,
                mem.ram_bytes
            );
        }
    }
    Ok(())
}

fn report(ctx: &mut Context, a: &Report) -> Result<()> {
    if let Some(s) = a.seed {
        ctx.eval.master_seed = s;
    }
    ctx.echo_seeds();
    let plan = quantities(a.quantity.as_deref())?
        .into_iter()
        .map(|q| Ok((q, ctx.families(q, None, a.with_sequence)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = run_suite(&plan, &ctx.calib, &ctx.eval, |line| eprintln!("{line}"))?;
    for r in &report.records {
        println!("{}", record_line(r));
    }
    for f in &report.failures {
        println!("{} {}: {}", f.quantity, f.model, f.error);
    }
    for (q, _) in &plan {
        println!("{q} frontier: {}", report.frontier(*q).join(", "));
    }
    write(&ctx.out.join("report.csv"), &report.to_csv())?;
    write(&ctx.out.join("report.json"), &report.to_json())?;
    write(&ctx.out.join("plot_data.csv"), &report.plot_data())
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = load_context(&cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate(&mut ctx, a),
        Command::Pareto => pareto(&ctx),
        Command::EmitC(a) => emit(&ctx, a),
        Command::Report(a) => report(&mut ctx, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::FAILURE
        }
    }
}
