use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use heterseed::graph::{load_graph, save_graph, HetGraph, Split};
use heterseed::metapath::{
    bin_by_local_homophily, build_induced_graph, local_homophily, parse_metapaths,
    similarity_vs_homophily, Metapath, HOMOPHILY_BINS,
};
use heterseed::metrics::Metrics;
use heterseed::model::{Ablation, DecVariant};
use heterseed::synth::{
    bias_simulation, gen_author_groups, gen_theorem1, sbm_inject, GroupConfig, InjectMode,
    Theorem1Config,
};
use heterseed::train::{
    evaluate, load_checkpoint, save_checkpoint, train_full_batch, train_mini_batch, Context,
    Preset, TrainConfig, TrainReport,
};

#[derive(Parser, Debug)]
#[command(name = "heterseed", version, about = "Heterophily-aware heterogeneous graph learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; full-batch unless --batch-size is positive.
    Train(TrainCmd),
    /// Score a saved checkpoint on one split.
    Eval(EvalCmd),
    /// Per-metapath edge count, homophily and feature cosine, plus a linear fit.
    Analyze(AnalyzeCmd),
    /// Write a synthetic graph directory.
    #[command(subcommand)]
    GenSynth(SynthCmd),
    /// Squared bias of a heterophilic smoother against 4q².
    BiasSim(BiasCmd),
    /// Train, then report test metrics per local-homophily bin.
    HomophilyBins(BinsCmd),
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Graph directory (meta.json plus edge, feature, label and split files).
    #[arg(long)]
    graph: PathBuf,
    /// Metapaths separated by ';', e.g. "A-P-A;A-P-V-P-A".
    #[arg(long)]
    metapaths: String,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Hyperparameter preset; explicit flags override it.
    #[arg(long, default_value = "dblp")]
    preset: Preset,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Weight of the decoupling loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Label masking rate.
    #[arg(long)]
    beta: Option<f64>,
    /// 0 trains full-batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Neighbors sampled per layer, comma separated.
    #[arg(long, value_delimiter = ',')]
    fanout: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// cosine or crosscov.
    #[arg(long)]
    dec_variant: Option<DecVariant>,
    /// Epochs between pseudo-label rebuilds.
    #[arg(long)]
    refresh_period: Option<usize>,
    /// Drop the structural channel.
    #[arg(long)]
    no_shc: bool,
    /// Drop the decoupling loss.
    #[arg(long)]
    no_dec: bool,
    /// Drop the homophilic branch.
    #[arg(long)]
    no_homo: bool,
    /// Drop the heterophilic branch.
    #[arg(long)]
    no_hetero: bool,
    /// Drop label injection.
    #[arg(long)]
    no_mask: bool,
}

impl ConfigArgs {
    fn config(&self) -> TrainConfig {
        let mut c = self.preset.config();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f.clone() { c.$f = v; })* };
        }
        set!(lr, hidden, dropout, epochs, layers, alpha, beta, batch_size, fanout, seed, dec_variant, refresh_period);
        c.ablation = Ablation {
            no_shc: self.no_shc,
            no_dec: self.no_dec,
            no_homo: self.no_homo,
            no_hetero: self.no_hetero,
            no_mask: self.no_mask,
        };
        c
    }
}

#[derive(Args, Debug)]
struct TrainCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Per-epoch TSV log; stdout when absent.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Where to save the best-epoch model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Independent runs with seeds seed, seed+1, ...; reports mean ± std.
    #[arg(long, default_value_t = 1)]
    parallel_seeds: usize,
}

#[derive(Args, Debug)]
struct EvalCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Masking rate used in training; 1 keeps every label masked at inference.
    #[arg(long, default_value_t = 0.7)]
    beta: f64,
}

#[derive(Args, Debug)]
struct AnalyzeCmd {
    #[command(flatten)]
    graph: GraphArgs,
    /// Output TSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SynthCmd {
    /// Symmetric author/paper graph separable only through co-author counts.
    Theorem1 {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m_same: usize,
        #[arg(long, default_value_t = 1)]
        m_diff: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Clique-level label injection on an existing graph.
    Sbm {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value = "A-P-A")]
        metapaths: String,
        #[arg(long)]
        rho: f64,
        /// high or low.
        #[arg(long)]
        mode: InjectMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Homophilous author groups, one paper per group.
    Groups {
        #[arg(long, default_value_t = 60)]
        groups: usize,
        #[arg(long, default_value_t = 6)]
        group_size: usize,
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct BiasCmd {
    /// Comma-separated heterophilic masses in [0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    q_grid: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BinsCmd {
    #[command(flatten)]
    graph: GraphArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures after argument parsing; all map to exit code 2.
type DataResult<T> = Result<T, String>;

fn data<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var("HETERSEED_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> DataResult<()> {
    match cmd {
        Command::Train(c) => train(c),
        Command::Eval(c) => eval(c),
        Command::Analyze(c) => analyze(c),
        Command::GenSynth(c) => gen_synth(c),
        Command::BiasSim(c) => bias_sim(c),
        Command::HomophilyBins(c) => homophily_bins(c),
    }
}

fn open_out(path: Option<&Path>) -> DataResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load(args: &GraphArgs) -> DataResult<(HetGraph, Vec<Metapath>)> {
    let g = load_graph(&args.graph).map_err(data)?;
    let mps = parse_metapaths(&g, &args.metapaths).map_err(data)?;
    Ok((g, mps))
}

fn fit(g: &HetGraph, mps: &[Metapath], cfg: &TrainConfig) -> DataResult<TrainReport> {
    if cfg.batch_size == 0 {
        train_full_batch(g, mps, cfg)
    } else {
        train_mini_batch(g, mps, cfg)
    }
    .map_err(data)
}

fn with_suffix(p: &Path, seed: u64) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(format!(".seed{seed}"));
    PathBuf::from(s)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn train(c: TrainCmd) -> DataResult<()> {
    let (g, mps) = load(&c.graph)?;
    let base = c.config.config();
    base.validate().map_err(data)?;
    if c.parallel_seeds <= 1 {
        let r = fit(&g, &mps, &base)?;
        r.write_tsv(open_out(c.log.as_deref())?).map_err(data)?;
        if let Some(p) = &c.checkpoint {
            save_checkpoint(p, &r.model, &r.pseudo).map_err(data)?;
        }
        return Ok(());
    }
    let seeds: Vec<u64> = (0..c.parallel_seeds as u64).map(|k| base.seed + k).collect();
    let runs: Vec<DataResult<(u64, TrainReport)>> = seeds
        .par_iter()
        .map(|&seed| fit(&g, &mps, &TrainConfig { seed, ..base.clone() }).map(|r| (seed, r)))
        .collect();
    let mut tests: Vec<Metrics> = Vec::new();
    let mut out = open_out(None)?;
    for run in runs {
        let (seed, r) = run?;
        if let Some(p) = &c.log {
            r.write_tsv(open_out(Some(&with_suffix(p, seed)))?).map_err(data)?;
        }
        if let Some(p) = &c.checkpoint {
            save_checkpoint(&with_suffix(p, seed), &r.model, &r.pseudo).map_err(data)?;
        }
        let m = r.test.ok_or("the graph has no test split")?;
        writeln!(out, "seed {seed}\tmacro_f1={:.6}\tmicro_f1={:.6}", m.macro_f1, m.micro_f1).map_err(data)?;
        tests.push(m);
    }
    let (ma, sa) = mean_std(&tests.iter().map(|m| m.macro_f1).collect::<Vec<_>>());
    let (mi, si) = mean_std(&tests.iter().map(|m| m.micro_f1).collect::<Vec<_>>());
    writeln!(out, "mean\tmacro_f1={ma:.6}±{sa:.6}\tmicro_f1={mi:.6}±{si:.6}").map_err(data)?;
    Ok(())
}

fn parse_split(s: &str) -> DataResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(format!("unknown split {other:?}; expected train, val or test")),
    }
}

fn eval(c: EvalCmd) -> DataResult<()> {
    let split = parse_split(&c.split)?;
    let (g, mps) = load(&c.graph)?;
    let (model, pseudo) = load_checkpoint(&c.checkpoint, &g).map_err(data)?;
    let ctx = Context::new(&g, &mps, model.config.layers, !model.config.ablation.no_shc).map_err(data)?;
    let m = evaluate(&ctx, &model, &pseudo, c.beta, split).map_err(data)?;
    let ap = m.ap.map_or("nan".to_string(), |a| format!("{a:.6}"));
    println!("{}\tmacro_f1={:.6}\tmicro_f1={:.6}\tap={ap}", c.split, m.macro_f1, m.micro_f1);
    Ok(())
}

fn analyze(c: AnalyzeCmd) -> DataResult<()> {
    let (g, mps) = load(&c.graph)?;
    let report = similarity_vs_homophily(&g, &mps).map_err(data)?;
    let mut out = open_out(c.out.as_deref())?;
    let mut lines = vec!["metapath\tedges\thomophily\tmean_cosine".to_string()];
    for p in &report.points {
        lines.push(format!("{}\t{}\t{:.6}\t{:.6}", p.metapath, p.num_edges, p.homophily, p.mean_cosine));
    }
    lines.push(match report.fit {
        Some(f) => format!("fit\tslope={:.6}\tintercept={:.6}\tr2={:.6}", f.slope, f.intercept, f.r2),
        None => "fit\tundefined".to_string(),
    });
    for l in lines {
        writeln!(out, "{l}").map_err(data)?;
    }
    out.flush().map_err(data)
}

fn gen_synth(c: SynthCmd) -> DataResult<()> {
    let (g, out) = match c {
        SynthCmd::Theorem1 { n, m_same, m_diff, dim, out } => {
            (gen_theorem1(&Theorem1Config { n, m_same, m_diff, dim }).map_err(data)?, out)
        }
        SynthCmd::Sbm { base, metapaths, rho, mode, seed, out } => {
            let b = load_graph(&base).map_err(data)?;
            let mps = parse_metapaths(&b, &metapaths).map_err(data)?;
            (sbm_inject(&b, &mps, rho, mode, seed).map_err(data)?, out)
        }
        SynthCmd::Groups { groups, group_size, classes, dim, signal, seed, out } => {
            let cfg = GroupConfig { groups, group_size, classes, dim, signal, seed, ..GroupConfig::default() };
            (gen_author_groups(&cfg).map_err(data)?, out)
        }
    };
    save_graph(&g, &out).map_err(data)
}

fn bias_sim(c: BiasCmd) -> DataResult<()> {
    let rows = bias_simulation(&c.q_grid, c.trials, c.seed).map_err(data)?;
    let mut out = open_out(c.out.as_deref())?;
    writeln!(out, "q\tempirical\tclosed_form\tabs_error").map_err(data)?;
    for r in rows {
        writeln!(out, "{}\t{:.12}\t{:.12}\t{:.3e}", r.q, r.empirical, r.closed_form, (r.empirical - r.closed_form).abs())
            .map_err(data)?;
    }
    out.flush().map_err(data)
}

fn homophily_bins(c: BinsCmd) -> DataResult<()> {
    let (g, mps) = load(&c.graph)?;
    let cfg = c.config.config();
    cfg.validate().map_err(data)?;
    let r = fit(&g, &mps, &cfg)?;
    // local homophily is measured on the first metapath's induced graph
    let local = local_homophily(&build_induced_graph(&g, &mps[0]), g.labels());
    let bins = bin_by_local_homophily(&local);
    let test = g.splits().mask(Split::Test, g.num_targets());
    let mut out = open_out(c.out.as_deref())?;
    writeln!(out, "bin\tnodes\tmacro_f1\tmicro_f1").map_err(data)?;
    let mut left = 0.0;
    for (b, &right) in HOMOPHILY_BINS.iter().enumerate() {
        let nodes: Vec<usize> = bins[b].iter().copied().filter(|&v| test[v]).collect();
        let open = if b == 0 { '[' } else { '(' };
        let label = format!("{open}{left:.1},{right:.1}]");
        if nodes.is_empty() {
            writeln!(out, "{label}\t0\tnan\tnan").map_err(data)?;
        } else {
            let m = r.inference.score(&g, &nodes);
            writeln!(out, "{label}\t{}\t{:.6}\t{:.6}", nodes.len(), m.macro_f1, m.micro_f1).map_err(data)?;
        }
        left = right;
    }
    out.flush().map_err(data)
}
