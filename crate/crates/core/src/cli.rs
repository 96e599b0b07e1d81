//! The `braid` command line: generate braids, answer top-k queries,
//! evaluate against the exact oracle and report synopsis memory.
//!
//! Exit codes: 0 success, 2 usage, 3 unsupported (algorithm, weight) pair,
//! 4 unreadable or malformed input, 1 anything else.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::braid_file::{write_atomic, write_braid, BraidReader};
use crate::cm::CmConfig;
use crate::datagen::{generate, Distribution, GenSpec, Instance, Interleave, NoiseScale};
use crate::error::{Error, Result};
use crate::exp_bucket::ExponentialBucket;
use crate::extremes::{ExtremeMode, ExtremeTracker};
use crate::metrics::{score, EvalReport, CSV_HEADER};
use crate::model::{StreamId, Universe, WeightFunction, DEFAULT_UNIVERSE};
use crate::oracle::MaterializedBraid;
use crate::qdigest::Cadence;
use crate::synopsis::BraidSynopsis;
use crate::var_bucket::{CountEstimator, VariableBucket};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPABILITY: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub const RUN_HEADER: &str = "rank,stream_id,estimate";
pub const MEMSTAT_HEADER: &str = "algo,m,n,buckets,counter_bytes,id_set_bytes,total_bytes";

#[derive(Debug, Parser)]
#[command(name = "braid", version, about = "Top-k outlier streams in a braid of interleaved streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded braid file.
    Gen {
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One pass over a braid, then print the top-k answer.
    Run {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long)]
        k: usize,
        /// Subtract the braid's recorded value shift from the estimates.
        #[arg(long)]
        unshift: bool,
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the top-k answer for each k against the exact oracle.
    Eval {
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
        k_list: Vec<usize>,
        /// Dataset column; defaults to the generator's distribution or the file stem.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Snapshot size of a synopsis as the number of streams grows.
    Memstat {
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        sketch: SketchArgs,
        #[arg(long, value_enum, default_value = "varb")]
        algo: Algo,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "1000,2000,3000,4000,5000,6000,7000,8000,9000,10000"
        )]
        m_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Uniform,
    Outlier,
    Normal,
    AdvMedian,
    AdvSecondmax,
    AdvSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterleaveArg {
    Rr,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InstanceArg {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Variance,
    Stddev,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value = "uniform")]
    pub dist: Dist,
    #[arg(long, default_value_t = 1000)]
    pub m: usize,
    /// Items per stream for the synthetic distributions.
    #[arg(long, default_value_t = 5)]
    pub items: usize,
    #[arg(long = "U", default_value_t = DEFAULT_UNIVERSE)]
    pub universe: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "rr")]
    pub interleave: InterleaveArg,
    /// Outlier band start, as a fraction of U.
    #[arg(long, default_value_t = 0.8)]
    pub a: f64,
    /// Number of players in the disjointness braids.
    #[arg(long)]
    pub t: Option<usize>,
    /// Median construction: items per player per stream.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, value_enum)]
    pub instance: Option<InstanceArg>,
    #[arg(long, value_enum, default_value = "variance")]
    pub noise: NoiseArg,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Explicit player sets, e.g. `2|2,4|1,2,5|2,6`.
    #[arg(long)]
    pub sets: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Expb,
    Varb,
    Extremes,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CadenceArg {
    PerInsert,
    Batched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Union,
    PerBucket,
}

#[derive(Debug, Clone, Args)]
pub struct SketchArgs {
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    /// Count-Min width; overrides the one derived from eps.
    #[arg(long)]
    pub width: Option<usize>,
    /// Count-Min depth; overrides the one derived from delta.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub cm_seed: u64,
    #[arg(long, value_enum, default_value = "batched")]
    pub cadence: CadenceArg,
    #[arg(long, value_enum, default_value = "per-bucket")]
    pub estimator: EstimatorArg,
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[arg(long)]
    pub weight: WeightFunction,
    #[command(flatten)]
    pub sketch: SketchArgs,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "braid: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::InvalidK | Error::PromiseViolation(_) => EXIT_USAGE,
        Error::UnsupportedWeight { .. } => EXIT_CAPABILITY,
        Error::Format { .. } | Error::ValueOutOfRange { .. } | Error::Io(_) => EXIT_DATA,
        _ => EXIT_FAILURE,
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Gen { gen, out } => {
            let spec = gen.to_spec(gen.m)?;
            write_braid(out, &generate(&spec)?, Some(&spec))
        }
        Command::Run {
            query,
            k,
            unshift,
            input,
            out,
        } => {
            let (answer, shift) = run_query(query, *k, input)?;
            let offset = if *unshift { shift as f64 } else { 0.0 };
            let mut csv = format!("{RUN_HEADER}\n");
            for (i, (id, est)) in answer.iter().enumerate() {
                writeln!(csv, "{},{id},{}", i + 1, est - offset).expect("writing to a String");
            }
            emit(out.as_deref(), &csv, stdout)
        }
        Command::Eval {
            query,
            k_list,
            dataset,
            input,
            out,
        } => {
            let csv = eval_csv(query, k_list, dataset.as_deref(), input)?;
            emit(out.as_deref(), &csv, stdout)
        }
        Command::Memstat {
            gen,
            sketch,
            algo,
            m_list,
            out,
        } => {
            let csv = memstat_csv(gen, sketch, *algo, m_list)?;
            emit(out.as_deref(), &csv, stdout)
        }
    }
}

fn emit(out: Option<&Path>, csv: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, |f| Ok(f.write_all(csv.as_bytes())?)),
        None => Ok(stdout.write_all(csv.as_bytes())?),
    }
}

impl GenArgs {
    pub fn to_spec(&self, m: usize) -> Result<GenSpec> {
        let usage = |msg: &str| Error::InvalidParameter(msg.to_string());
        let instance = || -> Result<Instance> {
            match self.instance {
                Some(InstanceArg::Yes) => Ok(Instance::Yes),
                Some(InstanceArg::No) => Ok(Instance::No),
                None => Err(usage("--instance yes|no is required for the disjointness braids")),
            }
        };
        let t = || self.t.ok_or_else(|| usage("--t is required for this distribution"));
        let dist = match self.dist {
            Dist::Uniform => Distribution::Uniform,
            Dist::Outlier => Distribution::Outlier { a: self.a },
            Dist::Normal => Distribution::NormalInter,
            Dist::AdvMedian => Distribution::AdversarialMedian {
                t: t()?,
                p: self.p.ok_or_else(|| usage("--p is required for adv-median"))?,
                instance: instance()?,
            },
            Dist::AdvSecondmax => Distribution::AdversarialSecondMax {
                t: t()?,
                instance: instance()?,
            },
            Dist::AdvSpread => {
                if self.t.is_some_and(|t| t != 2) {
                    return Err(usage("the spread construction has exactly 2 players"));
                }
                Distribution::AdversarialSpread { instance: instance()? }
            }
        };
        let synthetic = dist.players().is_none();
        if synthetic && (self.t.is_some() || self.p.is_some() || self.instance.is_some()) {
            return Err(usage("--t, --p and --instance only apply to the disjointness braids"));
        }
        if !synthetic && self.p.is_some() && self.dist != Dist::AdvMedian {
            return Err(usage("--p only applies to adv-median"));
        }
        let mut spec = GenSpec::new(dist, m, self.items, self.seed);
        spec.universe = Universe::new(self.universe)?;
        spec.interleave = match self.interleave {
            InterleaveArg::Rr => Interleave::RoundRobin,
            InterleaveArg::Random => Interleave::UniformRandom,
        };
        spec.noise = match self.noise {
            NoiseArg::Variance => NoiseScale::Variance,
            NoiseArg::Stddev => NoiseScale::StdDev,
        };
        spec.jitter = self.jitter;
        spec.sets = self.sets.as_deref().map(parse_sets).transpose()?;
        spec.validate()?;
        Ok(spec)
    }
}

/// `1,2|3||4` into `[[1, 2], [3], [], [4]]`.
pub fn parse_sets(s: &str) -> Result<Vec<Vec<StreamId>>> {
    s.split('|')
        .map(|set| {
            set.split(',')
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad stream id `{x}` in --sets")))
                })
                .collect()
        })
        .collect()
}

impl SketchArgs {
    pub fn cm_config(&self) -> Result<CmConfig> {
        let derived = CmConfig::from_error_bounds(self.eps, self.delta, self.cm_seed)?;
        CmConfig::new(
            self.width.unwrap_or(derived.width),
            self.depth.unwrap_or(derived.depth),
            self.cm_seed,
        )
    }

    pub fn variable_bucket(&self, universe: Universe) -> Result<VariableBucket> {
        let cadence = match self.cadence {
            CadenceArg::PerInsert => Cadence::PerInsert,
            CadenceArg::Batched => Cadence::batched_for(self.rho),
        };
        let estimator = match self.estimator {
            EstimatorArg::Union => CountEstimator::Union,
            EstimatorArg::PerBucket => CountEstimator::PerBucket,
        };
        Ok(VariableBucket::with_cadence(self.rho, universe, self.cm_config()?, cadence)?
            .with_estimator(estimator))
    }

    pub fn exponential_bucket(&self, universe: Universe) -> Result<ExponentialBucket> {
        ExponentialBucket::new(self.rho, universe, self.cm_config()?)
    }
}

fn extreme_mode(weight: WeightFunction) -> Result<ExtremeMode> {
    match weight {
        WeightFunction::Max => Ok(ExtremeMode::Max),
        WeightFunction::Min => Ok(ExtremeMode::Min),
        w => Err(Error::UnsupportedWeight {
            algo: "extremes",
            weight: w.to_string(),
            reason: "the extremes tracker answers max and min only",
        }),
    }
}

/// Everything one pass over the braid produces.
struct Pass {
    answer: Vec<(StreamId, f64)>,
    memory_bytes: usize,
    shift: i64,
    spec: Option<String>,
    oracle: Option<MaterializedBraid>,
}

/// Stream the braid once through `algo`, answering top-`k_max`. With
/// `keep_records` the records are also collected for the oracle.
fn single_pass(query: &QueryArgs, k_max: usize, input: &Path, keep_records: bool) -> Result<Pass> {
    if k_max < 1 {
        return Err(Error::InvalidK);
    }
    let weight = query.weight;
    let mut reader = BraidReader::open(input)?;
    let header = reader.header().clone();
    let mut records = Vec::new();
    let mut keep = |r: (StreamId, f64)| {
        if keep_records {
            records.push(r);
        }
    };
    let (answer, memory_bytes) = match query.algo {
        Algo::Expb | Algo::Varb => {
            let mut syn: Box<dyn BraidSynopsis> = match query.algo {
                Algo::Expb => Box::new(query.sketch.exponential_bucket(header.universe)?),
                _ => Box::new(query.sketch.variable_bucket(header.universe)?),
            };
            if !weight.is_sketchable() {
                return Err(crate::synopsis::unsupported(syn.name(), weight));
            }
            while let Some(item) = reader.next_item()? {
                syn.ingest(&item)?;
                keep((item.stream_id, item.value as f64));
            }
            (syn.topk(weight, k_max)?, syn.memory().total())
        }
        Algo::Extremes => {
            let mut tracker = ExtremeTracker::new(k_max, extreme_mode(weight)?)?;
            while let Some((id, v)) = reader.next_record()? {
                tracker.offer(id, v);
                keep((id, v));
            }
            // Each retained entry is an id and a value.
            (tracker.topk(), 16 * tracker.len())
        }
        Algo::Oracle => {
            let mut all = Vec::new();
            while let Some(r) = reader.next_record()? {
                all.push(r);
            }
            let n = all.len();
            let oracle = MaterializedBraid::from_pairs(all);
            let answer = oracle.exact_topk(weight, k_max)?;
            // Every value plus one id per stream.
            let bytes = 8 * n + 8 * oracle.m();
            return Ok(Pass {
                answer,
                memory_bytes: bytes,
                shift: header.shift,
                spec: header.spec,
                oracle: keep_records.then_some(oracle),
            });
        }
    };
    Ok(Pass {
        answer,
        memory_bytes,
        shift: header.shift,
        spec: header.spec,
        oracle: keep_records.then(|| MaterializedBraid::from_pairs(records)),
    })
}

pub fn run_query(query: &QueryArgs, k: usize, input: &Path) -> Result<(Vec<(StreamId, f64)>, i64)> {
    let pass = single_pass(query, k, input, false)?;
    Ok((pass.answer, pass.shift))
}

fn algo_token(algo: Algo) -> &'static str {
    match algo {
        Algo::Expb => "expb",
        Algo::Varb => "varb",
        Algo::Extremes => "extremes",
        Algo::Oracle => "oracle",
    }
}

/// Dataset name from the spec line's `dist=` token, else the file stem.
fn dataset_name(spec: Option<&str>, input: &Path) -> String {
    spec.and_then(|s| s.split_ascii_whitespace().find_map(|f| f.strip_prefix("dist=")))
        .map(str::to_string)
        .or_else(|| input.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "braid".to_string())
}

fn spec_seed(spec: Option<&str>) -> u64 {
    spec.and_then(|s| s.split_ascii_whitespace().find_map(|f| f.strip_prefix("seed=")))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

pub fn eval_csv(query: &QueryArgs, k_list: &[usize], dataset: Option<&str>, input: &Path) -> Result<String> {
    let k_max = k_list.iter().copied().max().ok_or(Error::InvalidK)?;
    if k_list.contains(&0) {
        return Err(Error::InvalidK);
    }
    let pass = single_pass(query, k_max, input, true)?;
    let oracle = pass.oracle.as_ref().expect("records kept for evaluation");
    if k_max > oracle.m() {
        return Err(Error::InvalidParameter(format!(
            "k = {k_max} exceeds the {} streams in the braid",
            oracle.m()
        )));
    }
    let ranking = oracle.ranking(query.weight)?;
    let dataset = dataset.map_or_else(|| dataset_name(pass.spec.as_deref(), input), str::to_string);
    let mut csv = format!("{CSV_HEADER}\n");
    for &k in k_list {
        let answer = &pass.answer[..k.min(pass.answer.len())];
        let report = EvalReport {
            algo: algo_token(query.algo).to_string(),
            dataset: dataset.clone(),
            weight: query.weight,
            k,
            eps: query.sketch.eps,
            delta: query.sketch.delta,
            rho: query.sketch.rho,
            scores: score(answer, &ranking, k)?,
            memory_bytes: pass.memory_bytes,
            seed: spec_seed(pass.spec.as_deref()),
        };
        writeln!(csv, "{}", report.csv_row()).expect("writing to a String");
    }
    Ok(csv)
}

pub fn memstat_csv(gen: &GenArgs, sketch: &SketchArgs, algo: Algo, m_list: &[usize]) -> Result<String> {
    let mut csv = format!("{MEMSTAT_HEADER}\n");
    for &m in m_list {
        let spec = gen.to_spec(m)?;
        let braid = generate(&spec)?;
        let items = braid.items()?;
        let (memory, buckets) = match algo {
            Algo::Varb => {
                let mut s = sketch.variable_bucket(braid.universe)?;
                for it in &items {
                    s.ingest(it)?;
                }
                s.compress();
                (s.memory(), s.bucket_count())
            }
            Algo::Expb => {
                let mut s = sketch.exponential_bucket(braid.universe)?;
                for it in &items {
                    s.ingest(it)?;
                }
                (s.memory(), s.bucket_count())
            }
            Algo::Extremes | Algo::Oracle => {
                return Err(Error::InvalidParameter(
                    "memstat reports the bucketed synopses (expb, varb)".into(),
                ))
            }
        };
        writeln!(
            csv,
            "{},{m},{},{buckets},{},{},{}",
            algo_token(algo),
            items.len(),
            memory.counter_component(),
            memory.id_set,
            memory.total(),
        )
        .expect("writing to a String");
    }
    Ok(csv)
}
