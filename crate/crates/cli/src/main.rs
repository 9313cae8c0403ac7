mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anc_core::bench::{bench_csv, bench_throughput, DEFAULT_SIZES};
use anc_core::evaluation::{
    is_passthrough, recovery_on, reference_grid, table1_crosstab, uniqueness_report, CrossProduct,
};
use anc_core::stream::{CipherStream, StreamCipher};
use anc_core::training::{sweep_projection_dims, train_until_converged, OrderingVerdict, TrainingConfig};
use anc_core::{generate_pool, AncModel, BitVector, Key, KeyPool};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::FileConfig;

const DEFAULT_REALIZATIONS: usize = 50;
const DEFAULT_BENCH_REPS: usize = 31;

#[derive(Parser)]
#[command(name = "random-anc", version)]
#[command(about = "Projection-layer adversarial neural cipher: keys, training, evaluation, streams")]
struct Cli {
    /// Base random seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// TOML file of defaults; explicit flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct PoolArgs {
    /// Key file, one hex key per line (default: generate the pool)
    #[arg(long)]
    keys: Option<PathBuf>,

    /// Peak sidelobe tolerance for generated or parsed keys
    #[arg(long)]
    psl_tolerance: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the balanced, low-sidelobe key pool
    Keygen {
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        psl_tolerance: Option<u32>,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train until a realization converges, reinitializing on failure
    Train {
        #[arg(long)]
        bits: Option<usize>,
        #[arg(long)]
        proj: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        max_epochs: Option<u32>,
        /// Message/key pairs per minibatch
        #[arg(long)]
        minibatch: Option<usize>,
        /// Half-width of the uniform weight initialization
        #[arg(long)]
        init_scale: Option<f64>,
        /// Fresh initializations to try before giving up
        #[arg(long)]
        realizations: Option<usize>,
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration CSV of the final realization
        #[arg(long)]
        report: Option<PathBuf>,
        /// Keep the adversary network in the saved bundle
        #[arg(long)]
        include_eve: bool,
    },
    /// Convergence rate per projection width
    Sweep {
        /// Comma-separated widths
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        max_epochs: Option<u32>,
        #[command(flatten)]
        pool: PoolArgs,
        /// Summary CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Width expected to converge most often
        #[arg(long, default_value_t = 8)]
        expected: usize,
    },
    /// Bob's (and Eve's, if bundled) bit recovery over every message and key
    Eval {
        model: PathBuf,
        #[command(flatten)]
        pool: PoolArgs,
        /// Per-key CSV
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-message ciphertext uniqueness across the key pool
    Uniqueness {
        model: PathBuf,
        #[command(flatten)]
        pool: PoolArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ciphertext grid for the four reference messages and keys
    Crosstab {
        model: PathBuf,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Encrypt a file byte by byte under one key
    Encrypt {
        model: PathBuf,
        /// Key in hex, e.g. 0x0F
        #[arg(long)]
        key: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write `<out>.header` with model checksum, key and byte count
        #[arg(long)]
        with_header: bool,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Decrypt a file produced by `encrypt`
    Decrypt {
        model: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Check `<in>.header` against the model and key first
        #[arg(long)]
        with_header: bool,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Encrypt/decrypt throughput per message size
    Bench {
        model: PathBuf,
        #[arg(long)]
        key: Option<String>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Header fields and parameter counts of a model bundle
    Inspect { model: PathBuf },
}

struct Ctx {
    file: FileConfig,
    seed: u64,
}

impl Ctx {
    fn bits(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.bits).unwrap_or(8)
    }

    fn tolerance(&self, flag: Option<u32>) -> u32 {
        flag.or(self.file.psl_tolerance).unwrap_or(5)
    }

    fn pool(&self, args: &PoolArgs, n_bits: usize) -> Result<KeyPool> {
        let tolerance = self.tolerance(args.psl_tolerance);
        match args.keys.as_ref().or(self.file.keys.as_ref()) {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Ok(KeyPool::parse(&text, n_bits, tolerance)?)
            }
            None => Ok(generate_pool(n_bits, tolerance)?),
        }
    }

    /// Pool for an existing model: its bit width and, unless overridden, the
    /// tolerance it was trained with.
    fn model_pool(&self, args: &PoolArgs, model: &AncModel) -> Result<KeyPool> {
        let args = PoolArgs {
            psl_tolerance: args
                .psl_tolerance
                .or(self.file.psl_tolerance)
                .or(Some(model.psl_tolerance)),
            ..args.clone()
        };
        self.pool(&args, model.n_bits)
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> Result<AncModel> {
    AncModel::load(path).with_context(|| format!("loading {}", path.display()))
}

fn model_checksum(path: &Path) -> Result<u32> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(crc32fast::hash(&bytes))
}

fn pool_key(pool: &KeyPool, hex: &str) -> Result<Key> {
    let bits = BitVector::from_hex(hex, pool.n_bits())?;
    pool.find(&bits)
        .cloned()
        .ok_or_else(|| anyhow!("key 0x{} is not in the key pool", bits.to_hex()))
}

fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".header");
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Ctx { file, seed };

    match cli.command {
        Command::Keygen {
            bits,
            psl_tolerance,
            out,
        } => {
            let pool = generate_pool(ctx.bits(bits), ctx.tolerance(psl_tolerance))?;
            write_or_print(out.as_deref(), &pool.to_text())?;
            if out.is_some() {
                eprintln!("{} keys", pool.len());
            }
        }

        Command::Train {
            bits,
            proj,
            lr,
            max_epochs,
            minibatch,
            init_scale,
            realizations,
            pool,
            out,
            report,
            include_eve,
        } => {
            let t = &ctx.file.train;
            let defaults = TrainingConfig::default();
            let n_bits = ctx.bits(bits);
            let keys = ctx.pool(&pool, n_bits)?;
            let cfg = TrainingConfig {
                n_bits,
                n_proj: proj.or(t.n_proj).unwrap_or(defaults.n_proj),
                learning_rate: lr.or(t.learning_rate).unwrap_or(defaults.learning_rate),
                beta1: t.beta1.unwrap_or(defaults.beta1),
                beta2: t.beta2.unwrap_or(defaults.beta2),
                eps: t.eps.unwrap_or(defaults.eps),
                max_epochs: max_epochs.or(t.max_epochs).unwrap_or(defaults.max_epochs),
                minibatch_messages: minibatch.or(t.minibatch).unwrap_or(defaults.minibatch_messages),
                seed: ctx.seed,
                update_order: t.update_order.clone().unwrap_or(defaults.update_order),
                key_psl_tolerance: keys.tolerance(),
                init_scale: init_scale.or(t.init_scale).unwrap_or(defaults.init_scale),
            };
            let attempts = realizations.or(t.realizations).unwrap_or(DEFAULT_REALIZATIONS);
            let (model, reports) = train_until_converged(&cfg, &keys, attempts)?;
            for (i, r) in reports.iter().enumerate() {
                eprintln!(
                    "realization {}: {} after {} epochs ({:.2} s), bob {:.4}",
                    i + 1,
                    r.outcome.as_str(),
                    r.epochs_used,
                    r.wall_time.as_secs_f64(),
                    r.final_bob_accuracy
                );
            }
            if let (Some(path), Some(last)) = (&report, reports.last()) {
                fs::write(path, last.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            let Some(model) = model else {
                bail!("no realization converged in {attempts} attempts");
            };
            let model = if include_eve { model } else { model.deployment() };
            model.save(&out).with_context(|| format!("writing {}", out.display()))?;
            println!("converged model written to {}", out.display());
        }

        Command::Sweep {
            dims,
            realizations,
            max_epochs,
            pool,
            out,
            expected,
        } => {
            let s = &ctx.file.sweep;
            let dims = dims.or_else(|| s.dims.clone()).unwrap_or_else(|| vec![4, 8, 16, 32]);
            let n = realizations.or(s.realizations).unwrap_or(DEFAULT_REALIZATIONS);
            let keys = ctx.pool(&pool, ctx.bits(None))?;
            let cfg = TrainingConfig {
                n_bits: keys.n_bits(),
                key_psl_tolerance: keys.tolerance(),
                max_epochs: max_epochs.or(ctx.file.train.max_epochs).unwrap_or(256),
                seed: ctx.seed,
                ..TrainingConfig::default()
            };
            let (report, _) = sweep_projection_dims(&dims, n, &cfg, &keys)?;
            write_or_print(out.as_deref(), &report.to_csv())?;
            if dims.contains(&expected) {
                let verdict = match report.ordering_verdict(expected)? {
                    OrderingVerdict::Confirmed => format!("width {expected} has the highest convergence rate"),
                    OrderingVerdict::Inconclusive { leader } => {
                        format!("inconclusive: width {leader} leads but the 95% intervals overlap")
                    }
                    OrderingVerdict::Contradicted { leader } => {
                        format!("width {leader} converges more often than width {expected}")
                    }
                };
                eprintln!("{verdict}");
            }
        }

        Command::Eval { model, pool, report } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&pool, &m)?;
            let cp = CrossProduct::new(m.n_bits, &keys)?;
            let all = recovery_on(&m, &cp)?;
            println!("bob bit recovery: {:.6}", all.bob);
            match all.eve {
                Some(e) => println!("eve bit recovery: {e:.6}"),
                None => println!("eve bit recovery: n/a (not in bundle)"),
            }
            println!("identity passthrough: {}", is_passthrough(&m, &keys)?);
            if let Some(path) = report {
                let messages: Vec<BitVector> = (0..1u64 << m.n_bits).map(|v| BitVector::from_value(v, m.n_bits)).collect();
                let mut csv = String::from("key,bob_accuracy,eve_accuracy\n");
                for k in keys.keys() {
                    let acc = recovery_on(&m, &CrossProduct::from_parts(&messages, std::slice::from_ref(k)))?;
                    let eve = acc.eve.map_or(String::new(), |e| format!("{e:.6}"));
                    let _ = writeln!(csv, "{},{:.6},{eve}", k.to_hex(), acc.bob);
                }
                fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            }
        }

        Command::Uniqueness { model, pool, out } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&pool, &m)?;
            let rep = uniqueness_report(&m, &keys)?;
            write_or_print(out.as_deref(), &rep.to_csv())?;
            eprintln!("mean uniqueness: {:.4}%", rep.mean_uniqueness_pct);
        }

        Command::Crosstab { model, pool } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&pool, &m)?;
            let (messages, grid_keys) = reference_grid(&keys)?;
            let tab = table1_crosstab(&m, &messages, &grid_keys)?;
            print!("{}", tab.render());
            println!("all distinct: {}", tab.all_distinct());
        }

        Command::Encrypt {
            model,
            key,
            input,
            out,
            with_header,
            pool,
        } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&pool, &m)?;
            let k = pool_key(&keys, &key)?;
            let plain = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let cipher = StreamCipher::new(&m, &k)?.encrypt(&plain)?;
            fs::write(&out, cipher.packed()).with_context(|| format!("writing {}", out.display()))?;
            if with_header {
                let line = format!("model={:08x} key={} bytes={}\n", model_checksum(&model)?, k.to_hex(), plain.len());
                fs::write(header_path(&out), line)?;
            }
        }

        Command::Decrypt {
            model,
            key,
            input,
            out,
            with_header,
            pool,
        } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&pool, &m)?;
            let k = pool_key(&keys, &key)?;
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            if with_header {
                check_header(&header_path(&input), model_checksum(&model)?, &k, bytes.len())?;
            }
            let bit_len = bytes.len() * 8;
            let cipher = CipherStream::from_packed(bytes, bit_len, &k)?;
            let plain = StreamCipher::new(&m, &k)?.decrypt(&cipher)?;
            fs::write(&out, plain).with_context(|| format!("writing {}", out.display()))?;
        }

        Command::Bench {
            model,
            key,
            sizes,
            reps,
            out,
        } => {
            let m = load_model(&model)?;
            let keys = ctx.model_pool(&PoolArgs::default(), &m)?;
            let k = match key {
                Some(h) => pool_key(&keys, &h)?,
                None => keys.keys().first().cloned().ok_or_else(|| anyhow!("empty key pool"))?,
            };
            let b = &ctx.file.bench;
            let sizes = sizes.or_else(|| b.sizes.clone()).unwrap_or_else(|| DEFAULT_SIZES.to_vec());
            let reps = reps.or(b.repetitions).unwrap_or(DEFAULT_BENCH_REPS);
            let rows = bench_throughput(&m, &k, &sizes, reps, ctx.seed)?;
            write_or_print(out.as_deref(), &bench_csv(&rows))?;
        }

        Command::Inspect { model } => {
            let m = load_model(&model)?;
            print!("{}", m.summary());
            println!("checksum: {:08x}", model_checksum(&model)?);
        }
    }
    Ok(())
}

fn check_header(path: &Path, checksum: u32, key: &Key, n_bytes: usize) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let expected = format!("model={checksum:08x} key={} bytes={n_bytes}", key.to_hex());
    if text.trim() != expected {
        bail!("header {} does not match ({} expected)", text.trim(), expected);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Diagnostics stay on one line even when a cause spans several.
            let msg = format!("{e:#}");
            eprintln!("error: {}", msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" "));
            ExitCode::FAILURE
        }
    }
}
