use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use krbccn::consumer::Consumer;
use krbccn::crypto::{Crypto, KdfParams, PublicKey};
use krbccn::harness::bench::{bench_caching_all, bench_caching_policies, bench_handler_times, bench_rtt, BenchReport, CachingPolicy};
use krbccn::harness::config::{ConsumerFile, ProducerSection, RealmConfig, SourceSection};
use krbccn::harness::net::{client_transport, start_all, start_role, Role};
use krbccn::harness::testbed::Testbed;
use krbccn::harness::{Clock, SystemClock};
use krbccn::services::{PolicyStore, ProducerMode, UserAuth, UserStore};
use krbccn::{Name, Namespace};

#[derive(Parser)]
#[command(name = "krbccn", version, about = "Authenticated, authorized content retrieval over a CCN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Whole-realm setup and single-process deployment.
    #[command(subcommand)]
    Realm(RealmCmd),
    /// The forwarder alone.
    #[command(subcommand)]
    Router(RunCmd),
    /// The key authentication server alone.
    #[command(subcommand)]
    Kas(RunCmd),
    /// The ticket granting server alone.
    #[command(subcommand)]
    Tgs(RunCmd),
    /// One restricted-content producer.
    #[command(subcommand)]
    Producer(ProducerCmd),
    /// One unrestricted producer.
    #[command(subcommand)]
    Plain(PlainCmd),
    #[command(subcommand)]
    Consumer(ConsumerCmd),
    /// Edit user, policy and producer registrations.
    #[command(subcommand)]
    Admin(AdminCmd),
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum RealmCmd {
    /// Write a demo realm: realm.toml, stores, public content and consumer files.
    Init {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 7000)]
        base_port: u16,
        /// Extra generated users (user-0, user-1, ...).
        #[arg(long, default_value_t = 0)]
        users: usize,
    },
    /// Start the router and every service in this process.
    Run(RealmArgs),
}

#[derive(Args)]
struct RealmArgs {
    config: PathBuf,
    /// Derive all randomness from this seed (testing only).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum RunCmd {
    Run(RealmArgs),
}

#[derive(Subcommand)]
enum ProducerCmd {
    Run {
        #[command(flatten)]
        realm: RealmArgs,
        /// Which `[[producer]]` entry to serve.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Require the challenge-response round whatever the file says.
        #[arg(long)]
        mutual: bool,
    },
}

#[derive(Subcommand)]
enum PlainCmd {
    Run {
        #[command(flatten)]
        realm: RealmArgs,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
}

#[derive(Subcommand)]
enum ConsumerCmd {
    /// Fetch one content object; the bytes go to stdout.
    Get {
        name: Name,
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        mutual: bool,
        /// Write the content here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Plain,
    Mutual,
}

#[derive(Subcommand)]
enum AdminCmd {
    /// Add a user. Without --public-key or --password a key pair is generated
    /// and the secret key printed.
    AddUser {
        users: PathBuf,
        uid: String,
        #[arg(long, conflicts_with = "password")]
        public_key: Option<String>,
        #[arg(long)]
        password: Option<String>,
        /// Argon2id cost, e.g. m=19456,t=2,p=1.
        #[arg(long)]
        kdf: Option<KdfParams>,
    },
    /// Allow a user a namespace.
    AddPolicy {
        policies: PathBuf,
        uid: String,
        namespace: Namespace,
    },
    /// Add a `[[producer]]` entry with a fresh k_P to a realm file.
    RegisterProducer {
        realm: PathBuf,
        namespace: Namespace,
        #[arg(long, value_enum, default_value = "plain")]
        mode: Mode,
        #[arg(long)]
        prefix: Option<Name>,
        #[arg(long)]
        listen: Option<String>,
        /// Serve files under this directory; synthetic content otherwise.
        #[arg(long)]
        files: Option<PathBuf>,
        #[arg(long, default_value_t = 10240)]
        size: usize,
    },
}

#[derive(Args)]
struct BenchOut {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Both,
    TgtOnly,
    None,
    All,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Sequential requests under each caching policy.
    Caching {
        #[command(flatten)]
        out: BenchOut,
        #[arg(long, default_value_t = 1000)]
        requests: u64,
        #[arg(long, value_enum, default_value = "all")]
        policy: Policy,
    },
    /// Per-handler processing time and crypto operation counts.
    Handlers {
        #[command(flatten)]
        out: BenchOut,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Round-trip time of each exchange kind.
    Rtt {
        #[command(flatten)]
        out: BenchOut,
        #[arg(long, default_value_t = 20)]
        concurrent: usize,
    },
}

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn load_realm(path: &Path) -> Result<(RealmConfig, UserStore, PolicyStore)> {
    let config = RealmConfig::load(path)?;
    let (users, policies) = config.load_stores()?;
    Ok((config, users, policies))
}

fn clock() -> Arc<dyn Clock> {
    Arc::new(SystemClock)
}

async fn serve_forever(what: &str, role: Role, args: &RealmArgs) -> Result<()> {
    let (config, users, policies) = load_realm(&args.config)?;
    let addr = start_role(&config, users, policies, &role, clock(), args.seed).await?;
    eprintln!("{what} listening on {addr}");
    std::future::pending::<()>().await;
    Ok(())
}

fn read_or_empty(path: &Path) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(format!("{}: {e}", path.display()).into()),
    }
}

fn finish_bench(report: BenchReport, out: &BenchOut) -> Result<()> {
    print!("{}", report.to_table());
    if let Some(path) = &out.out {
        std::fs::write(path, report.to_json())?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

async fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Realm(RealmCmd::Init { dir, seed, base_port, users }) => {
            Testbed::new(seed, users).write_to(&dir, base_port)?;
            println!("{}", dir.join("realm.toml").display());
        }
        Command::Realm(RealmCmd::Run(args)) => {
            let (config, users, policies) = load_realm(&args.config)?;
            let (addr, _) = start_all(&config, users, policies, clock(), args.seed).await?;
            eprintln!("realm up, router listening on {addr}");
            std::future::pending::<()>().await;
        }
        Command::Router(RunCmd::Run(args)) => serve_forever("router", Role::Router, &args).await?,
        Command::Kas(RunCmd::Run(args)) => serve_forever("kas", Role::Kas, &args).await?,
        Command::Tgs(RunCmd::Run(args)) => serve_forever("tgs", Role::Tgs, &args).await?,
        Command::Producer(ProducerCmd::Run { realm, index, mutual }) => {
            serve_forever("producer", Role::Producer { index, mutual }, &realm).await?
        }
        Command::Plain(PlainCmd::Run { realm, index }) => serve_forever("plain producer", Role::Plain(index), &realm).await?,

        Command::Consumer(ConsumerCmd::Get { name, config, mutual, out }) => {
            let file = ConsumerFile::load(&config)?;
            let transport = client_transport(&file.router, Duration::from_millis(file.deadline_ms), file.digest).await?;
            let consumer = Consumer::new(file.client_config()?, Arc::new(transport), Crypto::default());
            let now = SystemClock.now();
            let data = if mutual {
                consumer.request_mutual(&name, now).await?
            } else {
                consumer.request(&name, now).await?
            };
            match out {
                Some(path) => std::fs::write(path, &data)?,
                None => std::io::stdout().write_all(&data)?,
            }
            let x = consumer.exchanges();
            eprintln!(
                "{} bytes; exchanges: authentication={} authorization={} content={} challenge={} plain={}",
                data.len(),
                x.authentication,
                x.authorization,
                x.content,
                x.challenge,
                x.plain
            );
        }

        Command::Admin(AdminCmd::AddUser { users, uid, public_key, password, kdf }) => {
            let mut store = UserStore::parse(&read_or_empty(&users)?)?;
            let crypto = Crypto::default();
            let auth = match (public_key, password) {
                (Some(pk), _) => UserAuth::PublicKey(PublicKey::from_base64(&pk)?),
                (None, Some(pw)) => {
                    let salt = crypto.random_salt();
                    let params = kdf.unwrap_or_default();
                    println!("salt = \"{}\"", base64_encode(&salt));
                    println!("kdf = \"{params}\"");
                    UserAuth::password(&pw, salt, params)?
                }
                (None, None) => {
                    let pair = crypto.generate_keypair();
                    println!("secret_key = \"{}\"", pair.secret.to_base64());
                    UserAuth::PublicKey(pair.public)
                }
            };
            store.insert(&uid, auth)?;
            std::fs::write(&users, store.render())?;
        }
        Command::Admin(AdminCmd::AddPolicy { policies, uid, namespace }) => {
            let mut store = PolicyStore::parse(&read_or_empty(&policies)?)?;
            store.add(&uid, namespace)?;
            std::fs::write(&policies, store.render())?;
        }
        Command::Admin(AdminCmd::RegisterProducer { realm, namespace, mode, prefix, listen, files, size }) => {
            let mut config = RealmConfig::parse(&std::fs::read_to_string(&realm)?)?;
            config.producers.push(ProducerSection {
                namespace,
                k_p: Crypto::default().random_key().to_base64(),
                mode: match mode {
                    Mode::Plain => ProducerMode::Plain,
                    Mode::Mutual => ProducerMode::Mutual,
                },
                prefix,
                listen,
                source: match files {
                    Some(root) => SourceSection::Files { root },
                    None => SourceSection::Synthetic { size },
                },
            });
            config.validate()?;
            std::fs::write(&realm, config.render())?;
        }

        Command::Bench(BenchCmd::Caching { out, requests, policy }) => {
            let policy = match policy {
                Policy::Both => Some(CachingPolicy::BothCached),
                Policy::TgtOnly => Some(CachingPolicy::TgtOnly),
                Policy::None => Some(CachingPolicy::None),
                Policy::All => None,
            };
            let report = match policy {
                Some(p) => bench_caching_policies(out.seed, requests, p).await?,
                None => bench_caching_all(out.seed, requests).await?,
            };
            finish_bench(report, &out)?;
        }
        Command::Bench(BenchCmd::Handlers { out, samples }) => {
            let report = bench_handler_times(out.seed, samples)?;
            finish_bench(report, &out)?;
        }
        Command::Bench(BenchCmd::Rtt { out, concurrent }) => {
            let report = bench_rtt(out.seed, concurrent).await?;
            finish_bench(report, &out)?;
        }
    }
    Ok(())
}

fn base64_encode(bytes: &[u8]) -> String {
    use base64::Engine;
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
