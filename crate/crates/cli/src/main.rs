// Licensed under the Apache-2.0 license

//! `softip` command-line driver.
//!
//! Exit codes: 0 success, 1 usage/config/parse error, 2 protocol abort,
//! failing verdict or confidentiality violation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use softip::crypto::SecureRng;
use softip::daa::{daa_link, daa_verify, Basename, GroupParams, IssuerKeyPair, IssuerService, RogueList, VerifyResult};
use softip::hap::{attest_message, hap_provision, HwvRegistry};
use softip::netsim::{taint_scan, AdversaryPolicy, Secret, Transcript};
use softip::protocols::{check_conformance, generate_suite, run_attack, run_flow, AttackSuite, Flow, ScenarioConfig};

#[derive(Parser)]
#[command(
    name = "softip",
    version,
    about = "Soft IP core deployment protocols on a simulated network"
)]
struct Cli {
    /// -v prints protocol events, -vv every transcript record.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one flow and write its transcript.
    Run(RunArgs),
    /// Run an attack suite and print one verdict per scenario.
    Attack(AttackArgs),
    /// Scan a transcript for secrets sent in the clear.
    Scan(ScanArgs),
    /// Walk through DAA join, sign, verify, link and rogue detection.
    DaaDemo(DaaArgs),
    /// Summarize a transcript, or re-run a flow and compare against it.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FlowArg {
    Simple,
    SimpleUpdate,
    Advanced,
    Downgrade,
}

impl From<FlowArg> for Flow {
    fn from(f: FlowArg) -> Self {
        match f {
            FlowArg::Simple => Flow::Simple,
            FlowArg::SimpleUpdate => Flow::SimpleUpdate,
            FlowArg::Advanced => Flow::Advanced,
            FlowArg::Downgrade => Flow::Downgrade,
        }
    }
}

#[derive(Args)]
struct WorldArgs {
    /// Scenario TOML; defaults to the built-in demo world.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "simple")]
    flow: FlowArg,
    #[command(flatten)]
    world: WorldArgs,
    /// Adversary policy TOML; overrides the one in the config.
    #[arg(long)]
    adversary: Option<PathBuf>,
    #[arg(long, default_value = "softip-transcript.txt")]
    out: PathBuf,
    /// Also write the world's secrets (hex, label) for `scan`.
    #[arg(long)]
    secrets_out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Suite TOML; defaults to the suite generated from the honest flows.
    #[arg(long)]
    suite: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the suite that was run as TOML.
    #[arg(long)]
    emit_suite: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    secrets: PathBuf,
}

#[derive(Args)]
struct DaaArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "softip/demo")]
    basename: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Re-run this flow and require a byte-identical transcript.
    #[arg(long, value_enum)]
    flow: Option<FlowArg>,
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long)]
    adversary: Option<PathBuf>,
}

/// Failure that maps to exit code 2 rather than 1.
#[derive(Debug)]
struct Rejected(String);

impl std::fmt::Display for Rejected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_config(args: &WorldArgs, flow: Flow) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::from_toml(&read(p)?).with_context(|| format!("bad config {}", p.display()))?,
        None => ScenarioConfig::demo(flow.scheme(), args.seed.unwrap_or(1), 2),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_policy(path: Option<&Path>, cfg: &ScenarioConfig) -> Result<AdversaryPolicy> {
    match path {
        Some(p) => {
            AdversaryPolicy::from_toml(&read(p)?).map_err(|e| anyhow::anyhow!("bad adversary {}: {e}", p.display()))
        }
        None => Ok(cfg.adversary.clone()),
    }
}

fn show(t: &Transcript, verbose: u8) {
    if verbose >= 2 {
        for r in &t.records {
            eprintln!("{:>5} {} -> {} {} {}B", r.step, r.src, r.dst, r.label, r.bytes.len());
        }
    } else if verbose == 1 {
        for e in t.protocol_events() {
            eprintln!("{} -> {} {}", e.src, e.dst, e.label);
        }
    }
}

fn secrets_text(secrets: &[Secret]) -> String {
    secrets
        .iter()
        .map(|s| format!("{} {}\n", hex::encode(&s.bytes), s.label))
        .collect()
}

fn parse_secrets(text: &str) -> Result<Vec<Secret>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (h, label) = line.split_once(' ').unwrap_or((line, ""));
        let bytes = hex::decode(h).with_context(|| format!("secrets line {}: bad hex", n + 1))?;
        out.push(Secret::new(label.trim(), bytes));
    }
    Ok(out)
}

fn cmd_run(a: RunArgs, verbose: u8) -> Result<()> {
    let flow = Flow::from(a.flow);
    let cfg = load_config(&a.world, flow)?;
    let policy = load_policy(a.adversary.as_deref(), &cfg)?;
    let (world, t) = run_flow(&cfg, flow, policy)?;
    show(&t, verbose);
    write(&a.out, &t.export())?;
    if let Some(p) = &a.secrets_out {
        write(p, &secrets_text(&world.secrets()))?;
    }
    println!(
        "flow {flow}: {} ({} records, digest {})",
        t.outcome,
        t.records.len(),
        t.digest().to_hex()
    );
    if !t.outcome.is_success() {
        return Err(Rejected(format!("aborted: {}", t.outcome)).into());
    }
    if flow != Flow::Downgrade {
        match check_conformance(flow, cfg.buyer, &t) {
            Ok(()) => println!("conformance: ok"),
            Err(e) => println!("conformance: {e}"),
        }
    }
    Ok(())
}

fn cmd_attack(a: AttackArgs) -> Result<()> {
    let cfg = load_config(&a.world, Flow::Simple)?;
    let suite = match &a.suite {
        Some(p) => AttackSuite::from_toml(&read(p)?).with_context(|| format!("bad suite {}", p.display()))?,
        None => generate_suite(&cfg)?,
    };
    if let Some(p) = &a.emit_suite {
        write(p, &suite.to_toml())?;
    }
    let mut report = String::new();
    let mut failed = Vec::new();
    for s in &suite.scenarios {
        let (v, _) = run_attack(&cfg, s)?;
        report.push_str(&format!("{v}\n"));
        if !v.pass {
            failed.push(v.name.clone());
        }
    }
    report.push_str(&format!(
        "# {} scenarios, {} pass, {} fail\n",
        suite.scenarios.len(),
        suite.scenarios.len() - failed.len(),
        failed.len()
    ));
    print!("{report}");
    if let Some(p) = &a.out {
        write(p, &report)?;
    }
    if !failed.is_empty() {
        return Err(Rejected(format!("failing scenarios: {}", failed.join(", "))).into());
    }
    Ok(())
}

fn cmd_scan(a: ScanArgs) -> Result<()> {
    let t = Transcript::parse(&read(&a.transcript)?).map_err(|e| anyhow::anyhow!("bad transcript: {e}"))?;
    let secrets = parse_secrets(&read(&a.secrets)?)?;
    let found = taint_scan(&t.records, &secrets);
    for v in &found {
        println!("{v}");
    }
    println!(
        "# {} records, {} secrets, {} violations",
        t.records.len(),
        secrets.len(),
        found.len()
    );
    if !found.is_empty() {
        return Err(Rejected(format!("{} violations", found.len())).into());
    }
    Ok(())
}

fn cmd_daa_demo(a: DaaArgs) -> Result<()> {
    let mut rng = SecureRng::derive(&a.seed.to_be_bytes(), "cli/daa-demo");
    let registry = HwvRegistry::new();
    let issuer = IssuerService::new(IssuerKeyPair::generate(GroupParams::default(), &mut rng));
    let params = issuer.params().clone();
    let public = issuer.public().clone();
    let bsn = Basename::named(&a.basename);
    let other = Basename::named(format!("{}/other", a.basename));

    let mut devs = Vec::new();
    for serial in ["HAP-A", "HAP-B"] {
        let mut d = hap_provision(&registry, serial, &mut rng)?;
        d.join(&issuer, &registry, 0)?;
        println!("joined {serial} as {}", d.id().to_hex());
        devs.push(d);
    }

    let mut sign = |i: usize, b: &Basename, ctx: &[u8]| -> Result<(Vec<u8>, softip::daa::DaaSignature)> {
        let att = devs[i].attest_keypair(b, 0, ctx)?;
        Ok((attest_message(&att.public, ctx), att.signature))
    };
    let (m1, s1) = sign(0, &bsn, b"order-1")?;
    let (_, s2) = sign(0, &bsn, b"order-2")?;
    let (_, s3) = sign(1, &bsn, b"order-3")?;
    let (_, s4) = sign(0, &other, b"order-4")?;

    let none = RogueList::default();
    let mut ok = true;
    let mut check = |what: &str, got: String, want: String| {
        let pass = got == want;
        ok &= pass;
        println!("{}\t{what}: {got}", if pass { "ok" } else { "UNEXPECTED" });
    };
    check(
        "verify A",
        format!("{:?}", daa_verify(&params, &public, &m1, &s1, &bsn, &none)),
        "Accept".into(),
    );
    check(
        "verify A, wrong message",
        format!("{:?}", daa_verify(&params, &public, b"other", &s1, &bsn, &none)),
        "RejectInvalid".into(),
    );
    check(
        "link A/A same basename",
        format!("{}", daa_link(&s1, &s2, &bsn)?),
        "true".into(),
    );
    check(
        "link A/B same basename",
        format!("{}", daa_link(&s1, &s3, &bsn)?),
        "false".into(),
    );
    check(
        "link A/A across basenames",
        format!("{}", daa_link(&s1, &s4, &bsn)?),
        "false".into(),
    );
    issuer.rogue_add(devs[0].compromise(0));
    let rogue = issuer.rogue_list();
    check(
        "verify A after its key leaked",
        format!("{:?}", daa_verify(&params, &public, &m1, &s1, &bsn, &rogue)),
        format!("{:?}", VerifyResult::RejectRogue),
    );
    if !ok {
        return Err(Rejected("daa demo produced unexpected results".into()).into());
    }
    Ok(())
}

fn cmd_replay(a: ReplayArgs, verbose: u8) -> Result<()> {
    let text = read(&a.transcript)?;
    let t = Transcript::parse(&text).map_err(|e| anyhow::anyhow!("bad transcript: {e}"))?;
    show(&t, verbose);
    println!(
        "{} records, {} protocol events, outcome {}, digest {}",
        t.records.len(),
        t.protocol_events().len(),
        t.outcome,
        t.digest().to_hex()
    );
    let Some(flow) = a.flow else { return Ok(()) };
    let flow = Flow::from(flow);
    let cfg = load_config(&a.world, flow)?;
    let policy = load_policy(a.adversary.as_deref(), &cfg)?;
    let (_, again) = run_flow(&cfg, flow, policy)?;
    if again.export() != text {
        return Err(Rejected(format!("re-run differs: digest {}", again.digest().to_hex())).into());
    }
    println!("re-run of {flow} is byte-identical");
    Ok(())
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
    let verbose = cli.verbose;
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, verbose),
        Command::Attack(a) => cmd_attack(a),
        Command::Scan(a) => cmd_scan(a),
        Command::DaaDemo(a) => cmd_daa_demo(a),
        Command::Replay(a) => cmd_replay(a, verbose),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Rejected>() => {
            eprintln!("softip: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("softip: {e:#}");
            ExitCode::from(1)
        }
    }
}
