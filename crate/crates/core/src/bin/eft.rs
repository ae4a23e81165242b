//! `eft`: run the issuer, relay and merchant services, and drive a wallet.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use eft_core::api::clients::{Backoff, IssuerClient, MerchantClient, RelayClient};
use eft_core::api::server::serve_forever;
use eft_core::api::{Handler, HttpTransport, Transport};
use eft_core::clock::{Clock, SharedClock, SystemClock};
use eft_core::crypto::{DenominationKeyset, IdentityKeyPair, KeyProfile, KeyRole, PublicKey};
use eft_core::issuer::{ApproveClaim, CompliancePolicy, IssuerConfig, IssuerService, VendorRegistration};
use eft_core::ledger::LedgerConfig;
use eft_core::merchant::{
    CreateInvoice, Invoice, MerchantConfig, MerchantService, OnwardRequest, RedeemRequest, DEFAULT_INVOICE_TTL_SECS,
};
use eft_core::relay::{RelayConfig, RelayService};
use eft_core::token::VendorCertificate;
use eft_core::wallet::{Wallet, WalletConfig, WalletError};

#[derive(Parser)]
#[command(name = "eft", version, about = "Emergency financing tokens")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Issuer setup, service and administration.
    #[command(subcommand)]
    Issuer(IssuerCmd),
    /// Relay setup and service.
    #[command(subcommand)]
    Relay(RelayCmd),
    /// Read-only ledger queries against a relay.
    #[command(subcommand)]
    Ledger(LedgerCmd),
    /// Claimant wallet.
    Wallet(WalletArgs),
    /// Merchant setup, service and operations.
    #[command(subcommand)]
    Merchant(MerchantCmd),
}

#[derive(Subcommand)]
enum IssuerCmd {
    /// Generate issuer keys and configuration in a data directory.
    Init {
        #[arg(long)]
        dir: PathBuf,
        /// Public key of the standalone relay, or use --ledger.
        #[arg(long, conflicts_with = "ledger")]
        relay_key: Option<PublicKey>,
        /// Ledger configuration file (members, quorum, epoch length).
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Compliance policy file; the built-in demo policy otherwise.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "production")]
        profile: KeyProfile,
        #[arg(long, env = "EFT_ADMIN_TOKEN")]
        admin_token: String,
    },
    /// Serve the issuer API.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7001")]
        listen: SocketAddr,
    },
    /// Approve or freeze a claim.
    Claim {
        #[command(flatten)]
        admin: AdminArgs,
        #[arg(long)]
        claim: String,
        /// Approved amount; omit together with --freeze.
        #[arg(long, required_unless_present = "freeze")]
        amount: Option<u64>,
        #[arg(long)]
        freeze: bool,
    },
    /// Inspect or revoke a vendor.
    Vendor {
        #[command(flatten)]
        admin: AdminArgs,
        #[arg(long)]
        vendor: PublicKey,
        #[arg(long)]
        revoke: Option<String>,
    },
    /// Outstanding value, redemptions and tax withheld.
    Audit {
        #[command(flatten)]
        admin: AdminArgs,
    },
}

#[derive(Args)]
struct AdminArgs {
    #[arg(long, env = "EFT_ISSUER")]
    issuer: String,
    #[arg(long, env = "EFT_ADMIN_TOKEN")]
    admin_token: String,
}

impl AdminArgs {
    fn client(&self) -> IssuerClient {
        IssuerClient::new(http(), &self.issuer).admin(&self.admin_token)
    }
}

#[derive(Subcommand)]
enum RelayCmd {
    /// Generate a relay identity; prints its public key.
    Init {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Serve the relay API. Issuer keys and the ledger come from the issuer.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, env = "EFT_ISSUER")]
        issuer: String,
        /// Other ledger members as PUBLIC_KEY=URL.
        #[arg(long = "peer")]
        peers: Vec<String>,
        #[arg(long, default_value = "127.0.0.1:7002")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 200)]
        tick_ms: u64,
    },
}

#[derive(Subcommand)]
enum LedgerCmd {
    /// Latest checkpoint, or the one at --height.
    Checkpoint {
        #[arg(long, env = "EFT_RELAY")]
        relay: String,
        #[arg(long)]
        height: Option<u64>,
    },
    /// History status of one token.
    Token {
        #[arg(long, env = "EFT_RELAY")]
        relay: String,
        token: PublicKey,
    },
    /// Ledger membership and quorum.
    Config {
        #[arg(long, env = "EFT_RELAY")]
        relay: String,
    },
}

#[derive(Args)]
struct WalletArgs {
    #[arg(long, env = "EFT_WALLET", default_value = "wallet.eft")]
    store: PathBuf,
    #[arg(long, env = "EFT_PASSPHRASE", hide_env_values = true)]
    passphrase: String,
    #[command(subcommand)]
    command: WalletCmd,
}

#[derive(Subcommand)]
enum WalletCmd {
    /// Create an encrypted wallet store.
    Init {
        #[arg(long, env = "EFT_ISSUER")]
        issuer: String,
        #[arg(long)]
        claim: Option<String>,
    },
    /// Obtain tokens for an amount against the claim.
    Request {
        amount: u64,
        #[arg(long)]
        claim: Option<String>,
    },
    Balance,
    /// Pay an invoice from a file, or fetch it from a merchant by id.
    Pay {
        #[arg(long, conflicts_with_all = ["merchant", "id"])]
        invoice: Option<PathBuf>,
        #[arg(long, requires = "id")]
        merchant: Option<String>,
        #[arg(long)]
        id: Option<String>,
    },
    /// Write an encrypted backup.
    Export {
        out: PathBuf,
        #[arg(long, env = "EFT_BACKUP_PASSPHRASE", hide_env_values = true)]
        backup_passphrase: String,
    },
    /// Merge an encrypted backup into the store.
    Import {
        input: PathBuf,
        #[arg(long, env = "EFT_BACKUP_PASSPHRASE", hide_env_values = true)]
        backup_passphrase: String,
    },
    /// Serve the local wallet API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7010")]
        listen: SocketAddr,
    },
}

#[derive(Subcommand)]
enum MerchantCmd {
    /// Generate a vendor identity and register it with the issuer.
    Register {
        #[arg(long)]
        dir: PathBuf,
        #[command(flatten)]
        admin: AdminArgs,
        #[arg(long)]
        legal_name: String,
        #[arg(long)]
        registration_ref: String,
        #[arg(long)]
        category: String,
        #[arg(long)]
        onward: Option<bool>,
        #[arg(long, default_value_t = 365)]
        valid_days: u64,
        #[arg(long)]
        kyc_attested: bool,
    },
    /// Serve the merchant API.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, env = "EFT_ISSUER")]
        issuer: String,
        #[arg(long, env = "EFT_RELAY")]
        relay: String,
        /// URL wallets use to reach this merchant.
        #[arg(long)]
        public_url: String,
        #[arg(long, env = "EFT_MERCHANT_TOKEN")]
        admin_token: Option<String>,
        #[arg(long, default_value = "127.0.0.1:7003")]
        listen: SocketAddr,
        #[arg(long, default_value_t = DEFAULT_INVOICE_TTL_SECS)]
        invoice_ttl: u64,
    },
    /// Create an invoice; prints it as JSON.
    Invoice {
        #[command(flatten)]
        remote: MerchantArgs,
        amount: u64,
        #[arg(long)]
        ttl: Option<u64>,
    },
    /// Pass held tokens to a supplier.
    Onward {
        #[command(flatten)]
        remote: MerchantArgs,
        /// Supplier certificate file.
        #[arg(long)]
        supplier: PathBuf,
        /// Supplier invoice file to deliver the tokens to.
        #[arg(long)]
        deliver: Option<PathBuf>,
        #[arg(required = true)]
        tokens: Vec<PublicKey>,
    },
    /// Redeem held tokens (all of them when none are named).
    Redeem {
        #[command(flatten)]
        remote: MerchantArgs,
        tokens: Vec<PublicKey>,
    },
    Holdings {
        #[command(flatten)]
        remote: MerchantArgs,
    },
}

#[derive(Args)]
struct MerchantArgs {
    #[arg(long, env = "EFT_MERCHANT")]
    merchant: String,
    #[arg(long, env = "EFT_MERCHANT_TOKEN")]
    admin_token: Option<String>,
}

impl MerchantArgs {
    fn client(&self) -> MerchantClient {
        let client = MerchantClient::new(http(), &self.merchant);
        match &self.admin_token {
            Some(t) => client.admin(t),
            None => client,
        }
    }
}

/// Everything in an issuer data directory besides the event log.
#[derive(Serialize, Deserialize)]
struct IssuerFile {
    identity: IdentityKeyPair,
    keyset: DenominationKeyset,
    policy: CompliancePolicy,
    ledger: LedgerConfig,
    admin_token: String,
}

const ISSUER_FILE: &str = "issuer.json";
const IDENTITY_FILE: &str = "identity.json";
const CERTIFICATE_FILE: &str = "certificate.json";

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        match e.downcast_ref::<WalletError>() {
            Some(w) => eprintln!("error [{}]: {e:#}", w.code()),
            None => eprintln!("error: {e:#}"),
        }
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Issuer(cmd) => issuer(cmd),
        Command::Relay(cmd) => relay(cmd),
        Command::Ledger(cmd) => ledger(cmd),
        Command::Wallet(args) => wallet(args),
        Command::Merchant(cmd) => merchant(cmd),
    }
}

fn issuer(cmd: IssuerCmd) -> Result<()> {
    match cmd {
        IssuerCmd::Init { dir, relay_key, ledger, policy, profile, admin_token } => {
            let ledger = match (relay_key, ledger) {
                (Some(key), None) => LedgerConfig::standalone(key),
                (None, Some(path)) => read_json(&path)?,
                _ => bail!("pass --relay-key or --ledger"),
            };
            ledger.validate()?;
            let policy = match policy {
                Some(path) => read_json(&path)?,
                None => CompliancePolicy::demo(),
            };
            policy.validate()?;
            eprintln!("generating {} keys for {} denominations", profile_name(profile), policy.denominations.len());
            let keyset = DenominationKeyset::generate(&policy.denominations, profile, &mut OsRng)?;
            let identity = IdentityKeyPair::generate(KeyRole::Issuer, &mut OsRng);
            std::fs::create_dir_all(&dir)?;
            let file = IssuerFile { identity, keyset, policy, ledger, admin_token };
            write_new_json(&dir.join(ISSUER_FILE), &file)?;
            println!("{}", file.identity.public);
            Ok(())
        }
        IssuerCmd::Serve { dir, listen } => {
            let file: IssuerFile = read_json(&dir.join(ISSUER_FILE))?;
            let config = IssuerConfig {
                identity: file.identity,
                keyset: file.keyset,
                policy: file.policy,
                ledger: file.ledger,
                admin_token: file.admin_token,
                data_dir: Some(dir),
                snapshot_every: 1024,
            };
            let service = IssuerService::open(config, system_clock())?;
            serve(Arc::new(service), listen)
        }
        IssuerCmd::Claim { admin, claim, amount, freeze } => {
            let client = admin.client();
            let record = if freeze {
                client.freeze_claim(&claim)?
            } else {
                client.approve_claim(&ApproveClaim { claim_id: claim, amount: amount.unwrap_or_default() })?
            };
            print_json(&record)
        }
        IssuerCmd::Vendor { admin, vendor, revoke } => {
            let client = admin.client();
            match revoke {
                Some(reason) => print_json(&client.revoke_vendor(&vendor, &reason)?),
                None => print_json(&client.vendor(&vendor)?),
            }
        }
        IssuerCmd::Audit { admin } => print_json(&admin.client().audit()?),
    }
}

fn profile_name(profile: KeyProfile) -> &'static str {
    match profile {
        KeyProfile::Toy => "toy",
        KeyProfile::Production => "production",
    }
}

fn relay(cmd: RelayCmd) -> Result<()> {
    match cmd {
        RelayCmd::Init { dir } => {
            std::fs::create_dir_all(&dir)?;
            let key = IdentityKeyPair::generate(KeyRole::Relay, &mut OsRng);
            write_new_json(&dir.join(IDENTITY_FILE), &key)?;
            println!("{}", key.public);
            Ok(())
        }
        RelayCmd::Serve { dir, issuer, peers, listen, tick_ms } => {
            let key: IdentityKeyPair = read_json(&dir.join(IDENTITY_FILE))?;
            let transport = http();
            let keys = IssuerClient::new(transport.clone(), &issuer).keys().context("fetching issuer keys")?;
            let mut config = RelayConfig::standalone(key, keys.issuer);
            config.ledger = keys.ledger;
            config.data_dir = Some(dir);
            config.peers = parse_peers(&peers)?;
            let service = Arc::new(RelayService::open(config, system_clock(), Some(transport))?);
            service.start_ticker(Duration::from_millis(tick_ms));
            serve(service, listen)
        }
    }
}

fn parse_peers(peers: &[String]) -> Result<BTreeMap<PublicKey, String>> {
    peers
        .iter()
        .map(|p| {
            let (key, url) = p.split_once('=').with_context(|| format!("peer {p:?} is not KEY=URL"))?;
            Ok((key.parse()?, url.to_string()))
        })
        .collect()
}

fn ledger(cmd: LedgerCmd) -> Result<()> {
    match cmd {
        LedgerCmd::Checkpoint { relay, height } => {
            let client = RelayClient::new(http(), relay);
            match height {
                Some(h) => print_json(&client.checkpoint(h)?),
                None => print_json(&client.latest_checkpoint()?),
            }
        }
        LedgerCmd::Token { relay, token } => print_json(&RelayClient::new(http(), relay).token(&token)?),
        LedgerCmd::Config { relay } => print_json(&RelayClient::new(http(), relay).ledger()?),
    }
}

fn wallet(args: WalletArgs) -> Result<()> {
    let config = WalletConfig::new(Some(args.store.clone()), args.passphrase);
    let open = |config: WalletConfig| Wallet::open(config, system_clock(), http()).map_err(anyhow::Error::from);
    match args.command {
        WalletCmd::Init { issuer, claim } => {
            Wallet::create(config, system_clock(), http(), &issuer, claim)?;
            eprintln!("created {}", args.store.display());
            Ok(())
        }
        WalletCmd::Request { amount, claim } => {
            let tokens = open(config)?.request_tokens(claim.as_deref(), amount)?;
            let denominations: Vec<u64> = tokens.iter().map(|t| t.denomination).collect();
            print_json(&denominations)
        }
        WalletCmd::Balance => print_json(&open(config)?.balance()),
        WalletCmd::Pay { invoice, merchant, id } => {
            let invoice: Invoice = match (invoice, merchant, id) {
                (Some(path), _, _) => read_json(&path)?,
                (None, Some(url), Some(id)) => MerchantClient::new(http(), url).invoice(&id)?.invoice,
                _ => bail!("pass --invoice FILE or --merchant URL --id ID"),
            };
            print_json(&open(config)?.pay(&invoice)?)
        }
        WalletCmd::Export { out, backup_passphrase } => {
            let blob = open(config)?.export_backup(&backup_passphrase)?;
            write_new(&out, &blob)
        }
        WalletCmd::Import { input, backup_passphrase } => {
            let blob = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            print_json(&open(config)?.import_backup(&blob, &backup_passphrase)?)
        }
        WalletCmd::Serve { listen } => serve(Arc::new(open(config)?), listen),
    }
}

fn merchant(cmd: MerchantCmd) -> Result<()> {
    match cmd {
        MerchantCmd::Register { dir, admin, legal_name, registration_ref, category, onward, valid_days, kyc_attested } => {
            std::fs::create_dir_all(&dir)?;
            let identity_path = dir.join(IDENTITY_FILE);
            let identity = if identity_path.exists() {
                read_json(&identity_path)?
            } else {
                let key = IdentityKeyPair::generate(KeyRole::Vendor, &mut OsRng);
                write_new_json(&identity_path, &key)?;
                key
            };
            let now = SystemClock.now_secs();
            let certificate = admin.client().register_vendor(&VendorRegistration {
                vendor_id: identity.public,
                legal_name,
                registration_ref,
                tax_category: category,
                onward_transfer_allowed: onward,
                valid_from: now,
                valid_to: now + valid_days * 86_400,
                kyc_attested,
            })?;
            write_json(&dir.join(CERTIFICATE_FILE), &certificate)?;
            print_json(&certificate)
        }
        MerchantCmd::Serve { dir, issuer, relay, public_url, admin_token, listen, invoice_ttl } => {
            let transport = http();
            let keys = IssuerClient::new(transport.clone(), &issuer).keys().context("fetching issuer keys")?;
            let config = MerchantConfig {
                identity: read_json(&dir.join(IDENTITY_FILE))?,
                certificate: read_json(&dir.join(CERTIFICATE_FILE))?,
                issuer: keys,
                issuer_endpoint: issuer,
                relay_endpoint: relay,
                public_endpoint: public_url,
                admin_token,
                data_dir: Some(dir),
                invoice_ttl_secs: invoice_ttl,
                backoff: Backoff::default(),
            };
            serve(Arc::new(MerchantService::open(config, system_clock(), transport)?), listen)
        }
        MerchantCmd::Invoice { remote, amount, ttl } => {
            print_json(&remote.client().create_invoice(&CreateInvoice { amount, ttl_secs: ttl })?)
        }
        MerchantCmd::Onward { remote, supplier, deliver, tokens } => {
            let supplier: VendorCertificate = read_json(&supplier)?;
            let deliver = deliver.map(|p| read_json(&p)).transpose()?;
            print_json(&remote.client().onward(&OnwardRequest { token_ids: tokens, supplier, deliver })?)
        }
        MerchantCmd::Redeem { remote, tokens } => {
            let token_ids = (!tokens.is_empty()).then_some(tokens);
            print_json(&remote.client().redeem(&RedeemRequest { token_ids })?)
        }
        MerchantCmd::Holdings { remote } => print_json(&remote.client().holdings()?),
    }
}

fn http() -> Arc<dyn Transport> {
    Arc::new(HttpTransport::new())
}

fn system_clock() -> SharedClock {
    Arc::new(SystemClock)
}

fn serve(handler: Arc<dyn Handler>, listen: SocketAddr) -> Result<()> {
    serve_forever(handler, listen).with_context(|| format!("serving on {listen}"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Refuses to clobber key material or backups.
fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| format!("creating {}", path.display()))?;
    file.write_all(bytes)?;
    file.sync_all()?;
    Ok(())
}

fn write_new_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_new(path, &serde_json::to_vec_pretty(value)?)
}
