//! `cfrit`: data-driven state-feedback tuning with the data kept encrypted
//! on the server side.

mod keys;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cfrit::ckks::{self, CkksParams};
use cfrit::confidential::{
    client_finalize_ckks, client_finalize_elgamal, client_prepare, server_tune, ConfidentialError,
    EncryptedDatasetD, EncryptedDatasetF, PublicMaterial, Scheme,
};
use cfrit::elgamal;
use cfrit::frit::{frit_gain, DesiredClosedLoop, FritData};
use cfrit::plant_sim::{
    closed_loop_poles, excitation_pulse, pole_distance, simulate_closed_loop, GainVector, PlantModel, SignalLog,
};
use cfrit::scenarios::Scenario;
use cfrit::wire::{self, ServerConfig};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use keys::{PublicKeyFile, SecretKeyFile};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Crypto(String),
    Network(String),
    Threshold(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Crypto(_) => 3,
            Failure::Network(_) => 4,
            Failure::Threshold(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Crypto(_) => "crypto",
            Failure::Network(_) => "network",
            Failure::Threshold(_) => "threshold",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Crypto(m) | Failure::Network(m) | Failure::Threshold(m) => m,
        }
    }
}

impl From<ConfidentialError> for Failure {
    fn from(e: ConfidentialError) -> Self {
        Failure::Crypto(e.to_string())
    }
}

impl From<wire::WireError> for Failure {
    fn from(e: wire::WireError) -> Self {
        Failure::Network(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "cfrit", version, about = "Encrypted FRIT gain tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Reduced CKKS ring (d = 4096, 10 levels); 3072-bit ElGamal.
    Test,
    /// 128-bit parameters (d = 32768, 20 levels; 3072-bit ElGamal).
    Secure128,
    /// Tiny CKKS ring (d = 1024, 6 levels) for quick transport checks. Not secure.
    Small,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Elgamal,
    Ckks,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Elgamal => Scheme::Elgamal,
            SchemeArg::Ckks => Scheme::Ckks,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair into DIR/public.json and DIR/secret.json.
    Keygen {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value = "test")]
        profile: Profile,
        #[arg(long)]
        out: PathBuf,
        /// ElGamal modulus size; anything but 3072 runs a safe-prime search.
        #[arg(long, default_value_t = 3072)]
        bits: u64,
        /// ElGamal secret/nonce size in bits (0 = full range).
        #[arg(long, default_value_t = 256)]
        secret_bits: u64,
        /// ElGamal sensitivity γ as a power of two exponent.
        #[arg(long, default_value_t = 40)]
        gamma_bits: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a built-in closed-loop experiment and log it.
    Simulate {
        #[arg(long)]
        example: u8,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reference model.
        #[arg(long)]
        hd_out: Option<PathBuf>,
        /// Also write the plant.
        #[arg(long)]
        plant_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Encrypt a logged experiment into a dataset for the server.
    Prepare {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        hd: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the tuning server.
    Serve {
        #[arg(long, default_value_t = wire::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Largest accepted frame in bytes.
        #[arg(long, default_value_t = wire::DEFAULT_MAX_FRAME)]
        max_frame: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute encrypted gain terms, locally or on a remote server.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// HOST:PORT of a running `cfrit serve`.
        #[arg(long)]
        remote: Option<String>,
        /// Network timeout in seconds.
        #[arg(long, default_value_t = 3600)]
        timeout: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decrypt a server result into a gain.
    Finalize {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plaintext FRIT baseline.
    Frit {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        hd: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare a gain against a baseline on a plant.
    Verify {
        #[arg(long)]
        gain: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        plant: PathBuf,
        /// Trajectory length under the unit-pulse excitation.
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Write the trajectory series here instead of stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        max_gain_distance: Option<f64>,
        #[arg(long)]
        max_pole_distance: Option<f64>,
        #[arg(long)]
        max_trajectory_deviation: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&text).map_err(|e| Failure::Usage(format!("cannot parse {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec(value).map_err(|e| Failure::Usage(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn fmt_complex(z: &Complex<f64>) -> String {
    format!("{:.10}{:+.10}i", z.re, z.im)
}

fn keygen(
    scheme: Scheme,
    profile: Profile,
    out: &Path,
    bits: u64,
    secret_bits: u64,
    gamma_bits: u32,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (public, secret) = match scheme {
        Scheme::Elgamal => {
            let short = (secret_bits > 0).then_some(secret_bits);
            let keys = elgamal::gen(bits, short, &mut rng).map_err(|e| Failure::Crypto(e.to_string()))?;
            (
                PublicKeyFile::Elgamal { sensitivity: 2f64.powi(-(gamma_bits as i32)), public_key: keys.public },
                SecretKeyFile::Elgamal { secret_key: keys.secret },
            )
        }
        Scheme::Ckks => {
            let params = match profile {
                Profile::Test => CkksParams::test(),
                Profile::Secure128 => CkksParams::secure128(),
                Profile::Small => CkksParams::small(),
            };
            let keys = ckks::gen(&params, &mut rng).map_err(|e| Failure::Crypto(e.to_string()))?;
            (PublicKeyFile::Ckks { public_key: keys.public }, SecretKeyFile::Ckks { secret_key: keys.secret })
        }
    };
    fs::create_dir_all(out).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out.display())))?;
    write_json(&out.join("public.json"), &public)?;
    write_json(&out.join("secret.json"), &secret)?;
    keys::restrict_permissions(&out.join("secret.json"));
    println!("wrote {}/public.json and {}/secret.json", out.display(), out.display());
    Ok(())
}

fn simulate(example: u8, out: &Path, hd_out: Option<&Path>, plant_out: Option<&Path>) -> Result<()> {
    let scenario =
        Scenario::by_number(example).ok_or_else(|| Failure::Usage(format!("unknown example {example} (1 or 2)")))?;
    write_json(out, &scenario.simulate())?;
    if let Some(p) = hd_out {
        write_json(p, &scenario.reference)?;
    }
    if let Some(p) = plant_out {
        write_json(p, &scenario.plant)?;
    }
    println!("wrote {} ({} steps)", out.display(), scenario.steps);
    Ok(())
}

fn load_data(log: &Path, hd: &Path) -> Result<FritData> {
    let log: SignalLog = read_json(log)?;
    let hd: DesiredClosedLoop = read_json(hd)?;
    FritData::from_log(&log, &hd, 0, log.steps()).map_err(|e| Failure::Crypto(e.to_string()))
}

fn check_scheme(expected: Scheme, found: Scheme, what: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{what} is {found}, but --scheme {expected} was given")))
    }
}

fn prepare(scheme: Scheme, log: &Path, hd: &Path, keys_dir: &Path, out: &Path, seed: u64) -> Result<()> {
    let data = load_data(log, hd)?;
    let public: PublicKeyFile = read_json(&keys_dir.join("public.json"))?;
    check_scheme(scheme, public.scheme(), "the public key")?;
    let (material, sensitivity) = match public {
        PublicKeyFile::Elgamal { sensitivity, public_key } => (PublicMaterial::Elgamal(public_key), sensitivity),
        PublicKeyFile::Ckks { public_key } => {
            let g = public_key.params.gamma_c();
            (PublicMaterial::Ckks(public_key), g)
        }
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = client_prepare(&data, &material, sensitivity, &mut rng)?;
    write_json(out, &d)?;
    println!("wrote {} (n={}, N={})", out.display(), d.n, d.samples);
    Ok(())
}

fn serve(bind: &str, port: u16, max_frame: usize) -> Result<()> {
    let config = ServerConfig { max_frame, ..ServerConfig::default() };
    let handle = wire::serve((bind, port), config).map_err(|e| Failure::Network(format!("cannot bind: {e}")))?;
    println!("listening on {}", handle.local_addr());
    handle.join();
    Ok(())
}

fn tune(data: &Path, out: &Path, remote: Option<&str>, timeout: u64) -> Result<()> {
    let d: EncryptedDatasetD = read_json(data)?;
    let (f, seconds): (EncryptedDatasetF, f64) = match remote {
        Some(addr) => {
            let reply = wire::request_tune(addr, &d, Duration::from_secs(timeout))?;
            (reply.result, reply.server_seconds)
        }
        None => {
            let start = Instant::now();
            let f = server_tune(&d)?;
            (f, start.elapsed().as_secs_f64())
        }
    };
    write_json(out, &f)?;
    println!("server_seconds={seconds:.6}");
    Ok(())
}

fn finalize(scheme: Scheme, result: &Path, keys_dir: &Path, out: &Path) -> Result<()> {
    let f: EncryptedDatasetF = read_json(result)?;
    check_scheme(scheme, f.scheme(), "the result")?;
    let public: PublicKeyFile = read_json(&keys_dir.join("public.json"))?;
    let secret: SecretKeyFile = read_json(&keys_dir.join("secret.json"))?;
    let gain = match (public, secret) {
        (PublicKeyFile::Elgamal { sensitivity, public_key }, SecretKeyFile::Elgamal { secret_key }) => {
            if sensitivity != f.sensitivity {
                return Err(Failure::Crypto(format!(
                    "result was encoded at γ={} but the key directory uses γ={sensitivity}",
                    f.sensitivity
                )));
            }
            client_finalize_elgamal(&f, &public_key, &secret_key, sensitivity)?
        }
        (PublicKeyFile::Ckks { public_key }, SecretKeyFile::Ckks { secret_key }) => {
            client_finalize_ckks(&f, &secret_key, &public_key.params)?
        }
        _ => return Err(Failure::Usage("public and secret key files are for different schemes".into())),
    };
    write_json(out, &gain)?;
    println!("F = {:?}", gain.as_slice());
    Ok(())
}

fn frit(log: &Path, hd: &Path, out: &Path) -> Result<()> {
    let data = load_data(log, hd)?;
    let gain = frit_gain(&data).map_err(|e| Failure::Crypto(e.to_string()))?;
    write_json(out, &gain)?;
    println!("F = {:?}", gain.as_slice());
    Ok(())
}

struct Thresholds {
    gain: Option<f64>,
    pole: Option<f64>,
    trajectory: Option<f64>,
}

fn verify(gain: &Path, baseline: &Path, plant: &Path, steps: usize, csv: Option<&Path>, limits: Thresholds) -> Result<()> {
    let gain: GainVector = read_json(gain)?;
    let baseline: GainVector = read_json(baseline)?;
    let plant: PlantModel = read_json(plant)?;
    let sim = |e: cfrit::plant_sim::SimError| Failure::Usage(e.to_string());
    if gain.len() != baseline.len() {
        return Err(Failure::Usage(format!("gain lengths differ: {} vs {}", gain.len(), baseline.len())));
    }

    let distance = gain.distance(&baseline);
    let poles_a = closed_loop_poles(&plant, &gain).map_err(sim)?;
    let poles_b = closed_loop_poles(&plant, &baseline).map_err(sim)?;
    let pd = pole_distance(&poles_a, &poles_b).map_err(sim)?;

    let v = excitation_pulse(steps).map_err(sim)?;
    let xa = simulate_closed_loop(&plant, &gain, &v).map_err(sim)?;
    let xb = simulate_closed_loop(&plant, &baseline, &v).map_err(sim)?;
    let deviations: Vec<f64> = xa
        .x
        .iter()
        .zip(&xb.x)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt())
        .collect();
    let worst = deviations.iter().copied().fold(0.0, f64::max);

    let list = |p: &[Complex<f64>]| p.iter().map(fmt_complex).collect::<Vec<_>>().join(" ");
    println!("gain_distance={distance:.6e}");
    println!("poles_gain={}", list(&poles_a));
    println!("poles_baseline={}", list(&poles_b));
    println!("pole_distance={pd:.6e}");
    println!("max_trajectory_deviation={worst:.6e}");

    let mut series = String::from("step,deviation\n");
    for (k, d) in deviations.iter().enumerate() {
        series.push_str(&format!("{k},{d:.6e}\n"));
    }
    match csv {
        Some(path) => {
            fs::write(path, series).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?
        }
        None => print!("{series}"),
    }

    let checks = [
        ("gain_distance", distance, limits.gain),
        ("pole_distance", pd, limits.pole),
        ("max_trajectory_deviation", worst, limits.trajectory),
    ];
    for (name, value, limit) in checks {
        if let Some(limit) = limit {
            if !(value <= limit) {
                return Err(Failure::Threshold(format!("{name}={value:.6e} exceeds {limit:e}")));
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen { scheme, profile, out, bits, secret_bits, gamma_bits, seed } => {
            keygen(scheme.into(), profile, &out, bits, secret_bits, gamma_bits, seed)
        }
        Command::Simulate { example, out, hd_out, plant_out, seed: _ } => {
            simulate(example, &out, hd_out.as_deref(), plant_out.as_deref())
        }
        Command::Prepare { scheme, log, hd, keys, out, seed } => prepare(scheme.into(), &log, &hd, &keys, &out, seed),
        Command::Serve { port, bind, max_frame, seed: _ } => serve(&bind, port, max_frame),
        Command::Tune { data, out, remote, timeout, seed: _ } => tune(&data, &out, remote.as_deref(), timeout),
        Command::Finalize { scheme, result, keys, out, seed: _ } => finalize(scheme.into(), &result, &keys, &out),
        Command::Frit { log, hd, out, seed: _ } => frit(&log, &hd, &out),
        Command::Verify {
            gain,
            baseline,
            plant,
            steps,
            csv,
            max_gain_distance,
            max_pole_distance,
            max_trajectory_deviation,
            seed: _,
        } => verify(
            &gain,
            &baseline,
            &plant,
            steps,
            csv.as_deref(),
            Thresholds { gain: max_gain_distance, pole: max_pole_distance, trajectory: max_trajectory_deviation },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let msg = f.message().replace('\n', " ");
            eprintln!("error kind={} code={} message={msg}", f.kind(), f.code());
            ExitCode::from(f.code())
        }
    }
}
