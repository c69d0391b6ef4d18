//! Client/server split of encrypted FRIT.
//!
//! The client encodes and encrypts `Γ`, `W`, `Ψ`, `|Ψ|⁻¹` and `−1` into a
//! dataset `D`. The server turns `D` into encrypted gain terms `F` using
//! only public material:
//!
//! * ElGamal (multiplicative only): every term
//!   `Enc(−1)·Enc(Γ_i)·Enc(W_il)·Enc(Φ_{k,l})` is returned separately, with a
//!   ledger of how many `γ` factors each element carries; the client decodes
//!   and sums.
//! * CKKS: the same products are summed homomorphically into one encrypted
//!   row vector.
//!
//! Nothing in this module's server path accepts secret-key types:
//!
//! ```compile_fail
//! use cfrit::confidential::server_tune_elgamal;
//! use cfrit::elgamal::ElGamalSecretKey;
//! fn leak(sk: &ElGamalSecretKey) {
//!     let _ = server_tune_elgamal(sk);
//! }
//! ```

use rand::Rng;
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ckks::{self, CkksCiphertext, CkksError, CkksParams, CkksPublicKey, CkksSecretKey};
use crate::cofactor::{self, minor_source, CofactorError, SignedPermutationTable};
use crate::elgamal::{self, ElGamalCiphertext, ElGamalError, ElGamalPublicKey, ElGamalSecretKey};
use crate::frit::FritData;
use crate::plant_sim::GainVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Elgamal,
    Ckks,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Elgamal => "elgamal",
            Scheme::Ckks => "ckks",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "elgamal" => Ok(Scheme::Elgamal),
            "ckks" => Ok(Scheme::Ckks),
            other => Err(format!("unknown scheme {other:?} (expected elgamal or ckks)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfidentialError {
    #[error("cannot encode {entry}: {source}")]
    ElGamalEncode { entry: String, source: ElGamalError },
    #[error("cannot encode {entry}: {source}")]
    CkksEncode { entry: String, source: CkksError },
    #[error(transparent)]
    ElGamal(#[from] ElGamalError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Cofactor(#[from] CofactorError),
    #[error("gain terms need about {bits} bits but the group holds {q_bits}; raise the key size or the sensitivity")]
    ProductRange { bits: u64, q_bits: u64 },
    #[error("level budget too small: the term chain needs {required} levels, {available} available")]
    Depth { required: u32, available: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Public key material shipped inside `D`.
#[derive(Clone, Debug)]
pub enum PublicMaterial {
    Elgamal(ElGamalPublicKey),
    Ckks(CkksPublicKey),
}

/// Encrypted tables of a dataset, one ciphertext per scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBody<K, C> {
    pub public_key: K,
    /// `nN` entries.
    pub enc_gamma: Vec<C>,
    /// `nN × n`.
    pub enc_w: Vec<Vec<C>>,
    /// `n × n`.
    pub enc_psi: Vec<Vec<C>>,
    pub enc_det_inv: C,
    pub enc_minus_one: C,
}

pub type ElGamalDataset = DatasetBody<ElGamalPublicKey, ElGamalCiphertext>;
pub type CkksDataset = DatasetBody<CkksPublicKey, CkksCiphertext>;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetPayload {
    Elgamal(ElGamalDataset),
    Ckks(CkksDataset),
}

/// Client → server payload `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedDatasetD {
    pub n: usize,
    pub samples: usize,
    pub sensitivity: f64,
    pub payload: DatasetPayload,
}

impl EncryptedDatasetD {
    pub fn scheme(&self) -> Scheme {
        match self.payload {
            DatasetPayload::Elgamal(_) => Scheme::Elgamal,
            DatasetPayload::Ckks(_) => Scheme::Ckks,
        }
    }

    /// Shape check against `n` and `N`.
    pub fn validate(&self) -> Result<(), ConfidentialError> {
        fn shapes<K, C>(b: &DatasetBody<K, C>, n: usize, samples: usize) -> Result<(), String> {
            let rows = n * samples;
            if b.enc_gamma.len() != rows {
                return Err(format!("enc_gamma has {} entries, expected {rows}", b.enc_gamma.len()));
            }
            if b.enc_w.len() != rows || b.enc_w.iter().any(|r| r.len() != n) {
                return Err(format!("enc_w is not {rows}×{n}"));
            }
            if b.enc_psi.len() != n || b.enc_psi.iter().any(|r| r.len() != n) {
                return Err(format!("enc_psi is not {n}×{n}"));
            }
            Ok(())
        }
        if self.n == 0 || self.samples == 0 {
            return Err(ConfidentialError::Protocol("empty dataset".into()));
        }
        match &self.payload {
            DatasetPayload::Elgamal(b) => shapes(b, self.n, self.samples),
            DatasetPayload::Ckks(b) => shapes(b, self.n, self.samples),
        }
        .map_err(ConfidentialError::Protocol)
    }
}

/// `γ`-exponent bookkeeping for ElGamal terms.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentLedger {
    /// `Ω_k`, one `n × n` matrix per permutation, aligned with `Φ_k`.
    pub omega: Vec<Vec<Vec<u32>>>,
    /// `ξ_j`, one length-`n` vector per term.
    pub xi: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResultPayload {
    Elgamal { terms: Vec<Vec<ElGamalCiphertext>>, ledger: ExponentLedger },
    Ckks { enc_f: Vec<CkksCiphertext> },
}

/// Server → client payload `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncryptedDatasetF {
    pub n: usize,
    pub samples: usize,
    pub sensitivity: f64,
    pub payload: ResultPayload,
}

impl EncryptedDatasetF {
    pub fn scheme(&self) -> Scheme {
        match self.payload {
            ResultPayload::Elgamal { .. } => Scheme::Elgamal,
            ResultPayload::Ckks { .. } => Scheme::Ckks,
        }
    }
}

// ---------------------------------------------------------------------------
// JSON envelopes: {scheme, n, N, sensitivity, payload, manifest?}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(rename = "M")]
    terms: usize,
    ledger: &'a ExponentLedger,
}

#[derive(Deserialize)]
struct OwnedManifest {
    #[serde(rename = "M")]
    terms: usize,
    ledger: ExponentLedger,
}

#[derive(Deserialize)]
struct RawEnvelope {
    scheme: Scheme,
    n: usize,
    #[serde(rename = "N")]
    samples: usize,
    sensitivity: f64,
    payload: serde_json::Value,
    #[serde(default)]
    manifest: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct TermsPayload<T> {
    terms: T,
}

#[derive(Serialize, Deserialize)]
struct SumPayload<T> {
    enc_f: T,
}

impl Serialize for EncryptedDatasetD {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("EncryptedDatasetD", 5)?;
        st.serialize_field("scheme", &self.scheme())?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("N", &self.samples)?;
        st.serialize_field("sensitivity", &self.sensitivity)?;
        match &self.payload {
            DatasetPayload::Elgamal(b) => st.serialize_field("payload", b)?,
            DatasetPayload::Ckks(b) => st.serialize_field("payload", b)?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for EncryptedDatasetD {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawEnvelope::deserialize(d)?;
        let payload = match raw.scheme {
            Scheme::Elgamal => DatasetPayload::Elgamal(serde_json::from_value(raw.payload).map_err(D::Error::custom)?),
            Scheme::Ckks => DatasetPayload::Ckks(serde_json::from_value(raw.payload).map_err(D::Error::custom)?),
        };
        let out = EncryptedDatasetD { n: raw.n, samples: raw.samples, sensitivity: raw.sensitivity, payload };
        out.validate().map_err(D::Error::custom)?;
        Ok(out)
    }
}

impl Serialize for EncryptedDatasetF {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let fields = if matches!(self.payload, ResultPayload::Elgamal { .. }) { 6 } else { 5 };
        let mut st = s.serialize_struct("EncryptedDatasetF", fields)?;
        st.serialize_field("scheme", &self.scheme())?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("N", &self.samples)?;
        st.serialize_field("sensitivity", &self.sensitivity)?;
        match &self.payload {
            ResultPayload::Elgamal { terms, ledger } => {
                st.serialize_field("payload", &TermsPayload { terms })?;
                st.serialize_field("manifest", &Manifest { terms: terms.len(), ledger })?;
            }
            ResultPayload::Ckks { enc_f } => st.serialize_field("payload", &SumPayload { enc_f })?,
        }
        st.end()
    }
}

impl<'de> Deserialize<'de> for EncryptedDatasetF {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawEnvelope::deserialize(d)?;
        let payload = match raw.scheme {
            Scheme::Elgamal => {
                let body: TermsPayload<Vec<Vec<ElGamalCiphertext>>> =
                    serde_json::from_value(raw.payload).map_err(D::Error::custom)?;
                let manifest = raw.manifest.ok_or_else(|| D::Error::custom("elgamal result without manifest"))?;
                let manifest: OwnedManifest = serde_json::from_value(manifest).map_err(D::Error::custom)?;
                if manifest.terms != body.terms.len() || manifest.ledger.xi.len() != body.terms.len() {
                    return Err(D::Error::custom("manifest term count disagrees with payload"));
                }
                ResultPayload::Elgamal { terms: body.terms, ledger: manifest.ledger }
            }
            Scheme::Ckks => {
                let body: SumPayload<Vec<CkksCiphertext>> =
                    serde_json::from_value(raw.payload).map_err(D::Error::custom)?;
                ResultPayload::Ckks { enc_f: body.enc_f }
            }
        };
        Ok(EncryptedDatasetF { n: raw.n, samples: raw.samples, sensitivity: raw.sensitivity, payload })
    }
}

// ---------------------------------------------------------------------------
// Client: dataset preparation

fn entries(data: &FritData) -> Vec<(String, f64)> {
    let n = data.n;
    let rows = data.gamma.len();
    let mut out = Vec::with_capacity(rows * (n + 1) + n * n + 2);
    for i in 0..rows {
        out.push((format!("Gamma[{i}]"), data.gamma[i]));
    }
    for i in 0..rows {
        for l in 0..n {
            out.push((format!("W[{i}][{l}]"), data.w[(i, l)]));
        }
    }
    for a in 0..n {
        for b in 0..n {
            out.push((format!("Psi[{a}][{b}]"), data.psi[(a, b)]));
        }
    }
    out.push(("det(Psi)^-1".into(), data.det_psi_inv));
    out.push(("-1".into(), -1.0));
    out
}

fn assemble<K, C>(public_key: K, n: usize, rows: usize, mut cts: Vec<C>) -> DatasetBody<K, C> {
    let enc_minus_one = cts.pop().expect("constant");
    let enc_det_inv = cts.pop().expect("determinant");
    let mut it = cts.into_iter();
    let enc_gamma: Vec<C> = it.by_ref().take(rows).collect();
    let enc_w = (0..rows).map(|_| it.by_ref().take(n).collect()).collect();
    let enc_psi = (0..n).map(|_| it.by_ref().take(n).collect()).collect();
    DatasetBody { public_key, enc_gamma, enc_w, enc_psi, enc_det_inv, enc_minus_one }
}

/// Upper bound on `log2` of the largest encoded term product
/// `(−1)·Γ_i·W_il·Ψ^{n−1}·(±1)·(±1)·|Ψ|⁻¹`. The server cannot see a wrap
/// modulo `p`, so the client checks headroom before encrypting.
pub fn elgamal_term_bits(data: &FritData, gamma: f64) -> f64 {
    // Slack for the encoder's rounding offset.
    let bits = |x: f64| (x.abs() / gamma + 256.0).log2();
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0f64, |m, x| m.max(x.abs()));
    bits(max(&mut data.gamma.iter().copied()))
        + bits(max(&mut data.w.iter().copied()))
        + (data.n as f64 - 1.0) * bits(max(&mut data.psi.iter().copied()))
        + bits(data.det_psi_inv)
        + 3.0 * bits(1.0)
}

/// Encodes at `sensitivity` and encrypts every scalar of `Γ, W, Ψ`, plus
/// `|Ψ|⁻¹` and `−1`.
pub fn client_prepare<R: Rng + ?Sized>(
    data: &FritData,
    public: &PublicMaterial,
    sensitivity: f64,
    rng: &mut R,
) -> Result<EncryptedDatasetD, ConfidentialError> {
    let n = data.n;
    let rows = data.gamma.len();
    let payload = match public {
        PublicMaterial::Elgamal(pk) => {
            let encoded = entries(data)
                .into_iter()
                .map(|(entry, x)| {
                    elgamal::ecd(x, sensitivity, pk).map_err(|source| ConfidentialError::ElGamalEncode { entry, source })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let need = elgamal_term_bits(data, sensitivity);
            let q_bits = pk.q.bits();
            if need.is_finite() && need >= q_bits as f64 - 1.0 {
                return Err(ConfidentialError::ProductRange { bits: need.ceil() as u64, q_bits });
            }
            let cts = encoded.iter().map(|e| elgamal::enc(pk, &e.m, rng)).collect::<Result<Vec<_>, _>>()?;
            DatasetPayload::Elgamal(assemble(pk.clone(), n, rows, cts))
        }
        PublicMaterial::Ckks(pk) => {
            let params = &pk.params;
            if sensitivity != params.gamma_c() {
                return Err(ConfidentialError::Protocol(format!(
                    "CKKS sensitivity is fixed by the key: expected {}, got {sensitivity}",
                    params.gamma_c()
                )));
            }
            let mut cts = Vec::new();
            for (entry, x) in entries(data) {
                let e = ckks::ecd(x, params).map_err(|source| ConfidentialError::CkksEncode { entry, source })?;
                cts.push(ckks::enc(pk, &e, rng));
            }
            DatasetPayload::Ckks(assemble(pk.clone(), n, rows, cts))
        }
    };
    Ok(EncryptedDatasetD { n, samples: data.samples, sensitivity, payload })
}

// ---------------------------------------------------------------------------
// Exponent ledger

/// `Ω_k` at Φ-position `(row, col)`, i.e. for the cofactor at `(i, j) =
/// (col, row)`: `(n−1) + [sgn σ_k = −1] + [(i+j) odd] + 1`.
pub fn omega_entry(n: usize, sign: i8, i: usize, j: usize) -> u32 {
    (n as u32 - 1) + u32::from(sign < 0) + u32::from((i + j) % 2 == 1) + 1
}

/// `Ω` matrices for every row of the table.
pub fn exponent_table(table: &SignedPermutationTable, n: usize) -> Vec<Vec<Vec<u32>>> {
    table
        .rows()
        .iter()
        .map(|row| (0..n).map(|r| (0..n).map(|c| omega_entry(n, row.sign, c, r)).collect()).collect())
        .collect()
}

/// Full ledger for `(n−1)!·n²·N` terms in flat-index order.
pub fn exponent_ledger(table: &SignedPermutationTable, n: usize, samples: usize) -> ExponentLedger {
    let omega = exponent_table(table, n);
    let rows = n * samples;
    let mut xi = Vec::with_capacity(cofactor::term_count(n, samples));
    for om in &omega {
        for _i in 0..rows {
            for row in om.iter().take(n) {
                xi.push(row.iter().map(|o| o + 3).collect());
            }
        }
    }
    ExponentLedger { omega, xi }
}

// ---------------------------------------------------------------------------
// Server: ElGamal

/// `Enc(Φ̌_k)` for every permutation, using only homomorphic products.
fn elgamal_phis(
    pk: &ElGamalPublicKey,
    body: &ElGamalDataset,
    table: &SignedPermutationTable,
    n: usize,
) -> Vec<Vec<Vec<ElGamalCiphertext>>> {
    let minus_one = &body.enc_minus_one;
    table
        .rows()
        .iter()
        .map(|row| {
            let mut phi = vec![vec![pk.neutral(); n]; n];
            for i in 0..n {
                for j in 0..n {
                    let mut acc = pk.neutral();
                    for (l, &s) in row.permutation.iter().enumerate() {
                        let entry = &body.enc_psi[minor_source(i, l)][minor_source(j, s)];
                        acc = elgamal::hmul(pk, &acc, entry);
                    }
                    if row.sign < 0 {
                        acc = elgamal::hmul(pk, &acc, minus_one);
                    }
                    if (i + j) % 2 == 1 {
                        acc = elgamal::hmul(pk, &acc, minus_one);
                    }
                    phi[j][i] = elgamal::hmul(pk, &acc, &body.enc_det_inv);
                }
            }
            phi
        })
        .collect()
}

/// Encrypted gain terms `Enc(F̌*_j)` with their `ξ` ledger.
pub fn server_tune_elgamal(d: &EncryptedDatasetD) -> Result<EncryptedDatasetF, ConfidentialError> {
    d.validate()?;
    let DatasetPayload::Elgamal(body) = &d.payload else {
        return Err(ConfidentialError::Protocol(format!("expected an elgamal dataset, got {}", d.scheme())));
    };
    let pk = &body.public_key;
    let n = d.n;
    let table = cofactor::signed_permutations(n)?;
    let phis = elgamal_phis(pk, body, &table, n);
    let rows = n * d.samples;

    // (−1)·Γ_i·W_il is shared by every permutation k.
    let prefix: Vec<Vec<ElGamalCiphertext>> = (0..rows)
        .map(|i| {
            let a = elgamal::hmul(pk, &body.enc_minus_one, &body.enc_gamma[i]);
            (0..n).map(|l| elgamal::hmul(pk, &a, &body.enc_w[i][l])).collect()
        })
        .collect();

    let mut terms = Vec::with_capacity(cofactor::term_count(n, d.samples));
    for phi in &phis {
        for p in &prefix {
            for (l, b) in p.iter().enumerate() {
                terms.push(phi[l].iter().map(|c| elgamal::hmul(pk, b, c)).collect());
            }
        }
    }
    Ok(EncryptedDatasetF {
        n,
        samples: d.samples,
        sensitivity: d.sensitivity,
        payload: ResultPayload::Elgamal { terms, ledger: exponent_ledger(&table, n, d.samples) },
    })
}

// ---------------------------------------------------------------------------
// Server: CKKS

/// Level at which `Φ̌_k` entries come out of the cofactor chain.
fn ckks_phi_level(n: usize, top: u32) -> Option<u32> {
    if n == 1 {
        Some(top)
    } else {
        // n−2 chain products, sign, checkerboard sign, determinant.
        top.checked_sub(n as u32 + 1)
    }
}

/// Levels the full term chain consumes.
pub fn ckks_levels_required(n: usize) -> u32 {
    let phi = if n == 1 { 0 } else { n as u32 + 1 };
    phi.max(2) + 1
}

/// Multiplies by `Enc(−1)` when `negate`, otherwise drops one level so every
/// branch lands on the same level.
fn ckks_sign_step(
    ct: CkksCiphertext,
    negate: bool,
    minus_one: &CkksCiphertext,
    pk: &CkksPublicKey,
) -> Result<CkksCiphertext, CkksError> {
    if negate {
        ckks::mult_aligned(&ct, minus_one, pk)
    } else {
        ckks::mod_align(&ct, ct.level - 1, &pk.params)
    }
}

fn ckks_phis(
    pk: &CkksPublicKey,
    body: &CkksDataset,
    table: &SignedPermutationTable,
    n: usize,
) -> Result<Vec<Vec<Vec<CkksCiphertext>>>, CkksError> {
    let minus_one = &body.enc_minus_one;
    let mut out = Vec::with_capacity(table.len());
    for row in table.rows() {
        let mut phi: Vec<Vec<Option<CkksCiphertext>>> = vec![vec![None; n]; n];
        for i in 0..n {
            for j in 0..n {
                let entry = if n == 1 {
                    body.enc_det_inv.clone()
                } else {
                    let mut factors = row
                        .permutation
                        .iter()
                        .enumerate()
                        .map(|(l, &s)| &body.enc_psi[minor_source(i, l)][minor_source(j, s)]);
                    let mut acc = factors.next().expect("n ≥ 2 gives a factor").clone();
                    for f in factors {
                        acc = ckks::mult_aligned(&acc, f, pk)?;
                    }
                    acc = ckks_sign_step(acc, row.sign < 0, minus_one, pk)?;
                    acc = ckks_sign_step(acc, (i + j) % 2 == 1, minus_one, pk)?;
                    ckks::mult_aligned(&acc, &body.enc_det_inv, pk)?
                };
                phi[j][i] = Some(entry);
            }
        }
        out.push(phi.into_iter().map(|r| r.into_iter().map(|c| c.expect("filled")).collect()).collect());
    }
    Ok(out)
}

/// Homomorphic sum of all gain terms into one encrypted row vector.
pub fn server_tune_ckks(d: &EncryptedDatasetD) -> Result<EncryptedDatasetF, ConfidentialError> {
    d.validate()?;
    let DatasetPayload::Ckks(body) = &d.payload else {
        return Err(ConfidentialError::Protocol(format!("expected a ckks dataset, got {}", d.scheme())));
    };
    let pk = &body.public_key;
    let params = &pk.params;
    let n = d.n;
    let top = body.enc_minus_one.level;
    let required = ckks_levels_required(n);
    if ckks_phi_level(n, top).is_none() || top < required {
        return Err(ConfidentialError::Depth { required, available: top });
    }
    let table = cofactor::signed_permutations(n)?;
    let phis = ckks_phis(pk, body, &table, n)?;
    let rows = n * d.samples;

    let prefix: Vec<Vec<CkksCiphertext>> = (0..rows)
        .map(|i| {
            let a = ckks::mult_aligned(&body.enc_minus_one, &body.enc_gamma[i], pk)?;
            (0..n).map(|l| ckks::mult_aligned(&a, &body.enc_w[i][l], pk)).collect()
        })
        .collect::<Result<_, CkksError>>()?;

    // Ascending flat index j keeps the summation order fixed.
    let mut acc: Vec<Option<CkksCiphertext>> = vec![None; n];
    for phi in &phis {
        for p in &prefix {
            for (l, b) in p.iter().enumerate() {
                for (slot, c) in acc.iter_mut().zip(&phi[l]) {
                    let term = ckks::mult_aligned(b, c, pk)?;
                    *slot = Some(match slot.take() {
                        None => term,
                        Some(sum) => ckks::add_aligned(&sum, &term, params)?,
                    });
                }
            }
        }
    }
    Ok(EncryptedDatasetF {
        n,
        samples: d.samples,
        sensitivity: d.sensitivity,
        payload: ResultPayload::Ckks { enc_f: acc.into_iter().map(|c| c.expect("at least one term")).collect() },
    })
}

/// Dispatches on the dataset's scheme.
pub fn server_tune(d: &EncryptedDatasetD) -> Result<EncryptedDatasetF, ConfidentialError> {
    match d.scheme() {
        Scheme::Elgamal => server_tune_elgamal(d),
        Scheme::Ckks => server_tune_ckks(d),
    }
}

// ---------------------------------------------------------------------------
// Client: finalization

/// Decoded `F*_j` row vectors, each element scaled by `γ^{ξ_{j,l}}`.
pub fn decode_terms_elgamal(
    f: &EncryptedDatasetF,
    pk: &ElGamalPublicKey,
    sk: &ElGamalSecretKey,
    gamma: f64,
) -> Result<Vec<Vec<f64>>, ConfidentialError> {
    let ResultPayload::Elgamal { terms, ledger } = &f.payload else {
        return Err(ConfidentialError::Protocol(format!("expected an elgamal result, got {}", f.scheme())));
    };
    if ledger.xi.len() != terms.len() {
        return Err(ConfidentialError::Protocol("ledger does not cover every term".into()));
    }
    terms
        .iter()
        .zip(&ledger.xi)
        .map(|(row, xi)| {
            if row.len() != xi.len() {
                return Err(ConfidentialError::Protocol("ledger row length mismatch".into()));
            }
            Ok(row
                .iter()
                .zip(xi)
                .map(|(ct, &e)| elgamal::dcd(&elgamal::dec(pk, sk, ct), gamma.powi(e as i32), pk))
                .collect())
        })
        .collect()
}

/// `Σ_j Dcd_{γ^ξ}(Dec(Enc(F̌*_j)))`.
pub fn client_finalize_elgamal(
    f: &EncryptedDatasetF,
    pk: &ElGamalPublicKey,
    sk: &ElGamalSecretKey,
    gamma: f64,
) -> Result<GainVector, ConfidentialError> {
    let decoded = decode_terms_elgamal(f, pk, sk, gamma)?;
    let mut sum = vec![0.0; f.n];
    for row in &decoded {
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    Ok(GainVector::new(sum))
}

/// Decrypts the summed row vector and decodes with `γ_c^{scale_power}`.
pub fn client_finalize_ckks(
    f: &EncryptedDatasetF,
    sk: &CkksSecretKey,
    params: &CkksParams,
) -> Result<GainVector, ConfidentialError> {
    let ResultPayload::Ckks { enc_f } = &f.payload else {
        return Err(ConfidentialError::Protocol(format!("expected a ckks result, got {}", f.scheme())));
    };
    if enc_f.len() != f.n {
        return Err(ConfidentialError::Protocol(format!("result has {} entries, expected {}", enc_f.len(), f.n)));
    }
    Ok(GainVector::new(enc_f.iter().map(|ct| ckks::decrypt_real(sk, ct, params)).collect()))
}
