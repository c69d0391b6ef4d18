//! On-disk key files. `public.json` may be handed to the server side;
//! `secret.json` never leaves the data owner.

use std::path::Path;

use cfrit::ckks::{CkksPublicKey, CkksSecretKey};
use cfrit::confidential::Scheme;
use cfrit::elgamal::{ElGamalPublicKey, ElGamalSecretKey};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum PublicKeyFile {
    Elgamal { sensitivity: f64, public_key: ElGamalPublicKey },
    Ckks { public_key: CkksPublicKey },
}

impl PublicKeyFile {
    pub fn scheme(&self) -> Scheme {
        match self {
            PublicKeyFile::Elgamal { .. } => Scheme::Elgamal,
            PublicKeyFile::Ckks { .. } => Scheme::Ckks,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum SecretKeyFile {
    Elgamal { secret_key: ElGamalSecretKey },
    Ckks { secret_key: CkksSecretKey },
}

#[cfg(unix)]
pub fn restrict_permissions(path: &Path) {
    use std::os::unix::fs::PermissionsExt;
    let _ = std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600));
}

#[cfg(not(unix))]
pub fn restrict_permissions(_path: &Path) {}
