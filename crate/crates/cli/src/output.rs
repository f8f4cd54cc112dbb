//! Output plumbing: provenance stamping and CSV/JSON emission.
//!
//! Every artifact carries the digest of the effective configuration and the
//! master seed, so any command can be re-run bit-identically from its own
//! outputs. CSV files carry them as leading `#` comment lines; JSON files as
//! a `provenance` object.

use std::fs::{self, File};
use std::io::Write as IoWrite;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_digest: String,
    pub master_seed: u64,
}

impl Provenance {
    pub fn new(command: &str, config: &serde_json::Value, master_seed: u64) -> Self {
        Self {
            command: command.into(),
            config_digest: digest_value(config),
            master_seed,
        }
    }
}

/// SHA-256 hex digest of a JSON value's canonical string form.
pub fn digest_value(value: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(value.to_string().as_bytes());
    format!("{:x}", hasher.finalize())
}

fn create_with_parents(path: &Path) -> Result<File, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", parent.display())))?;
    }
    File::create(path).map_err(|e| CliError::Io(format!("creating {}: {e}", path.display())))
}

/// CSV writer whose file starts with provenance comment lines.
pub fn csv_writer(path: &Path, prov: &Provenance) -> Result<csv::Writer<File>, CliError> {
    let mut file = create_with_parents(path)?;
    writeln!(file, "# command: {}", prov.command)
        .and_then(|_| writeln!(file, "# config_digest: {}", prov.config_digest))
        .and_then(|_| writeln!(file, "# master_seed: {}", prov.master_seed))
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

/// JSON artifact with an embedded `provenance` object.
pub fn write_json(
    path: &Path,
    prov: &Provenance,
    mut body: serde_json::Value,
) -> Result<(), CliError> {
    let obj = body
        .as_object_mut()
        .ok_or_else(|| CliError::Io("JSON artifact body must be an object".into()))?;
    obj.insert(
        "provenance".into(),
        serde_json::to_value(prov).expect("provenance serializes"),
    );
    let mut file = create_with_parents(path)?;
    serde_json::to_writer_pretty(&mut file, &body)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    writeln!(file).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// The self-describing re-run block: command, seed, and the full effective
/// configuration.
pub fn write_provenance_file(
    out: &Path,
    prov: &Provenance,
    config: &serde_json::Value,
) -> Result<(), CliError> {
    write_json(
        &out.join("provenance.json"),
        prov,
        serde_json::json!({ "config": config }),
    )
}
