use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;

use segstyle_core::style::{checkpoint, convert};
use segstyle_core::{Error, PipelineConfig};
use sha2::{Digest, Sha256};

use crate::args::FetchArgs;
use crate::settings::{DEFAULT_WEIGHTS_FILE, WEIGHTS_DIR_ENV};

fn is_url(source: &str) -> bool {
    source.starts_with("http://") || source.starts_with("https://")
}

fn read_source(source: &str) -> Result<Vec<u8>, Error> {
    let fail = |msg: String| Error::Io {
        path: PathBuf::from(source),
        source: std::io::Error::other(msg),
    };
    if is_url(source) {
        log::info!("downloading {source}");
        let resp = ureq::get(source).call().map_err(|e| fail(e.to_string()))?;
        let mut bytes = Vec::new();
        resp.into_reader()
            .read_to_end(&mut bytes)
            .map_err(|e| fail(e.to_string()))?;
        Ok(bytes)
    } else {
        std::fs::read(source).map_err(|e| Error::Io {
            path: PathBuf::from(source),
            source: e,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads `source` and, when `expected` is given, checks its SHA-256.
fn fetch_verified(source: &str, expected: Option<&str>) -> Result<Vec<u8>, Error> {
    let bytes = read_source(source)?;
    let actual = sha256_hex(&bytes);
    match expected {
        Some(want) if !want.eq_ignore_ascii_case(&actual) => Err(Error::Checkpoint(format!(
            "sha256 mismatch for {source}: expected {want}, got {actual}"
        ))),
        Some(_) => Ok(bytes),
        None => {
            log::warn!("{source}: no --*-sha256 given, sha256 is {actual}");
            Ok(bytes)
        }
    }
}

pub fn fetch(a: &FetchArgs, cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = match &a.out {
        Some(p) => p.clone(),
        None => match std::env::var_os(WEIGHTS_DIR_ENV) {
            Some(d) => PathBuf::from(d).join(DEFAULT_WEIGHTS_FILE),
            None => {
                return Err(crate::exit::UsageError(format!("pass --out or set {WEIGHTS_DIR_ENV}")).into())
            }
        },
    };
    let encoder = fetch_verified(&a.encoder, a.encoder_sha256.as_deref())?;
    let decoder = a
        .decoder
        .as_deref()
        .map(|s| fetch_verified(s, a.decoder_sha256.as_deref()))
        .transpose()?;
    let transformer = a
        .transformer
        .as_deref()
        .map(|s| fetch_verified(s, a.transformer_sha256.as_deref()))
        .transpose()?;
    let mut weights =
        convert::import_safetensors(&encoder, decoder.as_deref(), transformer.as_deref(), cfg.seed)?;
    weights.set_loss_weights(cfg.loss_weights);
    let mut metadata = BTreeMap::from([
        ("encoder".to_string(), a.encoder.clone()),
        ("encoder_sha256".to_string(), sha256_hex(&encoder)),
        ("seed".to_string(), cfg.seed.to_string()),
    ]);
    for (key, src, bytes) in [
        ("decoder", &a.decoder, &decoder),
        ("transformer", &a.transformer, &transformer),
    ] {
        if let (Some(s), Some(b)) = (src, bytes) {
            metadata.insert(key.to_string(), s.clone());
            metadata.insert(format!("{key}_sha256"), sha256_hex(b));
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    checkpoint::save(&weights, &metadata, &out)?;
    log::info!("wrote {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_mismatch_is_a_checkpoint_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("enc.safetensors");
        std::fs::write(&p, b"abc").unwrap();
        let src = p.to_str().unwrap();
        let err = fetch_verified(src, Some("00")).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        let ok = fetch_verified(
            src,
            Some("BA7816BF8F01CFEA414140DE5DAE2223B00361A396177A9CB410FF61F20015AD"),
        );
        assert_eq!(ok.unwrap(), b"abc");
    }
}
