//! Checkpoint files: a human-readable key-value config header followed
//! by the binary parameter payload.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::forward::Model;
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};

const HEADER_END: &str = "---";

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let header = config_header(&model.cfg)?;
    w.write_all(header.as_bytes())
        .and_then(|_| model.params.serialize(&mut w))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let cfg = read_header(&mut r)?;
    let params = ParamStore::deserialize(&mut r)?;
    let model = Model::from_parts(cfg, params)?;
    check_params_match(&model)?;
    Ok(model)
}

fn check_params_match(model: &Model) -> Result<()> {
    let expected = model.cfg.init_params(0)?;
    let got: Vec<&str> = model.params.names().collect();
    let want: Vec<&str> = expected.names().collect();
    if got != want {
        return Err(Error::format(
            "checkpoint parameters do not match its config header",
        ));
    }
    for (name, value, _) in model.params.iter() {
        if expected.get(name)?.shape() != value.shape() {
            return Err(Error::format(format!(
                "checkpoint parameter {name:?} has unexpected shape"
            )));
        }
    }
    Ok(())
}

fn config_header(cfg: &ModelConfig) -> Result<String> {
    let json = serde_json::to_string(cfg)
        .map_err(|e| Error::format(format!("cannot encode model config: {e}")))?;
    let mut s = String::new();
    s.push_str("format: ranp-checkpoint\n");
    s.push_str("version: 1\n");
    s.push_str(&format!("variant: {}\n", cfg.kind.as_str()));
    s.push_str(&format!("config: {json}\n"));
    s.push_str(HEADER_END);
    s.push('\n');
    Ok(s)
}

fn read_header<R: BufRead + Read>(r: &mut R) -> Result<ModelConfig> {
    let mut config_line = None;
    let mut saw_format = false;
    loop {
        let mut line = String::new();
        let n = r
            .read_line(&mut line)
            .map_err(|e| Error::format(format!("cannot read checkpoint header: {e}")))?;
        if n == 0 {
            return Err(Error::format("checkpoint header is truncated"));
        }
        let line = line.trim_end_matches('\n');
        if line == HEADER_END {
            break;
        }
        if let Some(rest) = line.strip_prefix("format: ") {
            if rest != "ranp-checkpoint" {
                return Err(Error::format(format!("unknown checkpoint format {rest:?}")));
            }
            saw_format = true;
        } else if let Some(rest) = line.strip_prefix("config: ") {
            config_line = Some(rest.to_string());
        }
    }
    if !saw_format {
        return Err(Error::format("missing checkpoint format line"));
    }
    let json = config_line.ok_or_else(|| Error::format("missing checkpoint config line"))?;
    serde_json::from_str(&json).map_err(|e| Error::format(format!("bad checkpoint config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::VariantKind;
    use crate::nn::AttentionKind;

    fn small_cfg() -> ModelConfig {
        let mut cfg = ModelConfig::defaults(VariantKind::Anp, AttentionKind::DotProduct);
        cfg.d_r = 8;
        cfg.d_z = 4;
        cfg.enc_hidden = vec![8];
        cfg.latent_hidden = vec![8];
        cfg.dec_hidden = vec![8];
        cfg
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let model = Model::new(small_cfg(), 17).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.cfg, model.cfg);
        for ((n1, v1, _), (n2, v2, _)) in model.params.iter().zip(loaded.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(v1.data(), v2.data());
        }
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
