//! Model bundles: a directory holding everything needed to reload a model
//! for decoding — parameters, config, and both vocabularies.

use std::path::Path;

use crate::error::{Error, Result};
use crate::corpus::vocab::Vocab;
use crate::nn::checkpoint::{load_params, save_params};

use super::model::{ModelConfig, Seq2SeqModel};

const PARAMS_FILE: &str = "params.bin";
const CONFIG_FILE: &str = "model.toml";
const INPUT_VOCAB_FILE: &str = "input_vocab.txt";
const OUTPUT_VOCAB_FILE: &str = "output_vocab.txt";

/// Write the model into `dir` (created if missing): params.bin, model.toml,
/// input_vocab.txt, output_vocab.txt.
pub fn save_bundle(model: &Seq2SeqModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_params(&model.params, &dir.join(PARAMS_FILE))?;
    let toml_text = toml::to_string_pretty(&model.config)
        .map_err(|e| Error::Config(format!("serializing model config: {e}")))?;
    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(&config_path, toml_text).map_err(|e| Error::io(&config_path, e))?;
    model.input_vocab.save(&dir.join(INPUT_VOCAB_FILE))?;
    model.output_vocab.save(&dir.join(OUTPUT_VOCAB_FILE))?;
    Ok(())
}

/// Reload a bundle saved by `save_bundle`. Parameter shapes are checked
/// against the config and vocabulary sizes.
pub fn load_bundle(dir: &Path) -> Result<Seq2SeqModel> {
    let config_path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let config: ModelConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("reading model config: {e}")))?;
    let input_vocab = Vocab::load(&dir.join(INPUT_VOCAB_FILE))?;
    let output_vocab = Vocab::load(&dir.join(OUTPUT_VOCAB_FILE))?;
    let params = load_params(&dir.join(PARAMS_FILE))?;
    Seq2SeqModel::from_parts(config, input_vocab, output_vocab, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::linearize::{LinMode, LinearizedInput};
    use crate::seq2seq::decode::greedy;
    use crate::seq2seq::model::LAYERS;

    fn tiny_vocab(extra: &[&str]) -> Vocab {
        let counts: std::collections::HashMap<String, u64> =
            extra.iter().enumerate().map(|(i, t)| (t.to_string(), 100 - i as u64)).collect();
        Vocab::from_counts(&counts)
    }

    fn tiny_model(seed: u64) -> Seq2SeqModel {
        let config = ModelConfig {
            embed_dim: 10,
            hidden_dim: 12,
            layers: LAYERS,
            dropout: 0.25,
            max_decode_len: 15,
            mode: LinMode::DaVariable,
        };
        let input_vocab = tiny_vocab(&["inform", "color_red", "color_blue", "size_small"]);
        let output_vocab = tiny_vocab(&["a", "red", "blue", "small", "box"]);
        Seq2SeqModel::new(config, input_vocab, output_vocab, seed).unwrap()
    }

    #[test]
    fn bundle_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model(3);
        save_bundle(&model, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        assert!(loaded.params.bit_equal(&model.params));
        assert_eq!(loaded.config.embed_dim, model.config.embed_dim);
        assert_eq!(loaded.config.mode, model.config.mode);
        assert_eq!(loaded.input_vocab.len(), model.input_vocab.len());
        assert_eq!(loaded.output_vocab.len(), model.output_vocab.len());
    }

    #[test]
    fn greedy_outputs_identical_after_reload() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model(7);
        save_bundle(&model, dir.path()).unwrap();
        let loaded = load_bundle(dir.path()).unwrap();
        for tokens in [
            vec!["inform", "color_red"],
            vec!["inform", "color_blue", "size_small"],
            vec!["color_red", "size_small"],
        ] {
            let input = LinearizedInput { tokens: tokens.iter().map(|t| t.to_string()).collect() };
            let a = greedy(&model, &input).unwrap();
            let b = greedy(&loaded, &input).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupted_params_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model(11);
        save_bundle(&model, dir.path()).unwrap();
        let params_path = dir.path().join("params.bin");
        let mut bytes = std::fs::read(&params_path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        std::fs::write(&params_path, bytes).unwrap();
        assert!(load_bundle(dir.path()).is_err());
    }

    #[test]
    fn missing_files_fail_to_load() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_bundle(dir.path()).is_err());
        let model = tiny_model(13);
        save_bundle(&model, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("output_vocab.txt")).unwrap();
        assert!(load_bundle(dir.path()).is_err());
    }

    #[test]
    fn mismatched_vocab_is_rejected() {
        // Shrinking the output vocab after saving breaks the projection
        // shape check on reload.
        let dir = tempfile::tempdir().unwrap();
        let model = tiny_model(17);
        save_bundle(&model, dir.path()).unwrap();
        let small = tiny_vocab(&["a"]);
        small.save(&dir.path().join("output_vocab.txt")).unwrap();
        assert!(load_bundle(dir.path()).is_err());
    }
}
