//! Shared fixture for the training-dependent criteria: the two-environment
//! synthetic corpus, the 3000-step pretrained encoder, and its evaluation
//! numbers. Built once, reused by every criterion that needs it.

use norbert_core::corpus::{build_sequences, generate_synthetic, StopList, SynthConfig};
use norbert_core::encoder::{Encoder, EncoderConfig};
use norbert_core::pretrain::{encode_sequences, masked_eval, pretrain, PretrainConfig};
use norbert_core::tokenizer::{TokenizerConfig, Vocabulary};
use std::sync::OnceLock;
use std::time::Instant;

pub struct ShiftFixture {
    pub synth: SynthConfig,
    pub vocab: Vocabulary,
    /// Encoded pretraining corpus (both environments, unlabeled).
    pub corpus: Vec<Vec<u32>>,
    pub corpus_sequences: usize,
    pub model: Encoder<f32>,
    pub pretrain_cfg: PretrainConfig,
    pub eval_loss: f64,
    pub eval_top1: f64,
    pub pretrain_minutes: f64,
}

/// Pretraining corpus topology: 12 device types x 6 service families x 2
/// variants plus the shared background pool gives |V| = 219 (about 200);
/// 504 devices x 6400 queries windowed at 64 gives 50,400 stored sequences.
pub fn shift_synth_config() -> SynthConfig {
    SynthConfig {
        num_device_types: 12,
        devices_per_type_per_env: 21,
        environments: 2,
        service_families_per_type: 6,
        variants_per_family: 2,
        queries_per_device: 6400,
        shared_background_fraction: 0.75,
        seed: 42,
    }
}

pub fn shift_fixture() -> &'static ShiftFixture {
    static FIXTURE: OnceLock<ShiftFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let synth = shift_synth_config();
        let (events, _) = generate_synthetic(&synth).unwrap();
        let tok = TokenizerConfig::default();
        let stops = StopList::default();
        let seqs = build_sequences(&events, 64, &tok, &stops).unwrap();
        drop(events);
        let (vocab, _) = Vocabulary::build(
            seqs.iter().flat_map(|s| s.tokens.iter().map(|t| t.as_str())),
            1,
        );
        let corpus = encode_sequences(&seqs, &vocab);
        drop(seqs);

        let enc_cfg = EncoderConfig::new(vocab.len());
        let pretrain_cfg = PretrainConfig {
            total_steps: 3000,
            seed: 7,
            ..Default::default()
        };
        let t0 = Instant::now();
        let (model, _) = pretrain(&corpus, &enc_cfg, &pretrain_cfg).unwrap();
        let pretrain_minutes = t0.elapsed().as_secs_f64() / 60.0;
        let (eval_loss, eval_top1) = masked_eval(&model, &corpus, &pretrain_cfg, 999, 20).unwrap();

        ShiftFixture {
            synth,
            vocab,
            corpus_sequences: corpus.len(),
            corpus,
            model,
            pretrain_cfg,
            eval_loss,
            eval_top1,
            pretrain_minutes,
        }
    })
}
