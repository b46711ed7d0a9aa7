// temporary: small-scale sweep over background-profile schemes
use norbert_core::analysis::nearest_neighbors;
use norbert_core::baselines::{count_cooccurrence, glove_train, random_table, GloveConfig};
use norbert_core::corpus::{build_sequences, DeviceLabel, DnsEvent, StopList};
use norbert_core::downstream::{
    evaluate_cross, split_dataset, train_classifier, weighted_f1, EmbeddingSource, GruConfig,
    LabeledDataset, Task,
};
use norbert_core::encoder::EncoderConfig;
use norbert_core::numerics::Rng;
use norbert_core::pretrain::{encode_sequences, masked_eval, pretrain, static_table, PretrainConfig};
use norbert_core::tokenizer::{TokenizerConfig, Vocabulary};
use norbert_core::analysis::cosine;
use std::collections::BTreeMap;
use std::time::Instant;

const T: usize = 6;
const F: usize = 4;
const ENVS: usize = 2;

#[derive(Clone, Copy, Debug)]
enum Scheme {
    Dedicated,
    TypeShared3,
    HalfPair,
}

fn profile(scheme: Scheme, t: usize, f: usize) -> Vec<usize> {
    match scheme {
        Scheme::Dedicated => vec![t * F + f],
        Scheme::TypeShared3 => (0..3).map(|j| ((t + j) % T) * F + f).collect(),
        Scheme::HalfPair => {
            let half = (T + 1) / 2;
            let pair = t % half;
            vec![t * F + f, T * F + pair * F + f]
        }
    }
}

fn gen(scheme: Scheme, dpt: usize, queries: usize, p: f64, seed: u64) -> (Vec<DnsEvent>, Vec<DeviceLabel>) {
    let root = Rng::new(seed);
    let mut events = Vec::new();
    let mut labels = Vec::new();
    let n_devices = T * dpt * ENVS;
    let mut dev_idx = 0usize;
    for env in 0..ENVS {
        for t in 0..T {
            for d in 0..dpt {
                let id = format!("env{env}-type{t}-dev{d}");
                labels.push(DeviceLabel {
                    device_id: id.clone(),
                    device_type: format!("type{t}"),
                    manufacturer: format!("mfr{}", t % 3),
                });
                let mut rng = root.fork(dev_idx as u64);
                let fam = d % F; // devices specialize to one family
                for slot in 0..queries {
                    let fqdn = if rng.bernoulli(p) {
                        // 30% of background lookups are uniform pool noise
                        let slot_idx = if rng.bernoulli(0.3) {
                            rng.below(T * F + 12)
                        } else {
                            let prof = profile(scheme, t, fam);
                            prof[rng.below(prof.len())]
                        };
                        format!("bg{slot_idx}.shared.example")
                    } else {
                        format!("svc{fam}v{}.type{t}.example", env % 2)
                    };
                    events.push(DnsEvent {
                        timestamp: slot as f64 + dev_idx as f64 / n_devices as f64,
                        device_id: id.clone(),
                        fqdn,
                    });
                }
                dev_idx += 1;
            }
        }
    }
    (events, labels)
}

fn run_config(scheme: Scheme, p: f64, steps: u64) {
    let t_start = Instant::now();
    let (events, labels) = gen(scheme, 10, 1600, p, 42);
    let tok = TokenizerConfig::default();
    let stops = StopList::default();
    let seqs = build_sequences(&events, 64, &tok, &stops).unwrap();
    let (vocab, _) = Vocabulary::build(
        seqs.iter().flat_map(|s| s.tokens.iter().map(|x| x.as_str())),
        1,
    );
    let corpus = encode_sequences(&seqs, &vocab);
    let enc_cfg = EncoderConfig {
        dim: 64,
        heads: 4,
        layers: 2,
        ffn_dim: 256,
        max_len: 64,
        vocab_size: vocab.len(),
        dropout: 0.1,
    };
    let pre_cfg = PretrainConfig {
        total_steps: steps,
        seed: 7,
        ..Default::default()
    };
    let (model, _) = pretrain(&corpus, &enc_cfg, &pre_cfg).unwrap();
    let (eval_loss, top1) = masked_eval(&model, &corpus, &pre_cfg, 99, 10).unwrap();

    // static-table geometry
    let table = static_table(&model, &vocab).unwrap();
    let mut mutual = 0;
    for t in 0..T {
        for f in 0..F {
            let v0 = format!("svc{f}v0.type{t}.example");
            let v1 = format!("svc{f}v1.type{t}.example");
            let n0 = nearest_neighbors(&v0, &table, 1).unwrap();
            let n1 = nearest_neighbors(&v1, &table, 1).unwrap();
            if n0.neighbors[0].0 == v1 && n1.neighbors[0].0 == v0 {
                mutual += 1;
            }
        }
    }
    let pair_cos = |a: &str, b: &str| {
        cosine(
            table.row(table.token_id(a).unwrap()),
            table.row(table.token_id(b).unwrap()),
        )
        .unwrap()
    };
    let mut cs_fam = 0.0;
    let mut cs_type = 0.0;
    let mut n_pairs = 0.0;
    for t in 0..T {
        for f in 0..F {
            cs_fam += pair_cos(
                &format!("svc{f}v0.type{t}.example"),
                &format!("svc{f}v1.type{t}.example"),
            ) as f64;
            cs_type += pair_cos(
                &format!("svc{f}v0.type{t}.example"),
                &format!("svc{}v0.type{t}.example", (f + 1) % F),
            ) as f64;
            n_pairs += 1.0;
        }
    }

    // classifier check (single seed)
    let label_map: BTreeMap<_, _> = labels.iter().map(|l| (l.device_id.clone(), l.clone())).collect();
    let cls_seqs = build_sequences(&events, 32, &tok, &stops).unwrap();
    let env1: Vec<_> = cls_seqs.iter().filter(|s| s.device_id.starts_with("env0-")).cloned().collect();
    let env2: Vec<_> = cls_seqs.iter().filter(|s| s.device_id.starts_with("env1-")).cloned().collect();
    let ds1 = LabeledDataset::from_sequences(&env1, &label_map, &vocab).unwrap();
    let ds2 = LabeledDataset::from_sequences(&env2, &label_map, &vocab).unwrap();
    let (train, test) = split_dataset(&ds1, Task::DeviceType, 0.75, 1, 50).unwrap();
    let cooc = count_cooccurrence(&corpus, 5).unwrap();
    let (glove_table, _) = glove_train(
        &cooc,
        &GloveConfig { dim: 64, epochs: 50, seed: 3, ..Default::default() },
        &vocab,
    )
    .unwrap();
    let gru = GruConfig { input_dim: 64, epochs: 40, seed: 1, ..Default::default() };
    let mut line = format!(
        "{scheme:?} p={p}: loss {eval_loss:.2} top1 {top1:.2} | mutualNN {mutual}/{} | cos fam {:.3} type {:.3} |",
        T * F,
        cs_fam / n_pairs,
        cs_type / n_pairs
    );
    for regime in ["random", "glove", "norbert"] {
        let source = match regime {
            "random" => EmbeddingSource::Random(random_table(&vocab, 64, 1).unwrap()),
            "glove" => EmbeddingSource::Glove { table: glove_table.clone(), fine_tune: false },
            _ => EmbeddingSource::Norbert(model.clone()),
        };
        let (clf, _) = train_classifier(&train, source, &gru, Task::DeviceType).unwrap();
        let preds = clf.predict(&test.sequences).unwrap();
        let in_dist = weighted_f1(&preds, test.labels(Task::DeviceType), &clf.classes).unwrap().weighted_f1;
        let (cross, _) = evaluate_cross(&clf, &ds2).unwrap();
        line += &format!(" {regime} {in_dist:.2}/{:.2}", cross.weighted_f1);
    }
    println!("{line} ({:.0}s)", t_start.elapsed().as_secs_f64());
}

fn main() {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3000);
    run_config(Scheme::TypeShared3, 0.6, steps);
    run_config(Scheme::TypeShared3, 0.75, steps);
}
