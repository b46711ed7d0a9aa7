// temporary experiment driver: tunes the acceptance-scale shift setup
use norbert_core::baselines::{count_cooccurrence, glove_train, random_table, GloveConfig};
use norbert_core::corpus::{build_sequences, generate_synthetic, StopList, SynthConfig};
use norbert_core::downstream::{
    evaluate_cross, split_dataset, train_classifier, weighted_f1, EmbeddingSource, GruConfig,
    LabeledDataset, Task,
};
use norbert_core::encoder::EncoderConfig;
use norbert_core::pretrain::{
    embed_ids, encode_sequences, masked_eval, pretrain, static_table, PretrainConfig,
};
use norbert_core::analysis::{cosine, nearest_neighbors};
use norbert_core::tokenizer::{TokenizerConfig, Vocabulary};
use std::collections::BTreeMap;
use std::time::Instant;

fn main() {
    let steps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1000);
    let t_all = Instant::now();

    // ---- corpus ----
    let synth = SynthConfig {
        num_device_types: 12,
        devices_per_type_per_env: 21,
        environments: 2,
        service_families_per_type: 6,
        variants_per_family: 2,
        queries_per_device: 6400,
        shared_background_fraction: 0.75,
        seed: 42,
    };
    let t0 = Instant::now();
    let (events, _labels) = generate_synthetic(&synth).unwrap();
    println!("events: {} in {:.1}s", events.len(), t0.elapsed().as_secs_f64());

    let tok = TokenizerConfig::default();
    let stops = StopList::default();
    let t0 = Instant::now();
    let seqs = build_sequences(&events, 64, &tok, &stops).unwrap();
    let (vocab, _) = Vocabulary::build(
        seqs.iter().flat_map(|s| s.tokens.iter().map(|t| t.as_str())),
        1,
    );
    let corpus = encode_sequences(&seqs, &vocab);
    drop(seqs);
    drop(events);
    println!(
        "sequences: {} vocab: {} in {:.1}s",
        corpus.len(),
        vocab.len(),
        t0.elapsed().as_secs_f64()
    );

    // ---- pretrain ----
    let enc_cfg = EncoderConfig::new(vocab.len());
    let pre_cfg = PretrainConfig {
        total_steps: steps,
        seed: 7,
        ..Default::default()
    };
    let t0 = Instant::now();
    let (model, trace) = pretrain(&corpus, &enc_cfg, &pre_cfg).unwrap();
    println!(
        "pretrained {} steps in {:.1} min (first loss {:.3}, last {:.3})",
        steps,
        t0.elapsed().as_secs_f64() / 60.0,
        trace.first().unwrap().loss,
        trace.last().unwrap().loss
    );
    let (eval_loss, top1) = masked_eval(&model, &corpus, &pre_cfg, 999, 20).unwrap();
    let baseline = (vocab.len() as f64).ln();
    println!(
        "criterion4: eval loss {:.3} vs 0.5*ln|V| = {:.3}; top1 {:.3} vs 10x chance {:.4}",
        eval_loss,
        0.5 * baseline,
        top1,
        10.0 / vocab.len() as f64
    );

    // ---- criterion 5: contextualization ----
    let probe_token = vocab.encode(&synth.variant_fqdn(0, 0, 0));
    let bg = |i: usize| vocab.encode(&synth.background_fqdn(i));
    let ctx_a: Vec<u32> = vec![probe_token, bg(0), bg(1), bg(2), probe_token, bg(3)];
    let ctx_b: Vec<u32> = vec![bg(40), probe_token, bg(41), bg(42), probe_token, bg(43)];
    let ha = embed_ids(&model, &ctx_a).unwrap();
    let hb = embed_ids(&model, &ctx_b).unwrap();
    let d = model.config.dim;
    let cos_ctx = cosine(&ha[..d], &hb[d..2 * d]).unwrap();
    println!("criterion5: cosine across contexts {:.6} (must be < {:.6})", cos_ctx, 1.0 - 1e-4);

    // ---- criterion 7: family variant neighbors (static table) ----
    let table = static_table(&model, &vocab).unwrap();
    let mut mutual = 0usize;
    let mut total = 0usize;
    for t in 0..synth.num_device_types {
        for f in 0..synth.service_families_per_type {
            let v0 = synth.variant_fqdn(t, f, 0);
            let v1 = synth.variant_fqdn(t, f, 1);
            total += 1;
            let n0 = nearest_neighbors(&v0, &table, 1).unwrap();
            let n1 = nearest_neighbors(&v1, &table, 1).unwrap();
            if n0.neighbors[0].0 == v1 && n1.neighbors[0].0 == v0 {
                mutual += 1;
            }
        }
    }
    println!(
        "criterion7: mutual top-1 variants {}/{} = {:.2}",
        mutual,
        total,
        mutual as f64 / total as f64
    );
    // diagnostics: embedding geometry
    let avg = |pairs: &[(u32, u32)]| -> f64 {
        pairs
            .iter()
            .map(|&(a, b)| cosine(table.row(a as usize), table.row(b as usize)).unwrap() as f64)
            .sum::<f64>()
            / pairs.len() as f64
    };
    let enc_id = |name: &str| vocab.encode(name);
    let mut same_family = Vec::new();
    let mut same_type = Vec::new();
    let mut cross_type = Vec::new();
    for t in 0..synth.num_device_types {
        for f in 0..synth.service_families_per_type {
            let v0 = enc_id(&synth.variant_fqdn(t, f, 0));
            let v1 = enc_id(&synth.variant_fqdn(t, f, 1));
            same_family.push((v0, v1));
            let f2 = (f + 1) % synth.service_families_per_type;
            same_type.push((v0, enc_id(&synth.variant_fqdn(t, f2, 0))));
            let t2 = (t + 3) % synth.num_device_types;
            cross_type.push((v0, enc_id(&synth.variant_fqdn(t2, f, 0))));
        }
    }
    println!(
        "geometry: cos(same family v0,v1) {:.3}; cos(same type, other family) {:.3}; cos(cross type) {:.3}",
        avg(&same_family), avg(&same_type), avg(&cross_type)
    );
    for (t, f) in [(0usize, 0usize), (5, 2)] {
        let v0 = synth.variant_fqdn(t, f, 0);
        let nn = nearest_neighbors(&v0, &table, 3).unwrap();
        println!("  nn({v0}): {:?}", nn.neighbors.iter().map(|(n, c)| format!("{n} {c:.3}")).collect::<Vec<_>>());
    }

    // ---- classifier data ----
    let cls_synth = SynthConfig {
        devices_per_type_per_env: 6,
        queries_per_device: 640,
        seed: 77,
        ..synth.clone()
    };
    let (cls_events, cls_labels) = generate_synthetic(&cls_synth).unwrap();
    let label_map: BTreeMap<_, _> = cls_labels
        .iter()
        .map(|l| (l.device_id.clone(), l.clone()))
        .collect();
    let cls_seqs = build_sequences(&cls_events, 32, &tok, &stops).unwrap();
    let env1: Vec<_> = cls_seqs
        .iter()
        .filter(|s| s.device_id.starts_with("env0-"))
        .cloned()
        .collect();
    let env2: Vec<_> = cls_seqs
        .iter()
        .filter(|s| s.device_id.starts_with("env1-"))
        .cloned()
        .collect();
    let ds1 = LabeledDataset::from_sequences(&env1, &label_map, &vocab).unwrap();
    let ds2 = LabeledDataset::from_sequences(&env2, &label_map, &vocab).unwrap();
    println!("env1 {} seqs, env2 {} seqs", ds1.len(), ds2.len());

    // glove table trained on the full (both-env) unlabeled corpus
    let t0 = Instant::now();
    let cooc = count_cooccurrence(&corpus, 5).unwrap();
    let glove_cfg = GloveConfig {
        epochs: 50,
        seed: 3,
        ..Default::default()
    };
    let (glove_table, obj) = glove_train(&cooc, &glove_cfg, &vocab).unwrap();
    println!(
        "glove: {} nonzeros, obj {:.1} -> {:.1} in {:.1}s",
        cooc.nonzeros(),
        obj.first().unwrap(),
        obj.last().unwrap(),
        t0.elapsed().as_secs_f64()
    );

    // ---- criterion 6 ----
    let task = Task::DeviceType;
    for seed in [1u64, 2, 3] {
        let (train, test) = split_dataset(&ds1, task, 0.75, seed, 100).unwrap();
        let gru_cfg = GruConfig {
            epochs: 60,
            seed,
            ..Default::default()
        };
        let t0 = Instant::now();
        let mut scores = Vec::new();
        for regime in ["random", "glove", "norbert"] {
            let source = match regime {
                "random" => EmbeddingSource::Random(random_table(&vocab, 128, seed).unwrap()),
                "glove" => EmbeddingSource::Glove {
                    table: glove_table.clone(),
                    fine_tune: false,
                },
                _ => EmbeddingSource::Norbert(model.clone()),
            };
            let (clf, _) = train_classifier(&train, source, &gru_cfg, task).unwrap();
            let preds = clf.predict(&test.sequences).unwrap();
            let in_dist = weighted_f1(&preds, test.labels(task), &clf.classes)
                .unwrap()
                .weighted_f1;
            let (cross, _) = evaluate_cross(&clf, &ds2).unwrap();
            scores.push((regime, in_dist, cross.weighted_f1));
        }
        println!(
            "seed {seed}: {:?} ({:.1}s)",
            scores
                .iter()
                .map(|(r, i, c)| format!("{r}: in {i:.3} cross {c:.3}"))
                .collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
    println!("total {:.1} min", t_all.elapsed().as_secs_f64() / 60.0);
}
