//! Acceptance suite. Each test prints one pass/fail line per criterion
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 4-7 share one expensive fixture (synthetic two-environment
//! corpus + 3000-step pretraining); the first of those tests to run pays the
//! training cost.

mod fixture;

use fixture::shift_fixture;
use norbert_core::analysis::{
    cosine, joint_affinities, kl_and_grad, nearest_neighbors, pca_2d, tsne_2d, ProjectionConfig,
    ProjectionMethod, TsneTrace,
};
use norbert_core::baselines::{count_cooccurrence, glove_term, glove_train, GloveConfig};
use norbert_core::corpus::{build_sequences, generate_synthetic, StopList, SynthConfig};
use norbert_core::downstream::{split_dataset, weighted_f1, GruStack, Task};
use norbert_core::encoder::{
    load_checkpoint, save_checkpoint, Encoder, EncoderConfig, EncoderWeights,
};
use norbert_core::numerics::{cross_entropy, grad_check, Rng};
use norbert_core::pretrain::{
    apply_masking, embed_ids, encode_sequences, pretrain, static_table, MaskingConfig,
    PretrainConfig,
};
use norbert_core::tokenizer::{truncate_fqdn, TokenizerConfig, TruncateMode, Vocabulary, MASK_ID};
use std::time::Instant;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "acceptance criterion {id} ({name}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}): {detail}");
}

#[test]
fn criterion_1_tokenizer_exactness() {
    let t0 = Instant::now();
    let r = |f: &str| truncate_fqdn(f, 3, TruncateMode::Rightmost).unwrap();
    let l = |f: &str| truncate_fqdn(f, 3, TruncateMode::LeftmostLiteral).unwrap();
    let a = r("server-54.us-east-1.update.xyz.com") == "update.xyz.com";
    let b = r("mascots.iitis.pl") == "mascots.iitis.pl";
    let c = l("server-54.us-east-1.update.xyz.com") == "server-54.us-east-1.update";
    let merged =
        r("server-54.us-east-1.update.xyz.com") == r("server-27.us-west-2.update.xyz.com");
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        1,
        "tokenizer exactness",
        a && b && c && merged && elapsed < 1.0,
        &format!(
            "rightmost/pass-through/literal = {a}/{b}/{c}, geo pair merged = {merged}, {elapsed:.3}s"
        ),
    );
}

#[test]
fn criterion_2_masking_statistics() {
    let t0 = Instant::now();
    let cfg = MaskingConfig::default();
    let vocab_size = 200usize;
    let mut rng = Rng::new(20_240_816);
    let seq: Vec<u32> = (0..32).map(|i| 3 + (i as u32 % 180)).collect();
    let (mut masked, mut kept, mut randomized, mut anchors_total) = (0u64, 0u64, 0u64, 0u64);
    let mut per_row_exact = true;
    for _ in 0..10_000 {
        let row = apply_masking(&seq, vocab_size, &mut rng, &cfg).unwrap();
        let row_anchors = row.anchor_flags.iter().filter(|&&a| a).count();
        per_row_exact &= row_anchors == 5; // round(0.15 * 32) = round(4.8)
        for p in 0..seq.len() {
            if !row.anchor_flags[p] {
                continue;
            }
            anchors_total += 1;
            if row.input_ids[p] == MASK_ID {
                masked += 1;
            } else if row.input_ids[p] == seq[p] {
                kept += 1;
            } else {
                randomized += 1;
            }
        }
    }
    let frac = |x: u64| x as f64 / anchors_total as f64;
    let (fm, fk, fr) = (frac(masked), frac(kept), frac(randomized));
    let within = (fm - 0.80).abs() < 0.02 && (fk - 0.10).abs() < 0.02 && (fr - 0.10).abs() < 0.02;
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        2,
        "masking statistics",
        per_row_exact && within && elapsed < 10.0,
        &format!(
            "anchors/row exactly 5 = {per_row_exact}; fractions mask {fm:.4} keep {fk:.4} random {fr:.4}; {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_3_gradient_oracles() {
    let t0 = Instant::now();

    // (a) full masked-prediction loss on the tiny encoder, f64, dropout 0
    let enc_err = {
        let cfg = EncoderConfig {
            dim: 8,
            heads: 2,
            layers: 1,
            ffn_dim: 16,
            max_len: 4,
            vocab_size: 11,
            dropout: 0.0,
        };
        let mut rng = Rng::new(1234);
        let mut enc: Encoder<f64> = Encoder::init(cfg.clone(), &mut rng).unwrap();
        for t in enc.weights.params_mut() {
            for v in t.data_mut() {
                *v += 0.25 * rng.normal();
            }
        }
        let ids = [3u32, 7, 4, 9];
        let valid = [true, true, true, false];
        let anchors = vec![(0usize, 5u32), (2, 4u32)];
        let (_, grads) = enc
            .mlm_loss_and_grads(&ids, &valid, 1, 4, &anchors, None)
            .unwrap();
        let x0 = enc.weights.flatten();
        let cfg2 = cfg.clone();
        grad_check(
            |p| {
                let mut probe = Encoder {
                    config: cfg2.clone(),
                    weights: EncoderWeights::zeros_like(&cfg2),
                };
                probe.weights.unflatten_from(p);
                probe
                    .mlm_loss_and_grads(&ids, &valid, 1, 4, &anchors, None)
                    .unwrap()
                    .0
            },
            &x0,
            &grads.flatten(),
            1e-5,
        )
    };

    // (b) GRU classifier loss
    let gru_err = {
        let (din, hid, n, b, classes) = (6usize, 4usize, 3usize, 2usize, 2usize);
        let mut rng = Rng::new(21);
        let mut stack = GruStack::<f64>::init(din, hid, 1, classes, &mut Rng::new(20));
        for t in stack.params_mut() {
            for v in t.data_mut() {
                *v += 0.3 * rng.normal();
            }
        }
        let x: Vec<f64> = (0..b * n * din).map(|_| rng.normal() * 0.8).collect();
        let targets = [1usize, 0];
        let (logits, cache) = stack.forward(&x, b, n);
        let mut d_logits = vec![0.0f64; b * classes];
        for row in 0..b {
            let (_, g) =
                cross_entropy(&logits[row * classes..(row + 1) * classes], targets[row]).unwrap();
            for c in 0..classes {
                d_logits[row * classes + c] = g[c] / b as f64;
            }
        }
        let (grads, _) = stack.backward(&cache, &d_logits);
        grad_check(
            |p| {
                let mut probe = stack.clone();
                probe.unflatten_from(p);
                let (logits, _) = probe.forward(&x, b, n);
                let mut total = 0.0;
                for row in 0..b {
                    let (l, _) =
                        cross_entropy(&logits[row * classes..(row + 1) * classes], targets[row])
                            .unwrap();
                    total += l;
                }
                total / b as f64
            },
            &stack.flatten(),
            &grads.flatten(),
            1e-5,
        )
    };

    // (c) one co-occurrence factorization term
    let glove_err = {
        let d = 6;
        let mut rng = Rng::new(41);
        let wi: Vec<f64> = (0..d).map(|_| rng.normal() * 0.3).collect();
        let cj: Vec<f64> = (0..d).map(|_| rng.normal() * 0.3).collect();
        let (bi, bj) = (rng.normal() * 0.1, rng.normal() * 0.1);
        let x = 7.0;
        let (_, d_wi, d_cj, d_bi, d_bj) = glove_term(&wi, &cj, bi, bj, x, 100.0, 0.75);
        let mut flat = wi.clone();
        flat.extend(&cj);
        flat.push(bi);
        flat.push(bj);
        let mut analytic = d_wi.clone();
        analytic.extend(&d_cj);
        analytic.push(d_bi);
        analytic.push(d_bj);
        grad_check(
            |p| {
                glove_term(&p[..d], &p[d..2 * d], p[2 * d], p[2 * d + 1], x, 100.0, 0.75).0
            },
            &flat,
            &analytic,
            1e-6,
        )
    };

    // (d) t-SNE KL on 10 points
    let tsne_err = {
        let mut rng = Rng::new(7);
        let pts: Vec<f64> = (0..10 * 4)
            .map(|i| rng.normal() + if (i / 4) % 2 == 0 { 0.0 } else { 6.0 })
            .collect();
        let (p, _) = joint_affinities(&pts, 4, 2.5).unwrap();
        let y: Vec<f64> = (0..20).map(|_| rng.normal() * 0.5).collect();
        let (_, grad) = kl_and_grad(&p, &y, 10);
        grad_check(|yv| kl_and_grad(&p, yv, 10).0, &y, &grad, 1e-6)
    };

    let elapsed = t0.elapsed().as_secs_f64();
    let pass = enc_err < 1e-4 && gru_err < 1e-4 && glove_err < 1e-6 && tsne_err < 1e-5;
    report(
        3,
        "gradient oracles",
        pass && elapsed < 120.0,
        &format!(
            "max relative errors: encoder {enc_err:.2e}, gru {gru_err:.2e}, cooc term {glove_err:.2e}, t-SNE {tsne_err:.2e}; {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_8_determinism_and_round_trips() {
    let dir = std::env::temp_dir().join(format!("acceptance-c8-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    // seeded pretraining runs produce identical traces and checkpoints
    let synth = SynthConfig {
        num_device_types: 4,
        devices_per_type_per_env: 2,
        environments: 2,
        service_families_per_type: 3,
        variants_per_family: 2,
        queries_per_device: 512,
        shared_background_fraction: 0.5,
        seed: 5,
    };
    let (events, _) = generate_synthetic(&synth).unwrap();
    let seqs = build_sequences(&events, 16, &TokenizerConfig::default(), &StopList::default())
        .unwrap();
    let (vocab, _) = Vocabulary::build(
        seqs.iter().flat_map(|s| s.tokens.iter().map(|t| t.as_str())),
        1,
    );
    let corpus = encode_sequences(&seqs, &vocab);
    let enc_cfg = EncoderConfig {
        dim: 16,
        heads: 2,
        layers: 1,
        ffn_dim: 32,
        max_len: 16,
        vocab_size: vocab.len(),
        dropout: 0.1,
    };
    let pre_cfg = PretrainConfig {
        batch_size: 8,
        lengths: vec![8, 16],
        total_steps: 60,
        seed: 99,
        ..Default::default()
    };
    let (m1, t1) = pretrain(&corpus, &enc_cfg, &pre_cfg).unwrap();
    let (m2, t2) = pretrain(&corpus, &enc_cfg, &pre_cfg).unwrap();
    let traces_equal = t1 == t2;

    let ck1 = dir.join("a.nbrt");
    let ck2 = dir.join("b.nbrt");
    save_checkpoint(&m1, &vocab.content_hash(), &ck1).unwrap();
    save_checkpoint(&m2, &vocab.content_hash(), &ck2).unwrap();
    let checkpoints_identical = std::fs::read(&ck1).unwrap() == std::fs::read(&ck2).unwrap();

    // round trip is bit-exact
    let loaded = load_checkpoint(&ck1, Some(&vocab.content_hash())).unwrap();
    let mut round_trip_exact = true;
    for (a, b) in m1.weights.params().iter().zip(loaded.weights.params()) {
        round_trip_exact &= a.data() == b.data();
    }

    // splits are seed-deterministic
    let labels: std::collections::BTreeMap<_, _> = generate_synthetic(&synth)
        .unwrap()
        .1
        .into_iter()
        .map(|l| (l.device_id.clone(), l))
        .collect();
    let ds = norbert_core::downstream::LabeledDataset::from_sequences(&seqs, &labels, &vocab)
        .unwrap();
    let s1 = split_dataset(&ds, Task::DeviceType, 0.75, 11, 1).unwrap();
    let s2 = split_dataset(&ds, Task::DeviceType, 0.75, 11, 1).unwrap();
    let splits_equal = s1.0.sequences == s2.0.sequences && s1.1.sequences == s2.1.sequences;

    // hand-checked weighted F1
    let f1 = weighted_f1(&[0, 1, 1], &[0, 0, 1], &["A".to_string(), "B".to_string()])
        .unwrap()
        .weighted_f1;
    let f1_ok = (f1 - 0.6667).abs() < 1e-4;

    report(
        8,
        "determinism and round-trips",
        traces_equal && checkpoints_identical && round_trip_exact && splits_equal && f1_ok,
        &format!(
            "traces {traces_equal}, checkpoints {checkpoints_identical}, round-trip {round_trip_exact}, splits {splits_equal}, weighted F1 {f1:.4}"
        ),
    );
}

#[test]
fn criterion_9_projection_properties() {
    // per-point affinity entropy matches log2(perplexity)
    let mut rng = Rng::new(31);
    let pts: Vec<f64> = (0..200 * 8)
        .map(|i| rng.normal() * 1.5 + ((i / 8) % 4) as f64 * 5.0)
        .collect();
    let (p, entropy_err) = joint_affinities(&pts, 8, 30.0).unwrap();
    let p_sum: f64 = p.iter().sum();
    let entropy_ok = entropy_err < 1e-4;
    let sum_ok = (p_sum - 1.0).abs() < 1e-9;

    // KL decreases after the exaggeration phase on 200 points
    let cfg = ProjectionConfig {
        method: ProjectionMethod::Tsne,
        perplexity: 30.0,
        iterations: 1000,
        tsne_lr: 200.0,
        seed: 4,
    };
    let mut trace = TsneTrace::default();
    let _ = tsne_2d(&pts, 8, &cfg, Some(&mut trace)).unwrap();
    let kl_250 = trace.kl_at(250).unwrap();
    let kl_final = trace.kl.last().unwrap().1;
    let kl_ok = kl_final < kl_250;

    // PCA on collinear data: second-axis variance below 1e-10 of the first
    let dir3 = [2.0f64, -1.0, 0.5];
    let mut line_pts = Vec::new();
    for i in 0..40 {
        let s = i as f64 * 0.3 - 6.0;
        line_pts.extend(dir3.iter().map(|d| d * s));
    }
    let coords = pca_2d(&line_pts, 3).unwrap();
    let var = |axis: usize| -> f64 {
        let mean: f64 = coords.iter().map(|c| c[axis]).sum::<f64>() / coords.len() as f64;
        coords.iter().map(|c| (c[axis] - mean).powi(2)).sum::<f64>() / coords.len() as f64
    };
    let pca_ok = var(1) < 1e-10 * var(0);

    report(
        9,
        "t-SNE and PCA properties",
        entropy_ok && sum_ok && kl_ok && pca_ok,
        &format!(
            "entropy err {entropy_err:.2e} bits, sum(P) {p_sum:.9}, KL {kl_250:.4} -> {kl_final:.4}, PCA axis ratio {:.2e}",
            var(1) / var(0)
        ),
    );
}

#[test]
fn criterion_4_masked_learning() {
    let fx = shift_fixture();
    let baseline = (fx.vocab.len() as f64).ln();
    let chance = 1.0 / fx.vocab.len() as f64;
    let loss_ok = fx.eval_loss < 0.5 * baseline;
    let acc_ok = fx.eval_top1 > 10.0 * chance;
    report(
        4,
        "masked-token learning",
        loss_ok && acc_ok,
        &format!(
            "|V| = {}, {} sequences; eval loss {:.3} vs half-baseline {:.3}; top-1 {:.3} vs 10x chance {:.4}; pretraining {:.1} min",
            fx.vocab.len(),
            fx.corpus_sequences,
            fx.eval_loss,
            0.5 * baseline,
            fx.eval_top1,
            10.0 * chance,
            fx.pretrain_minutes
        ),
    );
}

#[test]
fn criterion_5_contextualization() {
    let fx = shift_fixture();
    let model = &fx.model;
    let probe = fx.vocab.encode(&fx.synth.variant_fqdn(0, 0, 0));
    let bg = |i: usize| fx.vocab.encode(&fx.synth.background_fqdn(i));
    let ctx_a = vec![probe, bg(0), bg(1), bg(2), probe, bg(3)];
    let ctx_b = vec![bg(20), probe, bg(21), bg(22), probe, bg(23)];
    let d = model.config.dim;
    let ha = embed_ids(model, &ctx_a).unwrap();
    let hb = embed_ids(model, &ctx_b).unwrap();
    // same token, position 0 in context A vs position 1 in context B
    let cos_ctx = cosine(&ha[..d], &hb[d..2 * d]).unwrap() as f64;

    // the static row for that token is context-invariant by construction
    let table = static_table(model, &fx.vocab).unwrap();
    let static_row_a = table.row(probe as usize).to_vec();
    let static_row_b = table.row(probe as usize).to_vec();

    report(
        5,
        "contextualization",
        cos_ctx < 1.0 - 1e-4 && static_row_a == static_row_b,
        &format!("contextual cosine across contexts {cos_ctx:.6}; static lookup invariant"),
    );
}

#[test]
fn criterion_6_generalization_ordering() {
    use norbert_core::baselines::random_table;
    use norbert_core::downstream::{
        evaluate_cross, train_classifier, EmbeddingSource, GruConfig, LabeledDataset,
    };
    use std::collections::BTreeMap;

    let fx = shift_fixture();
    let t0 = Instant::now();

    // labeled datasets: same topology as the pretraining corpus but a
    // different draw; classifier trains on environment-0 labels only
    let cls_synth = SynthConfig {
        devices_per_type_per_env: 6,
        queries_per_device: 640,
        seed: 77,
        ..fx.synth.clone()
    };
    let (events, labels) = generate_synthetic(&cls_synth).unwrap();
    let label_map: BTreeMap<_, _> = labels
        .into_iter()
        .map(|l| (l.device_id.clone(), l))
        .collect();
    let seqs =
        build_sequences(&events, 32, &TokenizerConfig::default(), &StopList::default()).unwrap();
    let env1: Vec<_> = seqs
        .iter()
        .filter(|s| s.device_id.starts_with("env0-"))
        .cloned()
        .collect();
    let env2: Vec<_> = seqs
        .iter()
        .filter(|s| s.device_id.starts_with("env1-"))
        .cloned()
        .collect();
    let ds1 = LabeledDataset::from_sequences(&env1, &label_map, &fx.vocab).unwrap();
    let ds2 = LabeledDataset::from_sequences(&env2, &label_map, &fx.vocab).unwrap();

    // co-occurrence baseline trained on the full unlabeled corpus
    let cooc = count_cooccurrence(&fx.corpus, 5).unwrap();
    let glove_cfg = GloveConfig {
        epochs: 50,
        seed: 3,
        ..Default::default()
    };
    let (glove_table, _) = glove_train(&cooc, &glove_cfg, &fx.vocab).unwrap();

    let task = Task::DeviceType;
    let mut in_dist = [0.0f64; 3]; // random, glove, norbert
    let mut cross = [0.0f64; 3];
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let (train, test) = split_dataset(&ds1, task, 0.75, seed, 100).unwrap();
        let gru_cfg = GruConfig {
            epochs: 60,
            seed,
            ..Default::default()
        };
        for (ri, regime) in ["random", "glove", "norbert"].iter().enumerate() {
            let source = match *regime {
                "random" => {
                    EmbeddingSource::Random(random_table(&fx.vocab, 128, seed).unwrap())
                }
                "glove" => EmbeddingSource::Glove {
                    table: glove_table.clone(),
                    fine_tune: false,
                },
                _ => EmbeddingSource::Norbert(fx.model.clone()),
            };
            let (clf, _) = train_classifier(&train, source, &gru_cfg, task).unwrap();
            let preds = clf.predict(&test.sequences).unwrap();
            let rep = weighted_f1(&preds, test.labels(task), &clf.classes).unwrap();
            in_dist[ri] += rep.weighted_f1 / seeds.len() as f64;
            let (crep, _) = evaluate_cross(&clf, &ds2).unwrap();
            cross[ri] += crep.weighted_f1 / seeds.len() as f64;
        }
    }

    let in_dist_ok = in_dist.iter().all(|&f| f >= 0.95);
    let margin_ok = cross[2] >= cross[0] + 0.15;
    let glove_ok = cross[2] >= cross[1];
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        6,
        "generalization ordering",
        in_dist_ok && margin_ok && glove_ok,
        &format!(
            "3-seed means — in-dist: random {:.3} glove {:.3} norbert {:.3}; cross-env: random {:.3} glove {:.3} norbert {:.3}; {elapsed:.0}s",
            in_dist[0], in_dist[1], in_dist[2], cross[0], cross[1], cross[2]
        ),
    );
}

#[test]
fn criterion_7_nearest_neighbor_semantics() {
    use norbert_core::extension::{build_field_sequences, FieldValueEvent};

    // (a) family variants are mutual top-1 neighbors in the static table
    let fx = shift_fixture();
    let table = static_table(&fx.model, &fx.vocab).unwrap();
    let mut mutual = 0usize;
    let mut total = 0usize;
    for t in 0..fx.synth.num_device_types {
        for f in 0..fx.synth.service_families_per_type {
            let v0 = fx.synth.variant_fqdn(t, f, 0);
            let v1 = fx.synth.variant_fqdn(t, f, 1);
            total += 1;
            let n0 = nearest_neighbors(&v0, &table, 1).unwrap();
            let n1 = nearest_neighbors(&v1, &table, 1).unwrap();
            if n0.neighbors[0].0 == v1 && n1.neighbors[0].0 == v0 {
                mutual += 1;
            }
        }
    }
    let family_rate = mutual as f64 / total as f64;

    // (b) field-token corpus: port 80's nearest neighbor is 443 under the
    // constructed co-occurrence (web flows speak both ports to the same
    // hosts; ssh/dns/tls flows provide distinct contexts)
    let mut events = Vec::new();
    let mut rng = Rng::new(4242);
    let mut push = |events: &mut Vec<FieldValueEvent>, flow: usize, slot: usize, field: &str, value: String| {
        events.push(FieldValueEvent {
            timestamp: slot as f64,
            id: format!("flow{flow}"),
            field: field.to_string(),
            value,
        });
    };
    let mut flow = 0usize;
    for _ in 0..40 {
        // web: hosts seen over both 80 and 443
        for slot in 0..128 {
            if slot % 2 == 0 {
                push(&mut events, flow, slot, "http.host", format!("site{}.example", rng.below(12)));
            } else {
                let port = if rng.bernoulli(0.5) { "80" } else { "443" };
                push(&mut events, flow, slot, "tcp.dstport", port.to_string());
            }
        }
        flow += 1;
    }
    for _ in 0..20 {
        for slot in 0..128 {
            if slot % 2 == 0 {
                push(&mut events, flow, slot, "ssh.version", format!("2.{}", rng.below(3)));
            } else {
                push(&mut events, flow, slot, "tcp.dstport", "22".to_string());
            }
        }
        flow += 1;
    }
    for _ in 0..20 {
        for slot in 0..128 {
            if slot % 2 == 0 {
                push(&mut events, flow, slot, "dns.qry.name", format!("name{}.example", rng.below(10)));
            } else {
                push(&mut events, flow, slot, "udp.dstport", "53".to_string());
            }
        }
        flow += 1;
    }
    for _ in 0..30 {
        // tls: ciphersuites 49199/49200 interchangeable in identical contexts
        for slot in 0..128 {
            if slot % 2 == 0 {
                push(&mut events, flow, slot, "ssl.handshake.version", "771".to_string());
            } else {
                let cs = if rng.bernoulli(0.5) { "49199" } else { "49200" };
                push(&mut events, flow, slot, "ssl.handshake.ciphersuite", cs.to_string());
            }
        }
        flow += 1;
    }

    let field_seqs = build_field_sequences(&events, 32).unwrap();
    let (field_vocab, _) = Vocabulary::build(
        field_seqs
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.as_str())),
        1,
    );
    let field_corpus = encode_sequences(&field_seqs, &field_vocab);
    let enc_cfg = EncoderConfig {
        dim: 64,
        heads: 4,
        layers: 2,
        ffn_dim: 256,
        max_len: 32,
        vocab_size: field_vocab.len(),
        dropout: 0.1,
    };
    let pre_cfg = PretrainConfig {
        lengths: vec![8, 16, 32],
        total_steps: 800,
        seed: 9,
        ..Default::default()
    };
    let (field_model, _) = pretrain(&field_corpus, &enc_cfg, &pre_cfg).unwrap();
    let field_table = static_table(&field_model, &field_vocab).unwrap();
    let port80 = nearest_neighbors("V:tcp.dstport=80", &field_table, 1).unwrap();
    let port_ok = port80.neighbors[0].0 == "V:tcp.dstport=443";
    let cipher = nearest_neighbors("V:ssl.handshake.ciphersuite=49199", &field_table, 1).unwrap();

    report(
        7,
        "nearest-neighbor semantics",
        family_rate >= 0.8 && port_ok,
        &format!(
            "family variants mutual top-1: {mutual}/{total} = {family_rate:.2}; nn(port 80) = {:?}; nn(ciphersuite 49199) = {:?}",
            port80.neighbors[0].0, cipher.neighbors[0].0
        ),
    );
}
