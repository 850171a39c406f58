//! Acceptance gate: every criterion prints one `[PASS]`/`[FAIL]` line.
//!
//! 1. metric oracle equivalence (EER / TDR vs exhaustive sweep)
//! 2. HTER chaining against published table triples
//! 3. loss closed forms + finite-difference gradient check
//! 4. shape invariants across input sizes
//! 5. synthetic end-to-end training quality for all three variants
//! 6. pipeline determinism (byte-identical score files)
//! 7. protocol integrity (fold disjointness, exact balancing)
//! 8. explainability sanity (saliency concentrates on the iris annulus)
//!
//! Criteria 5, 6 and 8 share one trained fixture guarded by a `OnceLock`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use candle_core::{DType, Tensor};
use irispad::cam::{annulus_means, score_cam, TargetLayer};
use irispad::checkpoint::{load_model, save_model};
use irispad::data::synth::{synthesize_dataset, ClassCounts, Geometry, SynthSpec};
use irispad::data::{
    balance_by_undersampling, load_image_chw, make_subject_disjoint_folds, AttackType, Label,
    SampleRecord, Spectrum, Split,
};
use irispad::loss::{bce, bce_t, overall_loss, smooth_l1, smooth_l1_t};
use irispad::metrics::{eer, hter, tdr_at_bpcer, MetricsReport};
use irispad::model::{BackboneSpec, ModelConfig, PadModel, Variant};
use irispad::scores::{write_scores, ScoreRecord};
use irispad::train::{score, train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(name: &str, ok: bool, detail: &str) {
    if ok {
        println!("[PASS] {name}: {detail}");
    } else {
        println!("[FAIL] {name}: {detail}");
        panic!("{name} failed: {detail}");
    }
}

fn score_record(label: Label, s: f64) -> ScoreRecord {
    ScoreRecord {
        path: String::new(),
        subject_id: String::new(),
        label,
        attack_type: if label == Label::Attack {
            AttackType::TexturedLens
        } else {
            AttackType::None
        },
        database: String::new(),
        spectrum: Spectrum::Nir,
        frame: None,
        score: s,
    }
}

// ---------------------------------------------------------------- criterion 1

/// Literal-minded exhaustive sweep, written independently of the library:
/// every distinct score is a candidate threshold; rates counted per record.
fn oracle_eer(bf: &[f64], atk: &[f64]) -> (f64, f64) {
    let mut candidates: Vec<f64> = bf.iter().chain(atk).cloned().collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();
    let mut best_gap = f64::INFINITY;
    let mut best = (f64::NAN, f64::NAN);
    for &t in &candidates {
        let a = 100.0 * atk.iter().filter(|&&s| s >= t).count() as f64 / atk.len() as f64;
        let b = 100.0 * bf.iter().filter(|&&s| s < t).count() as f64 / bf.len() as f64;
        if (a - b).abs() < best_gap {
            best_gap = (a - b).abs();
            best = ((a + b) / 2.0, t);
        }
    }
    best
}

fn oracle_tdr(bf: &[f64], atk: &[f64], target: f64) -> Option<(f64, f64)> {
    let mut candidates: Vec<f64> = bf.iter().chain(atk).cloned().collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();
    candidates.push(candidates.last().unwrap() + 1.0);
    let mut best = None;
    for &t in &candidates {
        let b = 100.0 * bf.iter().filter(|&&s| s < t).count() as f64 / bf.len() as f64;
        if b <= target {
            let a = 100.0 * atk.iter().filter(|&&s| s >= t).count() as f64 / atk.len() as f64;
            best = Some((100.0 - a, t));
        }
    }
    best
}

#[test]
fn criterion_1_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for case in 0..200 {
        // mostly small sets, a few near the n=2000 bound; coarse grids
        // produce heavy score ties, stressing the tie-break rules
        let n: usize = if case % 20 == 0 {
            rng.gen_range(1000..=2000)
        } else {
            rng.gen_range(10..400)
        };
        let grid = *[0usize, 10, 100].iter().nth(case % 3).unwrap();
        let mut draw = |rng: &mut ChaCha8Rng| -> f64 {
            let v: f64 = rng.gen_range(0.0..1.0);
            if grid == 0 {
                v
            } else {
                (v * grid as f64).round() / grid as f64
            }
        };
        let n_bf = rng.gen_range(1..n.max(2));
        let bf: Vec<f64> = (0..n_bf.max(1)).map(|_| draw(&mut rng)).collect();
        let atk: Vec<f64> = (0..(n - n_bf).max(1)).map(|_| draw(&mut rng)).collect();

        let records: Vec<ScoreRecord> = bf
            .iter()
            .map(|&s| score_record(Label::BonaFide, s))
            .chain(atk.iter().map(|&s| score_record(Label::Attack, s)))
            .collect();

        let got = eer(&records).unwrap();
        let (want_eer, want_t) = oracle_eer(&bf, &atk);
        assert!(
            (got.eer - want_eer).abs() < 1e-9 && got.threshold == want_t,
            "EER mismatch on case {case}: got ({}, {}), oracle ({want_eer}, {want_t})",
            got.eer,
            got.threshold
        );

        let got_tdr = tdr_at_bpcer(&records, 0.2);
        let want_tdr = oracle_tdr(&bf, &atk, 0.2);
        match (got_tdr, want_tdr) {
            (Some(g), Some(w)) => assert!(
                (g.tdr - w.0).abs() < 1e-9 && g.threshold == w.1,
                "TDR mismatch on case {case}: got ({}, {}), oracle ({}, {})",
                g.tdr,
                g.threshold,
                w.0,
                w.1
            ),
            (None, None) => {}
            other => panic!("TDR presence mismatch on case {case}: {other:?}"),
        }
    }
    let elapsed = started.elapsed();
    check(
        "criterion 1 (metric oracle equivalence)",
        elapsed.as_secs() < 30,
        &format!("200 score sets matched the exhaustive sweep in {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_hter_chain_on_published_triples() {
    // (APCER, BPCER, reported HTER) triples from the published result tables
    let triples: [(f64, f64, f64); 12] = [
        // intra-database rows
        (6.16, 0.81, 3.48),
        (10.64, 0.00, 5.32),
        (8.97, 0.00, 4.48),
        (16.00, 0.28, 8.14),
        (8.89, 1.06, 4.97),
        (7.88, 0.00, 3.94),
        (2.88, 17.95, 10.41),
        (5.76, 8.26, 7.01),
        (8.86, 4.13, 6.50),
        // cross-database / cross-spectrum rows
        (14.76, 31.72, 23.24),
        (51.29, 12.73, 32.01),
        (10.07, 1.88, 5.97),
    ];
    assert!((hter(6.16, 0.81) - 3.485).abs() < 1e-12);
    for (a, b, reported) in triples {
        let chained = hter(a, b);
        let rounded = (chained * 100.0).round() / 100.0;
        assert!(
            (rounded - reported).abs() <= 0.01 + 1e-9,
            "hter({a}, {b}) = {chained} rounds to {rounded}, table says {reported}"
        );
    }
    check(
        "criterion 2 (HTER chain)",
        true,
        "12 published (APCER, BPCER, HTER) triples chain within 0.01 after rounding",
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_loss_correctness_and_gradients() {
    let started = Instant::now();

    // closed forms from the loss contracts
    assert!((smooth_l1(&[0.5], &[1.0]).unwrap() - 0.125).abs() < 1e-6);
    assert!((smooth_l1(&[2.5], &[0.0]).unwrap() - 2.0).abs() < 1e-6);
    assert!(smooth_l1(&[0.3; 9], &[0.3; 9]).unwrap().abs() < 1e-6);
    assert!((bce(0.5, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-6);
    assert!((bce(0.9, 0.0).unwrap() - (-(0.1f64).ln())).abs() < 1e-6);
    assert!(bce(1.0, 1.0).unwrap() < 1e-6);
    assert!((overall_loss(0.5, 1.0, 0.2).unwrap().overall - 0.9).abs() < 1e-6);

    // finite-difference gradient check on a tiny A-PBS model in f64
    let config = ModelConfig {
        variant: Variant::Apbs,
        input_size: 32,
        pretrained_init: false,
        pretrained_path: None,
        backbone: BackboneSpec::reduced(4, 2, 1, 1),
    };
    let model = PadModel::build_with_dtype(&config, 11, DType::F64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    // Move 1-d parameters (biases, norm scales) off their symmetric init.
    // Max-pooled relu taps contain exact zeros; an identity batch norm parks
    // those atoms precisely on the relu kink, where the central difference
    // sweeps them across the boundary and disagrees with the (correct)
    // one-sided analytic gradient. A jitter of at least 0.02 keeps every
    // activation atom far from the kink relative to eps.
    {
        let data = model.varmap().data().lock().unwrap();
        for var in data.values() {
            if var.dims().len() != 1 {
                continue;
            }
            let jittered: Vec<f64> = var
                .flatten_all()
                .unwrap()
                .to_vec1::<f64>()
                .unwrap()
                .iter()
                .map(|v| {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    v + sign * rng.gen_range(0.02..0.1)
                })
                .collect();
            var.set(&Tensor::from_vec(jittered, var.dims().to_vec(), model.device()).unwrap())
                .unwrap();
        }
    }
    let pixels: Vec<f64> = (0..2 * 3 * 32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let batch = Tensor::from_vec(pixels, (2, 3, 32, 32), model.device()).unwrap();
    let labels = Tensor::from_vec(vec![1f64, 0.0], (2,), model.device()).unwrap();
    let m = config.map_size();
    let mut target = vec![1f64; m * m];
    target.extend(vec![0f64; m * m]);
    let map_target = Tensor::from_vec(target, (2, 1, m, m), model.device()).unwrap();

    let lambda = 0.2;
    let loss_fn = || -> Tensor {
        let out = model.forward_t(&batch, false).unwrap();
        let sl1 = smooth_l1_t(out.map.as_ref().unwrap(), &map_target).unwrap();
        let b = bce_t(&out.probabilities, &labels).unwrap();
        (((sl1 * lambda).unwrap()) + ((b * (1.0 - lambda)).unwrap())).unwrap()
    };

    let loss = loss_fn();
    let grads = loss.backward().unwrap();

    let data = model.varmap().data().lock().unwrap();
    let mut names: Vec<String> = data.keys().cloned().collect();
    names.sort();
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for name in &names {
        let var = &data[name];
        let grad = grads
            .get(var.as_tensor())
            .unwrap_or_else(|| panic!("no gradient for {name}"))
            .flatten_all()
            .unwrap()
            .to_vec1::<f64>()
            .unwrap();
        let flat = var.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let dims = var.dims().to_vec();
        // a handful of random coordinates per parameter tensor
        let picks = 4.min(flat.len());
        for _ in 0..picks {
            let idx = rng.gen_range(0..flat.len());
            let mut plus = flat.clone();
            plus[idx] += eps;
            var.set(&Tensor::from_vec(plus, dims.clone(), model.device()).unwrap())
                .unwrap();
            let l_plus = loss_fn().to_scalar::<f64>().unwrap();
            let mut minus = flat.clone();
            minus[idx] -= eps;
            var.set(&Tensor::from_vec(minus, dims.clone(), model.device()).unwrap())
                .unwrap();
            let l_minus = loss_fn().to_scalar::<f64>().unwrap();
            var.set(&Tensor::from_vec(flat.clone(), dims.clone(), model.device()).unwrap())
                .unwrap();
            let fd = (l_plus - l_minus) / (2.0 * eps);
            let analytic = grad[idx];
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8);
            assert!(
                rel < 1e-3,
                "gradient mismatch at {name}[{idx}]: analytic {analytic}, fd {fd}, rel {rel}"
            );
            worst = worst.max(rel);
            checked += 1;
        }
    }
    drop(data);
    let elapsed = started.elapsed();
    check(
        "criterion 3 (loss correctness)",
        checked >= 100 && elapsed.as_secs() < 120,
        &format!(
            "closed forms exact; {checked} finite-difference gradients matched \
             (worst relative error {worst:.2e}) in {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_shape_invariants() {
    let started = Instant::now();
    for input_size in [160usize, 224] {
        for variant in [Variant::Pbs, Variant::Apbs] {
            let config = ModelConfig {
                variant,
                input_size,
                pretrained_init: false,
                pretrained_path: None,
                backbone: BackboneSpec::reduced(8, 4, 2, 2),
            };
            let model = PadModel::build(&config, 1).unwrap();
            let image = vec![0.1f32; 3 * input_size * input_size];
            let out = model.predict(&[image.clone()]).unwrap();
            let map = out[0].intermediate_map.as_ref().unwrap();
            assert_eq!(map.size, input_size / 16, "{variant:?} at {input_size}");
            assert_eq!(map.values.len(), (input_size / 16) * (input_size / 16));

            if variant == Variant::Apbs {
                let batch = Tensor::from_vec(
                    image,
                    (1, 3, input_size, input_size),
                    model.device(),
                )
                .unwrap();
                let maps = model.attention_maps(&batch).unwrap();
                let expected = [input_size / 4, input_size / 8, input_size / 16];
                for ((_, map), want) in maps.iter().zip(expected) {
                    assert_eq!(map.dims(), &[1, 1, want, want]);
                    let values: Vec<f32> =
                        map.flatten_all().unwrap().to_vec1().unwrap();
                    assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    check(
        "criterion 4 (shape invariants)",
        elapsed.as_secs() < 60,
        &format!(
            "maps are (S/16)^2 and attention maps match level sizes in [0,1] \
             for S in {{160, 224}} ({elapsed:.2?})"
        ),
    );
}

// ------------------------------------------------- shared end-to-end fixture

struct VariantRun {
    hter: f64,
    eer: f64,
}

struct EndToEnd {
    _dir: tempfile::TempDir,
    data_dir: PathBuf,
    apbs_checkpoint: PathBuf,
    geometry: Vec<(String, Geometry)>,
    test_records: Vec<SampleRecord>,
    image_size: usize,
    runs: BTreeMap<&'static str, VariantRun>,
    wall_s: f64,
}

fn fixture() -> &'static EndToEnd {
    static FIXTURE: OnceLock<EndToEnd> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let spec = SynthSpec {
            image_size: 64,
            train: ClassCounts {
                bona_fide: 300,
                textured_lens: 150,
                printout: 150,
                replay: 0,
            },
            test: ClassCounts {
                bona_fide: 100,
                textured_lens: 50,
                printout: 50,
                replay: 0,
            },
            subjects_per_split: 10,
            spectrum: Spectrum::Nir,
            database: "synthdb".into(),
        };
        let output = synthesize_dataset(&spec, 42, &data_dir).unwrap();
        let train_records: Vec<SampleRecord> = output
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect();
        let test_records: Vec<SampleRecord> = output
            .records
            .iter()
            .filter(|r| r.split == Split::Test)
            .cloned()
            .collect();
        let train_records = balance_by_undersampling(&train_records, 7).unwrap();

        let train_config = TrainConfig {
            lr_init: 1e-3,
            epochs_max: 5,
            batch_size: 32,
            seed: 7,
            ..Default::default()
        };
        let mut runs = BTreeMap::new();
        let mut apbs_checkpoint = PathBuf::new();
        for variant in [Variant::Baseline, Variant::Pbs, Variant::Apbs] {
            let model_config = ModelConfig {
                variant,
                input_size: 64,
                pretrained_init: false,
                pretrained_path: None,
                backbone: BackboneSpec::reduced(16, 8, 2, 2),
            };
            let model = PadModel::build(&model_config, train_config.seed).unwrap();
            train(&model, &data_dir, &train_records, &train_config).unwrap();
            let scores = score(&model, &data_dir, &test_records, 1, 64).unwrap();
            let report = MetricsReport::compute(&scores, 0.5, 0.2);
            runs.insert(
                variant.as_str(),
                VariantRun {
                    hter: report.hter.unwrap(),
                    eer: report.eer.unwrap().eer,
                },
            );
            if variant == Variant::Apbs {
                apbs_checkpoint = dir.path().join("apbs.safetensors");
                save_model(&model, &apbs_checkpoint).unwrap();
            }
        }
        EndToEnd {
            _dir: dir,
            data_dir,
            apbs_checkpoint,
            geometry: output.geometry,
            test_records,
            image_size: spec.image_size,
            runs,
            wall_s: started.elapsed().as_secs_f64(),
        }
    })
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_synthetic_end_to_end() {
    let fx = fixture();
    let detail: Vec<String> = fx
        .runs
        .iter()
        .map(|(v, r)| format!("{v}: HTER {:.2}%, EER {:.2}%", r.hter, r.eer))
        .collect();
    let all_hter_ok = fx.runs.values().all(|r| r.hter <= 5.0);
    let apbs_vs_pbs = fx.runs["apbs"].eer <= fx.runs["pbs"].eer + 2.0;
    check(
        "criterion 5 (synthetic end-to-end)",
        all_hter_ok && apbs_vs_pbs && fx.wall_s < 900.0,
        &format!(
            "{} (5 epochs, batch 32, {:.0}s total)",
            detail.join("; "),
            fx.wall_s
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_pipeline_determinism() {
    let run = |seed: u64| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        let spec = SynthSpec {
            image_size: 48,
            train: ClassCounts {
                bona_fide: 20,
                textured_lens: 10,
                printout: 10,
                replay: 0,
            },
            test: ClassCounts {
                bona_fide: 8,
                textured_lens: 4,
                printout: 4,
                replay: 0,
            },
            subjects_per_split: 4,
            ..Default::default()
        };
        let output = synthesize_dataset(&spec, seed, &data_dir).unwrap();
        let train_records: Vec<SampleRecord> = output
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .cloned()
            .collect();
        let test_records: Vec<SampleRecord> = output
            .records
            .iter()
            .filter(|r| r.split == Split::Test)
            .cloned()
            .collect();
        let model_config = ModelConfig {
            variant: Variant::Pbs,
            input_size: 48,
            pretrained_init: false,
            pretrained_path: None,
            backbone: BackboneSpec::reduced(8, 4, 1, 1),
        };
        let config = TrainConfig {
            lr_init: 1e-3,
            epochs_max: 2,
            batch_size: 16,
            seed,
            ..Default::default()
        };
        let model = PadModel::build(&model_config, seed).unwrap();
        train(&model, &data_dir, &train_records, &config).unwrap();
        let scores = score(&model, &data_dir, &test_records, 1, 16).unwrap();
        let score_path = dir.path().join("scores.csv");
        write_scores(&score_path, &scores).unwrap();
        std::fs::read(&score_path).unwrap()
    };
    let a = run(9);
    let b = run(9);
    check(
        "criterion 6 (pipeline determinism)",
        a == b,
        "synth -> train -> score twice with one seed gives byte-identical score files",
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_protocol_integrity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut records = Vec::new();
    for subject in 0..25 {
        for item in 0..rng.gen_range(2..6) {
            let label = if rng.gen_bool(0.6) {
                Label::BonaFide
            } else {
                Label::Attack
            };
            records.push(SampleRecord {
                path: format!("s{subject}_{item}.png"),
                subject_id: format!("s{subject}"),
                label,
                attack_type: if label == Label::Attack {
                    AttackType::Printout
                } else {
                    AttackType::None
                },
                spectrum: Spectrum::Nir,
                database: "synth".into(),
                sensor: "cam".into(),
                split: Split::Train,
                frame: None,
            });
        }
    }
    for seed in [0u64, 1, 2, 99] {
        let folds = make_subject_disjoint_folds(&records, 5, seed).unwrap();
        assert_eq!(folds.len(), 5);
        let mut test_paths = std::collections::HashSet::new();
        for (train_fold, test_fold) in &folds {
            let train_subjects: std::collections::HashSet<&str> =
                train_fold.iter().map(|r| r.subject_id.as_str()).collect();
            for r in test_fold {
                assert!(
                    !train_subjects.contains(r.subject_id.as_str()),
                    "subject {} leaks between folds (seed {seed})",
                    r.subject_id
                );
                assert!(test_paths.insert((seed, r.path.clone())));
            }
            assert_eq!(train_fold.len() + test_fold.len(), records.len());
        }
        assert_eq!(
            test_paths.iter().filter(|(s, _)| *s == seed).count(),
            records.len(),
            "every record must land in exactly one test fold"
        );
    }

    let balanced = balance_by_undersampling(&records, 3).unwrap();
    let bf = balanced.iter().filter(|r| r.label == Label::BonaFide).count();
    let atk = balanced.iter().filter(|r| r.label == Label::Attack).count();
    check(
        "criterion 7 (protocol integrity)",
        bf == atk,
        &format!(
            "4 seeded 5-fold splits are exhaustively subject-disjoint; \
             balancing gives exactly {bf} vs {atk}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_explainability_sanity() {
    let fx = fixture();
    let model = load_model(&fx.apbs_checkpoint, Some(Variant::Apbs)).unwrap();
    let geometry: BTreeMap<&str, &Geometry> = fx
        .geometry
        .iter()
        .map(|(p, g)| (p.as_str(), g))
        .collect();
    let mut passed = 0usize;
    let mut total = 0usize;
    for record in fx
        .test_records
        .iter()
        .filter(|r| r.attack_type == AttackType::TexturedLens)
    {
        let image = load_image_chw(fx.data_dir.join(&record.path), 64).unwrap();
        // the input/4 tap: texture evidence like a lens dot lattice is a
        // low-level cue, and the shallow activations keep enough spatial
        // resolution to resolve the annulus
        let saliency = score_cam(&model, &image, TargetLayer::StemPool).unwrap();
        let geo = geometry[record.path.as_str()];
        let (inside, outside) = annulus_means(&saliency, geo, fx.image_size);
        total += 1;
        if inside >= 1.2 * outside {
            passed += 1;
        }
    }
    let fraction = passed as f64 / total as f64;
    check(
        "criterion 8 (explainability sanity)",
        fraction >= 0.7,
        &format!(
            "saliency inside the iris annulus is >= 20% higher than outside \
             for {passed}/{total} lens-attack samples ({:.0}%)",
            100.0 * fraction
        ),
    );
}
