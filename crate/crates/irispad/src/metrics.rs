//! ISO/IEC 30107-3 metric suite over PAD score records.
//!
//! Conventions pinned here and used everywhere:
//! - classification at threshold `t`: bona fide iff `score >= t` (ties go to
//!   bona fide);
//! - APCER = % of attacks classified bona fide, BPCER = % of bona fides
//!   classified attack, HTER = their mean;
//! - EER: discrete sweep over all distinct scores, no interpolation; the
//!   threshold minimizing |APCER - BPCER| wins, ties broken by the lower
//!   threshold; EER = (APCER + BPCER) / 2 there;
//! - TDR@BPCER: highest threshold with BPCER <= target; TDR = 100 - APCER.
//!
//! Metrics that need a class that is absent come back as `None` rather than
//! a fabricated number.

use std::collections::BTreeMap;

use crate::data::{AttackType, Label};
use crate::scores::ScoreRecord;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BPCER_TARGET: f64 = 0.2;

fn split_scores(scores: &[ScoreRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut bf = Vec::new();
    let mut atk = Vec::new();
    for s in scores {
        match s.label {
            Label::BonaFide => bf.push(s.score),
            Label::Attack => atk.push(s.score),
        }
    }
    (bf, atk)
}

/// Percentage of attack scores classified bona fide (score >= threshold).
pub fn apcer(scores: &[ScoreRecord], threshold: f64) -> Option<f64> {
    let (_, atk) = split_scores(scores);
    if atk.is_empty() {
        return None;
    }
    let wrong = atk.iter().filter(|&&s| s >= threshold).count();
    Some(100.0 * wrong as f64 / atk.len() as f64)
}

/// Percentage of bona fide scores classified attack (score < threshold).
pub fn bpcer(scores: &[ScoreRecord], threshold: f64) -> Option<f64> {
    let (bf, _) = split_scores(scores);
    if bf.is_empty() {
        return None;
    }
    let wrong = bf.iter().filter(|&&s| s < threshold).count();
    Some(100.0 * wrong as f64 / bf.len() as f64)
}

pub fn hter(apcer: f64, bpcer: f64) -> f64 {
    (apcer + bpcer) / 2.0
}

/// APCER restricted to one attack type (Table-4 style breakdown).
pub fn apcer_by_attack_type(
    scores: &[ScoreRecord],
    threshold: f64,
) -> BTreeMap<AttackType, f64> {
    let mut grouped: BTreeMap<AttackType, (usize, usize)> = BTreeMap::new();
    for s in scores {
        if s.label == Label::Attack {
            let e = grouped.entry(s.attack_type).or_default();
            e.0 += 1;
            if s.score >= threshold {
                e.1 += 1;
            }
        }
    }
    grouped
        .into_iter()
        .map(|(t, (n, wrong))| (t, 100.0 * wrong as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
}

/// Discrete equal-error-rate sweep over all distinct scores.
pub fn eer(scores: &[ScoreRecord]) -> Option<EerResult> {
    let (bf, atk) = split_scores(scores);
    if bf.is_empty() || atk.is_empty() {
        return None;
    }
    let mut candidates: Vec<f64> = scores.iter().map(|s| s.score).collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();

    let mut best: Option<EerResult> = None;
    for &t in &candidates {
        let a = 100.0 * atk.iter().filter(|&&s| s >= t).count() as f64 / atk.len() as f64;
        let b = 100.0 * bf.iter().filter(|&&s| s < t).count() as f64 / bf.len() as f64;
        let gap = (a - b).abs();
        let better = match &best {
            None => true,
            // strict improvement only: earlier (lower) threshold wins ties
            Some(prev) => gap < (prev.apcer - prev.bpcer).abs(),
        };
        if better {
            best = Some(EerResult {
                eer: (a + b) / 2.0,
                threshold: t,
                apcer: a,
                bpcer: b,
            });
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdrResult {
    pub tdr: f64,
    pub threshold: f64,
    /// BPCER actually realized at the chosen threshold; can sit below the
    /// target when the bona fide count is too small to hit it exactly.
    pub achieved_bpcer: f64,
}

/// True detection rate (100 - APCER) at the highest threshold whose BPCER
/// stays at or below `bpcer_target` (in percent).
pub fn tdr_at_bpcer(scores: &[ScoreRecord], bpcer_target: f64) -> Option<TdrResult> {
    let (bf, atk) = split_scores(scores);
    if bf.is_empty() || atk.is_empty() {
        return None;
    }
    let mut candidates: Vec<f64> = scores.iter().map(|s| s.score).collect();
    candidates.sort_by(|a, b| a.total_cmp(b));
    candidates.dedup();
    // one position above every score: everything classified attack
    let above_max = candidates.last().unwrap() + 1.0;
    candidates.push(above_max);

    let mut best: Option<TdrResult> = None;
    for &t in &candidates {
        let b = 100.0 * bf.iter().filter(|&&s| s < t).count() as f64 / bf.len() as f64;
        if b <= bpcer_target {
            let a = 100.0 * atk.iter().filter(|&&s| s >= t).count() as f64 / atk.len() as f64;
            // candidates ascend, so the last feasible one is the highest
            best = Some(TdrResult {
                tdr: 100.0 - a,
                threshold: t,
                achieved_bpcer: b,
            });
        }
    }
    best
}

/// Correct classification rate over all presentations at a fixed threshold.
pub fn ccr(scores: &[ScoreRecord], threshold: f64) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let correct = scores
        .iter()
        .filter(|s| match s.label {
            Label::BonaFide => s.score >= threshold,
            Label::Attack => s.score < threshold,
        })
        .count();
    Some(100.0 * correct as f64 / scores.len() as f64)
}

/// Fisher discriminant ratio of the two score distributions:
/// `(mean_bf - mean_atk)^2 / (var_bf + var_atk)` with sample variances and
/// the variance sum floored at 1e-12.
pub fn fdr(scores: &[ScoreRecord]) -> Option<f64> {
    let (bf, atk) = split_scores(scores);
    if bf.len() < 2 || atk.len() < 2 {
        return None;
    }
    let stats = |xs: &[f64]| {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    };
    let (mu_bf, var_bf) = stats(&bf);
    let (mu_atk, var_atk) = stats(&atk);
    let gap = mu_bf - mu_atk;
    Some(gap * gap / (var_bf + var_atk).max(1e-12))
}

/// The full metric bundle for one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub bpcer_target: f64,
    pub apcer: Option<f64>,
    pub bpcer: Option<f64>,
    pub hter: Option<f64>,
    pub eer: Option<EerResult>,
    pub tdr: Option<TdrResult>,
    pub ccr: Option<f64>,
    pub fdr: Option<f64>,
    pub apcer_by_type: BTreeMap<AttackType, f64>,
    pub n_bona_fide: usize,
    pub n_attack: usize,
}

impl MetricsReport {
    pub fn compute(scores: &[ScoreRecord], threshold: f64, bpcer_target: f64) -> Self {
        let a = apcer(scores, threshold);
        let b = bpcer(scores, threshold);
        let (bf, atk) = split_scores(scores);
        MetricsReport {
            threshold,
            bpcer_target,
            apcer: a,
            bpcer: b,
            hter: a.zip(b).map(|(a, b)| hter(a, b)),
            eer: eer(scores),
            tdr: tdr_at_bpcer(scores, bpcer_target),
            ccr: ccr(scores, threshold),
            fdr: fdr(scores),
            apcer_by_type: apcer_by_attack_type(scores, threshold),
            n_bona_fide: bf.len(),
            n_attack: atk.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Spectrum;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    pub(crate) fn score(label: Label, s: f64) -> ScoreRecord {
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

    fn set(bf: &[f64], atk: &[f64]) -> Vec<ScoreRecord> {
        bf.iter()
            .map(|&s| score(Label::BonaFide, s))
            .chain(atk.iter().map(|&s| score(Label::Attack, s)))
            .collect()
    }

    #[test]
    fn apcer_examples() {
        let s = set(&[], &[0.9, 0.2, 0.4]);
        assert_abs_diff_eq!(apcer(&s, 0.5).unwrap(), 100.0 / 3.0, epsilon = 1e-4);
        assert_eq!(apcer(&set(&[], &[0.0, 0.0]), 0.5).unwrap(), 0.0);
        assert_eq!(apcer(&set(&[], &[1.0, 1.0]), 0.5).unwrap(), 100.0);
        assert_eq!(apcer(&set(&[0.5], &[]), 0.5), None);
    }

    #[test]
    fn bpcer_examples() {
        let s = set(&[0.9, 0.2, 0.4], &[]);
        assert_abs_diff_eq!(bpcer(&s, 0.5).unwrap(), 200.0 / 3.0, epsilon = 1e-4);
        assert_eq!(bpcer(&set(&[1.0, 1.0], &[]), 0.5).unwrap(), 0.0);
        assert_eq!(bpcer(&set(&[0.0, 0.0], &[]), 0.5).unwrap(), 100.0);
    }

    #[test]
    fn hter_examples() {
        assert_abs_diff_eq!(hter(6.16, 0.81), 3.485, epsilon = 1e-12);
        assert_eq!(hter(0.0, 0.0), 0.0);
        assert_eq!(hter(100.0, 0.0), 50.0);
        assert_eq!(hter(3.0, 7.0), hter(7.0, 3.0));
    }

    #[test]
    fn eer_perfectly_separated() {
        let s = set(&[0.8, 0.9, 0.95], &[0.1, 0.2, 0.3]);
        let r = eer(&s).unwrap();
        assert_eq!(r.eer, 0.0);
    }

    #[test]
    fn eer_single_class_absent() {
        assert_eq!(eer(&set(&[0.5], &[])), None);
    }

    #[test]
    fn eer_four_point_toy_set() {
        // bf=[0.8,0.6], atk=[0.7,0.1]; under the pinned convention the gap
        // |APCER-BPCER| is 0 at t=0.7 (both 50%), so EER = 50% there.
        let s = set(&[0.8, 0.6], &[0.7, 0.1]);
        let r = eer(&s).unwrap();
        assert_eq!(r.threshold, 0.7);
        assert_eq!(r.eer, 50.0);
    }

    #[test]
    fn eer_chance_level_on_random_labels() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let scores: Vec<ScoreRecord> = (0..10_000)
            .map(|_| {
                let label = if rng.gen_bool(0.5) {
                    Label::BonaFide
                } else {
                    Label::Attack
                };
                score(label, rng.gen_range(0.0..1.0))
            })
            .collect();
        let r = eer(&scores).unwrap();
        assert!((47.0..=53.0).contains(&r.eer), "EER {}", r.eer);
    }

    #[test]
    fn eer_minimal_gap_property() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let scores: Vec<ScoreRecord> = (0..500)
            .map(|_| {
                let label = if rng.gen_bool(0.4) {
                    Label::BonaFide
                } else {
                    Label::Attack
                };
                score(label, (rng.gen_range(0.0..1.0f64) * 100.0).round() / 100.0)
            })
            .collect();
        let r = eer(&scores).unwrap();
        let best_gap = (r.apcer - r.bpcer).abs();
        let mut cands: Vec<f64> = scores.iter().map(|s| s.score).collect();
        cands.sort_by(|a, b| a.total_cmp(b));
        cands.dedup();
        for t in cands {
            let a = apcer(&scores, t).unwrap();
            let b = bpcer(&scores, t).unwrap();
            assert!(best_gap <= (a - b).abs() + 1e-12);
        }
    }

    #[test]
    fn tdr_trivial_cases() {
        let separated = set(&[0.8, 0.9], &[0.1, 0.2]);
        assert_eq!(tdr_at_bpcer(&separated, 0.2).unwrap().tdr, 100.0);
        let inverted = set(&[0.1, 0.2], &[0.8, 0.9]);
        assert_eq!(tdr_at_bpcer(&inverted, 0.2).unwrap().tdr, 0.0);
    }

    #[test]
    fn ccr_examples() {
        assert_eq!(ccr(&set(&[0.9], &[0.1]), 0.5).unwrap(), 100.0);
        assert_eq!(ccr(&set(&[0.1], &[0.9]), 0.5).unwrap(), 0.0);
        assert_eq!(ccr(&set(&[0.9, 0.9, 0.1], &[0.1]), 0.5).unwrap(), 75.0);
    }

    #[test]
    fn fdr_examples() {
        // identical distributions -> 0
        let same = set(&[0.4, 0.5, 0.6], &[0.4, 0.5, 0.6]);
        assert!(fdr(&same).unwrap() < 1e-9);
        // mean gap 1.0, each sample variance 0.5 -> 1.0
        let s = set(&[1.5, 2.5], &[0.5, 1.5]);
        assert_abs_diff_eq!(fdr(&s).unwrap(), 1.0, epsilon = 1e-9);
        // degenerate class sizes
        assert_eq!(fdr(&set(&[0.5], &[0.1, 0.2])), None);
    }

    #[test]
    fn fdr_monotone_in_mean_gap() {
        let mut prev = 0.0;
        for gap in [0.1, 0.2, 0.4, 0.8] {
            let s = set(&[0.5 + gap, 0.7 + gap], &[0.5, 0.7]);
            let f = fdr(&s).unwrap();
            assert!(f > prev);
            prev = f;
        }
    }

    #[test]
    fn report_chains_components() {
        let s = set(&[0.9, 0.8, 0.3], &[0.1, 0.6]);
        let r = MetricsReport::compute(&s, 0.5, 0.2);
        assert_abs_diff_eq!(
            r.hter.unwrap(),
            hter(apcer(&s, 0.5).unwrap(), bpcer(&s, 0.5).unwrap()),
            epsilon = 1e-12
        );
        assert_eq!(r.n_bona_fide, 3);
        assert_eq!(r.n_attack, 2);
    }

    proptest! {
        // EER and TDR@BPCER are rank statistics: any strictly increasing
        // transform of the scores leaves them unchanged.
        #[test]
        fn rank_metrics_invariant_under_monotone_transform(
            bf in proptest::collection::vec(0.0f64..1.0, 2..40),
            atk in proptest::collection::vec(0.0f64..1.0, 2..40),
        ) {
            let original = set(&bf, &atk);
            let transform = |x: f64| x * x * 0.5 + 0.2 * x; // strictly increasing on [0,1]
            let mapped: Vec<ScoreRecord> = original
                .iter()
                .map(|s| {
                    let mut s = s.clone();
                    s.score = transform(s.score);
                    s
                })
                .collect();
            let e1 = eer(&original).unwrap();
            let e2 = eer(&mapped).unwrap();
            prop_assert!((e1.eer - e2.eer).abs() < 1e-9);
            let t1 = tdr_at_bpcer(&original, 0.2).unwrap();
            let t2 = tdr_at_bpcer(&mapped, 0.2).unwrap();
            prop_assert!((t1.tdr - t2.tdr).abs() < 1e-9);
        }

        #[test]
        fn hter_symmetric(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            prop_assert_eq!(hter(a, b), hter(b, a));
        }
    }
}
