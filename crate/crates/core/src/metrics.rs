//! Multi-label scoring: Hamming score, micro precision/recall/F1, grouped
//! breakdowns, and Student's paired t-test.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::corpus::{Corpus, LabelSet};
use crate::error::{Error, Result};
use crate::math;

/// Per-utterance label accuracy: |ref intersect pred| / |ref union pred|.
/// Two empty sets count as a perfect 1.0 (unreachable through the
/// non-empty prediction rule, defined for robustness).
pub fn hamming_score(reference: LabelSet, predicted: LabelSet) -> f64 {
    let union = reference.union(predicted).len();
    if union == 0 {
        return 1.0;
    }
    reference.intersection(predicted).len() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision/recall/F1 with true/false positives pooled over every
/// utterance-label decision. Undefined ratios (0/0) are 0 by convention.
pub fn micro_prf(refs: &[LabelSet], preds: &[LabelSet]) -> Result<Prf> {
    if refs.len() != preds.len() {
        return Err(Error::shape(format!(
            "{} references vs {} predictions",
            refs.len(),
            preds.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&r, &p) in refs.iter().zip(preds) {
        let hit = r.intersection(p).len();
        tp += hit;
        fp += p.len() - hit;
        fn_ += r.len() - hit;
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

/// Display names for the reference-count buckets.
pub const REF_COUNT_BUCKETS: [&str; 4] = ["1", "2", "3", ">=4"];

/// Statistics for one reference-count bucket. Means are 0 when the bucket
/// holds no utterances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefCountGroup {
    pub utterances: usize,
    /// Share of all utterances, in percent.
    pub percent: f64,
    pub mean_hamming: f64,
    pub mean_predicted: f64,
}

/// Buckets utterances by how many reference labels they carry (1, 2, 3,
/// or 4-and-more) and reports per-bucket frequency, mean Hamming score,
/// and mean predicted-set size.
pub fn group_by_ref_count(refs: &[LabelSet], preds: &[LabelSet]) -> Result<[RefCountGroup; 4]> {
    if refs.len() != preds.len() {
        return Err(Error::shape(format!(
            "{} references vs {} predictions",
            refs.len(),
            preds.len()
        )));
    }
    let mut counts = [0usize; 4];
    let mut hamming = [0.0f64; 4];
    let mut predicted = [0usize; 4];
    for (&r, &p) in refs.iter().zip(preds) {
        if r.is_empty() {
            return Err(Error::data("utterance without reference labels"));
        }
        let bucket = r.len().min(4) - 1;
        counts[bucket] += 1;
        hamming[bucket] += hamming_score(r, p);
        predicted[bucket] += p.len();
    }
    let total: usize = counts.iter().sum();
    let mut out = [RefCountGroup::default(); 4];
    for b in 0..4 {
        out[b].utterances = counts[b];
        if total > 0 {
            out[b].percent = 100.0 * counts[b] as f64 / total as f64;
        }
        if counts[b] > 0 {
            out[b].mean_hamming = hamming[b] / counts[b] as f64;
            out[b].mean_predicted = predicted[b] as f64 / counts[b] as f64;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthGroup {
    pub dialogues: usize,
    pub utterances: usize,
    pub mean_hamming: f64,
}

fn check_alignment(corpus: &Corpus, preds: &[Vec<LabelSet>]) -> Result<()> {
    if corpus.dialogues.len() != preds.len() {
        return Err(Error::shape(format!(
            "{} dialogues vs {} prediction groups",
            corpus.dialogues.len(),
            preds.len()
        )));
    }
    for (d, p) in corpus.dialogues.iter().zip(preds) {
        if d.utterances.len() != p.len() {
            return Err(Error::shape(format!(
                "dialogue {:?} has {} utterances but {} predictions",
                d.id,
                d.utterances.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

/// Mean per-utterance Hamming score, bucketed by the length (utterance
/// count) of the containing dialogue.
pub fn group_by_dialogue_length(
    corpus: &Corpus,
    preds: &[Vec<LabelSet>],
) -> Result<BTreeMap<usize, LengthGroup>> {
    check_alignment(corpus, preds)?;
    let mut out: BTreeMap<usize, LengthGroup> = BTreeMap::new();
    for (d, dialogue_preds) in corpus.dialogues.iter().zip(preds) {
        let s = d.utterances.len();
        let entry = out.entry(s).or_insert(LengthGroup {
            dialogues: 0,
            utterances: 0,
            mean_hamming: 0.0,
        });
        entry.dialogues += 1;
        for (u, &p) in d.utterances.iter().zip(dialogue_preds) {
            entry.utterances += 1;
            // Accumulate the sum here, divide at the end.
            entry.mean_hamming += hamming_score(u.labels, p);
        }
    }
    for group in out.values_mut() {
        group.mean_hamming /= group.utterances as f64;
    }
    Ok(out)
}

/// Flattened per-utterance Hamming scores in corpus order, the unit the
/// paired t-test compares across systems.
pub fn per_utterance_hamming(corpus: &Corpus, preds: &[Vec<LabelSet>]) -> Result<Vec<f64>> {
    check_alignment(corpus, preds)?;
    Ok(corpus
        .dialogues
        .iter()
        .zip(preds)
        .flat_map(|(d, ps)| {
            d.utterances
                .iter()
                .zip(ps)
                .map(|(u, &p)| hamming_score(u.labels, p))
        })
        .collect())
}

/// Everything the evaluation command reports for one system.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub utterances: usize,
    /// Mean per-utterance Hamming score.
    pub accuracy: f64,
    pub micro: Prf,
    pub by_ref_count: [RefCountGroup; 4],
    pub by_dialogue_length: BTreeMap<usize, LengthGroup>,
}

/// Scores aligned predictions against a labeled corpus.
pub fn evaluate_predictions(corpus: &Corpus, preds: &[Vec<LabelSet>]) -> Result<MetricsReport> {
    check_alignment(corpus, preds)?;
    let refs: Vec<LabelSet> = corpus
        .dialogues
        .iter()
        .flat_map(|d| d.utterances.iter().map(|u| u.labels))
        .collect();
    let flat: Vec<LabelSet> = preds.iter().flatten().copied().collect();
    if refs.is_empty() {
        return Err(Error::data("no utterances to score"));
    }
    let accuracy = refs
        .iter()
        .zip(&flat)
        .map(|(&r, &p)| hamming_score(r, p))
        .sum::<f64>()
        / refs.len() as f64;
    Ok(MetricsReport {
        utterances: refs.len(),
        accuracy,
        micro: micro_prf(&refs, &flat)?,
        by_ref_count: group_by_ref_count(&refs, &flat)?,
        by_dialogue_length: group_by_dialogue_length(corpus, preds)?,
    })
}

/// Paired t-test outcome. `degenerate_variance` marks the zero-variance,
/// nonzero-mean case where `t` is infinite and `p` is 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub degenerate_variance: bool,
}

/// Two-sided Student's paired t-test on per-item score differences.
///
/// t = mean(d) * sqrt(n) / sd(d) with the sample (n-1) standard
/// deviation; p comes from the t-distribution with n-1 degrees of freedom
/// through the regularized incomplete beta identity
/// p = I_{nu/(nu+t^2)}(nu/2, 1/2). All-zero differences give t=0, p=1;
/// zero variance with nonzero mean gives p=0 and the degenerate flag.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "paired samples of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("paired t-test needs at least 2 pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::non_finite("score difference"));
    }
    let df = n - 1;
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / df as f64;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t: 0.0,
                p: 1.0,
                df,
                degenerate_variance: false,
            }
        } else {
            TTestResult {
                t: if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
                p: 0.0,
                df,
                degenerate_variance: true,
            }
        });
    }
    let t = mean * math::sqrt(n as f64) / math::sqrt(var);
    let nu = df as f64;
    let p = regularized_incomplete_beta(nu / (nu + t * t), nu / 2.0, 0.5)?;
    Ok(TTestResult {
        t,
        p,
        df,
        degenerate_variance: false,
    })
}

/// Regularized incomplete beta function I_x(a, b), via the standard
/// continued-fraction expansion (evaluated with Lentz's method) on
/// whichever tail converges fast.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!(
            "incomplete beta needs a,b > 0 and x in [0,1]; got x={x}, a={a}, b={b}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = a * math::ln(x) + b * math::ln(1.0 - x)
        - (math::ln_gamma(a) + math::ln_gamma(b) - math::ln_gamma(a + b));
    let front = math::exp(ln_front);
    // The continued fraction converges rapidly for x < (a+1)/(a+b+2);
    // otherwise use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a).
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cont_frac(x, a, b) / a)
    } else {
        Ok(1.0 - front * beta_cont_frac(1.0 - x, b, a) / b)
    }
}

fn beta_cont_frac(x: f64, a: f64, b: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 3e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if math::abs(d) < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if math::abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}
