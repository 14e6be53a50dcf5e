//! Frame-wise multi-label evaluation: F1-max and tie-averaged average
//! precision pooled per state category, plus the causal-ordered
//! precision@1 used for initial/action/end phase benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

/// F1 at the best threshold. `defined` is false when the labels contain no
/// positives (score reported as 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Max {
    pub f1: f64,
    /// None encodes the +infinity threshold (predict nothing), which is only
    /// selected in degenerate cases.
    pub threshold: Option<f64>,
    pub defined: bool,
}

/// Max over tau in {distinct scores} union {+inf} of F1(score >= tau),
/// ties broken toward the largest tau.
pub fn f1_max(scores: &[f64], labels: &[bool]) -> Result<F1Max> {
    if scores.is_empty() {
        return Err(Error::Validation("f1_max on empty input".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::shape("f1_max", scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(F1Max {
            f1: 0.0,
            threshold: None,
            defined: false,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // tau = +inf: zero predictions, F1 = 0.
    let mut best = F1Max {
        f1: 0.0,
        threshold: None,
        defined: true,
    };
    let mut tp = 0usize;
    let mut pred = 0usize;
    let mut i = 0usize;
    while i < order.len() {
        let tau = scores[order[i]];
        // Consume the whole tied block; score >= tau includes all of it.
        let mut j = i;
        while j < order.len() && scores[order[j]] == tau {
            if labels[order[j]] {
                tp += 1;
            }
            pred += 1;
            j += 1;
        }
        let f1 = 2.0 * tp as f64 / (positives + pred) as f64;
        if f1 > best.f1 {
            best = F1Max {
                f1,
                threshold: Some(tau),
                defined: true,
            };
        }
        i = j;
    }
    Ok(best)
}

/// Tie-averaged average precision: the expectation of AP over all
/// permutations of tied blocks, in closed form. None when the labels have no
/// positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.is_empty() {
        return Err(Error::Validation("average_precision on empty input".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::shape("average_precision", scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut sum = 0.0f64;
    let mut n_prev = 0usize; // items ranked above the current block
    let mut t_prev = 0usize; // positives ranked above the current block
    let mut i = 0usize;
    while i < order.len() {
        let tau = scores[order[i]];
        let mut j = i;
        let mut p = 0usize;
        while j < order.len() && scores[order[j]] == tau {
            if labels[order[j]] {
                p += 1;
            }
            j += 1;
        }
        let m = j - i;
        if p > 0 {
            // Slot r of the block holds a positive with probability p/m; the
            // expected positives among the first r slots given that is
            // 1 + (r-1)(p-1)/(m-1).
            let pm = p as f64 / m as f64;
            for r in 1..=m {
                let within = if m == 1 {
                    1.0
                } else {
                    1.0 + (r - 1) as f64 * (p - 1) as f64 / (m - 1) as f64
                };
                sum += pm * (t_prev as f64 + within) / (n_prev + r) as f64;
            }
        }
        n_prev += m;
        t_prev += p;
        i = j;
    }
    Ok(Some(sum / positives as f64))
}

/// Unweighted mean over states with defined AP; undefined states are
/// excluded and counted.
pub fn map_over_states(aps: &[Option<f64>]) -> Result<(f64, usize)> {
    let defined: Vec<f64> = aps.iter().filter_map(|a| *a).collect();
    let excluded = aps.len() - defined.len();
    if defined.is_empty() {
        return Err(Error::Validation("mAP undefined: no state has positives".into()));
    }
    Ok((defined.iter().sum::<f64>() / defined.len() as f64, excluded))
}

/// How scores are pooled for threshold selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    /// One threshold per state category over all videos (the reported mode).
    PerCategory,
    /// Diagnostic: per-video thresholds, scores averaged over videos.
    PerVideo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateScore {
    pub state: String,
    pub f1_max: f64,
    pub threshold: Option<f64>,
    pub f1_defined: bool,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub object: String,
    pub states: Vec<StateScore>,
    /// Mean F1-max over states with at least one positive.
    pub mean_f1: f64,
    /// Mean AP over defined states.
    pub map: f64,
    pub undefined_states: usize,
    pub frames_evaluated: usize,
    pub videos_evaluated: usize,
}

/// Pools per-frame probabilities and binary ground truth across videos and
/// scores each state category. `per_video[i]` is (probs T x K, gt T x K).
pub fn evaluate_states(
    object: &str,
    state_names: &[String],
    per_video: &[(Vec<f64>, Vec<bool>)],
    num_states: usize,
    pooling: Pooling,
) -> Result<EvalReport> {
    if state_names.len() != num_states {
        return Err(Error::shape("state names", num_states, state_names.len()));
    }
    if per_video.is_empty() {
        return Err(Error::Validation("no videos to evaluate".into()));
    }
    let mut frames = 0usize;
    for (scores, labels) in per_video {
        if scores.len() != labels.len() || scores.len() % num_states != 0 {
            return Err(Error::shape(
                "evaluation matrix",
                format!("T x {num_states}"),
                scores.len(),
            ));
        }
        frames += scores.len() / num_states;
    }
    let states: Vec<StateScore> = exec::ordered_map(num_states, |k| {
        match pooling {
            Pooling::PerCategory => {
                let mut scores = Vec::new();
                let mut labels = Vec::new();
                for (s, l) in per_video {
                    for f in 0..s.len() / num_states {
                        scores.push(s[f * num_states + k]);
                        labels.push(l[f * num_states + k]);
                    }
                }
                let f1 = f1_max(&scores, &labels).expect("nonempty");
                let ap = average_precision(&scores, &labels).expect("nonempty");
                StateScore {
                    state: state_names[k].clone(),
                    f1_max: f1.f1,
                    threshold: f1.threshold,
                    f1_defined: f1.defined,
                    ap,
                }
            }
            Pooling::PerVideo => {
                let mut f1s = Vec::new();
                let mut aps = Vec::new();
                for (s, l) in per_video {
                    let mut scores = Vec::new();
                    let mut labels = Vec::new();
                    for f in 0..s.len() / num_states {
                        scores.push(s[f * num_states + k]);
                        labels.push(l[f * num_states + k]);
                    }
                    let f1 = f1_max(&scores, &labels).expect("nonempty");
                    if f1.defined {
                        f1s.push(f1.f1);
                    }
                    if let Some(ap) = average_precision(&scores, &labels).expect("nonempty") {
                        aps.push(ap);
                    }
                }
                StateScore {
                    state: state_names[k].clone(),
                    f1_max: if f1s.is_empty() {
                        0.0
                    } else {
                        f1s.iter().sum::<f64>() / f1s.len() as f64
                    },
                    threshold: None,
                    f1_defined: !f1s.is_empty(),
                    ap: if aps.is_empty() {
                        None
                    } else {
                        Some(aps.iter().sum::<f64>() / aps.len() as f64)
                    },
                }
            }
        }
    });
    let aps: Vec<Option<f64>> = states.iter().map(|s| s.ap).collect();
    let (map, undefined_states) = map_over_states(&aps)?;
    let defined_f1: Vec<f64> = states
        .iter()
        .filter(|s| s.f1_defined)
        .map(|s| s.f1_max)
        .collect();
    let mean_f1 = if defined_f1.is_empty() {
        0.0
    } else {
        defined_f1.iter().sum::<f64>() / defined_f1.len() as f64
    };
    Ok(EvalReport {
        object: object.to_string(),
        states,
        mean_f1,
        map,
        undefined_states,
        frames_evaluated: frames,
        videos_evaluated: per_video.len(),
    })
}

/// Per-frame probabilities for the three phases of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScores {
    pub initial: Vec<f64>,
    pub action: Vec<f64>,
    pub end: Vec<f64>,
}

impl PhaseScores {
    pub fn validate(&self) -> Result<()> {
        if self.initial.len() != self.action.len() || self.action.len() != self.end.len() {
            return Err(Error::shape(
                "phase score lengths",
                self.initial.len(),
                format!("{}/{}", self.action.len(), self.end.len()),
            ));
        }
        if self.initial.len() < 3 {
            return Err(Error::Validation(format!(
                "need at least 3 frames for a causal triple, got {}",
                self.initial.len()
            )));
        }
        Ok(())
    }
}

/// Ground-truth frame sets per phase, as membership masks over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGroundTruth {
    pub initial: Vec<bool>,
    pub action: Vec<bool>,
    pub end: Vec<bool>,
}

/// Maximizes initial[i] + action[j] + end[k] over i < j < k via prefix and
/// suffix argmax tables, O(T). Ties resolve to the lexicographically
/// smallest (i, j, k): the scan takes the earliest prefix/suffix maximizers
/// and only strictly better sums replace the incumbent.
pub fn causal_best_triple(p: &PhaseScores) -> Result<(usize, usize, usize)> {
    p.validate()?;
    let t = p.initial.len();
    // best_upto[i]: earliest argmax of initial[0..=i].
    let mut best_upto = vec![0usize; t];
    for i in 1..t {
        let prev = best_upto[i - 1];
        best_upto[i] = if p.initial[i] > p.initial[prev] { i } else { prev };
    }
    // best_from[i]: earliest argmax of end[i..].
    let mut best_from = vec![t - 1; t];
    for i in (0..t - 1).rev() {
        let next = best_from[i + 1];
        best_from[i] = if p.end[i] >= p.end[next] { i } else { next };
    }
    let mut best: Option<((usize, usize, usize), f64)> = None;
    for j in 1..t - 1 {
        let i = best_upto[j - 1];
        let k = best_from[j + 1];
        let sum = p.initial[i] + p.action[j] + p.end[k];
        if best.map_or(true, |(_, b)| sum > b) {
            best = Some(((i, j, k), sum));
        }
    }
    Ok(best.expect("t >= 3 guarantees a candidate").0)
}

/// Whether each selected frame lands in its phase's ground-truth set.
pub fn causal_hits(triple: (usize, usize, usize), gt: &PhaseGroundTruth) -> [bool; 3] {
    let (i, j, k) = triple;
    [gt.initial[i], gt.action[j], gt.end[k]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeItReport {
    pub videos: usize,
    pub initial_precision: f64,
    pub action_precision: f64,
    pub end_precision: f64,
    /// Mean of the two state phases (initial and end).
    pub state_precision: f64,
}

/// Precision@1 per phase aggregated over videos of one category.
pub fn changeit_precision(videos: &[(PhaseScores, PhaseGroundTruth)]) -> Result<ChangeItReport> {
    if videos.is_empty() {
        return Err(Error::Validation("no videos for causal evaluation".into()));
    }
    let hits = exec::ordered_map(videos.len(), |v| {
        let (scores, gt) = &videos[v];
        causal_best_triple(scores).map(|t| causal_hits(t, gt))
    });
    let mut counts = [0usize; 3];
    for h in hits {
        let h = h?;
        for (c, hit) in counts.iter_mut().zip(h.iter()) {
            *c += *hit as usize;
        }
    }
    let n = videos.len() as f64;
    let (i, a, e) = (
        counts[0] as f64 / n,
        counts[1] as f64 / n,
        counts[2] as f64 / n,
    );
    Ok(ChangeItReport {
        videos: videos.len(),
        initial_precision: i,
        action_precision: a,
        end_precision: e,
        state_precision: (i + e) / 2.0,
    })
}

/// Brute-force oracles, used by tests and the acceptance suite.
pub mod oracle {
    /// F1 over every candidate threshold, including +inf, by direct
    /// recomputation.
    pub fn f1_max_brute(scores: &[f64], labels: &[bool]) -> (f64, Option<f64>) {
        let p = labels.iter().filter(|&&l| l).count();
        let mut taus: Vec<Option<f64>> = vec![None];
        taus.extend(scores.iter().map(|&s| Some(s)));
        let mut best = (0.0f64, None);
        // Largest tau first; replace only on strict improvement.
        taus.sort_by(|a, b| match (a, b) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some(x), Some(y)) => y.total_cmp(x),
        });
        taus.dedup_by(|a, b| a == b);
        for tau in taus {
            let pred: Vec<bool> = scores
                .iter()
                .map(|&s| match tau {
                    None => false,
                    Some(t) => s >= t,
                })
                .collect();
            let tp = pred
                .iter()
                .zip(labels.iter())
                .filter(|(&pr, &l)| pr && l)
                .count();
            let np = pred.iter().filter(|&&pr| pr).count();
            let f1 = if p + np == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (p + np) as f64
            };
            if f1 > best.0 {
                best = (f1, tau);
            }
        }
        best
    }

    /// Standard AP of one fixed order (descending scores with the given
    /// permutation of indices).
    fn ap_of_order(order: &[usize], labels: &[bool]) -> f64 {
        let p = order.iter().filter(|&&i| labels[i]).count();
        let mut tp = 0usize;
        let mut sum = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if labels[i] {
                tp += 1;
                sum += tp as f64 / (rank + 1) as f64;
            }
        }
        sum / p as f64
    }

    /// AP by walking the precision/recall curve in descending-score order.
    /// Only meaningful when all scores are distinct.
    pub fn ap_brute_distinct(scores: &[f64], labels: &[bool]) -> Option<f64> {
        if !labels.iter().any(|&l| l) {
            return None;
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Some(ap_of_order(&order, labels))
    }

    /// Exact tie-averaged AP: enumerate every permutation of each tied block
    /// and average the standard AP. Exponential; keep tied blocks small.
    pub fn ap_brute_tie_averaged(scores: &[f64], labels: &[bool]) -> Option<f64> {
        if !labels.iter().any(|&l| l) {
            return None;
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for &i in &order {
            match blocks.last_mut() {
                Some(b) if scores[b[0]] == scores[i] => b.push(i),
                _ => blocks.push(vec![i]),
            }
        }
        let mut total = 0.0f64;
        let mut count = 0usize;
        let mut prefix: Vec<usize> = Vec::new();
        enumerate_blocks(&blocks, 0, &mut prefix, labels, &mut total, &mut count);
        Some(total / count as f64)
    }

    fn enumerate_blocks(
        blocks: &[Vec<usize>],
        b: usize,
        prefix: &mut Vec<usize>,
        labels: &[bool],
        total: &mut f64,
        count: &mut usize,
    ) {
        if b == blocks.len() {
            *total += ap_of_order(prefix, labels);
            *count += 1;
            return;
        }
        let mut block = blocks[b].clone();
        permute(&mut block, 0, &mut |perm| {
            let len_before = prefix.len();
            prefix.extend_from_slice(perm);
            // Recursion re-borrowed below; restore on exit.
            let mut inner_total = 0.0;
            let mut inner_count = 0;
            enumerate_blocks(blocks, b + 1, prefix, labels, &mut inner_total, &mut inner_count);
            *total += inner_total;
            *count += inner_count;
            prefix.truncate(len_before);
        });
    }

    fn permute(items: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }

    /// O(T^3) exhaustive search for the best causal triple, with explicit
    /// lexicographic tie-breaking.
    pub fn causal_brute(initial: &[f64], action: &[f64], end: &[f64]) -> (usize, usize, usize) {
        let t = initial.len();
        let mut best: Option<((usize, usize, usize), f64)> = None;
        for i in 0..t {
            for j in i + 1..t {
                for k in j + 1..t {
                    let sum = initial[i] + action[j] + end[k];
                    let better = match best {
                        None => true,
                        Some((_, b)) => sum > b,
                    };
                    if better {
                        best = Some(((i, j, k), sum));
                    }
                }
            }
        }
        best.expect("t >= 3").0
    }
}
