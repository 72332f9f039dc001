//! Classification metrics over predicted and true label sets.

use crate::graph::Labels;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// `None` when no class has a positive example.
    pub ap: Option<f64>,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// `(macro, micro)` F1 over `C`-wide indicator rows. Macro averages all `C`
/// classes; a class absent from both predictions and truth scores 0.
pub fn f1_scores(pred: &[Vec<bool>], truth: &[Vec<bool>], num_classes: usize) -> (f64, f64) {
    assert_eq!(pred.len(), truth.len());
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (p, t) in pred.iter().zip(truth) {
        for c in 0..num_classes {
            match (p[c], t[c]) {
                (true, true) => tp[c] += 1,
                (true, false) => fp[c] += 1,
                (false, true) => fn_[c] += 1,
                _ => {}
            }
        }
    }
    let macro_f1 = if num_classes == 0 {
        0.0
    } else {
        (0..num_classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / num_classes as f64
    };
    let micro_f1 = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    (macro_f1, micro_f1)
}

pub fn one_hot(classes: &[usize], num_classes: usize) -> Vec<Vec<bool>> {
    classes
        .iter()
        .map(|&c| (0..num_classes).map(|k| k == c).collect())
        .collect()
}

/// Mean of precision@k over the ranks k of relevant items, ranking by score
/// descending with ties broken by lower index. `None` without positives.
pub fn average_precision(scores: &[f64], relevant: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), relevant.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let (mut hits, mut sum) = (0usize, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if relevant[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// One-vs-rest average precision per class, averaged over classes that have
/// at least one positive. `scores` is row-major `n × C`.
pub fn mean_average_precision(scores: &[f64], truth: &[Vec<bool>], num_classes: usize) -> Option<f64> {
    let per_class: Vec<f64> = (0..num_classes)
        .filter_map(|c| {
            let col: Vec<f64> = (0..truth.len()).map(|i| scores[i * num_classes + c]).collect();
            let rel: Vec<bool> = truth.iter().map(|t| t[c]).collect();
            average_precision(&col, &rel)
        })
        .collect();
    (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Turns logits of the rows in `nodes` into predictions and scores them
/// against `labels`. Single-label: argmax and softmax scores. Multi-label:
/// sigmoid scores thresholded at 0.5, falling back to the argmax when
/// nothing passes. Unlabeled nodes are skipped.
pub fn score_logits(logits: &[f32], num_classes: usize, nodes: &[usize], labels: &Labels) -> Metrics {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    let mut scores = Vec::new();
    for (i, &v) in nodes.iter().enumerate() {
        if !labels.is_labeled(v) {
            continue;
        }
        let row: Vec<f64> = logits[i * num_classes..(i + 1) * num_classes]
            .iter()
            .map(|&x| x as f64)
            .collect();
        let best = argmax(&row);
        match labels {
            Labels::Single(l) => {
                truth.push((0..num_classes).map(|c| Some(c) == l[v]).collect());
                pred.push((0..num_classes).map(|c| c == best).collect());
                let m = row[best];
                let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
                scores.extend(row.iter().map(|x| (x - m).exp() / z));
            }
            Labels::Multi(l) => {
                truth.push(l[v].clone().expect("labeled"));
                let p: Vec<f64> = row.iter().map(|&x| 1.0 / (1.0 + (-x).exp())).collect();
                let mut set: Vec<bool> = p.iter().map(|&x| x > 0.5).collect();
                if !set.iter().any(|&b| b) {
                    set[best] = true;
                }
                pred.push(set);
                scores.extend(p);
            }
        }
    }
    let (macro_f1, micro_f1) = f1_scores(&pred, &truth, num_classes);
    Metrics {
        macro_f1,
        micro_f1,
        ap: mean_average_precision(&scores, &truth, num_classes),
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = one_hot(&[0, 1, 2, 1], 3);
        assert_eq!(f1_scores(&y, &y, 3), (1.0, 1.0));
        let scores: Vec<f64> = y.iter().flatten().map(|&b| if b { 0.9 } else { 0.1 }).collect();
        assert_eq!(mean_average_precision(&scores, &y, 3), Some(1.0));
    }

    #[test]
    fn two_by_two_confusion() {
        // confusion [[2,1],[1,2]]
        let truth = one_hot(&[0, 0, 0, 1, 1, 1], 2);
        let pred = one_hot(&[0, 0, 1, 1, 1, 0], 2);
        let (ma, mi) = f1_scores(&pred, &truth, 2);
        assert!((ma - 2.0 / 3.0).abs() < 1e-15);
        assert!((mi - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn micro_is_accuracy_for_single_label() {
        let truth = one_hot(&[0, 1, 2, 2, 1], 4);
        let pred = one_hot(&[0, 2, 2, 1, 1], 4);
        assert_eq!(f1_scores(&pred, &truth, 4).1, 3.0 / 5.0);
        // class 3 absent everywhere contributes 0 to the macro mean
        let (ma, _) = f1_scores(&truth, &truth, 4);
        assert_eq!(ma, 0.75);
    }

    #[test]
    fn ap_hand_example() {
        // ranking: 0 (rel), 2, 1 (rel), 3 (rel)
        let ap = average_precision(&[0.9, 0.5, 0.7, 0.5], &[true, true, false, true]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 3.0 / 4.0) / 3.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[false, false]), None);
    }

    #[test]
    fn score_logits_paths() {
        let labels = Labels::Single(vec![Some(0), Some(1), None]);
        let m = score_logits(&[2.0, 0.0, 0.0, 3.0, 9.0, 9.0], 2, &[0, 1, 2], &labels);
        assert_eq!((m.macro_f1, m.micro_f1, m.ap), (1.0, 1.0, Some(1.0)));
        let multi = Labels::Multi(vec![Some(vec![true, true]), Some(vec![false, true])]);
        let m = score_logits(&[1.0, 2.0, -3.0, -1.0], 2, &[0, 1], &multi);
        assert_eq!(m.micro_f1, 1.0);
    }
}
