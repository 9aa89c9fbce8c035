use crate::{Error, Result};

/// Fraction of pixels whose binary cloud decision matches the truth.
pub fn acc_binary(true_cloud: &[bool], pred_cloud: &[bool]) -> Result<f64> {
    if true_cloud.len() != pred_cloud.len() {
        return Err(Error::dim(
            "acc_binary",
            format!("{} truths vs {} predictions", true_cloud.len(), pred_cloud.len()),
        ));
    }
    if true_cloud.is_empty() {
        return Err(Error::UndefinedMetric("acc_binary on empty input".into()));
    }
    let hits = true_cloud.iter().zip(pred_cloud).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / true_cloud.len() as f64)
}

/// Step-integrated area under the precision-recall curve.
///
/// Thresholds are the distinct scores in descending order; a pixel is
/// predicted positive when its score is at or above the threshold, so tied
/// scores enter the curve together.
pub fn auprc_class(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dim(
            "auprc_class",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    step_auprc(scores.iter().copied().zip(labels.iter().copied()).collect())
}

/// Micro-averaged AUPRC over several binary tasks: all `(score, label)`
/// pairs are pooled so TP, FP and FN are summed across classes at every
/// threshold.
pub fn auprc_weighted(scores_per_class: &[&[f64]], labels_per_class: &[&[bool]]) -> Result<f64> {
    if scores_per_class.len() != labels_per_class.len() {
        return Err(Error::dim(
            "auprc_weighted",
            format!(
                "{} score vectors vs {} label vectors",
                scores_per_class.len(),
                labels_per_class.len()
            ),
        ));
    }
    let mut pooled = Vec::new();
    for (c, (s, l)) in scores_per_class.iter().zip(labels_per_class).enumerate() {
        if s.len() != l.len() {
            return Err(Error::dim(
                "auprc_weighted",
                format!("class {c}: {} scores vs {} labels", s.len(), l.len()),
            ));
        }
        pooled.extend(s.iter().copied().zip(l.iter().copied()));
    }
    step_auprc(pooled)
}

fn step_auprc(mut pairs: Vec<(f64, bool)>) -> Result<f64> {
    if pairs.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Numeric("AUPRC scores".into()));
    }
    let positives = pairs.iter().filter(|(_, l)| *l).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("AUPRC needs at least one positive label".into()));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == threshold {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    // Independent oracle: enumerate every distinct threshold and recount
    // TP/FP from scratch for each.
    fn oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut th: Vec<f64> = scores.to_vec();
        th.sort_by(|a, b| b.partial_cmp(a).unwrap());
        th.dedup();
        let p = labels.iter().filter(|&&l| l).count() as f64;
        let mut last_r = 0.0;
        let mut au = 0.0;
        for t in th {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && !**l).count() as f64;
            let r = tp / p;
            au += (r - last_r) * (tp / (tp + fp));
            last_r = r;
        }
        au
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(acc_binary(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(
            acc_binary(&[true, true, false, false], &[true, false, false, true]).unwrap(),
            0.5
        );
        assert!(acc_binary(&[], &[]).is_err());
        assert!(acc_binary(&[true], &[]).is_err());
    }

    #[test]
    fn hand_curves() {
        assert_eq!(auprc_class(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auprc_class(&[0.1, 0.9], &[true, false]).unwrap(), 0.5);
        assert_eq!(auprc_class(&[0.3, 0.7, 0.2], &[true, true, true]).unwrap(), 1.0);
        assert!(matches!(
            auprc_class(&[0.3, 0.4], &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn ties_form_one_step() {
        // one threshold: TP 1, FP 1.
        assert_eq!(auprc_class(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }

    #[test]
    fn pooled_eight_pixel_case() {
        let s1 = [0.9, 0.8, 0.35, 0.1];
        let l1 = [true, false, true, false];
        let s2 = [0.7, 0.35, 0.6, 0.2];
        let l2 = [false, true, true, false];
        let pooled_s: Vec<f64> = s1.iter().chain(&s2).copied().collect();
        let pooled_l: Vec<bool> = l1.iter().chain(&l2).copied().collect();
        let got = auprc_weighted(&[&s1, &s2], &[&l1, &l2]).unwrap();
        assert!((got - oracle(&pooled_s, &pooled_l)).abs() < 1e-15);
        // by hand: thresholds .9(1/1), .8(1/2), .7(1/3), .6(2/4), .35(4/6), .2, .1
        let hand = 0.25 * 1.0 + 0.25 * 0.5 + 0.5 * (4.0 / 6.0);
        assert!((got - hand).abs() < 1e-15);
    }

    #[test]
    fn single_class_pooling_is_plain_auprc() {
        let s = [0.2, 0.9, 0.4, 0.4, 0.1];
        let l = [false, true, true, false, true];
        assert_eq!(auprc_weighted(&[&s], &[&l]).unwrap(), auprc_class(&s, &l).unwrap());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..=32).prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![(0u8..6).prop_map(|k| f64::from(k) / 5.0), 0.0f64..1.0], n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_threshold_oracle((s, mut l) in instance()) {
            l[0] = true;
            let got = auprc_class(&s, &l).unwrap();
            prop_assert!((got - oracle(&s, &l)).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&got));
        }

        #[test]
        fn monotone_transform_invariance((s, mut l) in instance()) {
            l[0] = true;
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x - 1.0).exp()).collect();
            prop_assert_eq!(auprc_class(&s, &l).unwrap(), auprc_class(&t, &l).unwrap());
        }

        #[test]
        fn identical_copies_pool_to_the_class_value((s, mut l) in instance(), k in 1usize..5) {
            l[0] = true;
            let ss: Vec<&[f64]> = vec![&s; k];
            let ll: Vec<&[bool]> = vec![&l; k];
            let pooled = auprc_weighted(&ss, &ll).unwrap();
            prop_assert!((pooled - auprc_class(&s, &l).unwrap()).abs() < 1e-12);
        }
    }
}
