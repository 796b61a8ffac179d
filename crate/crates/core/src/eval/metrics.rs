use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::TumorClass;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub patient_id: String,
    pub true_class: TumorClass,
    pub predicted_class: TumorClass,
    /// Softmax probability of `predicted_class`.
    pub probability: f64,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.true_class == self.predicted_class
    }
}

fn non_empty(predictions: &[PredictionRecord]) -> Result<()> {
    if predictions.is_empty() {
        Err(Error::Stats("no predictions".into()))
    } else {
        Ok(())
    }
}

/// Fraction of correctly classified images, pooled over patients.
pub fn image_accuracy(predictions: &[PredictionRecord]) -> Result<f64> {
    non_empty(predictions)?;
    let correct = predictions.iter().filter(|p| p.is_correct()).count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientAccuracy {
    /// Correct images / images, per patient.
    pub per_patient: BTreeMap<String, f64>,
    /// Unweighted mean of the per-patient scores.
    pub mean: f64,
}

pub fn patient_level_accuracy(predictions: &[PredictionRecord]) -> Result<PatientAccuracy> {
    non_empty(predictions)?;
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for p in predictions {
        let t = tally.entry(&p.patient_id).or_default();
        t.0 += usize::from(p.is_correct());
        t.1 += 1;
    }
    let per_patient: BTreeMap<String, f64> = tally
        .into_iter()
        .map(|(id, (c, n))| (id.to_owned(), c as f64 / n as f64))
        .collect();
    let mean = per_patient.values().sum::<f64>() / per_patient.len() as f64;
    Ok(PatientAccuracy { per_patient, mean })
}

/// Image counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[PredictionRecord]) -> Self {
        let mut c = Confusion::default();
        for p in predictions {
            match (p.true_class, p.predicted_class) {
                (TumorClass::Malignant, TumorClass::Malignant) => c.tp += 1,
                (TumorClass::Malignant, TumorClass::Benign) => c.fn_ += 1,
                (TumorClass::Benign, TumorClass::Benign) => c.tn += 1,
                (TumorClass::Benign, TumorClass::Malignant) => c.fp += 1,
            }
        }
        c
    }

    /// `TP / (TP + FN)`; `None` without malignant images.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `TN / (TN + FP)`; `None` without benign images.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Pooled image-level sensitivity and specificity.
pub fn sensitivity_specificity(predictions: &[PredictionRecord]) -> Result<Rates> {
    non_empty(predictions)?;
    let c = Confusion::from_predictions(predictions);
    Ok(Rates {
        sensitivity: c.sensitivity(),
        specificity: c.specificity(),
    })
}

/// Patient-level counterparts: mean patient score over malignant patients
/// (sensitivity) and over benign patients (specificity).
pub fn patient_sensitivity_specificity(predictions: &[PredictionRecord]) -> Result<Rates> {
    let scores = patient_level_accuracy(predictions)?;
    let class_of: BTreeMap<&str, TumorClass> = predictions
        .iter()
        .map(|p| (p.patient_id.as_str(), p.true_class))
        .collect();
    let mean_for = |class: TumorClass| {
        let vals: Vec<f64> = scores
            .per_patient
            .iter()
            .filter(|(id, _)| class_of[id.as_str()] == class)
            .map(|(_, &s)| s)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(Rates {
        sensitivity: mean_for(TumorClass::Malignant),
        specificity: mean_for(TumorClass::Benign),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub accuracy_patient: f64,
    pub accuracy_image: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub patient_sensitivity: Option<f64>,
    pub patient_specificity: Option<f64>,
}

impl FoldMetrics {
    pub fn from_predictions(predictions: &[PredictionRecord]) -> Result<Self> {
        let image = sensitivity_specificity(predictions)?;
        let patient = patient_sensitivity_specificity(predictions)?;
        Ok(Self {
            accuracy_patient: patient_level_accuracy(predictions)?.mean,
            accuracy_image: image_accuracy(predictions)?,
            sensitivity: image.sensitivity,
            specificity: image.specificity,
            patient_sensitivity: patient.sensitivity,
            patient_specificity: patient.specificity,
        })
    }
}

/// Per-metric summary across folds; a metric undefined in any fold stays undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy_patient: f64,
    pub accuracy_image: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub patient_sensitivity: Option<f64>,
    pub patient_specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub aug_factor: usize,
    pub n_folds: usize,
    pub folds: Vec<FoldMetrics>,
    pub mean: MetricSummary,
    pub sd: MetricSummary,
}

/// Arithmetic mean and sample standard deviation (`n − 1` denominator).
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Stats(format!(
            "need at least 2 values for a sample SD, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Stats("non-finite metric value".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

pub fn aggregate_folds(
    model: &str,
    aug_factor: usize,
    folds: Vec<FoldMetrics>,
) -> Result<MetricsReport> {
    if folds.len() < 2 {
        return Err(Error::Stats(format!(
            "need at least 2 folds, got {}",
            folds.len()
        )));
    }
    let summarize = |get: &dyn Fn(&FoldMetrics) -> Option<f64>| -> Result<Option<(f64, f64)>> {
        let values: Option<Vec<f64>> = folds.iter().map(get).collect();
        values.map(|v| mean_sd(&v)).transpose()
    };
    let acc_p = summarize(&|f| Some(f.accuracy_patient))?.expect("always defined");
    let acc_i = summarize(&|f| Some(f.accuracy_image))?.expect("always defined");
    let sens = summarize(&|f| f.sensitivity)?;
    let spec = summarize(&|f| f.specificity)?;
    let psens = summarize(&|f| f.patient_sensitivity)?;
    let pspec = summarize(&|f| f.patient_specificity)?;
    let pick = |which: fn((f64, f64)) -> f64| MetricSummary {
        accuracy_patient: which(acc_p),
        accuracy_image: which(acc_i),
        sensitivity: sens.map(which),
        specificity: spec.map(which),
        patient_sensitivity: psens.map(which),
        patient_specificity: pspec.map(which),
    };
    Ok(MetricsReport {
        model: model.to_owned(),
        aug_factor,
        n_folds: folds.len(),
        mean: pick(|(m, _)| m),
        sd: pick(|(_, s)| s),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(patient: &str, truth: TumorClass, predicted: TumorClass) -> PredictionRecord {
        PredictionRecord {
            image_id: format!("{patient}.png"),
            patient_id: patient.into(),
            true_class: truth,
            predicted_class: predicted,
            probability: 0.9,
        }
    }

    fn outcomes(
        patient: &str,
        truth: TumorClass,
        correct: usize,
        wrong: usize,
    ) -> Vec<PredictionRecord> {
        let other = TumorClass::from_index(1 - truth.index()).unwrap();
        (0..correct)
            .map(|_| pred(patient, truth, truth))
            .chain((0..wrong).map(|_| pred(patient, truth, other)))
            .collect()
    }

    use TumorClass::{Benign, Malignant};

    #[test]
    fn two_patient_mean_of_ratios() {
        let mut preds = outcomes("A", Malignant, 3, 1);
        preds.extend(outcomes("B", Benign, 1, 1));
        let acc = patient_level_accuracy(&preds).unwrap();
        assert_eq!(acc.per_patient["A"], 0.75);
        assert_eq!(acc.per_patient["B"], 0.5);
        assert_eq!(acc.mean, 0.625);
        // pooled accuracy differs: 4 of 6 images
        assert!((image_accuracy(&preds).unwrap() - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_single_patient() {
        let preds = outcomes("A", Benign, 5, 0);
        assert_eq!(patient_level_accuracy(&preds).unwrap().mean, 1.0);
        let rates = sensitivity_specificity(&preds).unwrap();
        assert_eq!(rates.specificity, Some(1.0));
        assert_eq!(rates.sensitivity, None);
    }

    #[test]
    fn confusion_ratios() {
        let mut preds = outcomes("m", Malignant, 8, 2);
        preds.extend(outcomes("b", Benign, 3, 1));
        let c = Confusion::from_predictions(&preds);
        assert_eq!(
            c,
            Confusion {
                tp: 8,
                fn_: 2,
                tn: 3,
                fp: 1
            }
        );
        let rates = sensitivity_specificity(&preds).unwrap();
        assert_eq!(rates.sensitivity, Some(0.8));
        assert_eq!(rates.specificity, Some(0.75));
    }

    #[test]
    fn all_correct_rates() {
        let mut preds = outcomes("m", Malignant, 4, 0);
        preds.extend(outcomes("b", Benign, 2, 0));
        let rates = sensitivity_specificity(&preds).unwrap();
        assert_eq!(
            (rates.sensitivity, rates.specificity),
            (Some(1.0), Some(1.0))
        );
    }

    #[test]
    fn patient_level_rates_average_patient_scores() {
        let mut preds = outcomes("m1", Malignant, 1, 1);
        preds.extend(outcomes("m2", Malignant, 9, 0));
        preds.extend(outcomes("b1", Benign, 1, 3));
        let rates = patient_sensitivity_specificity(&preds).unwrap();
        assert_eq!(rates.sensitivity, Some(0.75));
        assert_eq!(rates.specificity, Some(0.25));
    }

    #[test]
    fn empty_predictions_rejected() {
        assert!(patient_level_accuracy(&[]).is_err());
        assert!(sensitivity_specificity(&[]).is_err());
    }

    fn fold(acc: f64) -> FoldMetrics {
        FoldMetrics {
            accuracy_patient: acc,
            accuracy_image: acc,
            sensitivity: Some(acc),
            specificity: Some(1.0 - acc),
            patient_sensitivity: None,
            patient_specificity: Some(acc),
        }
    }

    #[test]
    fn aggregate_mean_and_sample_sd() {
        let r = aggregate_folds("tcnn", 1, vec![fold(0.8), fold(0.9)]).unwrap();
        assert!((r.mean.accuracy_patient - 0.85).abs() < 1e-12);
        assert!((r.sd.accuracy_patient - 0.0707106781).abs() < 1e-9);
        assert_eq!(r.mean.patient_sensitivity, None);
        assert_eq!(r.n_folds, 2);
        let same = aggregate_folds("tcnn", 1, vec![fold(0.7); 5]).unwrap();
        assert_eq!(same.sd.accuracy_image, 0.0);
        assert_eq!(same.folds.len(), 5);
        assert!(aggregate_folds("tcnn", 1, vec![fold(0.7)]).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = aggregate_folds("tcnn", 6, vec![fold(0.8), fold(0.9)]).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["model", "aug_factor", "folds", "mean", "sd"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        for key in [
            "accuracy_patient",
            "accuracy_image",
            "sensitivity",
            "specificity",
        ] {
            assert!(v["folds"][0].get(key).is_some(), "{key}");
            assert!(v["mean"].get(key).is_some(), "{key}");
        }
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
