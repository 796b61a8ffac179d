use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

use super::manifest::Manifest;
use super::record::TumorClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub n_folds: usize,
    /// Share of patients held out for testing.
    pub test_fraction: f64,
    /// Share of the remaining patients held out for validation.
    pub validation_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            test_fraction: 0.3,
            validation_fraction: 0.15,
        }
    }
}

/// Patient ids per role, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl Fold {
    pub fn role(&self, role: Role) -> &[String] {
        match role {
            Role::Train => &self.train,
            Role::Validation => &self.validation,
            Role::Test => &self.test,
        }
    }

    pub fn role_set(&self, role: Role) -> BTreeSet<String> {
        self.role(role).iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    /// Checks that every fold assigns each patient of `manifest` to exactly one role.
    pub fn validate(&self, manifest: &Manifest) -> Result<()> {
        let patients: BTreeSet<&str> = manifest.patients().collect();
        for (f, fold) in self.folds.iter().enumerate() {
            let mut seen: BTreeMap<&str, Role> = BTreeMap::new();
            for role in [Role::Train, Role::Validation, Role::Test] {
                for p in fold.role(role) {
                    if let Some(prev) = seen.insert(p, role) {
                        return Err(Error::Data(format!(
                            "fold {}: patient `{p}` is in both {prev:?} and {role:?}",
                            f + 1
                        )));
                    }
                }
            }
            let assigned: BTreeSet<&str> = seen.keys().copied().collect();
            if assigned != patients {
                let missing = patients.difference(&assigned).count();
                let unknown = assigned.difference(&patients).count();
                return Err(Error::Data(format!(
                    "fold {}: {missing} patients unassigned, {unknown} not in the manifest",
                    f + 1
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Splits `round(fraction · Σ sizes)` across groups by largest remainder,
/// then clamps each share to `[min, size − reserve]`.
fn apportion(sizes: &[usize], fraction: f64, min: usize, reserve: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let quotas: Vec<f64> = sizes.iter().map(|&n| fraction * n as f64).collect();
    let mut shares: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = shares.iter().sum();
    for &i in order.iter().take(target.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
        .iter()
        .zip(sizes)
        .map(|(&s, &n)| s.clamp(min, n - reserve))
        .collect()
}

/// Patient-wise hold-out plan stratified by tumor class.
///
/// In each fold and class, a shuffled patient list is cut into test, then
/// validation, then train. Image counts are not balanced.
pub fn make_folds(manifest: &Manifest, config: &SplitConfig, seed_value: u64) -> Result<FoldPlan> {
    if config.n_folds == 0 {
        return Err(Error::Config("n_folds must be at least 1".into()));
    }
    for (name, f) in [
        ("test", config.test_fraction),
        ("validation", config.validation_fraction),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "{name} fraction must lie in (0, 1), got {f}"
            )));
        }
    }
    let mut by_class: Vec<Vec<String>> = vec![Vec::new(); TumorClass::ALL.len()];
    for p in manifest.patients() {
        by_class[manifest.patient_class(p)?.index()].push(p.to_owned());
    }
    for (class, patients) in TumorClass::ALL.iter().zip(&by_class) {
        if patients.len() < 3 {
            return Err(Error::Data(format!(
                "{} {class} patients; at least 3 per class are needed to fill train, validation and test",
                patients.len()
            )));
        }
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let n_test = apportion(&sizes, config.test_fraction, 1, 2);
    let rest: Vec<usize> = sizes.iter().zip(&n_test).map(|(n, t)| n - t).collect();
    let n_val = apportion(&rest, config.validation_fraction, 1, 1);

    let folds = (0..config.n_folds)
        .map(|f| {
            let mut rng = seed::stream(seed_value, seed::SPLIT, &[f as u64]);
            let mut fold = Fold {
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
            };
            for (c, patients) in by_class.iter().enumerate() {
                let mut shuffled = patients.clone();
                shuffled.shuffle(&mut rng);
                let (test, rest) = shuffled.split_at(n_test[c]);
                let (validation, train) = rest.split_at(n_val[c]);
                fold.test.extend_from_slice(test);
                fold.validation.extend_from_slice(validation);
                fold.train.extend_from_slice(train);
            }
            fold.train.sort();
            fold.validation.sort();
            fold.test.sort();
            fold
        })
        .collect();
    Ok(FoldPlan {
        seed: seed_value,
        folds,
    })
}
