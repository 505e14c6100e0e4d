//! Per-class train/val/test assignment and known/unknown open-set partitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coatgen::{Instance, SourceTag, MIN_INSTANCES_PER_IDENTITY};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Rng};

pub const TEST_PER_CLASS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub identity_id: u32,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Validation share of a class with `total` instances: `floor((total - 10) / 10)`.
pub fn val_count(total: usize) -> usize {
    (total - TEST_PER_CLASS) / 10
}

/// Shuffle each identity's instances, then take 10 for test, `val_count` for
/// validation and the rest for training. Lists are stored ascending.
pub fn make_class_splits(herd: &[Instance], seed: u64) -> Result<Vec<ClassSplit>> {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (pos, inst) in herd.iter().enumerate() {
        by_class.entry(inst.identity_id).or_default().push(pos);
    }
    let mut out = Vec::with_capacity(by_class.len());
    for (id, mut members) in by_class {
        if members.len() < MIN_INSTANCES_PER_IDENTITY {
            return Err(Error::Validation(format!(
                "identity {id} has {} instances, need at least {MIN_INSTANCES_PER_IDENTITY}",
                members.len()
            )));
        }
        let mut rng = Rng::new(derive_seed(seed, &[0x636c_7373, id as u64]));
        rng.shuffle(&mut members);
        let n_val = val_count(members.len());
        let mut test = members[..TEST_PER_CLASS].to_vec();
        let mut val = members[TEST_PER_CLASS..TEST_PER_CLASS + n_val].to_vec();
        let mut train = members[TEST_PER_CLASS + n_val..].to_vec();
        test.sort_unstable();
        val.sort_unstable();
        train.sort_unstable();
        out.push(ClassSplit {
            identity_id: id,
            train,
            val,
            test,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenSetSplit {
    pub known: BTreeSet<u32>,
    pub unknown: BTreeSet<u32>,
    pub openness_ratio: f64,
    pub repetition_index: usize,
    pub seed: u64,
}

impl OpenSetSplit {
    /// Every identity known; the degenerate closed-set case.
    pub fn closed(identities: impl IntoIterator<Item = u32>) -> Self {
        Self {
            known: identities.into_iter().collect(),
            unknown: BTreeSet::new(),
            openness_ratio: 0.0,
            repetition_index: 0,
            seed: 0,
        }
    }
}

/// `round(ratio * total)`, halves rounded up.
pub fn unknown_count(ratio: f64, total: usize) -> usize {
    // The small slack keeps products such as 0.25 * 46 = 11.5 on the half.
    (ratio * total as f64 + 0.5 + 1e-9).floor() as usize
}

/// Seed of one `(ratio, repetition)` split; fixed for the life of an experiment.
pub fn split_seed(master_seed: u64, ratio_index: usize, repetition: usize) -> u64 {
    derive_seed(master_seed, &[0x6f70_656e, ratio_index as u64, repetition as u64])
}

/// One split per `(ratio, repetition)`, ratio-major. Unknown identities are
/// drawn equally from each source tag; when the count does not divide, a
/// random subset of sources takes one extra.
pub fn make_openset_splits(
    identities: &[(u32, SourceTag)],
    ratios: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<OpenSetSplit>> {
    if reps == 0 {
        return Err(Error::Validation("repetitions must be >= 1".into()));
    }
    let total = identities.len();
    let mut by_source: BTreeMap<SourceTag, Vec<u32>> = BTreeMap::new();
    for &(id, src) in identities {
        by_source.entry(src).or_default().push(id);
    }
    let mut out = Vec::with_capacity(ratios.len() * reps);
    for (ri, &ratio) in ratios.iter().enumerate() {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Validation(format!("openness ratio {ratio} outside (0, 1)")));
        }
        let n_unknown = unknown_count(ratio, total);
        if n_unknown == 0 || n_unknown >= total {
            return Err(Error::Validation(format!(
                "ratio {ratio} over {total} identities gives {n_unknown} unknown"
            )));
        }
        for rep in 0..reps {
            let s = split_seed(seed, ri, rep);
            let mut rng = Rng::new(s);
            let quotas = stratified_quotas(&by_source, n_unknown, &mut rng);
            let mut unknown = BTreeSet::new();
            for ((_, members), quota) in by_source.iter().zip(quotas) {
                let mut pool = members.clone();
                rng.shuffle(&mut pool);
                unknown.extend(pool.into_iter().take(quota));
            }
            let known = identities
                .iter()
                .map(|(id, _)| *id)
                .filter(|id| !unknown.contains(id))
                .collect();
            out.push(OpenSetSplit {
                known,
                unknown,
                openness_ratio: ratio,
                repetition_index: rep,
                seed: s,
            });
        }
    }
    Ok(out)
}

fn stratified_quotas(
    by_source: &BTreeMap<SourceTag, Vec<u32>>,
    n_unknown: usize,
    rng: &mut Rng,
) -> Vec<usize> {
    let caps: Vec<usize> = by_source.values().map(Vec::len).collect();
    let s = caps.len();
    let mut order: Vec<usize> = (0..s).collect();
    rng.shuffle(&mut order);
    let mut quotas = vec![n_unknown / s; s];
    for &i in order.iter().take(n_unknown % s) {
        quotas[i] += 1;
    }
    // Sources smaller than their share hand the excess on, in the same random order.
    let mut excess = 0;
    for i in 0..s {
        if quotas[i] > caps[i] {
            excess += quotas[i] - caps[i];
            quotas[i] = caps[i];
        }
    }
    while excess > 0 {
        let mut moved = false;
        for &i in &order {
            if excess > 0 && quotas[i] < caps[i] {
                quotas[i] += 1;
                excess -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    quotas
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub id: u32,
    pub source: SourceTag,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// On-disk split: `{ratio, repetition, seed, known, unknown, classes}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub ratio: f64,
    pub repetition: usize,
    pub seed: u64,
    pub known: Vec<u32>,
    pub unknown: Vec<u32>,
    pub classes: Vec<ClassRecord>,
}

impl SplitFile {
    pub fn new(
        split: &OpenSetSplit,
        classes: &[ClassSplit],
        identities: &[(u32, SourceTag)],
    ) -> Result<Self> {
        let sources: BTreeMap<u32, SourceTag> = identities.iter().copied().collect();
        let classes = classes
            .iter()
            .map(|c| {
                let source = *sources.get(&c.identity_id).ok_or_else(|| {
                    Error::Validation(format!("identity {} has no source tag", c.identity_id))
                })?;
                Ok(ClassRecord {
                    id: c.identity_id,
                    source,
                    train: c.train.clone(),
                    val: c.val.clone(),
                    test: c.test.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ratio: split.openness_ratio,
            repetition: split.repetition_index,
            seed: split.seed,
            known: split.known.iter().copied().collect(),
            unknown: split.unknown.iter().copied().collect(),
            classes,
        })
    }

    pub fn open_set(&self) -> OpenSetSplit {
        OpenSetSplit {
            known: self.known.iter().copied().collect(),
            unknown: self.unknown.iter().copied().collect(),
            openness_ratio: self.ratio,
            repetition_index: self.repetition,
            seed: self.seed,
        }
    }

    pub fn class_splits(&self) -> Vec<ClassSplit> {
        self.classes
            .iter()
            .map(|c| ClassSplit {
                identity_id: c.id,
                train: c.train.clone(),
                val: c.val.clone(),
                test: c.test.clone(),
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("split serializes") + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, &e))
    }
}

/// File name used for a split inside a splits directory.
pub fn split_file_name(ratio: f64, repetition: usize) -> String {
    format!("split_r{ratio:.2}_rep{repetition}.json")
}
