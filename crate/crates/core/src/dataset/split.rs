use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::MovieRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Data(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub movie_id: String,
    pub split: Split,
    pub seed: u64,
}

/// Per-split member counts for a stratum of `n` items.
///
/// Starts from the floors of `ratio * n` and hands the leftover units to the
/// splits that still owe members at corpus level (`owed`), then by largest
/// fractional remainder, then in train/valid/test order. Each split gets at
/// most one extra unit, so every count stays within one of its quota.
fn apportion(n: usize, ratios: [f64; 3], owed: &mut [i64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    for (c, o) in counts.iter().zip(owed.iter_mut()) {
        *o -= *c as i64;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let key = |i: usize| (owed[i] > 0, quotas[i] - quotas[i].floor());
        let (oa, ra) = key(a);
        let (ob, rb) = key(b);
        ob.cmp(&oa).then(rb.total_cmp(&ra)).then(a.cmp(&b))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        owed[i] -= 1;
        left -= 1;
    }
    counts
}

/// Deterministic franchise-stratified split.
///
/// Each stratum is sorted by `movie_id`, shuffled with a ChaCha8 stream seeded
/// from `seed` and the stratum label, then cut into consecutive train, valid
/// and test runs. Strata with fewer than 3 members go entirely to train.
pub fn stratified_split(
    records: &[MovieRecord],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Vec<SplitAssignment>> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    if records.is_empty() {
        return Err(Error::Invalid("cannot split an empty corpus".into()));
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios {ratios:?} must sum to 1")));
    }

    let n = records.len();
    let mut owed = apportion(n, ratios, &mut [0; 3]).map(|c| c as i64);

    let mut assigned: std::collections::HashMap<&str, Split> = Default::default();
    for (label, franchise) in [(1u64, true), (0u64, false)] {
        let mut members: Vec<&str> = records
            .iter()
            .filter(|r| r.franchise == franchise)
            .map(|r| r.movie_id.as_str())
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            log::warn!(
                "stratum franchise={franchise} has {} member(s); assigning all to train",
                members.len()
            );
            owed[0] -= members.len() as i64;
            for m in members {
                assigned.insert(m, Split::Train);
            }
            continue;
        }
        members.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label);
        members.shuffle(&mut rng);
        let counts = apportion(members.len(), ratios, &mut owed);
        let mut it = members.into_iter();
        for (split, count) in Split::ALL.into_iter().zip(counts) {
            for m in it.by_ref().take(count) {
                assigned.insert(m, split);
            }
        }
    }

    Ok(records
        .iter()
        .map(|r| SplitAssignment {
            movie_id: r.movie_id.clone(),
            split: assigned[r.movie_id.as_str()],
            seed,
        })
        .collect())
}

pub fn write_splits(path: &Path, splits: &[SplitAssignment]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in splits {
        w.serialize(s)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_splits(path: &Path) -> Result<Vec<SplitAssignment>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
