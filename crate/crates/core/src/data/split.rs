//! Stratified train/validation/test split.
//!
//! Each forgery type first receives `floor(n·r)` records per split. The
//! remaining records of a type go one each to splits with a positive
//! fractional remainder (so every split stays within one record of its exact
//! share), preferring splits still short of the global targets
//! `floor(N·r_val)`, `floor(N·r_test)` and train = the rest; larger remainders
//! first, ties by type then split order. Within a type, records are shuffled by
//! the seed.

use crate::error::{Error, Result};
use crate::tensor::RngState;

use super::manifest::{ForgeryType, ManifestRecord};

pub const PAPER_RATIOS: [f64; 3] = [0.75, 0.1, 0.15];

/// Record indices of each split, in manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn get(&self, name: &str) -> Result<&[usize]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!(
                "unknown split {other:?} (expected train, val or test)"
            ))),
        }
    }
}

fn floor_eps(x: f64) -> usize {
    (x + 1e-9).floor() as usize
}

/// Per-stratum (train, val, test) counts.
fn allocate(sizes: &[usize], ratios: [f64; 3]) -> Vec<[usize; 3]> {
    let total: usize = sizes.iter().sum();
    let val = floor_eps(total as f64 * ratios[1]);
    let test = floor_eps(total as f64 * ratios[2]);
    let targets = [total - val - test, val, test];
    let mut counts: Vec<[usize; 3]> = sizes.iter().map(|&n| ratios.map(|r| floor_eps(n as f64 * r))).collect();
    let rem: Vec<[f64; 3]> = sizes
        .iter()
        .zip(&counts)
        .map(|(&n, c)| [0, 1, 2].map(|k| n as f64 * ratios[k] - c[k] as f64))
        .collect();
    let mut left: Vec<usize> = sizes
        .iter()
        .zip(&counts)
        .map(|(&n, c)| n - c.iter().sum::<usize>())
        .collect();
    let mut slots: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|s| (0..3).map(move |k| (s, k)))
        .filter(|&(s, k)| rem[s][k] > 1e-9)
        .collect();
    slots.sort_by(|a, b| rem[b.0][b.1].partial_cmp(&rem[a.0][a.1]).unwrap().then(a.cmp(b)));
    let mut given = vec![[false; 3]; sizes.len()];
    for pass in 0..2 {
        for &(s, k) in &slots {
            let short = counts.iter().map(|c| c[k]).sum::<usize>() < targets[k];
            if left[s] > 0 && !given[s][k] && (pass == 1 || short) {
                counts[s][k] += 1;
                given[s][k] = true;
                left[s] -= 1;
            }
        }
    }
    counts
}

pub fn split(records: &[ManifestRecord], ratios: [f64; 3], seed: u64) -> Result<Split> {
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| r < 0.0) {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for (i, r) in records.iter().enumerate() {
        strata[r.forgery_type.index()].push(i);
    }
    for t in ForgeryType::ALL {
        let n = strata[t.index()].len();
        if n > 0 && n < 3 {
            return Err(Error::Data(format!(
                "stratum {t} has {n} records; at least 3 are needed"
            )));
        }
    }
    if records.is_empty() {
        return Err(Error::Data("cannot split an empty manifest".into()));
    }
    let sizes: Vec<usize> = strata.iter().map(Vec::len).collect();
    let counts = allocate(&sizes, ratios);
    let master = RngState::new(seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (s, idx) in strata.iter_mut().enumerate() {
        master.derive(&[s as u64]).shuffle(idx);
        let [_, v, t] = counts[s];
        out.val.extend_from_slice(&idx[..v]);
        out.test.extend_from_slice(&idx[v..v + t]);
        out.train.extend_from_slice(&idx[v + t..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
