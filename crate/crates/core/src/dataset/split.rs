use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SampleRecord, NUM_CLASSES};
use crate::error::{NlabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub seed: u64,
    /// Keep class proportions (by label) in both parts.
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_count: 45_000,
            val_count: 5_000,
            seed: 0,
            stratified: false,
        }
    }
}

/// Partitions `pool` into (train, validation); both come back sorted by id.
pub fn split(pool: &[SampleRecord], spec: SplitSpec) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    let total = spec
        .train_count
        .checked_add(spec.val_count)
        .ok_or_else(|| NlabError::validation("split counts overflow"))?;
    if total > pool.len() {
        return Err(NlabError::validation(format!(
            "split {}+{} exceeds pool of {}",
            spec.train_count,
            spec.val_count,
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut train_idx, mut val_idx) = if spec.stratified {
        stratified_indices(pool, spec, &mut rng)
    } else {
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let val = order[spec.train_count..total].to_vec();
        order.truncate(spec.train_count);
        (order, val)
    };
    train_idx.sort_unstable_by_key(|&i| pool[i].id);
    val_idx.sort_unstable_by_key(|&i| pool[i].id);
    Ok((
        train_idx.into_iter().map(|i| pool[i].clone()).collect(),
        val_idx.into_iter().map(|i| pool[i].clone()).collect(),
    ))
}

/// Largest-remainder apportionment of `total` over class sizes.
fn apportion(sizes: &[usize], total: usize, pool: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * total as f64 / pool as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for c in order {
        if rest == 0 {
            break;
        }
        if counts[c] < sizes[c] {
            counts[c] += 1;
            rest -= 1;
        }
    }
    counts
}

fn stratified_indices(pool: &[SampleRecord], spec: SplitSpec, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, r) in pool.iter().enumerate() {
        by_class[r.observed_label as usize].push(i);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let train_counts = apportion(&sizes, spec.train_count, pool.len());
    let remaining: Vec<usize> = sizes.iter().zip(&train_counts).map(|(s, t)| s - t).collect();
    let left: usize = remaining.iter().sum();
    let val_counts = if left == 0 {
        vec![0; NUM_CLASSES]
    } else {
        apportion(&remaining, spec.val_count, left)
    };
    let mut train = Vec::with_capacity(spec.train_count);
    let mut val = Vec::with_capacity(spec.val_count);
    for (c, idx) in by_class.iter_mut().enumerate() {
        idx.shuffle(rng);
        train.extend_from_slice(&idx[..train_counts[c]]);
        val.extend_from_slice(&idx[train_counts[c]..train_counts[c] + val_counts[c]]);
    }
    (train, val)
}

/// The first `n` records in order, taking at most ⌈n/10⌉ per observed
/// label so the subset stays class balanced.
pub fn balanced_subset(records: &[SampleRecord], n: usize) -> Result<Vec<SampleRecord>> {
    if n > records.len() {
        return Err(NlabError::validation(format!(
            "subset of {n} requested from {} records",
            records.len()
        )));
    }
    let quota = n.div_ceil(NUM_CLASSES);
    let mut taken = [0usize; NUM_CLASSES];
    let mut out = Vec::with_capacity(n);
    for r in records {
        if out.len() == n {
            break;
        }
        let c = r.observed_label as usize;
        if taken[c] < quota {
            taken[c] += 1;
            out.push(r.clone());
        }
    }
    // a skewed pool can exhaust some classes; top up in order
    if out.len() < n {
        let have: std::collections::HashSet<u32> = out.iter().map(|r| r.id).collect();
        out.extend(
            records
                .iter()
                .filter(|r| !have.contains(&r.id))
                .take(n - out.len())
                .cloned(),
        );
        out.sort_by_key(|r| r.id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn pool(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| SampleRecord::clean(i as u32, vec![0; 4], (i * 7 % 10) as u8))
            .collect()
    }

    #[test]
    fn default_split_partitions_pool() {
        let p = pool(50_000);
        let (train, val) = split(&p, SplitSpec::default()).unwrap();
        assert_eq!(train.len(), 45_000);
        assert_eq!(val.len(), 5_000);
        let ids: HashSet<u32> = train.iter().chain(&val).map(|r| r.id).collect();
        assert_eq!(ids.len(), 50_000);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let p = pool(1000);
        let spec = SplitSpec {
            train_count: 800,
            val_count: 200,
            seed: 9,
            stratified: false,
        };
        assert_eq!(split(&p, spec).unwrap(), split(&p, spec).unwrap());
        let other = split(&p, SplitSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(split(&p, spec).unwrap().1, other.1);
    }

    #[test]
    fn oversized_split_rejected() {
        let p = pool(10);
        let spec = SplitSpec {
            train_count: 8,
            val_count: 3,
            seed: 0,
            stratified: false,
        };
        assert!(split(&p, spec).is_err());
    }

    #[test]
    fn stratified_counts_within_five_percent() {
        // uneven classes: class c has 200 + 40c members
        let mut p = Vec::new();
        for c in 0..10u8 {
            for _ in 0..(200 + 40 * c as usize) {
                let id = p.len() as u32;
                p.push(SampleRecord::clean(id, vec![], c));
            }
        }
        let n = p.len();
        let spec = SplitSpec {
            train_count: n * 9 / 10,
            val_count: n / 10,
            seed: 3,
            stratified: true,
        };
        let (train, val) = split(&p, spec).unwrap();
        for (part, size) in [(&train, spec.train_count), (&val, spec.val_count)] {
            for c in 0..10u8 {
                let class_size = (200 + 40 * c as usize) as f64;
                let want = class_size * size as f64 / n as f64;
                let got = part.iter().filter(|r| r.true_label == c).count() as f64;
                assert!((got - want).abs() <= 0.05 * want, "class {c}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn subset_is_balanced_prefix() {
        let p = pool(1000);
        let s = balanced_subset(&p, 100).unwrap();
        assert_eq!(s.len(), 100);
        for c in 0..10u8 {
            assert_eq!(s.iter().filter(|r| r.observed_label == c).count(), 10);
        }
        assert!(s.windows(2).all(|w| w[0].id < w[1].id));
    }
}
