use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Per-class shuffled split: the first `⌈fraction·n_c⌉` samples of each
/// class go to training. Returns sorted `(train, test)` index lists.
pub fn stratified_split(labels: &[u32], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(Error::config("cannot split an empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut members) in by_class {
        if members.len() < 2 {
            return Err(Error::config(format!("class {class} has {} sample; a split needs at least 2", members.len())));
        }
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * members.len() as f64).ceil() as usize).min(members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_samples_two_classes() {
        let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let (train, test) = stratified_split(&labels, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 1);
        assert_eq!(stratified_split(&labels, 0.8, 3).unwrap(), (train, test));
    }

    #[test]
    fn singleton_class_rejected() {
        assert!(stratified_split(&[0, 0, 1], 0.8, 0).unwrap_err().is_config());
        assert!(stratified_split(&[], 0.8, 0).unwrap_err().is_config());
    }
}
