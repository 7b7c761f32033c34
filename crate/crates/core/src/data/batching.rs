//! Mixed-source batch assembly with an exact per-batch source ratio.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::error::{Error, Result};

/// Assemble one epoch of batches drawing from each source in the exact
/// `ratio`, shuffled deterministically under `seed`.
///
/// Every batch holds `batch_size · ratio[i] / Σratio` samples of source `i`,
/// which must divide exactly. The epoch stops when the scarcest source runs
/// out; whole batches only, the final partial batch is dropped. Within one
/// epoch no sample is used twice.
pub fn make_batches<'a>(
    sources: &'a [Vec<Sample>],
    ratio: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<&'a Sample>>> {
    let lens: Vec<usize> = sources.iter().map(|s| s.len()).collect();
    let index_batches = make_index_batches(&lens, ratio, batch_size, seed)?;
    Ok(index_batches
        .into_iter()
        .map(|batch| batch.into_iter().map(|(s, i)| &sources[s][i]).collect())
        .collect())
}

/// Index-level form of [`make_batches`]: batches of `(source, index)` pairs
/// over sources of the given lengths.
pub fn make_index_batches(
    source_lens: &[usize],
    ratio: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if source_lens.is_empty() {
        return Err(Error::EmptyInput { op: "make_batches" });
    }
    if ratio.len() != source_lens.len() {
        return Err(Error::Invalid {
            op: "make_batches",
            msg: format!(
                "{} ratio entries for {} sources",
                ratio.len(),
                source_lens.len()
            ),
        });
    }
    if batch_size == 0 || ratio.iter().any(|&r| r == 0) {
        return Err(Error::Invalid {
            op: "make_batches",
            msg: "batch size and ratio entries must be positive".into(),
        });
    }
    let total: usize = ratio.iter().sum();
    let per_source: Vec<usize> = ratio
        .iter()
        .map(|&r| {
            if (batch_size * r) % total != 0 {
                Err(Error::Invalid {
                    op: "make_batches",
                    msg: format!(
                        "batch size {batch_size} is not divisible under ratio {ratio:?}"
                    ),
                })
            } else {
                Ok(batch_size * r / total)
            }
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(source_lens.len());
    for &len in source_lens {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        orders.push(order);
    }

    let n_batches = source_lens
        .iter()
        .zip(&per_source)
        .map(|(&len, &per)| len / per)
        .min()
        .unwrap_or(0);

    let mut batches = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for (s, order) in orders.iter().enumerate() {
            let per = per_source[s];
            for k in 0..per {
                batch.push((s, order[b * per + k]));
            }
        }
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, CameraModel};
    use crate::skeleton::SkeletonTopology;

    fn sources(n1: usize, n2: usize) -> Vec<Vec<Sample>> {
        let topo = SkeletonTopology::default_h36m17();
        let cam = CameraModel::pinhole(1100.0, [500.0, 500.0], 3200.0).unwrap();
        let a = generate_synthetic(n1, 1, &cam, &topo).unwrap();
        let mut b = generate_synthetic(n2, 2, &cam, &topo).unwrap();
        for s in &mut b {
            s.y3d = None; // second source is 2d-only
            s.source_tag = "twod".into();
        }
        vec![a, b]
    }

    #[test]
    fn one_to_one_ratio_fills_every_batch_half_and_half() {
        let srcs = sources(96, 96);
        let batches = make_batches(&srcs, &[1, 1], 64, 3).unwrap();
        assert_eq!(batches.len(), 3);
        for batch in &batches {
            assert_eq!(batch.len(), 64);
            let with_3d = batch.iter().filter(|s| s.has_3d_gt()).count();
            assert_eq!(with_3d, 32);
        }
    }

    #[test]
    fn single_source_is_plain_shuffled_batching() {
        let srcs = vec![sources(20, 1).remove(0)];
        let batches = make_batches(&srcs, &[1], 8, 5).unwrap();
        assert_eq!(batches.len(), 2); // 20 / 8, final partial dropped
        assert!(batches.iter().all(|b| b.len() == 8));
    }

    #[test]
    fn epoch_uses_each_sample_exactly_once() {
        let srcs = sources(32, 64);
        let batches = make_batches(&srcs, &[1, 1], 16, 7).unwrap();
        // Scarce source: 32 / 8 = 4 batches, so 4·8 = 32 from each source.
        assert_eq!(batches.len(), 4);
        let mut seen_3d: Vec<String> = Vec::new();
        for batch in &batches {
            for s in batch {
                if s.has_3d_gt() {
                    seen_3d.push(format!("{:?}", s.y2d.coords()[0]));
                }
            }
        }
        // Multiset equality against the full 3d source.
        let mut expected: Vec<String> = srcs[0]
            .iter()
            .map(|s| format!("{:?}", s.y2d.coords()[0]))
            .collect();
        seen_3d.sort();
        expected.sort();
        assert_eq!(seen_3d, expected);
    }

    #[test]
    fn indivisible_ratio_is_rejected() {
        let srcs = sources(16, 16);
        assert!(make_batches(&srcs, &[1, 2], 64, 0).is_err());
        assert!(make_batches(&srcs, &[1, 1], 7, 0).is_err());
    }

    #[test]
    fn batching_is_deterministic_under_seed() {
        let srcs = sources(40, 40);
        let a = make_batches(&srcs, &[1, 1], 8, 11).unwrap();
        let b = make_batches(&srcs, &[1, 1], 8, 11).unwrap();
        let key = |bs: &Vec<Vec<&Sample>>| {
            bs.iter()
                .map(|batch| {
                    batch
                        .iter()
                        .map(|s| format!("{:?}", s.y2d.coords()[0]))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
        let c = make_batches(&srcs, &[1, 1], 8, 12).unwrap();
        assert_ne!(key(&a), key(&c));
    }
}
