//! Identity splits: training faces from one identity set, verification pairs
//! from a disjoint held-out set.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// One rendered instance of one identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FaceRef {
    pub identity: u32,
    pub instance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: FaceRef,
    pub b: FaceRef,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub train_identities: usize,
    pub per_identity: usize,
    pub held_out_identities: usize,
    /// Instances per held-out identity; the first half serves threshold
    /// selection, the second half the test pairs.
    pub held_out_per_identity: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_identities: 20,
            per_identity: 30,
            held_out_identities: 10,
            held_out_per_identity: 10,
            val_pairs: 200,
            test_pairs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<FaceRef>,
    /// Training identities are `0..train_identities`.
    pub train_identities: Vec<u32>,
    pub held_out_identities: Vec<u32>,
    pub val_pairs: Vec<Pair>,
    pub test_pairs: Vec<Pair>,
}

fn pairs(
    rng: &mut impl Rng,
    ids: &[u32],
    instances: std::ops::Range<u32>,
    count: usize,
) -> Vec<Pair> {
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let same = k % 2 == 0;
        let (ia, ib) = if same {
            let id = *ids.choose(rng).expect("identities checked non-empty");
            (id, id)
        } else {
            let two: Vec<u32> = ids.choose_multiple(rng, 2).copied().collect();
            (two[0], two[1])
        };
        let a = rng.gen_range(instances.clone());
        let mut b = rng.gen_range(instances.clone());
        if same {
            while b == a {
                b = rng.gen_range(instances.clone());
            }
        }
        out.push(Pair {
            a: FaceRef {
                identity: ia,
                instance: a,
            },
            b: FaceRef {
                identity: ib,
                instance: b,
            },
            same,
        });
    }
    out.shuffle(rng);
    out
}

pub fn make_split(cfg: &SplitConfig, seed: u64) -> Result<Split> {
    if cfg.train_identities == 0 || cfg.per_identity == 0 {
        return Err(Error::Input("training split needs identities and instances".into()));
    }
    if cfg.held_out_identities < 2 {
        return Err(Error::Input(format!(
            "verification needs at least 2 held-out identities, got {}",
            cfg.held_out_identities
        )));
    }
    if cfg.held_out_per_identity < 4 {
        return Err(Error::Input(format!(
            "verification needs at least 4 instances per held-out identity, got {}",
            cfg.held_out_per_identity
        )));
    }
    let t = cfg.train_identities as u32;
    let train_identities: Vec<u32> = (0..t).collect();
    let held_out_identities: Vec<u32> = (t..t + cfg.held_out_identities as u32).collect();
    let train = train_identities
        .iter()
        .flat_map(|&identity| {
            (0..cfg.per_identity as u32).map(move |instance| FaceRef { identity, instance })
        })
        .collect();
    let half = (cfg.held_out_per_identity / 2) as u32;
    let mut rng = seed::rng(seed, "pairs", &[]);
    let val_pairs = pairs(&mut rng, &held_out_identities, 0..half, cfg.val_pairs);
    let test_pairs = pairs(
        &mut rng,
        &held_out_identities,
        half..cfg.held_out_per_identity as u32,
        cfg.test_pairs,
    );
    Ok(Split {
        train,
        train_identities,
        held_out_identities,
        val_pairs,
        test_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_disjoint_balanced() {
        let cfg = SplitConfig::default();
        let a = make_split(&cfg, 5).unwrap();
        assert_eq!(a, make_split(&cfg, 5).unwrap());
        assert!(a.train_identities.iter().all(|i| !a.held_out_identities.contains(i)));
        for ps in [&a.val_pairs, &a.test_pairs] {
            let same = ps.iter().filter(|p| p.same).count();
            assert!(same.abs_diff(ps.len() - same) <= 1);
            for p in ps {
                assert_eq!(p.same, p.a.identity == p.b.identity);
                assert_ne!(p.a, p.b);
            }
        }
        assert_eq!(a.train.len(), 600);
    }

    #[test]
    fn val_and_test_instances_disjoint() {
        let s = make_split(&SplitConfig::default(), 1).unwrap();
        assert!(s.val_pairs.iter().all(|p| p.a.instance < 5 && p.b.instance < 5));
        assert!(s.test_pairs.iter().all(|p| p.a.instance >= 5 && p.b.instance >= 5));
    }

    #[test]
    fn too_few_identities() {
        let cfg = SplitConfig {
            held_out_identities: 1,
            ..Default::default()
        };
        assert!(make_split(&cfg, 0).is_err());
    }
}
