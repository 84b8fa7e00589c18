//! Property tests over seeded random instances.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ramsey_trees::averaging::{averaging_dichotomy, verify_dichotomy, AvgInstance, DichotomyParams, Table};
use ramsey_trees::constants::gammas_at;
use ramsey_trees::gen;
use ramsey_trees::levelsel::{Dichotomy, LevelSelection};
use ramsey_trees::prob::{correlation_search, sigma_bound, Event, FiniteProbSpace};
use ramsey_trees::rational::{fmt_rat, parse_rat, pow, rat, Rat};
use ramsey_trees::strong::{count_strong, embed_finite_set, enumerate_strong, CanonicalIso, Shape};
use ramsey_trees::tree::{HomTree, TupleNode, VectorTree};

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rationals_round_trip(n in -10_000i64..10_000, d in 1i64..10_000) {
        let x = rat(n, d);
        prop_assert_eq!(parse_rat(&fmt_rat(&x)).unwrap(), x);
    }

    #[test]
    fn enumeration_matches_count(b in 2u32..=3, height in 1usize..=4, k in 1usize..=3) {
        prop_assume!(k <= height);
        let shape = Shape::new(vec![b], height);
        let v = VectorTree::full(&[b], height).unwrap();
        let all: Vec<_> = enumerate_strong(&shape, k, None).unwrap().map(|w| w.node_sets(&v)).collect();
        let distinct: BTreeSet<_> = all.iter().collect();
        prop_assert_eq!(distinct.len(), all.len());
        prop_assert!(all.iter().all(|s| strong_levels(b, &s[0]).map(|l| l.len()) == Some(k)));
        prop_assert_eq!(count_strong(&shape, k, None).unwrap(), all.len().into());
    }

    #[test]
    fn isomorphism_inverts(seed: u64, b in 2u32..=3, k in 1usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let t = random_strong_in(&mut r, b, &full_levels(b, k + 1), k);
        let s = random_strong_in(&mut r, b, &full_levels(b, k + 1), k);
        let (ht, hs) = (HomTree::from_nodes(b, t.clone()).unwrap(), HomTree::from_nodes(b, s.clone()).unwrap());
        let iso = CanonicalIso::new(&ht, &hs).unwrap();
        for x in &t {
            prop_assert_eq!(&iso.inverse(&iso.forward(x).unwrap()).unwrap(), x);
        }
        let image: BTreeSet<_> = iso.image(&t).unwrap().into_iter().collect();
        prop_assert_eq!(image, s.into_iter().collect::<BTreeSet<_>>());
    }

    #[test]
    fn embedding_is_strong_and_covers(seed: u64, b in 2u32..=3, count in 1usize..=3) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let v = VectorTree::full(&[b], 5).unwrap();
        let levels = full_levels(b, 5);
        let f: Vec<TupleNode> = (0..count)
            .map(|_| {
                let n = r.random_range(0..5);
                TupleNode(vec![levels[n][r.random_range(0..levels[n].len())].clone()])
            })
            .collect();
        let w = embed_finite_set(&v, &f).unwrap();
        let sets = w.node_sets(&v);
        prop_assert!(vector_strong_levels(&[b], &sets).is_some());
        prop_assert!(f.iter().all(|t| sets[0].contains(&t.0[0])));
    }

    #[test]
    fn correlated_pair_meets_the_bound(seed: u64, k in 2u64..=3, e in 4i64..=8, t in 1i64..=3) {
        let (eps, theta) = (rat(e, 8), rat(e * t, 32));
        let n = usize::try_from(sigma_bound(&theta, &eps, k).unwrap()).unwrap().max(k as usize);
        prop_assume!(n <= 24);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let atoms = r.random_range(4..=12);
        let space = FiniteProbSpace::new(vec![rat(1, atoms as i64); atoms]).unwrap();
        let need = (e as usize * atoms).div_ceil(8);
        let events: Vec<Event> = (0..n)
            .map(|_| {
                let mut m: Vec<usize> = rand::seq::index::sample(&mut r, atoms, need).into_vec();
                m.sort_unstable();
                Event::from_atoms(atoms, &m).unwrap()
            })
            .collect();
        let found = correlation_search(&space, &events, k as usize, &theta, &eps, 1 << 22).unwrap();
        let picked: Vec<&Event> = found.indices.iter().map(|&i| &events[i]).collect();
        prop_assert_eq!(space.measure_intersection(&picked), found.measure.clone());
        prop_assert!(found.measure >= pow(&theta, k));
    }

    #[test]
    fn selections_round_trip_through_json(seed: u64, h in 1usize..=3, b_w in 2u32..=3, dens in 1i64..=4, pointer: bool) {
        let d = if pointer {
            gen::pointer_selection(&[2], h, b_w, seed).unwrap()
        } else {
            gen::level_selection(&[2], h, b_w, &rat(dens, 4), seed).unwrap()
        };
        let text = serde_json::to_string(&d.to_json()).unwrap();
        prop_assert_eq!(LevelSelection::from_json(&text).unwrap(), d);
    }

    #[test]
    fn dichotomy_is_exclusive(seed: u64, t in 1i64..=16) {
        let d = gen::level_selection(&[2], 3, 2, &rat(1, 2), seed).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let v = d.index();
        let sel = NodeSel::of(&d);
        let levels = full_levels(2, 3);
        let root = levels[0][0].clone();
        let tops = [levels[1][0].clone(), levels[1][1].clone()];
        let f = ramsey_trees::strong::VectorStrongWitness::from_node_sets(v, &[vec![root.clone(), tops[0].clone(), tops[1].clone()]]).unwrap();
        let members: Vec<_> = sel.get(&TupleNode(vec![root])).iter().cloned().collect();
        prop_assume!(!members.is_empty());
        let w = members[r.random_range(0..members.len())].clone();
        let theta = rat(t, 16);
        let cert = d.is_strongly_correlated(&f, &w, &theta).unwrap();
        match d.dichotomy_check(&f, &w, &theta).unwrap() {
            Dichotomy::Correlated => prop_assert!(cert.holds),
            Dichotomy::NegligibleAt(p) => {
                prop_assert!(!cert.holds);
                prop_assert!(cert.fiber_densities[p as usize] < theta);
            }
        }
    }

    #[test]
    fn gamma_enclosures_are_narrow_and_ordered(a in 1i64..=16, extra in 0i64..=4, rho in 1i64..=64) {
        let alpha = rat(a, 16);
        let beta = (&alpha + rat(extra, 64)).min(rat(1, 1));
        let g = gammas_at(&alpha, &beta, &rat(1, 64 * rho), 256).unwrap();
        for x in [&g.g0, &g.g1, &g.g2] {
            prop_assert!(x.lo() <= x.hi());
            prop_assert!(x.width() <= Rat::new(1.into(), num_bigint::BigInt::from(1) << 128));
        }
        prop_assert!(g.g0.hi() <= g.g1.lo() && g.g1.hi() <= g.g2.lo());
    }

    #[test]
    fn averaging_witness_always_verifies(seed: u64, h in 1usize..=3, w in 1usize..=4) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let sizes: Vec<usize> = (0..h).map(|_| r.random_range(1..=3)).collect();
        let total: usize = sizes.iter().sum();
        let f = Table::from_fn(total, w, |_, _| rat(r.random_range(0..=4), 4));
        let mut start = 0;
        let cells: Vec<Vec<usize>> = sizes.iter().map(|&k| { start += k; (start - k..start).collect() }).collect();
        let inst = AvgInstance::new(cells, f).unwrap();
        let alpha = inst.grand_mean();
        prop_assume!(alpha > rat(0, 1));
        let p = DichotomyParams::new(alpha.clone(), alpha.clone(), pow(&(&alpha / rat(4, 1)), 4) / rat(2, 1));
        let wit = averaging_dichotomy(&inst, &p).unwrap();
        prop_assert!(verify_dichotomy(&inst, &p, &wit.alternative).unwrap().iter().all(|c| c.holds));
    }
}
