mod common;

use std::sync::OnceLock;

use common::{big, t1_trapdoor};
use mdhc::chain::{node_at, node_at_in_order, verify_path_to_root, SecretChain};
use mdhc::numtheory::{mod_inv, mod_pow, select_exponents};
use mdhc::payword::DenominationSchedule;
use mdhc::{ChainParams, NodeIndex, OpCounter, TrapdoorModulus};
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use proptest::prelude::*;

fn toy_modulus() -> &'static TrapdoorModulus {
    static TOY: OnceLock<TrapdoorModulus> = OnceLock::new();
    TOY.get_or_init(|| TrapdoorModulus::generate(24, b"properties").unwrap())
}

fn modulus_for(toy: bool) -> TrapdoorModulus {
    if toy {
        toy_modulus().clone()
    } else {
        t1_trapdoor()
    }
}

proptest! {
    /// Exponent hashes commute, and the trapdoor inverts each of them.
    #[test]
    fn hashes_commute_and_invert(toy in any::<bool>(), raw in any::<u64>(), i in 0usize..6, j in 0usize..6) {
        let modulus = modulus_for(toy);
        let m = modulus.modulus();
        let x = BigUint::from(raw) % m;
        prop_assume!(x > BigUint::one() && x.gcd(m).is_one());
        let exps = select_exponents(6, &modulus);
        let (ci, cj) = (exps.get(i).unwrap(), exps.get(j).unwrap());
        let ij = mod_pow(&mod_pow(&x, cj, m), ci, m);
        let ji = mod_pow(&mod_pow(&x, ci, m), cj, m);
        prop_assert_eq!(&ij, &ji);
        let inverse = mod_inv(ci, modulus.totient()).unwrap();
        prop_assert_eq!(mod_pow(&mod_pow(&x, ci, m), &inverse, m), x);
    }

    /// Any node reached in any dimension order hashes back to the root.
    #[test]
    fn nodes_are_order_independent_and_reach_the_root(
        sizes in prop::collection::vec(0u64..4, 1..4),
        picks in prop::collection::vec(any::<u64>(), 3),
        order_seed in any::<u64>(),
        start in 2u64..1079,
    ) {
        let m = sizes.len();
        let modulus = t1_trapdoor();
        prop_assume!(BigUint::from(start).gcd(modulus.modulus()).is_one());
        let params = ChainParams::new(big(1081), select_exponents(m, &modulus), sizes.clone()).unwrap();
        let chain = SecretChain::new(params.clone(), big(start), None).unwrap();
        let index = NodeIndex(sizes.iter().zip(&picks).map(|(n, p)| p % (n + 1)).collect());
        let mut order: Vec<usize> = (0..m).collect();
        order.rotate_left((order_seed % m as u64) as usize);
        if order_seed & 1 == 1 {
            order.reverse();
        }
        let mut counter = OpCounter::new();
        let a = node_at(&chain, &index, &mut counter).unwrap();
        let b = node_at_in_order(&chain, &index, &order, &mut counter).unwrap();
        prop_assert_eq!(&a, &b);
        let root = node_at(&chain, &params.root_index(), &mut counter).unwrap();
        prop_assert!(verify_path_to_root(&params, &a, &root.value, &mut counter));
    }

    /// Positional denominations: every amount below capacity has exactly
    /// one index and maps back to itself.
    #[test]
    fn denomination_round_trip(size in 1u64..40, dims in 1usize..6, raw in any::<u64>()) {
        let schedule = DenominationSchedule::new(size, dims).unwrap();
        let value = raw % (schedule.capacity() + 1);
        let index = schedule.index_of_value(value).unwrap();
        prop_assert!(index.coords().iter().all(|&k| k <= size));
        prop_assert_eq!(schedule.value_of_index(&index).unwrap(), value);
    }
}
