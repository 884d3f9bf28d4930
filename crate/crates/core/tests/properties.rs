use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shoalcal::arena::canonical_geometry;
use shoalcal::calibrator::{fast_nondominated_sort, polynomial_mutation, sbx_crossover};
use shoalcal::model::{
    bessel_i0, cdf_from_pdf, grid_angle, random_position, sample_direction, von_mises_density, DirectionPdf, Genome,
    GenomeBounds,
};
use shoalcal::selftest::{brute_force_fronts, von_mises_bin_masses};
use shoalcal::stats::{biomimetic_score, hellinger};
use shoalcal::wire::{decode, encode, AckMsg, Envelope, NodeRole, ParamsMsg, Payload, ShutdownMsg};

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("all-zero weights", |raw| {
        let total: f64 = raw.iter().sum();
        (total > 0.0).then(|| raw.into_iter().map(|v| v / total).collect())
    })
}

fn genome() -> impl Strategy<Value = Genome> {
    prop::array::uniform18(-5.0f64..30.0).prop_map(Genome)
}

fn role() -> impl Strategy<Value = NodeRole> {
    prop::sample::select(NodeRole::ALL.to_vec())
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        any::<u32>().prop_map(|batch_index| Payload::Ack(AckMsg { batch_index })),
        (any::<u32>(), prop::array::uniform18(0.0f64..20.0), 0.0f64..=1.0)
            .prop_map(|(round, genome, best_s)| Payload::Params(ParamsMsg { round, genome, best_s })),
        (role(), ".*").prop_map(|(origin, reason)| Payload::Shutdown(ShutdownMsg { origin, reason })),
    ]
}

proptest! {
    #[test]
    fn envelopes_survive_a_round_trip(id in "[a-z0-9_-]{0,12}", t in 0.0f64..1e5, p in payload()) {
        let msg = Envelope::new(id, t, p);
        let bytes = encode(&msg);
        prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        prop_assert_eq!(decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn hellinger_is_a_bounded_symmetric_metric(
        (p, q, r) in (2usize..24).prop_flat_map(|n| (distribution(n), distribution(n), distribution(n)))
    ) {
        let (pq, qp) = (hellinger(&p, &q).unwrap(), hellinger(&q, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        prop_assert!(hellinger(&p, &r).unwrap() <= pq + hellinger(&q, &r).unwrap() + 1e-12);
    }

    #[test]
    fn score_is_bounded_and_monotone(f in prop::array::uniform4(0.0f64..=1.0), i in 0usize..4, bump in 0.0f64..=1.0) {
        let s = biomimetic_score(f);
        prop_assert!((0.0..=1.0).contains(&s));
        let mut higher = f;
        higher[i] = (f[i] + bump).min(1.0);
        prop_assert!(biomimetic_score(higher) >= s);
    }

    #[test]
    fn fast_sort_matches_brute_force(pop in prop::collection::vec(prop::array::uniform3(0u8..5), 0..24)) {
        let objectives: Vec<[f64; 3]> = pop.iter().map(|o| o.map(f64::from)).collect();
        let mut fast = fast_nondominated_sort(&objectives);
        fast.iter_mut().for_each(|f| f.sort_unstable());
        prop_assert_eq!(fast, brute_force_fronts(&objectives));
    }

    #[test]
    fn clamped_genomes_lie_within_bounds(mut g in genome()) {
        let bounds = GenomeBounds::default();
        bounds.clamp(&mut g);
        prop_assert!(bounds.contains(&g));
        prop_assert!(bounds.normalise(&g).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn variation_stays_within_bounds(seed in any::<u64>(), eta in 1.0f64..40.0) {
        let bounds = GenomeBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut b) = (bounds.random(&mut rng), bounds.random(&mut rng));
        sbx_crossover(&mut a, &mut b, &bounds, eta, &mut rng);
        polynomial_mutation(&mut a, &bounds, eta, 1.0, &mut rng);
        prop_assert!(bounds.contains(&a) && bounds.contains(&b));
    }

    #[test]
    fn sampled_headings_are_wrapped(mu in -PI..PI, kappa in 0.0f64..20.0, u in 0.0f64..1.0) {
        let pdf = DirectionPdf::from_values(std::array::from_fn(|k| von_mises_density(grid_angle(k), mu, kappa))).unwrap();
        let theta = sample_direction(&cdf_from_pdf(&pdf), u);
        prop_assert!((-PI..PI).contains(&theta));
    }

    #[test]
    fn random_positions_are_in_the_water(seed in any::<u64>()) {
        let arena = canonical_geometry();
        let p = random_position(&arena, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(arena.contains(p));
        prop_assert!(arena.classify_zone(p).is_ok());
    }
}

// Reference values from scipy.special.i0 and scipy.stats.vonmises.

#[test]
fn bessel_i0_matches_reference() {
    for (x, expected) in [(0.5, 1.0634833707413234), (2.0, 2.279585302336067), (20.0, 43558282.559553534)] {
        assert!((bessel_i0(x) / expected - 1.0).abs() < 1e-12, "I0({x}) = {}", bessel_i0(x));
    }
}

#[test]
fn von_mises_density_matches_reference() {
    assert!((von_mises_density(0.7, 0.2, 3.0) - 0.4536465072781028).abs() < 1e-12);
}

#[test]
fn von_mises_bin_masses_match_reference() {
    let expected = [
        0.00920435215370806,
        0.028319089499684272,
        0.12555406791720108,
        0.3369224904294066,
        0.3369224904294066,
        0.12555406791720114,
        0.028319089499684202,
        0.009204352153708073,
    ];
    for (got, want) in von_mises_bin_masses(0.0, 2.0, 8).iter().zip(expected) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn hellinger_matches_reference() {
    let h = hellinger(&[0.1, 0.2, 0.3, 0.4], &[0.25; 4]).unwrap();
    assert!((h - 0.16789959640267496).abs() < 1e-14);
}
