//! Bounded real-coded variation operators and tournament selection.

use rand::Rng;

use crate::model::{Genome, GenomeBounds};

/// Simulated binary crossover with distribution index `eta`, each gene
/// swapped with probability one half, children kept inside `bounds`.
pub fn sbx_crossover<R: Rng + ?Sized>(a: &mut Genome, b: &mut Genome, bounds: &GenomeBounds, eta: f64, rng: &mut R) {
    let exponent = 1.0 / (eta + 1.0);
    let spread = |beta: f64, u: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(exponent)
        } else {
            (1.0 / (2.0 - u * alpha)).powf(exponent)
        }
    };
    for i in 0..a.0.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        if (a.0[i] - b.0[i]).abs() <= 1e-14 || hi <= lo {
            continue;
        }
        let (x1, x2) = if a.0[i] < b.0[i] { (a.0[i], b.0[i]) } else { (b.0[i], a.0[i]) };
        let u = rng.gen::<f64>();
        let gap = x2 - x1;
        let c1 = 0.5 * (x1 + x2 - spread(1.0 + 2.0 * (x1 - lo) / gap, u) * gap);
        let c2 = 0.5 * (x1 + x2 + spread(1.0 + 2.0 * (hi - x2) / gap, u) * gap);
        let (c1, c2) = (c1.clamp(lo, hi), c2.clamp(lo, hi));
        if rng.gen::<f64>() <= 0.5 {
            a.0[i] = c2;
            b.0[i] = c1;
        } else {
            a.0[i] = c1;
            b.0[i] = c2;
        }
    }
}

/// Polynomial mutation with distribution index `eta`, each gene mutated
/// with probability `gene_probability`.
pub fn polynomial_mutation<R: Rng + ?Sized>(
    g: &mut Genome,
    bounds: &GenomeBounds,
    eta: f64,
    gene_probability: f64,
    rng: &mut R,
) {
    let exponent = 1.0 / (eta + 1.0);
    for i in 0..g.0.len() {
        if rng.gen::<f64>() > gene_probability {
            continue;
        }
        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
        if hi <= lo {
            continue;
        }
        let x = g.0[i];
        let width = hi - lo;
        let u = rng.gen::<f64>();
        let delta = if u < 0.5 {
            let xy = 1.0 - (x - lo) / width;
            let val = 2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0);
            val.powf(exponent) - 1.0
        } else {
            let xy = 1.0 - (hi - x) / width;
            let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0);
            1.0 - val.powf(exponent)
        };
        g.0[i] = (x + delta * width).clamp(lo, hi);
    }
}

/// Binary tournament: lower rank wins, then larger crowding distance, then
/// the first contestant.
pub fn binary_tournament<R: Rng + ?Sized>(ranks: &[usize], crowding: &[f64], rng: &mut R) -> usize {
    let n = ranks.len();
    let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
    let better = ranks[j] < ranks[i] || (ranks[j] == ranks[i] && crowding[j] > crowding[i]);
    if better {
        j
    } else {
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn operators_respect_bounds() {
        let bounds = GenomeBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let mut a = bounds.random(&mut rng);
            let mut b = bounds.random(&mut rng);
            sbx_crossover(&mut a, &mut b, &bounds, 15.0, &mut rng);
            polynomial_mutation(&mut a, &bounds, 20.0, 1.0, &mut rng);
            assert!(bounds.contains(&a) && bounds.contains(&b));
        }
    }

    #[test]
    fn crossover_of_identical_parents_is_identity() {
        let bounds = GenomeBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = bounds.random(&mut rng);
        let (mut a, mut b) = (g, g);
        sbx_crossover(&mut a, &mut b, &bounds, 15.0, &mut rng);
        assert_eq!((a, b), (g, g));
    }

    #[test]
    fn large_distribution_index_keeps_children_near_parents() {
        let bounds = GenomeBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (pa, pb) = (bounds.random(&mut rng), bounds.random(&mut rng));
        let (mut a, mut b) = (pa, pb);
        sbx_crossover(&mut a, &mut b, &bounds, 1e4, &mut rng);
        for i in 0..a.0.len() {
            let near = |x: f64| (x - pa.0[i]).abs().min((x - pb.0[i]).abs());
            let gap = (pa.0[i] - pb.0[i]).abs();
            assert!(near(a.0[i]) <= 0.01 * gap + 1e-12 && near(b.0[i]) <= 0.01 * gap + 1e-12);
        }
    }

    #[test]
    fn zero_rate_mutation_is_identity() {
        let bounds = GenomeBounds::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = bounds.random(&mut rng);
        let mut m = g;
        polynomial_mutation(&mut m, &bounds, 20.0, 0.0, &mut rng);
        assert_eq!(m, g);
    }

    #[test]
    fn fixed_bound_genes_never_move() {
        let mut bounds = GenomeBounds::default();
        bounds.lower[3] = 0.4;
        bounds.upper[3] = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut g = bounds.random(&mut rng);
        for _ in 0..100 {
            polynomial_mutation(&mut g, &bounds, 20.0, 1.0, &mut rng);
        }
        assert_eq!(g.0[3], 0.4);
    }

    #[test]
    fn tournament_prefers_rank_then_crowding() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ranks = [0, 1];
        let crowd = [0.0, f64::INFINITY];
        let wins = (0..200).filter(|_| binary_tournament(&ranks, &crowd, &mut rng) == 0).count();
        assert!(wins > 100);
        let ranks = [0, 0];
        let crowd = [1.0, 2.0];
        let wins = (0..200).filter(|_| binary_tournament(&ranks, &crowd, &mut rng) == 1).count();
        assert!(wins > 100);
    }
}
