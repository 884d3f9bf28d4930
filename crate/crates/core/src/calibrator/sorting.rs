//! Non-dominated sorting, crowding distance and the population-relative
//! diversity objectives. All objectives are maximised.

use super::CalibratorError;

/// `a` dominates `b`: no worse on every objective, better on at least one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

/// Partitions indices into Pareto fronts, best first.
pub fn fast_nondominated_sort<O: AsRef<[f64]>>(objectives: &[O]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (objectives[i].as_ref(), objectives[j].as_ref());
            if dominates(a, b) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(b, a) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of one front, in input order.
pub fn crowding_distance<O: AsRef<[f64]>>(front: &[O]) -> Vec<f64> {
    let n = front.len();
    let mut distance = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front[0].as_ref().len();
    let mut order: Vec<usize> = (0..n).collect();
    for k in 0..m {
        let value = |i: usize| front[i].as_ref()[k];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        let (lo, hi) = (value(order[0]), value(order[n - 1]));
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            distance[w[1]] += (value(w[2]) - value(w[0])) / range;
        }
    }
    distance
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// For every point, its mean Euclidean distance to all the other points.
pub fn mean_distances<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>, CalibratorError> {
    let n = points.len();
    if n < 2 {
        return Err(CalibratorError::SingletonPopulation);
    }
    let mut sums = vec![0.0; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = euclidean(points[i].as_ref(), points[j].as_ref());
            sums[i] += d;
            sums[j] += d;
        }
    }
    Ok(sums.into_iter().map(|s| s / (n - 1) as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sort_examples() {
        assert_eq!(fast_nondominated_sort(&[[0.5, 0.5, 0.5]]), vec![vec![0]]);
        assert_eq!(fast_nondominated_sort(&[[1.0, 2.0, 0.0], [2.0, 1.0, 0.0]]), vec![vec![0, 1]]);
        let fronts = fast_nondominated_sort(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]);
        assert_eq!(fronts, vec![vec![1], vec![2], vec![0]]);
        assert!(fast_nondominated_sort::<[f64; 3]>(&[]).is_empty());
    }

    #[test]
    fn equal_vectors_share_a_front() {
        assert_eq!(fast_nondominated_sort(&[[1.0, 1.0, 1.0]; 3]), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn crowding_examples() {
        assert!(crowding_distance(&[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]).iter().all(|d| d.is_infinite()));
        let d = crowding_distance(&[[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [1.0, 1.0, 1.0]]);
        assert_eq!(d[1], 3.0);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        let dup = crowding_distance(&[[0.2, 0.2, 0.2]; 4]);
        assert!(dup[1].is_finite() && dup[2].is_finite());
    }

    #[test]
    fn mean_distance_examples() {
        assert_eq!(mean_distances(&[[1.0; 4], [0.0; 4]]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(mean_distances(&[[0.3; 4]; 5]).unwrap(), vec![0.0; 5]);
        assert_eq!(mean_distances(&[[0.3; 4]]), Err(CalibratorError::SingletonPopulation));
    }
}
