//! Pareto-front extraction over (cost, performance) points.

/// Indices of the nondominated points.
///
/// A point is kept iff no other point has cost <= and performance >= with at
/// least one strict inequality. Exact duplicates keep their first occurrence
/// as the representative.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut kept = Vec::new();
    'outer: for (i, &(cost, perf)) in points.iter().enumerate() {
        for (j, &(other_cost, other_perf)) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let dominates = other_cost <= cost
                && other_perf >= perf
                && (other_cost < cost || other_perf > perf);
            if dominates {
                continue 'outer;
            }
            // Duplicate: only the first occurrence represents the point.
            if j < i && other_cost == cost && other_perf == perf {
                continue 'outer;
            }
        }
        kept.push(i);
    }
    kept
}

/// The nondominated points themselves, sorted by cost.
pub fn pareto_points(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut front: Vec<(f64, f64)> = pareto_front(points)
        .into_iter()
        .map(|i| points[i])
        .collect();
    front.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dominance_example() {
        let pts = [(0.1, 0.6), (0.2, 0.7), (0.3, 0.65)];
        assert_eq!(pareto_front(&pts), vec![0, 1]);
    }

    #[test]
    fn single_point_is_its_own_front() {
        assert_eq!(pareto_front(&[(0.5, 0.5)]), vec![0]);
    }

    #[test]
    fn duplicates_keep_one_representative() {
        let pts = [(0.1, 0.6), (0.1, 0.6), (0.2, 0.5)];
        assert_eq!(pareto_front(&pts), vec![0]);
    }

    #[test]
    fn empty_input_empty_front() {
        assert!(pareto_front(&[]).is_empty());
    }

    proptest! {
        /// No kept point is dominated; every dropped point is dominated or
        /// a duplicate of a kept one.
        #[test]
        fn front_is_exactly_the_nondominated_set(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..40)
        ) {
            let front = pareto_front(&pts);
            let dominated = |i: usize| {
                pts.iter().enumerate().any(|(j, &(c, p))| {
                    j != i
                        && c <= pts[i].0
                        && p >= pts[i].1
                        && (c < pts[i].0 || p > pts[i].1)
                })
            };
            for &i in &front {
                prop_assert!(!dominated(i));
            }
            for i in 0..pts.len() {
                if !front.contains(&i) {
                    let duplicate_of_kept = front
                        .iter()
                        .any(|&k| k < i && pts[k] == pts[i]);
                    prop_assert!(dominated(i) || duplicate_of_kept);
                }
            }
        }
    }
}
