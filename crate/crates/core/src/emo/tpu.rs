use std::f64::consts::FRAC_PI_2;

use crate::ppo::Vector;

/// Angular bucket of `f` among `b_num` equal slices of the first quadrant.
pub fn buffer_index(f: Vector, b_num: usize) -> usize {
    assert!(b_num > 0, "at least one buffer is required");
    let angle = f[1].max(0.0).atan2(f[0].max(0.0));
    // Slice boundaries are exact multiples of π/(2 B); the small slack keeps
    // points lying on a boundary (such as the diagonal) in the upper slice.
    let idx = (angle / FRAC_PI_2 * b_num as f64 + 1e-9).floor();
    (idx.max(0.0) as usize).min(b_num - 1)
}

/// Performance-buffer population update.
///
/// Items from `population` and then `offspring` are bucketed by the angle of
/// their objective vector; each bucket keeps its `b_size` items with the
/// largest Euclidean norm (earlier items win ties). The result lists buckets
/// in index order, each sorted by descending norm.
pub fn tpu<T>(population: Vec<T>, offspring: Vec<T>, b_num: usize, b_size: usize, objectives: impl Fn(&T) -> Vector) -> Vec<T> {
    let mut buffers: Vec<Vec<(f64, T)>> = (0..b_num).map(|_| Vec::new()).collect();
    for item in population.into_iter().chain(offspring) {
        let f = objectives(&item);
        let norm = f[0].hypot(f[1]);
        buffers[buffer_index(f, b_num)].push((norm, item));
    }
    let mut out = Vec::new();
    for mut buf in buffers {
        // Stable sort keeps insertion order among equal norms.
        buf.sort_by(|a, b| b.0.total_cmp(&a.0));
        out.extend(buf.into_iter().take(b_size).map(|(_, item)| item));
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn axis_cases() {
        assert_eq!(buffer_index([1.0, 0.0], 50), 0);
        assert_eq!(buffer_index([0.0, 1.0], 50), 49);
        assert_eq!(buffer_index([0.0, 0.0], 50), 0);
    }

    #[test]
    fn diagonal_lands_in_middle_bucket() {
        let angle = 1.0f64.atan2(1.0);
        assert!((angle / (std::f64::consts::PI / 100.0) - 25.0).abs() < 1e-12);
        assert_eq!(buffer_index([1.0, 1.0], 50), 25);
        assert_eq!(buffer_index([0.3, 0.3], 50), 25);
        assert_eq!(buffer_index([0.3, 0.29], 50), 24);
    }

    #[test]
    fn smallest_norm_is_evicted() {
        let items = vec![("a", [0.5, 0.01]), ("b", [0.9, 0.01]), ("c", [0.2, 0.001])];
        let out = tpu(items, Vec::new(), 50, 2, |x| x.1);
        let names: Vec<&str> = out.iter().map(|x| x.0).collect();
        assert_eq!(names, vec!["b", "a"]);
    }

    #[test]
    fn offspring_compete_with_parents() {
        let parents = vec![("p0", [0.1, 0.0]), ("p1", [0.0, 0.1])];
        let kids = vec![("k0", [0.5, 0.0]), ("k1", [0.0, 0.05])];
        let out = tpu(parents, kids, 2, 1, |x| x.1);
        let names: Vec<&str> = out.iter().map(|x| x.0).collect();
        assert_eq!(names, vec!["k0", "p1"]);
    }

    proptest! {
        #[test]
        fn index_is_in_range(x in 0.0f64..10.0, y in 0.0f64..10.0, b in 1usize..100) {
            let i = buffer_index([x, y], b);
            prop_assert!(i < b);
        }

        #[test]
        fn buffers_never_exceed_capacity(
            pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..60),
            b in 1usize..10,
            cap in 1usize..4,
        ) {
            let items: Vec<Vector> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let out = tpu(items, Vec::new(), b, cap, |f| *f);
            let mut counts = vec![0; b];
            for f in &out {
                counts[buffer_index(*f, b)] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c <= cap));
        }
    }
}
