use super::EmoError;
use crate::ppo::Vector;

/// Maximization Pareto dominance: `a` is no worse everywhere and better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated points, keeping the first of exact duplicates.
pub fn non_dominated_indices(points: &[Vector]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !points.iter().enumerate().any(|(j, q)| {
                dominates(q, &points[i]) || (j < i && q == &points[i])
            })
        })
        .collect()
}

/// Exact two-objective hypervolume of `points` relative to `reference`.
///
/// Every point must weakly dominate the reference; points on the reference
/// boundary contribute nothing.
pub fn hypervolume2(points: &[Vector], reference: Vector) -> Result<f64, EmoError> {
    if let Some(p) = points
        .iter()
        .find(|p| !(p[0] >= reference[0] && p[1] >= reference[1]))
    {
        return Err(EmoError::BadReference {
            point: *p,
            reference,
        });
    }
    let mut sorted: Vec<Vector> = points.to_vec();
    sorted.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut top = reference[1];
    for p in sorted {
        if p[1] > top {
            area += (p[0] - reference[0]) * (p[1] - top);
            top = p[1];
        }
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry<P> {
    pub objectives: Vector,
    pub payload: P,
}

/// Unbounded set of mutually non-dominated entries.
#[derive(Debug, Clone)]
pub struct ParetoArchive<P> {
    entries: Vec<ArchiveEntry<P>>,
    reference: Vector,
}

impl<P> ParetoArchive<P> {
    pub fn new(reference: Vector) -> Self {
        Self {
            entries: Vec::new(),
            reference,
        }
    }

    pub fn entries(&self) -> &[ArchiveEntry<P>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ArchiveEntry<P>> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn reference(&self) -> Vector {
        self.reference
    }

    pub fn points(&self) -> Vec<Vector> {
        self.entries.iter().map(|e| e.objectives).collect()
    }

    /// Inserts one candidate. Returns whether it was kept; dominated
    /// incumbents are evicted, an exact duplicate keeps the incumbent.
    pub fn insert(&mut self, objectives: Vector, payload: P) -> bool {
        if objectives.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self
            .entries
            .iter()
            .any(|e| e.objectives == objectives || dominates(&e.objectives, &objectives))
        {
            return false;
        }
        self.entries.retain(|e| !dominates(&objectives, &e.objectives));
        self.entries.push(ArchiveEntry { objectives, payload });
        true
    }

    /// Inserts candidates in order; returns how many were kept at the time
    /// of insertion.
    pub fn update(&mut self, candidates: impl IntoIterator<Item = (Vector, P)>) -> usize {
        candidates
            .into_iter()
            .map(|(f, p)| self.insert(f, p) as usize)
            .sum()
    }

    pub fn hypervolume(&self) -> Result<f64, EmoError> {
        hypervolume2(&self.points(), self.reference)
    }

    pub fn is_mutually_non_dominated(&self) -> bool {
        self.entries.iter().all(|a| {
            self.entries
                .iter()
                .all(|b| !dominates(&a.objectives, &b.objectives))
        })
    }
}
