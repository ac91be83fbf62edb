//! Dynamics of a map on a finite state set (a functional graph): orbits,
//! eventual periodicity, periodic points, the eventual image, hitting times
//! into invariant sets, and constructive invariant neighborhoods.
//!
//! States are dense indices `0..size`; external labels exist only in file
//! formats. Every operation is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("state {state} out of range (size {size})")]
    StateOutOfRange { state: usize, size: usize },
    #[error("map entry {entry} at state {state} out of range (size {size})")]
    MapOutOfRange { state: usize, entry: usize, size: usize },
    #[error("system must have at least one state")]
    Empty,
    #[error("period bound must be at least 1")]
    ZeroPeriodBound,
    #[error("set {{{0}}} is not positively invariant: state {1} maps outside")]
    NotInvariant(String, usize),
    #[error("no iterate of the full space is contained in the given neighborhood")]
    NoAbsorbingIterate,
    #[error("expected {expected} ⊆ {actual}")]
    NotContained { expected: String, actual: String },
    #[error("restriction set is not invariant: state {0} maps outside")]
    RestrictionNotInvariant(usize),
}

/// A map `τ` on the finite state set `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "FiniteSystemDoc", into = "FiniteSystemDoc")]
pub struct FiniteSystem {
    size: usize,
    map: Vec<usize>,
}

/// JSON shape: `{"size": N, "map": [t0, …, tN-1]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FiniteSystemDoc {
    size: usize,
    map: Vec<usize>,
}

impl TryFrom<FiniteSystemDoc> for FiniteSystem {
    type Error = DynamicsError;
    fn try_from(doc: FiniteSystemDoc) -> Result<Self, DynamicsError> {
        if doc.size == 0 || doc.map.len() != doc.size {
            return Err(DynamicsError::Empty);
        }
        FiniteSystem::new(doc.map)
    }
}

impl From<FiniteSystem> for FiniteSystemDoc {
    fn from(sys: FiniteSystem) -> Self {
        FiniteSystemDoc {
            size: sys.size,
            map: sys.map,
        }
    }
}

impl FiniteSystem {
    /// Builds a system from its transition table; `size` is the table length.
    pub fn new(map: Vec<usize>) -> Result<Self, DynamicsError> {
        if map.is_empty() {
            return Err(DynamicsError::Empty);
        }
        let size = map.len();
        for (state, &entry) in map.iter().enumerate() {
            if entry >= size {
                return Err(DynamicsError::MapOutOfRange { state, entry, size });
            }
        }
        Ok(FiniteSystem { size, map })
    }

    pub fn identity(size: usize) -> Result<Self, DynamicsError> {
        Self::new((0..size).collect())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// τ(p).
    pub fn apply(&self, p: usize) -> usize {
        self.map[p]
    }

    fn check_state(&self, p: usize) -> Result<(), DynamicsError> {
        if p < self.size {
            Ok(())
        } else {
            Err(DynamicsError::StateOutOfRange {
                state: p,
                size: self.size,
            })
        }
    }

    /// `[p, τ(p), …, τⁿ(p)]`, length `n + 1`.
    pub fn orbit(&self, p: usize, n: usize) -> Result<Vec<usize>, DynamicsError> {
        self.check_state(p)?;
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = p;
        out.push(cur);
        for _ in 0..n {
            cur = self.map[cur];
            out.push(cur);
        }
        Ok(out)
    }

    /// Minimal `(preperiod, period)`: `τ^{k+s}(p) = τᵏ(p)` with `k` least and
    /// `s` the length of the cycle entered.
    pub fn eventual_period(&self, p: usize) -> Result<(usize, usize), DynamicsError> {
        self.check_state(p)?;
        let mut seen_at = vec![usize::MAX; self.size];
        let mut cur = p;
        let mut step = 0usize;
        while seen_at[cur] == usize::MAX {
            seen_at[cur] = step;
            cur = self.map[cur];
            step += 1;
        }
        let preperiod = seen_at[cur];
        let period = step - seen_at[cur];
        Ok((preperiod, period))
    }

    /// Cycle decomposition of the functional graph; each cycle is listed once,
    /// starting from its smallest state, in order of that representative.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let mut on_cycle = vec![false; self.size];
        let mut cycle_len = vec![0usize; self.size];
        for start in 0..self.size {
            let (k, s) = self.eventual_period(start).expect("state in range");
            let mut cur = start;
            for _ in 0..k {
                cur = self.map[cur];
            }
            if !on_cycle[cur] {
                let mut v = cur;
                loop {
                    on_cycle[v] = true;
                    cycle_len[v] = s;
                    v = self.map[v];
                    if v == cur {
                        break;
                    }
                }
            }
        }
        let mut cycles = Vec::new();
        let mut emitted = vec![false; self.size];
        for v in 0..self.size {
            if on_cycle[v] && !emitted[v] {
                let mut cyc = Vec::with_capacity(cycle_len[v]);
                let mut cur = v;
                loop {
                    emitted[cur] = true;
                    cyc.push(cur);
                    cur = self.map[cur];
                    if cur == v {
                        break;
                    }
                }
                cycles.push(cyc);
            }
        }
        cycles
    }

    /// States lying on a cycle of length ≤ r.
    pub fn periodic_points(&self, r: usize) -> Result<StateSet, DynamicsError> {
        if r == 0 {
            return Err(DynamicsError::ZeroPeriodBound);
        }
        let mut members = Vec::new();
        for cycle in self.cycles() {
            if cycle.len() <= r {
                members.extend(cycle);
            }
        }
        Ok(StateSet::from_vec(members))
    }

    /// The stabilized image `τᵏ(Λ)`: the union of all cycles. τ restricted to
    /// it is a bijection.
    pub fn eventual_image(&self) -> StateSet {
        StateSet::from_vec(self.cycles().into_iter().flatten().collect())
    }

    /// Least `k` with `τᵏ(Λ) ⊆ target`, if any.
    pub fn absorbing_iterate(&self, target: &StateSet) -> Option<usize> {
        let mut image: BTreeSet<usize> = (0..self.size).collect();
        let mut k = 0usize;
        loop {
            if image.iter().all(|&s| target.contains(s)) {
                return Some(k);
            }
            let next: BTreeSet<usize> = image.iter().map(|&s| self.map[s]).collect();
            if next == image {
                return None;
            }
            image = next;
            k += 1;
        }
    }

    /// First-entry analysis into a positively invariant set `P`.
    pub fn hitting_time_bound(&self, p: &StateSet) -> Result<HittingReport, DynamicsError> {
        p.check_range(self.size)?;
        if let Some(bad) = p.iter().find(|&s| !p.contains(self.map[s])) {
            return Err(DynamicsError::NotInvariant(p.to_string(), bad));
        }
        let mut entering = Vec::new();
        let mut never = Vec::new();
        let mut bound = 0usize;
        for state in 0..self.size {
            let mut cur = state;
            let mut time = None;
            // An orbit that ever meets P does so within `size` steps.
            for k in 0..=self.size {
                if p.contains(cur) {
                    time = Some(k);
                    break;
                }
                cur = self.map[cur];
            }
            match time {
                Some(k) => {
                    bound = bound.max(k);
                    entering.push(state);
                }
                None => never.push(state),
            }
        }
        Ok(HittingReport {
            bound,
            entering: StateSet::from_vec(entering),
            never: StateSet::from_vec(never),
        })
    }

    /// `O ∩ τ⁻¹(O) ∩ … ∩ τ^{-(n₀-1)}(O)` where `n₀` is the least iterate with
    /// `τ^{n₀}(Λ) ⊆ O`. The output is positively invariant and sits between
    /// `Y` and `O`.
    pub fn stable_clopen_neighborhood(
        &self,
        y: &StateSet,
        o: &StateSet,
    ) -> Result<StateSet, DynamicsError> {
        y.check_range(self.size)?;
        o.check_range(self.size)?;
        if !y.is_subset(o) {
            return Err(DynamicsError::NotContained {
                expected: y.to_string(),
                actual: o.to_string(),
            });
        }
        if let Some(bad) = y.iter().find(|&s| !y.contains(self.map[s])) {
            return Err(DynamicsError::NotInvariant(y.to_string(), bad));
        }
        let n0 = self
            .absorbing_iterate(o)
            .ok_or(DynamicsError::NoAbsorbingIterate)?;
        let steps = n0.max(1);
        let members: Vec<usize> = (0..self.size)
            .filter(|&s| {
                let mut cur = s;
                for _ in 0..steps {
                    if !o.contains(cur) {
                        return false;
                    }
                    cur = self.map[cur];
                }
                true
            })
            .collect();
        Ok(StateSet::from_vec(members))
    }

    /// τ(S).
    pub fn image_set(&self, s: &StateSet) -> StateSet {
        StateSet::from_vec(s.iter().map(|p| self.map[p]).collect())
    }

    /// τ⁻¹(S).
    pub fn preimage_set(&self, s: &StateSet) -> StateSet {
        StateSet::from_vec((0..self.size).filter(|&p| s.contains(self.map[p])).collect())
    }

    /// The restriction of τ to an invariant set, reindexed to `0..|S|`.
    /// Returns the restricted system and the original index of each new state.
    pub fn restrict(&self, s: &StateSet) -> Result<(FiniteSystem, Vec<usize>), DynamicsError> {
        s.check_range(self.size)?;
        if s.is_empty() {
            return Err(DynamicsError::Empty);
        }
        let old: Vec<usize> = s.iter().collect();
        let mut new_index = vec![usize::MAX; self.size];
        for (i, &o) in old.iter().enumerate() {
            new_index[o] = i;
        }
        let mut map = Vec::with_capacity(old.len());
        for &o in &old {
            let img = self.map[o];
            if new_index[img] == usize::MAX {
                return Err(DynamicsError::RestrictionNotInvariant(o));
            }
            map.push(new_index[img]);
        }
        Ok((FiniteSystem { size: old.len(), map }, old))
    }

    pub fn is_bijective(&self) -> bool {
        let mut hit = vec![false; self.size];
        for &t in &self.map {
            if hit[t] {
                return false;
            }
            hit[t] = true;
        }
        true
    }
}

/// Outcome of [`FiniteSystem::hitting_time_bound`]: the uniform entry bound,
/// the basin `A` of states that enter, and the states that never do.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HittingReport {
    pub bound: usize,
    pub entering: StateSet,
    pub never: StateSet,
}

/// A sorted, duplicate-free set of state indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateSet {
    members: Vec<usize>,
}

impl StateSet {
    pub fn from_vec(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        StateSet { members }
    }

    pub fn full(size: usize) -> Self {
        StateSet {
            members: (0..size).collect(),
        }
    }

    pub fn empty() -> Self {
        StateSet { members: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, state: usize) -> bool {
        self.members.binary_search(&state).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.iter().all(|s| other.contains(s))
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        let mut v = self.members.clone();
        v.extend(other.iter());
        StateSet::from_vec(v)
    }

    pub fn intersect(&self, other: &StateSet) -> StateSet {
        StateSet {
            members: self.iter().filter(|&s| other.contains(s)).collect(),
        }
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        StateSet {
            members: self.iter().filter(|&s| !other.contains(s)).collect(),
        }
    }

    pub fn check_range(&self, size: usize) -> Result<(), DynamicsError> {
        match self.members.last() {
            Some(&m) if m >= size => Err(DynamicsError::StateOutOfRange { state: m, size }),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for StateSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let items: Vec<String> = self.members.iter().map(|m| m.to_string()).collect();
        write!(f, "{}", items.join(","))
    }
}

impl FromIterator<usize> for StateSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        StateSet::from_vec(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(map: &[usize]) -> FiniteSystem {
        FiniteSystem::new(map.to_vec()).unwrap()
    }

    fn set(members: &[usize]) -> StateSet {
        StateSet::from_vec(members.to_vec())
    }

    #[test]
    fn orbit_examples() {
        assert_eq!(sys(&[1, 2, 1, 0]).orbit(3, 4).unwrap(), vec![3, 0, 1, 2, 1]);
        assert_eq!(
            FiniteSystem::identity(4).unwrap().orbit(0, 3).unwrap(),
            vec![0, 0, 0, 0]
        );
        assert_eq!(sys(&[0]).orbit(0, 2).unwrap(), vec![0, 0, 0]);
        assert!(sys(&[0]).orbit(3, 1).is_err());
    }

    #[test]
    fn eventual_period_examples() {
        // Orbit of 3: 3,0,1,2,1,2,… — cycle {1,2} entered at index 2.
        assert_eq!(sys(&[1, 2, 1, 0]).eventual_period(3).unwrap(), (2, 2));
        assert_eq!(sys(&[0, 1]).eventual_period(0).unwrap(), (0, 1));
        assert_eq!(sys(&[1, 2, 0]).eventual_period(0).unwrap(), (0, 3));
    }

    #[test]
    fn eventual_period_direct_iteration_invariant() {
        let s = sys(&[1, 2, 1, 0, 2, 4]);
        for p in 0..s.size() {
            let (k, per) = s.eventual_period(p).unwrap();
            let orb = s.orbit(p, k + 2 * per).unwrap();
            assert_eq!(orb[k], orb[k + per]);
            // No smaller period for the cycle entered.
            for smaller in 1..per {
                assert_ne!(orb[k], orb[k + smaller]);
            }
        }
    }

    #[test]
    fn periodic_points_examples() {
        let s = sys(&[1, 2, 0, 0]);
        assert_eq!(s.periodic_points(2).unwrap(), set(&[]));
        assert_eq!(s.periodic_points(3).unwrap(), set(&[0, 1, 2]));
        assert_eq!(
            FiniteSystem::identity(4).unwrap().periodic_points(1).unwrap(),
            set(&[0, 1, 2, 3])
        );
        assert_eq!(sys(&[1, 0, 2]).periodic_points(2).unwrap(), set(&[0, 1, 2]));
        assert!(s.periodic_points(0).is_err());
    }

    #[test]
    fn periodic_points_invariant_and_monotone() {
        let s = sys(&[1, 2, 1, 0, 4, 0]);
        let mut prev = StateSet::empty();
        for r in 1..=6 {
            let pr = s.periodic_points(r).unwrap();
            assert!(prev.is_subset(&pr), "monotone in r");
            assert!(s.image_set(&pr).is_subset(&pr), "τ-invariant");
            prev = pr;
        }
    }

    #[test]
    fn eventual_image_examples() {
        assert_eq!(sys(&[1, 2, 1, 0]).eventual_image(), set(&[1, 2]));
        assert_eq!(sys(&[1, 2, 0]).eventual_image(), set(&[0, 1, 2]));
        assert_eq!(sys(&[0, 0, 0]).eventual_image(), set(&[0]));
    }

    #[test]
    fn eventual_image_iterated_oracle() {
        // Independent oracle: iterate full-image sets until they stabilize.
        let cases: Vec<Vec<usize>> = vec![
            vec![1, 2, 1, 0],
            vec![0, 0, 0],
            vec![1, 0, 3, 2],
            vec![2, 2, 4, 4, 2],
        ];
        for map in cases {
            let s = sys(&map);
            let mut image = StateSet::full(s.size());
            loop {
                let next = s.image_set(&image);
                if next == image {
                    break;
                }
                image = next;
            }
            assert_eq!(s.eventual_image(), image, "map {map:?}");
            // τ restricted to the eventual image is a bijection.
            let (restr, _) = s.restrict(&image).unwrap();
            assert!(restr.is_bijective());
        }
    }

    #[test]
    fn hitting_time_examples() {
        let s = sys(&[1, 2, 2, 0]);
        let rep = s.hitting_time_bound(&set(&[2])).unwrap();
        assert_eq!(rep.bound, 3);
        assert_eq!(rep.entering, StateSet::full(4));
        assert_eq!(rep.never, StateSet::empty());
        // Entry times 2,1,0,3 and A = τ^{-n₀}(P).
        let mut pre = set(&[2]);
        for _ in 0..rep.bound {
            pre = s.preimage_set(&pre);
        }
        assert_eq!(pre, rep.entering);

        let all = StateSet::full(4);
        assert_eq!(s.hitting_time_bound(&all).unwrap().bound, 0);
    }

    #[test]
    fn hitting_time_two_cycles() {
        // Cycles {0,1} and {2,3}; 4 feeds the first, 5 feeds the second.
        let s = sys(&[1, 0, 3, 2, 0, 3]);
        let rep = s.hitting_time_bound(&set(&[0, 1])).unwrap();
        assert_eq!(rep.entering, set(&[0, 1, 4]));
        assert_eq!(rep.never, set(&[2, 3, 5]));
        // Reachability oracle: states whose long orbit meets P.
        for p in 0..s.size() {
            let orbit = s.orbit(p, s.size()).unwrap();
            let reaches = orbit.iter().any(|&q| q == 0 || q == 1);
            assert_eq!(rep.entering.contains(p), reaches);
        }
    }

    #[test]
    fn hitting_time_requires_invariance() {
        let s = sys(&[1, 2, 2, 0]);
        assert!(matches!(
            s.hitting_time_bound(&set(&[0])),
            Err(DynamicsError::NotInvariant(_, 0))
        ));
    }

    #[test]
    fn stable_neighborhood_examples() {
        let s = sys(&[1, 2, 1, 0]);
        let y = set(&[1, 2]);
        let o1 = set(&[0, 1, 2]);
        let got = s.stable_clopen_neighborhood(&y, &o1).unwrap();
        assert_eq!(got, set(&[0, 1, 2]));
        assert!(s.image_set(&got).is_subset(&got));

        let full = StateSet::full(4);
        assert_eq!(s.stable_clopen_neighborhood(&y, &full).unwrap(), full);

        let o2 = set(&[1, 2]);
        let got = s.stable_clopen_neighborhood(&y, &o2).unwrap();
        assert_eq!(got, set(&[1, 2]));
    }

    #[test]
    fn stable_neighborhood_requires_absorption() {
        // Eventual image {0,1} ⊄ O = {0}.
        let s = sys(&[1, 0, 0]);
        let err = s.stable_clopen_neighborhood(&set(&[]), &set(&[0]));
        // Y = ∅ is invariant and contained in O, so the failure is absorption.
        assert!(matches!(err, Err(DynamicsError::NoAbsorbingIterate)));
    }

    #[test]
    fn restrict_rejects_noninvariant() {
        let s = sys(&[1, 2, 1, 0]);
        assert!(s.restrict(&set(&[0, 1])).is_err());
        let (r, back) = s.restrict(&set(&[1, 2])).unwrap();
        assert_eq!(back, vec![1, 2]);
        assert_eq!(r.map(), &[1, 0]);
    }

    #[test]
    fn serde_roundtrip_and_validation() {
        let s = sys(&[1, 2, 1, 0]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"size":4,"map":[1,2,1,0]}"#);
        let back: FiniteSystem = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<FiniteSystem>(r#"{"size":2,"map":[0,5]}"#).is_err());
        assert!(serde_json::from_str::<FiniteSystem>(r#"{"size":3,"map":[0]}"#).is_err());
    }
}
