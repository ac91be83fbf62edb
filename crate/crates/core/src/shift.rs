//! Vertex subshifts of finite type with the shift map: the cylinder clopen
//! algebra, the itinerary automaton with its finiteness decision, entropy,
//! and the sparse shifts `S_r`.
//!
//! Points are right-infinite allowed walks on the *trimmed* transition graph
//! (vertices with no outgoing or no incoming allowed edge are removed
//! iteratively, so every remaining vertex lies on a bi-infinite walk). The
//! shift drops the first symbol.
//!
//! # Finiteness criterion
//!
//! The itinerary automaton is the subset-construction determinization of the
//! labelled graph whose nodes are allowed length-m words (m the partition's
//! common cylinder length), whose edges are word overlaps, and whose node
//! labels are partition block indices. Infinite label paths through the
//! automaton are exactly the itineraries realized by points (König's lemma:
//! prefix-consistency in a finitely branching graph yields a witness walk).
//!
//! The set of realized itineraries is finite **iff** no reachable automaton
//! state lying on a directed cycle has two outgoing labels. Sketch: if such a
//! state exists, pumping its cycle before branching yields itineraries
//! `u^k a …` and `u^k b …` with `a ≠ b` for every `k`, and a finite itinerary
//! set would force, by the pigeonhole principle, some itinerary to begin with
//! `u^k` for infinitely many `k`, making it `u^ω` and forcing `a = b`;
//! conversely, when every on-cycle state is deterministic, each run reaches a
//! cycle state within `#states` steps (any longer run repeats a state, and a
//! repeated state lies on a cycle) and is uniquely determined afterwards, so
//! itineraries are in bijection with finitely many paths through the acyclic
//! part. The same dichotomy holds block-wise: on a trimmed graph the verdict
//! FINITE forces every length-m word to have a single label future, which is
//! what lets refined partitions be materialized at cylinder length m.

use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShiftError {
    #[error("alphabet must have between 1 and 36 symbols, got {0}")]
    AlphabetSize(usize),
    #[error("adjacency matrix must be {0}×{0} with 0/1 entries")]
    BadAdjacency(usize),
    #[error("the trimmed shift space is empty")]
    EmptySpace,
    #[error("cylinder words must have length at least 1")]
    ZeroLength,
    #[error("word `{0}` is not an allowed walk of the trimmed graph")]
    WordNotAllowed(String),
    #[error("word `{0}` has length {1}, expected {2}")]
    WordLength(String, usize, usize),
    #[error("symbol `{0}` is not a digit in 0-9a-z below the alphabet size")]
    BadSymbol(char),
    #[error("separation bound must be at least 1")]
    ZeroBound,
    #[error("blocks do not partition the space at length {length}: {reason}")]
    NotAPartition { length: usize, reason: String },
    #[error("cannot lift a length-{from} set down to length {to}")]
    CannotShorten { from: usize, to: usize },
    #[error("resolution {0} is below the set's cylinder length {1}")]
    ResolutionTooCoarse(usize, usize),
}

/// A word over the vertex alphabet.
pub type Word = Vec<u8>;

pub fn symbol_char(s: u8) -> char {
    char::from_digit(s as u32, 36).unwrap_or('?')
}

pub fn word_string(w: &[u8]) -> String {
    w.iter().map(|&s| symbol_char(s)).collect()
}

pub fn parse_word(s: &str, alphabet: usize) -> Result<Word, ShiftError> {
    s.chars()
        .map(|c| match c.to_digit(36) {
            Some(d) if (d as usize) < alphabet => Ok(d as u8),
            _ => Err(ShiftError::BadSymbol(c)),
        })
        .collect()
}

/// A vertex subshift of finite type: right-infinite walks on a 0/1 transition
/// matrix over `alphabet` vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSpace {
    alphabet: usize,
    adjacency: Vec<Vec<bool>>,
    alive: Vec<bool>,
    empty: bool,
}

/// JSON shape: `{"alphabet": A, "adjacency": [[0,1],…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftSpaceDoc {
    pub alphabet: usize,
    pub adjacency: Vec<Vec<u8>>,
}

impl TryFrom<ShiftSpaceDoc> for ShiftSpace {
    type Error = ShiftError;
    fn try_from(doc: ShiftSpaceDoc) -> Result<Self, ShiftError> {
        ShiftSpace::new(doc.alphabet, &doc.adjacency)
    }
}

impl From<&ShiftSpace> for ShiftSpaceDoc {
    fn from(s: &ShiftSpace) -> Self {
        ShiftSpaceDoc {
            alphabet: s.alphabet,
            adjacency: s
                .adjacency
                .iter()
                .map(|row| row.iter().map(|&b| u8::from(b)).collect())
                .collect(),
        }
    }
}

impl Serialize for ShiftSpace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ShiftSpaceDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ShiftSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = ShiftSpaceDoc::deserialize(deserializer)?;
        ShiftSpace::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl ShiftSpace {
    pub fn new(alphabet: usize, adjacency: &[Vec<u8>]) -> Result<Self, ShiftError> {
        if alphabet == 0 || alphabet > 36 {
            return Err(ShiftError::AlphabetSize(alphabet));
        }
        if adjacency.len() != alphabet || adjacency.iter().any(|r| r.len() != alphabet) {
            return Err(ShiftError::BadAdjacency(alphabet));
        }
        let mut adj = vec![vec![false; alphabet]; alphabet];
        for (i, row) in adjacency.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                match e {
                    0 => {}
                    1 => adj[i][j] = true,
                    _ => return Err(ShiftError::BadAdjacency(alphabet)),
                }
            }
        }
        let alive = trim(alphabet, &adj);
        let empty = alive.iter().all(|a| !a);
        Ok(ShiftSpace {
            alphabet,
            adjacency: adj,
            alive,
            empty,
        })
    }

    /// The full shift on `a` symbols.
    pub fn full_shift(a: usize) -> Self {
        ShiftSpace::new(a, &vec![vec![1u8; a]; a]).expect("full shift is well formed")
    }

    /// The sparse shift `S_r`: 0/1 sequences in which every 1 is followed by
    /// at least `r` zeros, presented on `r + 1` vertices where vertex `s`
    /// means "the last 1 was `s` steps ago" (capped at `r`; vertex 0 carries
    /// the symbol 1 itself). Realized symbol streams are exactly the `S_r`
    /// sequences; transient walks that only differ in the capped history are
    /// identified by the symbol reading. `r = 0` gives the full 2-shift.
    pub fn s_r_shift(r: usize) -> Self {
        if r == 0 {
            return Self::full_shift(2);
        }
        let n = r + 1;
        let mut adj = vec![vec![0u8; n]; n];
        for s in 0..r {
            adj[s][s + 1] = 1;
        }
        adj[r][r] = 1;
        adj[r][0] = 1;
        ShiftSpace::new(n, &adj).expect("sparse shift is well formed")
    }

    /// The golden-mean shift: binary sequences without the factor 11.
    pub fn golden_mean() -> Self {
        ShiftSpace::new(2, &[vec![1, 1], vec![1, 0]]).expect("well formed")
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn is_alive(&self, v: usize) -> bool {
        self.alive[v]
    }

    pub fn edge(&self, from: u8, to: u8) -> bool {
        self.alive[from as usize] && self.alive[to as usize] && self.adjacency[from as usize][to as usize]
    }

    fn check_nonempty(&self) -> Result<(), ShiftError> {
        if self.empty {
            Err(ShiftError::EmptySpace)
        } else {
            Ok(())
        }
    }

    /// True when the word is an allowed walk of the trimmed graph.
    pub fn is_allowed(&self, w: &[u8]) -> bool {
        if w.is_empty() || w.iter().any(|&s| s as usize >= self.alphabet || !self.alive[s as usize]) {
            return false;
        }
        w.windows(2).all(|p| self.adjacency[p[0] as usize][p[1] as usize])
    }

    /// All allowed words of length `m`, lexicographically sorted.
    pub fn allowed_words(&self, m: usize) -> Result<Vec<Word>, ShiftError> {
        self.check_nonempty()?;
        if m == 0 {
            return Err(ShiftError::ZeroLength);
        }
        let mut out: Vec<Word> = (0..self.alphabet as u8)
            .filter(|&v| self.alive[v as usize])
            .map(|v| vec![v])
            .collect();
        for _ in 1..m {
            let mut next = Vec::with_capacity(out.len() * 2);
            for w in &out {
                let last = *w.last().unwrap() as usize;
                for v in 0..self.alphabet {
                    if self.alive[v] && self.adjacency[last][v] {
                        let mut nw = w.clone();
                        nw.push(v as u8);
                        next.push(nw);
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Number of allowed words of length `m` (overflow-safe DP).
    pub fn word_count(&self, m: usize) -> u128 {
        self.path_count_from_all(m)
    }

    fn path_count_from_all(&self, m: usize) -> u128 {
        if self.empty || m == 0 {
            return 0;
        }
        let starts: Vec<usize> = (0..self.alphabet).filter(|&v| self.alive[v]).collect();
        self.path_count_from(&starts, m)
    }

    /// Number of allowed words of length `m` whose first vertex lies in
    /// `starts`.
    pub fn path_count_from(&self, starts: &[usize], m: usize) -> u128 {
        if m == 0 {
            return 0;
        }
        let mut counts = vec![0u128; self.alphabet];
        for &v in starts {
            if self.alive[v] {
                counts[v] = 1;
            }
        }
        for _ in 1..m {
            let mut next = vec![0u128; self.alphabet];
            for v in 0..self.alphabet {
                if counts[v] > 0 {
                    for w in 0..self.alphabet {
                        if self.alive[w] && self.adjacency[v][w] {
                            next[w] += counts[v];
                        }
                    }
                }
            }
            counts = next;
        }
        counts.iter().sum()
    }

    /// `σ(U)` presented at the same cylinder length: drop the first symbol
    /// of each word and append every allowed continuation.
    pub fn shift_image(&self, u: &ClopenSet) -> ClopenSet {
        let mut words = BTreeSet::new();
        for w in &u.words {
            let last = w[w.len() - 1] as usize;
            for a in 0..self.alphabet {
                if self.alive[a] && self.adjacency[last][a] {
                    let mut nw = w[1..].to_vec();
                    nw.push(a as u8);
                    words.insert(nw);
                }
            }
        }
        ClopenSet {
            length: u.length,
            words,
        }
    }

    /// `σ^{-1}(U)` as a set of length-(m+1) cylinders: prepend every symbol
    /// that can precede a word of `U`.
    pub fn preimage(&self, u: &ClopenSet) -> ClopenSet {
        let mut words = BTreeSet::new();
        for w in &u.words {
            for a in 0..self.alphabet {
                if self.alive[a] && self.adjacency[a][w[0] as usize] {
                    let mut nw = Word::with_capacity(w.len() + 1);
                    nw.push(a as u8);
                    nw.extend_from_slice(w);
                    words.insert(nw);
                }
            }
        }
        ClopenSet {
            length: u.length + 1,
            words,
        }
    }

    /// True iff no point of `V` returns to `V` within `r` shifts, checked on
    /// words of length `m + r`.
    pub fn separation_check(&self, v: &ClopenSet, r: usize) -> Result<bool, ShiftError> {
        if r == 0 {
            return Err(ShiftError::ZeroBound);
        }
        self.check_nonempty()?;
        let m = v.length;
        for w in self.extensions(&v.words_vec(), m + r)? {
            for k in 1..=r {
                if w.len() >= k + m && v.words.contains(&w[k..k + m]) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// All allowed extensions of the given words to length `target`.
    fn extensions(&self, words: &[Word], target: usize) -> Result<Vec<Word>, ShiftError> {
        let mut out: Vec<Word> = words.to_vec();
        for w in &out {
            if w.len() > target {
                return Err(ShiftError::CannotShorten {
                    from: w.len(),
                    to: target,
                });
            }
        }
        while out.first().is_some_and(|w| w.len() < target) {
            let mut next = Vec::with_capacity(out.len() * 2);
            for w in &out {
                let last = *w.last().unwrap() as usize;
                for v in 0..self.alphabet {
                    if self.alive[v] && self.adjacency[last][v] {
                        let mut nw = w.clone();
                        nw.push(v as u8);
                        next.push(nw);
                    }
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Topological entropy: log of the spectral radius of the trimmed
    /// transition matrix. Exact 0 for permutation graphs, otherwise power
    /// iteration with Rayleigh quotients per strongly connected component
    /// (shifted by the identity for primitivity), tolerance 1e-10.
    pub fn entropy(&self) -> Result<f64, ShiftError> {
        self.check_nonempty()?;
        let verts: Vec<usize> = (0..self.alphabet).filter(|&v| self.alive[v]).collect();
        let is_permutation = verts.iter().all(|&v| {
            (0..self.alphabet)
                .filter(|&w| self.alive[w] && self.adjacency[v][w])
                .count()
                == 1
        });
        if is_permutation {
            return Ok(0.0);
        }
        let sccs = strongly_connected_components(&verts, |v| {
            (0..self.alphabet)
                .filter(|&w| self.alive[w] && self.adjacency[v][w])
                .collect()
        });
        let mut rho: f64 = 0.0;
        for comp in sccs {
            if comp.len() == 1 && !self.adjacency[comp[0]][comp[0]] {
                continue;
            }
            rho = rho.max(self.component_spectral_radius(&comp));
        }
        Ok(rho.max(1.0).ln())
    }

    fn component_spectral_radius(&self, comp: &[usize]) -> f64 {
        let n = comp.len();
        let pos: BTreeMap<usize, usize> = comp.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // B = A|comp + I is primitive for an irreducible component, so the
        // Rayleigh quotient of the power iterates converges geometrically.
        let mut x = vec![1.0f64; n];
        let mut mu_prev = f64::NAN;
        for _ in 0..100_000 {
            let mut y = x.clone();
            for (i, &v) in comp.iter().enumerate() {
                for w in 0..self.alphabet {
                    if self.alive[w] && self.adjacency[v][w] {
                        if let Some(&j) = pos.get(&w) {
                            y[i] += x[j];
                        }
                    }
                }
            }
            let dot_yx: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
            let dot_xx: f64 = x.iter().map(|a| a * a).sum();
            let mu = dot_yx / dot_xx;
            let norm: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            for a in &mut y {
                *a /= norm;
            }
            x = y;
            if (mu - mu_prev).abs() < 1e-14 {
                return mu - 1.0;
            }
            mu_prev = mu;
        }
        mu_prev - 1.0
    }

    /// The overlap graph on allowed length-m words.
    pub(crate) fn block_graph(&self, m: usize) -> Result<BlockGraph, ShiftError> {
        let words = self.allowed_words(m)?;
        let index: BTreeMap<Word, usize> =
            words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
        let mut succs = vec![Vec::new(); words.len()];
        for (i, w) in words.iter().enumerate() {
            let last = *w.last().unwrap() as usize;
            for v in 0..self.alphabet {
                if self.alive[v] && self.adjacency[last][v] {
                    let mut nw = w[1..].to_vec();
                    nw.push(v as u8);
                    if let Some(&j) = index.get(&nw) {
                        succs[i].push(j);
                    }
                }
            }
        }
        Ok(BlockGraph {
            length: m,
            words,
            succs,
        })
    }

    /// Builds the deterministic itinerary automaton for a clopen partition.
    pub fn itinerary_automaton(&self, blocks: &[ClopenSet]) -> Result<ItineraryAutomaton, ShiftError> {
        let labelled: Vec<(usize, &ClopenSet)> = blocks.iter().enumerate().collect();
        if let Some((_, b)) = labelled.iter().find(|(_, b)| b.words.is_empty()) {
            return Err(ShiftError::NotAPartition {
                length: b.length,
                reason: "a block is empty".into(),
            });
        }
        self.automaton_from_labelled(&labelled, true)
    }

    /// As [`Self::itinerary_automaton`] for `{X∖U, U}` with labels 0 and 1;
    /// empty sides are dropped but the 0/1 labelling is kept.
    pub fn binary_itinerary_automaton(&self, u: &ClopenSet) -> Result<ItineraryAutomaton, ShiftError> {
        let comp = u.complement(self)?;
        let mut labelled: Vec<(usize, &ClopenSet)> = Vec::new();
        if !comp.words.is_empty() {
            labelled.push((0, &comp));
        }
        if !u.words.is_empty() {
            labelled.push((1, u));
        }
        self.automaton_from_labelled(&labelled, false)
    }

    fn automaton_from_labelled(
        &self,
        blocks: &[(usize, &ClopenSet)],
        strict: bool,
    ) -> Result<ItineraryAutomaton, ShiftError> {
        self.check_nonempty()?;
        let m = blocks
            .iter()
            .map(|(_, b)| b.length)
            .max()
            .ok_or(ShiftError::NotAPartition {
                length: 0,
                reason: "no blocks".into(),
            })?;
        let graph = self.block_graph(m)?;
        let mut label_of = vec![usize::MAX; graph.words.len()];
        for (label, block) in blocks {
            let lifted = block.lift_to(self, m)?;
            for w in &lifted.words {
                let idx = graph.index_of(w).ok_or_else(|| ShiftError::NotAPartition {
                    length: m,
                    reason: format!("word {} is not allowed", word_string(w)),
                })?;
                if label_of[idx] != usize::MAX {
                    return Err(ShiftError::NotAPartition {
                        length: m,
                        reason: format!("word {} is covered twice", word_string(w)),
                    });
                }
                label_of[idx] = *label;
            }
        }
        if let Some(missing) = label_of.iter().position(|&l| l == usize::MAX) {
            if strict {
                return Err(ShiftError::NotAPartition {
                    length: m,
                    reason: format!("word {} is uncovered", word_string(&graph.words[missing])),
                });
            }
            return Err(ShiftError::NotAPartition {
                length: m,
                reason: "blocks do not cover the space".into(),
            });
        }
        Ok(ItineraryAutomaton::build(graph, label_of))
    }

    /// Decides itinerary finiteness for a clopen partition, enumerating all
    /// itineraries when finite and returning a branching witness otherwise.
    pub fn itinerary_finiteness(&self, blocks: &[ClopenSet]) -> Result<ItineraryReport, ShiftError> {
        Ok(self.itinerary_automaton(blocks)?.finiteness_report())
    }

    /// Binary itineraries with respect to a clopen set (label 1 on the set).
    pub fn binary_itinerary_finiteness(&self, u: &ClopenSet) -> Result<ItineraryReport, ShiftError> {
        Ok(self.binary_itinerary_automaton(u)?.finiteness_report())
    }
}

/// Iteratively removes vertices with no allowed successor or no allowed
/// predecessor.
fn trim(alphabet: usize, adjacency: &[Vec<bool>]) -> Vec<bool> {
    let mut alive = vec![true; alphabet];
    loop {
        let mut changed = false;
        for v in 0..alphabet {
            if !alive[v] {
                continue;
            }
            let has_out = (0..alphabet).any(|w| alive[w] && adjacency[v][w]);
            let has_in = (0..alphabet).any(|w| alive[w] && adjacency[w][v]);
            if !has_out || !has_in {
                alive[v] = false;
                changed = true;
            }
        }
        if !changed {
            return alive;
        }
    }
}

/// Iterative Tarjan over an arbitrary vertex list.
pub(crate) fn strongly_connected_components(
    verts: &[usize],
    succs: impl Fn(usize) -> Vec<usize>,
) -> Vec<Vec<usize>> {
    let max_v = verts.iter().copied().max().map_or(0, |m| m + 1);
    let mut index = vec![usize::MAX; max_v];
    let mut low = vec![usize::MAX; max_v];
    let mut on_stack = vec![false; max_v];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut comps: Vec<Vec<usize>> = Vec::new();

    // Explicit DFS stack: (vertex, successor list, position).
    for &root in verts {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, Vec<usize>, usize)> = vec![(root, succs(root), 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while !call.is_empty() {
            let (v, advance) = {
                let frame = call.last_mut().expect("nonempty");
                let v = frame.0;
                if frame.2 < frame.1.len() {
                    let w = frame.1[frame.2];
                    frame.2 += 1;
                    (v, Some(w))
                } else {
                    (v, None)
                }
            };
            match advance {
                Some(w) => {
                    if index[w] == usize::MAX {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, succs(w), 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                }
                None => {
                    call.pop();
                    if let Some(frame) = call.last() {
                        let p = frame.0;
                        low[p] = low[p].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("stack nonempty");
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
    }
    comps
}

/// Overlap graph on allowed length-m words.
#[derive(Debug, Clone)]
pub(crate) struct BlockGraph {
    pub length: usize,
    pub words: Vec<Word>,
    pub succs: Vec<Vec<usize>>,
}

impl BlockGraph {
    pub fn index_of(&self, w: &[u8]) -> Option<usize> {
        self.words.binary_search_by(|probe| probe.as_slice().cmp(w)).ok()
    }

    /// For each word, whether two label futures diverge from it. Computed as
    /// a backward fixpoint over word pairs.
    pub fn distinguishable(&self, labels: &[usize]) -> Vec<bool> {
        let n = self.words.len();
        let mut diff = vec![false; n * n];
        let mut queue: VecDeque<(usize, usize)> = VecDeque::new();
        for a in 0..n {
            for b in 0..n {
                if labels[a] != labels[b] {
                    diff[a * n + b] = true;
                    queue.push_back((a, b));
                }
            }
        }
        // Predecessor closure: (x, y) is distinguishable when some successor
        // pair already is.
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (x, ss) in self.succs.iter().enumerate() {
            for &s in ss {
                preds[s].push(x);
            }
        }
        while let Some((a, b)) = queue.pop_front() {
            for &x in &preds[a] {
                for &y in &preds[b] {
                    if !diff[x * n + y] {
                        diff[x * n + y] = true;
                        queue.push_back((x, y));
                    }
                }
            }
        }
        (0..n).map(|a| diff[a * n + a]).collect()
    }

    /// The unique eventually periodic label future of a pure word.
    pub fn label_future(&self, labels: &[usize], start: usize) -> (Vec<usize>, Vec<usize>) {
        let mut seen_at: BTreeMap<usize, usize> = BTreeMap::new();
        let mut seq = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&at) = seen_at.get(&cur) {
                let pre = seq[..at].to_vec();
                let per = seq[at..].to_vec();
                return canonical_eventually_periodic(pre, per);
            }
            seen_at.insert(cur, seq.len());
            seq.push(labels[cur]);
            cur = self.succs[cur][0];
        }
    }
}

/// Minimal normal form of `pre · per^ω`: the period is primitive and the
/// preperiod cannot be shortened by rotating the period.
pub fn canonical_eventually_periodic(
    mut pre: Vec<usize>,
    mut per: Vec<usize>,
) -> (Vec<usize>, Vec<usize>) {
    debug_assert!(!per.is_empty());
    for d in 1..=per.len() {
        if per.len().is_multiple_of(d) && per.chunks(d).all(|c| c == &per[..d]) {
            per.truncate(d);
            break;
        }
    }
    while !pre.is_empty() && pre.last() == per.last() {
        pre.pop();
        per.rotate_right(1);
    }
    (pre, per)
}

/// Shift of a canonical eventually periodic sequence, re-canonicalized.
pub fn shift_eventually_periodic(pre: &[usize], per: &[usize]) -> (Vec<usize>, Vec<usize>) {
    if pre.is_empty() {
        let mut p = per.to_vec();
        p.rotate_left(1);
        canonical_eventually_periodic(Vec::new(), p)
    } else {
        canonical_eventually_periodic(pre[1..].to_vec(), per.to_vec())
    }
}

/// Deterministic automaton whose infinite label paths are the realized
/// itineraries.
#[derive(Debug, Clone)]
pub struct ItineraryAutomaton {
    pub block_length: usize,
    block_words: Vec<Word>,
    block_labels: Vec<usize>,
    block_succs: Vec<Vec<usize>>,
    /// Subset states: sorted block indices.
    pub states: Vec<Vec<usize>>,
    /// label → state reached by itineraries beginning with that label.
    pub initial: BTreeMap<usize, usize>,
    /// Per state: label → successor state.
    pub transitions: Vec<BTreeMap<usize, usize>>,
    pub on_cycle: Vec<bool>,
}

impl ItineraryAutomaton {
    fn build(graph: BlockGraph, labels: Vec<usize>) -> Self {
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_label.entry(l).or_default().push(i);
        }
        let mut states: Vec<Vec<usize>> = Vec::new();
        let mut state_index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut initial = BTreeMap::new();
        let mut worklist = VecDeque::new();
        for (&label, subset) in &by_label {
            let id = intern(&mut states, &mut state_index, subset.clone(), &mut worklist);
            initial.insert(label, id);
        }
        let mut transitions: Vec<BTreeMap<usize, usize>> = vec![BTreeMap::new(); states.len()];
        while let Some(id) = worklist.pop_front() {
            let mut next_by_label: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
            for &w in &states[id] {
                for &s in &graph.succs[w] {
                    next_by_label.entry(labels[s]).or_default().insert(s);
                }
            }
            for (label, subset) in next_by_label {
                let subset: Vec<usize> = subset.into_iter().collect();
                let target = intern(&mut states, &mut state_index, subset, &mut worklist);
                if transitions.len() < states.len() {
                    transitions.resize(states.len(), BTreeMap::new());
                }
                transitions[id].insert(label, target);
            }
        }
        transitions.resize(states.len(), BTreeMap::new());
        // Subsets of an essential graph always continue somewhere.
        debug_assert!(transitions.iter().all(|t| !t.is_empty()));
        let on_cycle = mark_on_cycle(states.len(), &transitions);
        ItineraryAutomaton {
            block_length: graph.length,
            block_words: graph.words,
            block_labels: labels,
            block_succs: graph.succs,
            states,
            initial,
            transitions,
            on_cycle,
        }
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// The words of the underlying block graph, with their labels.
    pub fn labelled_blocks(&self) -> impl Iterator<Item = (&Word, usize)> + '_ {
        self.block_words.iter().zip(self.block_labels.iter().copied())
    }

    pub(crate) fn block_view(&self) -> (BlockGraph, &[usize]) {
        (
            BlockGraph {
                length: self.block_length,
                words: self.block_words.clone(),
                succs: self.block_succs.clone(),
            },
            &self.block_labels,
        )
    }

    /// FINITE with the full enumeration iff every state on a cycle has a
    /// single outgoing label; INFINITE with a branching witness otherwise.
    pub fn finiteness_report(&self) -> ItineraryReport {
        for (id, trans) in self.transitions.iter().enumerate() {
            if self.on_cycle[id] && trans.len() >= 2 {
                let mut labels = trans.keys().copied();
                let first = labels.next().unwrap();
                let second = labels.next().unwrap();
                return ItineraryReport::Infinite(BranchingWitness {
                    state_words: self.states[id]
                        .iter()
                        .map(|&w| self.block_words[w].clone())
                        .collect(),
                    labels: (first, second),
                });
            }
        }
        let mut found: BTreeSet<(Vec<usize>, Vec<usize>)> = BTreeSet::new();
        for (&label, &start) in &self.initial {
            // Depth-first over the acyclic part; cycle states continue
            // deterministically.
            let mut stack: Vec<(Vec<usize>, usize)> = vec![(vec![label], start)];
            while let Some((prefix, state)) = stack.pop() {
                if self.on_cycle[state] {
                    let (tail_pre, tail_per) = self.deterministic_tail(state);
                    let mut pre = prefix.clone();
                    pre.extend(tail_pre);
                    found.insert(canonical_eventually_periodic(pre, tail_per));
                } else {
                    for (&l, &next) in &self.transitions[state] {
                        let mut p = prefix.clone();
                        p.push(l);
                        stack.push((p, next));
                    }
                }
            }
        }
        ItineraryReport::Finite(found.into_iter().collect())
    }

    /// Labels along the unique run from an on-cycle state, split at the point
    /// where the state sequence starts repeating. The first label of the
    /// current state is already consumed by the caller.
    fn deterministic_tail(&self, start: usize) -> (Vec<usize>, Vec<usize>) {
        let mut seen_at: BTreeMap<usize, usize> = BTreeMap::new();
        let mut labels = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&at) = seen_at.get(&cur) {
                return (labels[..at].to_vec(), labels[at..].to_vec());
            }
            seen_at.insert(cur, labels.len());
            let (&l, &next) = self.transitions[cur]
                .iter()
                .next()
                .expect("every state has out-degree ≥ 1");
            labels.push(l);
            cur = next;
        }
    }

    /// Re-checks that `pre · per^ω` is realized: the automaton accepts every
    /// prefix and closes a loop while reading the period.
    pub fn realizes(&self, pre: &[usize], per: &[usize]) -> bool {
        if per.is_empty() {
            return false;
        }
        let mut it = pre.iter().chain(per.iter().cycle());
        let first = *it.next().unwrap();
        let Some(&state) = self.initial.get(&first) else {
            return false;
        };
        let mut cur = state;
        let mut consumed = 1usize;
        let mut marks: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        loop {
            if consumed >= pre.len() {
                let phase = (consumed - pre.len()) % per.len();
                if let Some(&seen) = marks.get(&(cur, phase)) {
                    debug_assert!(seen < consumed);
                    return true;
                }
                marks.insert((cur, phase), consumed);
            }
            let Some(&l) = it.next() else { return true };
            match self.transitions[cur].get(&l) {
                Some(&next) => {
                    cur = next;
                    consumed += 1;
                }
                None => return false,
            }
        }
    }

    /// The branching witness re-check used by certificate consumers: the
    /// state must exist, lie on a cycle, and carry both labels.
    pub fn witness_holds(&self, witness: &BranchingWitness) -> bool {
        let subset: Option<Vec<usize>> = witness
            .state_words
            .iter()
            .map(|w| {
                self.block_words
                    .binary_search_by(|probe| probe.as_slice().cmp(w.as_slice()))
                    .ok()
            })
            .collect();
        let Some(mut subset) = subset else { return false };
        subset.sort_unstable();
        let Some(id) = self.states.iter().position(|s| *s == subset) else {
            return false;
        };
        let (a, b) = witness.labels;
        self.on_cycle[id]
            && a != b
            && self.transitions[id].contains_key(&a)
            && self.transitions[id].contains_key(&b)
    }
}

fn intern(
    states: &mut Vec<Vec<usize>>,
    index: &mut BTreeMap<Vec<usize>, usize>,
    subset: Vec<usize>,
    worklist: &mut VecDeque<usize>,
) -> usize {
    if let Some(&id) = index.get(&subset) {
        return id;
    }
    let id = states.len();
    states.push(subset.clone());
    index.insert(subset, id);
    worklist.push_back(id);
    id
}

fn mark_on_cycle(n: usize, transitions: &[BTreeMap<usize, usize>]) -> Vec<bool> {
    let verts: Vec<usize> = (0..n).collect();
    let comps = strongly_connected_components(&verts, |v| transitions[v].values().copied().collect());
    let mut on_cycle = vec![false; n];
    for comp in comps {
        let cyclic = comp.len() > 1
            || transitions[comp[0]].values().any(|&t| t == comp[0]);
        if cyclic {
            for v in comp {
                on_cycle[v] = true;
            }
        }
    }
    on_cycle
}

/// An eventually periodic itinerary in minimal normal form.
pub type Itinerary = (Vec<usize>, Vec<usize>);

/// Witness that itineraries branch along a cycle: the subset state (given by
/// its member words) and two distinct outgoing labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchingWitness {
    pub state_words: Vec<Word>,
    pub labels: (usize, usize),
}

impl Serialize for BranchingWitness {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("BranchingWitness", 2)?;
        let words: Vec<String> = self.state_words.iter().map(|w| word_string(w)).collect();
        st.serialize_field("state_words", &words)?;
        st.serialize_field("labels", &[self.labels.0, self.labels.1])?;
        st.end()
    }
}

/// Itinerary structure of a system with respect to a partition: either the
/// finite list of all realized itineraries, or a branching witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ItineraryReport {
    Finite(Vec<Itinerary>),
    Infinite(BranchingWitness),
}

impl ItineraryReport {
    pub fn is_finite(&self) -> bool {
        matches!(self, ItineraryReport::Finite(_))
    }
}

/// A clopen subset presented as a finite union of cylinders of one length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClopenSet {
    length: usize,
    words: BTreeSet<Word>,
}

/// JSON shape: `{"length": m, "words": ["100", …]}`. Realize against a space
/// with [`ClopenSet::from_doc`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClopenSetDoc {
    pub length: usize,
    pub words: Vec<String>,
}

impl Serialize for ClopenSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ClopenSet", 2)?;
        st.serialize_field("length", &self.length)?;
        let words: Vec<String> = self.words.iter().map(|w| word_string(w)).collect();
        st.serialize_field("words", &words)?;
        st.end()
    }
}

impl ClopenSet {
    pub fn new(sys: &ShiftSpace, length: usize, words: Vec<Word>) -> Result<Self, ShiftError> {
        if length == 0 {
            return Err(ShiftError::ZeroLength);
        }
        let mut set = BTreeSet::new();
        for w in words {
            if w.len() != length {
                return Err(ShiftError::WordLength(word_string(&w), w.len(), length));
            }
            if !sys.is_allowed(&w) {
                return Err(ShiftError::WordNotAllowed(word_string(&w)));
            }
            set.insert(w);
        }
        Ok(ClopenSet { length, words: set })
    }

    pub fn from_doc(sys: &ShiftSpace, doc: &ClopenSetDoc) -> Result<Self, ShiftError> {
        let words = doc
            .words
            .iter()
            .map(|s| parse_word(s, sys.alphabet()))
            .collect::<Result<Vec<_>, _>>()?;
        ClopenSet::new(sys, doc.length, words)
    }

    /// Parses `"len:word,word"` or plain `"word,word"` shorthand used by
    /// tests; the length is taken from the first word when omitted.
    pub fn from_words(sys: &ShiftSpace, words: &[&str]) -> Result<Self, ShiftError> {
        let parsed: Vec<Word> = words
            .iter()
            .map(|s| parse_word(s, sys.alphabet()))
            .collect::<Result<_, _>>()?;
        let length = parsed.first().map_or(1, |w| w.len());
        ClopenSet::new(sys, length, parsed)
    }

    pub fn whole_space(sys: &ShiftSpace) -> Result<Self, ShiftError> {
        Ok(ClopenSet {
            length: 1,
            words: sys.allowed_words(1)?.into_iter().collect(),
        })
    }

    pub fn empty(length: usize) -> Self {
        ClopenSet {
            length,
            words: BTreeSet::new(),
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn words(&self) -> impl Iterator<Item = &Word> + '_ {
        self.words.iter()
    }

    pub fn words_vec(&self) -> Vec<Word> {
        self.words.iter().cloned().collect()
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty_set(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains_word(&self, w: &[u8]) -> bool {
        self.words.contains(w)
    }

    /// Rewrites the set at a finer cylinder length by appending all allowed
    /// continuations.
    pub fn lift_to(&self, sys: &ShiftSpace, target: usize) -> Result<ClopenSet, ShiftError> {
        if target < self.length {
            return Err(ShiftError::CannotShorten {
                from: self.length,
                to: target,
            });
        }
        if target == self.length {
            return Ok(self.clone());
        }
        let lifted = sys.extensions(&self.words_vec(), target)?;
        Ok(ClopenSet {
            length: target,
            words: lifted.into_iter().collect(),
        })
    }

    pub fn complement(&self, sys: &ShiftSpace) -> Result<ClopenSet, ShiftError> {
        let all = sys.allowed_words(self.length)?;
        Ok(ClopenSet {
            length: self.length,
            words: all.into_iter().filter(|w| !self.words.contains(w)).collect(),
        })
    }

    pub fn union(&self, sys: &ShiftSpace, other: &ClopenSet) -> Result<ClopenSet, ShiftError> {
        let m = self.length.max(other.length);
        let a = self.lift_to(sys, m)?;
        let b = other.lift_to(sys, m)?;
        Ok(ClopenSet {
            length: m,
            words: a.words.union(&b.words).cloned().collect(),
        })
    }

    pub fn intersect(&self, sys: &ShiftSpace, other: &ClopenSet) -> Result<ClopenSet, ShiftError> {
        let m = self.length.max(other.length);
        let a = self.lift_to(sys, m)?;
        let b = other.lift_to(sys, m)?;
        Ok(ClopenSet {
            length: m,
            words: a.words.intersection(&b.words).cloned().collect(),
        })
    }

    pub fn is_whole(&self, sys: &ShiftSpace) -> Result<bool, ShiftError> {
        Ok(self.words.len() as u128 == sys.word_count(self.length))
    }

    /// Diameter bound as a dyadic exponent: the set has diameter at most
    /// `2^{-exp}`. A single length-m cylinder gets exponent `m − 1`; a union
    /// is bounded by the first position at which two member words disagree.
    pub fn diameter_exponent(&self) -> u32 {
        let words: Vec<&Word> = self.words.iter().collect();
        let mut first_diff = self.length;
        for i in 0..words.len() {
            for j in (i + 1)..words.len() {
                let pos = words[i]
                    .iter()
                    .zip(words[j].iter())
                    .position(|(a, b)| a != b)
                    .unwrap_or(self.length);
                first_diff = first_diff.min(pos);
            }
        }
        first_diff.saturating_sub(1) as u32
    }
}
