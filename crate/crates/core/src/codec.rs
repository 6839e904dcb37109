//! Polar transform encoding with successive-cancellation (SC) and
//! successive-cancellation list (SCL) decoding.
//!
//! Indexing is natural (no bit reversal): `x = u · F^{⊗n}` with
//! `F = [[1,0],[1,1]]`, so subchannel `i` is position `i` of `u`. The first
//! half of `u` is decoded from check-node (min-sum) LLRs, the second half from
//! variable-node LLRs given the re-encoded first half.
//!
//! LLRs use the natural log with positive values favouring bit 0. Path
//! metrics accumulate `|llr|` whenever a decision disagrees with the sign of
//! the leaf LLR; combined with min-sum check nodes this makes the metric of a
//! complete path equal to the correlation discrepancy of its codeword, so a
//! list holding every path is an exact ML decoder.

use crate::error::{Error, Result};

/// A polar code: the frozen mask over `N = 2^n` subchannels (`true` = frozen).
///
/// The mask doubles as the MDP state, its support being the frozen set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Construction {
    frozen: Vec<bool>,
}

impl Construction {
    pub fn new(frozen: Vec<bool>) -> Result<Self> {
        if frozen.is_empty() || !frozen.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(frozen.len()));
        }
        Ok(Self { frozen })
    }

    /// Mask with no frozen subchannel (`K = N`).
    pub fn all_info(n: usize) -> Result<Self> {
        Self::new(vec![false; n])
    }

    /// Mask with every subchannel frozen (`K = 0`).
    pub fn all_frozen(n: usize) -> Result<Self> {
        Self::new(vec![true; n])
    }

    pub fn from_frozen_set(n: usize, frozen: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &i in frozen {
            if i >= n {
                return Err(Error::InvalidConstruction(format!(
                    "frozen index {i} out of range for N = {n}"
                )));
            }
            mask[i] = true;
        }
        Self::new(mask)
    }

    pub fn from_info_set(n: usize, info: &[usize]) -> Result<Self> {
        let mut mask = vec![true; n];
        for &i in info {
            if i >= n {
                return Err(Error::InvalidConstruction(format!(
                    "information index {i} out of range for N = {n}"
                )));
            }
            mask[i] = false;
        }
        Self::new(mask)
    }

    /// Build from 0/1 flags.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidConstruction(format!("mask entry {b} is not binary")));
        }
        Self::new(bits.iter().map(|&b| b == 1).collect())
    }

    pub fn n(&self) -> usize {
        self.frozen.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    /// Information length `K = N - |F|`.
    pub fn info_len(&self) -> usize {
        self.n() - self.frozen_count()
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.frozen[i]).collect()
    }

    pub fn info_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.frozen[i]).collect()
    }

    /// Mask as 0.0/1.0 reals, the network input encoding.
    pub fn as_input(&self) -> Vec<f64> {
        self.frozen.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect()
    }

    /// Copy with subchannel `i` frozen.
    pub fn with_frozen(&self, i: usize) -> Self {
        let mut frozen = self.frozen.clone();
        frozen[i] = true;
        Self { frozen }
    }

    pub(crate) fn set(&mut self, i: usize, frozen: bool) {
        self.frozen[i] = frozen;
    }

    /// Mask packed into 64-bit words, bit `i % 64` of word `i / 64` = entry `i`.
    pub fn packed(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.n().div_ceil(64)];
        for (i, &f) in self.frozen.iter().enumerate() {
            if f {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        words
    }

    /// Hex rendering of the mask read as an integer whose bit `i` is entry `i`,
    /// most significant digit first, `ceil(N/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = self.n().div_ceil(4);
        (0..digits)
            .rev()
            .map(|d| {
                let nibble = (0..4)
                    .filter(|b| {
                        let i = 4 * d + b;
                        i < self.n() && self.frozen[i]
                    })
                    .fold(0u32, |acc, b| acc | (1 << b));
                char::from_digit(nibble, 16).expect("nibble < 16")
            })
            .collect()
    }

    pub fn from_hex(hex: &str, n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let digits: Vec<u32> = hex
            .trim()
            .chars()
            .map(|c| {
                c.to_digit(16)
                    .ok_or_else(|| Error::Parse(format!("invalid hex digit {c:?} in mask")))
            })
            .collect::<Result<_>>()?;
        if digits.len() != n.div_ceil(4) {
            return Err(Error::Parse(format!(
                "mask has {} hex digits, expected {} for N = {n}",
                digits.len(),
                n.div_ceil(4)
            )));
        }
        let mut frozen = vec![false; n];
        for (d, nibble) in digits.iter().rev().enumerate() {
            for b in 0..4 {
                if nibble & (1 << b) != 0 {
                    let i = 4 * d + b;
                    if i >= n {
                        return Err(Error::Parse(format!("mask bit {i} beyond N = {n}")));
                    }
                    frozen[i] = true;
                }
            }
        }
        Self::new(frozen)
    }
}

/// Channel log-likelihood ratios for one received word.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrWord(Vec<f64>);

impl LlrWord {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite LLR {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One surviving SCL path.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub info: Vec<u8>,
    pub metric: f64,
}

/// Surviving paths of an SCL decode, ascending by path metric.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateList {
    entries: Vec<Candidate>,
}

impl CandidateList {
    /// Sorts the entries (stable) by metric.
    pub fn new(mut entries: Vec<Candidate>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyList);
        }
        entries.sort_by(|a, b| a.metric.total_cmp(&b.metric));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_power_of_two(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    Ok(())
}

/// `u · F^{⊗n}` over GF(2). The transform is its own inverse.
pub fn polar_transform(u: &[u8]) -> Result<Vec<u8>> {
    check_power_of_two(u.len())?;
    let mut x = u.to_vec();
    polar_transform_in_place(&mut x);
    Ok(x)
}

pub(crate) fn polar_transform_in_place(x: &mut [u8]) {
    let n = x.len();
    let mut half = 1;
    while half < n {
        for block in x.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi.iter()) {
                *a ^= *b;
            }
        }
        half *= 2;
    }
}

/// Places `info` on the unfrozen positions (ascending index), zeros on the
/// frozen ones, and transforms.
pub fn encode(info: &[u8], c: &Construction) -> Result<Vec<u8>> {
    let k = c.info_len();
    if info.len() != k {
        return Err(Error::LengthMismatch { expected: k, got: info.len() });
    }
    let mut u = vec![0u8; c.n()];
    let mut bits = info.iter();
    for (i, slot) in u.iter_mut().enumerate() {
        if !c.is_frozen(i) {
            *slot = *bits.next().expect("info length checked") & 1;
        }
    }
    polar_transform_in_place(&mut u);
    Ok(u)
}

#[inline]
fn check_node(a: f64, b: f64) -> f64 {
    let m = a.abs().min(b.abs());
    if (a < 0.0) != (b < 0.0) {
        -m
    } else {
        m
    }
}

#[inline]
fn bit_node(a: f64, b: f64, upper_bit: u8) -> f64 {
    if upper_bit == 0 {
        b + a
    } else {
        b - a
    }
}

/// Plain recursive SC decoder; returns the decoded information word.
pub fn sc_decode(llr: &LlrWord, c: &Construction) -> Result<Vec<u8>> {
    if llr.len() != c.n() {
        return Err(Error::LengthMismatch { expected: c.n(), got: llr.len() });
    }
    let mut u = vec![0u8; c.n()];
    sc_node(llr.values(), c.mask(), &mut u);
    Ok(c.info_indices().into_iter().map(|i| u[i]).collect())
}

fn sc_node(llr: &[f64], frozen: &[bool], u: &mut [u8]) -> Vec<u8> {
    if llr.len() == 1 {
        let bit = if frozen[0] || llr[0] >= 0.0 { 0 } else { 1 };
        u[0] = bit;
        return vec![bit];
    }
    let half = llr.len() / 2;
    let (u_lo, u_hi) = u.split_at_mut(half);
    let upper: Vec<f64> = (0..half).map(|i| check_node(llr[i], llr[i + half])).collect();
    let v = sc_node(&upper, &frozen[..half], u_lo);
    let lower: Vec<f64> = (0..half).map(|i| bit_node(llr[i], llr[i + half], v[i])).collect();
    let w = sc_node(&lower, &frozen[half..], u_hi);
    let mut x: Vec<u8> = v.iter().zip(&w).map(|(a, b)| a ^ b).collect();
    x.extend_from_slice(&w);
    x
}

/// Snapshot of one path handed to an [`SclDecoder`] observer: decided `u`
/// prefix and its metric.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSnapshot {
    pub prefix: Vec<u8>,
    pub metric: f64,
}

/// Reusable SCL decoder for a fixed construction and list size.
///
/// Path states live in an arena of `2L` slots; a fork copies the parent slot.
/// Each slot holds the LLR tree (layer `l` at offset `2^l`, size `2^l`), the
/// re-encoded left-sibling codewords and the decided `u` bits.
pub struct SclDecoder {
    construction: Construction,
    info: Vec<usize>,
    n: usize,
    stages: usize,
    list_size: usize,
    alpha: Vec<f64>,
    left: Vec<u8>,
    u: Vec<u8>,
    metric: Vec<f64>,
    active: Vec<usize>,
    free: Vec<usize>,
    scratch_a: Vec<u8>,
    scratch_b: Vec<u8>,
    leaf: Vec<f64>,
    candidates: Vec<(f64, usize, u8)>,
    survives: Vec<bool>,
    claimed: Vec<bool>,
    next: Vec<(usize, u8, f64)>,
}

/// Per-word outcome of both output-selection rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Judgement {
    /// Smallest-metric path equals the transmitted word.
    pub pm_correct: bool,
    /// Transmitted word is among the survivors.
    pub genie_correct: bool,
}

impl SclDecoder {
    pub fn new(construction: &Construction, list_size: usize) -> Result<Self> {
        if list_size == 0 {
            return Err(Error::InvalidParameter("list size must be at least 1".into()));
        }
        let n = construction.n();
        let slots = 2 * list_size;
        Ok(Self {
            construction: construction.clone(),
            info: construction.info_indices(),
            n,
            stages: n.trailing_zeros() as usize,
            list_size,
            alpha: vec![0.0; slots * 2 * n],
            left: vec![0; slots * n],
            u: vec![0; slots * n],
            metric: vec![0.0; slots],
            active: Vec::with_capacity(slots),
            free: Vec::with_capacity(slots),
            scratch_a: vec![0; n],
            scratch_b: vec![0; n],
            leaf: Vec::with_capacity(slots),
            candidates: Vec::with_capacity(2 * slots),
            survives: Vec::with_capacity(slots),
            claimed: vec![false; slots],
            next: Vec::with_capacity(list_size),
        })
    }

    pub fn list_size(&self) -> usize {
        self.list_size
    }

    pub fn decode(&mut self, llr: &[f64]) -> Result<CandidateList> {
        self.run(llr, None)?;
        Ok(self.candidate_list())
    }

    /// Decode and score both selection rules against `truth` without
    /// materialising the list.
    pub fn judge(&mut self, llr: &[f64], truth: &[u8]) -> Result<Judgement> {
        if truth.len() != self.info.len() {
            return Err(Error::LengthMismatch { expected: self.info.len(), got: truth.len() });
        }
        self.run(llr, None)?;
        let n = self.n;
        let matches = |slot: usize| {
            self.info.iter().zip(truth).all(|(&i, &t)| self.u[slot * n + i] == t)
        };
        let mut best = self.active[0];
        for &slot in &self.active[1..] {
            if self.metric[slot] < self.metric[best] {
                best = slot;
            }
        }
        let pm_correct = matches(best);
        let genie_correct = pm_correct || self.active.iter().any(|&s| matches(s));
        Ok(Judgement { pm_correct, genie_correct })
    }

    /// Decode, calling `observer(phase, survivors)` after every decision
    /// stage with the surviving paths in list order.
    pub fn decode_observed(
        &mut self,
        llr: &[f64],
        observer: &mut dyn FnMut(usize, &[PathSnapshot]),
    ) -> Result<CandidateList> {
        self.run(llr, Some(observer))?;
        Ok(self.candidate_list())
    }

    fn candidate_list(&self) -> CandidateList {
        let n = self.n;
        let entries = self
            .active
            .iter()
            .map(|&s| Candidate {
                info: self.info.iter().map(|&i| self.u[s * n + i]).collect(),
                metric: self.metric[s],
            })
            .collect();
        CandidateList::new(entries).expect("at least one path survives")
    }

    fn run(
        &mut self,
        llr: &[f64],
        mut observer: Option<&mut dyn FnMut(usize, &[PathSnapshot])>,
    ) -> Result<()> {
        let n = self.n;
        if llr.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: llr.len() });
        }
        self.active.clear();
        self.free.clear();
        self.free.extend((1..2 * self.list_size).rev());
        self.active.push(0);
        self.metric[0] = 0.0;
        self.alpha[n..2 * n].copy_from_slice(llr);

        for phase in 0..n {
            self.leaf.clear();
            for idx in 0..self.active.len() {
                let slot = self.active[idx];
                let l = self.leaf_llr(slot, phase);
                self.leaf.push(l);
            }

            if self.construction.is_frozen(phase) {
                for idx in 0..self.active.len() {
                    let slot = self.active[idx];
                    let l = self.leaf[idx];
                    if l < 0.0 {
                        self.metric[slot] -= l;
                    }
                    self.decide(slot, phase, 0);
                }
            } else {
                self.fork(phase);
            }

            if let Some(obs) = observer.as_mut() {
                let snapshot: Vec<PathSnapshot> = self
                    .active
                    .iter()
                    .map(|&s| PathSnapshot {
                        prefix: self.u[s * n..s * n + phase + 1].to_vec(),
                        metric: self.metric[s],
                    })
                    .collect();
                obs(phase, &snapshot);
            }
        }
        // Frozen decisions after the last fork may reorder the metrics.
        let metric = &self.metric;
        self.active.sort_by(|&a, &b| metric[a].total_cmp(&metric[b]));
        Ok(())
    }

    /// Spawn both extensions of every path and keep the `L` best.
    fn fork(&mut self, phase: usize) {
        self.candidates.clear();
        for (pos, &l) in self.leaf.iter().enumerate() {
            let m = self.metric[self.active[pos]];
            self.candidates.push((if l < 0.0 { m - l } else { m }, pos, 0));
            self.candidates.push((if l > 0.0 { m + l } else { m }, pos, 1));
        }
        // Stable: ties keep (parent position, bit) order.
        self.candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.candidates.truncate(self.list_size);

        self.survives.clear();
        self.survives.resize(self.active.len(), false);
        for &(_, pos, _) in &self.candidates {
            self.survives[pos] = true;
        }
        for pos in 0..self.active.len() {
            if !self.survives[pos] {
                self.free.push(self.active[pos]);
            }
        }
        self.claimed.iter_mut().for_each(|c| *c = false);
        self.next.clear();
        for ci in 0..self.candidates.len() {
            let (m, pos, bit) = self.candidates[ci];
            let parent = self.active[pos];
            let slot = if !self.claimed[parent] {
                parent
            } else {
                let slot = self.free.pop().expect("arena holds 2L slots");
                self.copy_slot(parent, slot);
                slot
            };
            self.claimed[slot] = true;
            self.next.push((slot, bit, m));
        }
        self.active.clear();
        for i in 0..self.next.len() {
            let (slot, bit, m) = self.next[i];
            self.metric[slot] = m;
            self.decide(slot, phase, bit);
            self.active.push(slot);
        }
    }

    fn copy_slot(&mut self, from: usize, to: usize) {
        let n = self.n;
        self.alpha.copy_within(from * 2 * n..(from + 1) * 2 * n, to * 2 * n);
        self.left.copy_within(from * n..(from + 1) * n, to * n);
        self.u.copy_within(from * n..(from + 1) * n, to * n);
        self.metric[to] = self.metric[from];
    }

    fn leaf_llr(&mut self, slot: usize, phase: usize) -> f64 {
        let n = self.n;
        let a = &mut self.alpha[slot * 2 * n..(slot + 1) * 2 * n];
        let start = if phase == 0 {
            self.stages
        } else {
            let t = phase.trailing_zeros() as usize;
            let half = 1 << t;
            let v = &self.left[slot * n + half..slot * n + 2 * half];
            let (child, parent) = a[half..4 * half].split_at_mut(half);
            let (upper, lower) = parent.split_at(half);
            for (((c, &x), &y), &bit) in child.iter_mut().zip(upper).zip(lower).zip(v) {
                *c = bit_node(x, y, bit);
            }
            t
        };
        for layer in (1..=start).rev() {
            let half = 1 << (layer - 1);
            let (child, parent) = a[half..4 * half].split_at_mut(half);
            let (upper, lower) = parent.split_at(half);
            for ((c, &x), &y) in child.iter_mut().zip(upper).zip(lower) {
                *c = check_node(x, y);
            }
        }
        a[1]
    }

    fn decide(&mut self, slot: usize, phase: usize, bit: u8) {
        let n = self.n;
        self.u[slot * n + phase] = bit;
        let left = &mut self.left[slot * n..(slot + 1) * n];
        let (mut cur, mut tmp) = (&mut self.scratch_a, &mut self.scratch_b);
        cur[0] = bit;
        let mut size = 1;
        for layer in 0..self.stages {
            if (phase >> layer) & 1 == 0 {
                left[size..2 * size].copy_from_slice(&cur[..size]);
                return;
            }
            for i in 0..size {
                tmp[i] = left[size + i] ^ cur[i];
                tmp[size + i] = cur[i];
            }
            std::mem::swap(&mut cur, &mut tmp);
            size *= 2;
        }
    }
}

/// LLR-domain SCL decoding with list size `list_size`.
pub fn scl_decode(llr: &LlrWord, c: &Construction, list_size: usize) -> Result<CandidateList> {
    SclDecoder::new(c, list_size)?.decode(llr.values())
}

/// Information word of the smallest-metric entry; ties go to the lowest index.
pub fn select_pm(list: &CandidateList) -> Result<&[u8]> {
    let mut best: Option<&Candidate> = None;
    for entry in list.entries() {
        if best.is_none_or(|b| entry.metric < b.metric) {
            best = Some(entry);
        }
    }
    best.map(|c| c.info.as_slice()).ok_or(Error::EmptyList)
}

/// True iff the transmitted word survived anywhere in the list.
pub fn genie_success(list: &CandidateList, truth: &[u8]) -> bool {
    list.entries().iter().any(|c| c.info == truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `F^{⊗n}` built by repeated Kronecker products.
    fn generator(n: usize) -> Vec<Vec<u8>> {
        let mut g = vec![vec![1u8]];
        while g.len() < n {
            let m = g.len();
            let mut next = vec![vec![0u8; 2 * m]; 2 * m];
            for (r, row) in next.iter_mut().enumerate() {
                for (col, cell) in row.iter_mut().enumerate() {
                    let kernel = [[1u8, 0], [1, 1]][r / m][col / m];
                    *cell = kernel & g[r % m][col % m];
                }
            }
            g = next;
        }
        g
    }

    fn matmul(u: &[u8], g: &[Vec<u8>]) -> Vec<u8> {
        (0..g.len())
            .map(|col| u.iter().zip(g).fold(0, |acc, (&ui, row)| acc ^ (ui & row[col])))
            .collect()
    }

    fn bits_of(value: usize, len: usize) -> Vec<u8> {
        (0..len).map(|i| ((value >> i) & 1) as u8).collect()
    }

    #[test]
    fn transform_single_kernel() {
        assert_eq!(polar_transform(&[0, 0]).unwrap(), vec![0, 0]);
        assert_eq!(polar_transform(&[1, 0]).unwrap(), vec![1, 0]);
        assert_eq!(polar_transform(&[0, 1]).unwrap(), vec![1, 1]);
    }

    #[test]
    fn transform_matches_kronecker_exhaustively_at_n4() {
        let g = generator(4);
        for v in 0..16 {
            let u = bits_of(v, 4);
            assert_eq!(polar_transform(&u).unwrap(), matmul(&u, &g), "u = {u:?}");
        }
    }

    #[test]
    fn transform_is_an_involution() {
        for n in [2usize, 4, 8] {
            for v in 0..(1 << n) {
                let u = bits_of(v, n);
                let x = polar_transform(&u).unwrap();
                assert_eq!(polar_transform(&x).unwrap(), u);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let u: Vec<u8> = (0..16).map(|_| rng.random_range(0..2)).collect();
            assert_eq!(polar_transform(&polar_transform(&u).unwrap()).unwrap(), u);
        }
    }

    #[test]
    fn transform_rejects_bad_length() {
        assert!(matches!(polar_transform(&[0, 1, 1]), Err(Error::NotPowerOfTwo(3))));
        assert!(polar_transform(&[]).is_err());
    }

    #[test]
    fn encode_edge_cases() {
        let c = Construction::all_frozen(8).unwrap();
        assert_eq!(encode(&[], &c).unwrap(), vec![0; 8]);
        let c = Construction::all_info(8).unwrap();
        let info = [1, 0, 1, 1, 0, 0, 1, 0];
        assert_eq!(encode(&info, &c).unwrap(), polar_transform(&info).unwrap());
        let c = Construction::from_frozen_set(8, &[0, 1, 2, 4]).unwrap();
        assert!(matches!(
            encode(&[1, 0], &c),
            Err(Error::LengthMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn encode_matches_generator_rows() {
        // Information rows 3, 5, 6, 7 of F^{⊗3}.
        let c = Construction::from_frozen_set(8, &[0, 1, 2, 4]).unwrap();
        let g = generator(8);
        let info = [1u8, 0, 1, 1];
        let rows = [3usize, 5, 6, 7];
        let mut expected = vec![0u8; 8];
        for (bit, &r) in info.iter().zip(&rows) {
            if *bit == 1 {
                for (e, g) in expected.iter_mut().zip(&g[r]) {
                    *e ^= g;
                }
            }
        }
        assert_eq!(expected, vec![1, 0, 1, 0, 0, 1, 0, 1]);
        assert_eq!(encode(&info, &c).unwrap(), expected);
    }

    #[test]
    fn hex_round_trip() {
        let c = Construction::from_frozen_set(8, &[0, 1, 2, 4]).unwrap();
        assert_eq!(c.to_hex(), "17");
        assert_eq!(Construction::from_hex("17", 8).unwrap(), c);
        let c = Construction::from_frozen_set(2, &[1]).unwrap();
        assert_eq!(c.to_hex(), "2");
        assert!(Construction::from_hex("4", 2).is_err());
        assert!(Construction::from_hex("zz", 8).is_err());
    }

    #[test]
    fn noiseless_scl_recovers_with_zero_metric() {
        let c = Construction::from_frozen_set(16, &[0, 1, 2, 3, 4, 8, 5, 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let info: Vec<u8> = (0..c.info_len()).map(|_| rng.random_range(0..2)).collect();
            let x = encode(&info, &c).unwrap();
            let llr = LlrWord::new(x.iter().map(|&b| if b == 0 { 50.0 } else { -50.0 }).collect())
                .unwrap();
            let list = scl_decode(&llr, &c, 4).unwrap();
            assert_eq!(list.entries()[0].info, info);
            assert_eq!(list.entries()[0].metric, 0.0);
        }
    }

    #[test]
    fn list_of_one_is_sc() {
        let c = Construction::from_frozen_set(8, &[0, 1, 2, 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let llr: Vec<f64> = (0..8).map(|_| rng.random_range(-3.0..3.0)).collect();
            let llr = LlrWord::new(llr).unwrap();
            let list = scl_decode(&llr, &c, 1).unwrap();
            assert_eq!(list.len(), 1);
            assert_eq!(list.entries()[0].info, sc_decode(&llr, &c).unwrap());
        }
    }

    #[test]
    fn list_is_sorted_distinct_and_bounded() {
        let c = Construction::from_frozen_set(16, &[0, 1, 2, 4, 8, 3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let llr: Vec<f64> = (0..16).map(|_| rng.random_range(-4.0..4.0)).collect();
            let list = scl_decode(&LlrWord::new(llr).unwrap(), &c, 8).unwrap();
            assert!(list.len() <= 8 && !list.is_empty());
            let e = list.entries();
            assert!(e.windows(2).all(|w| w[0].metric <= w[1].metric));
            for i in 0..e.len() {
                assert!(e[i].metric >= 0.0);
                for j in i + 1..e.len() {
                    assert_ne!(e[i].info, e[j].info);
                }
            }
        }
    }

    #[test]
    fn selection_rules() {
        let list = CandidateList::new(vec![
            Candidate { info: vec![0, 1], metric: 0.5 },
            Candidate { info: vec![1, 1], metric: 1.2 },
        ])
        .unwrap();
        assert_eq!(select_pm(&list).unwrap(), &[0, 1]);
        assert!(genie_success(&list, &[1, 1]));
        assert!(!genie_success(&list, &[0, 0]));

        let single = CandidateList::new(vec![Candidate { info: vec![1], metric: 3.0 }]).unwrap();
        assert_eq!(select_pm(&single).unwrap(), &[1]);

        let tied = CandidateList::new(vec![
            Candidate { info: vec![1, 0], metric: 0.7 },
            Candidate { info: vec![0, 0], metric: 0.7 },
        ])
        .unwrap();
        assert_eq!(select_pm(&tied).unwrap(), &[1, 0]);

        assert!(matches!(CandidateList::new(vec![]), Err(Error::EmptyList)));
    }

    #[test]
    fn genie_found_at_position_three_of_eight() {
        let entries = (0..8u8)
            .map(|i| Candidate { info: vec![i & 1, (i >> 1) & 1, (i >> 2) & 1], metric: i as f64 })
            .collect();
        let list = CandidateList::new(entries).unwrap();
        assert!(genie_success(&list, &[1, 1, 0]));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = Construction::all_info(8).unwrap();
        assert!(SclDecoder::new(&c, 0).is_err());
        let llr = LlrWord::new(vec![1.0; 4]).unwrap();
        assert!(scl_decode(&llr, &c, 2).is_err());
        assert!(LlrWord::new(vec![f64::NAN]).is_err());
        assert!(Construction::new(vec![false; 6]).is_err());
        assert!(Construction::from_bits(&[0, 2]).is_err());
    }
}
