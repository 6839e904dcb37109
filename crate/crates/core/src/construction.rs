//! DE/GA baseline construction and nested-sequence algebra.
//!
//! A nested sequence lists all `N` subchannels frozen-first: the `(N, K)`
//! code takes the last `K` entries as its information set, so every frozen
//! set is a prefix of the sequence and the family is nested by construction.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::codec::Construction;
use crate::error::{Error, Result};

/// Per-subchannel reliability (mean LLR under the Gaussian approximation);
/// larger is more reliable.
#[derive(Clone, Debug, PartialEq)]
pub struct Reliability(Vec<f64>);

impl Reliability {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Indices ordered least reliable first, ties toward the lower index.
    pub fn ascending_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[a].total_cmp(&self.0[b]).then(a.cmp(&b)));
        idx
    }

    /// `index,mean_llr` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,mean_llr")?;
        for (i, v) in self.0.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

// Two-segment approximation of φ(x) = 1 - E[tanh(u/2)], u ~ N(x, 2x), in the
// log domain. The segments are joined where they intersect so that φ stays
// continuous and strictly decreasing, which keeps the check-node map monotone.
const PHI_BREAKPOINT: f64 = 14.394_352_942_168_4;

fn ln_phi(x: f64) -> f64 {
    if x < PHI_BREAKPOINT {
        (-0.4527 * x.powf(0.86) + 0.0218).min(0.0)
    } else {
        0.5 * (std::f64::consts::PI / x).ln() - x / 4.0 + (1.0 - 10.0 / (7.0 * x)).ln()
    }
}

/// Smallest `x ≥ 0` with `ln φ(x) ≤ target`.
fn ln_phi_inverse(target: f64) -> f64 {
    if target >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while ln_phi(hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ln_phi(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1.0) {
            break;
        }
    }
    hi
}

/// Mean LLR after a check node fed by two copies of mean `m`:
/// `φ⁻¹(1 - (1 - φ(m))²)`.
pub fn check_node_mean(m: f64) -> f64 {
    let lp = ln_phi(m);
    let phi = lp.exp();
    // 1 - (1 - φ)² = φ (2 - φ)
    ln_phi_inverse(lp + (2.0 - phi).ln())
}

/// DE/GA reliabilities for `N = 2^n` at `design_snr_db` (Es/N0, `Es = 1`).
///
/// The root mean `2/σ² = 4·10^(snr/10)` is propagated through `n` stages;
/// at each stage the upper half of the index range takes the check-node map,
/// the lower half the doubled mean (most significant index bit first).
pub fn dega_reliability(n: usize, design_snr_db: f64) -> Result<Reliability> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if !design_snr_db.is_finite() {
        return Err(Error::InvalidParameter("design SNR must be finite".into()));
    }
    let mut means = vec![4.0 * 10f64.powf(design_snr_db / 10.0)];
    while means.len() < n {
        means = means.iter().flat_map(|&m| [check_node_mean(m), 2.0 * m]).collect();
    }
    Ok(Reliability(means))
}

/// Freeze the `N - K` least reliable subchannels (ties freeze the lower index).
pub fn dega_construct(n: usize, k: usize, design_snr_db: f64) -> Result<Construction> {
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {n}")));
    }
    let order = dega_reliability(n, design_snr_db)?.ascending_order();
    Construction::from_frozen_set(n, &order[..n - k])
}

/// Frozen-first ordering of all `N` subchannels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NestedSequence {
    order: Vec<usize>,
}

impl NestedSequence {
    /// Validates that `order` is a permutation of `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(Error::InvalidSequence(format!("index {i} out of range for N = {n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidSequence(format!("index {i} appears twice")));
            }
        }
        Ok(Self { order })
    }

    /// Frozen-first order of a reliability vector (least reliable first).
    pub fn from_reliability(rel: &Reliability) -> Self {
        Self { order: rel.ascending_order() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

/// `N=<n>` on the first line, the frozen-first indices space-separated on
/// the second.
impl fmt::Display for NestedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "N={}", self.order.len())?;
        let body: Vec<String> = self.order.iter().map(|i| i.to_string()).collect();
        writeln!(f, "{}", body.join(" "))
    }
}

impl FromStr for NestedSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty sequence file".into()))?;
        let n: usize = header
            .trim()
            .strip_prefix("N=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("line 1: expected `N=<int>`, got {header:?}")))?;
        let order: Vec<usize> = lines
            .next()
            .unwrap_or("")
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("line 2: bad index {t:?}"))))
            .collect::<Result<_>>()?;
        if order.len() != n {
            return Err(Error::Parse(format!("line 2: {} indices for N = {n}", order.len())));
        }
        if !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        Self::new(order)
    }
}

/// Keep the entries `< n`, preserving their order.
pub fn extract_subsequence(seq: &NestedSequence, n: usize) -> Result<NestedSequence> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    if n > seq.len() {
        return Err(Error::InvalidParameter(format!(
            "N = {n} exceeds the sequence length {}",
            seq.len()
        )));
    }
    Ok(NestedSequence { order: seq.order.iter().copied().filter(|&i| i < n).collect() })
}

/// The `(N, K)` code whose information set is the last `K` sequence entries.
pub fn code_from_sequence(seq: &NestedSequence, k: usize) -> Result<Construction> {
    let n = seq.len();
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds N = {n}")));
    }
    Construction::from_frozen_set(n, &seq.order[..n - k])
}

/// Sequence of an MDP episode: the first action is the first frozen index.
pub fn sequence_from_trajectory(actions: &[usize]) -> Result<NestedSequence> {
    NestedSequence::new(actions.to_vec())
}
