//! Multi-digit coefficient encoding: lifts the effective coupling precision
//! of an integer-limited device by writing each quantized coefficient in
//! base q and realizing the high digits through replicated spins.
//!
//! With 3 digits a coefficient K' = sign * (q^2 e + q f + g) becomes three
//! term families: the q^2 digit couples the q copies of spin i to the q
//! copies of spin j, the q digit couples the copies of i to the original j,
//! and the low digit couples the originals. Penalty couplings force every
//! copy to track its original, so on copy-coherent configurations the
//! device energy reproduces -sum K'_ij s_i s_j up to a constant.
//!
//! With 2 digits, K' = q f + g = (q+1) f + (g - f); the high part is
//! factored as alpha * beta * gamma and realized as an alpha-strength
//! coupling between beta replicas of i and gamma replicas of j, choosing
//! whichever of the two factorizations needs fewer copies.
//!
//! Representable range: |K'| <= M_q with M_q = (q-1)(q^2+q+1) for 3 digits
//! and (q-1)(q+1) for 2 digits.

use serde::{Deserialize, Serialize};

use crate::device::{split_pair_total, quantize_pair, DeviceProgram, HardwareProfile};
use crate::error::{Error, Result};
use crate::ising::{IsingProblem, SpinConfig};

/// Largest magnitude representable with 3 base-q digits: (q-1)(q^2+q+1).
pub fn three_digit_range(q: i64) -> i64 {
    (q - 1) * (q * q + q + 1)
}

/// Largest magnitude representable with 2 base-q digits: (q-1)(q+1).
pub fn two_digit_range(q: i64) -> i64 {
    (q - 1) * (q + 1)
}

/// How many base-q digits the mapping spends per coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DigitCount {
    Two,
    Three,
}

impl DigitCount {
    pub fn as_u8(self) -> u8 {
        match self {
            DigitCount::Two => 2,
            DigitCount::Three => 3,
        }
    }
}

/// Parameters of a multi-digit compilation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiDigitConfig {
    pub digits: DigitCount,
    /// Digit base; 2 <= q <= c_max (q = c_max + 1 is accepted with a warning).
    pub q: i64,
    /// Ferromagnetic strength tying replicas together; defaults to c_max.
    pub penalty_weight: Option<i64>,
}

impl MultiDigitConfig {
    pub fn new(digits: DigitCount, q: i64) -> Self {
        Self { digits, q, penalty_weight: None }
    }

    pub fn with_penalty(mut self, weight: i64) -> Self {
        self.penalty_weight = Some(weight);
        self
    }

    /// Effective coefficient range bound M_q for this configuration.
    pub fn range(&self) -> i64 {
        match self.digits {
            DigitCount::Two => two_digit_range(self.q),
            DigitCount::Three => three_digit_range(self.q),
        }
    }

    /// Resolves the penalty weight and checks q and the penalty against the
    /// profile. Returns the penalty to use plus any warnings.
    fn resolve(&self, profile: &HardwareProfile) -> Result<(i64, Vec<String>)> {
        let c_max = profile.c_max;
        if self.q < 2 || self.q > c_max + 1 {
            return Err(Error::BaseOutOfRange { q: self.q, limit: c_max + 1 });
        }
        let mut warnings = Vec::new();
        if self.q == c_max + 1 {
            warnings.push(format!(
                "base q={} equals c_max+1={}; digit magnitudes reach c_max exactly",
                self.q,
                c_max + 1
            ));
        }
        let penalty = self.penalty_weight.unwrap_or(c_max);
        if penalty < 1 || penalty > c_max {
            return Err(Error::PenaltyOutOfRange { weight: penalty, c_max });
        }
        Ok((penalty, warnings))
    }
}

/// Quantizes a normalized, field-free problem to integers in [-m_q, m_q]:
/// K'_ij = ceil(m_q (J_ij + J_ji) / 2), K'_ji = floor(...), for i < j.
/// Returns the n*n row-major K' matrix.
pub fn lifted_quantize(problem: &IsingProblem, m_q: i64) -> Result<Vec<i64>> {
    problem.check_normalized()?;
    if problem.has_linear_terms() {
        return Err(Error::LinearTermsPresent);
    }
    let n = problem.n();
    let mut kp = vec![0i64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (hi, lo) = quantize_pair(problem.symmetrized(i, j), m_q);
            kp[i * n + j] = hi;
            kp[j * n + i] = lo;
        }
    }
    Ok(kp)
}

/// Splits |k| into base-q digits (e, f, g) with |k| = q^2 e + q f + g and
/// returns them with k's sign attached: (a, b, c) = sign(k) * (e, f, g).
/// Every digit magnitude is at most q-1; q^2 a + q b + c reconstructs k
/// exactly.
pub fn three_digit_decompose(k: i64, q: i64) -> Result<(i64, i64, i64)> {
    if q < 2 {
        return Err(Error::DigitOutOfRange { value: k, q });
    }
    if k.abs() > three_digit_range(q) {
        return Err(Error::DigitOutOfRange { value: k, q });
    }
    let sign = k.signum();
    let m = k.abs();
    let e = m / (q * q);
    let f = (m / q) % q;
    let g = m % q;
    Ok((sign * e, sign * f, sign * g))
}

/// Two-digit analog: k = q f + g with digits carrying sign(k).
pub fn two_digit_decompose(k: i64, q: i64) -> Result<(i64, i64)> {
    if q < 2 || k.abs() > two_digit_range(q) {
        return Err(Error::DigitOutOfRange { value: k, q });
    }
    let sign = k.signum();
    Ok((sign * (k.abs() / q), sign * (k.abs() % q)))
}

/// Which of the two algebraic forms realizes the high digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    /// alpha * beta * gamma = q * f, residual coupling g.
    A,
    /// alpha * beta * gamma = (q+1) * f, residual coupling g - f.
    B,
}

/// A chosen factorization of the high digit of one directed coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factorization {
    pub formulation: Formulation,
    /// Coupling strength; carries the coefficient's sign, |alpha| <= c_max.
    pub alpha: i64,
    /// Replica count on the first spin.
    pub beta: i64,
    /// Replica count on the second spin.
    pub gamma: i64,
    /// Coupling left over for the originals pair.
    pub residual: i64,
}

impl Factorization {
    /// max(beta, gamma): the replica count this factorization costs.
    pub fn copies(&self) -> i64 {
        self.beta.max(self.gamma)
    }
}

// Smallest admissible triple for one target, ordered by
// (max(beta,gamma), beta+gamma, alpha, beta, gamma). Enumerates divisor
// pairs of the target; `target` must be positive.
fn best_triple(target: i64, c_max: i64) -> Option<(i64, i64, i64)> {
    let key = |(a, b, g): (i64, i64, i64)| (b.max(g), b + g, a, b, g);
    let mut best: Option<(i64, i64, i64)> = None;
    for beta in 1..=target {
        if target % beta != 0 {
            continue;
        }
        let rest = target / beta;
        for gamma in 1..=rest {
            if rest % gamma != 0 {
                continue;
            }
            let alpha = rest / gamma;
            if alpha > c_max {
                continue;
            }
            let candidate = (alpha, beta, gamma);
            if best.map_or(true, |b| key(candidate) < key(b)) {
                best = Some(candidate);
            }
        }
    }
    best
}

/// Picks the factorization of a two-digit coefficient's high part that
/// needs the fewest spin copies.
///
/// Both forms are searched exhaustively over integer triples with
/// beta, gamma >= 1 and |alpha| <= c_max, minimizing max(beta, gamma);
/// ties break by smaller beta + gamma, then smaller |alpha|, then
/// lexicographic (beta, gamma). The form with the smaller minimized
/// max(beta, gamma) wins, ties favoring A. `f` and `g` are the high and
/// low digits of the coefficient (both carrying its sign); the returned
/// residual is g for form A and g - f for form B.
pub fn factorize_min_copies(f: i64, g: i64, q: i64, c_max: i64) -> Result<Factorization> {
    if q < 2 || f == 0 || f.abs() > q - 1 {
        return Err(Error::DigitOutOfRange { value: f, q });
    }
    if g.abs() > q - 1 {
        return Err(Error::DigitOutOfRange { value: g, q });
    }
    let sign = f.signum();
    let fa = f.abs();
    // (alpha, beta, gamma) = (f, 1, q) is always admissible when
    // q <= c_max + 1 because |f| <= q - 1 <= c_max, so both searches
    // succeed whenever the base fits the profile.
    let a = best_triple(q * fa, c_max)
        .ok_or(Error::BaseOutOfRange { q, limit: c_max + 1 })?;
    let b = best_triple((q + 1) * fa, c_max)
        .ok_or(Error::BaseOutOfRange { q, limit: c_max + 1 })?;
    let (formulation, triple, residual) = if b.1.max(b.2) < a.1.max(a.2) {
        (Formulation::B, b, g - f)
    } else {
        (Formulation::A, a, g)
    };
    Ok(Factorization {
        formulation,
        alpha: sign * triple.0,
        beta: triple.1,
        gamma: triple.2,
        residual,
    })
}

/// How one directed coefficient K'_ij was realized on the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EdgeTermKind {
    /// 3-digit: a couples copies x copies, b couples copies of i to the
    /// original j, c couples the originals.
    ThreeDigit { a: i64, b: i64, c: i64 },
    /// 2-digit with a factored high part. `originals_in_product` records
    /// whether the originals serve as replica 1 of the coupled blocks or
    /// the product runs over dedicated copies only (chosen per edge so the
    /// originals pair never exceeds the device's +-2*c_max pair budget).
    TwoDigitFactored {
        formulation: Formulation,
        alpha: i64,
        beta: i64,
        gamma: i64,
        residual: i64,
        originals_in_product: bool,
    },
    /// 2-digit with zero high digit: one direct coupling between originals.
    TwoDigitResidual { residual: i64 },
}

/// One directed coefficient's bookkeeping entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTerm {
    pub i: usize,
    pub j: usize,
    pub k_prime: i64,
    #[serde(flatten)]
    pub term: EdgeTermKind,
}

/// Everything needed to interpret a compiled program's spins: replica
/// groups, per-edge digit terms, and the quantized coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub digits: u8,
    pub q: i64,
    pub m_q: i64,
    pub penalty_weight: i64,
    pub n_original: usize,
    pub device_spins: usize,
    /// groups[i] lists the device spins carrying original spin i; the
    /// first entry is the original itself.
    pub groups: Vec<Vec<usize>>,
    pub edge_terms: Vec<EdgeTerm>,
    /// The quantized matrix K' actually encoded, as rows.
    pub quantized: Vec<Vec<i64>>,
    pub warnings: Vec<String>,
}

impl MappingPlan {
    /// Quantized pair total K'_ij + K'_ji.
    pub fn quantized_total(&self, i: usize, j: usize) -> i64 {
        self.quantized[i][j] + self.quantized[j][i]
    }

    /// Extends an original-space configuration coherently: every replica
    /// takes its original's value.
    pub fn coherent_extend(&self, original: &SpinConfig) -> Result<SpinConfig> {
        if original.len() != self.n_original {
            return Err(Error::DimensionMismatch {
                expected: self.n_original,
                actual: original.len(),
            });
        }
        let mut device = vec![1i8; self.device_spins];
        for (i, group) in self.groups.iter().enumerate() {
            for &u in group {
                device[u] = original.values()[i];
            }
        }
        Ok(SpinConfig::from_raw(device))
    }

    /// Collapses a device configuration back to original spins by majority
    /// vote over each replica group; exact ties keep the original's value.
    pub fn decode(&self, device: &SpinConfig) -> Result<SpinConfig> {
        if device.len() != self.device_spins {
            return Err(Error::DimensionMismatch {
                expected: self.device_spins,
                actual: device.len(),
            });
        }
        let values = device.values();
        let decoded = self
            .groups
            .iter()
            .map(|group| {
                let sum: i32 = group.iter().map(|&u| i32::from(values[u])).sum();
                match sum.cmp(&0) {
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Less => -1,
                    std::cmp::Ordering::Equal => values[group[0]],
                }
            })
            .collect();
        Ok(SpinConfig::from_raw(decoded))
    }

    /// Number of device spins disagreeing with their group's decoded value.
    pub fn coherence_violations(&self, device: &SpinConfig) -> Result<usize> {
        let decoded = self.decode(device)?;
        let values = device.values();
        Ok(self
            .groups
            .iter()
            .zip(decoded.values())
            .map(|(group, &vote)| group.iter().filter(|&&u| values[u] != vote).count())
            .sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

// Symmetric accumulator of desired pair couplings; emission splits each
// pair total ceil/floor across the two directed entries.
struct PairTotals {
    n: usize,
    totals: Vec<i64>,
}

impl PairTotals {
    fn new(n: usize) -> Self {
        Self { n, totals: vec![0; n * n] }
    }

    fn add(&mut self, u: usize, v: usize, w: i64) {
        debug_assert_ne!(u, v);
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        self.totals[a * self.n + b] += w;
    }

    fn emit(&self) -> DeviceProgram {
        let mut program = DeviceProgram::new(self.n);
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                let total = self.totals[u * self.n + v];
                if total != 0 {
                    let (hi, lo) = split_pair_total(total);
                    program.set_entry(u, v, hi);
                    program.set_entry(v, u, lo);
                }
            }
        }
        program
    }
}

fn finish(
    totals: &PairTotals,
    profile: &HardwareProfile,
    plan: MappingPlan,
) -> Result<(DeviceProgram, MappingPlan)> {
    let program = totals.emit();
    for u in 0..program.n_spins() {
        for v in 0..program.n_spins() {
            let entry = program.entry(u, v);
            if entry.abs() > profile.c_max {
                return Err(Error::Internal(format!(
                    "emitted entry ({u},{v}) = {entry} exceeds c_max = {}",
                    profile.c_max
                )));
            }
        }
    }
    program.validate(profile).into_result()?;
    Ok((program, plan))
}

fn quantized_rows(kp: &[i64], n: usize) -> Vec<Vec<i64>> {
    (0..n).map(|i| kp[i * n..(i + 1) * n].to_vec()).collect()
}

/// Compiles a normalized, field-free problem with the 3-digit encoding.
///
/// Every original spin gets q dedicated copies (n*(q+1) device spins).
/// Penalties follow the copy-tying term: strength `penalty_weight` between
/// each original and each of its copies, and twice that between copies of
/// the same spin (the double sum over ordered copy pairs).
pub fn map_three_digit(
    problem: &IsingProblem,
    profile: &HardwareProfile,
    cfg: &MultiDigitConfig,
) -> Result<(DeviceProgram, MappingPlan)> {
    assert_eq!(cfg.digits, DigitCount::Three, "config is not 3-digit");
    let (penalty, warnings) = cfg.resolve(profile)?;
    let n = problem.n();
    let q = cfg.q;
    let qs = q as usize;
    let device_spins = n * (qs + 1);
    if device_spins > profile.max_spins {
        return Err(Error::SpinBudget {
            required: device_spins,
            available: profile.max_spins,
        });
    }
    let m_q = three_digit_range(q);
    let kp = lifted_quantize(problem, m_q)?;

    // Originals first, then q copies per group, contiguously.
    let groups: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut g = Vec::with_capacity(qs + 1);
            g.push(i);
            g.extend(n + i * qs..n + (i + 1) * qs);
            g
        })
        .collect();

    let mut totals = PairTotals::new(device_spins);
    let mut edge_terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let k_prime = kp[i * n + j];
            if i == j || k_prime == 0 {
                continue;
            }
            let (a, b, c) = three_digit_decompose(k_prime, q)?;
            edge_terms.push(EdgeTerm {
                i,
                j,
                k_prime,
                term: EdgeTermKind::ThreeDigit { a, b, c },
            });
            if a != 0 {
                for &u in &groups[i][1..] {
                    for &v in &groups[j][1..] {
                        totals.add(u, v, a);
                    }
                }
            }
            if b != 0 {
                for &u in &groups[i][1..] {
                    totals.add(u, j, b);
                }
            }
            if c != 0 {
                totals.add(i, j, c);
            }
        }
    }
    for group in &groups {
        let copies = &group[1..];
        for &u in copies {
            totals.add(group[0], u, penalty);
        }
        for (k, &u) in copies.iter().enumerate() {
            for &v in &copies[k + 1..] {
                totals.add(u, v, 2 * penalty);
            }
        }
    }

    let plan = MappingPlan {
        digits: 3,
        q,
        m_q,
        penalty_weight: penalty,
        n_original: n,
        device_spins,
        groups,
        edge_terms,
        quantized: quantized_rows(&kp, n),
        warnings,
    };
    finish(&totals, profile, plan)
}

/// Compiles a normalized, field-free problem with the 2-digit encoding.
///
/// Copy counts are per spin: the maximum replica multiplicity any incident
/// edge demands, so copies are shared across edges. The originals serve as
/// replica 1 of each block unless that would push the originals pair past
/// the device's +-2*c_max budget (possible when a large residual rides on
/// top of a strong alpha); such edges run their product over dedicated
/// copies only.
pub fn map_two_digit(
    problem: &IsingProblem,
    profile: &HardwareProfile,
    cfg: &MultiDigitConfig,
) -> Result<(DeviceProgram, MappingPlan)> {
    assert_eq!(cfg.digits, DigitCount::Two, "config is not 2-digit");
    let (penalty, warnings) = cfg.resolve(profile)?;
    let n = problem.n();
    let q = cfg.q;
    let m_q = two_digit_range(q);
    let kp = lifted_quantize(problem, m_q)?;

    // Directed terms, then a per-edge decision on whether the originals
    // join the replica blocks.
    struct Directed {
        x: usize,
        y: usize,
        k_prime: i64,
        g: i64,
        fact: Option<Factorization>,
    }
    let mut directed: Vec<Directed> = Vec::new();
    for x in 0..n {
        for y in 0..n {
            let k_prime = kp[x * n + y];
            if x == y || k_prime == 0 {
                continue;
            }
            let (f, g) = two_digit_decompose(k_prime, q)?;
            let fact = if f != 0 {
                Some(factorize_min_copies(f, g, q, profile.c_max)?)
            } else {
                None
            };
            directed.push(Directed { x, y, k_prime, g, fact });
        }
    }

    // Desired coupling landing on the originals pair of each edge if the
    // originals were to count as replica 1 of both blocks.
    let mut origin_load = vec![0i64; n * n];
    for d in &directed {
        let (a, b) = if d.x < d.y { (d.x, d.y) } else { (d.y, d.x) };
        origin_load[a * n + b] += match &d.fact {
            Some(fact) => fact.alpha + fact.residual,
            None => d.g,
        };
    }
    let originals_in = |x: usize, y: usize| {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        origin_load[a * n + b].abs() <= 2 * profile.c_max
    };

    let mut copies_needed = vec![0usize; n];
    for d in &directed {
        if let Some(fact) = &d.fact {
            let shared = usize::from(originals_in(d.x, d.y));
            copies_needed[d.x] = copies_needed[d.x].max(fact.beta as usize - shared.min(fact.beta as usize));
            copies_needed[d.y] = copies_needed[d.y].max(fact.gamma as usize - shared.min(fact.gamma as usize));
        }
    }

    let device_spins = n + copies_needed.iter().sum::<usize>();
    if device_spins > profile.max_spins {
        return Err(Error::SpinBudget {
            required: device_spins,
            available: profile.max_spins,
        });
    }
    let mut groups: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut next = n;
    for (i, &copies) in copies_needed.iter().enumerate() {
        let mut g = Vec::with_capacity(copies + 1);
        g.push(i);
        g.extend(next..next + copies);
        next += copies;
        groups.push(g);
    }

    let mut totals = PairTotals::new(device_spins);
    let mut edge_terms = Vec::new();
    for d in &directed {
        match &d.fact {
            Some(fact) => {
                let in_product = originals_in(d.x, d.y);
                // Replica blocks: the first beta (gamma) replicas of each
                // group, where replica 1 is the original when it joins.
                let block = |spin: usize, count: i64| -> Vec<usize> {
                    let group = &groups[spin];
                    if in_product {
                        group[..count as usize].to_vec()
                    } else {
                        group[1..=count as usize].to_vec()
                    }
                };
                for &u in &block(d.x, fact.beta) {
                    for &v in &block(d.y, fact.gamma) {
                        totals.add(u, v, fact.alpha);
                    }
                }
                if fact.residual != 0 {
                    totals.add(d.x, d.y, fact.residual);
                }
                edge_terms.push(EdgeTerm {
                    i: d.x,
                    j: d.y,
                    k_prime: d.k_prime,
                    term: EdgeTermKind::TwoDigitFactored {
                        formulation: fact.formulation,
                        alpha: fact.alpha,
                        beta: fact.beta,
                        gamma: fact.gamma,
                        residual: fact.residual,
                        originals_in_product: in_product,
                    },
                });
            }
            None => {
                totals.add(d.x, d.y, d.g);
                edge_terms.push(EdgeTerm {
                    i: d.x,
                    j: d.y,
                    k_prime: d.k_prime,
                    term: EdgeTermKind::TwoDigitResidual { residual: d.g },
                });
            }
        }
    }
    for group in &groups {
        for (k, &u) in group.iter().enumerate() {
            for &v in &group[k + 1..] {
                totals.add(u, v, penalty);
            }
        }
    }

    let plan = MappingPlan {
        digits: 2,
        q,
        m_q,
        penalty_weight: penalty,
        n_original: n,
        device_spins,
        groups,
        edge_terms,
        quantized: quantized_rows(&kp, n),
        warnings,
    };
    finish(&totals, profile, plan)
}

/// Dispatches on the configured digit count.
pub fn map_multidigit(
    problem: &IsingProblem,
    profile: &HardwareProfile,
    cfg: &MultiDigitConfig,
) -> Result<(DeviceProgram, MappingPlan)> {
    match cfg.digits {
        DigitCount::Two => map_two_digit(problem, profile, cfg),
        DigitCount::Three => map_three_digit(problem, profile, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn cobi() -> HardwareProfile {
        HardwareProfile::cobi()
    }

    fn normalized_random(n: usize, seed: u64) -> IsingProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = IsingProblem::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p.set_coupling(i, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        p.normalize().unwrap().0
    }

    fn device_configs(n: usize) -> impl Iterator<Item = SpinConfig> {
        (0..1u64 << n).map(move |c| {
            SpinConfig::new((0..n).map(|i| if (c >> i) & 1 == 0 { 1 } else { -1 }).collect())
                .unwrap()
        })
    }

    // Test-side oracle: evaluates the digit expansion directly from the
    // plan's edge terms and groups, independently of the pair-total and
    // ceil/floor emission path inside the compiler.
    fn expansion_energy(plan: &MappingPlan, device: &SpinConfig) -> i64 {
        let s = device.values();
        let sum = |spins: &[usize]| -> i64 { spins.iter().map(|&u| i64::from(s[u])).sum() };
        let mut acc = 0i64;
        for term in &plan.edge_terms {
            let (gi, gj) = (&plan.groups[term.i], &plan.groups[term.j]);
            let (si, sj) = (i64::from(s[gi[0]]), i64::from(s[gj[0]]));
            acc += match &term.term {
                EdgeTermKind::ThreeDigit { a, b, c } => {
                    a * sum(&gi[1..]) * sum(&gj[1..]) + b * sum(&gi[1..]) * sj + c * si * sj
                }
                EdgeTermKind::TwoDigitFactored {
                    alpha,
                    beta,
                    gamma,
                    residual,
                    originals_in_product,
                    ..
                } => {
                    let block = |g: &[usize], count: i64| {
                        if *originals_in_product {
                            sum(&g[..count as usize])
                        } else {
                            sum(&g[1..=count as usize])
                        }
                    };
                    alpha * block(gi, *beta) * block(gj, *gamma) + residual * si * sj
                }
                EdgeTermKind::TwoDigitResidual { residual } => residual * si * sj,
            };
        }
        let p = plan.penalty_weight;
        for group in &plan.groups {
            let (orig, copies) = (group[0], &group[1..]);
            match plan.digits {
                3 => {
                    for &u in copies {
                        acc += p * i64::from(s[orig]) * i64::from(s[u]);
                    }
                    for (k, &u) in copies.iter().enumerate() {
                        for &v in &copies[k + 1..] {
                            acc += 2 * p * i64::from(s[u]) * i64::from(s[v]);
                        }
                    }
                }
                2 => {
                    for (k, &u) in group.iter().enumerate() {
                        for &v in &group[k + 1..] {
                            acc += p * i64::from(s[u]) * i64::from(s[v]);
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        -acc
    }

    // Coherent-restriction identity: program energy of every coherently
    // extended config equals -sum K'_ij s_i s_j plus one constant.
    fn assert_coherent_identity(
        problem: &IsingProblem,
        program: &DeviceProgram,
        plan: &MappingPlan,
    ) {
        let n = problem.n();
        let mut offset: Option<i64> = None;
        for s in device_configs(n) {
            let extended = plan.coherent_extend(&s).unwrap();
            let device_e = program.energy(&extended).unwrap();
            let mut quantized_e = 0i64;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        quantized_e -= plan.quantized[i][j]
                            * i64::from(s.values()[i])
                            * i64::from(s.values()[j]);
                    }
                }
            }
            let delta = device_e - quantized_e;
            match offset {
                None => offset = Some(delta),
                Some(p0) => assert_eq!(delta, p0, "offset is not config-independent"),
            }
        }
    }

    #[test]
    fn decompose_base_eight_examples() {
        assert_eq!(three_digit_decompose(403, 8).unwrap(), (6, 2, 3));
        assert_eq!(three_digit_decompose(0, 8).unwrap(), (0, 0, 0));
        assert_eq!(three_digit_decompose(-511, 8).unwrap(), (-7, -7, -7));
        assert!(three_digit_decompose(512, 8).is_err());
    }

    #[test]
    fn decompose_reconstructs_exactly() {
        for q in [2i64, 3, 5, 8] {
            for t in -three_digit_range(q)..=three_digit_range(q) {
                let (a, b, c) = three_digit_decompose(t, q).unwrap();
                assert!(a.abs() <= q - 1 && b.abs() <= q - 1 && c.abs() <= q - 1);
                assert_eq!(q * q * a + q * b + c, t);
            }
            for t in -two_digit_range(q)..=two_digit_range(q) {
                let (f, g) = two_digit_decompose(t, q).unwrap();
                assert!(f.abs() <= q - 1 && g.abs() <= q - 1);
                assert_eq!(q * f + g, t);
            }
        }
    }

    #[test]
    fn range_bounds_match_known_values() {
        assert_eq!(three_digit_range(8), 511);
        assert_eq!(three_digit_range(5), 124);
        assert_eq!(two_digit_range(8), 63);
        assert_eq!(two_digit_range(2), 3);
    }

    #[test]
    fn lifted_quantize_splits_pairs() {
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, 1.0);
        p.set_coupling(1, 0, 1.0);
        let kp = lifted_quantize(&p, 511).unwrap();
        assert_eq!(kp[1], 511);
        assert_eq!(kp[2], 511);
        let mut half = IsingProblem::new(2);
        half.set_coupling(0, 1, 0.5);
        let kp = lifted_quantize(&half, 511).unwrap();
        // x = 511 * 0.5 / 2 = 127.75
        assert_eq!(kp[1], 128);
        assert_eq!(kp[2], 127);
    }

    #[test]
    fn factorize_prefers_fewer_copies_across_forms() {
        // f=5, q=8: form A targets 40 (best max(beta,gamma) = 4), form B
        // targets 45 = 5*3*3 (max 3), so B wins with zero residual at g=5.
        let fact = factorize_min_copies(5, 5, 8, 7).unwrap();
        assert_eq!(fact.formulation, Formulation::B);
        assert_eq!((fact.alpha, fact.beta, fact.gamma), (5, 3, 3));
        assert_eq!(fact.residual, 0);
    }

    #[test]
    fn factorize_single_copy_when_base_is_admissible() {
        for q in [3i64, 5, 7] {
            let fact = factorize_min_copies(1, 0, q, 7).unwrap();
            assert_eq!(fact.formulation, Formulation::A);
            assert_eq!((fact.alpha, fact.beta, fact.gamma), (q, 1, 1));
            assert_eq!(fact.residual, 0);
        }
    }

    #[test]
    fn factorize_carries_sign_on_alpha() {
        let fact = factorize_min_copies(-3, -1, 8, 7).unwrap();
        assert_eq!(fact.formulation, Formulation::A);
        assert_eq!((fact.alpha, fact.beta, fact.gamma), (-6, 2, 2));
        assert_eq!(fact.residual, -1);
        assert_eq!(fact.alpha * fact.beta * fact.gamma, 8 * -3);
    }

    #[test]
    fn factorize_matches_exhaustive_search() {
        // Independent oracle: scan the full (alpha, beta, gamma) grid.
        let key = |(a, b, g): (i64, i64, i64)| (b.max(g), b + g, a, b, g);
        let grid_best = |target: i64, c_max: i64| {
            let mut best: Option<(i64, i64, i64)> = None;
            for alpha in 1..=c_max {
                for beta in 1..=target {
                    for gamma in 1..=target {
                        if alpha * beta * gamma == target {
                            let cand = (alpha, beta, gamma);
                            if best.map_or(true, |b| key(cand) < key(b)) {
                                best = Some(cand);
                            }
                        }
                    }
                }
            }
            best.unwrap()
        };
        for q in 2..=8i64 {
            for f in 1..q {
                let fact = factorize_min_copies(f, 0, q, 7).unwrap();
                let a = grid_best(q * f, 7);
                let b = grid_best((q + 1) * f, 7);
                let (expect, form) = if b.1.max(b.2) < a.1.max(a.2) {
                    (b, Formulation::B)
                } else {
                    (a, Formulation::A)
                };
                assert_eq!(fact.formulation, form, "q={q} f={f}");
                assert_eq!((fact.alpha, fact.beta, fact.gamma), expect, "q={q} f={f}");
            }
        }
    }

    #[test]
    fn three_digit_ferromagnetic_pair_layout() {
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, 0.5);
        p.set_coupling(1, 0, 0.5);
        let cfg = MultiDigitConfig::new(DigitCount::Three, 2);
        let (program, plan) = map_three_digit(&p, &cobi(), &cfg).unwrap();
        assert_eq!(program.n_spins(), 6);
        assert_eq!(plan.groups, vec![vec![0, 2, 3], vec![1, 4, 5]]);
        assert_eq!(plan.m_q, 7);
        assert_eq!(plan.quantized[0][1] + plan.quantized[1][0], 7);
        assert_coherent_identity(&p, &program, &plan);
        for s in device_configs(6) {
            assert_eq!(program.energy(&s).unwrap(), expansion_energy(&plan, &s));
        }
    }

    #[test]
    fn three_digit_edgeless_problem_is_penalties_only() {
        let p = IsingProblem::new(1);
        let cfg = MultiDigitConfig::new(DigitCount::Three, 3);
        let (program, plan) = map_three_digit(&p, &cobi(), &cfg).unwrap();
        assert_eq!(program.n_spins(), 4);
        assert!(plan.edge_terms.is_empty());
        // original-copy pairs carry the penalty, copy pairs twice that
        assert_eq!(program.pair_total(0, 1), 7);
        assert_eq!(program.pair_total(1, 2), 14);
        assert_eq!(program.pair_total(2, 3), 14);
    }

    #[test]
    fn three_digit_respects_spin_budget() {
        let p = normalized_random(9, 2);
        let ok = MultiDigitConfig::new(DigitCount::Three, 5);
        let (program, _) = map_three_digit(&p, &cobi(), &ok).unwrap();
        assert_eq!(program.n_spins(), 54);
        let too_big = MultiDigitConfig::new(DigitCount::Three, 8);
        assert!(matches!(
            map_three_digit(&p, &cobi(), &too_big),
            Err(Error::SpinBudget { required: 81, available: 59 })
        ));
    }

    #[test]
    fn two_digit_single_edge_shares_originals() {
        // K' = 45 both ways at q=8: form B gives (5,3,3) with residual 0,
        // the originals join the blocks, so 2 + 2+2 copies = 6 spins.
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, 45.0 / 63.0);
        p.set_coupling(1, 0, 45.0 / 63.0);
        let cfg = MultiDigitConfig::new(DigitCount::Two, 8);
        let (program, plan) = map_two_digit(&p, &cobi(), &cfg).unwrap();
        assert_eq!(program.n_spins(), 6);
        match &plan.edge_terms[0].term {
            EdgeTermKind::TwoDigitFactored {
                formulation,
                alpha,
                beta,
                gamma,
                residual,
                originals_in_product,
            } => {
                assert_eq!(*formulation, Formulation::B);
                assert_eq!((*alpha, *beta, *gamma, *residual), (5, 3, 3, 0));
                assert!(originals_in_product);
            }
            other => panic!("unexpected term {other:?}"),
        }
        assert_coherent_identity(&p, &program, &plan);
        for s in device_configs(6) {
            assert_eq!(program.energy(&s).unwrap(), expansion_energy(&plan, &s));
        }
    }

    #[test]
    fn two_digit_small_coefficient_is_direct_coupling() {
        // |K'| <= q-1: no high digit, no copies; the pair carries K'
        // split ceil/floor across the two directed entries.
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, 5.0 / 63.0);
        let cfg = MultiDigitConfig::new(DigitCount::Two, 8);
        let (program, plan) = map_two_digit(&p, &cobi(), &cfg).unwrap();
        assert_eq!(program.n_spins(), 2);
        assert_eq!(plan.quantized[0][1], 3); // ceil(2.5)
        assert_eq!(plan.quantized[1][0], 2);
        assert_eq!(program.entry(0, 1), 3);
        assert_eq!(program.entry(1, 0), 2);
    }

    #[test]
    fn two_digit_heavy_originals_pair_moves_product_to_copies() {
        // K' = (15, 14) at q=8: f=1 factorizes as (4,1,2) in form A, and
        // alpha + residual stacks to 11 + 10 on the originals pair, past
        // the +-14 budget; the compiler must shift the product onto copies.
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, 29.0 / 63.0);
        let cfg = MultiDigitConfig::new(DigitCount::Two, 8);
        let (program, plan) = map_two_digit(&p, &cobi(), &cfg).unwrap();
        assert_eq!(plan.quantized[0][1], 15);
        assert_eq!(plan.quantized[1][0], 14);
        for term in &plan.edge_terms {
            match &term.term {
                EdgeTermKind::TwoDigitFactored { originals_in_product, .. } => {
                    assert!(!originals_in_product)
                }
                other => panic!("unexpected term {other:?}"),
            }
        }
        assert!(program.validate(&cobi()).is_valid());
        assert_coherent_identity(&p, &program, &plan);
        for s in device_configs(program.n_spins()) {
            assert_eq!(program.energy(&s).unwrap(), expansion_energy(&plan, &s));
        }
    }

    #[test]
    fn coherent_identity_on_random_problems() {
        for seed in 0..6u64 {
            let p = normalized_random(4, seed);
            for q in [2i64, 3] {
                let cfg3 = MultiDigitConfig::new(DigitCount::Three, q);
                let (prog3, plan3) = map_three_digit(&p, &cobi(), &cfg3).unwrap();
                assert_coherent_identity(&p, &prog3, &plan3);
                let cfg2 = MultiDigitConfig::new(DigitCount::Two, q);
                let (prog2, plan2) = map_two_digit(&p, &cobi(), &cfg2).unwrap();
                assert_coherent_identity(&p, &prog2, &plan2);
            }
        }
    }

    #[test]
    fn expansion_oracle_agrees_on_random_two_digit_programs() {
        for seed in [3u64, 17] {
            let p = normalized_random(3, seed);
            let cfg = MultiDigitConfig::new(DigitCount::Two, 8);
            let (program, plan) = map_two_digit(&p, &cobi(), &cfg).unwrap();
            for s in device_configs(program.n_spins()).step_by(7) {
                assert_eq!(program.energy(&s).unwrap(), expansion_energy(&plan, &s));
            }
        }
    }

    #[test]
    fn every_emitted_entry_is_within_c_max() {
        for seed in 0..10u64 {
            let p = normalized_random(5, seed);
            for q in [2i64, 3, 5, 7, 8] {
                let cfg3 = MultiDigitConfig::new(DigitCount::Three, q);
                if (5 * (q as usize + 1)) <= 59 {
                    let (prog, _) = map_three_digit(&p, &cobi(), &cfg3).unwrap();
                    assert!(prog.validate(&cobi()).is_valid(), "3-digit q={q} seed={seed}");
                }
                let cfg2 = MultiDigitConfig::new(DigitCount::Two, q);
                let (prog, _) = map_two_digit(&p, &cobi(), &cfg2).unwrap();
                assert!(prog.validate(&cobi()).is_valid(), "2-digit q={q} seed={seed}");
            }
        }
    }

    #[test]
    fn decode_majority_and_tie_rules() {
        let plan = MappingPlan {
            digits: 3,
            q: 4,
            m_q: three_digit_range(4),
            penalty_weight: 7,
            n_original: 1,
            device_spins: 5,
            groups: vec![vec![0, 1, 2, 3, 4]],
            edge_terms: vec![],
            quantized: vec![vec![0]],
            warnings: vec![],
        };
        let majority = SpinConfig::new(vec![1, 1, 1, -1, -1]).unwrap();
        assert_eq!(plan.decode(&majority).unwrap().values(), &[1]);
        let mut tie_plan = plan.clone();
        tie_plan.device_spins = 4;
        tie_plan.groups = vec![vec![0, 1, 2, 3]];
        let tie = SpinConfig::new(vec![1, -1, -1, 1]).unwrap();
        assert_eq!(tie_plan.decode(&tie).unwrap().values(), &[1]);
        let flipped_tie = SpinConfig::new(vec![-1, 1, 1, -1]).unwrap();
        assert_eq!(tie_plan.decode(&flipped_tie).unwrap().values(), &[-1]);
    }

    #[test]
    fn decode_inverts_coherent_extension() {
        let p = normalized_random(4, 8);
        let cfg = MultiDigitConfig::new(DigitCount::Three, 3);
        let (_, plan) = map_three_digit(&p, &cobi(), &cfg).unwrap();
        for s in device_configs(4) {
            let extended = plan.coherent_extend(&s).unwrap();
            assert_eq!(plan.decode(&extended).unwrap(), s);
            assert_eq!(plan.coherence_violations(&extended).unwrap(), 0);
        }
    }

    #[test]
    fn config_bounds_are_enforced() {
        let p = normalized_random(2, 1);
        let too_big = MultiDigitConfig::new(DigitCount::Two, 9);
        assert!(matches!(
            map_two_digit(&p, &cobi(), &too_big),
            Err(Error::BaseOutOfRange { q: 9, limit: 8 })
        ));
        let warned = MultiDigitConfig::new(DigitCount::Two, 8);
        let (_, plan) = map_two_digit(&p, &cobi(), &warned).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        let strict = MultiDigitConfig::new(DigitCount::Two, 7);
        let (_, plan) = map_two_digit(&p, &cobi(), &strict).unwrap();
        assert!(plan.warnings.is_empty());
        let heavy = MultiDigitConfig::new(DigitCount::Two, 5).with_penalty(8);
        assert!(matches!(
            map_two_digit(&p, &cobi(), &heavy),
            Err(Error::PenaltyOutOfRange { weight: 8, c_max: 7 })
        ));
    }

    #[test]
    fn plan_json_roundtrip() {
        let p = normalized_random(3, 4);
        let cfg = MultiDigitConfig::new(DigitCount::Two, 5);
        let (_, plan) = map_two_digit(&p, &cobi(), &cfg).unwrap();
        let json = plan.to_json().unwrap();
        assert_eq!(MappingPlan::from_json(&json).unwrap(), plan);
    }
}
