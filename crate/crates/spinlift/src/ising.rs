//! Real-valued Ising problems and exact reference operations.
//!
//! A problem over n spins s_i in {-1,+1} is scored as
//!
//!   E(s) = -sum_{i != j} J_ij s_i s_j  -  sum_i h_i s_i
//!
//! with a full directed coupling matrix J (both J_ij and J_ji are stored;
//! the physical coupling between i and j is their sum) and an optional
//! linear field h. Diagonal entries are forced to zero on construction.

use crate::error::{Error, Result};

/// Largest spin count accepted by exhaustive enumeration.
pub const BRUTE_FORCE_MAX_SPINS: usize = 24;

/// A real-valued Ising problem: directed couplings plus optional fields.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    n: usize,
    j: Vec<f64>,
    h: Option<Vec<f64>>,
}

/// A spin assignment; every entry is exactly +1 or -1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfig {
    values: Vec<i8>,
}

impl SpinConfig {
    pub fn new(values: Vec<i8>) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if value != 1 && value != -1 {
                return Err(Error::InvalidSpinValue { index, value });
            }
        }
        Ok(Self { values })
    }

    /// All spins up.
    pub fn all_up(n: usize) -> Self {
        Self { values: vec![1; n] }
    }

    pub(crate) fn from_raw(values: Vec<i8>) -> Self {
        debug_assert!(values.iter().all(|&v| v == 1 || v == -1));
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Flip every spin in place (global gauge flip).
    pub fn flip_all(&mut self) {
        for v in &mut self.values {
            *v = -*v;
        }
    }

    /// True if `self` precedes `other` lexicographically, reading +1 < -1
    /// from index 0 upward.
    pub fn lex_precedes(&self, other: &SpinConfig) -> bool {
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            if a != b {
                return *a == 1;
            }
        }
        false
    }
}

impl IsingProblem {
    /// Zero problem over `n` spins.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "problem needs at least one spin");
        Self {
            n,
            j: vec![0.0; n * n],
            h: None,
        }
    }

    /// Build from a coupling list; entries accumulate into J_ij.
    pub fn from_couplings(n: usize, couplings: &[(usize, usize, f64)]) -> Self {
        let mut p = Self::new(n);
        for &(i, j, v) in couplings {
            if i != j {
                p.j[i * n + j] += v;
            }
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.j[i * self.n + j]
    }

    /// Sets the directed entry J_ij; diagonal writes are ignored.
    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) {
        if i != j {
            self.j[i * self.n + j] = value;
        }
    }

    /// Physical coupling between i and j: J_ij + J_ji.
    pub fn symmetrized(&self, i: usize, j: usize) -> f64 {
        self.coupling(i, j) + self.coupling(j, i)
    }

    pub fn field(&self, i: usize) -> f64 {
        self.h.as_ref().map_or(0.0, |h| h[i])
    }

    pub fn set_field(&mut self, i: usize, value: f64) {
        self.h.get_or_insert_with(|| vec![0.0; self.n])[i] = value;
    }

    pub fn fields(&self) -> Option<&[f64]> {
        self.h.as_deref()
    }

    /// True if any linear field is nonzero.
    pub fn has_linear_terms(&self) -> bool {
        self.h
            .as_ref()
            .is_some_and(|h| h.iter().any(|&v| v != 0.0))
    }

    /// E(s) = -sum_{i != j} J_ij s_i s_j - sum_i h_i s_i.
    pub fn energy(&self, config: &SpinConfig) -> Result<f64> {
        if config.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: config.len(),
            });
        }
        Ok(self.energy_raw(config.values()))
    }

    fn energy_raw(&self, s: &[i8]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += self.j[i * n + j] * f64::from(s[i] * s[j]);
                }
            }
        }
        if let Some(h) = &self.h {
            for i in 0..n {
                acc += h[i] * f64::from(s[i]);
            }
        }
        -acc
    }

    /// Rescales so the largest of max |J_ij + J_ji| / 2 and max |h_i|
    /// becomes exactly 1, returning the scaled problem and the scale.
    ///
    /// Positive scaling leaves the energy ordering of configurations
    /// unchanged. An all-zero problem has no defined scale and is rejected.
    pub fn normalize(&self) -> Result<(IsingProblem, f64)> {
        let mut scale: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                scale = scale.max(self.symmetrized(i, j).abs() / 2.0);
            }
        }
        if let Some(h) = &self.h {
            for &v in h {
                scale = scale.max(v.abs());
            }
        }
        if scale == 0.0 {
            return Err(Error::AllZero);
        }
        let mut scaled = self.clone();
        for v in &mut scaled.j {
            *v /= scale;
        }
        if let Some(h) = &mut scaled.h {
            for v in h {
                *v /= scale;
            }
        }
        Ok((scaled, scale))
    }

    /// True if every symmetrized coupling magnitude is within 2 (i.e. the
    /// paper-convention coupling |J_ij + J_ji| / 2 is within 1).
    pub fn is_normalized(&self) -> bool {
        self.check_normalized().is_ok()
    }

    pub(crate) fn check_normalized(&self) -> Result<()> {
        const SLACK: f64 = 1e-9;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let magnitude = self.symmetrized(i, j).abs();
                if magnitude > 2.0 + SLACK {
                    return Err(Error::NotNormalized { i, j, magnitude });
                }
            }
        }
        Ok(())
    }

    /// Eliminates linear terms by adding one ancilla spin `a` coupled to
    /// every spin i with J_{a,i} = h_i.
    ///
    /// On the slice where s_a = +1 the new problem's energy equals the old
    /// one's exactly; the global flip symmetry lets any solution be gauged
    /// so that s_a reads +1. Returns the ancilla index, or `None` when the
    /// problem had no linear terms (the couplings are returned unchanged).
    pub fn absorb_linear_terms(&self) -> (IsingProblem, Option<usize>) {
        if !self.has_linear_terms() {
            let mut p = self.clone();
            p.h = None;
            return (p, None);
        }
        let n = self.n;
        let a = n;
        let mut p = IsingProblem::new(n + 1);
        for i in 0..n {
            for j in 0..n {
                p.j[i * (n + 1) + j] = self.j[i * n + j];
            }
        }
        let h = self.h.as_ref().expect("linear terms present");
        for i in 0..n {
            p.j[a * (n + 1) + i] = h[i];
        }
        (p, Some(a))
    }

    /// Exhaustive ground state search.
    ///
    /// Ties are resolved to the lexicographically smallest configuration
    /// (+1 < -1, index 0 most significant), so results are reproducible.
    pub fn brute_force_ground_state(&self) -> Result<(SpinConfig, f64)> {
        if self.n > BRUTE_FORCE_MAX_SPINS {
            return Err(Error::EnumerationBudget {
                n: self.n,
                max: BRUTE_FORCE_MAX_SPINS,
            });
        }
        let n = self.n;
        let mut best_s = vec![1i8; n];
        let mut best_e = self.energy_raw(&best_s);
        let mut s = vec![1i8; n];
        // Counter bits map to spins with index 0 as the most significant
        // bit and +1 ordered before -1, so the visit order is exactly the
        // lexicographic order used for tie-breaking.
        for c in 1u64..(1u64 << n) {
            for i in 0..n {
                s[i] = if (c >> (n - 1 - i)) & 1 == 0 { 1 } else { -1 };
            }
            let e = self.energy_raw(&s);
            if e < best_e {
                best_e = e;
                best_s.copy_from_slice(&s);
            }
        }
        Ok((SpinConfig::from_raw(best_s), best_e))
    }

    /// Parses the plain-text problem format:
    ///
    /// ```text
    /// n
    /// i j J_ij
    /// h i value
    /// ```
    ///
    /// Indices are 0-based; `#` starts a comment line. Coupling lines
    /// accumulate into J_ij; out-of-range indices are rejected.
    pub fn from_text(text: &str) -> Result<IsingProblem> {
        let ctx = "problem file";
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (no, first) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, "empty file"))?;
        let n: usize = first
            .parse()
            .map_err(|_| Error::parse(ctx, format!("line {no}: expected spin count, got {first:?}")))?;
        if n == 0 {
            return Err(Error::parse(ctx, format!("line {no}: spin count must be positive")));
        }
        let mut p = IsingProblem::new(n);
        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: &str| Error::parse(ctx, format!("line {no}: {msg}"));
            if fields.len() == 3 && fields[0] == "h" {
                let i: usize = fields[1].parse().map_err(|_| bad("bad spin index"))?;
                let v: f64 = fields[2].parse().map_err(|_| bad("bad field value"))?;
                if i >= n {
                    return Err(bad(&format!("spin index {i} out of range for n={n}")));
                }
                p.set_field(i, v);
            } else if fields.len() == 3 {
                let i: usize = fields[0].parse().map_err(|_| bad("bad spin index"))?;
                let j: usize = fields[1].parse().map_err(|_| bad("bad spin index"))?;
                let v: f64 = fields[2].parse().map_err(|_| bad("bad coupling value"))?;
                if i >= n || j >= n {
                    return Err(bad(&format!("indices ({i},{j}) out of range for n={n}")));
                }
                if i == j {
                    return Err(bad("diagonal couplings are not allowed"));
                }
                p.j[i * n + j] += v;
            } else {
                return Err(bad("expected \"i j J_ij\" or \"h i value\""));
            }
        }
        Ok(p)
    }

    /// Serializes to the plain-text problem format; zero entries are omitted.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.j[i * self.n + j];
                if v != 0.0 {
                    out.push_str(&format!("{i} {j} {v}\n"));
                }
            }
        }
        if let Some(h) = &self.h {
            for (i, &v) in h.iter().enumerate() {
                if v != 0.0 {
                    out.push_str(&format!("h {i} {v}\n"));
                }
            }
        }
        out
    }
}
