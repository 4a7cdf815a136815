//! Hardware profiles for precision-limited Ising solvers and the integer
//! device programs they run.
//!
//! A profile bounds every directed coupling entry K_ij to integers in
//! [-c_max, c_max] and caps the spin count. The physical coupling between
//! two spins is K_ij + K_ji, so each pair offers 2*c_max+1 usable levels
//! on either side of zero. `native_quantize` is the baseline mapping:
//! scale-and-round straight into the device range, ceil/floor split across
//! the two directed entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{IsingProblem, SpinConfig};

/// Integer-precision limits of an Ising solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareProfile {
    /// Per-directed-entry coupling bound; entries live in [-c_max, c_max].
    pub c_max: i64,
    /// Largest spin count the device accepts.
    pub max_spins: usize,
}

impl HardwareProfile {
    pub fn new(c_max: i64, max_spins: usize) -> Self {
        assert!(c_max >= 1 && max_spins >= 2, "degenerate hardware profile");
        Self { c_max, max_spins }
    }

    /// The COBI oscillator chip: 29 coupling levels per pair
    /// (pair totals in [-14, 14]) and at most 59 spins.
    pub fn cobi() -> Self {
        Self { c_max: 7, max_spins: 59 }
    }

    /// Parses the key-value profile format (`c_max 7`, `max_spins 59`).
    pub fn from_text(text: &str) -> Result<Self> {
        let ctx = "profile file";
        let mut c_max = None;
        let mut max_spins = None;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let value = parts
                .next()
                .ok_or_else(|| Error::parse(ctx, format!("line {}: missing value", no + 1)))?;
            match key {
                "c_max" => {
                    c_max = Some(value.parse::<i64>().map_err(|_| {
                        Error::parse(ctx, format!("line {}: bad c_max", no + 1))
                    })?)
                }
                "max_spins" => {
                    max_spins = Some(value.parse::<usize>().map_err(|_| {
                        Error::parse(ctx, format!("line {}: bad max_spins", no + 1))
                    })?)
                }
                other => {
                    return Err(Error::parse(ctx, format!("line {}: unknown key {other:?}", no + 1)))
                }
            }
        }
        match (c_max, max_spins) {
            (Some(c), Some(m)) if c >= 1 && m >= 2 => Ok(Self { c_max: c, max_spins: m }),
            (Some(_), Some(_)) => Err(Error::parse(ctx, "c_max must be >= 1 and max_spins >= 2")),
            _ => Err(Error::parse(ctx, "both c_max and max_spins are required")),
        }
    }

    pub fn to_text(&self) -> String {
        format!("c_max {}\nmax_spins {}\n", self.c_max, self.max_spins)
    }
}

/// An integer coupling program: what a chip (or its emulator) runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceProgram {
    n_spins: usize,
    k: Vec<i64>,
}

impl DeviceProgram {
    /// Zero program over `n_spins` spins.
    pub fn new(n_spins: usize) -> Self {
        assert!(n_spins >= 1, "program needs at least one spin");
        Self {
            n_spins,
            k: vec![0; n_spins * n_spins],
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn entry(&self, i: usize, j: usize) -> i64 {
        self.k[i * self.n_spins + j]
    }

    /// Sets the directed entry K_ij; diagonal writes are ignored.
    pub fn set_entry(&mut self, i: usize, j: usize, value: i64) {
        if i != j {
            self.k[i * self.n_spins + j] = value;
        }
    }

    pub fn add_entry(&mut self, i: usize, j: usize, value: i64) {
        if i != j {
            self.k[i * self.n_spins + j] += value;
        }
    }

    /// Pair total K_ij + K_ji.
    pub fn pair_total(&self, i: usize, j: usize) -> i64 {
        self.entry(i, j) + self.entry(j, i)
    }

    /// E(s) = -sum_{i != j} K_ij s_i s_j, exact in integers.
    pub fn energy(&self, config: &SpinConfig) -> Result<i64> {
        if config.len() != self.n_spins {
            return Err(Error::DimensionMismatch {
                expected: self.n_spins,
                actual: config.len(),
            });
        }
        Ok(self.energy_raw(config.values()))
    }

    pub(crate) fn energy_raw(&self, s: &[i8]) -> i64 {
        let n = self.n_spins;
        let mut acc = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let total = self.k[i * n + j] + self.k[j * n + i];
                if total != 0 {
                    acc += total * i64::from(s[i] * s[j]);
                }
            }
        }
        -acc
    }

    /// Symmetric pair totals W_ij = K_ij + K_ji, row-major.
    pub(crate) fn pair_totals(&self) -> Vec<i64> {
        let n = self.n_spins;
        let mut w = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    w[i * n + j] = self.k[i * n + j] + self.k[j * n + i];
                }
            }
        }
        w
    }

    /// The real-valued problem with the same energy function.
    pub fn to_ising(&self) -> IsingProblem {
        let mut p = IsingProblem::new(self.n_spins);
        for i in 0..self.n_spins {
            for j in 0..self.n_spins {
                if i != j {
                    p.set_coupling(i, j, self.entry(i, j) as f64);
                }
            }
        }
        p
    }

    /// Checks every profile bound and reports all violations at once.
    pub fn validate(&self, profile: &HardwareProfile) -> ValidationReport {
        let mut violations = Vec::new();
        if self.n_spins > profile.max_spins {
            violations.push(Violation::SpinBudget {
                spins: self.n_spins,
                budget: profile.max_spins,
            });
        }
        for i in 0..self.n_spins {
            let diag = self.k[i * self.n_spins + i];
            if diag != 0 {
                violations.push(Violation::NonzeroDiagonal { index: i, value: diag });
            }
            for j in 0..self.n_spins {
                let value = self.k[i * self.n_spins + j];
                if i != j && value.abs() > profile.c_max {
                    violations.push(Violation::CouplingOutOfRange {
                        i,
                        j,
                        value,
                        bound: profile.c_max,
                    });
                }
            }
        }
        ValidationReport { violations }
    }

    /// Parses the device-program interchange format:
    ///
    /// ```text
    /// spins N
    /// i j K_ij
    /// ```
    ///
    /// One line per nonzero directed entry, integer K, 0-based indices.
    pub fn from_text(text: &str) -> Result<DeviceProgram> {
        let ctx = "program file";
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(no, l)| (no + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (no, first) = lines
            .next()
            .ok_or_else(|| Error::parse(ctx, "empty file"))?;
        let n: usize = first
            .strip_prefix("spins")
            .map(str::trim)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(ctx, format!("line {no}: expected \"spins N\"")))?;
        if n == 0 {
            return Err(Error::parse(ctx, format!("line {no}: spin count must be positive")));
        }
        let mut program = DeviceProgram::new(n);
        for (no, line) in lines {
            let bad = |msg: &str| Error::parse(ctx, format!("line {no}: {msg}"));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected \"i j K_ij\""));
            }
            let i: usize = fields[0].parse().map_err(|_| bad("bad spin index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad("bad spin index"))?;
            let k: i64 = fields[2].parse().map_err(|_| bad("bad integer coupling"))?;
            if i >= n || j >= n {
                return Err(bad(&format!("indices ({i},{j}) out of range for spins={n}")));
            }
            if i == j {
                return Err(bad("diagonal entries are not allowed"));
            }
            program.k[i * n + j] = k;
        }
        Ok(program)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("spins {}\n", self.n_spins);
        for i in 0..self.n_spins {
            for j in 0..self.n_spins {
                let v = self.k[i * self.n_spins + j];
                if v != 0 {
                    out.push_str(&format!("{i} {j} {v}\n"));
                }
            }
        }
        out
    }
}

/// A single profile violation found by [`DeviceProgram::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    CouplingOutOfRange { i: usize, j: usize, value: i64, bound: i64 },
    SpinBudget { spins: usize, budget: usize },
    NonzeroDiagonal { index: usize, value: i64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::CouplingOutOfRange { i, j, value, bound } => {
                write!(f, "coupling ({i},{j}) = {value} exceeds |K| <= {bound}")
            }
            Violation::SpinBudget { spins, budget } => {
                write!(f, "{spins} spins exceed the device budget of {budget}")
            }
            Violation::NonzeroDiagonal { index, value } => {
                write!(f, "diagonal entry ({index},{index}) = {value} must be zero")
            }
        }
    }
}

/// Everything wrong with a program, or nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidProgram(self.to_string()))
        }
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            write!(f, "{}", lines.join("\n"))
        }
    }
}

/// Splits an integer pair total across the two directed entries:
/// the (i, j) entry takes the ceiling half, (j, i) the floor half.
pub(crate) fn split_pair_total(total: i64) -> (i64, i64) {
    (total.div_euclid(2) + total.rem_euclid(2), total.div_euclid(2))
}

/// Ceil/floor of c_max * (J_ij + J_ji) / 2 as the two directed entries.
pub(crate) fn quantize_pair(sym: f64, bound: i64) -> (i64, i64) {
    let x = (bound as f64 * sym / 2.0).clamp(-(bound as f64), bound as f64);
    (x.ceil() as i64, x.floor() as i64)
}

/// Scale-and-round baseline mapping into the device range.
///
/// For each pair, with x = c_max * (J_ij + J_ji) / 2: K_ij = ceil(x) and
/// K_ji = floor(x), where i < j. The input must be normalized and free of
/// linear terms.
pub fn native_quantize(problem: &IsingProblem, profile: &HardwareProfile) -> Result<DeviceProgram> {
    problem.check_normalized()?;
    if problem.has_linear_terms() {
        return Err(Error::LinearTermsPresent);
    }
    if problem.n() > profile.max_spins {
        return Err(Error::SpinBudget {
            required: problem.n(),
            available: profile.max_spins,
        });
    }
    let mut program = DeviceProgram::new(problem.n());
    for i in 0..problem.n() {
        for j in (i + 1)..problem.n() {
            let (hi, lo) = quantize_pair(problem.symmetrized(i, j), profile.c_max);
            program.set_entry(i, j, hi);
            program.set_entry(j, i, lo);
        }
    }
    debug_assert!(program.validate(profile).is_valid());
    Ok(program)
}
