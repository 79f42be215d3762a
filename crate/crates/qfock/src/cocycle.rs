//! Group cocycles with values in the left regular representation, and the continuous-time
//! Markov chain on tuples of non-identity elements whose non-explosion is equivalent to
//! stationarity of the associated free SPDE.
//!
//! Cocycles take values in `iℝ`; only imaginary parts are stored, and every quantity used by
//! the chain is a squared modulus.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Default cap on the generator length of group elements passed to [`CocycleSpec::value`].
pub const DEFAULT_WORD_CAP: usize = 1 << 20;

/// Hat norms within this distance below zero are rounding and clamped to 0.
pub const HAT_TOLERANCE: f64 = 1e-12;

/// `ℤ` or the free group `F_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Int,
    Free(usize),
}

/// A group element: an integer for `ℤ`, a freely reduced word for `F_k` with letter `g + 1`
/// for generator `g` and `-(g + 1)` for its inverse.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    Int(i64),
    Free(Vec<i32>),
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Int(n) => write!(f, "{n}"),
            Element::Free(w) if w.is_empty() => write!(f, "e"),
            Element::Free(w) => {
                for &l in w {
                    let c = b'a' + (l.unsigned_abs() - 1) as u8;
                    let c = if l < 0 { c.to_ascii_uppercase() } else { c };
                    write!(f, "{}", c as char)?;
                }
                Ok(())
            }
        }
    }
}

impl Group {
    pub fn identity(&self) -> Element {
        match self {
            Group::Int => Element::Int(0),
            Group::Free(_) => Element::Free(Vec::new()),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Group::Int => 1,
            Group::Free(k) => *k,
        }
    }

    fn kind_error(&self, x: &Element) -> Error {
        Error::Spec(format!("element {x} does not belong to {self:?}"))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Result<Element> {
        match (self, a, b) {
            (Group::Int, Element::Int(x), Element::Int(y)) => {
                x.checked_add(*y).map(Element::Int).ok_or_else(|| Error::Spec("integer overflow".into()))
            }
            (Group::Free(_), Element::Free(x), Element::Free(y)) => {
                let mut out = x.clone();
                for &l in y {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                Ok(Element::Free(out))
            }
            _ if !self.contains(a) => Err(self.kind_error(a)),
            _ => Err(self.kind_error(b)),
        }
    }

    pub fn inv(&self, a: &Element) -> Element {
        match a {
            Element::Int(x) => Element::Int(-x),
            Element::Free(w) => Element::Free(w.iter().rev().map(|l| -l).collect()),
        }
    }

    pub fn contains(&self, a: &Element) -> bool {
        match (self, a) {
            (Group::Int, Element::Int(_)) => true,
            (Group::Free(k), Element::Free(w)) => {
                w.iter().all(|l| *l != 0 && l.unsigned_abs() as usize <= *k) && w.windows(2).all(|p| p[0] != -p[1])
            }
            _ => false,
        }
    }

    pub fn is_identity(&self, a: &Element) -> bool {
        *a == self.identity()
    }

    /// The generator letters of `a` as `(generator, inverted)` pairs, left to right.
    pub fn letters(&self, a: &Element) -> Vec<(usize, bool)> {
        match a {
            Element::Int(n) => vec![(0, *n < 0); n.unsigned_abs() as usize],
            Element::Free(w) => w.iter().map(|l| (l.unsigned_abs() as usize - 1, *l < 0)).collect(),
        }
    }

    fn generator_length(&self, a: &Element) -> usize {
        match a {
            Element::Int(n) => n.unsigned_abs() as usize,
            Element::Free(w) => w.len(),
        }
    }

    pub fn generator(&self, g: usize) -> Element {
        match self {
            Group::Int => Element::Int(1),
            Group::Free(_) => Element::Free(vec![g as i32 + 1]),
        }
    }

    /// Name of generator `g` in the JSON schema: `"1"` for `ℤ`, `"a"`, `"b"`, … for `F_k`.
    pub fn generator_name(&self, g: usize) -> String {
        self.generator(g).to_string()
    }

    /// Parses `"-3"` for `ℤ` or `"aBb"` style words (capitals are inverses) for `F_k`; the
    /// result is freely reduced. `"e"` and `""` are the identity of `F_k`.
    pub fn parse_element(&self, s: &str) -> Result<Element> {
        let s = s.trim();
        match self {
            Group::Int => s.parse::<i64>().map(Element::Int).map_err(|_| Error::Spec(format!("`{s}` is not an integer"))),
            Group::Free(k) => {
                let mut out = Element::Free(Vec::new());
                if s == "e" {
                    return Ok(out);
                }
                for ch in s.chars() {
                    let lower = ch.to_ascii_lowercase();
                    if !lower.is_ascii_lowercase() || (lower as usize - 'a' as usize) >= *k {
                        return Err(Error::Spec(format!("`{ch}` is not a generator of the free group of rank {k}")));
                    }
                    let g = (lower as u8 - b'a') as i32 + 1;
                    let l = if ch.is_ascii_uppercase() { -g } else { g };
                    out = self.mul(&out, &Element::Free(vec![l]))?;
                }
                Ok(out)
            }
        }
    }

    fn parse_json_element(&self, v: &serde_json::Value) -> Result<Element> {
        match (self, v) {
            (Group::Int, serde_json::Value::Number(n)) => {
                n.as_i64().map(Element::Int).ok_or_else(|| Error::Spec(format!("element {n} is not an integer")))
            }
            (Group::Free(_), serde_json::Value::String(s)) => self.parse_element(s),
            (Group::Int, _) => Err(Error::Spec(format!("integer-group elements must be integers, got {v}"))),
            (Group::Free(_), _) => Err(Error::Spec(format!("free-group elements must be strings, got {v}"))),
        }
    }
}

/// A finitely supported function `Γ → iℝ`, stored by imaginary part.
pub type Chain = BTreeMap<Element, f64>;

fn add_into(acc: &mut Chain, group: &Group, shift: &Element, c: &Chain, sign: f64) -> Result<()> {
    for (x, v) in c {
        let y = group.mul(shift, x)?;
        let e = acc.entry(y.clone()).or_insert(0.0);
        *e += sign * v;
        if *e == 0.0 {
            acc.remove(&y);
        }
    }
    Ok(())
}

pub fn norm_sq(c: &Chain) -> f64 {
    c.values().map(|v| v * v).sum()
}

/// Cocycles `c_1, …, c_N` given by their values on generators.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleSpec {
    group: Group,
    /// `generator_values[j][g]` is `c_j` of generator `g`.
    generator_values: Vec<Vec<Chain>>,
    word_cap: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGroup {
    kind: String,
    rank: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValue {
    element: serde_json::Value,
    imag: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCocycle {
    generator_values: BTreeMap<String, Vec<RawValue>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    group: RawGroup,
    cocycles: Vec<RawCocycle>,
}

impl CocycleSpec {
    pub fn new(group: Group, generator_values: Vec<Vec<Chain>>) -> Result<Self> {
        if let Group::Free(0) = group {
            return Err(Error::Spec("free group rank must be at least 1".into()));
        }
        if generator_values.is_empty() {
            return Err(Error::Spec("at least one cocycle is required".into()));
        }
        for (j, c) in generator_values.iter().enumerate() {
            if c.len() != group.rank() {
                return Err(Error::Spec(format!("cocycle {j} has {} generator values, rank is {}", c.len(), group.rank())));
            }
            for x in c.iter().flat_map(|m| m.keys()) {
                if !group.contains(x) {
                    return Err(group.kind_error(x));
                }
            }
        }
        Ok(CocycleSpec {
            group,
            generator_values,
            word_cap: DEFAULT_WORD_CAP,
        })
    }

    /// Parses the JSON schema
    /// `{"group": {"kind": "int"|"free", "rank": k}, "cocycles": [{"generator_values": {...}}]}`.
    /// Generators missing from `generator_values` have value 0.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        let group = match (raw.group.kind.as_str(), raw.group.rank) {
            ("int", None | Some(1)) => Group::Int,
            ("int", Some(r)) => return Err(Error::Spec(format!("group.rank: the integer group has rank 1, got {r}"))),
            ("free", Some(k)) if (1..=26).contains(&k) => Group::Free(k),
            ("free", Some(k)) => return Err(Error::Spec(format!("group.rank: free group rank must be in 1..=26, got {k}"))),
            ("free", None) => return Err(Error::Spec("group.rank: required for a free group".into())),
            (other, _) => return Err(Error::Spec(format!("group.kind: expected \"int\" or \"free\", got \"{other}\""))),
        };
        let mut values = Vec::with_capacity(raw.cocycles.len());
        for (j, c) in raw.cocycles.iter().enumerate() {
            let mut per_gen = vec![Chain::new(); group.rank()];
            for (name, entries) in &c.generator_values {
                let g = (0..group.rank())
                    .find(|&g| group.generator_name(g) == *name)
                    .ok_or_else(|| Error::Spec(format!("cocycles[{j}].generator_values: unknown generator `{name}`")))?;
                for (k, e) in entries.iter().enumerate() {
                    let x = group
                        .parse_json_element(&e.element)
                        .map_err(|err| Error::Spec(format!("cocycles[{j}].generator_values.{name}[{k}].element: {err}")))?;
                    if !e.imag.is_finite() {
                        return Err(Error::Spec(format!("cocycles[{j}].generator_values.{name}[{k}].imag: not finite")));
                    }
                    *per_gen[g].entry(x).or_insert(0.0) += e.imag;
                }
                per_gen[g].retain(|_, v| *v != 0.0);
            }
            values.push(per_gen);
        }
        Self::new(group, values)
    }

    pub fn with_word_cap(mut self, cap: usize) -> Self {
        self.word_cap = cap;
        self
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn n_cocycles(&self) -> usize {
        self.generator_values.len()
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j >= self.n_cocycles() {
            return Err(Error::Invalid(format!("cocycle index {j} out of range (N = {})", self.n_cocycles())));
        }
        Ok(())
    }

    /// `c_j(γ)` by the extension `c(s_1 ⋯ s_k) = Σ_m s_1 ⋯ s_{m−1} · c(s_m)`, with
    /// `c(g^{-1}) = −g^{-1} · c(g)`.
    pub fn value(&self, j: usize, gamma: &Element) -> Result<Chain> {
        self.check_j(j)?;
        if !self.group.contains(gamma) {
            return Err(self.group.kind_error(gamma));
        }
        let len = self.group.generator_length(gamma);
        if len > self.word_cap {
            return Err(Error::WordLength { len, cap: self.word_cap });
        }
        let mut acc = Chain::new();
        let mut prefix = self.group.identity();
        for (g, inverted) in self.group.letters(gamma) {
            let gen = self.group.generator(g);
            let step = if inverted { self.group.inv(&gen) } else { gen };
            if inverted {
                let shift = self.group.mul(&prefix, &step)?;
                add_into(&mut acc, &self.group, &shift, &self.generator_values[j][g], -1.0)?;
            } else {
                add_into(&mut acc, &self.group, &prefix, &self.generator_values[j][g], 1.0)?;
            }
            prefix = self.group.mul(&prefix, &step)?;
        }
        Ok(acc)
    }

    /// For `ℤ`, the largest deviation between `c(γ)` and the value obtained from the
    /// decomposition `γ = (γ + 1) + (−1)`, which passes through a cancellation. Reduced
    /// words in a free group are unique, so there is nothing to compare there.
    pub fn consistency_residual(&self, j: usize, gamma: &Element) -> Result<Option<f64>> {
        if self.group != Group::Int {
            return Ok(None);
        }
        let Element::Int(n) = gamma else {
            return Err(self.group.kind_error(gamma));
        };
        let direct = self.value(j, gamma)?;
        let up = Element::Int(n + 1);
        let mut alt = self.value(j, &up)?;
        add_into(&mut alt, &self.group, &up, &self.value(j, &Element::Int(-1))?, 1.0)?;
        let mut diff = alt;
        add_into(&mut diff, &self.group, &self.group.identity(), &direct, -1.0)?;
        Ok(Some(diff.values().fold(0.0f64, |m, v| m.max(v.abs()))))
    }

    /// `‖ĉ_j(γ)‖² = ‖c_j(γ)‖² − |⟨γ, c_j(γ)⟩|² − |⟨e, c_j(γ)⟩|²`.
    pub fn hat_norm_sq(&self, j: usize, gamma: &Element) -> Result<f64> {
        if self.group.is_identity(gamma) {
            return Err(Error::Invalid("hat norm is defined for non-identity elements only".into()));
        }
        let c = self.value(j, gamma)?;
        let at = |x: &Element| c.get(x).copied().unwrap_or(0.0);
        let id = self.group.identity();
        let v = norm_sq(&c) - at(gamma).powi(2) - at(&id).powi(2);
        if v < 0.0 {
            if v < -HAT_TOLERANCE * norm_sq(&c).max(1.0) {
                return Err(Error::NegativeHatNorm { value: v });
            }
            log::warn!("hat norm {v:e} at {gamma} clamped to 0");
            return Ok(0.0);
        }
        Ok(v)
    }

    /// `R(γ_1, …, γ_n) = Σ_i Σ_j ‖ĉ_j(γ_i)‖²`.
    pub fn rate(&self, state: &ChainState) -> Result<f64> {
        let mut r = 0.0;
        for g in state.parts() {
            for j in 0..self.n_cocycles() {
                r += self.hat_norm_sq(j, g)?;
            }
        }
        Ok(r)
    }

    /// Splits `γ_i = δ δ'` with `δ` in the support of some `c_j(γ_i)` minus `{e, γ_i}`, each
    /// with probability `Σ_j |⟨δ, c_j(γ_i)⟩|² / R`. Ordered by part index, then by `δ`.
    pub fn transitions(&self, state: &ChainState) -> Result<Vec<(ChainState, f64)>> {
        let r = self.rate(state)?;
        if r == 0.0 {
            return Err(Error::AbsorbingState);
        }
        let id = self.group.identity();
        let mut out = Vec::new();
        for (i, g) in state.parts().iter().enumerate() {
            let mut weights = Chain::new();
            for j in 0..self.n_cocycles() {
                for (d, v) in self.value(j, g)? {
                    if d != id && d != *g {
                        *weights.entry(d).or_insert(0.0) += v * v;
                    }
                }
            }
            for (d, w) in weights {
                let rest = self.group.mul(&self.group.inv(&d), g)?;
                let mut parts = state.parts().to_vec();
                parts.splice(i..=i, [d, rest]);
                out.push((ChainState { parts }, w / r));
            }
        }
        Ok(out)
    }

    /// Product `γ_1 ⋯ γ_n`, conserved by every transition.
    pub fn product(&self, state: &ChainState) -> Result<Element> {
        state.parts().iter().try_fold(self.group.identity(), |acc, g| self.group.mul(&acc, g))
    }

    /// Parses a comma-separated list of non-identity elements, e.g. `"5"` or `"ab,B"`.
    pub fn parse_state(&self, s: &str) -> Result<ChainState> {
        let parts = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| self.group.parse_element(p))
            .collect::<Result<Vec<_>>>()?;
        ChainState::new(&self.group, parts)
    }
}

/// A finite tuple of non-identity elements.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChainState {
    parts: Vec<Element>,
}

impl ChainState {
    pub fn new(group: &Group, parts: Vec<Element>) -> Result<Self> {
        for p in &parts {
            if !group.contains(p) {
                return Err(group.kind_error(p));
            }
            if group.is_identity(p) {
                return Err(Error::Invalid("chain states cannot contain the identity".into()));
            }
        }
        Ok(ChainState { parts })
    }

    pub fn parts(&self) -> &[Element] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.parts.iter().map(ToString::to_string).collect();
        write!(f, "({})", s.join(","))
    }
}

/// How a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// A rate-0 state was reached before the horizon.
    Absorbed,
    /// `max_jumps` jumps happened before the horizon.
    Censored,
    /// Still jumping at the horizon.
    Active,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub jumps: usize,
    /// Absorption or censoring time; the horizon for active paths.
    pub end_time: f64,
    pub outcome: Outcome,
    /// Jumps at which the product of the parts changed or the length did not grow by one.
    pub invariant_violations: usize,
    /// Largest `|Σ p − 1|` over the visited non-absorbing states.
    pub probability_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub horizon: f64,
    pub n_paths: usize,
    pub max_jumps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub init: ChainState,
    pub params: SimParams,
    pub jump_counts: Vec<usize>,
    pub end_times: Vec<f64>,
    pub absorbed: usize,
    pub censored: usize,
    pub active: usize,
    pub invariant_violations: usize,
    pub probability_residual: f64,
    /// Fraction of paths without a censoring event before the horizon.
    pub survival: f64,
    /// 95% normal-approximation half-width for `survival`.
    pub survival_half_width: f64,
}

/// Gillespie simulation of one path on the stream `path` of `seed`.
pub fn simulate_path(spec: &CocycleSpec, init: &ChainState, params: &SimParams, path: u64) -> Result<PathRecord> {
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    rng.set_stream(path);
    let product = spec.product(init)?;
    let mut state = init.clone();
    let mut t = 0.0;
    let mut rec = PathRecord {
        jumps: 0,
        end_time: 0.0,
        outcome: Outcome::Active,
        invariant_violations: 0,
        probability_residual: 0.0,
    };
    loop {
        let r = spec.rate(&state)?;
        if r == 0.0 {
            rec.outcome = Outcome::Absorbed;
            rec.end_time = t;
            return Ok(rec);
        }
        if rec.jumps >= params.max_jumps {
            rec.outcome = Outcome::Censored;
            rec.end_time = t;
            return Ok(rec);
        }
        let hold = Exp::new(r).map_err(|e| Error::Invalid(e.to_string()))?.sample(&mut rng);
        if t + hold > params.horizon {
            rec.end_time = params.horizon;
            return Ok(rec);
        }
        t += hold;
        let moves = spec.transitions(&state)?;
        let total: f64 = moves.iter().map(|(_, p)| p).sum();
        rec.probability_residual = rec.probability_residual.max((total - 1.0).abs());
        let u: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut next = moves.len() - 1;
        for (k, (_, p)) in moves.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        let new_state = moves.into_iter().nth(next).expect("index in range").0;
        if new_state.len() != state.len() + 1 || spec.product(&new_state)? != product {
            rec.invariant_violations += 1;
        }
        state = new_state;
        rec.jumps += 1;
    }
}

/// Runs `n_paths` independent paths in parallel; the result does not depend on the
/// thread count.
pub fn simulate(spec: &CocycleSpec, init: &ChainState, params: &SimParams) -> Result<SimReport> {
    if params.max_jumps == 0 {
        return Err(Error::Invalid("max_jumps must be at least 1".into()));
    }
    if params.horizon.is_nan() || params.horizon < 0.0 {
        return Err(Error::Invalid("horizon must be non-negative".into()));
    }
    let records: Vec<PathRecord> = (0..params.n_paths as u64)
        .into_par_iter()
        .map(|p| simulate_path(spec, init, params, p))
        .collect::<Result<_>>()?;
    let count = |o: Outcome| records.iter().filter(|r| r.outcome == o).count();
    let (absorbed, censored, active) = (count(Outcome::Absorbed), count(Outcome::Censored), count(Outcome::Active));
    let n = params.n_paths.max(1) as f64;
    let survival = if params.n_paths == 0 { 1.0 } else { 1.0 - censored as f64 / n };
    Ok(SimReport {
        init: init.clone(),
        params: params.clone(),
        jump_counts: records.iter().map(|r| r.jumps).collect(),
        end_times: records.iter().map(|r| r.end_time).collect(),
        absorbed,
        censored,
        active,
        invariant_violations: records.iter().map(|r| r.invariant_violations).sum(),
        probability_residual: records.iter().map(|r| r.probability_residual).fold(0.0, f64::max),
        survival,
        survival_half_width: 1.96 * (survival * (1.0 - survival) / n).sqrt(),
    })
}

/// The `ℤ` cocycle with `c(1) = i δ_0`: every `n > 0` splits into positive parts until all
/// parts equal 1.
pub fn z_splitting() -> CocycleSpec {
    let mut c1 = Chain::new();
    c1.insert(Element::Int(0), 1.0);
    CocycleSpec::new(Group::Int, vec![vec![c1]]).expect("valid spec")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ints(v: &[i64]) -> ChainState {
        ChainState::new(&Group::Int, v.iter().map(|&x| Element::Int(x)).collect()).unwrap()
    }

    fn free_spec() -> CocycleSpec {
        CocycleSpec::from_json(
            r#"{"group": {"kind": "free", "rank": 2}, "cocycles": [
                {"generator_values": {"a": [{"element": "e", "imag": 1.0}, {"element": "b", "imag": -0.5}],
                                      "b": [{"element": "aB", "imag": 0.25}]}},
                {"generator_values": {"b": [{"element": "e", "imag": 2.0}]}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn z_splitting_values() {
        let s = z_splitting();
        assert!(s.value(0, &Element::Int(0)).unwrap().is_empty());
        for n in 1..10i64 {
            let c = s.value(0, &Element::Int(n)).unwrap();
            let want: Chain = (0..n).map(|k| (Element::Int(k), 1.0)).collect();
            assert_eq!(c, want);
            assert_eq!(s.hat_norm_sq(0, &Element::Int(n)).unwrap(), (n - 1) as f64);
            let neg = s.value(0, &Element::Int(-n)).unwrap();
            let want: Chain = (1..=n).map(|k| (Element::Int(-k), -1.0)).collect();
            assert_eq!(neg, want);
            assert_eq!(s.consistency_residual(0, &Element::Int(n)).unwrap(), Some(0.0));
            assert_eq!(s.consistency_residual(0, &Element::Int(-n)).unwrap(), Some(0.0));
        }
        assert_eq!(s.rate(&ints(&[3])).unwrap(), 2.0);
        assert_eq!(s.rate(&ints(&[1, 1, 1])).unwrap(), 0.0);
        assert_eq!(s.rate(&ints(&[])).unwrap(), 0.0);
        let t = s.transitions(&ints(&[3])).unwrap();
        assert_eq!(t, vec![(ints(&[1, 2]), 0.5), (ints(&[2, 1]), 0.5)]);
        assert_eq!(s.transitions(&ints(&[1])), Err(Error::AbsorbingState));
        assert!(matches!(s.hat_norm_sq(0, &Element::Int(0)), Err(Error::Invalid(_))));
    }

    #[test]
    fn inverse_rule_and_identity() {
        let s = free_spec();
        let g = s.group();
        for w in ["a", "bA", "abAB", "BBa"] {
            let x = g.parse_element(w).unwrap();
            for j in 0..2 {
                let c = s.value(j, &x).unwrap();
                let mut back = s.value(j, &g.inv(&x)).unwrap();
                add_into(&mut back, &g, &g.inv(&x), &c, 1.0).unwrap();
                assert!(back.values().all(|v| v.abs() < 1e-15), "{w}");
            }
        }
        assert!(s.value(0, &g.identity()).unwrap().is_empty());
        assert_eq!(g.parse_element("aAbB").unwrap(), g.identity());
        assert_eq!(g.parse_element("abA").unwrap().to_string(), "abA");
    }

    #[test]
    fn word_cap_is_enforced() {
        let s = z_splitting().with_word_cap(10);
        assert!(matches!(s.value(0, &Element::Int(11)), Err(Error::WordLength { len: 11, cap: 10 })));
    }

    #[test]
    fn endpoint_supported_cocycles_absorb() {
        // c(1) = i(δ_0 − δ_1) is supported on {e, γ} at γ = 1, and c(n) = i(δ_0 − δ_n).
        let mut c1 = Chain::new();
        c1.insert(Element::Int(0), 1.0);
        c1.insert(Element::Int(1), -1.0);
        let s = CocycleSpec::new(Group::Int, vec![vec![c1]]).unwrap();
        for n in [1i64, 2, 5, -3] {
            assert_eq!(s.hat_norm_sq(0, &Element::Int(n)).unwrap(), 0.0);
        }
        let p = SimParams {
            horizon: 10.0,
            n_paths: 20,
            max_jumps: 5,
            seed: 1,
        };
        let r = simulate(&s, &ints(&[4, -2]), &p).unwrap();
        assert_eq!(r.absorbed, 20);
        assert!(r.jump_counts.iter().all(|&j| j == 0));
        assert_eq!(r.survival, 1.0);
    }

    #[test]
    fn simulation_absorbs_in_m_minus_one_jumps() {
        let s = z_splitting();
        let p = SimParams {
            horizon: 1e9,
            n_paths: 500,
            max_jumps: 100,
            seed: 7,
        };
        for m in 1..=8i64 {
            let r = simulate(&s, &ints(&[m]), &p).unwrap();
            assert_eq!(r.absorbed, 500);
            assert!(r.jump_counts.iter().all(|&j| j as i64 == m - 1));
            assert_eq!(r.invariant_violations, 0);
            assert!(r.probability_residual <= 1e-12);
        }
        let a = simulate(&s, &ints(&[6]), &p).unwrap();
        let b = simulate(&s, &ints(&[6]), &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn censoring_and_horizon() {
        let s = z_splitting();
        let p = SimParams {
            horizon: 1e9,
            n_paths: 10,
            max_jumps: 2,
            seed: 3,
        };
        let r = simulate(&s, &ints(&[6]), &p).unwrap();
        assert_eq!((r.censored, r.absorbed, r.active), (10, 0, 0));
        assert_eq!(r.survival, 0.0);
        let p = SimParams { horizon: 0.0, ..p };
        let r = simulate(&s, &ints(&[6]), &p).unwrap();
        assert_eq!(r.active, 10);
        assert!(simulate(&s, &ints(&[6]), &SimParams { max_jumps: 0, ..p }).is_err());
    }

    #[test]
    fn spec_errors_name_the_field() {
        let bad = [
            r#"{"group": {"kind": "ring"}, "cocycles": []}"#,
            r#"{"group": {"kind": "int"}, "cocycles": [{"generator_values": {"x": []}}]}"#,
            r#"{"group": {"kind": "free", "rank": 2}, "cocycles": [{"generator_values": {"a": [{"element": 3, "imag": 1}]}}]}"#,
            r#"{"group": {"kind": "int"}}"#,
        ];
        for b in bad {
            assert!(matches!(CocycleSpec::from_json(b), Err(Error::Spec(_))), "{b}");
        }
        let e = CocycleSpec::from_json(r#"{"group": {"kind": "int"}, "cocycles": [{"generator_values": {"x": []}}]}"#).unwrap_err();
        assert!(e.to_string().contains("generator_values"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cocycle_identity_on_free_group(a in "[abAB]{0,6}", b in "[abAB]{0,6}", j in 0usize..2) {
            let s = free_spec();
            let g = s.group();
            let (x, y) = (g.parse_element(&a).unwrap(), g.parse_element(&b).unwrap());
            let mut lhs = s.value(j, &g.mul(&x, &y).unwrap()).unwrap();
            add_into(&mut lhs, &g, &x, &s.value(j, &y).unwrap(), -1.0).unwrap();
            add_into(&mut lhs, &g, &g.identity(), &s.value(j, &x).unwrap(), -1.0).unwrap();
            prop_assert!(lhs.values().all(|v| v.abs() < 1e-12));
        }

        #[test]
        fn transitions_conserve_product_and_normalize(a in "[abAB]{1,5}", b in "[abAB]{1,5}") {
            let s = free_spec();
            let g = s.group();
            let parts: Vec<Element> = [a, b].iter().map(|w| g.parse_element(w).unwrap()).filter(|x| !g.is_identity(x)).collect();
            let state = ChainState::new(&g, parts).unwrap();
            if s.rate(&state).unwrap() > 0.0 {
                let t = s.transitions(&state).unwrap();
                let total: f64 = t.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                for (next, p) in &t {
                    prop_assert!(*p > 0.0);
                    prop_assert_eq!(next.len(), state.len() + 1);
                    prop_assert_eq!(s.product(next).unwrap(), s.product(&state).unwrap());
                }
            }
        }

        #[test]
        fn z_rate_is_total_minus_parts(parts in prop::collection::vec(1i64..20, 1..6)) {
            let s = z_splitting();
            let st = ints(&parts);
            let total: i64 = parts.iter().sum();
            prop_assert_eq!(s.rate(&st).unwrap(), (total - parts.len() as i64) as f64);
        }
    }
}
