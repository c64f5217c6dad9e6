//! Continued fractions, Diophantine conditions on frequencies and phases,
//! and the measure estimate showing that the Diophantine phase set is
//! homogeneous.
//!
//! Throughout, `|k|` for an integer vector is the ℓ¹ norm. Scan regions are
//! ℓ∞ boxes of side `scan_bound` around the origin.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance below which `‖2θ − ⟨k,α⟩‖` counts as an exact resonance.
pub const RESONANCE_TOL: f64 = 1e-14;

/// Distance to the nearest integer.
#[inline]
pub fn torus_norm(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// Reduce to `[0, 1)`.
#[inline]
pub fn wrap01(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn l1(k: &[i64]) -> i64 {
    k.iter().map(|v| v.abs()).sum()
}

pub fn dot(k: &[i64], alpha: &[f64]) -> f64 {
    k.iter().zip(alpha).map(|(&a, &b)| a as f64 * b).sum()
}

/// How a single frequency component was specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ComponentRepr {
    Decimal { literal: String },
    /// `(a + b√c)/q`, reduced mod 1.
    Quadratic { a: i64, b: i64, c: i64, q: i64 },
    Named { name: String },
}

impl ComponentRepr {
    fn quadratic_params(&self) -> Option<(i64, i64, i64, i64)> {
        match self {
            ComponentRepr::Quadratic { a, b, c, q } => Some((*a, *b, *c, *q)),
            ComponentRepr::Named { name } if name == "golden" => Some((-1, 1, 5, 2)),
            ComponentRepr::Named { name } if name == "silver" => Some((-1, 1, 2, 1)),
            _ => None,
        }
    }
}

/// A frequency vector `α ∈ [0,1)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    components: Vec<f64>,
    reprs: Vec<ComponentRepr>,
}

impl Frequency {
    /// Frequency from raw decimal components, each reduced into `[0,1)`.
    pub fn from_components(components: &[f64]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput("frequency needs d >= 1".into()));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("frequency components must be finite".into()));
        }
        Ok(Self {
            components: components.iter().map(|&c| wrap01(c)).collect(),
            reprs: components
                .iter()
                .map(|c| ComponentRepr::Decimal { literal: format!("{c:?}") })
                .collect(),
        })
    }

    pub fn golden() -> Self {
        Self::parse("golden").expect("golden literal")
    }

    pub fn silver() -> Self {
        Self::parse("silver").expect("silver literal")
    }

    /// Parse the literal grammar: comma-separated items, each `golden`,
    /// `silver`, `quad(a,b,c,q)`, a fraction `p/q`, or a decimal.
    pub fn parse(literal: &str) -> Result<Self> {
        let mut items = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        for ch in literal.chars() {
            match ch {
                '(' => {
                    depth += 1;
                    cur.push(ch);
                }
                ')' => {
                    depth -= 1;
                    cur.push(ch);
                }
                ',' if depth == 0 => items.push(std::mem::take(&mut cur)),
                _ => cur.push(ch),
            }
        }
        items.push(cur);
        if depth != 0 {
            return Err(Error::Parse(format!("unbalanced parentheses in '{literal}'")));
        }
        let mut components = Vec::new();
        let mut reprs = Vec::new();
        for raw in items {
            let item = raw.trim();
            let (value, repr) = parse_component(item)?;
            components.push(value);
            reprs.push(repr);
        }
        if components.is_empty() {
            return Err(Error::Parse("empty frequency literal".into()));
        }
        Ok(Self { components, reprs })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn reprs(&self) -> &[ComponentRepr] {
        &self.reprs
    }

    /// Canonical literal that parses back to the same frequency.
    pub fn literal(&self) -> String {
        self.reprs
            .iter()
            .map(|r| match r {
                ComponentRepr::Decimal { literal } => literal.clone(),
                ComponentRepr::Quadratic { a, b, c, q } => format!("quad({a},{b},{c},{q})"),
                ComponentRepr::Named { name } => name.clone(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// `⟨k, α⟩` as a real number (not reduced).
    pub fn pair(&self, k: &[i64]) -> f64 {
        dot(k, &self.components)
    }

    /// Rational-independence guard: fails if some `0 < |n|∞ ≤ bound` has
    /// `⟨n,α⟩` within 1e-12 of an integer.
    pub fn check_independence(&self, bound: i64) -> Result<()> {
        let mut found = None;
        for_each_half_box(self.dim(), bound, |n| {
            if found.is_none() && torus_norm(self.pair(n)) < 1e-12 {
                found = Some(n.to_vec());
            }
        });
        match found {
            Some(n) => Err(Error::RationalFrequency { n }),
            None => Ok(()),
        }
    }

    /// Continued fraction of component `i`. Quadratic irrationals are
    /// expanded with exact integer arithmetic; decimals go through
    /// [`continued_fraction`].
    pub fn component_cf(&self, i: usize, depth: usize) -> Result<ContinuedFraction> {
        match self.reprs[i].quadratic_params() {
            Some((a, b, c, q)) => quadratic_cf(a, b, c, q, depth),
            None => continued_fraction(self.components[i], depth),
        }
    }
}

fn parse_component(item: &str) -> Result<(f64, ComponentRepr)> {
    let lower = item.to_ascii_lowercase();
    if lower == "golden" || lower == "silver" {
        let repr = ComponentRepr::Named { name: lower };
        let (a, b, c, q) = repr.quadratic_params().unwrap();
        return Ok((quadratic_value(a, b, c, q)?, repr));
    }
    if let Some(inner) = lower.strip_prefix("quad(").and_then(|s| s.strip_suffix(')')) {
        let nums: Vec<i64> = inner
            .split(',')
            .map(|s| s.trim().parse::<i64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("bad quad literal '{item}': {e}")))?;
        if nums.len() != 4 {
            return Err(Error::Parse(format!("quad needs 4 integers: '{item}'")));
        }
        let (a, b, c, q) = (nums[0], nums[1], nums[2], nums[3]);
        if c < 0 || q == 0 {
            return Err(Error::Parse(format!("quad needs c >= 0 and q != 0: '{item}'")));
        }
        return Ok((quadratic_value(a, b, c, q)?, ComponentRepr::Quadratic { a, b, c, q }));
    }
    if let Some((p, q)) = item.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| Error::Parse(format!("bad fraction '{item}'")))?;
        let q: f64 = q.trim().parse().map_err(|_| Error::Parse(format!("bad fraction '{item}'")))?;
        if q == 0.0 {
            return Err(Error::Parse(format!("zero denominator in '{item}'")));
        }
        return Ok((wrap01(p / q), ComponentRepr::Decimal { literal: item.to_string() }));
    }
    let v: f64 = item
        .parse()
        .map_err(|_| Error::Parse(format!("unrecognised frequency item '{item}'")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("non-finite frequency '{item}'")));
    }
    Ok((wrap01(v), ComponentRepr::Decimal { literal: item.to_string() }))
}

/// `(a + b√c)/q mod 1` computed with 40 extra decimal digits before the
/// final rounding to `f64`.
fn quadratic_value(a: i64, b: i64, c: i64, q: i64) -> Result<f64> {
    let scale = BigInt::from(10u32).pow(40);
    let radicand = BigInt::from(b) * BigInt::from(b) * BigInt::from(c) * &scale * &scale;
    let root = radicand.sqrt();
    let root = if b < 0 { -root } else { root };
    let num = BigInt::from(a) * &scale + root;
    let den = BigInt::from(q) * &scale;
    let (den, num) = if den.is_negative() { (-den, -num) } else { (den, num) };
    let rem = num.mod_floor(&den);
    // rem / den in [0,1): take 64 bits of it exactly.
    let shifted: BigInt = (rem << 64u32) / &den;
    let v = shifted.to_f64().unwrap_or(0.0) / 2f64.powi(64);
    Ok(wrap01(v))
}

/// Continued-fraction data for a number in (0,1): `x = [0; a_1, a_2, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuedFraction {
    pub partial_quotients: Vec<u64>,
    /// `(p_k, q_k)` for k = 1..=depth.
    pub convergents: Vec<(u128, u128)>,
}

fn convergents_of(quotients: &[u64]) -> Vec<(u128, u128)> {
    let (mut p2, mut q2) = (1u128, 0u128);
    let (mut p1, mut q1) = (0u128, 1u128);
    let mut out = Vec::with_capacity(quotients.len());
    for &a in quotients {
        let a = a as u128;
        let p = a.saturating_mul(p1).saturating_add(p2);
        let q = a.saturating_mul(q1).saturating_add(q2);
        out.push((p, q));
        p2 = p1;
        q2 = q1;
        p1 = p;
        q1 = q;
    }
    out
}

/// First `depth` partial quotients of `x ∈ (0,1)`.
///
/// The `f64` input is expanded exactly as the rational number it is. A
/// quotient is kept only while the convergent still resolves `x` above the
/// rounding level; past that point `x` is indistinguishable from the
/// convergent and the call fails with its denominator.
pub fn continued_fraction(x: f64, depth: usize) -> Result<ContinuedFraction> {
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be >= 1".into()));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::InvalidInput(format!("x = {x} is not in (0,1)")));
    }
    let (num, den) = exact_ratio(x);
    let precision = 4.0 * f64::EPSILON * x;
    let mut quotients = Vec::with_capacity(depth);
    // x = num/den < 1, so a_0 = 0 and we start from den/num.
    let (mut n, mut d) = (den, num);
    let (mut p2, mut q2) = (1u128, 0u128);
    let (mut p1, mut q1) = (0u128, 1u128);
    while quotients.len() < depth {
        if d.is_zero() {
            return Err(Error::RationalWithinPrecision { denominator: q1 });
        }
        let (a, r) = n.div_rem(&d);
        let a = a.to_u64().unwrap_or(u64::MAX);
        let p = (a as u128).saturating_mul(p1).saturating_add(p2);
        let q = (a as u128).saturating_mul(q1).saturating_add(q2);
        // The new quotient is only meaningful if the previous convergent
        // had not already matched x to working precision.
        if !quotients.is_empty() && (x - p1 as f64 / q1 as f64).abs() <= precision {
            return Err(Error::RationalWithinPrecision { denominator: q1 });
        }
        quotients.push(a);
        p2 = p1;
        q2 = q1;
        p1 = p;
        q1 = q;
        n = d;
        d = r;
    }
    let convergents = convergents_of(&quotients);
    Ok(ContinuedFraction { partial_quotients: quotients, convergents })
}

fn exact_ratio(x: f64) -> (BigUint, BigUint) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let num = BigUint::from(mant);
    if e >= 0 {
        (num << (e as usize), BigUint::one())
    } else {
        let den = BigUint::one() << ((-e) as usize);
        let g = num.gcd(&den);
        (num / &g, den / g)
    }
}

/// Exact expansion of the fractional part of `(a + b√c)/q`.
fn quadratic_cf(a: i64, b: i64, c: i64, q: i64, depth: usize) -> Result<ContinuedFraction> {
    let d_rad = (b as i128) * (b as i128) * (c as i128);
    let s = isqrt(d_rad);
    if s * s == d_rad {
        // Rational after all.
        let num = a as i128 + if b < 0 { -s } else { s };
        let den = q as i128;
        let g = gcd_i128(num, den);
        return Err(Error::RationalWithinPrecision { denominator: (den / g).unsigned_abs() });
    }
    // x = (P + √D)/Q with Q | D − P².
    let (mut p, mut qq) = if b < 0 { (-(a as i128), -(q as i128)) } else { (a as i128, q as i128) };
    let mut dd = d_rad;
    if (dd - p * p) % qq != 0 {
        let m = qq.abs();
        p *= m;
        dd *= m * m;
        qq *= m;
    }
    let sd = isqrt(dd);
    let floor_step = |p: i128, q: i128| -> i128 {
        if q > 0 {
            (p + sd).div_euclid(q)
        } else {
            -((p + sd).div_euclid(-q)) - 1
        }
    };
    let mut quotients = Vec::with_capacity(depth);
    // Discard the integer part a_0.
    let a0 = floor_step(p, qq);
    p = a0 * qq - p;
    qq = (dd - p * p) / qq;
    while quotients.len() < depth {
        let ak = floor_step(p, qq);
        quotients.push(ak as u64);
        p = ak * qq - p;
        qq = (dd - p * p) / qq;
    }
    let convergents = convergents_of(&quotients);
    Ok(ContinuedFraction { partial_quotients: quotients, convergents })
}

fn isqrt(n: i128) -> i128 {
    if n <= 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as i128;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Calls `f` on every nonzero `n` with `|n|∞ ≤ bound` whose first nonzero
/// component is positive, so each `±n` pair is visited once.
pub fn for_each_half_box(d: usize, bound: i64, mut f: impl FnMut(&[i64])) {
    let mut n = vec![-bound; d];
    loop {
        if let Some(first) = n.iter().find(|&&v| v != 0) {
            if *first > 0 {
                f(&n);
            }
        }
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if n[i] < bound {
                n[i] += 1;
                break;
            }
            n[i] = -bound;
        }
    }
}

/// Calls `f` on every `k` with `|k|∞ ≤ bound`, including zero.
pub fn for_each_box(d: usize, bound: i64, mut f: impl FnMut(&[i64])) {
    let mut k = vec![-bound; d];
    loop {
        f(&k);
        let mut i = d;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if k[i] < bound {
                k[i] += 1;
                break;
            }
            k[i] = -bound;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiophantineFreqParams {
    pub kappa: f64,
    pub tau: f64,
    pub scan_bound: i64,
}

impl DiophantineFreqParams {
    pub fn new(kappa: f64, tau: f64, scan_bound: i64, d: usize) -> Result<Self> {
        if !(kappa > 0.0) {
            return Err(Error::InvalidInput("kappa must be positive".into()));
        }
        if !(tau > d as f64 - 1.0) {
            return Err(Error::InvalidInput(format!("tau must exceed d-1 = {}", d - 1)));
        }
        if scan_bound < 1 {
            return Err(Error::InvalidInput("scan_bound must be >= 1".into()));
        }
        Ok(Self { kappa, tau, scan_bound })
    }

    /// Default scan bound for dimension `d`.
    pub fn default_scan(d: usize) -> i64 {
        if d == 1 {
            10_000
        } else {
            100
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiophantinePhaseParams {
    pub gamma: f64,
    pub tau_prime: f64,
    pub scan_bound: i64,
}

impl DiophantinePhaseParams {
    /// The class 𝒜_γ: exponent `100τ + d`.
    pub fn localization_class(gamma: f64, tau: f64, d: usize, scan_bound: i64) -> Self {
        Self { gamma, tau_prime: 100.0 * tau + d as f64, scan_bound }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcReport {
    pub holds: bool,
    pub worst: Vec<i64>,
    /// Smallest normalized margin found. May be `inf` when it overflows.
    pub margin: f64,
    /// Natural log of `margin` (−∞ at an exact resonance).
    pub log_margin: f64,
    pub scan_bound: i64,
}

/// Scan `inf_j |⟨n,α⟩ − j| > κ/|n|^τ` over `0 < |n|∞ ≤ scan_bound`.
pub fn check_freq_dc(alpha: &Frequency, params: &DiophantineFreqParams) -> DcReport {
    let mut worst = vec![0; alpha.dim()];
    let mut worst_log = f64::INFINITY;
    let mut worst_l1 = i64::MAX;
    for_each_half_box(alpha.dim(), params.scan_bound, |n| {
        let dist = torus_norm(alpha.pair(n));
        let nl = l1(n);
        let lm = if dist < 1e-15 { f64::NEG_INFINITY } else { dist.ln() + params.tau * (nl as f64).ln() };
        if lm < worst_log || (lm == worst_log && nl < worst_l1) {
            worst_log = lm;
            worst_l1 = nl;
            worst = n.to_vec();
        }
    });
    DcReport {
        holds: worst_log > params.kappa.ln(),
        margin: worst_log.exp(),
        log_margin: worst_log,
        worst,
        scan_bound: params.scan_bound,
    }
}

/// Scan `‖2θ − ⟨k,α⟩‖ ≥ γ/(|k|+1)^{τ′}` over `|k|∞ ≤ scan_bound`, k = 0
/// included. Distances below [`RESONANCE_TOL`] count as exact resonances.
pub fn check_phase_dc(theta: f64, alpha: &Frequency, params: &DiophantinePhaseParams) -> DcReport {
    let mut worst = vec![0; alpha.dim()];
    let mut worst_log = f64::INFINITY;
    let mut worst_l1 = i64::MAX;
    for_each_box(alpha.dim(), params.scan_bound, |k| {
        let dist = torus_norm(2.0 * theta - alpha.pair(k));
        let kl = l1(k);
        let lm = if dist < RESONANCE_TOL {
            f64::NEG_INFINITY
        } else {
            dist.ln() + params.tau_prime * ((kl + 1) as f64).ln()
        };
        if lm < worst_log || (lm == worst_log && kl < worst_l1) {
            worst_log = lm;
            worst_l1 = kl;
            worst = k.to_vec();
        }
    });
    DcReport {
        holds: worst_log >= params.gamma.ln(),
        margin: worst_log.exp(),
        log_margin: worst_log,
        worst,
        scan_bound: params.scan_bound,
    }
}

/// `count` phases drawn uniformly from `[0,1)` with a seeded generator,
/// keeping those that pass [`check_phase_dc`]. Gives up after `100·count`
/// draws and returns what it has.
pub fn sample_phases(alpha: &Frequency, params: &DiophantinePhaseParams, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..100 * count.max(1) {
        if out.len() == count {
            break;
        }
        let t: f64 = rng.gen();
        if check_phase_dc(t, alpha, params).holds {
            out.push(t);
        }
    }
    out
}

/// Parameters valid for the shifted phase `T^kθ = θ + ⟨k,α⟩`.
pub fn shifted_phase_params(params: &DiophantinePhaseParams, k: &[i64]) -> DiophantinePhaseParams {
    let kl = l1(k) as f64;
    DiophantinePhaseParams {
        gamma: params.gamma * (kl + 1.0).powf(-params.tau_prime),
        ..*params
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaRegime {
    Paper,
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub ratio: f64,
    pub excluded_measure: f64,
    /// Portion of `excluded_measure` that is the bound on `|k| > k_cut`.
    pub tail_bound: f64,
    pub regime: SigmaRegime,
    pub k_cut: usize,
}

/// Largest σ allowed by the smallness condition of the homogeneity lemma.
pub fn paper_sigma_bound(freq: &DiophantineFreqParams, phase: &DiophantinePhaseParams) -> f64 {
    let p = 2f64.powf(-100.0 * freq.tau);
    p.min(freq.kappa * freq.kappa / 16.0 * p).min(phase.gamma / 4.0)
}

/// Number of `k ∈ ℤ^d` with `|k|₁ = j`.
fn l1_sphere_count(d: usize, j: usize) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let binom = |n: usize, r: usize| -> f64 {
        if r > n {
            return 0.0;
        }
        (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    };
    (1..=d.min(j))
        .map(|i| 2f64.powi(i as i32) * binom(d, i) * binom(j - 1, i - 1))
        .sum()
}

/// Upper bound on `Σ_{|k|₁ > cut} |Θ_k|` where `|Θ_k| = 2γ/(|k|+1)^{τ′}`.
fn exclusion_tail(d: usize, gamma: f64, tau_prime: f64, cut: usize) -> f64 {
    if tau_prime <= d as f64 {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    let mut j = cut + 1;
    loop {
        let term = l1_sphere_count(d, j) * 2.0 * gamma * ((j + 1) as f64).powf(-tau_prime);
        sum += term;
        if term <= 1e-18 * sum.max(1e-300) || j > cut + 200_000 {
            // Remainder: count(j) ≤ 2^d (j+1)^{d-1}, integrate the power law.
            let rem = 2f64.powi(d as i32) * 2.0 * gamma * ((j + 1) as f64).powf(d as f64 - tau_prime)
                / (tau_prime - d as f64);
            return sum + rem;
        }
        j += 1;
    }
}

/// Measure of `⋃_{|k|₁ ≤ k_cut} Θ_k ∩ (θ0 + lo, θ0 + hi)`, computed in
/// coordinates relative to `θ0` so that tiny windows stay resolvable.
pub fn excluded_measure_in(
    alpha: &Frequency,
    params: &DiophantinePhaseParams,
    theta0: f64,
    lo: f64,
    hi: f64,
    k_cut: usize,
) -> f64 {
    let d = alpha.dim();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let width = hi - lo;
    for_each_box(d, k_cut as i64, |k| {
        let kl = l1(k);
        if kl as usize > k_cut {
            return;
        }
        let r = params.gamma * ((kl + 1) as f64).powf(-params.tau_prime);
        // 2(θ0+t) − ⟨k,α⟩ − j ∈ (−r, r)  ⇔  t ∈ ((−δ−r)/2, (−δ+r)/2) + j/2.
        let delta = 2.0 * theta0 - alpha.pair(k);
        let delta = delta - delta.round();
        for shift in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let a = (-delta - r) / 2.0 + shift;
            let b = (-delta + r) / 2.0 + shift;
            let (a, b) = (a.max(lo), b.min(hi));
            if b > a {
                intervals.push((a, b));
            }
        }
    });
    intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in intervals {
        match cur {
            Some((ca, cb)) if a <= cb => cur = Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((ca, cb)) = cur {
        total += cb - ca;
    }
    total.min(width)
}

/// Lower bound on the proportion of `(θ0−σ, θ0+σ)` that stays in the
/// Diophantine phase class.
pub fn homogeneity_estimate(
    alpha: &Frequency,
    freq: &DiophantineFreqParams,
    params: &DiophantinePhaseParams,
    theta0: f64,
    sigma: f64,
    k_cut: usize,
) -> Result<HomogeneityReport> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("sigma must be positive".into()));
    }
    alpha.check_independence(if alpha.dim() == 1 { 1000 } else { 30 })?;
    let d = alpha.dim();
    let tail = exclusion_tail(d, params.gamma, params.tau_prime, k_cut);
    let budget = 0.1 * 2.0 * sigma;
    if !(tail <= budget) {
        let mut required = k_cut.max(1);
        while exclusion_tail(d, params.gamma, params.tau_prime, required) > budget {
            required = required.saturating_mul(2);
            if required > 1 << 24 {
                break;
            }
        }
        return Err(Error::CutoffTooSmall { k_cut, tail, required });
    }
    let inner = excluded_measure_in(alpha, params, theta0, -sigma, sigma, k_cut);
    let excluded = (inner + tail).min(2.0 * sigma);
    let regime = if sigma < paper_sigma_bound(freq, params) { SigmaRegime::Paper } else { SigmaRegime::Relaxed };
    Ok(HomogeneityReport {
        ratio: (2.0 * sigma - excluded) / (2.0 * sigma),
        excluded_measure: excluded,
        tail_bound: tail,
        regime,
        k_cut,
    })
}
