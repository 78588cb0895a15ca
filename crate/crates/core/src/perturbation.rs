//! Lattice-symmetric perturbations `F^Psi`, `F^phi` on the three-torus as
//! finite trigonometric polynomials.
//!
//! Each term is `coeff * phi_factor(m phi) * psi_factor(n1 psi1 + n2 psi2)`.
//! The text form used in config files is
//!
//! ```text
//! fphi:  2*sin(4p) + cos(7a+6b) + cos(6a-7b)
//! fpsi1: sin(5p)*sin(a+b) + cos(5p)*sin(a-b)
//! fpsi2: cos(2p)*cos(2a+3b) - cos(2p)*cos(3a-2b)
//! ```
//!
//! with `p` = phi, `a` = psi1, `b` = psi2. Whitespace is insignificant and a
//! key may appear on several lines, in which case the terms accumulate.

use crate::lattice::{apply_j, Vec2};
use crate::trig::{Kind, Mode, PhiFactor, PsiFactor, TorusPoly, MERGE_EPS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: non-integer mode `{token}`")]
    NonIntegerMode { line: usize, token: String },
    #[error("spec is not canonical: {0}")]
    NonCanonical(String),
}

/// One product term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub coeff: f64,
    pub phi: PhiFactor,
    pub psi: PsiFactor,
}

impl TrigTerm {
    /// Canonical term, or `None` if it vanishes identically.
    pub fn new(coeff: f64, phi: PhiFactor, psi: PsiFactor) -> Option<Self> {
        let (s1, phi) = phi.canonical()?;
        let (s2, psi) = psi.canonical()?;
        let coeff = coeff * s1 * s2;
        (coeff != 0.0).then_some(Self { coeff, phi, psi })
    }

    pub fn constant(coeff: f64) -> Option<Self> {
        Self::new(coeff, PhiFactor::ONE, PsiFactor::ONE)
    }

    pub fn eval(&self, psi: Vec2, phi: f64) -> f64 {
        self.coeff * self.phi.eval(phi) * self.psi.eval(psi)
    }

    pub fn is_canonical(&self) -> bool {
        self.coeff != 0.0
            && self.phi.canonical() == Some((1.0, self.phi))
            && self.psi.canonical() == Some((1.0, self.psi))
    }

    /// The term of `(Psi, phi) -> T(-J Psi, phi + pi/2)`.
    pub fn quarter_turn(&self) -> Option<TrigTerm> {
        let (s, phi) = self.phi.quarter_shift();
        TrigTerm::new(self.coeff * s, phi, self.psi.quarter_turn())
    }

    fn key(&self) -> (PhiFactor, PsiFactor) {
        (self.phi, self.psi)
    }
}

impl fmt::Display for TrigTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coeff)?;
        match self.phi.kind {
            Kind::One => {}
            Kind::Sin => write!(f, "*sin({}p)", self.phi.m)?,
            Kind::Cos => write!(f, "*cos({}p)", self.phi.m)?,
        }
        let arg = || psi_arg(self.psi.mode);
        match self.psi.kind {
            Kind::One => {}
            Kind::Sin => write!(f, "*sin({})", arg())?,
            Kind::Cos => write!(f, "*cos({})", arg())?,
        }
        Ok(())
    }
}

fn psi_arg(mode: Mode) -> String {
    let mut s = String::new();
    for (n, var) in [(mode.n1, 'a'), (mode.n2, 'b')] {
        if n == 0 {
            continue;
        }
        if n < 0 {
            s.push('-');
        } else if !s.is_empty() {
            s.push('+');
        }
        if n.abs() != 1 {
            s.push_str(&n.abs().to_string());
        }
        s.push(var);
    }
    s
}

/// Which of the three perturbation functions a term belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    #[serde(rename = "fpsi1")]
    Psi1,
    #[serde(rename = "fpsi2")]
    Psi2,
    #[serde(rename = "fphi")]
    Phi,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Psi1, Component::Psi2, Component::Phi];

    pub fn key(self) -> &'static str {
        match self {
            Component::Psi1 => "fpsi1",
            Component::Psi2 => "fpsi2",
            Component::Phi => "fphi",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key)
    }
}

fn canonicalize(terms: impl IntoIterator<Item = TrigTerm>) -> Vec<TrigTerm> {
    let mut map: BTreeMap<(PhiFactor, PsiFactor), f64> = BTreeMap::new();
    for t in terms {
        if let Some(t) = TrigTerm::new(t.coeff, t.phi, t.psi) {
            *map.entry(t.key()).or_insert(0.0) += t.coeff;
        }
    }
    map.into_iter()
        .filter(|(_, c)| c.abs() >= MERGE_EPS)
        .map(|((phi, psi), coeff)| TrigTerm { coeff, phi, psi })
        .collect()
}

/// The perturbation `(F^Psi_1, F^Psi_2, F^phi)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub f_psi_1: Vec<TrigTerm>,
    pub f_psi_2: Vec<TrigTerm>,
    pub f_phi: Vec<TrigTerm>,
}

/// Outcome of the quarter-turn symmetry check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub passes: bool,
    /// Nonzero terms of `F - F(-J Psi, phi + pi/2)`, per component.
    pub violating_terms: Vec<(Component, TrigTerm)>,
    /// Largest pointwise residual over the random numeric probe.
    pub numeric_residual: f64,
}

impl PerturbationSpec {
    pub fn new(
        f_psi_1: impl IntoIterator<Item = TrigTerm>,
        f_psi_2: impl IntoIterator<Item = TrigTerm>,
        f_phi: impl IntoIterator<Item = TrigTerm>,
    ) -> Self {
        Self {
            f_psi_1: canonicalize(f_psi_1),
            f_psi_2: canonicalize(f_psi_2),
            f_phi: canonicalize(f_phi),
        }
    }

    pub fn component(&self, c: Component) -> &[TrigTerm] {
        match c {
            Component::Psi1 => &self.f_psi_1,
            Component::Psi2 => &self.f_psi_2,
            Component::Phi => &self.f_phi,
        }
    }

    fn component_mut(&mut self, c: Component) -> &mut Vec<TrigTerm> {
        match c {
            Component::Psi1 => &mut self.f_psi_1,
            Component::Psi2 => &mut self.f_psi_2,
            Component::Phi => &mut self.f_phi,
        }
    }

    pub fn is_empty(&self) -> bool {
        Component::ALL.iter().all(|&c| self.component(c).is_empty())
    }

    pub fn canonical(&self) -> Self {
        Self::new(
            self.f_psi_1.iter().copied(),
            self.f_psi_2.iter().copied(),
            self.f_phi.iter().copied(),
        )
    }

    pub fn is_canonical(&self) -> bool {
        self.first_non_canonical().is_none()
    }

    fn first_non_canonical(&self) -> Option<String> {
        for c in Component::ALL {
            let terms = self.component(c);
            if let Some(t) = terms.iter().find(|t| !t.is_canonical()) {
                return Some(format!("{}: {t}", c.key()));
            }
            if terms.windows(2).any(|w| w[0].key() >= w[1].key()) {
                return Some(format!("{}: terms unsorted or duplicated", c.key()));
            }
        }
        None
    }

    /// `(F^Psi(Psi, phi), F^phi(Psi, phi))`.
    pub fn evaluate(&self, psi: Vec2, phi: f64) -> (Vec2, f64) {
        let sum = |terms: &[TrigTerm]| terms.iter().map(|t| t.eval(psi, phi)).sum::<f64>();
        (
            Vec2::new(sum(&self.f_psi_1), sum(&self.f_psi_2)),
            sum(&self.f_phi),
        )
    }

    /// Upper bound on `max |F^phi|`: sum of absolute coefficients.
    pub fn f_phi_bound(&self) -> f64 {
        self.f_phi.iter().map(|t| t.coeff.abs()).sum()
    }

    /// Upper bound on `max |F^Psi|` (Euclidean norm).
    pub fn f_psi_bound(&self) -> f64 {
        let b1: f64 = self.f_psi_1.iter().map(|t| t.coeff.abs()).sum();
        let b2: f64 = self.f_psi_2.iter().map(|t| t.coeff.abs()).sum();
        b1.hypot(b2)
    }

    /// Image under `F -> F(-J Psi, phi + pi/2)`.
    pub fn quarter_turn(&self) -> Self {
        let map = |ts: &[TrigTerm]| ts.iter().filter_map(|t| t.quarter_turn()).collect::<Vec<_>>();
        Self::new(map(&self.f_psi_1), map(&self.f_psi_2), map(&self.f_phi))
    }

    /// Average over the four quarter-turn images; always passes the symmetry check.
    pub fn symmetrized(&self) -> Self {
        let mut images = vec![self.canonical()];
        for _ in 0..3 {
            let next = images.last().unwrap().quarter_turn();
            images.push(next);
        }
        let collect = |c: Component| {
            images
                .iter()
                .flat_map(|s| s.component(c).iter())
                .map(|t| TrigTerm { coeff: 0.25 * t.coeff, ..*t })
                .collect::<Vec<_>>()
        };
        Self::new(collect(Component::Psi1), collect(Component::Psi2), collect(Component::Phi))
    }

    /// Check `F(-J Psi, phi + pi/2) = F(Psi, phi)` symbolically and numerically.
    pub fn check_z4_symmetry(&self) -> Result<SymmetryReport, SpecError> {
        if let Some(msg) = self.first_non_canonical() {
            return Err(SpecError::NonCanonical(msg));
        }
        let image = self.quarter_turn();
        let mut violating_terms = Vec::new();
        for c in Component::ALL {
            let negated = image.component(c).iter().map(|t| TrigTerm { coeff: -t.coeff, ..*t });
            let diff = canonicalize(self.component(c).iter().copied().chain(negated));
            let scale = self
                .component(c)
                .iter()
                .map(|t| t.coeff.abs())
                .fold(1.0, f64::max);
            violating_terms.extend(
                diff.into_iter()
                    .filter(|t| t.coeff.abs() > 1e-12 * scale)
                    .map(|t| (c, t)),
            );
        }

        let mut rng = SplitMix64(0x5eed_1a77);
        let mut numeric_residual = 0.0f64;
        for _ in 0..64 {
            let psi = Vec2::new(rng.angle(), rng.angle());
            let phi = rng.angle();
            let (fp, ff) = self.evaluate(psi, phi);
            let (gp, gf) = self.evaluate(-apply_j(psi), phi + FRAC_PI_2);
            numeric_residual = numeric_residual.max((fp - gp).norm()).max((ff - gf).abs());
        }
        let passes = violating_terms.is_empty();
        let tol = 1e-12 * (1.0 + self.f_phi_bound() + self.f_psi_bound());
        if passes && numeric_residual > tol {
            log::warn!("symbolic symmetry check passed but numeric residual is {numeric_residual:e}");
        }
        Ok(SymmetryReport {
            passes,
            violating_terms,
            numeric_residual,
        })
    }

    /// `Psi -> F^phi(Psi, phi)` for fixed `phi`.
    pub fn f_phi_at(&self, phi: f64) -> TorusPoly {
        TorusPoly::new(self.f_phi.iter().map(|t| (t.psi, t.coeff * t.phi.eval(phi))))
    }

    /// Nonzero `Psi` modes appearing anywhere in the perturbation, closed under the
    /// quarter-turn map and reported with lexicographically positive sign.
    pub fn psi_modes(&self) -> BTreeSet<Mode> {
        let mut out = BTreeSet::new();
        for c in Component::ALL {
            for t in self.component(c) {
                let mut m = t.psi.mode;
                if m.is_zero() {
                    continue;
                }
                for _ in 0..4 {
                    out.insert(if m.is_positive() { m } else { m.neg() });
                    m = m.quarter_turn();
                }
            }
        }
        out
    }

    /// Parse `key: expression` lines (`=` is accepted in place of `:`).
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let mut raw = PerturbationSpec::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, expr) = content
                .split_once(':')
                .or_else(|| content.split_once('='))
                .ok_or_else(|| SpecError::Parse {
                    line: line_no,
                    message: format!("expected `key: terms`, got `{content}`"),
                })?;
            let key = key.trim();
            let comp = Component::from_key(key).ok_or_else(|| SpecError::Parse {
                line: line_no,
                message: format!("unknown component `{key}` (expected fpsi1, fpsi2 or fphi)"),
            })?;
            let terms = parse_expression(expr, line_no)?;
            raw.component_mut(comp).extend(terms);
        }
        Ok(raw.canonical())
    }

    /// Serialize to the text form accepted by [`PerturbationSpec::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in Component::ALL {
            let terms = self.component(c);
            if terms.is_empty() {
                continue;
            }
            out.push_str(c.key());
            out.push_str(": ");
            out.push_str(&format_expression(terms));
            out.push('\n');
        }
        out
    }
}

/// One-line text form of a term list; `0` when empty.
pub fn format_expression(terms: &[TrigTerm]) -> String {
    if terms.is_empty() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (i, t) in terms.iter().enumerate() {
        if i == 0 {
            out.push_str(&t.to_string());
        } else if t.coeff < 0.0 {
            out.push_str(" - ");
            out.push_str(&TrigTerm { coeff: -t.coeff, ..*t }.to_string());
        } else {
            out.push_str(" + ");
            out.push_str(&t.to_string());
        }
    }
    out
}

/// Parse a `+`/`-` separated sum of terms. `line` is used for error reporting.
pub fn parse_expression(expr: &str, line: usize) -> Result<Vec<TrigTerm>, SpecError> {
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    let err = |message: String| SpecError::Parse { line, message };
    if s.is_empty() {
        return Err(err("empty expression".into()));
    }
    if s == "0" {
        return Ok(Vec::new());
    }
    let mut terms = Vec::new();
    for item in split_top_level_sum(&s).map_err(err)? {
        if let Some(t) = parse_term(&item, line)? {
            terms.push(t);
        }
    }
    Ok(terms)
}

/// Split at top-level `+`/`-`, keeping the sign with each item.
fn split_top_level_sum(s: &str) -> Result<Vec<String>, String> {
    let chars: Vec<char> = s.chars().collect();
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    for (i, &ch) in chars.iter().enumerate() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err("unbalanced `)`".into());
                }
            }
            '+' | '-' if depth == 0 && i > 0 => {
                let prev = chars[i - 1];
                let exponent = matches!(prev, 'e' | 'E')
                    && i >= 2
                    && (chars[i - 2].is_ascii_digit() || chars[i - 2] == '.');
                if prev != '*' && prev != '+' && prev != '-' && !exponent {
                    items.push(std::mem::take(&mut cur));
                }
            }
            _ => {}
        }
        cur.push(ch);
    }
    if depth != 0 {
        return Err("unbalanced `(`".into());
    }
    items.push(cur);
    if items.iter().any(|t| t.is_empty() || t == "+" || t == "-") {
        return Err("empty term".into());
    }
    Ok(items)
}

fn split_top_level_product(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            '*' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_term(item: &str, line: usize) -> Result<Option<TrigTerm>, SpecError> {
    let err = |message: String| SpecError::Parse { line, message };
    let (mut coeff, body) = match item.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, item.strip_prefix('+').unwrap_or(item)),
    };
    let mut phi: Option<PhiFactor> = None;
    let mut psi: Option<PsiFactor> = None;
    for factor in split_top_level_product(body) {
        if factor.is_empty() {
            return Err(err(format!("empty factor in `{item}`")));
        }
        let trig = if let Some(arg) = factor.strip_prefix("sin(") {
            Some((Kind::Sin, arg))
        } else {
            factor.strip_prefix("cos(").map(|arg| (Kind::Cos, arg))
        };
        match trig {
            Some((kind, arg)) => {
                let arg = arg
                    .strip_suffix(')')
                    .ok_or_else(|| err(format!("missing `)` in `{factor}`")))?;
                match parse_argument(arg, line)? {
                    Argument::Phi(m) => {
                        if phi.replace(PhiFactor { kind, m }).is_some() {
                            return Err(err(format!("more than one phi factor in `{item}`")));
                        }
                    }
                    Argument::Psi(mode) => {
                        if psi.replace(PsiFactor { kind, mode }).is_some() {
                            return Err(err(format!("more than one psi factor in `{item}`")));
                        }
                    }
                }
            }
            None => {
                let v: f64 = factor
                    .parse()
                    .map_err(|_| err(format!("cannot read `{factor}` as a number or trig factor")))?;
                if !v.is_finite() {
                    return Err(err(format!("non-finite coefficient `{factor}`")));
                }
                coeff *= v;
            }
        }
    }
    Ok(TrigTerm::new(
        coeff,
        phi.unwrap_or(PhiFactor::ONE),
        psi.unwrap_or(PsiFactor::ONE),
    ))
}

enum Argument {
    Phi(i64),
    Psi(Mode),
}

fn parse_argument(arg: &str, line: usize) -> Result<Argument, SpecError> {
    let err = |message: String| SpecError::Parse { line, message };
    if arg.is_empty() {
        return Err(err("empty trig argument".into()));
    }
    let (mut p, mut a, mut b) = (0i64, 0i64, 0i64);
    let (mut saw_p, mut saw_psi) = (false, false);
    let chars: Vec<char> = arg.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let mut sign = 1i64;
        if chars[i] == '+' || chars[i] == '-' {
            if chars[i] == '-' {
                sign = -1;
            }
            i += 1;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
            i += 1;
        }
        let digits: String = chars[start..i].iter().collect();
        if i < chars.len() && chars[i] == '*' {
            i += 1;
        }
        let var = chars.get(i).copied().ok_or_else(|| {
            err(format!("trig argument `{arg}` must be a combination of p, a, b"))
        })?;
        i += 1;
        let n = if digits.is_empty() {
            1
        } else if digits.contains('.') {
            return Err(SpecError::NonIntegerMode {
                line,
                token: format!("{digits}{var}"),
            });
        } else {
            digits
                .parse::<i64>()
                .map_err(|_| err(format!("bad mode `{digits}`")))?
        };
        match var {
            'p' => {
                p += sign * n;
                saw_p = true;
            }
            'a' => {
                a += sign * n;
                saw_psi = true;
            }
            'b' => {
                b += sign * n;
                saw_psi = true;
            }
            other => return Err(err(format!("unknown variable `{other}` in `{arg}`"))),
        }
    }
    match (saw_p, saw_psi) {
        (true, false) => Ok(Argument::Phi(p)),
        (false, true) => Ok(Argument::Psi(Mode::new(a, b))),
        _ => Err(err(format!("argument `{arg}` mixes p with a/b"))),
    }
}

/// Small deterministic generator for internal numeric probes.
pub(crate) struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn angle(&mut self) -> f64 {
        TAU * self.unit()
    }
}

/// The travelling-wave test system: three incommensurate `F^phi` terms and a
/// quarter-turn-symmetric `F^Psi`.
pub const SIMDATA_SPEC: &str = "\
fphi:  2*sin(4p) + cos(7a+6b) + cos(6a-7b)
fpsi1: sin(5p)*sin(a+b) + cos(5p)*sin(a-b)
fpsi2: cos(2p)*cos(2a+3b) - cos(2p)*cos(3a-2b)
";

pub fn simdata_spec() -> PerturbationSpec {
    PerturbationSpec::parse(SIMDATA_SPEC).expect("bundled spec parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simdata_at_origin() {
        let spec = simdata_spec();
        let (fp, ff) = spec.evaluate(Vec2::ZERO, 0.0);
        assert!((ff - 2.0).abs() < 1e-15);
        assert_eq!(fp, Vec2::ZERO);
        let (fp, ff) = PerturbationSpec::default().evaluate(Vec2::new(1.0, 2.0), 3.0);
        assert_eq!((fp, ff), (Vec2::ZERO, 0.0));
    }

    #[test]
    fn parse_examples() {
        let s = PerturbationSpec::parse("fphi: 2*sin(4p)").unwrap();
        assert_eq!(
            s.f_phi,
            vec![TrigTerm { coeff: 2.0, phi: PhiFactor::sin(4), psi: PsiFactor::ONE }]
        );
        let s = PerturbationSpec::parse("fphi: cos(7a+6b)").unwrap();
        assert_eq!(
            s.f_phi,
            vec![TrigTerm { coeff: 1.0, phi: PhiFactor::ONE, psi: PsiFactor::cos(7, 6) }]
        );
        let s = PerturbationSpec::parse("fpsi1: sin(5p)*sin(a+b)").unwrap();
        assert_eq!(
            s.f_psi_1,
            vec![TrigTerm { coeff: 1.0, phi: PhiFactor::sin(5), psi: PsiFactor::sin(1, 1) }]
        );
    }

    #[test]
    fn parse_signs_and_exponents() {
        let s = PerturbationSpec::parse("fphi: -1.5e-2*cos(-2p) - sin(-a) + 3 # tail").unwrap();
        let (_, v) = s.evaluate(Vec2::new(0.7, 0.0), 0.3);
        let expect = -1.5e-2 * (0.6f64).cos() + (0.7f64).sin() + 3.0;
        assert!((v - expect).abs() < 1e-15);
        let s = PerturbationSpec::parse("fpsi2 = 2 * cos( 3 * a - b ) * sin(p)").unwrap();
        assert_eq!(s.f_psi_2[0].psi, PsiFactor::cos(3, -1));
        assert!(PerturbationSpec::parse("fphi: sin(0p)").unwrap().is_empty());
    }

    #[test]
    fn parse_errors() {
        let e = PerturbationSpec::parse("\nfphi: 2*sin(4p)\nfpsi1: sin(1.5p)").unwrap_err();
        assert_eq!(e, SpecError::NonIntegerMode { line: 3, token: "1.5p".into() });
        let e = PerturbationSpec::parse("fphi: 2*tan(p)").unwrap_err();
        assert!(matches!(e, SpecError::Parse { line: 1, .. }));
        for bad in ["fphi: sin(p+a)", "fphi: sin(p)*cos(2p)", "fphi: sin(a)*sin(b)", "fphi: sin(p", "fzz: 1", "fphi 1", "fphi: 1 +"] {
            assert!(PerturbationSpec::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn simdata_is_symmetric() {
        let r = simdata_spec().check_z4_symmetry().unwrap();
        assert!(r.passes, "{:?}", r.violating_terms);
        assert!(r.numeric_residual < 1e-12);
        assert!(PerturbationSpec::default().check_z4_symmetry().unwrap().passes);
    }

    #[test]
    fn sin_phi_breaks_symmetry() {
        let spec = PerturbationSpec::parse("fphi: sin(p)").unwrap();
        let r = spec.check_z4_symmetry().unwrap();
        assert!(!r.passes);
        assert!(r.numeric_residual > 0.1);
        assert_eq!(r.violating_terms.len(), 2);
    }

    #[test]
    fn non_canonical_rejected() {
        let spec = PerturbationSpec {
            f_phi: vec![TrigTerm { coeff: 1.0, phi: PhiFactor::sin(-2), psi: PsiFactor::ONE }],
            ..Default::default()
        };
        assert!(matches!(spec.check_z4_symmetry(), Err(SpecError::NonCanonical(_))));
    }

    #[test]
    fn modes_are_closed_under_quarter_turns() {
        let modes = simdata_spec().psi_modes();
        for m in &modes {
            let q = m.quarter_turn();
            assert!(modes.contains(&q) || modes.contains(&q.neg()));
        }
        assert!(modes.contains(&Mode::new(7, 6)) && modes.contains(&Mode::new(1, -1)));
    }

    fn phi_factor() -> impl Strategy<Value = PhiFactor> {
        (0u8..3, -6i64..=6).prop_map(|(k, m)| match k {
            0 => PhiFactor::ONE,
            1 => PhiFactor::sin(m),
            _ => PhiFactor::cos(m),
        })
    }

    fn psi_factor() -> impl Strategy<Value = PsiFactor> {
        (0u8..3, -4i64..=4, -4i64..=4).prop_map(|(k, a, b)| match k {
            0 => PsiFactor::ONE,
            1 => PsiFactor::sin(a, b),
            _ => PsiFactor::cos(a, b),
        })
    }

    pub(crate) fn raw_terms() -> impl Strategy<Value = Vec<TrigTerm>> {
        prop::collection::vec(
            (-2.0..2.0f64, phi_factor(), psi_factor())
                .prop_map(|(coeff, phi, psi)| TrigTerm { coeff, phi, psi }),
            0..6,
        )
    }

    fn eval_raw(terms: &[TrigTerm], psi: Vec2, phi: f64) -> f64 {
        terms.iter().map(|t| t.eval(psi, phi)).sum()
    }

    proptest! {
        #[test]
        fn canonicalization_preserves_values(
            raw in raw_terms(), a in 0.0..TAU, b in 0.0..TAU, p in 0.0..TAU,
        ) {
            let spec = PerturbationSpec::new(raw.clone(), [], []);
            let psi = Vec2::new(a, b);
            prop_assert!((spec.evaluate(psi, p).0.x - eval_raw(&raw, psi, p)).abs() < 1e-14 * 8.0);
            prop_assert!(spec.is_canonical());
            prop_assert_eq!(spec.canonical(), spec.clone());
        }

        #[test]
        fn text_round_trip(r1 in raw_terms(), r2 in raw_terms(), r3 in raw_terms()) {
            let spec = PerturbationSpec::new(r1, r2, r3);
            let back = PerturbationSpec::parse(&spec.to_text()).unwrap();
            prop_assert_eq!(back, spec);
        }

        #[test]
        fn symmetrized_specs_pass(r1 in raw_terms(), r2 in raw_terms(), r3 in raw_terms()) {
            let spec = PerturbationSpec::new(r1, r2, r3).symmetrized();
            let rep = spec.check_z4_symmetry().unwrap();
            prop_assert!(rep.passes, "{:?}", rep.violating_terms);
            prop_assert!(rep.numeric_residual < 1e-12);
        }

        #[test]
        fn symbolic_and_numeric_checks_agree(r1 in raw_terms(), r3 in raw_terms()) {
            let spec = PerturbationSpec::new(r1, [], r3);
            let rep = spec.check_z4_symmetry().unwrap();
            if rep.passes {
                prop_assert!(rep.numeric_residual < 1e-12);
            } else {
                let worst = rep.violating_terms.iter().map(|(_, t)| t.coeff.abs()).fold(0.0, f64::max);
                prop_assert!(worst < 1e-9 || rep.numeric_residual > 1e-12);
            }
        }
    }
}
