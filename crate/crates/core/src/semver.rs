//! Semantic versions and node-semver style range expressions.
//!
//! Ranges are normalized into a disjunction of comparator sets, using the
//! same desugaring rules as the `semver` package that ships with npm
//! (caret, tilde, x-ranges, hyphen ranges, `||`, `*`). Prerelease versions
//! only satisfy a comparator set when one of its comparators names a
//! prerelease of the same `major.minor.patch` tuple.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MAX_LENGTH: usize = 256;
const MAX_SAFE_INTEGER: u64 = (1 << 53) - 1;
const MAX_COMPONENT_DIGITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SemverError {
    #[error("malformed version {input:?}: {reason}")]
    MalformedVersion { input: String, reason: &'static str },
    #[error("malformed range {input:?}: {reason}")]
    MalformedRange { input: String, reason: &'static str },
}

fn bad_version(input: &str, reason: &'static str) -> SemverError {
    SemverError::MalformedVersion {
        input: input.to_string(),
        reason,
    }
}

fn bad_range(input: &str, reason: &'static str) -> SemverError {
    SemverError::MalformedRange {
        input: input.to_string(),
        reason,
    }
}

/// One dot-separated prerelease identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Identifier {
    Numeric(u64),
    AlphaNumeric(String),
}

impl Ord for Identifier {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Identifier::Numeric(a), Identifier::Numeric(b)) => a.cmp(b),
            (Identifier::Numeric(_), Identifier::AlphaNumeric(_)) => Ordering::Less,
            (Identifier::AlphaNumeric(_), Identifier::Numeric(_)) => Ordering::Greater,
            (Identifier::AlphaNumeric(a), Identifier::AlphaNumeric(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Identifier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identifier::Numeric(n) => write!(f, "{n}"),
            Identifier::AlphaNumeric(s) => f.write_str(s),
        }
    }
}

/// A SemVer 2.0.0 version. Build metadata is carried but never affects
/// equality, hashing or precedence.
#[derive(Debug, Clone)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub prerelease: Vec<Identifier>,
    pub build: Vec<String>,
}

impl Version {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Version {
            major,
            minor,
            patch,
            prerelease: Vec::new(),
            build: Vec::new(),
        }
    }

    pub fn is_prerelease(&self) -> bool {
        !self.prerelease.is_empty()
    }

    fn same_core(&self, other: &Version) -> bool {
        self.major == other.major && self.minor == other.minor && self.patch == other.patch
    }

    /// `M.m.p-0`, the lowest version with this core.
    fn with_zero_pre(major: u64, minor: u64, patch: u64) -> Self {
        Version {
            prerelease: vec![Identifier::Numeric(0)],
            ..Version::new(major, minor, patch)
        }
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

impl Hash for Version {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.major.hash(state);
        self.minor.hash(state);
        self.patch.hash(state);
        self.prerelease.hash(state);
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        self.major
            .cmp(&other.major)
            .then(self.minor.cmp(&other.minor))
            .then(self.patch.cmp(&other.patch))
            .then_with(|| match (self.is_prerelease(), other.is_prerelease()) {
                (false, false) => Ordering::Equal,
                (false, true) => Ordering::Greater,
                (true, false) => Ordering::Less,
                // Vec ordering is element-wise with the shorter prefix first.
                (true, true) => self.prerelease.cmp(&other.prerelease),
            })
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)?;
        if !self.prerelease.is_empty() {
            f.write_str("-")?;
            write_dotted(f, &self.prerelease)?;
        }
        if !self.build.is_empty() {
            f.write_str("+")?;
            write_dotted(f, &self.build)?;
        }
        Ok(())
    }
}

fn write_dotted<T: fmt::Display>(f: &mut fmt::Formatter<'_>, parts: &[T]) -> fmt::Result {
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            f.write_str(".")?;
        }
        write!(f, "{part}")?;
    }
    Ok(())
}

impl FromStr for Version {
    type Err = SemverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_version(s)
    }
}

impl Serialize for Version {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Version {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_version(&s).map_err(serde::de::Error::custom)
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-'
}

/// Parses a numeric component: `0` or a digit string without leading zero.
fn parse_numeric(text: &str) -> Option<u64> {
    if text.is_empty() || text.len() > MAX_COMPONENT_DIGITS || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if text.len() > 1 && text.starts_with('0') {
        return None;
    }
    text.parse::<u64>().ok().filter(|n| *n <= MAX_SAFE_INTEGER)
}

fn parse_prerelease(input: &str, text: &str) -> Result<Vec<Identifier>, SemverError> {
    text.split('.')
        .map(|id| {
            if id.is_empty() || !id.chars().all(is_ident_char) {
                return Err(bad_version(input, "illegal prerelease identifier"));
            }
            if id.bytes().all(|b| b.is_ascii_digit()) {
                parse_numeric(id)
                    .map(Identifier::Numeric)
                    .ok_or_else(|| bad_version(input, "numeric prerelease identifier out of range or zero-padded"))
            } else {
                Ok(Identifier::AlphaNumeric(id.to_string()))
            }
        })
        .collect()
}

fn parse_build(input: &str, text: &str) -> Result<Vec<String>, SemverError> {
    text.split('.')
        .map(|id| {
            if id.is_empty() || !id.chars().all(is_ident_char) {
                Err(bad_version(input, "illegal build identifier"))
            } else {
                Ok(id.to_string())
            }
        })
        .collect()
}

/// Splits `rest` of a version after the numeric core into prerelease and
/// build parts.
fn parse_qualifiers(input: &str, rest: &str) -> Result<(Vec<Identifier>, Vec<String>), SemverError> {
    let (pre_part, build_part) = match rest.find('+') {
        Some(i) => (&rest[..i], Some(&rest[i + 1..])),
        None => (rest, None),
    };
    let prerelease = match pre_part.strip_prefix('-') {
        Some(p) => parse_prerelease(input, p)?,
        None if pre_part.is_empty() => Vec::new(),
        None => return Err(bad_version(input, "unexpected characters after version core")),
    };
    let build = match build_part {
        Some(b) => parse_build(input, b)?,
        None => Vec::new(),
    };
    Ok((prerelease, build))
}

/// Parses a strict `M.m.p[-pre][+build]` version. A leading `v` and
/// surrounding whitespace are tolerated.
pub fn parse_version(text: &str) -> Result<Version, SemverError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(bad_version(text, "empty version"));
    }
    if trimmed.len() > MAX_LENGTH {
        return Err(bad_version(text, "version longer than 256 characters"));
    }
    let body = trimmed.strip_prefix('v').unwrap_or(trimmed);
    let core_end = body.find(['-', '+']).unwrap_or(body.len());
    let mut nums = body[..core_end].split('.');
    let mut next_num = || -> Result<u64, SemverError> {
        let part = nums.next().ok_or_else(|| bad_version(text, "incomplete major.minor.patch core"))?;
        parse_numeric(part).ok_or_else(|| bad_version(text, "invalid numeric component"))
    };
    let major = next_num()?;
    let minor = next_num()?;
    let patch = next_num()?;
    if nums.next().is_some() {
        return Err(bad_version(text, "too many core components"));
    }
    let (prerelease, build) = parse_qualifiers(text, &body[core_end..])?;
    Ok(Version {
        major,
        minor,
        patch,
        prerelease,
        build,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Eq,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    fn symbol(self) -> &'static str {
        match self {
            Op::Eq => "",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparator {
    pub op: Op,
    pub version: Version,
}

impl Comparator {
    fn new(op: Op, version: Version) -> Self {
        Comparator { op, version }
    }

    pub fn matches(&self, v: &Version) -> bool {
        let ord = v.cmp(&self.version);
        match self.op {
            Op::Eq => ord == Ordering::Equal,
            Op::Lt => ord == Ordering::Less,
            Op::Le => ord != Ordering::Greater,
            Op::Gt => ord == Ordering::Greater,
            Op::Ge => ord != Ordering::Less,
        }
    }

    fn is_null_set(&self) -> bool {
        self.op == Op::Lt && self.version == Version::with_zero_pre(0, 0, 0)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // build metadata is not part of a comparator's identity
        let v = Version {
            build: Vec::new(),
            ..self.version.clone()
        };
        write!(f, "{}{}", self.op.symbol(), v)
    }
}

/// A conjunction of comparators. Empty means "any version".
pub type ComparatorSet = Vec<Comparator>;

/// A disjunction of comparator sets.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VersionRange {
    pub alternatives: Vec<ComparatorSet>,
}

impl VersionRange {
    pub fn any() -> Self {
        VersionRange {
            alternatives: vec![Vec::new()],
        }
    }

    pub fn exact(v: &Version) -> Self {
        VersionRange {
            alternatives: vec![vec![Comparator::new(Op::Eq, v.clone())]],
        }
    }

    pub fn is_any(&self) -> bool {
        self.alternatives.iter().any(|set| set.is_empty())
    }

    pub fn satisfied_by(&self, v: &Version) -> bool {
        satisfies(v, self)
    }
}

impl fmt::Display for VersionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_any() {
            return f.write_str("*");
        }
        for (i, set) in self.alternatives.iter().enumerate() {
            if i > 0 {
                f.write_str("||")?;
            }
            for (j, c) in set.iter().enumerate() {
                if j > 0 {
                    f.write_str(" ")?;
                }
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for VersionRange {
    type Err = SemverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_range(s)
    }
}

impl Serialize for VersionRange {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// A possibly-partial version as written inside a range (`1`, `1.x`, `1.2.*`).
/// `None` components are wildcards.
#[derive(Debug, Clone)]
struct Partial {
    major: Option<u64>,
    minor: Option<u64>,
    patch: Option<u64>,
    prerelease: Vec<Identifier>,
}

impl Partial {
    fn full(&self) -> Version {
        Version {
            major: self.major.unwrap_or(0),
            minor: self.minor.unwrap_or(0),
            patch: self.patch.unwrap_or(0),
            prerelease: self.prerelease.clone(),
            build: Vec::new(),
        }
    }
}

fn parse_partial(input: &str, text: &str) -> Result<Partial, SemverError> {
    let body = text.trim_start_matches(['v', '=']);
    if body.is_empty() {
        return Err(bad_range(input, "missing version"));
    }
    let core_end = body.find(['-', '+']).unwrap_or(body.len());
    let parts: Vec<&str> = body[..core_end].split('.').collect();
    if parts.len() > 3 {
        return Err(bad_range(input, "too many version components"));
    }
    let component = |i: usize| -> Result<Option<u64>, SemverError> {
        match parts.get(i) {
            None => Ok(None),
            Some(&"x") | Some(&"X") | Some(&"*") => Ok(None),
            Some(p) => parse_numeric(p)
                .map(Some)
                .ok_or_else(|| bad_range(input, "invalid version component")),
        }
    };
    let major = component(0)?;
    let minor = component(1)?;
    let patch = component(2)?;
    let rest = &body[core_end..];
    if !rest.is_empty() && parts.len() < 3 {
        return Err(bad_range(input, "prerelease or build on a partial version"));
    }
    let (prerelease, _build) =
        parse_qualifiers(input, rest).map_err(|_| bad_range(input, "invalid prerelease or build"))?;
    // a wildcard makes every lower component a wildcard too
    let minor = major.and(minor);
    let patch = minor.and(patch);
    Ok(Partial {
        major,
        minor,
        patch,
        prerelease,
    })
}

fn null_set() -> ComparatorSet {
    vec![Comparator::new(Op::Lt, Version::with_zero_pre(0, 0, 0))]
}

fn ge(v: Version) -> Comparator {
    Comparator::new(Op::Ge, v)
}

fn lt_zero_pre(major: u64, minor: u64, patch: u64) -> Comparator {
    Comparator::new(Op::Lt, Version::with_zero_pre(major, minor, patch))
}

fn desugar_tilde(p: &Partial) -> ComparatorSet {
    match (p.major, p.minor, p.patch) {
        (None, _, _) => Vec::new(),
        (Some(ma), None, _) => vec![ge(Version::new(ma, 0, 0)), lt_zero_pre(ma + 1, 0, 0)],
        (Some(ma), Some(mi), None) => vec![ge(Version::new(ma, mi, 0)), lt_zero_pre(ma, mi + 1, 0)],
        (Some(ma), Some(mi), Some(_)) => vec![ge(p.full()), lt_zero_pre(ma, mi + 1, 0)],
    }
}

fn desugar_caret(p: &Partial) -> ComparatorSet {
    match (p.major, p.minor, p.patch) {
        (None, _, _) => Vec::new(),
        (Some(ma), None, _) => vec![ge(Version::new(ma, 0, 0)), lt_zero_pre(ma + 1, 0, 0)],
        (Some(0), Some(mi), None) => vec![ge(Version::new(0, mi, 0)), lt_zero_pre(0, mi + 1, 0)],
        (Some(ma), Some(mi), None) => vec![ge(Version::new(ma, mi, 0)), lt_zero_pre(ma + 1, 0, 0)],
        (Some(0), Some(0), Some(pa)) => vec![ge(p.full()), lt_zero_pre(0, 0, pa + 1)],
        (Some(0), Some(mi), Some(_)) => vec![ge(p.full()), lt_zero_pre(0, mi + 1, 0)],
        (Some(ma), Some(_), Some(_)) => vec![ge(p.full()), lt_zero_pre(ma + 1, 0, 0)],
    }
}

fn desugar_xrange(op: Option<Op>, p: &Partial) -> ComparatorSet {
    let (major, minor) = match (p.major, p.minor, p.patch) {
        (Some(_), Some(_), Some(_)) => {
            return vec![Comparator::new(op.unwrap_or(Op::Eq), p.full())];
        }
        (None, _, _) => {
            return match op {
                Some(Op::Lt) | Some(Op::Gt) => null_set(),
                _ => Vec::new(),
            };
        }
        (Some(ma), mi, _) => (ma, mi),
    };
    match (op, minor) {
        (None | Some(Op::Eq), None) => vec![ge(Version::new(major, 0, 0)), lt_zero_pre(major + 1, 0, 0)],
        (None | Some(Op::Eq), Some(mi)) => vec![ge(Version::new(major, mi, 0)), lt_zero_pre(major, mi + 1, 0)],
        (Some(Op::Gt), None) => vec![ge(Version::new(major + 1, 0, 0))],
        (Some(Op::Gt), Some(mi)) => vec![ge(Version::new(major, mi + 1, 0))],
        (Some(Op::Ge), mi) => vec![ge(Version::new(major, mi.unwrap_or(0), 0))],
        (Some(Op::Le), None) => vec![lt_zero_pre(major + 1, 0, 0)],
        (Some(Op::Le), Some(mi)) => vec![lt_zero_pre(major, mi + 1, 0)],
        (Some(Op::Lt), mi) => vec![lt_zero_pre(major, mi.unwrap_or(0), 0)],
    }
}

fn desugar_hyphen(from: &Partial, to: &Partial) -> ComparatorSet {
    let mut set = Vec::new();
    match (from.major, from.minor, from.patch) {
        (None, _, _) => {}
        (Some(ma), None, _) => set.push(ge(Version::new(ma, 0, 0))),
        (Some(ma), Some(mi), None) => set.push(ge(Version::new(ma, mi, 0))),
        _ => set.push(ge(from.full())),
    }
    match (to.major, to.minor, to.patch) {
        (None, _, _) => {}
        (Some(ma), None, _) => set.push(lt_zero_pre(ma + 1, 0, 0)),
        (Some(ma), Some(mi), None) => set.push(lt_zero_pre(ma, mi + 1, 0)),
        _ => set.push(Comparator::new(Op::Le, to.full())),
    }
    set
}

fn parse_simple(input: &str, token: &str) -> Result<ComparatorSet, SemverError> {
    if let Some(rest) = token.strip_prefix("~>").or_else(|| token.strip_prefix('~')) {
        if rest.is_empty() {
            return Ok(Vec::new());
        }
        return Ok(desugar_tilde(&parse_partial(input, rest)?));
    }
    if let Some(rest) = token.strip_prefix('^') {
        if rest.is_empty() {
            return Ok(Vec::new());
        }
        return Ok(desugar_caret(&parse_partial(input, rest)?));
    }
    let (op, rest) = if let Some(r) = token.strip_prefix(">=") {
        (Some(Op::Ge), r)
    } else if let Some(r) = token.strip_prefix("<=") {
        (Some(Op::Le), r)
    } else if let Some(r) = token.strip_prefix('>') {
        (Some(Op::Gt), r)
    } else if let Some(r) = token.strip_prefix('<') {
        (Some(Op::Lt), r)
    } else if let Some(r) = token.strip_prefix('=') {
        (Some(Op::Eq), r)
    } else {
        (None, token)
    };
    Ok(desugar_xrange(op, &parse_partial(input, rest)?))
}

/// Removes whitespace between an operator and its operand
/// (`>= 1.2` becomes `>=1.2`, `~ 1` becomes `~1`).
fn glue_operators(part: &str) -> String {
    let mut out = String::with_capacity(part.len());
    let mut after_op = false;
    for c in part.chars() {
        if c.is_whitespace() {
            if !after_op {
                out.push(' ');
            }
            continue;
        }
        after_op = matches!(c, '<' | '>' | '=' | '~' | '^');
        out.push(c);
    }
    out
}

/// Drops duplicate comparators, redundant `>=0.0.0` and wildcard entries.
fn tidy_set(set: ComparatorSet) -> ComparatorSet {
    if set.iter().any(Comparator::is_null_set) {
        return null_set();
    }
    let mut out: ComparatorSet = Vec::with_capacity(set.len());
    for c in set {
        if c.op == Op::Ge && c.version == Version::new(0, 0, 0) && !c.version.is_prerelease() {
            continue;
        }
        if !out.iter().any(|o| o.op == c.op && o.version == c.version) {
            out.push(c);
        }
    }
    out
}

fn parse_comparator_set(input: &str, part: &str) -> Result<ComparatorSet, SemverError> {
    let words: Vec<&str> = part.split_whitespace().collect();
    if words.len() == 3 && words[1] == "-" {
        let from = parse_partial(input, words[0])?;
        let to = parse_partial(input, words[2])?;
        return Ok(tidy_set(desugar_hyphen(&from, &to)));
    }
    let glued = glue_operators(part);
    let mut set = Vec::new();
    for token in glued.split_whitespace() {
        set.extend(parse_simple(input, token)?);
    }
    Ok(tidy_set(set))
}

/// Parses a node-semver range expression into normalized comparator form.
/// The empty string and `*` both mean "any version".
pub fn parse_range(text: &str) -> Result<VersionRange, SemverError> {
    if text.len() > MAX_LENGTH {
        return Err(bad_range(text, "range longer than 256 characters"));
    }
    let mut alternatives = Vec::new();
    for part in text.split("||") {
        alternatives.push(parse_comparator_set(text, part.trim())?);
    }
    if alternatives.len() > 1 {
        let first = alternatives[0].clone();
        alternatives.retain(|set| !(set.len() == 1 && set[0].is_null_set()));
        if alternatives.is_empty() {
            alternatives.push(first);
        } else if let Some(any) = alternatives.iter().position(Vec::is_empty) {
            alternatives = vec![alternatives.swap_remove(any)];
        }
    }
    Ok(VersionRange { alternatives })
}

fn set_matches(set: &[Comparator], v: &Version) -> bool {
    if !set.iter().all(|c| c.matches(v)) {
        return false;
    }
    if v.is_prerelease() {
        return set
            .iter()
            .any(|c| c.version.is_prerelease() && c.version.same_core(v));
    }
    true
}

/// True iff `v` satisfies at least one comparator set of `r`.
pub fn satisfies(v: &Version, r: &VersionRange) -> bool {
    r.alternatives.iter().any(|set| set_matches(set, v))
}

/// Highest-precedence member of `versions` satisfying `r`. On precedence
/// ties the first occurrence wins.
pub fn max_satisfying<'a, I>(versions: I, r: &VersionRange) -> Option<&'a Version>
where
    I: IntoIterator<Item = &'a Version>,
{
    let mut best: Option<&Version> = None;
    for v in versions {
        if satisfies(v, r) && best.is_none_or(|b| v > b) {
            best = Some(v);
        }
    }
    best
}
