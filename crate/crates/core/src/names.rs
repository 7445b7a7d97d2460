//! Hierarchical CCN names and wildcard namespaces.
//!
//! A [`Name`] is a non-empty sequence of UTF-8 segments printed as
//! `/seg1/seg2/...`. A [`Namespace`] is a name prefix followed by an implicit
//! terminal `*`, printed as `/seg1/seg2/*`. All prefix tests compare whole
//! segments, never raw text, so `/a/alice` is not a prefix of `/a/alicia`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Upper bound on the canonical text length of a name, in bytes.
pub const MAX_NAME_BYTES: usize = 4096;
/// Upper bound on the number of segments in a name.
pub const MAX_SEGMENTS: usize = 64;

const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("E_BAD_NAME: {0}")]
    BadName(&'static str),
    #[error("E_BAD_NAMESPACE: {0}")]
    BadNamespace(&'static str),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    segments: Vec<String>,
}

impl Name {
    pub fn parse(text: &str) -> Result<Self, NameError> {
        parse_name(text)
    }

    /// Builds a name from already split segments, enforcing the same rules as
    /// [`parse_name`].
    pub fn from_segments<I, S>(segments: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        validate_segments(&segments)?;
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    /// Always false; a name carries at least one segment.
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn last(&self) -> &str {
        self.segments.last().map(String::as_str).unwrap_or_default()
    }

    /// Returns a new name with `segment` appended.
    pub fn child(&self, segment: impl Into<String>) -> Result<Self, NameError> {
        let mut segments = self.segments.clone();
        segments.push(segment.into());
        Self::from_segments(segments)
    }

    /// The name without its final segment, or `None` for single-segment names.
    pub fn parent(&self) -> Option<Self> {
        if self.segments.len() <= 1 {
            return None;
        }
        Some(Self {
            segments: self.segments[..self.segments.len() - 1].to_vec(),
        })
    }

    /// Segment-wise prefix test; see [`is_prefix`].
    pub fn is_prefix_of(&self, other: &Name) -> bool {
        is_prefix(self, other)
    }

    /// Canonical `/a/b/c` text.
    pub fn to_uri(&self) -> String {
        self.to_string()
    }

    fn encoded_len(&self) -> usize {
        encoded_len(&self.segments)
    }
}

fn encoded_len(segments: &[String]) -> usize {
    segments.iter().map(|s| s.len() + 1).sum()
}

fn validate_segments(segments: &[String]) -> Result<(), NameError> {
    if segments.is_empty() {
        return Err(NameError::BadName("a name needs at least one segment"));
    }
    if segments.len() > MAX_SEGMENTS {
        return Err(NameError::BadName("too many segments"));
    }
    for seg in segments {
        if seg.is_empty() {
            return Err(NameError::BadName("empty segment"));
        }
        if seg.contains('/') {
            return Err(NameError::BadName("segment contains '/'"));
        }
        if seg == WILDCARD {
            return Err(NameError::BadName("'*' is not a valid name segment"));
        }
    }
    if encoded_len(segments) > MAX_NAME_BYTES {
        return Err(NameError::BadName("name too long"));
    }
    Ok(())
}

/// Parses canonical name text such as `/edu/uni-X/ics`.
pub fn parse_name(text: &str) -> Result<Name, NameError> {
    let rest = text
        .strip_prefix('/')
        .ok_or(NameError::BadName("name must start with '/'"))?;
    if rest.is_empty() {
        return Err(NameError::BadName("a name needs at least one segment"));
    }
    if text.len() > MAX_NAME_BYTES {
        return Err(NameError::BadName("name too long"));
    }
    let segments: Vec<String> = rest.split('/').map(str::to_owned).collect();
    validate_segments(&segments)?;
    Ok(Name { segments })
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({self})")
    }
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_name(s)
    }
}

impl Serialize for Name {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_name(&text).map_err(serde::de::Error::custom)
    }
}

/// True iff `short` has no more segments than `long` and they agree on every
/// segment of `short`.
pub fn is_prefix(short: &Name, long: &Name) -> bool {
    short.segments.len() <= long.segments.len()
        && short
            .segments
            .iter()
            .zip(&long.segments)
            .all(|(a, b)| a == b)
}

/// A name prefix with an implicit terminal wildcard.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Namespace {
    prefix: Name,
}

impl Namespace {
    pub fn new(prefix: Name) -> Self {
        Self { prefix }
    }

    pub fn parse(text: &str) -> Result<Self, NameError> {
        parse_namespace(text)
    }

    pub fn prefix(&self) -> &Name {
        &self.prefix
    }

    pub fn matches(&self, name: &Name) -> bool {
        namespace_matches(self, name)
    }

    pub fn covers(&self, requested: &Namespace) -> bool {
        namespace_covers(self, requested)
    }

    /// Everything after the namespace prefix, or `None` when `name` is outside
    /// the namespace.
    pub fn suffix_of<'a>(&self, name: &'a Name) -> Option<&'a [String]> {
        self.matches(name)
            .then(|| &name.segments()[self.prefix.len()..])
    }
}

/// Parses `/prefix/*`. The wildcard must be present, terminal, and preceded by
/// at least one segment.
pub fn parse_namespace(text: &str) -> Result<Namespace, NameError> {
    let prefix_text = text
        .strip_suffix("/*")
        .ok_or(NameError::BadNamespace("namespace must end with '/*'"))?;
    if prefix_text.is_empty() {
        return Err(NameError::BadNamespace("namespace needs a non-empty prefix"));
    }
    let prefix = parse_name(prefix_text)
        .map_err(|_| NameError::BadNamespace("namespace prefix is not a valid name"))?;
    // room for the trailing "/*" when printed
    if prefix.encoded_len() + 2 > MAX_NAME_BYTES {
        return Err(NameError::BadNamespace("namespace too long"));
    }
    Ok(Namespace { prefix })
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/*", self.prefix)
    }
}

impl fmt::Debug for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Namespace({self})")
    }
}

impl FromStr for Namespace {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_namespace(s)
    }
}

impl Serialize for Namespace {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Namespace {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_namespace(&text).map_err(serde::de::Error::custom)
    }
}

pub fn namespace_matches(ns: &Namespace, name: &Name) -> bool {
    is_prefix(&ns.prefix, name)
}

/// True iff every name matched by `requested` is also matched by `policy`.
pub fn namespace_covers(policy: &Namespace, requested: &Namespace) -> bool {
    is_prefix(&policy.prefix, &requested.prefix)
}
