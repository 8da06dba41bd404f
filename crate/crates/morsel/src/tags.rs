//! Hierarchical morphotactic tagset, level projection and derived views.
//!
//! A [`MorphTag`] is a path of up to five components. The first component is
//! the position class (`PREFIX`, `ROOT`, `SUFFIX`, `UNKNOWN` or `SEGMENT`);
//! affix paths continue with derivational/inflectional status, part of
//! speech, inflectional feature and feature value; root paths continue with
//! the part of speech only. Truncating the path projects a tag to a coarser
//! granularity level:
//!
//! * level 0 — a single `SEGMENT` tag, no morphotactics;
//! * level 1 — `PREFIX` / `ROOT` / `SUFFIX` (plus `UNKNOWN`);
//! * level 2 — affixes split into `DERIV` and `INFL`;
//! * level 3 — adds the part of speech;
//! * level 4 — adds the inflectional feature (e.g. `NUMBER`, `CASE`);
//! * level 5 — adds the feature value (e.g. `PLURAL`).
//!
//! A [`LabeledSegmentation`] pairs each morph of a word with a tag; the
//! unlabeled segmentation, the roots, the stem and the inflectional tag
//! bundle are all derived from it.

use std::collections::BTreeSet;
use std::fmt;

use crate::errors::{Error, Result};

/// Component that fills a skipped slot so path length still encodes level
/// (e.g. an inflectional tag whose part of speech is unannotated).
pub const NONE_COMPONENT: &str = "NONE";

/// Reserved previous-label name for segments starting at position 0.
pub const BEGIN_LABEL: &str = "BEGIN";

const DERIV: &str = "DERIV";
const INFL: &str = "INFL";

/// Position class of a morph: the first component of every tag path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PositionClass {
    Prefix,
    Root,
    Suffix,
    Unknown,
    Segment,
}

impl PositionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PositionClass::Prefix => "PREFIX",
            PositionClass::Root => "ROOT",
            PositionClass::Suffix => "SUFFIX",
            PositionClass::Unknown => "UNKNOWN",
            PositionClass::Segment => "SEGMENT",
        }
    }

    fn from_str(s: &str) -> Option<Self> {
        match s {
            "PREFIX" => Some(PositionClass::Prefix),
            "ROOT" => Some(PositionClass::Root),
            "SUFFIX" => Some(PositionClass::Suffix),
            "UNKNOWN" => Some(PositionClass::Unknown),
            "SEGMENT" => Some(PositionClass::Segment),
            _ => None,
        }
    }

    /// True for `PREFIX` and `SUFFIX`.
    pub fn is_affix(self) -> bool {
        matches!(self, PositionClass::Prefix | PositionClass::Suffix)
    }
}

/// Tagset granularity level, an integer in `[0, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagsetLevel(u8);

impl TagsetLevel {
    pub fn new(level: u8) -> Result<Self> {
        if level > 5 {
            return Err(Error::Config(format!(
                "tagset level must be in 0..=5, got {level}"
            )));
        }
        Ok(TagsetLevel(level))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl fmt::Display for TagsetLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One node in the hierarchical morphotactic tagset: an ordered path of
/// uppercase components, serialized colon-joined
/// (`SUFFIX:INFL:NOUN:NUMBER:PLURAL`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MorphTag {
    components: Vec<String>,
}

fn valid_component(c: &str) -> bool {
    !c.is_empty()
        && c.chars()
            .all(|ch| ch.is_ascii_uppercase() || ch.is_ascii_digit() || ch == '_')
        && c.chars().next().is_some_and(|ch| ch.is_ascii_uppercase())
}

impl MorphTag {
    /// Builds a tag from components, enforcing the path invariants.
    pub fn from_components<I, S>(components: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let components: Vec<String> = components.into_iter().map(Into::into).collect();
        let text = components.join(":");
        let err = |reason: String| Error::TagParse {
            text: text.clone(),
            reason,
        };

        if components.is_empty() {
            return Err(err("empty tag".into()));
        }
        if components.len() > 5 {
            return Err(err(format!(
                "{} components, at most 5 allowed",
                components.len()
            )));
        }
        for c in &components {
            if !valid_component(c) {
                return Err(err(format!("component `{c}` is not an uppercase token")));
            }
        }
        let class = PositionClass::from_str(&components[0]).ok_or_else(|| {
            err(format!(
                "first component `{}` is not one of PREFIX/ROOT/SUFFIX/UNKNOWN/SEGMENT",
                components[0]
            ))
        })?;
        match class {
            PositionClass::Segment | PositionClass::Unknown => {
                if components.len() > 1 {
                    return Err(err(format!(
                        "`{}` carries no further components, found `{}`",
                        components[0], components[1]
                    )));
                }
            }
            PositionClass::Root => {
                if components.len() > 2 {
                    return Err(err(format!(
                        "ROOT paths carry at most a part of speech, found `{}`",
                        components[2]
                    )));
                }
                if let Some(second) = components.get(1) {
                    if second == DERIV || second == INFL {
                        return Err(err(format!("`{second}` may not appear under ROOT")));
                    }
                }
            }
            PositionClass::Prefix | PositionClass::Suffix => {
                if let Some(second) = components.get(1) {
                    if second != DERIV && second != INFL {
                        return Err(err(format!(
                            "affix component 2 must be DERIV or INFL, found `{second}`"
                        )));
                    }
                }
            }
        }
        Ok(MorphTag { components })
    }

    /// Parses the colon-joined serialization.
    pub fn parse(text: &str) -> Result<Self> {
        if text.is_empty() {
            return Err(Error::TagParse {
                text: text.into(),
                reason: "empty tag".into(),
            });
        }
        Self::from_components(text.split(':').map(str::to_owned))
    }

    /// The single level-0 tag.
    pub fn segment() -> Self {
        MorphTag {
            components: vec!["SEGMENT".into()],
        }
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    pub fn position_class(&self) -> PositionClass {
        PositionClass::from_str(&self.components[0]).expect("validated at construction")
    }

    /// True when the tag marks an inflectional affix.
    pub fn is_inflectional(&self) -> bool {
        self.position_class().is_affix() && self.components.get(1).is_some_and(|c| c == INFL)
    }

    /// True when the tag marks a derivational affix.
    pub fn is_derivational(&self) -> bool {
        self.position_class().is_affix() && self.components.get(1).is_some_and(|c| c == DERIV)
    }

    pub fn is_root(&self) -> bool {
        self.position_class() == PositionClass::Root
    }

    /// Projects the tag to a coarser granularity level. Level 0 collapses
    /// everything to `SEGMENT`; `UNKNOWN` survives unchanged at levels 1–5;
    /// root paths keep one component at levels 1–2 and two at levels 3–5;
    /// affix paths keep `min(level, length)` components. Idempotent and
    /// monotone: `project(project(t, j), i) == project(t, i)` for `i <= j`.
    pub fn project(&self, level: TagsetLevel) -> MorphTag {
        let l = level.get() as usize;
        if l == 0 {
            return MorphTag::segment();
        }
        let keep = match self.position_class() {
            PositionClass::Segment | PositionClass::Unknown => 1,
            PositionClass::Root => {
                if l <= 2 {
                    1
                } else {
                    2
                }
            }
            PositionClass::Prefix | PositionClass::Suffix => l,
        };
        let keep = keep.min(self.components.len());
        MorphTag {
            components: self.components[..keep].to_vec(),
        }
    }

    /// The deepest non-`NONE` inflectional component this tag carries: the
    /// feature value when present (level 5), otherwise the feature name
    /// (level 4). `None` for non-inflectional or coarser tags.
    pub fn inflectional_component(&self) -> Option<&str> {
        if !self.is_inflectional() {
            return None;
        }
        for idx in [4usize, 3] {
            if let Some(c) = self.components.get(idx) {
                if c != NONE_COMPONENT {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Path depth of the emitted inflectional component, if any (5 for a
    /// feature value, 4 for a feature name).
    fn inflectional_depth(&self) -> Option<u8> {
        if !self.is_inflectional() {
            return None;
        }
        if self.components.get(4).is_some_and(|c| c != NONE_COMPONENT) {
            Some(5)
        } else if self.components.get(3).is_some_and(|c| c != NONE_COMPONENT) {
            Some(4)
        } else {
            None
        }
    }
}

impl fmt::Display for MorphTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.components.join(":"))
    }
}

/// A finite, deterministically ordered set of tags at one granularity level.
///
/// Closed under projection: every member equals its own projection at the
/// declared level. The sorted order defines the label indexing used by the
/// lattice code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tagset {
    level: TagsetLevel,
    tags: Vec<MorphTag>,
}

impl Tagset {
    /// Builds a tagset from tags already at `level`; duplicates collapse.
    pub fn from_tags<I>(level: TagsetLevel, tags: I) -> Result<Self>
    where
        I: IntoIterator<Item = MorphTag>,
    {
        let set: BTreeSet<MorphTag> = tags.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("empty tagset".into()));
        }
        for tag in &set {
            if tag.project(level) != *tag {
                return Err(Error::Config(format!(
                    "tag `{tag}` is not closed under projection at level {level}"
                )));
            }
        }
        Ok(Tagset {
            level,
            tags: set.into_iter().collect(),
        })
    }

    /// Induces the tagset of all distinct projections of the gold labels.
    pub fn build<'a, I>(analyses: I, level: TagsetLevel) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LabeledSegmentation>,
    {
        let mut set = BTreeSet::new();
        for ls in analyses {
            for (_, tag) in ls.segments() {
                set.insert(tag.project(level));
            }
        }
        Tagset::from_tags(level, set)
    }

    pub fn level(&self) -> TagsetLevel {
        self.level
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[MorphTag] {
        &self.tags
    }

    pub fn tag(&self, index: usize) -> &MorphTag {
        &self.tags[index]
    }

    pub fn index_of(&self, tag: &MorphTag) -> Option<usize> {
        self.tags.binary_search(tag).ok()
    }
}

/// A word partitioned into contiguous morphs, each paired with a tag.
///
/// The concatenation of the morphs equals the word exactly and every morph
/// is non-empty. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSegmentation {
    word: String,
    segments: Vec<(String, MorphTag)>,
}

/// The views derived from one labeled segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewSet {
    /// The unlabeled segmentation: the morphs with tags dropped.
    pub ums: Vec<String>,
    /// Morphs whose tags are roots, in surface order.
    pub roots: Vec<String>,
    /// Concatenation of all roots and derivational affixes, in surface order.
    pub stem: String,
    /// Inflectional components in segment order (feature values when the
    /// labels carry them, otherwise feature names).
    pub morph_tag: Vec<String>,
    /// Path depth the bundle components were read from (5 = values,
    /// 4 = feature names); `None` when the bundle is empty.
    pub morph_tag_level: Option<u8>,
}

impl LabeledSegmentation {
    /// Builds a segmentation from `(morph, tag)` pairs; the word is the
    /// concatenation of the morphs.
    pub fn new(segments: Vec<(String, MorphTag)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Segmentation {
                word: String::new(),
                reason: "no segments".into(),
            });
        }
        let word: String = segments.iter().map(|(m, _)| m.as_str()).collect();
        for (morph, _) in &segments {
            if morph.is_empty() {
                return Err(Error::Segmentation {
                    word,
                    reason: "empty segment".into(),
                });
            }
        }
        Ok(LabeledSegmentation { word, segments })
    }

    pub fn word(&self) -> &str {
        &self.word
    }

    pub fn segments(&self) -> &[(String, MorphTag)] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Internal boundary positions in codepoints, strictly inside the word.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.segments.len().saturating_sub(1));
        let mut pos = 0;
        for (morph, _) in &self.segments[..self.segments.len() - 1] {
            pos += morph.chars().count();
            out.push(pos);
        }
        out
    }

    /// Projects every label to `level`, keeping the segmentation.
    pub fn project(&self, level: TagsetLevel) -> LabeledSegmentation {
        LabeledSegmentation {
            word: self.word.clone(),
            segments: self
                .segments
                .iter()
                .map(|(m, t)| (m.clone(), t.project(level)))
                .collect(),
        }
    }

    /// The unlabeled segmentation.
    pub fn ums_view(&self) -> Vec<String> {
        self.segments.iter().map(|(m, _)| m.clone()).collect()
    }

    /// Morphs tagged as roots, in surface order. Requires labels at level
    /// >= 1 (a `SEGMENT` label cannot be classified).
    pub fn roots_view(&self) -> Result<Vec<String>> {
        self.check_no_segment_labels("roots view", "level >= 1")?;
        Ok(self
            .segments
            .iter()
            .filter(|(_, t)| t.is_root())
            .map(|(m, _)| m.clone())
            .collect())
    }

    /// The stem: concatenation of roots and derivational affixes in surface
    /// order. Requires labels at level >= 2 (bare affix and `SEGMENT` labels
    /// cannot be classified as derivational or inflectional).
    pub fn stem_view(&self) -> Result<String> {
        self.check_no_segment_labels("stem view", "level >= 2")?;
        self.check_affix_depth("stem view")?;
        Ok(self
            .segments
            .iter()
            .filter(|(_, t)| t.is_root() || t.is_derivational())
            .map(|(m, _)| m.as_str())
            .collect())
    }

    /// The inflectional tag bundle in segment order. Segments tagged
    /// `SEGMENT` are treated as non-inflectional and skipped (the
    /// convention used when non-inflectional tags are collapsed for tag
    /// classification); bare affix labels are rejected.
    pub fn morph_tag_view(&self) -> Result<(Vec<String>, Option<u8>)> {
        self.check_affix_depth("morphological tag view")?;
        let mut bundle = Vec::new();
        let mut depth: Option<u8> = None;
        for (_, tag) in &self.segments {
            if let Some(c) = tag.inflectional_component() {
                bundle.push(c.to_owned());
                depth = depth.max(tag.inflectional_depth());
            }
        }
        Ok((bundle, depth))
    }

    /// All four views at once; requires labels at level >= 2.
    pub fn derive_views(&self) -> Result<ViewSet> {
        let roots = self.roots_view()?;
        let stem = self.stem_view()?;
        let (morph_tag, morph_tag_level) = self.morph_tag_view()?;
        Ok(ViewSet {
            ums: self.ums_view(),
            roots,
            stem,
            morph_tag,
            morph_tag_level,
        })
    }

    fn check_no_segment_labels(&self, need: &str, required: &str) -> Result<()> {
        if self
            .segments
            .iter()
            .any(|(_, t)| t.position_class() == PositionClass::Segment)
        {
            return Err(Error::Granularity {
                need: need.into(),
                required: required.into(),
                found: "a SEGMENT label (level 0)".into(),
            });
        }
        Ok(())
    }

    fn check_affix_depth(&self, need: &str) -> Result<()> {
        for (_, tag) in &self.segments {
            if tag.position_class().is_affix() && tag.components().len() < 2 {
                return Err(Error::Granularity {
                    need: need.into(),
                    required: "level >= 2".into(),
                    found: format!("bare affix label `{tag}` (level 1)"),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for LabeledSegmentation {
    /// Corpus analysis format: space-separated `morph:TAG` tokens.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (morph, tag) in &self.segments {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{morph}:{tag}")?;
            first = false;
        }
        Ok(())
    }
}
