//! Reply parsing for the reasoning stage.
//!
//! The strict grammar is one line per decision:
//!
//! ```text
//! DECISION: pick(3)
//! DECISION: insert(101)
//! DECISION: done
//! ```
//!
//! When no strict line is present the parser falls back to the last JSON
//! object in the reply carrying a `"skill"` field.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::marking::{MarkerId, LOCATION_MARKERS, OBJECT_MARKERS};

pub const DECISION_KEYWORD: &str = "DECISION:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "skill", rename_all = "snake_case")]
pub enum Skill {
    Pick { object_marker: MarkerId },
    Place { target_marker: MarkerId },
    Insert { target_marker: MarkerId },
    Done,
    Init,
}

/// Which id a skill takes, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arg {
    None,
    Object,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SkillName {
    Pick,
    Place,
    Insert,
    Done,
    Init,
}

impl SkillName {
    const ALL: [SkillName; 5] = [SkillName::Pick, SkillName::Place, SkillName::Insert, SkillName::Done, SkillName::Init];

    fn as_str(self) -> &'static str {
        match self {
            SkillName::Pick => "pick",
            SkillName::Place => "place",
            SkillName::Insert => "insert",
            SkillName::Done => "done",
            SkillName::Init => "init",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|n| n.as_str() == s)
    }

    fn arg(self) -> Arg {
        match self {
            SkillName::Pick => Arg::Object,
            SkillName::Place | SkillName::Insert => Arg::Location,
            SkillName::Done | SkillName::Init => Arg::None,
        }
    }

    fn describe(self) -> &'static str {
        match self {
            SkillName::Pick => "grasp the object with the given object marker",
            SkillName::Place => "put the held object down at the given location marker",
            SkillName::Insert => "insert the held object onto the given location marker",
            SkillName::Done => "the assembly matches the goal image",
            SkillName::Init => "return the robot to its home pose and open the gripper",
        }
    }
}

impl Skill {
    pub fn name(&self) -> &'static str {
        self.skill_name().as_str()
    }

    fn skill_name(&self) -> SkillName {
        match self {
            Skill::Pick { .. } => SkillName::Pick,
            Skill::Place { .. } => SkillName::Place,
            Skill::Insert { .. } => SkillName::Insert,
            Skill::Done => SkillName::Done,
            Skill::Init => SkillName::Init,
        }
    }

    pub fn marker(&self) -> Option<MarkerId> {
        match *self {
            Skill::Pick { object_marker } => Some(object_marker),
            Skill::Place { target_marker } | Skill::Insert { target_marker } => Some(target_marker),
            Skill::Done | Skill::Init => None,
        }
    }

    /// Every valid skill over the full marker namespace.
    pub fn enumerate_all() -> Vec<Skill> {
        let mut out = vec![Skill::Done, Skill::Init];
        out.extend(OBJECT_MARKERS.map(|m| Skill::Pick { object_marker: MarkerId(m) }));
        for m in LOCATION_MARKERS {
            out.push(Skill::Place { target_marker: MarkerId(m) });
            out.push(Skill::Insert { target_marker: MarkerId(m) });
        }
        out
    }
}

impl fmt::Display for Skill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.marker() {
            Some(m) => write!(f, "{}({})", self.name(), m),
            None => f.write_str(self.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionMode {
    Strict,
    Tolerant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillDecision {
    pub skill: Skill,
    pub raw_text: String,
    pub extraction_mode: ExtractionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    NoDecisionFound,
    UnknownSkillName,
    MissingId,
    IdOutOfNamespace,
    AmbiguousDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind:?}: {detail}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Character range in the reply that triggered the error.
    pub span: Option<Range<usize>>,
    pub detail: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: Option<Range<usize>>, detail: impl Into<String>) -> Self {
        ParseError { kind, span, detail: detail.into() }
    }
}

/// The grammar block embedded in prompts. Built from the same skill table
/// the parser matches against.
pub fn grammar_text() -> String {
    let mut out = format!(
        "Reply with exactly one line of the form `{DECISION_KEYWORD} <skill>` or `{DECISION_KEYWORD} <skill>(<id>)`.\n"
    );
    for name in SkillName::ALL {
        let (form, arg) = match name.arg() {
            Arg::None => (name.as_str().to_string(), String::new()),
            Arg::Object => (
                format!("{}(<id>)", name.as_str()),
                format!(", id is an object marker {}..{}", OBJECT_MARKERS.start(), OBJECT_MARKERS.end()),
            ),
            Arg::Location => (
                format!("{}(<id>)", name.as_str()),
                format!(", id is a location marker {}..{}", LOCATION_MARKERS.start(), LOCATION_MARKERS.end()),
            ),
        };
        out.push_str(&format!("  {DECISION_KEYWORD} {form}  -- {}{arg}\n", name.describe()));
    }
    out.push_str(&format!("Example: {}\n", format_decision(&Skill::Pick { object_marker: MarkerId(3) })));
    out
}

/// The strict-grammar line for `skill`.
pub fn format_decision(skill: &Skill) -> String {
    format!("{DECISION_KEYWORD} {skill}")
}

/// A syntactically complete `DECISION:` line.
#[derive(Debug, Clone, PartialEq, Eq)]
struct StrictLine {
    name: SkillName,
    id: Option<u64>,
    span: Range<usize>,
}

enum LineScan {
    NotADecision,
    WellFormed(StrictLine),
    Malformed(ParseError),
}

fn char_span(text: &str, bytes: Range<usize>) -> Range<usize> {
    let start = text[..bytes.start].chars().count();
    start..start + text[bytes].chars().count()
}

fn scan_line(full: &str, line_start: usize, line: &str) -> LineScan {
    let Some(at) = find_ci(line, DECISION_KEYWORD) else {
        return LineScan::NotADecision;
    };
    let rest = &line[at + DECISION_KEYWORD.len()..];
    let offset = line_start + at;
    let span = char_span(full, offset..line_start + line.len());
    let rest = rest.trim_start();
    let name_len = rest.find(|c: char| !c.is_ascii_alphabetic() && c != '_').unwrap_or(rest.len());
    let (name_str, mut tail) = rest.split_at(name_len);
    let Some(name) = SkillName::parse(name_str) else {
        return LineScan::Malformed(ParseError::new(
            ParseErrorKind::UnknownSkillName,
            Some(span),
            format!("unknown skill {name_str:?}"),
        ));
    };
    tail = tail.trim_start();
    let mut id = None;
    if let Some(inner) = tail.strip_prefix('(') {
        let Some(close) = inner.find(')') else {
            return LineScan::Malformed(ParseError::new(ParseErrorKind::MissingId, Some(span), "unclosed parenthesis"));
        };
        let arg = inner[..close].trim();
        match arg.parse::<u64>() {
            Ok(v) => id = Some(v),
            Err(_) if arg.is_empty() => {}
            Err(_) => {
                return LineScan::Malformed(ParseError::new(
                    ParseErrorKind::MissingId,
                    Some(span),
                    format!("id {arg:?} is not a number"),
                ))
            }
        }
        tail = &inner[close + 1..];
    }
    if !tail.trim().chars().all(|c| matches!(c, '.' | '*' | '`' | '!')) {
        return LineScan::Malformed(ParseError::new(
            ParseErrorKind::NoDecisionFound,
            Some(span),
            format!("trailing text {:?}", tail.trim()),
        ));
    }
    LineScan::WellFormed(StrictLine { name, id, span })
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    let (h, n) = (haystack.as_bytes(), needle.as_bytes());
    (0..=h.len().checked_sub(n.len())?).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

fn validate(
    name: SkillName,
    id: Option<u64>,
    span: Option<Range<usize>>,
    known: &BTreeSet<MarkerId>,
) -> Result<Skill, ParseError> {
    let range = match name.arg() {
        Arg::None => {
            return match id {
                None => Ok(if name == SkillName::Done { Skill::Done } else { Skill::Init }),
                Some(v) => Err(ParseError::new(
                    ParseErrorKind::IdOutOfNamespace,
                    span,
                    format!("{} takes no id, got {v}", name.as_str()),
                )),
            }
        }
        Arg::Object => OBJECT_MARKERS,
        Arg::Location => LOCATION_MARKERS,
    };
    let Some(raw) = id else {
        return Err(ParseError::new(ParseErrorKind::MissingId, span, format!("{} requires an id", name.as_str())));
    };
    let marker = u32::try_from(raw).ok().map(MarkerId);
    let Some(marker) = marker.filter(|m| range.contains(&m.0) && known.contains(m)) else {
        return Err(ParseError::new(
            ParseErrorKind::IdOutOfNamespace,
            span,
            format!("{} id {raw} is not a known marker in {}..{}", name.as_str(), range.start(), range.end()),
        ));
    };
    Ok(match name {
        SkillName::Pick => Skill::Pick { object_marker: marker },
        SkillName::Place => Skill::Place { target_marker: marker },
        SkillName::Insert => Skill::Insert { target_marker: marker },
        SkillName::Done | SkillName::Init => unreachable!("handled above"),
    })
}

fn json_id(v: Option<&Value>) -> Result<Option<u64>, ()> {
    match v {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => n.as_u64().map(Some).ok_or(()),
        Some(Value::String(s)) => s.trim().parse().map(Some).map_err(|_| ()),
        Some(_) => Err(()),
    }
}

/// Last JSON object with a `"skill"` key, parsed to a skill or an error.
fn tolerant(text: &str, known: &BTreeSet<MarkerId>) -> Option<Result<Skill, ParseError>> {
    let mut last = None;
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        let Some(Ok(Value::Object(map))) = stream.next() else { continue };
        let Some(skill) = map.get("skill") else { continue };
        let span = Some(char_span(text, i..i + stream.byte_offset()));
        last = Some((map.clone(), skill.clone(), span));
    }
    let (map, skill, span) = last?;
    let Some(name) = skill.as_str().and_then(SkillName::parse) else {
        return Some(Err(ParseError::new(ParseErrorKind::UnknownSkillName, span, format!("unknown skill {skill}"))));
    };
    let field = match name.arg() {
        Arg::Object => "object_id",
        Arg::Location => "target_id",
        Arg::None => return Some(validate(name, None, span, known)),
    };
    Some(match json_id(map.get(field)) {
        Ok(id) => validate(name, id, span, known),
        Err(()) => Err(ParseError::new(ParseErrorKind::MissingId, span, format!("{field} is not an integer"))),
    })
}

/// Parse a reply into a validated decision. Total over all inputs.
pub fn parse_decision(raw_text: &str, known_markers: &BTreeSet<MarkerId>) -> Result<SkillDecision, ParseError> {
    let mut well_formed: Vec<StrictLine> = Vec::new();
    let mut malformed: Option<ParseError> = None;
    let mut pos = 0;
    for line in raw_text.split_inclusive('\n') {
        let body = line.trim_end_matches(['\n', '\r']);
        match scan_line(raw_text, pos, body) {
            LineScan::WellFormed(l) => well_formed.push(l),
            LineScan::Malformed(e) => {
                malformed.get_or_insert(e);
            }
            LineScan::NotADecision => {}
        }
        pos += line.len();
    }

    let decided = |skill| SkillDecision { skill, raw_text: raw_text.to_string(), extraction_mode: ExtractionMode::Strict };
    if let Some(first) = well_formed.first() {
        if let Some(other) = well_formed.iter().find(|l| (l.name, l.id) != (first.name, first.id)) {
            return Err(ParseError::new(
                ParseErrorKind::AmbiguousDecision,
                Some(first.span.start..other.span.end),
                "conflicting decision lines",
            ));
        }
        return validate(first.name, first.id, Some(first.span.clone()), known_markers).map(decided);
    }

    match tolerant(raw_text, known_markers) {
        Some(Ok(skill)) => Ok(SkillDecision {
            skill,
            raw_text: raw_text.to_string(),
            extraction_mode: ExtractionMode::Tolerant,
        }),
        Some(Err(e)) => Err(malformed.unwrap_or(e)),
        None => Err(malformed.unwrap_or_else(|| ParseError::new(ParseErrorKind::NoDecisionFound, None, "no decision in reply"))),
    }
}

/// Byte-level entry point; invalid UTF-8 is replaced before parsing.
pub fn parse_decision_bytes(raw: &[u8], known_markers: &BTreeSet<MarkerId>) -> Result<SkillDecision, ParseError> {
    parse_decision(&String::from_utf8_lossy(raw), known_markers)
}
