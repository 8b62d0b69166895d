//! Recognition and reasoning prompt assembly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::sha256_hex;
use crate::marking::{MarkedTriplet, MarkerId, PointAnnotation};
use crate::parser::{grammar_text, Skill};
use crate::world::RasterImage;

pub const DEFAULT_TEMPLATE: &str = include_str!("default_template.txt");
pub const HISTORY_DEPTH: usize = 20;

const SECTIONS: [&str; 5] = ["task_context", "state_description", "skill_catalog", "decision_logic", "output_format"];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("label set is empty")]
    EmptyLabelSet,
    #[error("the {0} image carries no markers")]
    MissingAnnotations(ImageRole),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Object,
    Current,
    Goal,
}

impl std::fmt::Display for ImageRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImageRole::Object => "object",
            ImageRole::Current => "current",
            ImageRole::Goal => "goal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_context: String,
    pub state_description_template: String,
    pub skill_catalog_text: String,
    pub decision_logic_text: String,
    pub output_format_text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }
}

impl PromptTemplate {
    /// Parse a template file: `[section]` header lines followed by text.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: BTreeMap<&str, String> = BTreeMap::new();
        let mut current: Option<&str> = None;
        for line in text.lines() {
            let t = line.trim();
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                let Some(&known) = SECTIONS.iter().find(|s| **s == name) else {
                    return Err(PromptError::InvalidTemplate(format!("unknown section [{name}]")));
                };
                if sections.contains_key(known) {
                    return Err(PromptError::InvalidTemplate(format!("section [{name}] repeated")));
                }
                sections.insert(known, String::new());
                current = Some(known);
                continue;
            }
            match current {
                Some(name) => {
                    let body = sections.get_mut(name).expect("section inserted");
                    body.push_str(line);
                    body.push('\n');
                }
                None if t.is_empty() || t.starts_with('#') => {}
                None => return Err(PromptError::InvalidTemplate("text before the first section".into())),
            }
        }
        let mut take = |name: &str| {
            sections
                .remove(name)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| PromptError::InvalidTemplate(format!("missing section [{name}]")))
        };
        let template = PromptTemplate {
            task_context: take("task_context")?,
            state_description_template: take("state_description")?,
            skill_catalog_text: take("skill_catalog")?,
            decision_logic_text: take("decision_logic")?,
            output_format_text: take("output_format")?,
        };
        template.validate()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, body) in SECTIONS.iter().zip(self.parts()) {
            if body.trim().is_empty() {
                return Err(PromptError::InvalidTemplate(format!("section [{name}] is empty")));
            }
        }
        if !self.output_format().contains(grammar_text().trim_end()) {
            return Err(PromptError::InvalidTemplate("output format must include {grammar}".into()));
        }
        Ok(())
    }

    fn parts(&self) -> [&str; 5] {
        [
            &self.task_context,
            &self.state_description_template,
            &self.skill_catalog_text,
            &self.decision_logic_text,
            &self.output_format_text,
        ]
    }

    /// Output-format section with the parser grammar substituted in.
    pub fn output_format(&self) -> String {
        self.output_format_text.replace("{grammar}", grammar_text().trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptPart {
    Text(String),
    Image { role: ImageRole, image: RasterImage },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiModalPrompt {
    pub parts: Vec<PromptPart>,
}

impl MultiModalPrompt {
    /// Text rendering with each image replaced by its role and content hash.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                PromptPart::Text(t) => out.push_str(t),
                PromptPart::Image { role, image } => {
                    out.push_str(&format!("[image:{role} sha256={}]", image.content_hash()))
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.serialize().as_bytes())
    }

    pub fn images(&self) -> impl Iterator<Item = (ImageRole, &RasterImage)> {
        self.parts.iter().filter_map(|p| match p {
            PromptPart::Image { role, image } => Some((*role, image)),
            PromptPart::Text(_) => None,
        })
    }
}

/// Robot-side facts the reasoning prompt reports alongside the images.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReasoningContext<'a> {
    pub history: &'a [Skill],
    pub holding: bool,
}

fn dedup_labels(labels: &[String]) -> Vec<&str> {
    let mut seen = Vec::new();
    for l in labels {
        let l = l.trim();
        if !l.is_empty() && !seen.contains(&l) {
            seen.push(l);
        }
    }
    seen
}

/// Stage-one instruction asking for one point per visible labelled object.
pub fn build_recognition_prompt(object_labels: &[String]) -> Result<String, PromptError> {
    let labels = dedup_labels(object_labels);
    if labels.is_empty() {
        return Err(PromptError::EmptyLabelSet);
    }
    let mut out = String::from(
        "You are shown one image of a robot work table. Pixel (0, 0) is the top-left corner.\n\
         Point to the center of every visible instance of the objects listed below.\n\
         Give one line per instance in the form: Point: (x, y) <label>\n\
         Skip objects that are not visible. Use only these labels:\n",
    );
    for l in labels {
        out.push_str("- ");
        out.push_str(l);
        out.push('\n');
    }
    Ok(out)
}

pub fn history_entry(step: usize, skill: &Skill) -> String {
    let what = match skill {
        Skill::Pick { object_marker } => format!("pick object {object_marker}"),
        Skill::Place { target_marker } => format!("place at location {target_marker}"),
        Skill::Insert { target_marker } => format!("insert at location {target_marker}"),
        Skill::Done => "done".to_string(),
        Skill::Init => "init".to_string(),
    };
    format!("step {step}: {what}")
}

fn render_history(history: &[Skill]) -> String {
    if history.is_empty() {
        return "none".to_string();
    }
    let skip = history.len().saturating_sub(HISTORY_DEPTH);
    history
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(i, s)| history_entry(i + 1, s))
        .collect::<Vec<_>>()
        .join("\n")
}

fn marker_list<'a>(anns: impl Iterator<Item = &'a PointAnnotation>, keep: fn(MarkerId) -> bool) -> String {
    let mut by_id: BTreeMap<MarkerId, &str> = BTreeMap::new();
    for a in anns.filter(|a| keep(a.marker_id)) {
        by_id.entry(a.marker_id).or_insert(&a.label);
    }
    if by_id.is_empty() {
        return "none".to_string();
    }
    by_id.iter().map(|(id, label)| format!("{id} ({label})")).collect::<Vec<_>>().join(", ")
}

/// Assemble the stage-two prompt: five template sections around the three
/// marked images plus the decision history.
pub fn build_reasoning_prompt(
    template: &PromptTemplate,
    marked: &MarkedTriplet,
    ctx: ReasoningContext<'_>,
) -> Result<MultiModalPrompt, PromptError> {
    template.validate()?;
    let anns = &marked.annotations;
    if anns.current.is_empty() {
        return Err(PromptError::MissingAnnotations(ImageRole::Current));
    }
    if anns.goal.is_empty() {
        return Err(PromptError::MissingAnnotations(ImageRole::Goal));
    }
    let state = template
        .state_description_template
        .replace("{object_markers}", &marker_list(anns.iter(), MarkerId::is_object))
        .replace("{location_markers}", &marker_list(anns.iter(), MarkerId::is_location))
        .replace("{gripper_state}", if ctx.holding { "holding an object" } else { "empty" });

    let text = |s: String| PromptPart::Text(s);
    let images = &marked.images;
    Ok(MultiModalPrompt {
        parts: vec![
            text(format!("## Task\n{}", template.task_context)),
            text("Task object image:".into()),
            PromptPart::Image { role: ImageRole::Object, image: images.object_img.clone() },
            text("Current state image:".into()),
            PromptPart::Image { role: ImageRole::Current, image: images.current_img.clone() },
            text("Goal state image:".into()),
            PromptPart::Image { role: ImageRole::Goal, image: images.goal_img.clone() },
            text(format!("## State\n{state}")),
            text(format!("## History\n{}", render_history(ctx.history))),
            text(format!("## Skills\n{}", template.skill_catalog_text)),
            text(format!("## Decision logic\n{}", template.decision_logic_text)),
            text(format!("## Output format\n{}", template.output_format())),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marking::{ImageTriplet, TripletAnnotations};
    use crate::world::PixelCoord;

    fn marked(current: Vec<PointAnnotation>, goal: Vec<PointAnnotation>) -> MarkedTriplet {
        let img = RasterImage::filled(8, 8, [1, 1, 1]);
        MarkedTriplet {
            images: ImageTriplet { object_img: img.clone(), current_img: img.clone(), goal_img: img },
            annotations: TripletAnnotations { object: vec![], current, goal },
        }
    }

    fn ann(id: u32, label: &str) -> PointAnnotation {
        PointAnnotation { marker_id: MarkerId(id), pixel: PixelCoord { x: 1, y: 1 }, label: label.into() }
    }

    fn history_section(p: &MultiModalPrompt) -> String {
        p.parts
            .iter()
            .find_map(|part| match part {
                PromptPart::Text(t) if t.starts_with("## History") => Some(t.clone()),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn default_template_is_valid() {
        PromptTemplate::default().validate().unwrap();
        assert!(PromptTemplate::default().output_format().contains("DECISION: pick(<id>)"));
    }

    #[test]
    fn template_without_grammar_is_rejected() {
        let text = DEFAULT_TEMPLATE.replace("{grammar}", "just answer");
        assert!(matches!(PromptTemplate::parse(&text), Err(PromptError::InvalidTemplate(_))));
    }

    #[test]
    fn template_missing_section_is_rejected() {
        let text = DEFAULT_TEMPLATE.replace("[decision_logic]", "");
        assert!(PromptTemplate::parse(&text).is_err());
    }

    #[test]
    fn recognition_prompt_lists_each_label_once() {
        let p = build_recognition_prompt(&["red gear".into()]).unwrap();
        assert_eq!(p.matches("red gear").count(), 1);
        let p = build_recognition_prompt(&["b".into(), "a".into(), "b".into()]).unwrap();
        assert!(p.ends_with("- b\n- a\n"));
        assert!(matches!(build_recognition_prompt(&[]), Err(PromptError::EmptyLabelSet)));
    }

    #[test]
    fn empty_history_reads_none() {
        let m = marked(vec![ann(1, "red gear")], vec![ann(101, "shaft A")]);
        let p = build_reasoning_prompt(&PromptTemplate::default(), &m, ReasoningContext::default()).unwrap();
        assert_eq!(history_section(&p), "## History\nnone");
    }

    #[test]
    fn one_history_entry() {
        let m = marked(vec![ann(3, "red gear")], vec![ann(101, "shaft A")]);
        let h = [Skill::Pick { object_marker: MarkerId(3) }];
        let p = build_reasoning_prompt(&PromptTemplate::default(), &m, ReasoningContext { history: &h, holding: true }).unwrap();
        assert_eq!(history_section(&p), "## History\nstep 1: pick object 3");
        assert!(p.serialize().contains("Object markers (things that can be grasped): 3 (red gear)"));
        assert!(p.serialize().contains("Robot gripper: holding an object"));
    }

    #[test]
    fn history_is_capped() {
        let m = marked(vec![ann(1, "g")], vec![ann(101, "s")]);
        let h = vec![Skill::Init; 25];
        let p = build_reasoning_prompt(&PromptTemplate::default(), &m, ReasoningContext { history: &h, holding: false }).unwrap();
        let sec = history_section(&p);
        assert_eq!(sec.lines().count(), 1 + HISTORY_DEPTH);
        assert!(sec.contains("step 6: init") && !sec.contains("step 5:"));
    }

    #[test]
    fn image_parts_in_order() {
        let m = marked(vec![ann(1, "g")], vec![ann(101, "s")]);
        let p = build_reasoning_prompt(&PromptTemplate::default(), &m, ReasoningContext::default()).unwrap();
        let roles: Vec<ImageRole> = p.images().map(|(r, _)| r).collect();
        assert_eq!(roles, [ImageRole::Object, ImageRole::Current, ImageRole::Goal]);
    }

    #[test]
    fn missing_annotations() {
        let m = marked(vec![], vec![ann(101, "s")]);
        let err = build_reasoning_prompt(&PromptTemplate::default(), &m, ReasoningContext::default()).unwrap_err();
        assert!(matches!(err, PromptError::MissingAnnotations(ImageRole::Current)));
    }
}
