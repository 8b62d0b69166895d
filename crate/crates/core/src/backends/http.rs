use std::collections::BTreeMap;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::marking::{MarkerId, PointAnnotation, TripletAnnotations, LOCATION_MARKERS, OBJECT_MARKERS};
use crate::prompting::PromptPart;
use crate::world::{PixelCoord, RasterImage};

use super::{BackendError, ReasoningBackend, ReasoningRequest, RecognitionBackend, RecognitionRequest, SceneContext};

fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the API key. Unset means no auth header.
    pub api_key_env_var: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl HttpConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(BackendError::InvalidConfig(format!("timeout_s {} must be positive", self.timeout_s)));
        }
        if self.base_url.is_empty() || self.model_name.is_empty() {
            return Err(BackendError::InvalidConfig("base_url and model_name are required".into()));
        }
        Ok(())
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

fn retryable(e: &ureq::Error) -> bool {
    matches!(e, ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed)
}

fn image_part(img: &RasterImage) -> Result<Value, BackendError> {
    let png = img.to_png().map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(png);
    Ok(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}))
}

fn reply_text(body: &Value) -> Option<String> {
    let content = body.get("choices")?.get(0)?.get("message")?.get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(parts.iter().filter_map(|p| p.get("text")?.as_str()).collect::<Vec<_>>().join("")),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env_var).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend { config, agent, api_key })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// One chat call. Retries transport failures only, with exponential backoff.
    fn chat(&self, content: Vec<Value>) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.model_name,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        });
        let url = self.url();
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            let err = match req.send_json(&body) {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(text) => {
                        let v: Value = serde_json::from_str(&text)
                            .map_err(|e| BackendError::BackendUnavailable(format!("response is not JSON: {e}")))?;
                        let reply = reply_text(&v)
                            .ok_or_else(|| BackendError::BackendUnavailable("response has no message content".into()))?;
                        if reply.trim().is_empty() {
                            return Err(BackendError::EmptyReply);
                        }
                        return Ok(reply);
                    }
                    Err(e) => e,
                },
                Err(e) => e,
            };
            if !retryable(&err) || attempt >= self.config.max_retries {
                let tries = attempt + 1;
                return Err(BackendError::BackendUnavailable(format!("{err} (after {tries} attempt(s))")));
            }
            std::thread::sleep(Duration::from_millis(self.config.backoff_base_ms.saturating_mul(1 << attempt.min(16))));
            attempt += 1;
        }
    }
}

/// A point parsed from a model reply, before marker assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoint {
    pub x: f64,
    pub y: f64,
    pub label: String,
}

fn attr(tag: &str, name: &str) -> Option<f64> {
    let pat = format!("{name}=\"");
    let start = tag.find(&pat)? + pat.len();
    let end = start + tag[start..].find('"')?;
    tag[start..end].trim().parse().ok()
}

fn xml_point(line: &str) -> Option<RawPoint> {
    let open = line.find("<point")?;
    let rest = &line[open..];
    let close = rest.find('>')?;
    let tag = &rest[..close];
    let (x, y) = (attr(tag, " x")?, attr(tag, " y")?);
    let body = &rest[close + 1..];
    let label = body.find("</point>").map_or(body, |e| &body[..e]);
    Some(RawPoint { x, y, label: label.trim().to_string() })
}

fn paren_point(line: &str) -> Option<RawPoint> {
    let mut search = 0;
    while let Some(off) = line[search..].find('(') {
        let open = search + off;
        search = open + 1;
        let Some(len) = line[open..].find(')') else { break };
        let inner = &line[open + 1..open + len];
        let mut nums = inner.split(',').map(|s| s.trim().parse::<f64>());
        if let (Some(Ok(x)), Some(Ok(y)), None) = (nums.next(), nums.next(), nums.next()) {
            let label = line[open + len + 1..].trim().trim_end_matches(['.', ',', ';']).trim();
            return Some(RawPoint { x, y, label: label.to_string() });
        }
    }
    None
}

/// Extract points from a reply: per line, `<point x=".." y="..">label</point>`
/// or `(x, y) label`, first match on the line wins.
pub fn parse_points(reply: &str) -> Vec<RawPoint> {
    reply
        .lines()
        .filter_map(|l| xml_point(l).or_else(|| paren_point(l)))
        .filter(|p| p.x.is_finite() && p.y.is_finite())
        .collect()
}

/// Assign markers so that the first instance of the i-th label always gets
/// the same id; extra instances take ids after the label list.
struct MarkerAllocator {
    base: BTreeMap<String, (u32, bool)>,
    extra: BTreeMap<(String, usize), MarkerId>,
    next_object: u32,
    next_location: u32,
}

impl MarkerAllocator {
    fn new(objects: &[String], locations: &[String]) -> Self {
        let mut base = BTreeMap::new();
        let mut n_obj = 0;
        for l in objects {
            if !base.contains_key(l.trim()) {
                n_obj += 1;
                base.insert(l.trim().to_string(), (*OBJECT_MARKERS.start() + n_obj - 1, false));
            }
        }
        let mut n_loc = 0;
        for l in locations {
            if !base.contains_key(l.trim()) {
                n_loc += 1;
                base.insert(l.trim().to_string(), (*LOCATION_MARKERS.start() + n_loc - 1, true));
            }
        }
        MarkerAllocator {
            base,
            extra: BTreeMap::new(),
            next_object: *OBJECT_MARKERS.start() + n_obj,
            next_location: *LOCATION_MARKERS.start() + n_loc,
        }
    }

    fn canonical_label(&self, label: &str) -> Option<String> {
        let l = label.trim();
        self.base.keys().find(|k| k.eq_ignore_ascii_case(l)).cloned()
    }

    fn id(&mut self, label: &str, instance: usize) -> Option<MarkerId> {
        let &(base, is_location) = self.base.get(label)?;
        if instance == 0 {
            return Some(MarkerId(base));
        }
        if let Some(id) = self.extra.get(&(label.to_string(), instance)) {
            return Some(*id);
        }
        let (next, range) = if is_location {
            (&mut self.next_location, LOCATION_MARKERS)
        } else {
            (&mut self.next_object, OBJECT_MARKERS)
        };
        if !range.contains(next) {
            return None;
        }
        let id = MarkerId(*next);
        *next += 1;
        self.extra.insert((label.to_string(), instance), id);
        Some(id)
    }

    fn annotate(&mut self, points: &[RawPoint], image: &RasterImage) -> Vec<PointAnnotation> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut out = Vec::new();
        for p in points {
            let Some(label) = self.canonical_label(&p.label) else { continue };
            let pixel = PixelCoord { x: p.x.round() as i64, y: p.y.round() as i64 };
            if !image.in_bounds(pixel.x, pixel.y) {
                continue;
            }
            let k = seen.entry(label.clone()).or_insert(0);
            let instance = *k;
            *k += 1;
            if let Some(marker_id) = self.id(&label, instance) {
                out.push(PointAnnotation { marker_id, pixel, label });
            }
        }
        out.sort_by_key(|a| a.marker_id);
        out
    }
}

impl RecognitionBackend for HttpBackend {
    fn recognize(&self, req: &RecognitionRequest, _ctx: &SceneContext<'_>) -> Result<TripletAnnotations, BackendError> {
        req.validate()?;
        let mut alloc = MarkerAllocator::new(&req.object_labels, &req.location_labels);
        let mut sets = Vec::with_capacity(3);
        for img in [&req.triplet.object_img, &req.triplet.current_img, &req.triplet.goal_img] {
            let reply = self.chat(vec![json!({"type": "text", "text": req.recognition_prompt}), image_part(img)?])?;
            sets.push(alloc.annotate(&parse_points(&reply), img));
        }
        let goal = sets.pop().expect("three images");
        let current = sets.pop().expect("three images");
        let object = sets.pop().expect("three images");
        if current.is_empty() || goal.is_empty() {
            return Err(BackendError::MalformedPoints("no usable points for the current or goal image".into()));
        }
        Ok(TripletAnnotations { object, current, goal })
    }
}

impl ReasoningBackend for HttpBackend {
    fn decide(&self, req: &ReasoningRequest, _ctx: &SceneContext<'_>) -> Result<String, BackendError> {
        req.validate()?;
        let mut content = Vec::new();
        for part in &req.prompt.parts {
            content.push(match part {
                PromptPart::Text(t) => json!({"type": "text", "text": t}),
                PromptPart::Image { image, .. } => image_part(image)?,
            });
        }
        self.chat(content)
    }
}
