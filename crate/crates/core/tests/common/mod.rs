//! Test helpers shared by the integration suites.
//!
//! The answer oracle below reads questions word by word and evaluates them
//! against the JSON form of a scene. It shares no code with the generator.

#![allow(dead_code)]

use serde_json::Value;

use dualvgr::data::SyntheticScene;

const SIZES: [&str; 2] = ["small", "large"];
const COLORS: [&str; 8] = ["red", "green", "blue", "yellow", "purple", "cyan", "gray", "brown"];
const NOUNS: [&str; 4] = ["cube", "sphere", "cylinder", "thing"];

#[derive(Debug, Default)]
struct Phrase {
    size: Option<String>,
    color: Option<String>,
    shape: Option<String>,
}

impl Phrase {
    fn matches(&self, o: &Value) -> bool {
        let field = |k: &str| o[k].as_str().unwrap_or_default().to_string();
        self.size.as_ref().is_none_or(|s| *s == field("size"))
            && self.color.as_ref().is_none_or(|c| *c == field("color"))
            && self.shape.as_ref().is_none_or(|s| *s == field("shape"))
    }
}

/// Reads `[size] [color] noun[s]` starting at `words[*i]`.
fn phrase(words: &[&str], i: &mut usize) -> Option<Phrase> {
    let mut p = Phrase::default();
    if SIZES.contains(&words.get(*i)?) {
        p.size = Some(words[*i].to_string());
        *i += 1;
    }
    if COLORS.contains(&words.get(*i)?) {
        p.color = Some(words[*i].to_string());
        *i += 1;
    }
    let noun = words.get(*i)?;
    let stem = noun.strip_suffix('s').filter(|s| NOUNS.contains(s)).unwrap_or(noun);
    if !NOUNS.contains(&stem) {
        return None;
    }
    if stem != "thing" {
        p.shape = Some(stem.to_string());
    }
    *i += 1;
    Some(p)
}

fn expect(words: &[&str], i: &mut usize, lit: &str) -> Option<()> {
    for w in lit.split(' ') {
        if words.get(*i) != Some(&w) {
            return None;
        }
        *i += 1;
    }
    Some(())
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

/// Evaluates a templated question against a scene. `None` means the
/// question could not be parsed or has no well-defined answer.
pub fn answer(scene: &SyntheticScene, tokens: &[String]) -> Option<String> {
    let json = serde_json::to_value(scene).ok()?;
    let objects: Vec<Value> = json["objects"].as_array()?.clone();
    let all: Vec<&str> = tokens.iter().map(String::as_str).collect();
    let start = all.iter().position(|w| ["how", "is", "what", "which", "does", "are"].contains(w))?;
    let w = &all[start..];
    let count = |p: &Phrase| objects.iter().filter(|o| p.matches(o)).count();
    let unique = |p: &Phrase| -> Option<&Value> {
        let m: Vec<&Value> = objects.iter().filter(|o| p.matches(o)).collect();
        (m.len() == 1).then(|| m[0])
    };
    let mut i;
    let done = |i: usize| i == w.len();
    match (w[0], w.get(1).copied()) {
        ("how", Some("many")) => {
            i = 2;
            let p = phrase(w, &mut i)?;
            expect(w, &mut i, "are there")?;
            done(i).then(|| count(&p).to_string())
        }
        ("is", Some("there")) => {
            i = 2;
            expect(w, &mut i, "a")?;
            let p = phrase(w, &mut i)?;
            done(i).then(|| yes_no(count(&p) > 0))
        }
        ("what", Some(attr @ ("color" | "shape" | "size"))) => {
            i = 2;
            expect(w, &mut i, "is the")?;
            let p = phrase(w, &mut i)?;
            let o = unique(&p)?;
            done(i).then(|| o[attr].as_str().unwrap().to_string())
        }
        ("what", Some("is")) => {
            i = 2;
            expect(w, &mut i, "the")?;
            let p = phrase(w, &mut i)?;
            expect(w, &mut i, "doing")?;
            let o = unique(&p)?;
            done(i).then(|| o["action"].as_str().unwrap().to_string())
        }
        ("which", Some("direction")) => {
            i = 2;
            expect(w, &mut i, "does the")?;
            let p = phrase(w, &mut i)?;
            expect(w, &mut i, "go")?;
            let o = unique(&p)?;
            if o["action"] == "still" {
                return None;
            }
            done(i).then(|| o["direction"].as_str().unwrap().to_string())
        }
        ("does", Some("the")) => {
            i = 2;
            let a = phrase(w, &mut i)?;
            expect(w, &mut i, "have the same")?;
            let attr = *w.get(i)?;
            i += 1;
            expect(w, &mut i, "as the")?;
            let b = phrase(w, &mut i)?;
            let (oa, ob) = (unique(&a)?, unique(&b)?);
            if std::ptr::eq(oa, ob) {
                return None;
            }
            done(i).then(|| yes_no(oa[attr] == ob[attr]))
        }
        ("are", Some("there")) => {
            i = 2;
            let cmp = match *w.get(i)? {
                "more" => 0,
                "fewer" => 1,
                "as" => {
                    expect(w, &mut i, "as many")?;
                    i -= 1;
                    2
                }
                _ => return None,
            };
            i += 1;
            let a = phrase(w, &mut i)?;
            expect(w, &mut i, if cmp == 2 { "as" } else { "than" })?;
            let b = phrase(w, &mut i)?;
            let (ca, cb) = (count(&a), count(&b));
            done(i).then(|| yes_no([ca > cb, ca < cb, ca == cb][cmp]))
        }
        _ => None,
    }
}

/// Small data config for fast tests.
pub fn tiny_data() -> dualvgr::DataConfig {
    dualvgr::DataConfig {
        n_train: 24,
        n_val: 8,
        n_test: 8,
        qa_per_video: 4,
        n_clips: 3,
        frames_per_clip: 2,
        app_dim: 5,
        motion_dim: 4,
        max_objects: 4,
        ..dualvgr::DataConfig::default()
    }
}

/// Model config matching [`tiny_data`].
pub fn tiny_model() -> dualvgr::ModelConfig {
    dualvgr::ModelConfig {
        d: 8,
        d1: 2,
        heads: 4,
        steps: 2,
        n_clips: 3,
        word_dim: 6,
        app_dim: 5,
        motion_dim: 4,
        mfb_factor: 2,
        batch_size: 4,
        epochs: 2,
        learning_rate: 1e-3,
        seed: 7,
        ..dualvgr::ModelConfig::default()
    }
}
