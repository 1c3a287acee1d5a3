//! Templated questions with answers computed from the latent scene.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::QuestionStyle;
use crate::data::scene::{Action, Color, SceneObject, Shape, Size, SyntheticScene};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Count,
    Exist,
    QueryColor,
    QueryShape,
    QuerySize,
    QueryAction,
    QueryDirection,
    CompareAttr,
    CompareInt,
}

impl QuestionType {
    pub const ALL: [QuestionType; 9] = [
        QuestionType::Count,
        QuestionType::Exist,
        QuestionType::QueryColor,
        QuestionType::QueryShape,
        QuestionType::QuerySize,
        QuestionType::QueryAction,
        QuestionType::QueryDirection,
        QuestionType::CompareAttr,
        QuestionType::CompareInt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuestionType::Count => "count",
            QuestionType::Exist => "exist",
            QuestionType::QueryColor => "query_color",
            QuestionType::QueryShape => "query_shape",
            QuestionType::QuerySize => "query_size",
            QuestionType::QueryAction => "query_action",
            QuestionType::QueryDirection => "query_direction",
            QuestionType::CompareAttr => "compare_attr",
            QuestionType::CompareInt => "compare_int",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown question type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaInstance {
    pub qid: String,
    pub video_id: String,
    pub tokens: Vec<String>,
    pub answer: String,
    pub qtype: QuestionType,
}

impl QaInstance {
    pub fn question(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Conjunction of optional static attributes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Filter {
    pub size: Option<Size>,
    pub color: Option<Color>,
    pub shape: Option<Shape>,
}

impl Filter {
    pub fn matches(&self, o: &SceneObject) -> bool {
        self.size.is_none_or(|s| s == o.size)
            && self.color.is_none_or(|c| c == o.color)
            && self.shape.is_none_or(|s| s == o.shape)
    }

    pub fn count(&self, scene: &SyntheticScene) -> usize {
        scene.objects.iter().filter(|o| self.matches(o)).count()
    }

    fn words(&self, plural: bool) -> Vec<String> {
        let mut w = Vec::new();
        if let Some(s) = self.size {
            w.push(s.word().to_string());
        }
        if let Some(c) = self.color {
            w.push(c.word().to_string());
        }
        let noun = self.shape.map_or("thing", Shape::word);
        w.push(if plural { format!("{noun}s") } else { noun.to_string() });
        w
    }

    fn of(o: &SceneObject, use_size: bool, use_color: bool, use_shape: bool) -> Self {
        Self {
            size: use_size.then_some(o.size),
            color: use_color.then_some(o.color),
            shape: use_shape.then_some(o.shape),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attr {
    Color,
    Shape,
    Size,
}

impl Attr {
    fn word(self) -> &'static str {
        match self {
            Attr::Color => "color",
            Attr::Shape => "shape",
            Attr::Size => "size",
        }
    }
}

const LONG_PREFIXES: [&str; 3] = [
    "after watching the whole video from the first clip to the last clip",
    "considering every clip of the video in order from beginning to end",
    "taking into account all of the clips shown in this video sequence",
];

/// Smallest attribute subset (never using `exclude`) that singles out
/// `scene.objects[target]`.
fn unique_filter<R: Rng>(scene: &SyntheticScene, target: usize, exclude: Option<Attr>, rng: &mut R) -> Option<Filter> {
    let o = &scene.objects[target];
    let mut subsets: Vec<(bool, bool, bool)> = Vec::new();
    for mask in 0u8..8 {
        let (size, color, shape) = (mask & 1 != 0, mask & 2 != 0, mask & 4 != 0);
        if (exclude == Some(Attr::Size) && size) || (exclude == Some(Attr::Color) && color) || (exclude == Some(Attr::Shape) && shape) {
            continue;
        }
        subsets.push((size, color, shape));
    }
    subsets.shuffle(rng);
    subsets.sort_by_key(|&(a, b, c)| a as u8 + b as u8 + c as u8);
    subsets
        .into_iter()
        .map(|(a, b, c)| Filter::of(o, a, b, c))
        .find(|f| f.count(scene) == 1)
}

/// One or two attributes, half the time taken from an object in the scene.
fn random_filter<R: Rng>(scene: &SyntheticScene, rng: &mut R) -> Filter {
    let two = rng.gen_bool(0.3);
    let first = rng.gen_range(0..3);
    let second = if two { Some((first + rng.gen_range(1..3)) % 3) } else { None };
    let picks = |k: usize| first == k || second == Some(k);
    if rng.gen_bool(0.5) && !scene.objects.is_empty() {
        let o = scene.objects.choose(rng).unwrap();
        Filter::of(o, picks(0), picks(1), picks(2))
    } else {
        Filter {
            size: picks(0).then(|| *Size::ALL.choose(rng).unwrap()),
            color: picks(1).then(|| *Color::ALL.choose(rng).unwrap()),
            shape: picks(2).then(|| *Shape::ALL.choose(rng).unwrap()),
        }
    }
}

fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

/// Builds one question of `qtype`, or `None` if the scene cannot support it.
fn instantiate<R: Rng>(scene: &SyntheticScene, qtype: QuestionType, rng: &mut R) -> Option<(Vec<String>, String)> {
    let n = scene.objects.len();
    let query = |attr: Option<Attr>, head: &str, tail: &str, rng: &mut R, pool: &[usize]| -> Option<(Vec<String>, usize)> {
        let &target = pool.choose(rng)?;
        let f = unique_filter(scene, target, attr, rng)?;
        let mut t = words(head);
        t.extend(f.words(false));
        t.extend(words(tail));
        Some((t, target))
    };
    let all: Vec<usize> = (0..n).collect();
    match qtype {
        QuestionType::Count => {
            let f = random_filter(scene, rng);
            let mut t = words("how many");
            t.extend(f.words(true));
            t.extend(words("are there"));
            Some((t, f.count(scene).to_string()))
        }
        QuestionType::Exist => {
            let f = random_filter(scene, rng);
            let mut t = words("is there a");
            t.extend(f.words(false));
            Some((t, yes_no(f.count(scene) > 0)))
        }
        QuestionType::QueryColor => {
            let (t, i) = query(Some(Attr::Color), "what color is the", "", rng, &all)?;
            Some((t, scene.objects[i].color.word().into()))
        }
        QuestionType::QueryShape => {
            let (t, i) = query(Some(Attr::Shape), "what shape is the", "", rng, &all)?;
            Some((t, scene.objects[i].shape.word().into()))
        }
        QuestionType::QuerySize => {
            let (t, i) = query(Some(Attr::Size), "what size is the", "", rng, &all)?;
            Some((t, scene.objects[i].size.word().into()))
        }
        QuestionType::QueryAction => {
            let (t, i) = query(None, "what is the", "doing", rng, &all)?;
            Some((t, scene.objects[i].action.word().into()))
        }
        QuestionType::QueryDirection => {
            let moving: Vec<usize> = all.iter().copied().filter(|&i| scene.objects[i].action != Action::Still).collect();
            let (t, i) = query(None, "which direction does the", "go", rng, &moving)?;
            Some((t, scene.objects[i].direction.word().into()))
        }
        QuestionType::CompareAttr => {
            if n < 2 {
                return None;
            }
            let attr = *[Attr::Color, Attr::Shape, Attr::Size].choose(rng).unwrap();
            let mut pair: Vec<usize> = all.clone();
            pair.shuffle(rng);
            let (a, b) = (pair[0], pair[1]);
            let fa = unique_filter(scene, a, Some(attr), rng)?;
            let fb = unique_filter(scene, b, Some(attr), rng)?;
            let mut t = words("does the");
            t.extend(fa.words(false));
            t.extend(words(&format!("have the same {} as the", attr.word())));
            t.extend(fb.words(false));
            let (oa, ob) = (&scene.objects[a], &scene.objects[b]);
            let same = match attr {
                Attr::Color => oa.color == ob.color,
                Attr::Shape => oa.shape == ob.shape,
                Attr::Size => oa.size == ob.size,
            };
            Some((t, yes_no(same)))
        }
        QuestionType::CompareInt => {
            let fa = random_filter(scene, rng);
            let fb = random_filter(scene, rng);
            if fa == fb {
                return None;
            }
            let (ca, cb) = (fa.count(scene), fb.count(scene));
            let (mut t, answer) = match rng.gen_range(0..3) {
                0 => (words("are there more"), ca > cb),
                1 => (words("are there fewer"), ca < cb),
                _ => (words("are there as many"), ca == cb),
            };
            let equal_form = t.last().map(String::as_str) == Some("many");
            t.extend(fa.words(true));
            t.push(if equal_form { "as" } else { "than" }.to_string());
            t.extend(fb.words(true));
            Some((t, yes_no(answer)))
        }
    }
}

/// Generates `count` questions about `scene`. Question types are drawn
/// uniformly; a type the scene cannot support is skipped and redrawn.
/// `qid` and `video_id` are filled by the caller's naming scheme.
pub fn generate_qa(scene: &SyntheticScene, seed: u64, style: QuestionStyle, count: usize, qid_prefix: &str) -> Vec<QaInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 50 {
        attempts += 1;
        let qtype = *QuestionType::ALL.choose(&mut rng).unwrap();
        let Some((mut tokens, answer)) = instantiate(scene, qtype, &mut rng) else { continue };
        let long = match style {
            QuestionStyle::Short => false,
            QuestionStyle::Long => true,
            QuestionStyle::Mixed => rng.gen_bool(0.5),
        };
        if long {
            let mut t = words(LONG_PREFIXES.choose(&mut rng).unwrap());
            t.append(&mut tokens);
            tokens = t;
        }
        out.push(QaInstance {
            qid: format!("{qid_prefix}-{}", out.len()),
            video_id: scene.video_id.clone(),
            tokens,
            answer,
            qtype,
        });
    }
    out
}
