//! Latent scenes and their rendering to clip features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;
use crate::data::VideoFeatures;
use crate::encoders::split_clips;
use crate::error::Result;
use crate::tensor::Tensor;

macro_rules! attribute {
    ($name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self { $($name::$variant => $word),+ }
            }

            pub fn from_word(word: &str) -> Option<Self> {
                match word { $($word => Some($name::$variant),)+ _ => None }
            }
        }
    };
}

attribute!(Shape { Cube => "cube", Sphere => "sphere", Cylinder => "cylinder" });
attribute!(Color {
    Red => "red", Green => "green", Blue => "blue", Yellow => "yellow",
    Purple => "purple", Cyan => "cyan", Gray => "gray", Brown => "brown",
});
attribute!(Size { Small => "small", Large => "large" });
attribute!(Action { Still => "still", Rotate => "rotate", Move => "move" });
attribute!(Direction { Up => "up", Down => "down", Left => "left", Right => "right" });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub size: Size,
    pub action: Action,
    pub direction: Direction,
    /// Clips `[start, end)` in which the object is on screen (and moving, unless still).
    pub active: (usize, usize),
}

impl SceneObject {
    pub fn active_in(&self, clip: usize) -> bool {
        clip >= self.active.0 && clip < self.active.1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub video_id: String,
    pub n_clips: usize,
    pub objects: Vec<SceneObject>,
}

/// Draws a scene. Still objects stay on screen for the whole video; moving
/// and rotating ones occupy a random clip interval.
pub fn generate_scene(seed: u64, config: &DataConfig, video_id: impl Into<String>) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_clips;
    let count = rng.gen_range(config.min_objects..=config.max_objects);
    let objects = (0..count)
        .map(|_| {
            let action = *Action::ALL.choose(&mut rng).unwrap();
            let active = if action == Action::Still {
                (0, n)
            } else {
                let start = rng.gen_range(0..n);
                (start, rng.gen_range(start + 1..=n))
            };
            SceneObject {
                shape: *Shape::ALL.choose(&mut rng).unwrap(),
                color: *Color::ALL.choose(&mut rng).unwrap(),
                size: *Size::ALL.choose(&mut rng).unwrap(),
                action,
                direction: *Direction::ALL.choose(&mut rng).unwrap(),
                active,
            }
        })
        .collect();
    SyntheticScene { video_id: video_id.into(), n_clips: n, objects }
}

/// Fixed per-dataset attribute vectors that scenes are rendered from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototypes {
    pub shape: Vec<Vec<f64>>,
    pub color: Vec<Vec<f64>>,
    pub size: Vec<Vec<f64>>,
    pub action: Vec<Vec<f64>>,
    pub direction: Vec<Vec<f64>>,
}

/// Per-entry standard deviation of prototype vectors.
pub const PROTOTYPE_SCALE: f64 = 0.5;

impl Prototypes {
    pub fn generate(seed: u64, app_dim: usize, motion_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, PROTOTYPE_SCALE).expect("valid normal");
        let mut draw = |count: usize, dim: usize| -> Vec<Vec<f64>> {
            (0..count).map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect()).collect()
        };
        Self {
            shape: draw(Shape::ALL.len(), app_dim),
            color: draw(Color::ALL.len(), app_dim),
            size: draw(Size::ALL.len(), app_dim),
            action: draw(Action::ALL.len(), motion_dim),
            direction: draw(Direction::ALL.len(), motion_dim),
        }
    }

    pub fn app_dim(&self) -> usize {
        self.shape.first().map_or(0, Vec::len)
    }

    pub fn motion_dim(&self) -> usize {
        self.action.first().map_or(0, Vec::len)
    }

    /// Appearance contribution of one object.
    pub fn appearance_of(&self, o: &SceneObject) -> Vec<f64> {
        let mut v = self.shape[o.shape as usize].clone();
        add(&mut v, &self.color[o.color as usize]);
        add(&mut v, &self.size[o.size as usize]);
        v
    }

    /// Motion contribution of one object: the still prototype alone, or
    /// action plus direction.
    pub fn motion_of(&self, o: &SceneObject) -> Vec<f64> {
        let mut v = self.action[o.action as usize].clone();
        if o.action != Action::Still {
            add(&mut v, &self.direction[o.direction as usize]);
        }
        v
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Renders `L` appearance frames and `N` motion vectors, then splits the
/// frames into clips. Noise is seeded by `noise_seed`.
pub fn render_features(scene: &SyntheticScene, prototypes: &Prototypes, config: &DataConfig, noise_seed: u64) -> Result<VideoFeatures> {
    let n = scene.n_clips;
    let total = config.frames();
    let per_clip = total / n;
    let (app_dim, motion_dim) = (prototypes.app_dim(), prototypes.motion_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, config.noise.max(0.0)).expect("valid normal");
    let mut sample_noise = |v: &mut [f64]| {
        if config.noise > 0.0 {
            for x in v {
                *x += noise.sample(&mut rng);
            }
        }
    };

    let mut frames = Tensor::zeros(total, app_dim);
    for t in 0..total {
        let clip = (t / per_clip).min(n - 1);
        let row = frames.row_mut(t);
        for o in scene.objects.iter().filter(|o| o.active_in(clip)) {
            add(row, &prototypes.appearance_of(o));
        }
        sample_noise(row);
    }
    let clips = split_clips(&frames, n)?;

    let mut motion = Vec::with_capacity(n * motion_dim);
    for clip in 0..n {
        let mut v = vec![0.0; motion_dim];
        for o in scene.objects.iter().filter(|o| o.active_in(clip)) {
            add(&mut v, &prototypes.motion_of(o));
        }
        sample_noise(&mut v);
        motion.extend(v.into_iter().map(|x| x as f32));
    }

    let appearance = clips.iter().flat_map(|c| c.data().iter().map(|&x| x as f32)).collect();
    Ok(VideoFeatures {
        video_id: scene.video_id.clone(),
        n_clips: n,
        frames_per_clip: per_clip,
        app_dim,
        motion_dim,
        appearance,
        motion,
    })
}
