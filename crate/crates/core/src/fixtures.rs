//! The bundled `demo` fixture: a small synthetic news world, a 20-sample
//! evaluation set over it, trend queries for the dataset engine, and the
//! port factory that turns a configuration into live handles.
//!
//! The evaluation samples fall into four groups of increasing difficulty for
//! the wrapped segmenter:
//!
//! * 4 visual references the segmenter resolves from the raw query;
//! * 6 entities the segmenter knows by name once retrieval supplies it;
//! * 5 novel entities it can only find through the category named in the
//!   background clause;
//! * 5 novel entities whose category is shared with a larger distractor, so
//!   only prototype-based correction recovers them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeZone, Utc};

use crate::backends::mock::{make_mock_suite, paint_scene, FixtureEntity, FixtureWorld, LlmScript};
use crate::backends::{Ports, ResponseCache};
use crate::config::Config;
use crate::dataset::{EntityType, NestSample, TrendQuery};
use crate::error::{Error, Result};
use crate::primitives::{BinaryMask, BoundingBox, RasterImage, WebDocument};

/// Name of the bundled fixture world.
pub const DEMO: &str = "demo";

pub const SCENE_WIDTH: usize = 64;
pub const SCENE_HEIGHT: usize = 48;

/// Reference images per entity that show the entity alone.
pub const PURE_REFERENCES: usize = 4;

/// How a demo sample is expected to be solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    /// The raw query already names a category the segmenter understands.
    Visual,
    /// The retrieved name is known to the segmenter.
    KnownName,
    /// Only the background clause names a usable category.
    NeedsBackground,
    /// A larger look-alike shares the category; needs visual correction.
    NeedsCorrection,
}

struct Item {
    group: Group,
    name: &'static str,
    code: u8,
    category: &'static str,
    question: &'static str,
    /// Keyword under which the question's news documents are filed.
    key: &'static str,
    docs: [&'static str; 2],
    background: &'static str,
    /// Code of the object placed next to the target.
    distractor: u8,
}

const TREE: u8 = 40;
const LAMP: u8 = 41;
const BENCH: u8 = 42;
const MAILBOX: u8 = 43;

/// Fillers and look-alikes: (code, name, category).
const BYSTANDERS: [(u8, &str, &str); 9] = [
    (30, "service robot", "robot"),
    (31, "desk phone", "phone"),
    (32, "pocket watch", "watch"),
    (33, "steel kettle", "kettle"),
    (34, "office chair", "chair"),
    (TREE, "oak tree", "tree"),
    (LAMP, "street lamp", "lamp"),
    (BENCH, "park bench", "bench"),
    (MAILBOX, "mailbox", "mailbox"),
];

const ITEMS: [Item; 20] = [
    Item {
        group: Group::Visual,
        name: "city bus",
        code: 1,
        category: "vehicle",
        question: "the vehicle on the left",
        key: "",
        docs: ["", ""],
        background: "",
        distractor: TREE,
    },
    Item {
        group: Group::Visual,
        name: "cargo bicycle",
        code: 2,
        category: "bike",
        question: "the bike",
        key: "",
        docs: ["", ""],
        background: "",
        distractor: LAMP,
    },
    Item {
        group: Group::Visual,
        name: "red umbrella",
        code: 3,
        category: "parasol",
        question: "the parasol on the left",
        key: "",
        docs: ["", ""],
        background: "",
        distractor: BENCH,
    },
    Item {
        group: Group::Visual,
        name: "sheepdog",
        code: 4,
        category: "dog",
        question: "the dog on the left",
        key: "",
        docs: ["", ""],
        background: "",
        distractor: MAILBOX,
    },
    Item {
        group: Group::KnownName,
        name: "Mara Quist",
        code: 5,
        category: "footballer",
        question: "Who won the Golden Boot of the Northern League in 2025?",
        key: "golden boot",
        docs: [
            "Mara Quist finished the 2025 Northern League season with 31 goals and collected the Golden Boot.",
            "Northport striker Mara Quist lifted the Golden Boot after a final-day hat-trick.",
        ],
        background: "Mara Quist is a footballer who plays as a striker for Northport. Quist made a senior debut at seventeen. The club renewed the contract in 2025.",
        distractor: TREE,
    },
    Item {
        group: Group::KnownName,
        name: "Tomas Reyl",
        code: 6,
        category: "tennis player",
        question: "Who won the Harbor Open final in 2025?",
        key: "harbor open",
        docs: [
            "Tomas Reyl saved three match points to win the 2025 Harbor Open final.",
            "The Harbor Open trophy went to Tomas Reyl after a five-set final.",
        ],
        background: "Tomas Reyl is a tennis player known for a left-handed serve. Reyl turned professional in 2019.",
        distractor: LAMP,
    },
    Item {
        group: Group::KnownName,
        name: "Lumo Deck",
        code: 7,
        category: "console",
        question: "Which handheld did Lumo launch in March 2025?",
        key: "lumo handheld",
        docs: [
            "Lumo launched the Lumo Deck handheld in March 2025 and sold the first batch within a day.",
            "Reviewers praised the battery life of the new Lumo handheld, the Lumo Deck.",
        ],
        background: "Lumo Deck is a handheld game console with a seven-inch screen. It runs the Lumo store.",
        distractor: BENCH,
    },
    Item {
        group: Group::KnownName,
        name: "Pip the Otter",
        code: 8,
        category: "plush",
        question: "Which mascot was unveiled for the River Games in 2025?",
        key: "river games",
        docs: [
            "Organisers of the 2025 River Games unveiled Pip the Otter as the official mascot.",
            "Pip the Otter greeted fans at the River Games opening ceremony.",
        ],
        background: "Pip the Otter is a plush mascot in a blue scarf. The design came from a school competition.",
        distractor: MAILBOX,
    },
    Item {
        group: Group::KnownName,
        name: "Ava Lindqvist",
        code: 9,
        category: "singer",
        question: "Who headlined the Northlight Festival in 2025?",
        key: "northlight festival",
        docs: [
            "Ava Lindqvist closed the 2025 Northlight Festival with a two-hour headline set.",
            "The Northlight Festival sold out after Ava Lindqvist was announced as headliner.",
        ],
        background: "Ava Lindqvist is a singer and songwriter from Bergen. Lindqvist released a debut album in 2021.",
        distractor: TREE,
    },
    Item {
        group: Group::KnownName,
        name: "Halden Tower",
        code: 10,
        category: "tower",
        question: "Which skyscraper opened in Halden in 2025?",
        key: "halden skyscraper",
        docs: [
            "Halden Tower, the new Halden skyscraper, opened to visitors in May 2025.",
            "At 310 metres, Halden Tower is the tallest skyscraper in the region.",
        ],
        background: "Halden Tower is a glass tower on the Halden waterfront. It has an observation deck on the top floor.",
        distractor: LAMP,
    },
    Item {
        group: Group::NeedsBackground,
        name: "Vela V7",
        code: 11,
        category: "suv",
        question: "Which model did Vela unveil at the Shanghai show in 2025?",
        key: "shanghai show",
        docs: [
            "Vela unveiled the Vela V7 at the 2025 Shanghai show to long queues.",
            "The Vela V7 drew more pre-orders than any debut at the Shanghai show.",
        ],
        background: "Vela V7 is an electric SUV built by Vela Motors. It seats five and charges in eighteen minutes. Deliveries start in autumn.",
        distractor: TREE,
    },
    Item {
        group: Group::NeedsBackground,
        name: "Nimbus R1",
        code: 12,
        category: "vacuum",
        question: "Which home gadget topped the spring sales charts in 2025?",
        key: "spring sales",
        docs: [
            "The Nimbus R1 topped the 2025 spring sales charts for home gadgets.",
            "Retailers reported that the Nimbus R1 led spring sales by a wide margin.",
        ],
        background: "Nimbus R1 is a cordless vacuum that maps rooms with lidar. It empties itself into a dock.",
        distractor: LAMP,
    },
    Item {
        group: Group::NeedsBackground,
        name: "Quill One",
        code: 13,
        category: "tablet",
        question: "Which reading device won the Design Week award in 2025?",
        key: "design week",
        docs: [
            "Quill One took the top prize at Design Week 2025.",
            "Judges at Design Week praised the matte screen of the Quill One.",
        ],
        background: "Quill One is a paper-like tablet for reading and note taking. It weighs 280 grams.",
        distractor: BENCH,
    },
    Item {
        group: Group::NeedsBackground,
        name: "Strato",
        code: 14,
        category: "airship",
        question: "Which aircraft completed the first solar crossing of the Alps in 2025?",
        key: "solar crossing",
        docs: [
            "Strato completed the first solar crossing of the Alps in June 2025.",
            "The solar crossing by Strato took nineteen hours.",
        ],
        background: "Strato is a solar airship designed for long survey flights. It carries a crew of two.",
        distractor: MAILBOX,
    },
    Item {
        group: Group::NeedsBackground,
        name: "Fennec Pro",
        code: 15,
        category: "scooter",
        question: "Which design won the City Mobility award in 2025?",
        key: "city mobility",
        docs: [
            "Fennec Pro won the 2025 City Mobility award.",
            "The City Mobility jury singled out the Fennec Pro for its range.",
        ],
        background: "Fennec Pro is a folding electric scooter. It fits under a train seat.",
        distractor: TREE,
    },
    Item {
        group: Group::NeedsCorrection,
        name: "Koru",
        code: 16,
        category: "robot",
        question: "Which household helper did Aroha Labs release in 2025?",
        key: "aroha labs",
        docs: [
            "Aroha Labs released Koru in February 2025.",
            "Koru is the first consumer product from Aroha Labs.",
        ],
        background: "Koru is a small home robot from Aroha Labs. It follows its owner between rooms.",
        distractor: 30,
    },
    Item {
        group: Group::NeedsCorrection,
        name: "Ember 3",
        code: 17,
        category: "phone",
        question: "Which handset shipped with a week-long battery in 2025?",
        key: "battery handset",
        docs: [
            "Ember 3 became the first handset with a week-long battery when it shipped in 2025.",
            "Battery tests confirmed the Ember 3 handset lasts seven days.",
        ],
        background: "Ember 3 is a compact phone with a seven-day battery. It has a single rear camera.",
        distractor: 31,
    },
    Item {
        group: Group::NeedsCorrection,
        name: "Tidewatch",
        code: 18,
        category: "watch",
        question: "Which wearable that tracks ocean tides launched in 2025?",
        key: "ocean tides",
        docs: [
            "Tidewatch launched in 2025 and tracks ocean tides for 400 beaches.",
            "Surfers rate Tidewatch for its ocean tides display.",
        ],
        background: "Tidewatch is a smart watch for sailors and surfers. It is waterproof to 100 metres.",
        distractor: 32,
    },
    Item {
        group: Group::NeedsCorrection,
        name: "Lyra",
        code: 19,
        category: "kettle",
        question: "Which appliance won the 2025 kitchen design prize?",
        key: "kitchen design",
        docs: [
            "Lyra won the 2025 kitchen design prize.",
            "The kitchen design jury called Lyra a quiet classic.",
        ],
        background: "Lyra is a glass kettle with a built-in tea infuser. It boils a litre in three minutes.",
        distractor: 33,
    },
    Item {
        group: Group::NeedsCorrection,
        name: "Orbit",
        code: 20,
        category: "chair",
        question: "Which seat design sold out at the Milan fair in 2025?",
        key: "milan fair",
        docs: [
            "Orbit sold out on the first day of the 2025 Milan fair.",
            "Orbit was the most photographed piece at the Milan fair.",
        ],
        background: "Orbit is a rocking chair made from recycled plastic. It comes in six colours.",
        distractor: 34,
    },
];

fn bx(x0: usize, y0: usize, x1: usize, y1: usize) -> BoundingBox {
    BoundingBox::new(x0, y0, x1, y1).expect("fixture boxes are well formed")
}

fn slug(name: &str) -> String {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn demo_time(month: u32, day: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, month, day, 9, 0, 0).single().expect("valid fixture date")
}

/// Target and distractor boxes for sample `i`. Targets sit on the left; a
/// look-alike distractor is larger than its target.
fn layout(i: usize, item: &Item) -> (BoundingBox, BoundingBox) {
    let shift = (i % 3) * 2;
    if item.group == Group::NeedsCorrection {
        (bx(4 + shift, 16, 18 + shift, 30), bx(30, 6, 58, 42))
    } else {
        (bx(4 + shift, 10, 26 + shift, 38), bx(38, 12, 56, 34))
    }
}

fn reference_images(item: &Item) -> Vec<RasterImage> {
    let mut refs: Vec<RasterImage> = (0..PURE_REFERENCES)
        .map(|j| {
            let m = j % 3;
            paint_scene(
                &format!("ref-{}-{j}", slug(item.name)),
                32,
                32,
                &[(item.code, bx(2 + m, 2, 30 - m, 30))],
            )
        })
        .collect();
    // image search is noisy: one result shows something else
    refs.push(paint_scene(
        &format!("ref-{}-outlier", slug(item.name)),
        32,
        32,
        &[(TREE, bx(4, 2, 28, 30))],
    ));
    refs
}

/// Codes painted in a demo scene, for callers that need ground truth per code.
pub fn scene_objects(i: usize) -> Option<[(u8, BoundingBox); 2]> {
    let item = ITEMS.get(i)?;
    let (target, other) = layout(i, item);
    Some([(item.code, target), (item.distractor, other)])
}

/// The group of demo sample `i` (in dataset order).
pub fn group_of(i: usize) -> Option<Group> {
    ITEMS.get(i).map(|item| item.group)
}

/// The `demo` fixture world.
pub fn demo_world() -> FixtureWorld {
    let mut entities: Vec<FixtureEntity> = ITEMS
        .iter()
        .map(|it| {
            let known = matches!(it.group, Group::Visual | Group::KnownName);
            FixtureEntity::new(it.name, Some(it.code), &[it.category], known)
        })
        .collect();
    entities.extend(
        BYSTANDERS
            .iter()
            .map(|(code, name, category)| FixtureEntity::new(name, Some(*code), &[category], false)),
    );

    let mut documents = Vec::new();
    let mut images = Vec::new();
    let mut script = LlmScript::default();
    for (i, it) in ITEMS.iter().enumerate() {
        if it.group == Group::Visual {
            script.skip_queries.insert(it.question.to_string());
        } else {
            let docs = it
                .docs
                .iter()
                .enumerate()
                .map(|(j, body)| {
                    let url = format!("https://news.example/{}/{j}", slug(it.key));
                    WebDocument::new(url, *body, format!("<p>{body}</p>"))
                        .published(demo_time(1 + (i % 6) as u32, 1 + j as u32))
                })
                .collect();
            documents.push((it.key.to_string(), docs));
            let bg_url = format!("https://wiki.example/{}", slug(it.name));
            documents.push((
                format!("{} introduction", it.name),
                vec![WebDocument::new(bg_url, it.background, it.background)],
            ));
            images.push((it.name.to_string(), reference_images(it)));
        }
        if it.group != Group::Visual {
            script.answers.insert(it.question.to_string(), it.name.to_string());
        }
    }
    // the search-backed answerer confuses the new design with an older one
    script.answers.insert(ITEMS[19].question.to_string(), "office chair".to_string());

    // scenes with two or more entities, for the dataset engine
    let scene = |id: &str, objects: &[(u8, BoundingBox)]| paint_scene(id, SCENE_WIDTH, SCENE_HEIGHT, objects);
    images.push((
        "Mara Quist Tomas Reyl".into(),
        vec![
            scene("scene-quist-reyl-0", &[(5, bx(4, 8, 24, 40)), (6, bx(36, 10, 58, 42))]),
            scene("scene-quist-reyl-1", &[(6, bx(2, 6, 20, 36)), (5, bx(30, 12, 50, 44))]),
            // Reyl without Quist: no proposal matches the prototype
            scene("scene-quist-reyl-2", &[(6, bx(6, 6, 26, 40)), (TREE, bx(40, 4, 60, 44))]),
        ],
    ));
    images.push((
        "Vela V7 Fennec Pro".into(),
        vec![
            scene("scene-v7-fennec-0", &[(11, bx(2, 10, 34, 40)), (15, bx(42, 18, 58, 44))]),
            scene("scene-v7-fennec-1", &[(15, bx(4, 20, 18, 46)), (11, bx(24, 8, 62, 38))]),
        ],
    ));
    images.push((
        "Koru service robot".into(),
        vec![scene("scene-koru-0", &[(16, bx(6, 20, 18, 34)), (30, bx(30, 6, 58, 42))])],
    ));
    script.enhancements = BTreeMap::from([
        ("Mara Quist".to_string(), "Tomas Reyl".to_string()),
        ("Vela V7".to_string(), "Fennec Pro".to_string()),
        ("Koru".to_string(), "service robot".to_string()),
    ]);

    FixtureWorld {
        entities,
        documents,
        images,
        script,
        ..FixtureWorld::default()
    }
}

/// The 20-sample evaluation set over [`demo_world`].
pub fn demo_dataset() -> Vec<NestSample> {
    ITEMS
        .iter()
        .enumerate()
        .map(|(i, it)| {
            let id = format!("demo-{i:02}");
            let (target, other) = layout(i, it);
            let image = paint_scene(&id, SCENE_WIDTH, SCENE_HEIGHT, &[(it.code, target), (it.distractor, other)]);
            let mask = BinaryMask::from_box(SCENE_HEIGHT, SCENE_WIDTH, &target).expect("target fits the scene");
            let entity_type = match it.group {
                Group::Visual | Group::KnownName => EntityType::Emerging,
                Group::NeedsBackground | Group::NeedsCorrection => EntityType::Novel,
            };
            let source_url = if it.key.is_empty() {
                format!("https://photos.example/{}", slug(it.name))
            } else {
                format!("https://news.example/{}/0", slug(it.key))
            };
            NestSample {
                id,
                image,
                question: it.question.to_string(),
                answer: it.name.to_string(),
                mask,
                category: it.category.to_string(),
                entity_type,
                collected_at: demo_time(6, 1),
                source_url,
            }
        })
        .collect()
}

/// Trend queries for the dataset engine over [`demo_world`].
///
/// They exercise every outcome: emitted samples, a duplicate news item, a
/// question that keeps naming its answer, a scene without the entity, a term
/// with no news, a term with no scene images and a non-visual term.
pub fn demo_trends() -> Vec<TrendQuery> {
    let news = |url: &str, month, day, snippet: &str| {
        WebDocument::new(format!("https://news.example/trends/{url}"), snippet, "").published(demo_time(month, day))
    };
    vec![
        TrendQuery {
            term: "Mara Quist".into(),
            category: "sports".into(),
            related_terms: vec!["Golden Boot".into()],
            news: vec![
                news("quist-1", 5, 1, "Mara Quist scored twice as Northport won the cup final."),
                news("quist-2", 5, 2, "Mara Quist scored twice as Northport won the cup final on Saturday."),
                news("quist-3", 5, 20, "Mara Quist signed a contract extension with Northport."),
            ],
        },
        TrendQuery {
            term: "Vela V7".into(),
            category: "cars".into(),
            related_terms: vec!["Vela Motors".into()],
            news: vec![
                news("v7-1", 4, 10, "Vela V7 was unveiled at the Shanghai show with a record number of pre-orders."),
                news("v7-2", 4, 25, "First Vela-V7 deliveries begin in Shanghai."),
            ],
        },
        TrendQuery {
            term: "Koru".into(),
            category: "gadgets".into(),
            related_terms: vec![],
            news: vec![],
        },
        TrendQuery {
            term: "Strato".into(),
            category: "aviation".into(),
            related_terms: vec![],
            news: vec![news("strato-1", 6, 3, "Strato completed the first solar crossing of the Alps.")],
        },
        TrendQuery {
            term: "Google stock".into(),
            category: "finance".into(),
            related_terms: vec![],
            news: vec![news("goog-1", 4, 2, "Google stock rose four percent after earnings.")],
        },
    ]
}

/// Engine settings matching the demo trends: `Mara Quist` counts as known to
/// the backbone, so its samples are `emerging`.
pub fn demo_config() -> Config {
    let mut config = Config::default();
    config.engine.known_terms = vec!["Mara Quist".into()];
    config
}

/// Look up a bundled fixture world by name.
pub fn world(name: &str) -> Result<FixtureWorld> {
    match name {
        DEMO => Ok(demo_world()),
        other => Err(Error::config(format!("unknown fixture `{other}`; available: {DEMO}"))),
    }
}

/// Port handles for `config`: the configured backend, routed through the
/// response cache when a cache directory is set (`cache_override`, then the
/// cache environment variable, then `backends.cache_dir`).
pub fn ports_from_config(config: &Config, cache_override: Option<&Path>) -> Result<Ports> {
    if config.backends.kind != "mock" {
        return Err(Error::config(format!("unknown backend kind `{}`", config.backends.kind)));
    }
    let ports = make_mock_suite(world(&config.backends.fixture)?)?;
    match ResponseCache::resolve_dir(cache_override, config.backends.cache_dir.as_deref()) {
        Some(dir) => {
            let cache = Arc::new(ResponseCache::open(dir)?);
            Ok(ports.cached(cache, Duration::from_millis(config.backends.port_delay_ms)))
        }
        None => Ok(ports),
    }
}

/// Entity names of the demo catalog, for documentation and tests.
pub fn demo_entity_names() -> BTreeSet<String> {
    demo_world().entities.into_iter().map(|e| e.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{Ablation, Pipeline, UserRequest};

    #[test]
    fn dataset_shape() {
        let ds = demo_dataset();
        assert_eq!(ds.len(), 20);
        let novel = ds.iter().filter(|s| s.entity_type == EntityType::Novel).count();
        assert_eq!(novel, 10);
        for s in &ds {
            assert_eq!(s.image.shape(), (SCENE_HEIGHT, SCENE_WIDTH));
            assert!(!s.mask.is_empty());
        }
        assert!(make_mock_suite(demo_world()).is_ok());
        assert!(world("nope").is_err());
    }

    #[test]
    fn groups_behave_as_designed() {
        let ports = make_mock_suite(demo_world()).unwrap();
        let ds = demo_dataset();
        let iou = |ablation: Ablation, i: usize| {
            let p = Pipeline::with_ablation(&Config::default(), ablation).unwrap();
            let s = &ds[i];
            let r = p.run_sample(&ports, &UserRequest::new(s.image.clone(), s.question.clone()).unwrap()).unwrap();
            r.mask.pair_stats(&s.mask).unwrap().iou()
        };
        // one representative per group
        assert_eq!(iou(Ablation::Baseline, 0), 1.0);
        assert_eq!(iou(Ablation::Baseline, 4), 0.0);
        assert_eq!(iou(Ablation::Irag, 4), 1.0);
        assert_eq!(iou(Ablation::Irag, 10), 0.0);
        assert_eq!(iou(Ablation::IragTpe, 10), 1.0);
        assert_eq!(iou(Ablation::IragTpe, 15), 0.0);
        assert_eq!(iou(Ablation::Full, 15), 1.0);
        assert_eq!(iou(Ablation::IragVpe, 10), 1.0);
    }
}
