//! Seeded generator for sparse-path page graphs.
//!
//! The start page offers `valid_paths` element-disjoint routes to a shared
//! goal page, each `depth` clicks long. Every page carries `branching`
//! elements; all elements off the valid routes are distractors that either
//! reload the current page or fall into a pool of dead-end pages from which
//! the goal is unreachable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Element, ElementId, ElementRole, GoalPredicate, Page, PageGraph, PageId, TaskSpec,
    WorldError, DEFAULT_HORIZON,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub branching: usize,
    pub depth: usize,
    pub valid_paths: usize,
    pub distractor_ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub impossible: bool,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            branching: 10,
            depth: 5,
            valid_paths: 1,
            distractor_ratio: 0.5,
            seed: 0,
            impossible: false,
        }
    }
}

const ADJECTIVES: &[&str] = &[
    "Amber", "Bright", "Cobalt", "Dusty", "Early", "Frosty", "Golden", "Hidden", "Ivory",
    "Jade", "Keen", "Lunar", "Misty", "Noble", "Olive", "Plain", "Quiet", "Rapid", "Silver",
    "Tidal", "Urban", "Vivid", "Woven", "Young",
];

const NOUNS: &[&str] = &[
    "Archive", "Bazaar", "Corner", "Desk", "Exchange", "Forum", "Gallery", "Harbor", "Index",
    "Journal", "Kiosk", "Lounge", "Market", "Notes", "Office", "Portal", "Quarter", "Registry",
    "Studio", "Terrace", "Vault", "Workshop",
];

const SELF_LOOP_LABELS: &[&str] = &[
    "Refresh", "Share this page", "Print", "Sort by date", "Sort by name", "Show more",
    "Toggle theme", "Language", "Bookmark", "Feedback",
];

struct Titles {
    used: std::collections::HashSet<String>,
}

impl Titles {
    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> String {
        for _ in 0..64 {
            let t = format!(
                "{} {}",
                ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())],
                NOUNS[rng.gen_range(0..NOUNS.len())]
            );
            if self.used.insert(t.clone()) {
                return t;
            }
        }
        let mut n = self.used.len();
        loop {
            let t = format!("Section {n}");
            if self.used.insert(t.clone()) {
                return t;
            }
            n += 1;
        }
    }
}

struct Draft {
    id: PageId,
    title: String,
    elements: Vec<Element>,
}

fn link(label: String, to: Option<PageId>, distractor: bool) -> Element {
    Element {
        id: ElementId(0),
        role: ElementRole::Link,
        label,
        transition: to,
        distractor,
        irreversible: false,
        requires_input: None,
    }
}

fn code(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
    (0..6)
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// Build a page graph with one task, deterministic in `params`.
pub fn generate(params: &GeneratorParams) -> Result<PageGraph, WorldError> {
    let GeneratorParams {
        branching: b,
        depth: d,
        valid_paths: v,
        distractor_ratio: rho,
        seed,
        impossible,
    } = *params;
    if b < 2 || d < 1 || v < 1 {
        return Err(WorldError::Invalid(
            "generator needs branching >= 2, depth >= 1 and valid_paths >= 1".to_string(),
        ));
    }
    if v > b {
        return Err(WorldError::InfeasibleParams(format!(
            "{v} valid paths do not fit on a page of {b} elements"
        )));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(WorldError::Invalid(format!(
            "distractor ratio {rho} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut titles = Titles {
        used: Default::default(),
    };

    let inner = v * (d - 1);
    let pool = v * d;
    let mut numbers: Vec<usize> = (1..=inner + pool + 1).collect();
    numbers.shuffle(&mut rng);
    let mut next_id = numbers.into_iter().map(|n| PageId::new(format!("p{n}")));

    let start = PageId::new("p0");
    let mut pages: Vec<Draft> = vec![Draft {
        id: start.clone(),
        title: "Home".to_string(),
        elements: Vec::new(),
    }];
    titles.used.insert("Home".to_string());
    // routes[i] lists page indices along path i, excluding start and goal.
    let mut routes: Vec<Vec<usize>> = Vec::new();
    for _ in 0..v {
        let mut route = Vec::new();
        for _ in 0..d - 1 {
            let title = titles.fresh(&mut rng);
            pages.push(Draft {
                id: next_id.next().expect("enough ids"),
                title,
                elements: Vec::new(),
            });
            route.push(pages.len() - 1);
        }
        routes.push(route);
    }
    let goal_idx = pages.len();
    let answer = code(&mut rng);
    let goal_title = titles.fresh(&mut rng);
    pages.push(Draft {
        id: next_id.next().expect("enough ids"),
        title: goal_title.clone(),
        elements: vec![Element {
            id: ElementId(0),
            role: ElementRole::Text,
            label: format!("Confirmation code: {answer}"),
            transition: None,
            distractor: false,
            irreversible: false,
            requires_input: None,
        }],
    });
    let pool_start = pages.len();
    for _ in 0..pool {
        let title = titles.fresh(&mut rng);
        pages.push(Draft {
            id: next_id.next().expect("enough ids"),
            title,
            elements: Vec::new(),
        });
    }
    let goal_id = pages[goal_idx].id.clone();

    // Valid links along every route.
    for route in &routes {
        let mut prev = 0usize;
        for (hop, &idx) in route.iter().chain(std::iter::once(&goal_idx)).enumerate() {
            let last = hop == route.len();
            let to = pages[idx].id.clone();
            let label = pages[idx].title.clone();
            let el = if last && impossible {
                link(label, None, false)
            } else {
                link(label, Some(to), false)
            };
            pages[prev].elements.push(el);
            prev = idx;
        }
    }

    // Fill every page up to `b` elements with distractors.
    for i in 0..pages.len() {
        let in_pool = i >= pool_start;
        while pages[i].elements.len() < b {
            let to_pool = in_pool || rng.gen_bool(rho);
            let el = if to_pool {
                let j = pool_start + rng.gen_range(0..pool);
                if j == i {
                    link(
                        SELF_LOOP_LABELS[rng.gen_range(0..SELF_LOOP_LABELS.len())].to_string(),
                        None,
                        true,
                    )
                } else {
                    link(pages[j].title.clone(), Some(pages[j].id.clone()), true)
                }
            } else {
                link(
                    SELF_LOOP_LABELS[rng.gen_range(0..SELF_LOOP_LABELS.len())].to_string(),
                    None,
                    true,
                )
            };
            pages[i].elements.push(el);
        }
    }

    let total: usize = pages.iter().map(|p| p.elements.len()).sum();
    let mut ids: Vec<u32> = (1..=total as u32).collect();
    ids.shuffle(&mut rng);
    let mut ids = ids.into_iter();
    let mut out = Vec::with_capacity(pages.len());
    for mut draft in pages {
        for el in &mut draft.elements {
            el.id = ElementId(ids.next().expect("enough ids"));
        }
        draft.elements.shuffle(&mut rng);
        out.push(Page {
            id: draft.id,
            title: draft.title,
            elements: draft.elements,
            popup: None,
            addressable: false,
        });
    }

    let task = TaskSpec {
        id: format!("gen-{seed}"),
        instruction: format!("Open the '{goal_title}' page and report the confirmation code."),
        goal: GoalPredicate::All {
            all: vec![
                GoalPredicate::ReachPage { page: goal_id },
                GoalPredicate::AnswerEquals { answer },
            ],
        },
        horizon: DEFAULT_HORIZON,
        inputs: Vec::new(),
        impossible,
    };
    let name = format!(
        "gen-b{b}-d{d}-v{v}-rho{rho}-s{seed}{}",
        if impossible { "-impossible" } else { "" }
    );
    PageGraph::new(name, start, out, vec![task])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(b: usize, d: usize, v: usize, seed: u64) -> GeneratorParams {
        GeneratorParams {
            branching: b,
            depth: d,
            valid_paths: v,
            distractor_ratio: 0.5,
            seed,
            impossible: false,
        }
    }

    #[test]
    fn every_page_has_b_elements() {
        let g = generate(&params(10, 5, 1, 7)).unwrap();
        assert!(g.pages().all(|p| p.elements.len() == 10));
        assert_eq!(g.page(g.start()).unwrap().elements.len(), 10);
    }

    #[test]
    fn infeasible_and_invalid_params() {
        assert!(matches!(
            generate(&params(2, 1, 3, 0)),
            Err(WorldError::InfeasibleParams(_))
        ));
        assert!(matches!(generate(&params(1, 1, 1, 0)), Err(WorldError::Invalid(_))));
        assert!(matches!(generate(&params(3, 0, 1, 0)), Err(WorldError::Invalid(_))));
    }

    #[test]
    fn saturated_start_page() {
        let g = generate(&params(2, 1, 2, 0)).unwrap();
        let start = g.page(g.start()).unwrap();
        assert!(start.elements.iter().all(|e| !e.distractor));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&params(6, 3, 2, 11)).unwrap();
        let b = generate(&params(6, 3, 2, 11)).unwrap();
        let c = generate(&params(6, 3, 2, 12)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.to_json(), c.to_json());
    }
}
