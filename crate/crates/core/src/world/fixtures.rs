//! Hand-authored scenario environments shipped with the crate.

use super::PageGraph;

const CHAIN: &str = include_str!("../../fixtures/v1/chain.json");
const POPUP: &str = include_str!("../../fixtures/v1/popup.json");
const DUAL_PATH: &str = include_str!("../../fixtures/v1/dual_path.json");
const IMPOSSIBLE: &str = include_str!("../../fixtures/v1/impossible.json");

pub const NAMES: &[&str] = &["chain", "popup", "dual_path", "impossible"];

fn load(text: &str) -> PageGraph {
    PageGraph::from_json(text).expect("bundled fixture is valid")
}

/// Three-page chain: Home, Products, Widget Pro.
pub fn chain() -> PageGraph {
    load(CHAIN)
}

/// The route to the goal passes a page covered by a modal dialog.
pub fn popup() -> PageGraph {
    load(POPUP)
}

/// A category menu that dead-ends and a search box that works.
pub fn dual_path() -> PageGraph {
    load(DUAL_PATH)
}

/// Negative control: the requested answer is never displayed.
pub fn impossible() -> PageGraph {
    load(IMPOSSIBLE)
}

pub fn by_name(name: &str) -> Option<PageGraph> {
    match name {
        "chain" => Some(chain()),
        "popup" => Some(popup()),
        "dual_path" | "dual-path" => Some(dual_path()),
        "impossible" => Some(impossible()),
        _ => None,
    }
}
