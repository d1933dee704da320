use rand::Rng as _;

use super::topk::{TopKEntry, TopKList};
use crate::error::Result;
use crate::layout::{Axis, DesignMatrix, Split};
use crate::predictor::Predictor;
use crate::seed::{derive_rng, Rng};

pub const DEFAULT_REFINE_STEPS: usize = 200;

/// Hill climbing over split-line positions.
///
/// Each proposal moves one split line of a uniformly chosen internal node by
/// one cell; descendants are re-fitted to the new bounds. A proposal is kept
/// only if the predicted aggregate strictly improves and `allow` accepts the
/// resulting design, so the returned score never falls below the input.
pub fn importance_assignment(
    entry: &TopKEntry,
    predictor: &dyn Predictor,
    steps: usize,
    rng: &mut Rng,
    allow: &dyn Fn(&DesignMatrix) -> bool,
) -> Result<TopKEntry> {
    let nodes: Vec<(usize, usize)> = entry
        .layout
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(k, l)| l.internal_nodes().into_iter().map(move |id| (k, id)))
        .collect();
    let mut best = entry.clone();
    if nodes.is_empty() {
        return Ok(best);
    }
    for _ in 0..steps {
        let (k, id) = nodes[rng.gen_range(0..nodes.len())];
        let layer = best.layout.layer(k);
        let axis = match layer.split_of(id) {
            Some(Split::Quad { .. }) => {
                if rng.gen::<bool>() {
                    Axis::Row
                } else {
                    Axis::Col
                }
            }
            Some(Split::Rows { .. }) => Axis::Row,
            Some(Split::Cols { .. }) => Axis::Col,
            None => continue,
        };
        let delta = if rng.gen::<bool>() { 1 } else { -1 };
        let Some(moved) = layer.move_split(id, axis, delta) else {
            continue;
        };
        let layout = best.layout.with_layer(k, moved)?;
        let design = layout.reconstruct();
        if design == best.design {
            continue;
        }
        let score = predictor.predict_aggregate(&design)?;
        if score > best.score && allow(&design) {
            best = TopKEntry { layout, design, score };
        }
    }
    Ok(best)
}

/// Refines every entry of `top` and re-sorts it. Entries stay distinct and
/// never become designs for which `exclude` is true.
pub fn refine_top_k(
    top: &mut TopKList,
    predictor: &dyn Predictor,
    steps: usize,
    seed: u64,
    exclude: &dyn Fn(&DesignMatrix) -> bool,
) -> Result<()> {
    let mut entries: Vec<TopKEntry> = top.entries().to_vec();
    for i in 0..entries.len() {
        let mut rng = derive_rng(seed, "refine", i as u64);
        let others: Vec<DesignMatrix> = entries
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, e)| e.design.clone())
            .collect();
        let allow = |d: &DesignMatrix| !exclude(d) && !others.contains(d);
        entries[i] = importance_assignment(&entries[i], predictor, steps, &mut rng, &allow)?;
    }
    top.replace_entries(entries);
    Ok(())
}
