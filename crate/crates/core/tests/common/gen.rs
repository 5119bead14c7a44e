//! Seeded random FCMs.

use pta_core::fcm::{CausalConcept, EdgeSpec, FcmMode, Threshold};
use pta_core::{ActivationVector, FcmModel};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;

const WEIGHTS: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];

/// Random generic map. With `layered`, leaves feed only a set of head stems
/// that take no stem input, so the map splits into sub-maps and a main map.
pub fn random_fcm(rng: &mut ChaCha8Rng, layered: bool) -> FcmModel {
    let n = rng.random_range(1..=12usize);
    let leaves = rng.random_range(0..=n.min(4));
    let heads = if layered { rng.random_range(0..=(n - leaves)) } else { 0 };
    let mut concepts = Vec::new();
    for i in 0..n {
        let id = format!("c{i}");
        concepts.push(if i < leaves {
            CausalConcept::leaf(&id)
        } else {
            CausalConcept::stem(&id, None, None)
        });
    }
    let mut edges = Vec::new();
    let density = rng.random_range(0.1..0.6);
    for from in 0..n {
        for to in leaves..n {
            if from == to || !rng.random_bool(density) {
                continue;
            }
            let is_head = to < leaves + heads;
            if layered && (from < leaves) != is_head {
                continue;
            }
            edges.push(EdgeSpec {
                from: format!("c{from}"),
                to: format!("c{to}"),
                weight: WEIGHTS[rng.random_range(0..4)],
            });
        }
    }
    FcmModel::new(FcmMode::Generic, concepts, edges, Threshold::Trivalent, 100).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, model: &FcmModel) -> ActivationVector {
    let values = (0..model.len())
        .map(|_| [-1.0, 0.0, 1.0][rng.random_range(0..3)])
        .collect();
    let mut v = ActivationVector::from_values(model, values).unwrap();
    for i in 0..model.len() {
        if model.concepts[i].is_leaf() && rng.random_bool(0.5) {
            let id = model.concepts[i].id.clone();
            let x = v.value(i);
            v.clamp(model, &id, x).unwrap();
        }
    }
    v
}
