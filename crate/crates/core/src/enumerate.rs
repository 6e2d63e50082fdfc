//! Exhaustive enumeration of feasible mini routes for small instances.

use crate::feasibility::{earliest_schedule, MiniRoute};
use crate::model::{Direction, Instance};

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn extend(inst: &Instance, pickups: &mut Vec<usize>, pool: &[usize], out: &mut Vec<MiniRoute>) {
    if !pickups.is_empty() {
        let drops: Vec<usize> = pickups.iter().map(|&p| p + inst.n()).collect();
        for order in permutations(&drops) {
            let nodes: Vec<usize> = pickups.iter().copied().chain(order).collect();
            if earliest_schedule(inst, &nodes).is_ok() {
                out.push(MiniRoute { nodes });
            }
        }
    }
    if pickups.len() == inst.capacity() {
        return;
    }
    for &p in pool {
        if !pickups.contains(&p) {
            pickups.push(p);
            // A prefix whose pickups alone miss their windows cannot be extended.
            if earliest_schedule(inst, pickups).is_ok() {
                extend(inst, pickups, pool, out);
            }
            pickups.pop();
        }
    }
}

/// Every feasible mini route of one direction, ordered by first node then
/// node sequence.
pub fn feasible_mini_routes_of(inst: &Instance, dir: Direction) -> Vec<MiniRoute> {
    let pool: Vec<usize> = inst.nodes().pickups_of(dir).collect();
    let mut out = Vec::new();
    extend(inst, &mut Vec::new(), &pool, &mut out);
    out.sort();
    out
}

pub fn feasible_mini_routes(inst: &Instance) -> Vec<MiniRoute> {
    let mut all = feasible_mini_routes_of(inst, Direction::Inbound);
    all.extend(feasible_mini_routes_of(inst, Direction::Outbound));
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_counts() {
        assert_eq!(permutations(&[1, 2, 3]).len(), 6);
        assert_eq!(permutations(&[]).len(), 1);
    }
}
