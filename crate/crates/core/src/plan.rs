//! Plan trees: the full recursive expansion of a task instance down to
//! primitive actions, plus text renderings of them.

use std::fmt::Write as _;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::library::TaskLibrary;
use crate::model::{instantiate, ModelError, PredicateInstance, Signature};

pub const DEFAULT_MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpandError {
    #[error("unknown action {0}")]
    UnknownSignature(Signature),
    #[error("expansion of {at} exceeds depth {max_depth}")]
    DepthExceeded { at: String, max_depth: usize },
    #[error("{0} is not ground")]
    NotGround(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanTree {
    pub root: PredicateInstance,
    pub children: Vec<PlanTree>,
}

impl PlanTree {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Primitive actions in execution order.
    pub fn leaves(&self) -> Vec<&PredicateInstance> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a PredicateInstance>) {
        if self.is_leaf() {
            out.push(&self.root);
        }
        for child in &self.children {
            child.collect_leaves(out);
        }
    }

    pub fn depth(&self) -> usize {
        self.children
            .iter()
            .map(|c| c.depth() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(PlanTree::node_count)
            .sum::<usize>()
    }

    /// Two spaces of indentation per level, one node per line.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        self.write_ascii(0, &mut out);
        out
    }

    fn write_ascii(&self, level: usize, out: &mut String) {
        let _ = writeln!(out, "{}{}", "  ".repeat(level), self.root);
        for child in &self.children {
            child.write_ascii(level + 1, out);
        }
    }

    /// Graphviz rendering. Node ids are assigned in pre-order and emitted
    /// sorted, so the output is stable for a given tree.
    pub fn to_dot(&self) -> String {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        self.number(&mut nodes, &mut edges, None);
        let mut out = String::from("digraph plan {\n");
        for (id, node) in nodes.iter().enumerate() {
            let shape = if node.is_leaf() { "ellipse" } else { "box" };
            let label = node.root.to_string().replace('"', "\\\"");
            let _ = writeln!(out, "  n{id} [label=\"{label}\", shape={shape}];");
        }
        edges.sort_unstable();
        for (from, to) in edges {
            let _ = writeln!(out, "  n{from} -> n{to};");
        }
        out.push_str("}\n");
        out
    }

    fn number<'a>(
        &'a self,
        nodes: &mut Vec<&'a PlanTree>,
        edges: &mut Vec<(usize, usize)>,
        parent: Option<usize>,
    ) {
        let id = nodes.len();
        nodes.push(self);
        if let Some(p) = parent {
            edges.push((p, id));
        }
        for child in &self.children {
            child.number(nodes, edges, Some(id));
        }
    }
}

impl Serialize for PlanTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let args: Vec<String> = self.root.args.iter().map(|a| a.to_string()).collect();
        let mut s = serializer.serialize_struct("PlanTree", 5)?;
        s.serialize_field("name", &self.root.name)?;
        s.serialize_field("args", &args)?;
        s.serialize_field("label", &self.root.to_string())?;
        s.serialize_field(
            "kind",
            if self.is_leaf() {
                "primitive"
            } else {
                "learned"
            },
        )?;
        s.serialize_field("children", &self.children)?;
        s.end()
    }
}

/// Recursively instantiate learned bodies until every leaf is primitive.
///
/// A learned node at nesting level `d` (the root is level 0) is only expanded
/// while `d < max_depth`, so cycles surface as [`ExpandError::DepthExceeded`].
pub fn expand(
    library: &TaskLibrary,
    instance: &PredicateInstance,
    max_depth: usize,
) -> Result<PlanTree, ExpandError> {
    if !instance.is_ground() {
        return Err(ExpandError::NotGround(instance.to_string()));
    }
    expand_at(library, instance, 0, max_depth)
}

fn expand_at(
    library: &TaskLibrary,
    instance: &PredicateInstance,
    level: usize,
    max_depth: usize,
) -> Result<PlanTree, ExpandError> {
    let sig = instance.signature();
    let def = library
        .get(&sig)
        .ok_or_else(|| ExpandError::UnknownSignature(sig.clone()))?;
    if def.is_primitive() {
        return Ok(PlanTree {
            root: instance.clone(),
            children: Vec::new(),
        });
    }
    if level >= max_depth {
        return Err(ExpandError::DepthExceeded {
            at: instance.to_string(),
            max_depth,
        });
    }
    let args = instance
        .ground_args()
        .ok_or_else(|| ExpandError::NotGround(instance.to_string()))?;
    let children = instantiate(def, &args)?
        .iter()
        .map(|step| expand_at(library, step, level + 1, max_depth))
        .collect::<Result<_, _>>()?;
    Ok(PlanTree {
        root: instance.clone(),
        children,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generalize, TaskDefinition};

    fn inst(name: &str, args: &[&str]) -> PredicateInstance {
        PredicateInstance::ground(name, args).unwrap()
    }

    fn hand_library() -> TaskLibrary {
        let mut lib = TaskLibrary::new();
        for (name, params) in [
            ("openHand", &[][..]),
            ("moveHand", &["target"][..]),
            ("closeHand", &[][..]),
            ("resetHandPosition", &[][..]),
        ] {
            lib.insert(TaskDefinition::primitive(name, params).unwrap())
                .unwrap();
        }
        lib.insert(
            generalize(
                &inst("pick_up", &["pepper"]),
                &[
                    inst("openHand", &[]),
                    inst("moveHand", &["pepper"]),
                    inst("closeHand", &[]),
                    inst("resetHandPosition", &[]),
                ],
            )
            .unwrap(),
        )
        .unwrap();
        lib
    }

    #[test]
    fn primitive_root_is_single_leaf() {
        let tree = expand(&hand_library(), &inst("openHand", &[]), 32).unwrap();
        assert!(tree.is_leaf());
        assert_eq!(tree.node_count(), 1);
    }

    #[test]
    fn pick_up_has_four_leaves() {
        let tree = expand(&hand_library(), &inst("pickUp", &["cup"]), 32).unwrap();
        let leaves: Vec<String> = tree.leaves().iter().map(|l| l.to_string()).collect();
        assert_eq!(
            leaves,
            [
                "openHand()",
                "moveHand(cup)",
                "closeHand()",
                "resetHandPosition()"
            ]
        );
        assert_eq!(
            tree.to_ascii(),
            "pickUp(cup)\n  openHand()\n  moveHand(cup)\n  closeHand()\n  resetHandPosition()\n"
        );
    }

    #[test]
    fn unknown_steps_are_reported() {
        let mut lib = hand_library();
        lib.insert(generalize(&inst("wave", &[]), &[inst("flap", &[])]).unwrap())
            .unwrap();
        let err = expand(&lib, &inst("wave", &[]), 32).unwrap_err();
        assert!(matches!(err, ExpandError::UnknownSignature(s) if s.to_string() == "flap/0"));
        assert!(matches!(
            expand(&lib, &inst("juggle", &[]), 32),
            Err(ExpandError::UnknownSignature(_))
        ));
    }

    #[test]
    fn cycles_hit_the_depth_bound() {
        let mut lib = TaskLibrary::new();
        lib.insert(generalize(&inst("ping", &[]), &[inst("pong", &[])]).unwrap())
            .unwrap();
        lib.insert(generalize(&inst("pong", &[]), &[inst("ping", &[])]).unwrap())
            .unwrap();
        assert!(matches!(
            expand(&lib, &inst("ping", &[]), DEFAULT_MAX_DEPTH),
            Err(ExpandError::DepthExceeded { max_depth: 32, .. })
        ));
    }

    #[test]
    fn arity_mismatch_in_root() {
        // pick_up/2 is simply not a known signature
        assert!(matches!(
            expand(&hand_library(), &inst("pick_up", &["a", "b"]), 32),
            Err(ExpandError::UnknownSignature(_))
        ));
    }

    #[test]
    fn dot_is_stable() {
        let tree = expand(&hand_library(), &inst("pick_up", &["cup"]), 32).unwrap();
        let dot = tree.to_dot();
        assert_eq!(dot, tree.to_dot());
        assert!(dot.starts_with("digraph plan {\n  n0 [label=\"pick_up(cup)\", shape=box];"));
        assert!(dot.contains("  n0 -> n4;\n}"));
    }

    #[test]
    fn json_shape() {
        let tree = expand(&hand_library(), &inst("pick_up", &["cup"]), 32).unwrap();
        let v = serde_json::to_value(&tree).unwrap();
        assert_eq!(v["kind"], "learned");
        assert_eq!(v["args"][0], "cup");
        assert_eq!(v["children"][1]["label"], "moveHand(cup)");
        assert_eq!(v["children"][1]["kind"], "primitive");
    }
}
