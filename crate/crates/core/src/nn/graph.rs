//! Binds named parameters from a `ParamStore` onto a tape so a forward
//! pass can be differentiated and the gradients routed back by name.

use std::collections::HashMap;

use crate::autodiff::{NodeId, ParamStore, Tape, TensorValue};
use crate::error::Result;

pub struct Graph {
    pub tape: Tape,
    bound: Vec<(String, NodeId)>,
    by_name: HashMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { tape: Tape::new(), bound: Vec::new(), by_name: HashMap::new() }
    }

    /// Leaf node for the named parameter; repeated binds of the same
    /// name return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.by_name.get(name) {
            return Ok(id);
        }
        let value = store.get(name)?.clone();
        let id = self.tape.leaf(value);
        self.bound.push((name.to_string(), id));
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn input(&mut self, value: TensorValue) -> NodeId {
        self.tape.leaf(value)
    }

    /// Runs backward from `root` and accumulates each bound parameter's
    /// gradient into the store.
    pub fn backward_into(&mut self, root: NodeId, store: &mut ParamStore) -> Result<()> {
        let grads = self.tape.backward(root)?;
        for (name, id) in &self.bound {
            store.accumulate_grad(name, &grads[id.0])?;
        }
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> &TensorValue {
        self.tape.value(id)
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}
