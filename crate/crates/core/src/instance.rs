//! Instance models: the populated object tree of one device.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// One object of an instance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub class: String,
    pub slots: BTreeMap<String, Value>,
    /// Contained objects per association name.
    #[serde(default)]
    pub children: BTreeMap<String, Vec<ObjectNode>>,
}

impl ObjectNode {
    pub fn new(class: &str) -> Self {
        Self {
            class: class.to_string(),
            slots: BTreeMap::new(),
            children: BTreeMap::new(),
        }
    }

    pub fn child(&self, association: &str) -> Option<&ObjectNode> {
        self.children.get(association).and_then(|v| v.first())
    }

    pub fn child_mut(&mut self, association: &str) -> Option<&mut ObjectNode> {
        self.children
            .get_mut(association)
            .and_then(|v| v.first_mut())
    }

    pub fn children_of(&self, association: &str) -> &[ObjectNode] {
        self.children
            .get(association)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn slot_i64(&self, name: &str) -> Option<i64> {
        self.slots.get(name).and_then(Value::as_i64)
    }

    pub fn slot_str(&self, name: &str) -> Option<&str> {
        self.slots.get(name).and_then(Value::as_str)
    }

    /// JSON view in the input-template shape: slots and nested children side
    /// by side. Single-valued associations are objects, multi-valued ones are
    /// arrays, as decided by `is_many`.
    pub fn to_data(&self, is_many: &dyn Fn(&str, &str) -> bool) -> Value {
        let mut map: Map<String, Value> = self
            .slots
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (assoc, kids) in &self.children {
            let rendered = if is_many(&self.class, assoc) {
                Value::Array(kids.iter().map(|k| k.to_data(is_many)).collect())
            } else {
                kids.first()
                    .map(|k| k.to_data(is_many))
                    .unwrap_or(Value::Null)
            };
            map.insert(assoc.clone(), rendered);
        }
        Value::Object(map)
    }

    /// Depth-first visit of every object, paired with its path from the root.
    pub fn walk<'a>(
        &'a self,
        path: &mut Vec<String>,
        f: &mut dyn FnMut(&[String], &'a ObjectNode),
    ) {
        f(path, self);
        for (assoc, kids) in &self.children {
            for (i, k) in kids.iter().enumerate() {
                path.push(format!("{assoc}[{i}]"));
                k.walk(path, f);
                path.pop();
            }
        }
    }
}

/// Structural state of one twin, identified by its serial number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub serial: String,
    pub root: ObjectNode,
}

impl DeviceInstance {
    /// Canonical serialized form: compact JSON with sorted keys. Two
    /// instances are equal iff their canonical forms are byte-identical.
    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("instance serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn medication_plans(&self) -> &[ObjectNode] {
        self.root.children_of("medication_plans")
    }

    pub fn cartridge_empty(&self) -> bool {
        self.root
            .child("cartridge")
            .and_then(|c| c.slots.get("is_empty"))
            .and_then(Value::as_bool)
            .unwrap_or(false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_json_sorts_keys() {
        let mut root = ObjectNode::new("Device");
        root.slots.insert("zeta".into(), json!(1));
        root.slots.insert("alpha".into(), json!(2));
        let inst = DeviceInstance {
            serial: "1".into(),
            root,
        };
        let s = inst.to_canonical_json();
        assert!(s.find("alpha").unwrap() < s.find("zeta").unwrap());
        assert!(s.find("\"root\"").unwrap() < s.find("\"serial\"").unwrap());
    }
}
