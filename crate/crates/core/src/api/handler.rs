//! Request processing against one twin.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::mapping::{ApiMapping, ResolvedRoute, RouteEntry, RouteKind};
use super::ApiError;
use crate::behavior::{ops, Availability, TwinRuntime};
use crate::factory::build_object;
use crate::instance::ObjectNode;
use crate::model::{validate_slots, validate_value_in, ClassDef, DeviceSchema};

pub const OK: u16 = 200;
pub const UNAVAILABLE: u16 = 503;
pub const NOT_FOUND: u16 = 404;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
    Put,
    Delete,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
            Method::Put => "PUT",
            Method::Delete => "DELETE",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = ApiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Ok(Method::Get),
            "POST" => Ok(Method::Post),
            "PUT" => Ok(Method::Put),
            "DELETE" => Ok(Method::Delete),
            _ => Err(ApiError::UnsupportedMethod(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub serial: String,
    pub method: Method,
    pub route: String,
    #[serde(default)]
    pub body: Value,
    /// Virtual send time, ms after the clock epoch.
    pub sent_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub request_id: u64,
    pub status_code: u16,
    pub response_time_ms: u64,
    pub body: Value,
}

impl ResponseRecord {
    pub fn new(
        request_id: u64,
        status_code: u16,
        response_time_ms: u64,
        payload: Result<Value, Value>,
    ) -> Self {
        let mut body = json!({ "status": status_code, "response_time_ms": response_time_ms });
        match payload {
            Ok(data) => body["data"] = data,
            Err(error) => body["error"] = error,
        }
        Self {
            request_id,
            status_code,
            response_time_ms,
            body,
        }
    }

    pub fn is_ok(&self) -> bool {
        (200..300).contains(&self.status_code)
    }
}

/// Result of applying a request, before latency is attached.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Applied {
    pub status: u16,
    /// Delay class used to time the response.
    pub op: &'static str,
    pub payload: Result<Value, Value>,
}

impl Applied {
    fn ok(op: &'static str, data: Value) -> Self {
        Self {
            status: OK,
            op,
            payload: Ok(data),
        }
    }

    fn reject(message: impl Into<String>) -> Self {
        Self {
            status: UNAVAILABLE,
            op: ops::REJECT,
            payload: Err(json!({ "message": message.into() })),
        }
    }

    fn busy(message: &str) -> Self {
        Self {
            status: UNAVAILABLE,
            op: ops::BUSY,
            payload: Err(json!({ "message": message })),
        }
    }
}

/// A twin as seen by the API: runtime, routes and the schema used for
/// validation.
#[derive(Debug, Clone)]
pub struct Twin {
    pub runtime: TwinRuntime,
    pub mapping: ApiMapping,
    pub schema: Arc<DeviceSchema>,
}

impl Twin {
    pub fn new(runtime: TwinRuntime, schema: Arc<DeviceSchema>) -> Result<Self, ApiError> {
        let mapping = super::generate_routes(&schema, runtime.serial())?;
        Ok(Self {
            runtime,
            mapping,
            schema,
        })
    }

    pub fn serial(&self) -> &str {
        self.runtime.serial()
    }

    pub fn handle(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        handle(&self.schema, &self.mapping, req, &mut self.runtime)
    }
}

/// Processes one request against a twin.
///
/// The twin is first advanced to the request's send time. All-or-nothing
/// validation: a request either applies completely with 200 or leaves the
/// instance untouched with 503. The response time is a virtual delay drawn
/// from the twin's delay profile for the kind of operation performed.
pub fn handle(
    schema: &DeviceSchema,
    mapping: &ApiMapping,
    req: &RequestRecord,
    rt: &mut TwinRuntime,
) -> Result<ResponseRecord, ApiError> {
    let route = mapping.resolve(&req.route)?;
    if req.sent_at > rt.now_ms() {
        rt.run_until(req.sent_at);
    }
    let applied = apply(
        schema,
        mapping,
        &route,
        req.method,
        &req.body,
        rt,
        &mut || false,
    );
    let delay = rt.sample_delay(applied.op);
    Ok(ResponseRecord::new(
        req.id,
        applied.status,
        delay,
        applied.payload,
    ))
}

/// Validation and mutation shared by twins and the emulator. `partial` is
/// consulted only for update bodies that mix valid and invalid fields; when
/// it returns true the valid fields are applied and the rest ignored.
pub(crate) fn apply(
    schema: &DeviceSchema,
    mapping: &ApiMapping,
    route: &ResolvedRoute,
    method: Method,
    body: &Value,
    rt: &mut TwinRuntime,
    partial: &mut dyn FnMut() -> bool,
) -> Applied {
    match rt.availability() {
        Availability::Available => {}
        Availability::Dispensing => {
            return Applied::busy("device is dispensing and cannot handle the request")
        }
        Availability::Shutdown => return Applied::busy("device is shut down"),
    }
    let entry = &mapping.entries[route.entry];
    if entry.kind == RouteKind::Status {
        return match method {
            Method::Get => Applied::ok(
                ops::READ,
                json!({
                    "serial": rt.serial(),
                    "state": rt.state(),
                    "availability": rt.availability(),
                    "now_ms": rt.now_ms(),
                }),
            ),
            _ => Applied::reject("status is read-only"),
        };
    }
    let target = match locate(schema, entry, route, &rt.instance().root) {
        Ok(t) => t,
        Err(msg) => return Applied::reject(msg),
    };
    let class = schema.class(&entry.class).expect("mapping classes resolve");
    let is_many = |c: &str, a: &str| {
        schema
            .class(c)
            .and_then(|c| c.association(a))
            .is_some_and(|a| a.multiplicity.is_many())
    };
    let root = &mut rt.instance_mut().root;
    match (method, target) {
        (Method::Get, Target::Object(path)) => {
            Applied::ok(ops::READ, node_at(root, &path).to_data(&is_many))
        }
        (Method::Get, Target::Collection(path, assoc)) => {
            let items = node_at(root, &path)
                .children_of(&assoc)
                .iter()
                .map(|n| n.to_data(&is_many))
                .collect();
            Applied::ok(ops::READ, Value::Array(items))
        }
        (Method::Put | Method::Post, Target::Object(path)) => {
            let node = node_at_mut(root, &path);
            update_slots(schema, class, node, body, partial, &is_many)
        }
        (Method::Post, Target::Collection(path, assoc)) => {
            let parent_class = schema
                .class(&node_at(root, &path).class)
                .expect("instance classes resolve");
            let upper = parent_class
                .association(&assoc)
                .and_then(|a| a.multiplicity.upper);
            let parent = node_at_mut(root, &path);
            append(schema, class, parent, &assoc, upper, body, &is_many)
        }
        (Method::Put | Method::Delete, Target::Collection(..)) => {
            Applied::reject("collection supports GET and POST only")
        }
        (Method::Delete, Target::Object(path)) => {
            let Some(((assoc, index), parent_path)) = path.split_last() else {
                return Applied::reject("the device itself cannot be deleted");
            };
            let parent = node_at_mut(root, parent_path);
            let parent_class = schema
                .class(&parent.class)
                .expect("instance classes resolve");
            let assoc_def = parent_class
                .association(assoc)
                .expect("instance associations resolve");
            if !assoc_def.multiplicity.is_many() {
                return Applied::reject(format!("{} cannot be deleted", entry.class));
            }
            let kids = parent.children.entry(assoc.clone()).or_default();
            if !assoc_def.multiplicity.admits(kids.len() - 1) {
                return Applied::reject(format!(
                    "{} requires {} elements",
                    assoc, assoc_def.multiplicity
                ));
            }
            let removed = kids.remove(*index);
            Applied::ok(ops::DELETE, removed.to_data(&is_many))
        }
    }
}

enum Target {
    /// Path of `(association, index)` steps from the root.
    Object(Vec<(String, usize)>),
    /// Parent path and the multi-valued association.
    Collection(Vec<(String, usize)>, String),
}

fn select(items: &[ObjectNode], selector: &str) -> Option<usize> {
    items
        .iter()
        .position(|n| n.slot_str("id") == Some(selector))
        .or_else(|| {
            selector
                .parse::<usize>()
                .ok()
                .filter(|&i| i < items.len() && items[i].slot_str("id").is_none())
        })
}

fn locate(
    schema: &DeviceSchema,
    entry: &RouteEntry,
    route: &ResolvedRoute,
    root: &ObjectNode,
) -> Result<Target, String> {
    let mut node = root;
    let mut path = Vec::new();
    let mut selectors = route.selectors.iter();
    let last = entry.associations.len().saturating_sub(1);
    for (k, assoc) in entry.associations.iter().enumerate() {
        let class = schema
            .class(&node.class)
            .ok_or_else(|| format!("unknown class {}", node.class))?;
        let many = class
            .association(assoc)
            .is_some_and(|a| a.multiplicity.is_many());
        let items = node.children_of(assoc);
        let index = if !many {
            if items.is_empty() {
                return Err(format!("{assoc} is not present"));
            }
            0
        } else if k == last {
            match &route.element {
                None => return Ok(Target::Collection(path, assoc.clone())),
                Some(sel) => {
                    select(items, sel).ok_or_else(|| format!("no {assoc} element `{sel}`"))?
                }
            }
        } else {
            let sel = selectors.next().ok_or("missing element selector")?;
            select(items, sel).ok_or_else(|| format!("no {assoc} element `{sel}`"))?
        };
        path.push((assoc.clone(), index));
        node = &items[index];
    }
    Ok(Target::Object(path))
}

fn node_at<'a>(root: &'a ObjectNode, path: &[(String, usize)]) -> &'a ObjectNode {
    path.iter().fold(root, |n, (a, i)| &n.children[a][*i])
}

fn node_at_mut<'a>(root: &'a mut ObjectNode, path: &[(String, usize)]) -> &'a mut ObjectNode {
    path.iter().fold(root, |n, (a, i)| {
        &mut n.children.get_mut(a).expect("located path")[*i]
    })
}

fn violations_json(v: &crate::model::ValidationResult) -> Value {
    json!({ "message": "validation failed", "violations": v.violations })
}

fn update_slots(
    schema: &DeviceSchema,
    class: &ClassDef,
    node: &mut ObjectNode,
    body: &Value,
    partial: &mut dyn FnMut() -> bool,
    is_many: &dyn Fn(&str, &str) -> bool,
) -> Applied {
    let Value::Object(fields) = body else {
        return Applied::reject("body must be a JSON object");
    };
    if let Some(k) = fields.keys().find(|k| class.property(k).is_none()) {
        return Applied::reject(format!("class {} has no property `{k}`", class.name));
    }
    let mut merged = node.slots.clone();
    merged.extend(fields.iter().map(|(k, v)| (k.clone(), v.clone())));
    let result = match validate_slots(schema, class, &merged) {
        Ok(r) => r,
        Err(e) => return Applied::reject(e.to_string()),
    };
    if result.is_ok() {
        node.slots = merged;
        return Applied::ok(ops::SETTINGS_UPDATE, node.to_data(is_many));
    }
    let field_ok = |k: &String, v: &Value| {
        validate_value_in(schema, &class.name, &node.slots, k, v).is_ok_and(|r| r.is_ok())
    };
    let valid = fields.iter().filter(|(k, v)| field_ok(k, v)).count();
    if valid == 0 || valid == fields.len() || !partial() {
        return Applied {
            status: UNAVAILABLE,
            op: ops::REJECT,
            payload: Err(violations_json(&result)),
        };
    }
    let (mut applied, mut ignored) = (Vec::new(), Vec::new());
    let mut slots = node.slots.clone();
    for (k, v) in fields {
        let mut candidate = slots.clone();
        candidate.insert(k.clone(), v.clone());
        if validate_slots(schema, class, &candidate).is_ok_and(|r| r.is_ok()) {
            slots = candidate;
            applied.push(k.clone());
        } else {
            ignored.push(k.clone());
        }
    }
    node.slots = slots;
    let mut data = node.to_data(is_many);
    data["_applied"] = json!(applied);
    data["_ignored"] = json!(ignored);
    Applied::ok(ops::SETTINGS_UPDATE, data)
}

fn fresh_id(taken: &[ObjectNode], stem: &str) -> String {
    (1..)
        .map(|n| format!("{stem}-{n}"))
        .find(|id| !taken.iter().any(|t| t.slot_str("id") == Some(id)))
        .expect("unbounded")
}

fn append(
    schema: &DeviceSchema,
    class: &ClassDef,
    parent: &mut ObjectNode,
    assoc: &str,
    upper: Option<u32>,
    body: &Value,
    is_many: &dyn Fn(&str, &str) -> bool,
) -> Applied {
    let Value::Object(fields) = body else {
        return Applied::reject("body must be a JSON object");
    };
    let kids = parent.children.entry(assoc.to_string()).or_default();
    if upper.is_some_and(|u| kids.len() >= u as usize) {
        return Applied::reject(format!("{assoc} is full"));
    }
    let mut fields: Map<String, Value> = fields.clone();
    if let Some(id_prop) = class.property("id") {
        match fields.get("id").and_then(Value::as_str) {
            Some(id) if kids.iter().any(|k| k.slot_str("id") == Some(id)) => {
                return Applied::reject(format!("{assoc} element `{id}` already exists"));
            }
            Some(_) => {}
            None => {
                let stem = id_prop
                    .default
                    .as_ref()
                    .and_then(Value::as_str)
                    .map(|d| {
                        d.trim_end_matches(|c: char| c.is_ascii_digit())
                            .trim_end_matches('-')
                            .to_string()
                    })
                    .filter(|s| !s.is_empty())
                    .unwrap_or_else(|| class.name.to_lowercase());
                fields.insert("id".to_string(), json!(fresh_id(kids, &stem)));
            }
        }
    }
    let mut violations = Vec::new();
    match build_object(
        schema,
        class,
        &Value::Object(fields),
        assoc,
        &mut violations,
    ) {
        Ok(node) if violations.is_empty() => {
            let data = node.to_data(is_many);
            kids.push(node);
            Applied::ok(ops::PLAN_UPLOAD, data)
        }
        Ok(_) => {
            let r = crate::model::ValidationResult { violations };
            Applied {
                status: UNAVAILABLE,
                op: ops::REJECT,
                payload: Err(violations_json(&r)),
            }
        }
        Err(e) => Applied::reject(e.to_string()),
    }
}
