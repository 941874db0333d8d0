//! Twin and vendor routes derived from the containment structure of a schema.

use serde::{Deserialize, Serialize};

use super::ApiError;
use crate::model::DeviceSchema;

pub const DT_PREFIX: &str = "devices";
pub const DEFAULT_VENDOR_PREFIX: &str = "karie";
/// Placeholder segment standing for one element of a multi-valued
/// association in a route template.
pub const ELEMENT: &str = "{id}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    /// An object, or a collection when the last association is multi-valued.
    Object,
    /// Runtime state of the twin.
    Status,
}

/// One row of the model / twin / device mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    /// Class reached by the route.
    pub class: String,
    /// Association names followed from the root.
    pub associations: Vec<String>,
    pub dt_route: String,
    pub device_route: String,
    pub kind: RouteKind,
    /// The last association is multi-valued: the route names a collection
    /// and `<route>/<id>` one element.
    pub many: bool,
}

impl RouteEntry {
    /// Dotted path such as `Device.settings.alarm`.
    pub fn class_path(&self, root: &str) -> String {
        std::iter::once(root)
            .chain(self.associations.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(".")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiMapping {
    pub serial: String,
    pub vendor_prefix: String,
    pub entries: Vec<RouteEntry>,
}

/// A concrete request path matched against a mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedRoute {
    pub entry: usize,
    /// Element selectors for multi-valued associations along the way, in
    /// order. One extra trailing selector addresses an element of the
    /// target collection.
    pub selectors: Vec<String>,
    pub element: Option<String>,
}

fn segment(association: &str) -> String {
    association.replace('_', "-")
}

/// Routes for every containment association path rooted at the schema's
/// root class, plus the root itself and a status route, with the vendor
/// prefix `karie`.
pub fn generate_routes(schema: &DeviceSchema, serial: &str) -> Result<ApiMapping, ApiError> {
    generate_routes_with(schema, serial, DEFAULT_VENDOR_PREFIX)
}

pub fn generate_routes_with(
    schema: &DeviceSchema,
    serial: &str,
    vendor_prefix: &str,
) -> Result<ApiMapping, ApiError> {
    if serial.is_empty() {
        return Err(ApiError::EmptySerial);
    }
    let root = schema.root();
    let mut entries = vec![
        RouteEntry {
            class: root.name.clone(),
            associations: Vec::new(),
            dt_route: format!("/{DT_PREFIX}/{serial}"),
            device_route: format!("/{vendor_prefix}/{serial}"),
            kind: RouteKind::Object,
            many: false,
        },
        RouteEntry {
            class: root.name.clone(),
            associations: Vec::new(),
            dt_route: format!("/{DT_PREFIX}/{serial}/status"),
            device_route: format!("/{vendor_prefix}/{serial}/status"),
            kind: RouteKind::Status,
            many: false,
        },
    ];
    // Depth-first over containment; a multi-valued association contributes
    // an element placeholder before its children.
    let mut stack = vec![(root.name.clone(), Vec::<String>::new(), String::new())];
    while let Some((class, assocs, suffix)) = stack.pop() {
        let def = schema.class(&class).expect("schema classes resolve");
        for a in def.associations.iter().filter(|a| a.containment).rev() {
            let route = format!("{suffix}/{}", segment(&a.name));
            let mut path = assocs.clone();
            path.push(a.name.clone());
            let many = a.multiplicity.is_many();
            entries.push(RouteEntry {
                class: a.target.clone(),
                associations: path.clone(),
                dt_route: format!("/{DT_PREFIX}/{serial}{route}"),
                device_route: format!("/{vendor_prefix}/{serial}{route}"),
                kind: RouteKind::Object,
                many,
            });
            let child_suffix = if many {
                format!("{route}/{ELEMENT}")
            } else {
                route
            };
            stack.push((a.target.clone(), path, child_suffix));
        }
    }
    entries[2..].sort_by(|a, b| a.dt_route.cmp(&b.dt_route));
    Ok(ApiMapping {
        serial: serial.to_string(),
        vendor_prefix: vendor_prefix.to_string(),
        entries,
    })
}

fn split(path: &str) -> Vec<&str> {
    path.split('?')
        .next()
        .unwrap_or("")
        .split('/')
        .filter(|s| !s.is_empty())
        .collect()
}

impl ApiMapping {
    pub fn entry_for_class(&self, class: &str) -> Option<&RouteEntry> {
        self.entries
            .iter()
            .find(|e| e.class == class && e.kind == RouteKind::Object)
    }

    /// Matches a twin route (`/devices/...`).
    pub fn resolve(&self, path: &str) -> Result<ResolvedRoute, ApiError> {
        self.resolve_by(path, |e| &e.dt_route)
    }

    /// Matches a vendor route (`/karie/...`).
    pub fn resolve_device(&self, path: &str) -> Result<ResolvedRoute, ApiError> {
        self.resolve_by(path, |e| &e.device_route)
    }

    fn resolve_by(
        &self,
        path: &str,
        template: impl Fn(&RouteEntry) -> &String,
    ) -> Result<ResolvedRoute, ApiError> {
        let segs = split(path);
        for (i, e) in self.entries.iter().enumerate() {
            let tpl = split(template(e));
            let extra = segs.len().checked_sub(tpl.len());
            let element_ok = match extra {
                Some(0) => true,
                Some(1) => e.many,
                _ => false,
            };
            if !element_ok {
                continue;
            }
            let mut selectors = Vec::new();
            let matched = tpl.iter().zip(&segs).all(|(t, s)| {
                if *t == ELEMENT {
                    selectors.push(s.to_string());
                    true
                } else {
                    t == s
                }
            });
            if matched {
                let element = (extra == Some(1)).then(|| segs[segs.len() - 1].to_string());
                return Ok(ResolvedRoute {
                    entry: i,
                    selectors,
                    element,
                });
            }
        }
        Err(ApiError::RouteNotFound(path.to_string()))
    }

    /// Vendor route for a twin route, keeping element selectors.
    pub fn to_device_route(&self, path: &str) -> Result<String, ApiError> {
        let r = self.resolve(path)?;
        let e = &self.entries[r.entry];
        let mut sel = r.selectors.iter();
        let mut out: Vec<String> = split(&e.device_route)
            .into_iter()
            .map(|s| {
                if s == ELEMENT {
                    sel.next().cloned().unwrap_or_default()
                } else {
                    s.to_string()
                }
            })
            .collect();
        out.extend(r.element);
        Ok(format!("/{}", out.join("/")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_dispenser_schema, root_only_schema};

    fn routes(m: &ApiMapping) -> Vec<&str> {
        m.entries.iter().map(|e| e.dt_route.as_str()).collect()
    }

    #[test]
    fn builtin_routes() {
        let m = generate_routes(&builtin_dispenser_schema(), "100").unwrap();
        let r = routes(&m);
        assert!(r.contains(&"/devices/100/settings/alarm"));
        let alarm = m.entry_for_class("Alarm").unwrap();
        assert_eq!(alarm.device_route, "/karie/100/settings/alarm");
        assert_eq!(alarm.class_path("Device"), "Device.settings.alarm");
        assert!(r.contains(&"/devices/100/medication-plans"));
        assert!(r.contains(&"/devices/100/status"));
        assert!(r.contains(&"/devices/100/medication-plans/{id}/intake-times/{id}/medicine-lines"));
    }

    #[test]
    fn one_route_per_containment_association() {
        let s = builtin_dispenser_schema();
        let m = generate_routes(&s, "7").unwrap();
        let mut expected = 0;
        let mut stack = vec![s.root().name.clone()];
        while let Some(c) = stack.pop() {
            for a in s
                .class(&c)
                .unwrap()
                .associations
                .iter()
                .filter(|a| a.containment)
            {
                expected += 1;
                stack.push(a.target.clone());
            }
        }
        let object_routes = m
            .entries
            .iter()
            .filter(|e| !e.associations.is_empty())
            .count();
        assert_eq!(object_routes, expected);
        let mut uniq = routes(&m);
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), m.entries.len());
    }

    #[test]
    fn root_only() {
        let m = generate_routes(&root_only_schema(), "5").unwrap();
        assert_eq!(routes(&m), ["/devices/5", "/devices/5/status"]);
    }

    #[test]
    fn empty_serial() {
        assert_eq!(
            generate_routes(&root_only_schema(), ""),
            Err(ApiError::EmptySerial)
        );
    }

    #[test]
    fn resolution() {
        let m = generate_routes(&builtin_dispenser_schema(), "100").unwrap();
        let r = m
            .resolve("/devices/100/medication-plans/plan-1/intake-times/0/medicine-lines")
            .unwrap();
        assert_eq!(r.selectors, ["plan-1", "0"]);
        assert_eq!(r.element, None);
        let r = m.resolve("/devices/100/medication-plans/plan-2").unwrap();
        assert_eq!(m.entries[r.entry].class, "MedicationPlan");
        assert_eq!(r.element.as_deref(), Some("plan-2"));
        assert!(m.resolve("/devices/100/settings/alarm/3").is_err());
        assert!(m.resolve("/devices/101/settings").is_err());
        assert!(matches!(
            m.resolve("/devices/100/nope"),
            Err(ApiError::RouteNotFound(_))
        ));
        let d = m.resolve_device("/karie/100/settings/display").unwrap();
        assert_eq!(m.entries[d.entry].class, "Display");
        assert_eq!(
            m.to_device_route("/devices/100/medication-plans/p/intake-times/1")
                .unwrap(),
            "/karie/100/medication-plans/p/intake-times/1"
        );
    }
}
