//! A small JSON Schema checker covering the keywords used by the shipped schemas.

use serde_json::Value;

pub fn load(name: &str) -> Value {
    let path = format!("{}/schemas/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Validate `doc` against `schema`; returns the list of violations.
pub fn validate(schema: &Value, doc: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    check(schema, schema, doc, "$", &mut errs);
    errs
}

fn type_ok(t: &str, v: &Value) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        other => panic!("unsupported type {other}"),
    }
}

fn resolve<'a>(root: &'a Value, r: &str) -> &'a Value {
    let path = r.strip_prefix("#/").unwrap_or_else(|| panic!("unsupported $ref {r}"));
    path.split('/').fold(root, |v, key| &v[key])
}

/// Patterns of the form `^(a|b)(c|d)...$`.
pub fn pattern_ok(pattern: &str, s: &str) -> bool {
    let body = pattern
        .strip_prefix('^')
        .and_then(|p| p.strip_suffix('$'))
        .unwrap_or_else(|| panic!("unsupported pattern {pattern}"));
    let groups: Vec<Vec<&str>> = body
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(")(")
        .map(|g| g.split('|').collect())
        .collect();
    fn matches(groups: &[Vec<&str>], s: &str) -> bool {
        match groups.split_first() {
            None => s.is_empty(),
            Some((alts, rest)) => alts.iter().any(|a| s.strip_prefix(a).is_some_and(|tail| matches(rest, tail))),
        }
    }
    matches(&groups, s)
}

fn check(root: &Value, schema: &Value, v: &Value, at: &str, errs: &mut Vec<String>) {
    if let Some(r) = schema.get("$ref").and_then(Value::as_str) {
        check(root, resolve(root, r), v, at, errs);
    }
    match schema.get("type") {
        Some(Value::String(t)) if !type_ok(t, v) => errs.push(format!("{at}: expected {t}")),
        Some(Value::Array(ts)) if !ts.iter().any(|t| type_ok(t.as_str().unwrap(), v)) => {
            errs.push(format!("{at}: expected one of {ts:?}"))
        }
        _ => {}
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            errs.push(format!("{at}: {v} not in enum"));
        }
    }
    if let Some(alts) = schema.get("oneOf").and_then(Value::as_array) {
        let ok = alts.iter().filter(|s| validate_at(root, s, v)).count();
        if ok != 1 {
            errs.push(format!("{at}: {ok} oneOf branches match"));
        }
    }
    if let Some(x) = v.as_f64() {
        if schema.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m) {
            errs.push(format!("{at}: {x} below minimum"));
        }
        if schema.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m) {
            errs.push(format!("{at}: {x} above maximum"));
        }
        if schema.get("exclusiveMinimum").and_then(Value::as_f64).is_some_and(|m| x <= m) {
            errs.push(format!("{at}: {x} not above exclusive minimum"));
        }
    }
    if let (Some(p), Some(s)) = (schema.get("pattern").and_then(Value::as_str), v.as_str()) {
        if !pattern_ok(p, s) {
            errs.push(format!("{at}: '{s}' does not match {p}"));
        }
    }
    if let Some(obj) = v.as_object() {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(key.as_str().unwrap()) {
                errs.push(format!("{at}: missing {key}"));
            }
        }
        if let Some(props) = schema.get("properties").and_then(Value::as_object) {
            for (key, sub) in props {
                if let Some(val) = obj.get(key) {
                    check(root, sub, val, &format!("{at}.{key}"), errs);
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, val) in arr.iter().enumerate() {
            check(root, items, val, &format!("{at}[{i}]"), errs);
        }
    }
}

fn validate_at(root: &Value, schema: &Value, v: &Value) -> bool {
    let mut errs = Vec::new();
    check(root, schema, v, "", &mut errs);
    errs.is_empty()
}
