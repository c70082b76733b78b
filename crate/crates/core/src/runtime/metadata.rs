use serde_json::{Map, Value};

/// Merges per-rank metadata documents in rank order.
///
/// Top-level keys seen for the first time are kept. A repeated key whose value
/// is an array in both places is concatenated; any other repeat is dropped, so
/// the first rank wins. Non-object documents contribute nothing.
pub fn merge_metadata(docs: &[Value]) -> Value {
    let mut merged = Map::new();
    for doc in docs {
        let Some(obj) = doc.as_object() else {
            continue;
        };
        for (key, value) in obj {
            match merged.get_mut(key) {
                None => {
                    merged.insert(key.clone(), value.clone());
                }
                Some(Value::Array(existing)) => {
                    if let Value::Array(more) = value {
                        existing.extend(more.iter().cloned());
                    }
                }
                Some(_) => {}
            }
        }
    }
    Value::Object(merged)
}
