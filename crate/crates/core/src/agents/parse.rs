use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{AllocationRatio, SHARE_SUM_TOLERANCE};

/// Largest distance of the share sum from 1 that is still renormalized.
pub const SUM_REPAIR_TOLERANCE: f64 = 0.02;

/// Extracts the first JSON object carrying a `"shares"` key from free text
/// and validates it as an allocation for `slice_count` slices.
pub fn parse_allocation_response(text: &str, slice_count: usize) -> Result<AllocationRatio> {
    let fail = |reason: &str| Error::Parse {
        reason: reason.to_string(),
        text: text.to_string(),
    };
    let shares = first_shares_object(text).ok_or_else(|| fail("no JSON object with \"shares\""))?;
    let list = shares
        .as_array()
        .ok_or_else(|| fail("\"shares\" is not an array"))?;
    if list.len() != slice_count {
        return Err(fail(&format!(
            "expected {slice_count} shares, got {}",
            list.len()
        )));
    }
    let mut values = Vec::with_capacity(list.len());
    for v in list {
        let x = v.as_f64().ok_or_else(|| fail("share is not a number"))?;
        if !(0.0..=1.0).contains(&x) {
            return Err(fail(&format!("share {x} outside [0,1]")));
        }
        values.push(x);
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SUM_REPAIR_TOLERANCE {
        return Err(fail(&format!("shares sum to {sum}")));
    }
    if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
        if sum <= 0.0 {
            return Err(fail("shares sum to zero"));
        }
        values.iter_mut().for_each(|v| *v /= sum);
        let rest: f64 = values[1..].iter().sum();
        values[0] = (1.0 - rest).max(0.0);
    }
    AllocationRatio::new(values).map_err(|e| fail(&e.to_string()))
}

fn first_shares_object(text: &str) -> Option<Value> {
    text.char_indices()
        .filter(|&(_, c)| c == '{')
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(mut map))) => map.remove("shares"),
                _ => None,
            }
        })
}
