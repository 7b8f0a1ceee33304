//! Flag-value parsing for numeric lists and grids.

/// Parses a value specification: a single number, a comma-separated list,
/// `start:stop:step` (arithmetic, endpoints inclusive), `start:stop:log`
/// (geometric with 25 points), or `start:stop:log:COUNT`.
pub fn parse_values(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err("empty value specification".into());
    }
    if spec.contains(':') {
        return parse_range(spec);
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| format!("invalid number `{s}`: {e}"))
        })
        .collect()
}

/// Parses a specification that must resolve to exactly one value.
pub fn parse_single(spec: &str) -> Result<f64, String> {
    let values = parse_values(spec)?;
    if values.len() != 1 {
        return Err(format!(
            "expected a single value, got {} from `{spec}`",
            values.len()
        ));
    }
    Ok(values[0])
}

fn parse_range(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 && parts.len() != 4 {
        return Err(format!(
            "range must be start:stop:step or start:stop:log[:count], got `{spec}`"
        ));
    }
    let num = |s: &str| -> Result<f64, String> {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("invalid number `{s}`: {e}"))
    };
    let start = num(parts[0])?;
    let stop = num(parts[1])?;
    if !(start.is_finite() && stop.is_finite()) {
        return Err(format!("range endpoints must be finite in `{spec}`"));
    }

    if parts[2].trim() == "log" {
        let count = match parts.get(3) {
            None => 25,
            Some(c) => c
                .trim()
                .parse::<usize>()
                .map_err(|e| format!("invalid point count `{c}`: {e}"))?,
        };
        if count < 2 {
            return Err("geometric range needs at least 2 points".into());
        }
        if !(start > 0.0 && stop > 0.0) {
            return Err(format!(
                "geometric range needs positive endpoints, got `{spec}`"
            ));
        }
        let ratio = stop / start;
        return Ok((0..count)
            .map(|i| start * ratio.powf(i as f64 / (count - 1) as f64))
            .collect());
    }

    if parts.len() == 4 {
        return Err(format!("only log ranges take a point count: `{spec}`"));
    }
    let step = num(parts[2])?;
    if !(step > 0.0) {
        return Err(format!("step must be positive in `{spec}`"));
    }
    if stop < start {
        return Err(format!("stop below start in `{spec}`"));
    }
    let ratio = (stop - start) / step;
    let steps = if (ratio - ratio.round()).abs() < 1e-6 {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };
    Ok((0..=steps).map(|i| start + i as f64 * step).collect())
}
