//! Leaderboard renderings for `board`.

use evalboard_core::scoring::LeaderboardRow;
use evalboard_core::service::ScoreResponse;

/// Columns in task order, then any others.
fn metric_columns(resp: &ScoreResponse, order: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = order
        .iter()
        .filter(|m| resp.weight_spec.metric_weights.contains_key(*m))
        .cloned()
        .collect();
    for m in resp.weight_spec.metric_weights.keys() {
        if !cols.contains(m) {
            cols.push(m.clone());
        }
    }
    cols
}

fn fmt2(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

fn display_name(r: &LeaderboardRow) -> &str {
    r.name.as_deref().unwrap_or(&r.model_id)
}

/// Fixed-width table, numbers to 2 decimals.
pub fn table(resp: &ScoreResponse, order: &[String]) -> String {
    let metrics = metric_columns(resp, order);
    let mut header = vec!["rank".to_string(), "model".to_string()];
    header.extend(metrics.iter().cloned());
    header.push("dynascore".into());
    header.push("avg_z".into());
    let mut lines = vec![header];
    for r in &resp.rows {
        let mut line = vec![r.rank.to_string(), display_name(r).to_string()];
        line.extend(metrics.iter().map(|m| fmt2(r.raw.get(m).copied())));
        line.push(fmt2(Some(r.dynascore)));
        line.push(fmt2(Some(r.avg_zscore)));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    out.push_str(&format!("task {}  at {}\n", resp.task_id, resp.timestamp.to_rfc3339()));
    let weights = |m: &std::collections::BTreeMap<String, f64>| {
        m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    };
    out.push_str(&format!("metric weights  {}\n", weights(&resp.weight_spec.metric_weights)));
    out.push_str(&format!("dataset weights {}\n\n", weights(&resp.weight_spec.dataset_weights)));
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 1 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// The `rows` field of the score response, serialized exactly as the API
/// does.
pub fn json(resp: &ScoreResponse) -> String {
    serde_json::to_string(&resp.rows).expect("rows serialize")
}

pub fn csv(resp: &ScoreResponse, order: &[String]) -> Result<String, csv::Error> {
    let metrics = metric_columns(resp, order);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "model_id".into(), "name".into()];
    header.extend(metrics.iter().cloned());
    header.push("dynascore".into());
    header.push("avg_zscore".into());
    w.write_record(&header)?;
    for r in &resp.rows {
        let mut rec = vec![r.rank.to_string(), r.model_id.clone(), display_name(r).to_string()];
        rec.extend(metrics.iter().map(|m| fmt2(r.raw.get(m).copied())));
        rec.push(fmt2(Some(r.dynascore)));
        rec.push(fmt2(Some(r.avg_zscore)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}
