use anyhow::Result;
use ionheat::reproduce;

use crate::output::Output;

/// Runs the acceptance criteria (all, or those listed) and writes a pass/fail table.
pub fn run(criteria: &[u8], mut out: Output) -> Result<()> {
    let ids: Vec<u8> = if criteria.is_empty() { (1..=10).collect() } else { criteria.to_vec() };
    let mut rows = Vec::new();
    for id in ids {
        let o = reproduce::run(id)?;
        out.line(o.line());
        rows.push(vec![o.id.to_string(), o.title.to_string(), if o.pass { "PASS" } else { "FAIL" }.to_string(), o.detail]);
    }
    let failed = rows.iter().filter(|r| r[2] == "FAIL").count();
    out.line(format!("{} of {} criteria passed", rows.len() - failed, rows.len()));
    // Runtimes stay out of the CSV so identical runs give identical files.
    out.csv("reproduce.csv", &["criterion", "title", "status", "detail"], rows)?;
    out.finish("reproduce")
}
