use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::engine::CampaignRecord;
use super::flows::{RESULTS_FILE, SUMMARY_FILE};
use super::summary::CampaignSummary;
use super::CampaignError;

pub const REPORT_FILE: &str = "report.csv";

pub fn read_records(path: &Path) -> Result<Vec<CampaignRecord>, CampaignError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn f(x: f64) -> String {
    x.to_string()
}

/// Writes `report.csv` into `dir` as a long table `table,row,column,value`
/// from `results.jsonl` (outcome counts per step) and, when present,
/// `summary.json` (cascade, comparison, distributions, countermeasure and
/// BOD tables).
pub fn write_report(dir: &Path) -> Result<PathBuf, CampaignError> {
    let results = dir.join(RESULTS_FILE);
    let summary_path = dir.join(SUMMARY_FILE);
    if !results.exists() && !summary_path.exists() {
        return Err(CampaignError::Config(format!(
            "{} holds neither {RESULTS_FILE} nor {SUMMARY_FILE}",
            dir.display()
        )));
    }
    let mut rows: Vec<[String; 4]> = Vec::new();

    if results.exists() {
        let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for line in BufReader::new(File::open(&results)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: CampaignRecord = serde_json::from_str(&line)?;
            *counts
                .entry((r.step.name().to_string(), r.outcome.name().to_string()))
                .or_default() += 1;
        }
        for ((step, outcome), n) in counts {
            rows.push(["outcomes".into(), step, outcome, n.to_string()]);
        }
    }

    if summary_path.exists() {
        let s = CampaignSummary::load(&summary_path)?;
        for st in &s.steps {
            rows.push(["steps".into(), st.step.name().into(), "trials".into(), st.trials.to_string()]);
        }
        for c in s.cascade.iter().flatten() {
            let row = c.targets.join("+");
            rows.push(["cascade".into(), row.clone(), "hits".into(), c.hits.to_string()]);
            rows.push(["cascade".into(), row, "rate".into(), f(c.rate)]);
        }
        if let Some(c) = &s.comparison {
            for (col, v) in [
                ("exhaustive_trials", c.exhaustive_trials.to_string()),
                ("sweep_trials", c.sweep_trials.to_string()),
                ("integrate_trials", c.integrate_trials.to_string()),
                ("sweeping_trials", c.sweeping_trials.to_string()),
                ("ratio", c.ratio.map(f).unwrap_or_default()),
            ] {
                rows.push(["comparison".into(), s.scenario.clone(), col.into(), v]);
            }
        }
        for d in s.wide_vs_narrow.iter().flatten() {
            for (col, v) in [
                ("none", d.none),
                ("only_second", d.only_second),
                ("only_first", d.only_first),
                ("both", d.both),
                ("invalid", d.invalid),
            ] {
                rows.push(["wide_vs_narrow".into(), d.faults.clone(), col.into(), f(v)]);
            }
        }
        if let Some(c) = &s.countermeasure {
            rows.push(["countermeasure".into(), "baseline".into(), "rate".into(), f(c.baseline_rate)]);
            rows.push(["countermeasure".into(), "delayed".into(), "rate".into(), f(c.delayed_rate)]);
            rows.push([
                "countermeasure".into(),
                "factor".into(),
                "value".into(),
                c.factor.map(f).unwrap_or_default(),
            ]);
        }
        for p in s.bod.iter().flat_map(|b| &b.periods) {
            let row = f(p.period_ns);
            rows.push(["bod".into(), row.clone(), "phases".into(), p.phases.to_string()]);
            rows.push(["bod".into(), row.clone(), "wide_detected".into(), p.wide_detected.to_string()]);
            rows.push(["bod".into(), row, "split_detected".into(), p.split_detected.to_string()]);
        }
    }

    let path = dir.join(REPORT_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["table", "row", "column", "value"])?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_report(dir.path()).is_err());
    }

    #[test]
    fn counts_outcomes_per_step() {
        let dir = tempfile::tempdir().unwrap();
        let lines = [
            r#"{"trial":0,"step":"sweep","combo":[[1,2]],"outcome":"failure","hits":[false],"seed":1}"#,
            r#"{"trial":1,"step":"sweep","combo":[[1,2]],"outcome":{"partial_hit":["A"]},"hits":[true],"seed":2}"#,
            r#"{"trial":2,"step":"sweep","combo":[[1,2]],"outcome":"failure","hits":[false],"seed":3}"#,
        ];
        std::fs::write(dir.path().join(RESULTS_FILE), lines.join("\n") + "\n").unwrap();
        let path = write_report(dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            "table,row,column,value\noutcomes,sweep,failure,2\noutcomes,sweep,partial_hit,1\n"
        );
        assert_eq!(read_records(&dir.path().join(RESULTS_FILE)).unwrap().len(), 3);
    }
}
