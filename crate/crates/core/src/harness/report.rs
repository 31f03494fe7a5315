use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario: String,
    pub controller: String,
    pub seed: u64,
    pub episode: u32,
    pub avg_waiting_s: f64,
}

/// Episode records sorted by scenario, controller, seed and episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn new(mut records: Vec<EvalRecord>) -> Self {
        records.sort_by(|a, b| {
            (&a.scenario, &a.controller, a.seed, a.episode).cmp(&(&b.scenario, &b.controller, b.seed, b.episode))
        });
        Self { records }
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn merge(reports: impl IntoIterator<Item = EvalReport>) -> Self {
        Self::new(reports.into_iter().flat_map(|r| r.records).collect())
    }

    pub fn episode_count(&self, scenario: &str, controller: &str) -> usize {
        self.records.iter().filter(|r| r.scenario == scenario && r.controller == controller).count()
    }

    /// Mean waiting over all episodes and seeds of one cell.
    pub fn mean(&self, scenario: &str, controller: &str) -> Option<f64> {
        let xs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.scenario == scenario && r.controller == controller)
            .map(|r| r.avg_waiting_s)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn scenarios(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.iter().map(|r| r.scenario.clone()).collect();
        v.dedup();
        v
    }

    pub fn controllers(&self) -> Vec<String> {
        let mut v: Vec<String> = self.records.iter().map(|r| r.controller.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Per-scenario means of one controller.
    pub fn means(&self, controller: &str) -> BTreeMap<String, f64> {
        self.scenarios()
            .into_iter()
            .filter_map(|s| self.mean(&s, controller).map(|m| (s, m)))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> csv::Result<Self> {
        let records = csv::Reader::from_reader(reader).deserialize().collect::<Result<Vec<EvalRecord>, _>>()?;
        Ok(Self::new(records))
    }

    /// Scenario × controller table of means.
    pub fn write_table<W: Write>(&self, writer: W) -> csv::Result<()> {
        let controllers = self.controllers();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["scenario".to_string()];
        header.extend(controllers.iter().cloned());
        w.write_record(&header)?;
        for s in self.scenarios() {
            let mut row = vec![s.clone()];
            for c in &controllers {
                row.push(self.mean(&s, c).map(|m| format!("{m:.3}")).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub scenario: String,
    pub value: f64,
    pub reference: f64,
    /// `None` when the reference is zero.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationReport {
    pub rows: Vec<DegradationRow>,
}

impl DegradationReport {
    /// Mean of the defined percentages; `None` if there are none.
    pub fn mean_percent(&self) -> Option<f64> {
        let xs: Vec<f64> = self.rows.iter().filter_map(|r| r.percent).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn percent(&self, scenario: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.scenario == scenario).and_then(|r| r.percent)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "value", "reference", "degradation_pct"])?;
        for r in &self.rows {
            let pct = r.percent.map(|p| format!("{p:.3}")).unwrap_or_else(|| "N/A".into());
            w.write_record([r.scenario.clone(), format!("{:.4}", r.value), format!("{:.4}", r.reference), pct])?;
        }
        let mean = self.mean_percent().map(|p| format!("{p:.3}")).unwrap_or_else(|| "N/A".into());
        w.write_record(["mean", "", "", mean.as_str()])?;
        w.flush()?;
        Ok(())
    }
}

/// Per-scenario increase of `values` over `reference`, in percent.
pub fn degradation(
    values: &BTreeMap<String, f64>,
    reference: &BTreeMap<String, f64>,
) -> Result<DegradationReport, String> {
    if values.keys().ne(reference.keys()) {
        return Err(format!(
            "scenario sets differ: {:?} vs {:?}",
            values.keys().collect::<Vec<_>>(),
            reference.keys().collect::<Vec<_>>()
        ));
    }
    let rows = values
        .iter()
        .map(|(s, &v)| {
            let r = reference[s];
            DegradationRow {
                scenario: s.clone(),
                value: v,
                reference: r,
                percent: (r != 0.0).then(|| 100.0 * (v - r) / r),
            }
        })
        .collect();
    Ok(DegradationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn self_degradation_is_zero() {
        let a = map(&[("INT4", 13.1), ("INT5", 8.0)]);
        let d = degradation(&a, &a).unwrap();
        assert!(d.rows.iter().all(|r| r.percent == Some(0.0)));
        assert_eq!(d.mean_percent(), Some(0.0));
    }

    #[test]
    fn zero_reference_is_not_applicable() {
        let d = degradation(&map(&[("a", 1.0), ("b", 2.0)]), &map(&[("a", 0.0), ("b", 1.0)])).unwrap();
        assert_eq!(d.percent("a"), None);
        assert_eq!(d.mean_percent(), Some(100.0));
        let mut buf = vec![];
        d.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("N/A"));
    }

    #[test]
    fn mismatched_scenarios_are_rejected() {
        assert!(degradation(&map(&[("a", 1.0)]), &map(&[("b", 1.0)])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let r = EvalReport::new(vec![
            EvalRecord { scenario: "INT2-1".into(), controller: "webster".into(), seed: 1, episode: 0, avg_waiting_s: 21.125 },
            EvalRecord { scenario: "INT1-1".into(), controller: "adlight".into(), seed: 0, episode: 4, avg_waiting_s: 0.1 + 0.2 },
        ]);
        let mut buf = vec![];
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scenario,controller,seed,episode,avg_waiting_s\nINT1-1"));
        assert_eq!(EvalReport::read_csv(&buf[..]).unwrap(), r);
    }
}
