//! Balanced unit × period panel: loading, validation and first differences.
//!
//! Every matrix is stored unit-major (`data[unit][period]`). Periods are
//! integer years and strictly increasing. Outcomes and time-varying controls
//! may contain missing cells (`None`), which are kept distinct from zero;
//! flows must be complete.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One unit's values over the period grid; `None` marks a missing cell.
pub type Series = Vec<Option<f64>>;

/// Column mapping for a long-format panel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSchema {
    pub unit: String,
    pub period: String,
    /// Population column; the value in the baseline period is the exposure
    /// denominator.
    pub population: String,
    /// Period whose population is used as baseline. Defaults to the first
    /// period of the panel.
    #[serde(default)]
    pub baseline_period: Option<i64>,
    #[serde(default)]
    pub outcomes: Vec<String>,
    #[serde(default)]
    pub flows: Vec<String>,
    /// Time-varying covariates (residualization controls).
    #[serde(default)]
    pub controls: Vec<String>,
    /// Unit-level pre-period features, read from the baseline-period row.
    #[serde(default)]
    pub unit_features: Vec<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Units whose baseline population is below this are dropped at load time.
    #[serde(default)]
    pub min_baseline_population: Option<f64>,
}

fn default_delimiter() -> char {
    ','
}

impl PanelSchema {
    pub fn new(unit: &str, period: &str, population: &str) -> Self {
        PanelSchema {
            unit: unit.to_string(),
            period: period.to_string(),
            population: population.to_string(),
            baseline_period: None,
            outcomes: Vec::new(),
            flows: Vec::new(),
            controls: Vec::new(),
            unit_features: Vec::new(),
            delimiter: ',',
            min_baseline_population: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.outcomes.is_empty() {
            return Err(Error::Config("schema must name at least one outcome".into()));
        }
        if self.flows.is_empty() {
            return Err(Error::Config("schema must name at least one flow".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(format!("delimiter {:?} is not ASCII", self.delimiter)));
        }
        let mut seen = std::collections::HashSet::new();
        for name in [&self.unit, &self.period, &self.population]
            .into_iter()
            .chain(&self.outcomes)
            .chain(&self.flows)
            .chain(&self.controls)
            .chain(&self.unit_features)
        {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column `{name}` is mapped twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    periods: Vec<i64>,
    baseline_period: i64,
    baseline_population: Vec<f64>,
    outcomes: BTreeMap<String, Vec<Series>>,
    flows: BTreeMap<String, Vec<Vec<f64>>>,
    controls: BTreeMap<String, Vec<Series>>,
    unit_features: BTreeMap<String, Vec<f64>>,
    dropped_small_units: Vec<String>,
}

impl PanelDataset {
    /// Starts a panel with no variables. Periods must be strictly increasing
    /// and every baseline population strictly positive.
    pub fn new(
        units: Vec<String>,
        periods: Vec<i64>,
        baseline_period: i64,
        baseline_population: Vec<f64>,
    ) -> Result<Self> {
        if units.is_empty() || periods.is_empty() {
            return Err(Error::Domain("panel needs at least one unit and one period".into()));
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("periods must be strictly increasing".into()));
        }
        if !periods.contains(&baseline_period) {
            return Err(Error::Domain(format!(
                "baseline period {baseline_period} is not in the panel"
            )));
        }
        if baseline_population.len() != units.len() {
            return Err(Error::Domain("one baseline population per unit required".into()));
        }
        for (u, &p) in units.iter().zip(&baseline_population) {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Domain(format!(
                    "baseline population of unit `{u}` must be positive, got {p}"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for u in &units {
            if !seen.insert(u.as_str()) {
                return Err(Error::Duplicate { unit: u.clone(), period: baseline_period });
            }
        }
        Ok(PanelDataset {
            units,
            periods,
            baseline_period,
            baseline_population,
            outcomes: BTreeMap::new(),
            flows: BTreeMap::new(),
            controls: BTreeMap::new(),
            unit_features: BTreeMap::new(),
            dropped_small_units: Vec::new(),
        })
    }

    fn check_shape<T>(&self, name: &str, data: &[Vec<T>]) -> Result<()> {
        if data.len() != self.units.len() || data.iter().any(|r| r.len() != self.periods.len()) {
            return Err(Error::Domain(format!(
                "variable `{name}` must be {} units × {} periods",
                self.units.len(),
                self.periods.len()
            )));
        }
        Ok(())
    }

    pub fn with_outcome(mut self, name: &str, data: Vec<Series>) -> Result<Self> {
        self.check_shape(name, &data)?;
        self.outcomes.insert(name.to_string(), data);
        Ok(self)
    }

    pub fn with_flow(mut self, name: &str, data: Vec<Vec<f64>>) -> Result<Self> {
        self.check_shape(name, &data)?;
        self.flows.insert(name.to_string(), data);
        Ok(self)
    }

    pub fn with_control(mut self, name: &str, data: Vec<Series>) -> Result<Self> {
        self.check_shape(name, &data)?;
        self.controls.insert(name.to_string(), data);
        Ok(self)
    }

    pub fn with_unit_feature(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.units.len() {
            return Err(Error::Domain(format!("feature `{name}` needs one value per unit")));
        }
        self.unit_features.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn baseline_period(&self) -> i64 {
        self.baseline_period
    }

    pub fn baseline_population(&self) -> &[f64] {
        &self.baseline_population
    }

    /// Units removed by the minimum-population filter at load time.
    pub fn dropped_small_units(&self) -> &[String] {
        &self.dropped_small_units
    }

    pub fn outcome(&self, name: &str) -> Result<&[Series]> {
        self.outcomes
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn flow(&self, name: &str) -> Result<&[Vec<f64>]> {
        self.flows
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn control(&self, name: &str) -> Result<&[Series]> {
        self.controls
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn unit_feature(&self, name: &str) -> Result<&[f64]> {
        self.unit_features
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Time-varying series by name: outcomes first, then controls, then
    /// flows (as complete series).
    pub fn series(&self, name: &str) -> Result<Vec<Series>> {
        if let Some(v) = self.outcomes.get(name).or_else(|| self.controls.get(name)) {
            return Ok(v.clone());
        }
        if let Some(v) = self.flows.get(name) {
            return Ok(v.iter().map(|r| r.iter().map(|&x| Some(x)).collect()).collect());
        }
        Err(Error::UnknownColumn(name.to_string()))
    }

    pub fn outcome_names(&self) -> impl Iterator<Item = &str> {
        self.outcomes.keys().map(String::as_str)
    }

    pub fn flow_names(&self) -> impl Iterator<Item = &str> {
        self.flows.keys().map(String::as_str)
    }

    pub fn control_names(&self) -> impl Iterator<Item = &str> {
        self.controls.keys().map(String::as_str)
    }

    pub fn unit_feature_names(&self) -> impl Iterator<Item = &str> {
        self.unit_features.keys().map(String::as_str)
    }

    /// Replaces an outcome by its natural log. Zero cells become missing;
    /// returns how many. Negative values are rejected.
    pub fn log_transform_outcome(&mut self, name: &str) -> Result<usize> {
        let units = &self.units;
        let data = self
            .outcomes
            .get_mut(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        let mut zeros = 0;
        for (u, row) in data.iter_mut().enumerate() {
            for cell in row.iter_mut() {
                match *cell {
                    Some(v) if v > 0.0 => *cell = Some(v.ln()),
                    Some(0.0) => {
                        zeros += 1;
                        *cell = None;
                    }
                    Some(v) => {
                        return Err(Error::Domain(format!(
                            "cannot log-transform negative value {v} of `{name}` for unit `{}`",
                            units[u]
                        )))
                    }
                    None => {}
                }
            }
        }
        if zeros > 0 {
            warn!("{zeros} zero value(s) of `{name}` set to missing by the log transform");
        }
        Ok(zeros)
    }

    /// Keeps only the listed unit indices, in the given order.
    pub fn select_units(&self, keep: &[usize]) -> Result<PanelDataset> {
        let pick_rows = |m: &BTreeMap<String, Vec<Series>>| {
            m.iter()
                .map(|(k, v)| (k.clone(), keep.iter().map(|&i| v[i].clone()).collect()))
                .collect::<BTreeMap<_, _>>()
        };
        let mut out = PanelDataset::new(
            keep.iter().map(|&i| self.units[i].clone()).collect(),
            self.periods.clone(),
            self.baseline_period,
            keep.iter().map(|&i| self.baseline_population[i]).collect(),
        )?;
        out.outcomes = pick_rows(&self.outcomes);
        out.controls = pick_rows(&self.controls);
        out.flows = self
            .flows
            .iter()
            .map(|(k, v)| (k.clone(), keep.iter().map(|&i| v[i].clone()).collect()))
            .collect();
        out.unit_features = self
            .unit_features
            .iter()
            .map(|(k, v)| (k.clone(), keep.iter().map(|&i| v[i]).collect()))
            .collect();
        out.dropped_small_units = self.dropped_small_units.clone();
        Ok(out)
    }

    /// Schema matching the layout produced by [`PanelDataset::write_csv`].
    pub fn schema(&self) -> PanelSchema {
        PanelSchema {
            unit: "unit".into(),
            period: "period".into(),
            population: "population".into(),
            baseline_period: Some(self.baseline_period),
            outcomes: self.outcomes.keys().cloned().collect(),
            flows: self.flows.keys().cloned().collect(),
            controls: self.controls.keys().cloned().collect(),
            unit_features: self.unit_features.keys().cloned().collect(),
            delimiter: ',',
            min_baseline_population: None,
        }
    }

    /// Writes the panel in long format, one row per (unit, period). Numbers
    /// use the shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let schema = self.schema();
        let mut header = vec![schema.unit, schema.period, schema.population];
        header.extend(schema.outcomes);
        header.extend(schema.flows);
        header.extend(schema.controls);
        header.extend(schema.unit_features);
        w.write_record(&header)?;
        let fmt = |v: &Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for (u, unit) in self.units.iter().enumerate() {
            for (t, period) in self.periods.iter().enumerate() {
                let mut rec = vec![
                    unit.clone(),
                    period.to_string(),
                    self.baseline_population[u].to_string(),
                ];
                rec.extend(self.outcomes.values().map(|m| fmt(&m[u][t])));
                rec.extend(self.flows.values().map(|m| m[u][t].to_string()));
                rec.extend(self.controls.values().map(|m| fmt(&m[u][t])));
                rec.extend(self.unit_features.values().map(|v| v[u].to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>> {
    let s = raw.trim();
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

struct RawRow {
    population: Option<f64>,
    values: Vec<Option<f64>>,
}

/// Reads a long-format delimited panel (header row required).
pub fn load_panel<R: Read>(source: R, schema: &PanelSchema) -> Result<PanelDataset> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let unit_col = col(&schema.unit)?;
    let period_col = col(&schema.period)?;
    let pop_col = col(&schema.population)?;
    // outcomes, flows, controls, unit features: in that order
    let value_names: Vec<&String> = schema
        .outcomes
        .iter()
        .chain(&schema.flows)
        .chain(&schema.controls)
        .chain(&schema.unit_features)
        .collect();
    let value_cols = value_names.iter().map(|n| col(n)).collect::<Result<Vec<_>>>()?;

    let mut unit_order: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(usize, i64), RawRow> = HashMap::new();
    let mut periods = std::collections::BTreeSet::new();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = i + 2;
        let unit = record.get(unit_col).unwrap_or("").trim().to_string();
        if unit.is_empty() {
            return Err(Error::Parse { row, column: schema.unit.clone(), value: unit });
        }
        let period_raw = record.get(period_col).unwrap_or("");
        let period: i64 = period_raw.trim().parse().map_err(|_| Error::Parse {
            row,
            column: schema.period.clone(),
            value: period_raw.to_string(),
        })?;
        let population = parse_cell(record.get(pop_col).unwrap_or(""), row, &schema.population)?;
        let values = value_cols
            .iter()
            .zip(&value_names)
            .map(|(&c, name)| parse_cell(record.get(c).unwrap_or(""), row, name))
            .collect::<Result<Vec<_>>>()?;
        let n = unit_index.len();
        let u = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_order.push(unit.clone());
            n
        });
        periods.insert(period);
        if cells.insert((u, period), RawRow { population, values }).is_some() {
            return Err(Error::Duplicate { unit, period });
        }
    }
    if cells.is_empty() {
        return Err(Error::Domain("panel file has no data rows".into()));
    }

    let periods: Vec<i64> = periods.into_iter().collect();
    let mut missing = Vec::new();
    for (u, unit) in unit_order.iter().enumerate() {
        for &p in &periods {
            if !cells.contains_key(&(u, p)) {
                missing.push((unit.clone(), p));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Unbalanced { missing });
    }

    let baseline_period = schema.baseline_period.unwrap_or(periods[0]);
    if !periods.contains(&baseline_period) {
        return Err(Error::Config(format!("baseline period {baseline_period} is not in the panel")));
    }
    let n_out = schema.outcomes.len();
    let n_flow = schema.flows.len();
    let n_ctrl = schema.controls.len();

    let mut baseline_population = Vec::with_capacity(unit_order.len());
    for (u, unit) in unit_order.iter().enumerate() {
        match cells[&(u, baseline_period)].population {
            Some(p) if p > 0.0 => baseline_population.push(p),
            other => {
                return Err(Error::Domain(format!(
                    "baseline population of unit `{unit}` must be positive, got {}",
                    other.map_or("NA".to_string(), |p| p.to_string())
                )))
            }
        }
    }

    let matrix = |k: usize| -> Vec<Series> {
        (0..unit_order.len())
            .map(|u| periods.iter().map(|&p| cells[&(u, p)].values[k]).collect())
            .collect()
    };

    let mut panel = PanelDataset::new(
        unit_order.clone(),
        periods.clone(),
        baseline_period,
        baseline_population,
    )?;
    for (k, name) in schema.outcomes.iter().enumerate() {
        panel.outcomes.insert(name.clone(), matrix(k));
    }
    for (j, name) in schema.flows.iter().enumerate() {
        let m = matrix(n_out + j);
        let mut flows = Vec::with_capacity(m.len());
        for (u, row) in m.into_iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (t, v) in row.into_iter().enumerate() {
                r.push(v.ok_or_else(|| {
                    Error::Domain(format!(
                        "flow `{name}` is missing for unit `{}` in period {}",
                        unit_order[u], periods[t]
                    ))
                })?);
            }
            flows.push(r);
        }
        panel.flows.insert(name.clone(), flows);
    }
    for (j, name) in schema.controls.iter().enumerate() {
        panel.controls.insert(name.clone(), matrix(n_out + n_flow + j));
    }
    let base_t = periods.iter().position(|&p| p == baseline_period).expect("checked above");
    for (j, name) in schema.unit_features.iter().enumerate() {
        let m = matrix(n_out + n_flow + n_ctrl + j);
        let mut values = Vec::with_capacity(m.len());
        for (u, row) in m.iter().enumerate() {
            values.push(row[base_t].ok_or_else(|| {
                Error::Domain(format!(
                    "unit feature `{name}` is missing for unit `{}` in the baseline period",
                    unit_order[u]
                ))
            })?);
        }
        panel.unit_features.insert(name.clone(), values);
    }

    if let Some(threshold) = schema.min_baseline_population {
        let keep: Vec<usize> = (0..panel.n_units())
            .filter(|&u| panel.baseline_population[u] >= threshold)
            .collect();
        if keep.is_empty() {
            return Err(Error::Domain(format!(
                "no unit has a baseline population of at least {threshold}"
            )));
        }
        let dropped: Vec<String> = (0..panel.n_units())
            .filter(|&u| panel.baseline_population[u] < threshold)
            .map(|u| panel.units[u].clone())
            .collect();
        if !dropped.is_empty() {
            warn!("{} unit(s) dropped below the minimum baseline population", dropped.len());
            panel = panel.select_units(&keep)?;
            panel.dropped_small_units = dropped;
        }
    }
    Ok(panel)
}

/// First differences `Y_t − Y_{t−1}` of one variable.
///
/// Values are indexed by period position; position 0 is always missing
/// because no difference exists for the first period.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    pub periods: Vec<i64>,
    pub values: Vec<Series>,
}

impl DiffSeries {
    pub fn from_levels(periods: &[i64], levels: &[Series]) -> Self {
        DiffSeries { periods: periods.to_vec(), values: levels.iter().map(|s| difference(s)).collect() }
    }

    /// Differences of one unit from the second period onward.
    pub fn defined(&self, unit: usize) -> &[Option<f64>] {
        &self.values[unit][1..]
    }

    pub fn get(&self, unit: usize, t: usize) -> Option<f64> {
        self.values[unit][t]
    }

    pub fn n_units(&self) -> usize {
        self.values.len()
    }
}

/// Differences of one series; the result has the same length with a
/// missing first entry. A difference is missing if either operand is.
pub fn difference(series: &[Option<f64>]) -> Series {
    let mut out = Vec::with_capacity(series.len());
    if !series.is_empty() {
        out.push(None);
    }
    out.extend(series.windows(2).map(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    }));
    out
}

pub fn first_difference(panel: &PanelDataset, outcome: &str) -> Result<DiffSeries> {
    let levels = panel.outcome(outcome)?;
    Ok(DiffSeries::from_levels(panel.periods(), levels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> PanelSchema {
        let mut s = PanelSchema::new("unit", "year", "pop");
        s.outcomes = vec!["y".into()];
        s.flows = vec!["intl".into()];
        s
    }

    const MINIMAL: &str = "unit,year,pop,y,intl\n\
        a,2010,1000,1.0,12\n\
        a,2011,1000,4.0,-5\n\
        a,2012,1000,9.0,8\n\
        b,2010,500,2.0,0\n\
        b,2011,500,NA,0\n\
        b,2012,500,3.5,1\n";

    #[test]
    fn minimal_balanced_panel_loads() {
        let p = load_panel(MINIMAL.as_bytes(), &schema()).unwrap();
        assert_eq!(p.n_units() * p.n_periods(), 6);
        assert_eq!(p.periods(), &[2010, 2011, 2012]);
        assert_eq!(p.baseline_population(), &[1000.0, 500.0]);
        assert_eq!(p.outcome("y").unwrap()[1][1], None);
        assert_eq!(p.flow("intl").unwrap()[0], vec![12.0, -5.0, 8.0]);
    }

    #[test]
    fn deleted_row_is_named() {
        let text: String = MINIMAL.lines().filter(|l| !l.starts_with("b,2011")).map(|l| format!("{l}\n")).collect();
        match load_panel(text.as_bytes(), &schema()) {
            Err(Error::Unbalanced { missing }) => assert_eq!(missing, vec![("b".to_string(), 2011)]),
            other => panic!("expected unbalanced error, got {other:?}"),
        }
    }

    #[test]
    fn duplicated_row_is_rejected() {
        let text = format!("{MINIMAL}a,2011,1000,4.0,-5\n");
        match load_panel(text.as_bytes(), &schema()) {
            Err(Error::Duplicate { unit, period }) => {
                assert_eq!(unit, "a");
                assert_eq!(period, 2011);
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let text = MINIMAL.replace("a,2011,1000,4.0", "a,2011,1000,four");
        match load_panel(text.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "y");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_population_is_domain_error() {
        let text = MINIMAL.replace("b,2010,500", "b,2010,0");
        assert!(matches!(load_panel(text.as_bytes(), &schema()), Err(Error::Domain(_))));
    }

    #[test]
    fn missing_column_is_named() {
        let mut s = schema();
        s.outcomes.push("births".into());
        match load_panel(MINIMAL.as_bytes(), &s) {
            Err(Error::UnknownColumn(c)) => assert_eq!(c, "births"),
            other => panic!("expected unknown column, got {other:?}"),
        }
    }

    #[test]
    fn small_units_filter() {
        let mut s = schema();
        s.min_baseline_population = Some(600.0);
        let p = load_panel(MINIMAL.as_bytes(), &s).unwrap();
        assert_eq!(p.units(), &["a".to_string()]);
        assert_eq!(p.dropped_small_units(), &["b".to_string()]);
    }

    #[test]
    fn semicolon_delimiter() {
        let mut s = schema();
        s.delimiter = ';';
        let p = load_panel(MINIMAL.replace(',', ";").as_bytes(), &s).unwrap();
        assert_eq!(p.n_units(), 2);
    }

    #[test]
    fn first_difference_examples() {
        assert_eq!(difference(&[Some(5.0), Some(5.0), Some(5.0)])[1..], [Some(0.0), Some(0.0)]);
        assert_eq!(difference(&[Some(1.0), Some(4.0), Some(9.0)])[1..], [Some(3.0), Some(5.0)]);
        assert_eq!(difference(&[Some(1.0), None, Some(9.0)])[1..], [None, None]);

        let p = load_panel(MINIMAL.as_bytes(), &schema()).unwrap();
        let d = first_difference(&p, "y").unwrap();
        assert_eq!(d.defined(0), &[Some(3.0), Some(5.0)]);
        assert!(matches!(first_difference(&p, "nope"), Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn log_transform_maps_zero_to_missing() {
        let mut p = load_panel(MINIMAL.replace("b,2012,500,3.5", "b,2012,500,0").as_bytes(), &schema()).unwrap();
        assert_eq!(p.log_transform_outcome("y").unwrap(), 1);
        let y = p.outcome("y").unwrap();
        assert_eq!(y[0][0], Some(0.0));
        assert_eq!(y[1][2], None);
    }
}
