//! Schema-driven ingestion of mixed continuous/ordinal data with censoring
//! and missingness, column standardization, and the per-cell latent-variable
//! intervals that the sampler conditions on.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Ordinal,
}

/// Per-column description: kind, censoring bounds, and (for ordinals) the
/// ordered level values. Cut-points between ordinal levels sit at the level
/// values themselves: level d_l owns the latent interval (d_{l-1}, d_l].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default = "neg_inf", deserialize_with = "de_lower", skip_serializing_if = "is_infinite")]
    pub lower: f64,
    #[serde(default = "pos_inf", deserialize_with = "de_upper", skip_serializing_if = "is_infinite")]
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<f64>,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}

fn pos_inf() -> f64 {
    f64::INFINITY
}

fn is_infinite(v: &f64) -> bool {
    v.is_infinite()
}

fn de_lower<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

fn de_upper<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl VariableSchema {
    pub fn continuous(name: &str) -> Self {
        VariableSchema {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            levels: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            VariableKind::Ordinal => {
                if self.levels.len() < 2 {
                    return Err(Error::Schema(format!(
                        "column {}: ordinal needs at least 2 levels",
                        self.name
                    )));
                }
                if !self.levels.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::Schema(format!(
                        "column {}: ordinal levels must be strictly increasing",
                        self.name
                    )));
                }
            }
            VariableKind::Continuous => {
                if !(self.lower < self.upper) {
                    return Err(Error::Schema(format!(
                        "column {}: lower bound must be below upper bound",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Upper cut-point of level index `l` (0-based); the last level is open.
    fn cut_above(&self, l: usize) -> f64 {
        if l + 1 == self.levels.len() {
            f64::INFINITY
        } else {
            self.levels[l]
        }
    }

    fn cut_below(&self, l: usize) -> f64 {
        if l == 0 {
            f64::NEG_INFINITY
        } else {
            self.levels[l - 1]
        }
    }
}

/// Closed interval of latent values compatible with one data cell; fully
/// observed interior continuous cells degenerate to a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentInterval {
    pub lo: f64,
    pub hi: f64,
    pub point: Option<f64>,
}

impl LatentInterval {
    pub fn point(v: f64) -> Self {
        LatentInterval { lo: v, hi: v, point: Some(v) }
    }

    pub fn range(lo: f64, hi: f64) -> Self {
        debug_assert!(lo < hi);
        LatentInterval { lo, hi, point: None }
    }

    pub fn contains(&self, z: f64) -> bool {
        match self.point {
            Some(v) => z == v,
            None => z >= self.lo && z <= self.hi,
        }
    }

    pub fn is_free(&self) -> bool {
        self.point.is_none()
    }
}

/// Immutable data container: raw matrix, observation mask, schema, and the
/// affine maps applied by standardization (for inverting results).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub schema: Vec<VariableSchema>,
    /// per-column (mean, sd) recorded by `standardize`; empty before.
    pub standardizer: Vec<(f64, f64)>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn new(y: DMatrix<f64>, observed: DMatrix<bool>, schema: Vec<VariableSchema>) -> Result<Self> {
        if y.ncols() != schema.len() || observed.shape() != y.shape() {
            return Err(Error::Shape("data/mask/schema dimensions disagree".into()));
        }
        for s in &schema {
            s.validate()?;
        }
        let ds = Dataset { y, observed, schema, standardizer: Vec::new() };
        ds.validate_cells()?;
        Ok(ds)
    }

    fn validate_cells(&self) -> Result<()> {
        for j in 0..self.p() {
            let s = &self.schema[j];
            for i in 0..self.n() {
                if !self.observed[(i, j)] {
                    continue;
                }
                let v = self.y[(i, j)];
                match s.kind {
                    VariableKind::Ordinal => {
                        if !s.levels.iter().any(|&d| d == v) {
                            return Err(Error::Validation {
                                row: i,
                                column: s.name.clone(),
                                message: format!("ordinal value {v} is not a schema level"),
                            });
                        }
                    }
                    VariableKind::Continuous => {
                        if v < s.lower || v > s.upper {
                            return Err(Error::Validation {
                                row: i,
                                column: s.name.clone(),
                                message: format!(
                                    "value {v} outside bounds [{}, {}]",
                                    s.lower, s.upper
                                ),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Drop all schema structure: every column becomes unbounded continuous
    /// and ordinal codes are treated as raw reals (the "cont" ablation).
    pub fn to_continuous(&self) -> Dataset {
        let schema = self
            .schema
            .iter()
            .map(|s| VariableSchema::continuous(&s.name))
            .collect();
        Dataset {
            y: self.y.clone(),
            observed: self.observed.clone(),
            schema,
            standardizer: self.standardizer.clone(),
        }
    }

    /// Latent-value constraint for cell (i, j): missing cells are free,
    /// ordinal level d_l maps to (d_{l-1}, d_l], boundary-valued continuous
    /// cells become one-sided, interior continuous cells are points.
    pub fn latent_interval(&self, i: usize, j: usize) -> LatentInterval {
        if !self.observed[(i, j)] {
            return LatentInterval::range(f64::NEG_INFINITY, f64::INFINITY);
        }
        let s = &self.schema[j];
        let v = self.y[(i, j)];
        match s.kind {
            VariableKind::Ordinal => {
                let l = s
                    .levels
                    .iter()
                    .position(|&d| d == v)
                    .expect("validated ordinal cell");
                LatentInterval::range(s.cut_below(l), s.cut_above(l))
            }
            VariableKind::Continuous => {
                if v == s.lower {
                    LatentInterval::range(f64::NEG_INFINITY, s.lower)
                } else if v == s.upper {
                    LatentInterval::range(s.upper, f64::INFINITY)
                } else {
                    LatentInterval::point(v)
                }
            }
        }
    }

    pub fn has_latent_cells(&self) -> bool {
        (0..self.n()).any(|i| (0..self.p()).any(|j| self.latent_interval(i, j).is_free()))
    }
}

/// Load a CSV (header row, "NA"/empty = missing) against a JSON schema file.
pub fn load_dataset(data_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let schema_text = std::fs::read_to_string(schema_path)?;
    let schema: Vec<VariableSchema> = serde_json::from_str(&schema_text)?;
    let mut rdr = csv::Reader::from_path(data_path)?;
    let headers = rdr.headers()?.clone();
    // map schema columns onto the CSV columns by name
    let mut col_index = Vec::with_capacity(schema.len());
    for s in &schema {
        match headers.iter().position(|h| h == s.name) {
            Some(idx) => col_index.push(idx),
            None => return Err(Error::Schema(format!("column {} missing from CSV", s.name))),
        }
    }
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut mask: Vec<Vec<bool>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(schema.len());
        let mut mrow = Vec::with_capacity(schema.len());
        for (s, &idx) in schema.iter().zip(&col_index) {
            let cell = rec.get(idx).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                row.push(f64::NAN);
                mrow.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Validation {
                    row: i,
                    column: s.name.clone(),
                    message: format!("unparsable cell {cell:?}"),
                })?;
                row.push(v);
                mrow.push(true);
            }
        }
        values.push(row);
        mask.push(mrow);
    }
    let n = values.len();
    let p = schema.len();
    let y = DMatrix::from_fn(n, p, |i, j| values[i][j]);
    let observed = DMatrix::from_fn(n, p, |i, j| mask[i][j]);
    Dataset::new(y, observed, schema)
}

/// Shift/scale every column to observed mean 0 and sd 1, applying the same
/// affine map to schema bounds and ordinal levels. Errors on columns with
/// fewer than two distinct observed values.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let n = ds.n();
    let p = ds.p();
    let mut y = ds.y.clone();
    let mut schema = ds.schema.clone();
    let mut standardizer = Vec::with_capacity(p);
    for j in 0..p {
        let obs: Vec<f64> = (0..n).filter(|&i| ds.observed[(i, j)]).map(|i| ds.y[(i, j)]).collect();
        let mean = obs.iter().sum::<f64>() / obs.len().max(1) as f64;
        let var = obs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (obs.len().saturating_sub(1)).max(1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Samples(format!(
                "column {} has fewer than 2 distinct observed values",
                ds.schema[j].name
            )));
        }
        for i in 0..n {
            if ds.observed[(i, j)] {
                y[(i, j)] = (ds.y[(i, j)] - mean) / sd;
            }
        }
        let s = &mut schema[j];
        if s.lower.is_finite() {
            s.lower = (s.lower - mean) / sd;
        }
        if s.upper.is_finite() {
            s.upper = (s.upper - mean) / sd;
        }
        for d in &mut s.levels {
            *d = (*d - mean) / sd;
        }
        // compose with any standardization already applied so inversion
        // always recovers the original raw scale
        let prior = ds.standardizer.get(j).copied().unwrap_or((0.0, 1.0));
        standardizer.push((prior.0 + mean * prior.1, sd * prior.1));
    }
    Ok(Dataset { y, observed: ds.observed.clone(), schema, standardizer })
}

/// Map a standardized column value back to the raw scale.
pub fn unstandardize_value(ds: &Dataset, j: usize, v: f64) -> f64 {
    match ds.standardizer.get(j) {
        Some(&(mean, sd)) => v * sd + mean,
        None => v,
    }
}

/// Initial latent matrix: observed interior cells copied, interval cells
/// drawn from a standard normal truncated to their interval, missing cells
/// standard normal.
pub fn initialize_latent(ds: &Dataset, rng: &mut RngStream) -> DMatrix<f64> {
    DMatrix::from_fn(ds.n(), ds.p(), |i, j| {
        let iv = ds.latent_interval(i, j);
        match iv.point {
            Some(v) => v,
            None => crate::kernels::sample_truncated_normal(rng, 0.0, 1.0, iv.lo, iv.hi),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write;

    fn two_col_schema() -> Vec<VariableSchema> {
        vec![
            VariableSchema::continuous("x"),
            VariableSchema {
                name: "o".into(),
                kind: VariableKind::Ordinal,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                levels: vec![1.0, 2.0, 3.0],
            },
        ]
    }

    fn write_files(csv: &str, schema: &[VariableSchema]) -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        let sch = dir.path().join("s.json");
        std::fs::File::create(&data).unwrap().write_all(csv.as_bytes()).unwrap();
        std::fs::File::create(&sch)
            .unwrap()
            .write_all(serde_json::to_string(schema).unwrap().as_bytes())
            .unwrap();
        (dir, data, sch)
    }

    #[test]
    fn load_marks_na_cells_unobserved() {
        let (_d, data, sch) = write_files("x,o\n0.5,1\nNA,2\n1.5,3\n", &two_col_schema());
        let ds = load_dataset(&data, &sch).unwrap();
        assert_eq!(ds.observed.iter().filter(|o| !**o).count(), 1);
        assert!(!ds.observed[(1, 0)]);
    }

    #[test]
    fn load_rejects_off_level_ordinal() {
        let (_d, data, sch) = write_files("x,o\n0.5,2.5\n", &two_col_schema());
        let err = load_dataset(&data, &sch).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 0") && msg.contains('o'), "{msg}");
    }

    #[test]
    fn load_rejects_out_of_bounds_continuous() {
        let mut schema = two_col_schema();
        schema[0].lower = 0.0;
        let (_d, data, sch) = write_files("x,o\n-1.0,2\n", &schema);
        assert!(load_dataset(&data, &sch).is_err());
    }

    #[test]
    fn standardize_two_point_column() {
        let schema = vec![VariableSchema::continuous("x")];
        let y = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let obs = DMatrix::from_element(2, 1, true);
        let ds = standardize(&Dataset::new(y, obs, schema).unwrap()).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(ds.y[(0, 0)], -r, epsilon = 1e-12);
        assert_relative_eq!(ds.y[(1, 0)], r, epsilon = 1e-12);
    }

    #[test]
    fn standardize_maps_levels_affinely() {
        // levels {0,1,2}; craft data with observed mean 1.0 and sd 1.0
        let schema = vec![VariableSchema {
            name: "o".into(),
            kind: VariableKind::Ordinal,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            levels: vec![0.0, 1.0, 2.0],
        }];
        let y = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let obs = DMatrix::from_element(3, 1, true);
        let ds = standardize(&Dataset::new(y, obs, schema).unwrap()).unwrap();
        assert_relative_eq!(ds.schema[0].levels[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(ds.schema[0].levels[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(ds.schema[0].levels[2], 1.0, epsilon = 1e-12);
        // middle level owns (-1, 0]
        let iv = ds.latent_interval(1, 0);
        assert_relative_eq!(iv.lo, -1.0, epsilon = 1e-12);
        assert_relative_eq!(iv.hi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_round_trip() {
        let schema = vec![VariableSchema::continuous("x"), VariableSchema::continuous("y")];
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 30.0, 4.0, 20.0]);
        let obs = DMatrix::from_element(3, 2, true);
        let raw = Dataset::new(y.clone(), obs, schema).unwrap();
        let std = standardize(&raw).unwrap();
        for j in 0..2 {
            for i in 0..3 {
                assert_relative_eq!(unstandardize_value(&std, j, std.y[(i, j)]), y[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn standardize_is_idempotent() {
        let schema = vec![VariableSchema::continuous("x")];
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 5.0, -2.0, 0.5]);
        let obs = DMatrix::from_element(4, 1, true);
        let once = standardize(&Dataset::new(y, obs, schema).unwrap()).unwrap();
        let twice = standardize(&once).unwrap();
        assert!((&twice.y - &once.y).abs().max() < 1e-12);
        // inversion from the doubly standardized still recovers raw scale
        assert_relative_eq!(unstandardize_value(&twice, 0, twice.y[(0, 0)]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let schema = vec![VariableSchema::continuous("x")];
        let y = DMatrix::from_column_slice(3, 1, &[2.0, 2.0, 2.0]);
        let obs = DMatrix::from_element(3, 1, true);
        assert!(standardize(&Dataset::new(y, obs, schema).unwrap()).is_err());
    }

    #[test]
    fn latent_interval_cases() {
        let mut schema = two_col_schema();
        schema[0].lower = -1.4;
        let y = DMatrix::from_row_slice(2, 2, &[-1.4, 2.0, 0.3, 1.0]);
        let mut obs = DMatrix::from_element(2, 2, true);
        obs[(1, 1)] = false;
        let ds = Dataset::new(y, obs, schema).unwrap();
        // censored continuous at the lower bound
        let iv = ds.latent_interval(0, 0);
        assert_eq!(iv.lo, f64::NEG_INFINITY);
        assert_eq!(iv.hi, -1.4);
        // ordinal level 2 of {1,2,3} owns (1, 2]
        let iv = ds.latent_interval(0, 1);
        assert_eq!((iv.lo, iv.hi), (1.0, 2.0));
        // interior continuous cell is a point
        assert_eq!(ds.latent_interval(1, 0).point, Some(0.3));
        // missing cell is free
        let iv = ds.latent_interval(1, 1);
        assert_eq!((iv.lo, iv.hi), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn initialize_latent_respects_intervals() {
        let mut schema = two_col_schema();
        schema[0].lower = -1.4;
        let y = DMatrix::from_row_slice(3, 2, &[-1.4, 2.0, 0.3, 1.0, 0.9, 3.0]);
        let mut obs = DMatrix::from_element(3, 2, true);
        obs[(1, 1)] = false;
        let ds = Dataset::new(y, obs, schema).unwrap();
        let mut rng = RngStream::new(3, 0);
        let z = initialize_latent(&ds, &mut rng);
        for i in 0..3 {
            for j in 0..2 {
                assert!(ds.latent_interval(i, j).contains(z[(i, j)]), "cell ({i},{j})");
            }
        }
        assert!(z[(0, 0)] <= -1.4);
        assert_eq!(z[(1, 0)], 0.3);
        // determinism
        let mut rng2 = RngStream::new(3, 0);
        assert_eq!(z, initialize_latent(&ds, &mut rng2));
    }

    #[test]
    fn fully_observed_continuous_copies_exactly() {
        let schema = vec![VariableSchema::continuous("x")];
        let y = DMatrix::from_column_slice(3, 1, &[0.1, -0.2, 0.5]);
        let obs = DMatrix::from_element(3, 1, true);
        let ds = Dataset::new(y.clone(), obs, schema).unwrap();
        let mut rng = RngStream::new(4, 0);
        assert_eq!(initialize_latent(&ds, &mut rng), y);
        assert!(!ds.has_latent_cells());
    }

    #[test]
    fn cont_override_drops_structure() {
        let schema = two_col_schema();
        let y = DMatrix::from_row_slice(1, 2, &[0.5, 2.0]);
        let obs = DMatrix::from_element(1, 2, true);
        let ds = Dataset::new(y, obs, schema).unwrap().to_continuous();
        assert_eq!(ds.schema[1].kind, VariableKind::Continuous);
        assert_eq!(ds.latent_interval(0, 1).point, Some(2.0));
    }
}
