//! Record files, the in-common schema and their CSV form.
//!
//! Categorical codes are 1-based. A file is stored row-major: row `i` holds
//! the `J` reported codes, one outcome, one seed flag per field and an
//! optional partner row in the other file.
//!
//! CSV layout (comma separated, header row, no quoting):
//! `<field_1>,...,<field_J>,y,seed_<field_1>,...,seed_<field_J>,t1_partner`
//! where seed columns hold `0`/`1` and `t1_partner` is a row index or empty.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Code = u16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldRole {
    /// Blocking variable, assumed error free.
    #[serde(rename = "BV")]
    Blocking,
    /// Matching variable, may contain reporting errors in file 2.
    #[serde(rename = "MV")]
    Matching,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub levels: Code,
    pub role: FieldRole,
}

impl FieldSpec {
    pub fn new(name: &str, levels: Code, role: FieldRole) -> Self {
        FieldSpec { name: name.to_string(), levels, role }
    }
}

/// The ordered list of categorical fields present in both files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InCommonSchema {
    pub fields: Vec<FieldSpec>,
}

impl InCommonSchema {
    pub fn new(fields: Vec<FieldSpec>) -> Result<Self> {
        let schema = InCommonSchema { fields };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::Schema("schema has no fields".into()));
        }
        for (j, f) in self.fields.iter().enumerate() {
            if f.levels < 2 {
                return Err(Error::Schema(format!(
                    "field '{}' needs at least 2 levels, has {}",
                    f.name, f.levels
                )));
            }
            if f.name.is_empty() || f.name.contains(',') || f.name.contains('=') {
                return Err(Error::Schema(format!("field {j} has an unusable name '{}'", f.name)));
            }
            if self.fields[..j].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate field name '{}'", f.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn levels(&self, j: usize) -> Code {
        self.fields[j].levels
    }

    pub fn is_matching(&self, j: usize) -> bool {
        self.fields[j].role == FieldRole::Matching
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Indices of the matching fields, in schema order.
    pub fn matching_fields(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_matching(j)).collect()
    }

    pub fn max_levels(&self) -> usize {
        self.fields.iter().map(|f| f.levels as usize).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileId {
    One,
    Two,
}

/// One file of records.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordTable {
    pub file: FileId,
    n_fields: usize,
    codes: Vec<Code>,
    pub y: Vec<f64>,
    seed: Vec<bool>,
    pub t1_partner: Vec<Option<usize>>,
}

impl RecordTable {
    pub fn new(file: FileId, n_fields: usize) -> Self {
        RecordTable { file, n_fields, codes: Vec::new(), y: Vec::new(), seed: Vec::new(), t1_partner: Vec::new() }
    }

    pub fn push(&mut self, codes: &[Code], y: f64, seed: &[bool], t1_partner: Option<usize>) {
        assert_eq!(codes.len(), self.n_fields);
        assert_eq!(seed.len(), self.n_fields);
        self.codes.extend_from_slice(codes);
        self.y.push(y);
        self.seed.extend_from_slice(seed);
        self.t1_partner.push(t1_partner);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    /// Reported codes of row `i`.
    pub fn row(&self, i: usize) -> &[Code] {
        &self.codes[i * self.n_fields..(i + 1) * self.n_fields]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Code] {
        &mut self.codes[i * self.n_fields..(i + 1) * self.n_fields]
    }

    pub fn code(&self, i: usize, j: usize) -> Code {
        self.codes[i * self.n_fields + j]
    }

    pub fn set_code(&mut self, i: usize, j: usize, value: Code) {
        self.codes[i * self.n_fields + j] = value;
    }

    pub fn is_seed(&self, i: usize, j: usize) -> bool {
        self.seed[i * self.n_fields + j]
    }

    pub fn set_seed(&mut self, i: usize, j: usize, value: bool) {
        self.seed[i * self.n_fields + j] = value;
    }

    pub fn seed_row(&self, i: usize) -> &[bool] {
        &self.seed[i * self.n_fields..(i + 1) * self.n_fields]
    }

    pub fn is_t1(&self, i: usize) -> bool {
        self.t1_partner[i].is_some()
    }

    /// Every field is a seed but the record has no known partner.
    pub fn is_t2(&self, i: usize) -> bool {
        !self.is_t1(i) && self.seed_row(i).iter().all(|&s| s)
    }

    pub fn t1_count(&self) -> usize {
        self.t1_partner.iter().filter(|p| p.is_some()).count()
    }

    /// Marks every blocking field as a seed.
    pub fn normalize_seeds(&mut self, schema: &InCommonSchema) {
        for i in 0..self.len() {
            for j in 0..self.n_fields {
                if !schema.is_matching(j) || self.is_t1(i) {
                    self.set_seed(i, j, true);
                }
            }
        }
    }

    pub fn validate(&self, schema: &InCommonSchema) -> Result<()> {
        if self.n_fields != schema.len() {
            return Err(Error::Validation(format!(
                "file has {} fields, schema has {}",
                self.n_fields,
                schema.len()
            )));
        }
        for i in 0..self.len() {
            for (j, f) in schema.fields.iter().enumerate() {
                let c = self.code(i, j);
                if c < 1 || c > f.levels {
                    return Err(Error::Validation(format!(
                        "row {i}: field '{}' has code {c} outside 1..={}",
                        f.name, f.levels
                    )));
                }
                if f.role == FieldRole::Blocking && !self.is_seed(i, j) {
                    return Err(Error::Validation(format!(
                        "row {i}: blocking field '{}' must be flagged as a seed",
                        f.name
                    )));
                }
            }
            if !self.y[i].is_finite() {
                return Err(Error::Validation(format!("row {i}: outcome is not finite")));
            }
            if self.is_t1(i) && !self.seed_row(i).iter().all(|&s| s) {
                return Err(Error::Validation(format!("row {i}: partnered row must be a seed on every field")));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, schema: &InCommonSchema, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(out);
        let mut header: Vec<String> = schema.fields.iter().map(|f| f.name.clone()).collect();
        header.push("y".into());
        header.extend(schema.fields.iter().map(|f| format!("seed_{}", f.name)));
        header.push("t1_partner".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|c| c.to_string()).collect();
            rec.push(format_f64(self.y[i]));
            rec.extend(self.seed_row(i).iter().map(|&s| if s { "1".into() } else { "0".into() }));
            rec.push(self.t1_partner[i].map(|p| p.to_string()).unwrap_or_default());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(schema: &InCommonSchema, file: FileId, input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Validation(format!("missing column '{name}'")))
        };
        let code_cols: Vec<usize> = schema.fields.iter().map(|f| col(&f.name)).collect::<Result<_>>()?;
        let seed_cols: Vec<usize> =
            schema.fields.iter().map(|f| col(&format!("seed_{}", f.name))).collect::<Result<_>>()?;
        let y_col = col("y")?;
        let p_col = col("t1_partner")?;
        let mut table = RecordTable::new(file, schema.len());
        let mut codes = vec![0; schema.len()];
        let mut seeds = vec![false; schema.len()];
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |c: usize| rec.get(c).unwrap_or("").trim();
            for j in 0..schema.len() {
                codes[j] = field(code_cols[j])
                    .parse()
                    .map_err(|_| Error::Validation(format!("row {i}: bad code in column '{}'", schema.fields[j].name)))?;
                seeds[j] = match field(seed_cols[j]) {
                    "1" | "true" => true,
                    "0" | "false" | "" => false,
                    other => return Err(Error::Validation(format!("row {i}: bad seed flag '{other}'"))),
                };
            }
            let y: f64 = field(y_col).parse().map_err(|_| Error::Validation(format!("row {i}: bad outcome")))?;
            let partner = match field(p_col) {
                "" => None,
                s => Some(s.parse().map_err(|_| Error::Validation(format!("row {i}: bad t1_partner '{s}'")))?),
            };
            table.push(&codes, y, &seeds, partner);
        }
        table.validate(schema)?;
        Ok(table)
    }

    pub fn read_csv_path(schema: &InCommonSchema, file: FileId, path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
        Self::read_csv(schema, file, f)
    }

    pub fn write_csv_path(&self, schema: &InCommonSchema, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(schema, f)
    }
}

/// Shortest representation that round-trips.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Checks that seeded partners point at each other and agree on every code.
pub fn validate_pair(schema: &InCommonSchema, f1: &RecordTable, f2: &RecordTable) -> Result<()> {
    f1.validate(schema)?;
    f2.validate(schema)?;
    if f1.file != FileId::One || f2.file != FileId::Two {
        return Err(Error::Validation("files are passed in the wrong order".into()));
    }
    for (i, p) in f2.t1_partner.iter().enumerate() {
        if let Some(r) = *p {
            if r >= f1.len() {
                return Err(Error::Validation(format!("file 2 row {i}: partner {r} out of range")));
            }
            if f1.t1_partner[r] != Some(i) {
                return Err(Error::Validation(format!("file 2 row {i}: partner {r} does not point back")));
            }
            if f1.row(r) != f2.row(i) {
                return Err(Error::Validation(format!("file 2 row {i}: seeded pair disagrees on codes")));
            }
        }
    }
    for (r, p) in f1.t1_partner.iter().enumerate() {
        if let Some(i) = *p {
            if i >= f2.len() || f2.t1_partner[i] != Some(r) {
                return Err(Error::Validation(format!("file 1 row {r}: partner {i} does not point back")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> InCommonSchema {
        InCommonSchema::new(vec![
            FieldSpec::new("a", 2, FieldRole::Blocking),
            FieldSpec::new("b", 3, FieldRole::Matching),
        ])
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let s = schema();
        let mut t = RecordTable::new(FileId::Two, 2);
        t.push(&[1, 3], 1.25, &[true, false], None);
        t.push(&[2, 1], -0.1, &[true, true], Some(4));
        let mut buf = Vec::new();
        t.write_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "a,b,y,seed_a,seed_b,t1_partner");
        let back = RecordTable::read_csv(&s, FileId::Two, &buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_codes_out_of_range() {
        let s = schema();
        let mut t = RecordTable::new(FileId::One, 2);
        t.push(&[1, 4], 0.0, &[true, false], None);
        assert!(t.validate(&s).is_err());
    }

    #[test]
    fn blocking_fields_must_be_seeds() {
        let s = schema();
        let mut t = RecordTable::new(FileId::One, 2);
        t.push(&[1, 1], 0.0, &[false, false], None);
        assert!(t.validate(&s).is_err());
        t.normalize_seeds(&s);
        assert!(t.validate(&s).is_ok());
    }

    #[test]
    fn schema_rules() {
        assert!(InCommonSchema::new(vec![]).is_err());
        assert!(InCommonSchema::new(vec![FieldSpec::new("a", 1, FieldRole::Blocking)]).is_err());
        assert!(InCommonSchema::new(vec![
            FieldSpec::new("a", 2, FieldRole::Blocking),
            FieldSpec::new("a", 2, FieldRole::Matching)
        ])
        .is_err());
        assert_eq!(schema().matching_fields(), vec![1]);
    }

    #[test]
    fn t2_rows_are_full_seeds_without_partner() {
        let mut t = RecordTable::new(FileId::Two, 2);
        t.push(&[1, 1], 0.0, &[true, true], None);
        t.push(&[1, 1], 0.0, &[true, false], None);
        assert!(t.is_t2(0));
        assert!(!t.is_t2(1));
    }
}
