//! Tables rendered as CSV or JSON with fixed float formatting.

use std::fmt::Write as _;

use crate::config::Format;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Rows with named columns and trailing metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub meta: Vec<(String, Cell)>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width differs from header"
        );
        self.rows.push(row);
    }

    pub fn meta(&mut self, key: &str, value: impl Into<Cell>) {
        self.meta.push((key.to_string(), value.into()));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Rounds to `digits` significant digits, then prints the shortest
/// representation that reads back to the rounded value.
pub fn format_float(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.into();
    }
    let rounded: f64 = format!("{:.*e}", digits.saturating_sub(1), v)
        .parse()
        .expect("formatted float parses");
    if rounded == 0.0 {
        return "0.0".into();
    }
    format!("{rounded:?}")
}

fn csv_cell(cell: &Cell, digits: usize) -> String {
    match cell {
        Cell::Float(v) => format_float(*v, digits),
        Cell::Int(v) => v.to_string(),
        Cell::Bool(v) => v.to_string(),
        Cell::Empty => String::new(),
        Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Cell::Text(s) => s.clone(),
    }
}

fn json_cell(cell: &Cell, digits: usize) -> String {
    match cell {
        Cell::Float(v) if v.is_finite() => format_float(*v, digits),
        Cell::Float(_) | Cell::Empty => "null".into(),
        Cell::Int(v) => v.to_string(),
        Cell::Bool(v) => v.to_string(),
        Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
    }
}

fn json_key(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

pub fn render(table: &Table, format: Format, digits: usize) -> String {
    match format {
        Format::Csv => render_csv(table, digits),
        Format::Json => render_json(table, digits),
    }
}

fn render_csv(table: &Table, digits: usize) -> String {
    let mut out = String::new();
    let header: Vec<String> = table
        .columns
        .iter()
        .map(|c| csv_cell(&Cell::Text(c.clone()), digits))
        .collect();
    writeln!(out, "{}", header.join(",")).unwrap();
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|c| csv_cell(c, digits)).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    for (key, value) in &table.meta {
        let text = match value {
            Cell::Text(s) => s.replace('\n', " "),
            other => csv_cell(other, digits),
        };
        writeln!(out, "# {key}: {text}").unwrap();
    }
    out
}

fn render_json(table: &Table, digits: usize) -> String {
    let mut out = String::from("{\n  \"meta\": {");
    for (i, (key, value)) in table.meta.iter().enumerate() {
        let sep = if i == 0 { "\n" } else { ",\n" };
        write!(
            out,
            "{sep}    {}: {}",
            json_key(key),
            json_cell(value, digits)
        )
        .unwrap();
    }
    out.push_str(if table.meta.is_empty() {
        "},\n"
    } else {
        "\n  },\n"
    });
    out.push_str("  \"rows\": [");
    for (i, row) in table.rows.iter().enumerate() {
        let fields: Vec<String> = table
            .columns
            .iter()
            .zip(row)
            .map(|(c, v)| format!("{}: {}", json_key(c), json_cell(v, digits)))
            .collect();
        let sep = if i == 0 { "\n" } else { ",\n" };
        write!(out, "{sep}    {{{}}}", fields.join(", ")).unwrap();
    }
    out.push_str(if table.rows.is_empty() {
        "]\n}\n"
    } else {
        "\n  ]\n}\n"
    });
    out
}
