//! The three carpet classes, their exact validation, and their affine maps.
//!
//! Carpets parse from JSON documents with a `"type"` tag in
//! `{"gatzouras-lalley", "baranski", "uniform"}` and rationals encoded as
//! strings `"p/q"`. Parsing canonicalizes (rows and cells sorted by offset,
//! digits sorted ascending) so equal carpets have equal representations and
//! parse → serialize → parse is the identity.

use serde::{Deserialize, Serialize};

use crate::rational::Rational;
use crate::{Error, Result};

/// One cell of a Gatzouras-Lalley row: width `a` and horizontal offset `c`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub a: Rational,
    pub c: Rational,
}

/// One row: height `b`, vertical offset `d`, and the cells it contains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Row {
    pub b: Rational,
    pub d: Rational,
    pub cells: Vec<Cell>,
}

/// Rows of height `b_i` at offsets `d_i`, each holding cells of width
/// `a_ij < b_i` at offsets `c_ij`; row and cell intervals must have
/// pairwise disjoint interiors inside `[0,1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GLCarpet {
    pub rows: Vec<Row>,
}

/// Full grid partition by column widths `a_i` and row heights `b_j`
/// (each summing to one exactly), keeping the digit subset `D`.
/// Digits are stored 0-based internally and serialized 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaranskiCarpet {
    pub col_widths: Vec<Rational>,
    pub row_heights: Vec<Rational>,
    /// (column, row) pairs, 0-based.
    pub digits: Vec<(usize, usize)>,
}

/// Homogeneous uniform fibres: every row has height `b` and exactly `n`
/// cells of width `a`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformFibreCarpet {
    pub a: Rational,
    pub b: Rational,
    pub m: usize,
    pub n: usize,
    pub row_offsets: Vec<Rational>,
    pub cell_offsets: Vec<Vec<Rational>>,
}

/// Axis-aligned affine contraction `(x, y) ↦ (sx·x + ox, sy·y + oy)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffineMap {
    pub x_scale: Rational,
    pub x_offset: Rational,
    pub y_scale: Rational,
    pub y_offset: Rational,
}

impl AffineMap {
    /// Composition `self ∘ rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &AffineMap) -> AffineMap {
        AffineMap {
            x_scale: &self.x_scale * &rhs.x_scale,
            x_offset: &(&self.x_scale * &rhs.x_offset) + &self.x_offset,
            y_scale: &self.y_scale * &rhs.y_scale,
            y_offset: &(&self.y_scale * &rhs.y_offset) + &self.y_offset,
        }
    }

    pub fn identity() -> AffineMap {
        AffineMap {
            x_scale: Rational::one(),
            x_offset: Rational::zero(),
            y_scale: Rational::one(),
            y_offset: Rational::zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Carpet {
    #[serde(rename = "gatzouras-lalley")]
    GatzourasLalley(GLCarpet),
    #[serde(rename = "baranski")]
    Baranski(BaranskiCarpet),
    #[serde(rename = "uniform")]
    Uniform(UniformFibreCarpet),
}

/// A violated invariant; `code` is stable for tests, `message` carries the
/// offending indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &str, message: String) {
        self.violations.push(Violation {
            code: code.into(),
            message,
        });
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{}: {}", v.code, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Intervals `[offset, offset + len]` must lie in `[0,1]` and have pairwise
/// disjoint interiors; all comparisons exact.
fn check_intervals(
    report: &mut ValidationReport,
    what: &str,
    items: &[(Rational, Rational)],
    in_range_code: &str,
    overlap_code: &str,
) {
    let zero = Rational::zero();
    let one = Rational::one();
    for (idx, (off, len)) in items.iter().enumerate() {
        if *off < zero || &(off + len) > &one {
            report.push(
                in_range_code,
                format!("{what} {} = [{off}, {}] leaves [0,1]", idx + 1, off + len),
            );
        }
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| items[i].0.cmp_rational(&items[j].0));
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        let end_i = &items[i].0 + &items[i].1;
        if items[j].0 < end_i {
            report.push(
                overlap_code,
                format!("{what} {} and {} interiors overlap", i + 1, j + 1),
            );
        }
    }
}

pub fn validate_gl(carpet: &GLCarpet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let zero = Rational::zero();
    let one = Rational::one();
    if carpet.rows.is_empty() {
        report.push("no-rows", "carpet has no rows".into());
        return report;
    }
    for (i, row) in carpet.rows.iter().enumerate() {
        if !(row.b > zero && row.b < one) {
            report.push("row-height-range", format!("b_{} = {} not in (0,1)", i + 1, row.b));
        }
        if row.cells.is_empty() {
            report.push("empty-row", format!("row {} has no cells", i + 1));
        }
        for (j, cell) in row.cells.iter().enumerate() {
            if !(cell.a > zero) {
                report.push(
                    "cell-width-range",
                    format!("a_{},{} = {} not positive", i + 1, j + 1, cell.a),
                );
            }
            if cell.a >= row.b {
                report.push(
                    "cell-width-vs-row-height",
                    format!(
                        "a_{},{} = {} must be strictly below b_{} = {}",
                        i + 1,
                        j + 1,
                        cell.a,
                        i + 1,
                        row.b
                    ),
                );
            }
        }
        let cells: Vec<_> = row
            .cells
            .iter()
            .map(|c| (c.c.clone(), c.a.clone()))
            .collect();
        check_intervals(
            &mut report,
            &format!("row {} cell", i + 1),
            &cells,
            "cell-outside-unit",
            "cell-overlap",
        );
    }
    let rows: Vec<_> = carpet
        .rows
        .iter()
        .map(|r| (r.d.clone(), r.b.clone()))
        .collect();
    check_intervals(&mut report, "row", &rows, "row-outside-unit", "row-overlap");
    report
}

pub fn validate_baranski(carpet: &BaranskiCarpet) -> ValidationReport {
    let mut report = ValidationReport::default();
    let zero = Rational::zero();
    let one = Rational::one();
    let n = carpet.col_widths.len();
    let m = carpet.row_heights.len();
    for (label, values, code) in [
        ("column width", &carpet.col_widths, "col-width-range"),
        ("row height", &carpet.row_heights, "row-height-range"),
    ] {
        for (i, v) in values.iter().enumerate() {
            if !(*v > zero && *v < one) {
                report.push(code, format!("{label} {} = {v} not in (0,1)", i + 1));
            }
        }
    }
    let col_sum = carpet
        .col_widths
        .iter()
        .fold(Rational::zero(), |acc, v| &acc + v);
    if col_sum != one {
        report.push("col-sum", format!("column widths sum to {col_sum}, expected 1"));
    }
    let row_sum = carpet
        .row_heights
        .iter()
        .fold(Rational::zero(), |acc, v| &acc + v);
    if row_sum != one {
        report.push("row-sum", format!("row heights sum to {row_sum}, expected 1"));
    }
    if carpet.digits.is_empty() {
        report.push("no-digits", "digit set is empty".into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for &(i, j) in &carpet.digits {
        if i >= n || j >= m {
            report.push(
                "digit-out-of-range",
                format!("digit ({}, {}) outside {}x{} grid", i + 1, j + 1, n, m),
            );
        }
        if !seen.insert((i, j)) {
            report.push(
                "duplicate-digit",
                format!("digit ({}, {}) listed twice", i + 1, j + 1),
            );
        }
    }
    report
}

pub fn validate_uniform(carpet: &UniformFibreCarpet) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !(carpet.a > Rational::zero() && carpet.a < carpet.b && carpet.b < Rational::one()) {
        report.push(
            "scale-order",
            format!("need 0 < a < b < 1, got a = {}, b = {}", carpet.a, carpet.b),
        );
    }
    if carpet.m == 0 || carpet.n == 0 {
        report.push("shape", format!("need m, n >= 1, got {}x{}", carpet.m, carpet.n));
        return report;
    }
    if carpet.row_offsets.len() != carpet.m {
        report.push(
            "shape",
            format!(
                "{} row offsets for m = {}",
                carpet.row_offsets.len(),
                carpet.m
            ),
        );
        return report;
    }
    if carpet.cell_offsets.len() != carpet.m
        || carpet.cell_offsets.iter().any(|r| r.len() != carpet.n)
    {
        report.push("shape", "cell offset grid is not m x n".into());
        return report;
    }
    let gl = carpet.to_gl();
    let mut inner = validate_gl(&gl);
    report.violations.append(&mut inner.violations);
    report
}

impl Carpet {
    pub fn validate(&self) -> ValidationReport {
        match self {
            Carpet::GatzourasLalley(c) => validate_gl(c),
            Carpet::Baranski(c) => validate_baranski(c),
            Carpet::Uniform(c) => validate_uniform(c),
        }
    }

    pub fn as_maps(&self) -> Result<Vec<AffineMap>> {
        let report = self.validate();
        if !report.is_valid() {
            return Err(Error::InvalidCarpet(report.summary()));
        }
        Ok(match self {
            Carpet::GatzourasLalley(c) => c.maps(),
            Carpet::Baranski(c) => c.maps(),
            Carpet::Uniform(c) => c.to_gl().maps(),
        })
    }

    pub fn canonicalize(&mut self) {
        match self {
            Carpet::GatzourasLalley(c) => c.canonicalize(),
            Carpet::Baranski(c) => c.digits.sort_unstable(),
            Carpet::Uniform(c) => c.canonicalize(),
        }
    }

    pub fn from_json(text: &str) -> Result<Carpet> {
        let mut carpet: Carpet = serde_json::from_str(text).map_err(|e| {
            if e.line() > 0 {
                Error::Parse(format!(
                    "carpet spec at line {}, column {}: {e}",
                    e.line(),
                    e.column()
                ))
            } else {
                Error::Parse(format!("carpet spec: {e}"))
            }
        })?;
        carpet.canonicalize();
        Ok(carpet)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("carpet serialization cannot fail")
    }
}

impl GLCarpet {
    pub fn maps(&self) -> Vec<AffineMap> {
        let mut maps = Vec::new();
        for row in &self.rows {
            for cell in &row.cells {
                maps.push(AffineMap {
                    x_scale: cell.a.clone(),
                    x_offset: cell.c.clone(),
                    y_scale: row.b.clone(),
                    y_offset: row.d.clone(),
                });
            }
        }
        maps
    }

    pub fn canonicalize(&mut self) {
        for row in &mut self.rows {
            row.cells.sort_by(|x, y| x.c.cmp_rational(&y.c));
        }
        self.rows.sort_by(|x, y| x.d.cmp_rational(&y.d));
    }

    pub fn digit_count(&self) -> usize {
        self.rows.iter().map(|r| r.cells.len()).sum()
    }
}

impl BaranskiCarpet {
    fn col_offset(&self, i: usize) -> Rational {
        self.col_widths[..i]
            .iter()
            .fold(Rational::zero(), |acc, v| &acc + v)
    }

    fn row_offset(&self, j: usize) -> Rational {
        self.row_heights[..j]
            .iter()
            .fold(Rational::zero(), |acc, v| &acc + v)
    }

    pub fn maps(&self) -> Vec<AffineMap> {
        self.digits
            .iter()
            .map(|&(i, j)| AffineMap {
                x_scale: self.col_widths[i].clone(),
                x_offset: self.col_offset(i),
                y_scale: self.row_heights[j].clone(),
                y_offset: self.row_offset(j),
            })
            .collect()
    }

    /// Rewrites the used digits as a Gatzouras-Lalley carpet (rows = grid
    /// rows that carry digits). Requires every used column to be strictly
    /// narrower than its row is tall; set `transpose` to swap the axes first.
    pub fn to_gl(&self, transpose: bool) -> Result<GLCarpet> {
        let (cols, rows, digits): (&[Rational], &[Rational], Vec<(usize, usize)>) = if transpose {
            (
                &self.row_heights,
                &self.col_widths,
                self.digits.iter().map(|&(i, j)| (j, i)).collect(),
            )
        } else {
            (
                &self.col_widths,
                &self.row_heights,
                self.digits.clone(),
            )
        };
        let col_off = |i: usize| -> Rational {
            cols[..i].iter().fold(Rational::zero(), |acc, v| &acc + v)
        };
        let row_off = |j: usize| -> Rational {
            rows[..j].iter().fold(Rational::zero(), |acc, v| &acc + v)
        };
        let mut out: Vec<Row> = Vec::new();
        let mut used_rows: Vec<usize> = digits.iter().map(|&(_, j)| j).collect();
        used_rows.sort_unstable();
        used_rows.dedup();
        for j in used_rows {
            let mut cells = Vec::new();
            for &(i, jj) in &digits {
                if jj == j {
                    if cols[i] >= rows[j] {
                        return Err(Error::Precondition(format!(
                            "digit ({}, {}) has column width {} >= row height {}",
                            i + 1,
                            j + 1,
                            cols[i],
                            rows[j]
                        )));
                    }
                    cells.push(Cell {
                        a: cols[i].clone(),
                        c: col_off(i),
                    });
                }
            }
            cells.sort_by(|x, y| x.c.cmp_rational(&y.c));
            out.push(Row {
                b: rows[j].clone(),
                d: row_off(j),
                cells,
            });
        }
        Ok(GLCarpet { rows: out })
    }
}

impl UniformFibreCarpet {
    pub fn to_gl(&self) -> GLCarpet {
        GLCarpet {
            rows: (0..self.m)
                .map(|i| Row {
                    b: self.b.clone(),
                    d: self.row_offsets[i].clone(),
                    cells: (0..self.n)
                        .map(|j| Cell {
                            a: self.a.clone(),
                            c: self.cell_offsets[i][j].clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&i, &j| self.row_offsets[i].cmp_rational(&self.row_offsets[j]));
        self.row_offsets = order.iter().map(|&i| self.row_offsets[i].clone()).collect();
        self.cell_offsets = order.iter().map(|&i| self.cell_offsets[i].clone()).collect();
        for row in &mut self.cell_offsets {
            row.sort_by(|x, y| x.cmp_rational(y));
        }
    }

    /// Evenly spaced layout: row `i` starts at `i/m`, cell `j` at `j/n`.
    /// Needs `b <= 1/m` and `a <= 1/n` to stay disjoint.
    pub fn standard(m: usize, n: usize, a: Rational, b: Rational) -> Result<Self> {
        let carpet = UniformFibreCarpet {
            a,
            b,
            m,
            n,
            row_offsets: (0..m)
                .map(|i| Rational::new(i as i64, m as i64))
                .collect::<Result<_>>()?,
            cell_offsets: (0..m)
                .map(|_| {
                    (0..n)
                        .map(|j| Rational::new(j as i64, n as i64))
                        .collect::<Result<_>>()
                })
                .collect::<Result<_>>()?,
        };
        let report = validate_uniform(&carpet);
        if !report.is_valid() {
            return Err(Error::InvalidCarpet(report.summary()));
        }
        Ok(carpet)
    }
}

/// Exact pairwise disjoint-interior check over the open unit square images.
pub fn maps_have_disjoint_interiors(maps: &[AffineMap]) -> bool {
    for (idx, m1) in maps.iter().enumerate() {
        for m2 in &maps[idx + 1..] {
            let x_overlap = overlap(&m1.x_offset, &m1.x_scale, &m2.x_offset, &m2.x_scale);
            let y_overlap = overlap(&m1.y_offset, &m1.y_scale, &m2.y_offset, &m2.y_scale);
            if x_overlap && y_overlap {
                return false;
            }
        }
    }
    true
}

fn overlap(o1: &Rational, l1: &Rational, o2: &Rational, l2: &Rational) -> bool {
    let e1 = o1 + l1;
    let e2 = o2 + l2;
    o1 < &e2 && o2 < &e1
}

// Digits serialize 1-based to match the on-disk format.
#[derive(Serialize, Deserialize)]
struct BaranskiWire {
    col_widths: Vec<Rational>,
    row_heights: Vec<Rational>,
    digits: Vec<(usize, usize)>,
}

impl Serialize for BaranskiCarpet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BaranskiWire {
            col_widths: self.col_widths.clone(),
            row_heights: self.row_heights.clone(),
            digits: self.digits.iter().map(|&(i, j)| (i + 1, j + 1)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BaranskiCarpet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let wire = BaranskiWire::deserialize(d)?;
        let mut digits = Vec::with_capacity(wire.digits.len());
        for (i, j) in wire.digits {
            if i == 0 || j == 0 {
                return Err(serde::de::Error::custom(format!(
                    "digit ({i}, {j}) must be 1-based"
                )));
            }
            digits.push((i - 1, j - 1));
        }
        Ok(BaranskiCarpet {
            col_widths: wire.col_widths,
            row_heights: wire.row_heights,
            digits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    pub(crate) fn two_row_gl() -> GLCarpet {
        GLCarpet {
            rows: vec![
                Row {
                    b: r("1/2"),
                    d: r("0"),
                    cells: vec![
                        Cell { a: r("1/4"), c: r("0") },
                        Cell { a: r("1/4"), c: r("3/4") },
                    ],
                },
                Row {
                    b: r("1/2"),
                    d: r("1/2"),
                    cells: vec![
                        Cell { a: r("1/4"), c: r("0") },
                        Cell { a: r("1/4"), c: r("3/4") },
                    ],
                },
            ],
        }
    }

    #[test]
    fn canonical_layout_is_valid() {
        assert!(validate_gl(&two_row_gl()).is_valid());
    }

    #[test]
    fn cell_width_must_be_below_row_height() {
        let carpet = GLCarpet {
            rows: vec![Row {
                b: r("1/2"),
                d: r("0"),
                cells: vec![Cell { a: r("1/2"), c: r("0") }],
            }],
        };
        let report = validate_gl(&carpet);
        assert!(report.has_code("cell-width-vs-row-height"));
    }

    #[test]
    fn overlapping_cells_reported() {
        let carpet = GLCarpet {
            rows: vec![Row {
                b: r("1/2"),
                d: r("0"),
                cells: vec![
                    Cell { a: r("1/3"), c: r("0") },
                    Cell { a: r("1/3"), c: r("1/4") },
                ],
            }],
        };
        let report = validate_gl(&carpet);
        assert!(report.has_code("cell-overlap"));
    }

    #[test]
    fn baranski_validation() {
        let ok = BaranskiCarpet {
            col_widths: vec![r("1/2"), r("1/2")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(0, 0), (1, 1)],
        };
        assert!(validate_baranski(&ok).is_valid());

        let bad_sum = BaranskiCarpet {
            col_widths: vec![r("1/3"), r("1/3")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(0, 0)],
        };
        assert!(validate_baranski(&bad_sum).has_code("col-sum"));

        let out_of_range = BaranskiCarpet {
            col_widths: vec![r("1/2"), r("1/2")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(2, 0)],
        };
        assert!(validate_baranski(&out_of_range).has_code("digit-out-of-range"));
    }

    #[test]
    fn uniform_maps_have_expected_scales() {
        let c = UniformFibreCarpet::standard(2, 2, r("1/4"), r("1/2")).unwrap();
        let maps = Carpet::Uniform(c).as_maps().unwrap();
        assert_eq!(maps.len(), 4);
        for m in &maps {
            assert_eq!(m.x_scale, r("1/4"));
            assert_eq!(m.y_scale, r("1/2"));
        }
        assert!(maps_have_disjoint_interiors(&maps));
    }

    #[test]
    fn baranski_offsets_are_prefix_sums() {
        let c = BaranskiCarpet {
            col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
            row_heights: vec![r("1/2"), r("1/2")],
            digits: vec![(2, 0)],
        };
        let maps = c.maps();
        assert_eq!(maps[0].x_offset, r("3/4"));
    }

    #[test]
    fn gl_map_count_is_total_cell_count() {
        let c = two_row_gl();
        assert_eq!(c.maps().len(), c.digit_count());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let carpet = Carpet::Baranski(BaranskiCarpet {
            col_widths: vec![r("1/4"), r("1/2"), r("1/4")],
            row_heights: vec![r("1/3"), r("1/3"), r("1/3")],
            digits: vec![(2, 2), (0, 0), (2, 0), (0, 2)],
        });
        let mut canon = carpet.clone();
        canon.canonicalize();
        let text = canon.to_json();
        let parsed = Carpet::from_json(&text).unwrap();
        assert_eq!(parsed, canon);
        // Twice through the printer gives identical bytes.
        assert_eq!(parsed.to_json(), text);
    }

    #[test]
    fn parse_diagnostics() {
        // Semantic error: the offending rational is named.
        let text = r#"{"type":"uniform","a":"1/0","b":"1/2","m":1,"n":1,"row_offsets":["0"],"cell_offsets":[["0"]]}"#;
        let err = Carpet::from_json(text).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("1/0"), "missing culprit: {msg}");

        // Syntactic error: position is reported.
        let err = Carpet::from_json("{\"type\":\n \"uniform\",").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line 2"), "missing position info: {msg}");
    }

    #[test]
    fn revalidating_map_output_against_origin_passes() {
        let c = two_row_gl();
        let maps = Carpet::GatzourasLalley(c.clone()).as_maps().unwrap();
        // Rebuild rows from the maps and compare against the canonical form.
        let mut rebuilt: Vec<(Rational, Rational, Vec<(Rational, Rational)>)> = Vec::new();
        for m in &maps {
            match rebuilt
                .iter_mut()
                .find(|(d, b, _)| d == &m.y_offset && b == &m.y_scale)
            {
                Some((_, _, cells)) => cells.push((m.x_offset.clone(), m.x_scale.clone())),
                None => rebuilt.push((
                    m.y_offset.clone(),
                    m.y_scale.clone(),
                    vec![(m.x_offset.clone(), m.x_scale.clone())],
                )),
            }
        }
        assert_eq!(rebuilt.len(), c.rows.len());
    }
}
