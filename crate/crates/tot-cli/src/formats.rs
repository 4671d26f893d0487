//! Plain-text file formats: feature matrices, token labels, adapter
//! weights, coupling CSV, and P2 graymap rendering.
//!
//! A feature file starts with a "rows cols" header line followed by that
//! many body lines of space-separated decimals. A labels file is a single
//! line of space-separated token ids whose first and last entries are the
//! CLS and SEP sentinels. A weights file stacks a "d_a d_t vocab" header,
//! an "s <scale>" line, and ten feature-format blocks in a fixed order
//! (fc2 weight and bias, fc3 weight and bias, fc1 weight and bias, inner
//! layer-norm gain and bias, outer layer-norm gain and bias; bias and
//! layer-norm vectors are 1-row blocks). Coupling CSVs are comma-separated
//! with no header. Floats are written with the shortest representation
//! that round-trips.
//!
//! Parse errors name the offending line as "path:line: message". All
//! writes land in a temp file next to the destination and are renamed
//! into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use tot_core::{AdapterWeights, Affine, LayerNorm};

use crate::CliError;

fn io_error(path: &Path, err: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {err}", path.display()))
}

fn line_error(path: &Path, line: usize, msg: impl AsRef<str>) -> CliError {
    CliError::Input(format!("{}:{line}: {}", path.display(), msg.as_ref()))
}

pub fn atomic_write(path: &Path, contents: &str) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Input(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|err| io_error(&tmp, err))?;
    fs::rename(&tmp, path).map_err(|err| io_error(path, err))
}

/// Line-by-line reader that tracks positions for error messages.
struct Cursor<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    next: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Self {
            path,
            lines: text.lines().collect(),
            next: 0,
        }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str), CliError> {
        match self.lines.get(self.next) {
            Some(line) => {
                self.next += 1;
                Ok((self.next, line))
            }
            None => Err(line_error(
                self.path,
                self.next + 1,
                "unexpected end of file",
            )),
        }
    }

    /// Everything after the last expected line must be blank.
    fn expect_trailing_blank(&mut self) -> Result<(), CliError> {
        while let Some(line) = self.lines.get(self.next) {
            self.next += 1;
            if !line.trim().is_empty() {
                return Err(line_error(self.path, self.next, "unexpected trailing content"));
            }
        }
        Ok(())
    }
}

fn parse_fields<T: std::str::FromStr>(
    cursor: &Cursor,
    line_no: usize,
    line: &str,
    expected: Option<usize>,
    what: &str,
) -> Result<Vec<T>, CliError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if let Some(n) = expected {
        if fields.len() != n {
            return Err(line_error(
                cursor.path,
                line_no,
                format!("expected {n} {what}, found {}", fields.len()),
            ));
        }
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>().map_err(|_| {
                line_error(cursor.path, line_no, format!("invalid {what} '{f}'"))
            })
        })
        .collect()
}

/// Parses one "rows cols" + body block. `expect` pins the block's shape;
/// `what` names it in error messages.
fn parse_matrix(
    cursor: &mut Cursor,
    expect: Option<(usize, usize)>,
    what: &str,
) -> Result<Array2<f64>, CliError> {
    let (header_no, header) = cursor.next_line()?;
    let dims: Vec<usize> = parse_fields(cursor, header_no, header, Some(2), "header field")?;
    let (rows, cols) = (dims[0], dims[1]);
    if rows == 0 || cols == 0 {
        return Err(line_error(
            cursor.path,
            header_no,
            format!("{what} dimensions must be positive, got {rows}x{cols}"),
        ));
    }
    if let Some((er, ec)) = expect {
        if (rows, cols) != (er, ec) {
            return Err(line_error(
                cursor.path,
                header_no,
                format!("{what} must be {er}x{ec}, got {rows}x{cols}"),
            ));
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (line_no, line) = cursor.next_line()?;
        let fields: Vec<f64> = parse_fields(cursor, line_no, line, Some(cols), "value")?;
        for v in &fields {
            if !v.is_finite() {
                return Err(line_error(cursor.path, line_no, format!("non-finite value {v}")));
            }
        }
        data.extend(fields);
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("dimensions counted above"))
}

fn push_matrix(out: &mut String, m: &Array2<f64>) {
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

fn push_vector(out: &mut String, v: &Array1<f64>) {
    push_matrix(out, &v.clone().insert_axis(ndarray::Axis(0)));
}

pub fn read_feature_file(path: &Path) -> Result<Array2<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|err| io_error(path, err))?;
    let mut cursor = Cursor::new(path, &text);
    let matrix = parse_matrix(&mut cursor, None, "feature matrix")?;
    cursor.expect_trailing_blank()?;
    Ok(matrix)
}

pub fn write_feature_file(path: &Path, m: &Array2<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    push_matrix(&mut out, m);
    atomic_write(path, &out)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|err| io_error(path, err))?;
    let mut cursor = Cursor::new(path, &text);
    let (line_no, line) = cursor.next_line()?;
    let ids: Vec<usize> = parse_fields(&cursor, line_no, line, None, "token id")?;
    if ids.is_empty() {
        return Err(line_error(path, line_no, "expected at least one token id"));
    }
    cursor.expect_trailing_blank()?;
    Ok(ids)
}

pub fn write_labels_file(path: &Path, ids: &[usize]) -> Result<(), CliError> {
    let line: Vec<String> = ids.iter().map(|id| id.to_string()).collect();
    atomic_write(path, &format!("{}\n", line.join(" ")))
}

pub fn read_weights_file(path: &Path) -> Result<AdapterWeights, CliError> {
    let text = fs::read_to_string(path).map_err(|err| io_error(path, err))?;
    let mut cursor = Cursor::new(path, &text);

    let (header_no, header) = cursor.next_line()?;
    let dims: Vec<usize> = parse_fields(&cursor, header_no, header, Some(3), "header field")?;
    let (d_a, d_t, vocab) = (dims[0], dims[1], dims[2]);

    let (scale_no, scale_line) = cursor.next_line()?;
    let fields: Vec<&str> = scale_line.split_whitespace().collect();
    let scale = match fields.as_slice() {
        ["s", value] => value.parse::<f64>().map_err(|_| {
            line_error(path, scale_no, format!("invalid scale value '{value}'"))
        })?,
        _ => return Err(line_error(path, scale_no, "expected 's <scale>'")),
    };

    let fc2_w = parse_matrix(&mut cursor, Some((d_t, d_a)), "fc2 weight")?;
    let fc2_b = parse_matrix(&mut cursor, Some((1, d_t)), "fc2 bias")?;
    let fc3_w = parse_matrix(&mut cursor, Some((d_a, d_t)), "fc3 weight")?;
    let fc3_b = parse_matrix(&mut cursor, Some((1, d_a)), "fc3 bias")?;
    let fc1_w = parse_matrix(&mut cursor, Some((vocab, d_a)), "fc1 weight")?;
    let fc1_b = parse_matrix(&mut cursor, Some((1, vocab)), "fc1 bias")?;
    let ln_in_g = parse_matrix(&mut cursor, Some((1, d_t)), "inner layer-norm gain")?;
    let ln_in_b = parse_matrix(&mut cursor, Some((1, d_t)), "inner layer-norm bias")?;
    let ln_out_g = parse_matrix(&mut cursor, Some((1, d_a)), "outer layer-norm gain")?;
    let ln_out_b = parse_matrix(&mut cursor, Some((1, d_a)), "outer layer-norm bias")?;
    cursor.expect_trailing_blank()?;

    let row = |m: Array2<f64>| m.row(0).to_owned();
    let build = || -> tot_core::Result<AdapterWeights> {
        AdapterWeights::new(
            Affine::new(fc1_w, row(fc1_b))?,
            Affine::new(fc2_w, row(fc2_b))?,
            Affine::new(fc3_w, row(fc3_b))?,
            LayerNorm::new(row(ln_in_g), row(ln_in_b))?,
            LayerNorm::new(row(ln_out_g), row(ln_out_b))?,
            scale,
        )
    };
    build().map_err(|err| CliError::Input(format!("{}: {err}", path.display())))
}

pub fn write_weights_file(path: &Path, w: &AdapterWeights) -> Result<(), CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", w.d_a(), w.d_t(), w.vocab());
    let _ = writeln!(out, "s {}", w.scale);
    push_matrix(&mut out, w.fc2.weight());
    push_vector(&mut out, w.fc2.bias());
    push_matrix(&mut out, w.fc3.weight());
    push_vector(&mut out, w.fc3.bias());
    push_matrix(&mut out, w.fc1.weight());
    push_vector(&mut out, w.fc1.bias());
    push_vector(&mut out, w.ln_inner.gain());
    push_vector(&mut out, w.ln_inner.bias());
    push_vector(&mut out, w.ln_outer.gain());
    push_vector(&mut out, w.ln_outer.bias());
    atomic_write(path, &out)
}

pub fn read_coupling_csv(path: &Path) -> Result<Array2<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|err| io_error(path, err))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut body: Vec<&str> = text.lines().collect();
    while body.last().is_some_and(|line| line.trim().is_empty()) {
        body.pop();
    }
    for (idx, line) in body.iter().enumerate() {
        let line_no = idx + 1;
        let mut row = Vec::new();
        for field in line.split(',') {
            let trimmed = field.trim();
            let v: f64 = trimmed
                .parse()
                .map_err(|_| line_error(path, line_no, format!("invalid value '{trimmed}'")))?;
            if !v.is_finite() {
                return Err(line_error(path, line_no, format!("non-finite value {v}")));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(line_error(
                    path,
                    line_no,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(line_error(path, 1, "empty coupling"));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(Array2::from_shape_vec((nr, nc), rows.into_iter().flatten().collect())
        .expect("dimensions counted above"))
}

pub fn write_coupling_csv(path: &Path, gamma: &Array2<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for row in gamma.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    atomic_write(path, &out)
}

/// Renders a coupling as a plain P2 graymap: the largest entry maps to 0
/// (black), zero mass to 255 (white), linearly in between. A matrix with
/// no positive entry renders all black, matching the all-equal case.
pub fn render_pgm(gamma: &Array2<f64>) -> String {
    let max = gamma.iter().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P2\n{} {}\n255\n", gamma.ncols(), gamma.nrows());
    for row in gamma.rows() {
        let pixels: Vec<String> = row
            .iter()
            .map(|&v| {
                let pixel = if max <= 0.0 {
                    0.0
                } else {
                    (255.0 * (1.0 - v / max)).round().clamp(0.0, 255.0)
                };
                format!("{}", pixel as u16)
            })
            .collect();
        let _ = writeln!(out, "{}", pixels.join(" "));
    }
    out
}
