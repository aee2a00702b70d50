//! Delimited text formats shared by the CLI and the labeling service.
//!
//! Every file is UTF-8, comma separated, LF terminated, with a fixed header
//! row and no quoting (ids match `[A-Za-z0-9_-]+`). Floats are written in
//! scientific notation with 9 significant digits. Parse errors carry the
//! file name and the 1-based line number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSamples;
use crate::model::{
    BetaParams, ClassInfo, ClassSpace, Credibilities, CredibilityMatrix, CredibilityPosterior, LabelAssignment,
    LabelPosterior, LabelerId, ObjectId, ResponsePair, VoteTable,
};

pub use crate::model::is_valid_id;

pub const CLASSES_HEADER: &[&str] = &["class_id", "class_name"];
pub const VOTES_HEADER: &[&str] = &["labeler_id", "object_id", "class_id", "question_type", "response"];
pub const LABELS_HEADER: &[&str] = &["object_id", "class_id"];
pub const OBJECTS_HEADER: &[&str] = &["object_id", "payload_kind", "payload"];
pub const PREDICTIONS_HEADER: &[&str] = &["object_id", "class_id", "probability"];
pub const CREDIBILITY_HEADER: &[&str] = &[
    "labeler_id",
    "true_class_id",
    "asked_class_id",
    "alpha",
    "beta",
    "mean",
    "variance",
];
pub const THETA_HEADER: &[&str] = &["labeler_id", "true_class_id", "asked_class_id", "theta"];

/// Locale-independent float with 9 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds `x` to what [`fmt_float`] preserves.
pub fn round_float(x: f64) -> f64 {
    fmt_float(x).parse().expect("formatted float parses")
}

/// Rows of a delimited file after the header, with their line numbers.
pub struct Rows {
    source: String,
    width: usize,
    lines: Vec<(usize, String)>,
}

impl Rows {
    /// Reads all rows and checks the header. Blank lines are rejected except
    /// for a missing final newline.
    pub fn parse(reader: impl Read, source: &str, header: &[&str]) -> Result<Self> {
        let mut lines = Vec::new();
        let mut seen_header = false;
        for (i, line) in BufReader::new(reader).split(b'\n').enumerate() {
            let number = i + 1;
            let line = String::from_utf8(line?).map_err(|_| format_error(source, number, "invalid UTF-8"))?;
            if line.ends_with('\r') {
                return Err(format_error(source, number, "CRLF line ending; files must use LF"));
            }
            if !seen_header {
                let fields: Vec<&str> = line.split(',').collect();
                if fields != header {
                    return Err(format_error(
                        source,
                        number,
                        format!("expected header `{}`, found `{line}`", header.join(",")),
                    ));
                }
                seen_header = true;
                continue;
            }
            if line.is_empty() {
                return Err(format_error(source, number, "empty line"));
            }
            lines.push((number, line));
        }
        if !seen_header {
            return Err(format_error(source, 1, "missing header"));
        }
        Ok(Self {
            source: source.to_string(),
            width: header.len(),
            lines,
        })
    }

    pub fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(file, &path.display().to_string(), header)
    }

    /// Visits `(line number, fields)` of every row.
    pub fn each(&self, mut f: impl FnMut(&RowCtx, &[&str]) -> Result<()>) -> Result<()> {
        for (number, line) in &self.lines {
            let ctx = RowCtx {
                source: &self.source,
                line: *number,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != self.width {
                return Err(ctx.error(format!("expected {} fields, found {}", self.width, fields.len())));
            }
            f(&ctx, &fields)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Location of the row being parsed.
pub struct RowCtx<'a> {
    pub source: &'a str,
    pub line: usize,
}

impl RowCtx<'_> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        format_error(self.source, self.line, message)
    }

    /// Wraps any error raised while applying the row.
    pub fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| self.error(e.to_string()))
    }

    pub fn id(&self, field: &str, what: &str) -> Result<String> {
        if is_valid_id(field) {
            Ok(field.to_string())
        } else {
            Err(self.error(format!("invalid {what} {field:?}")))
        }
    }

    pub fn class(&self, classes: &ClassSpace, field: &str) -> Result<usize> {
        classes
            .index_of(field)
            .ok_or_else(|| self.error(format!("unknown class id {field:?}")))
    }

    pub fn float(&self, field: &str, what: &str) -> Result<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(format!("invalid {what} {field:?}"))),
        }
    }
}

fn format_error(source: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

/// Buffered writer of one delimited file.
pub struct TableWriter<W: Write> {
    out: BufWriter<W>,
}

impl<W: Write> TableWriter<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut w = Self {
            out: BufWriter::new(out),
        };
        w.row(header)?;
        Ok(w)
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.out.write_all(b",")?;
            }
            self.out.write_all(f.as_ref().as_bytes())?;
        }
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

// ---------------------------------------------------------------- classes

pub fn parse_classes(reader: impl Read, source: &str) -> Result<ClassSpace> {
    let rows = Rows::parse(reader, source, CLASSES_HEADER)?;
    let mut classes = Vec::with_capacity(rows.len());
    rows.each(|ctx, f| {
        let id = ctx.id(f[0], "class id")?;
        if f[1].is_empty() {
            return Err(ctx.error("empty class name"));
        }
        if classes.iter().any(|c: &ClassInfo| c.id == id) {
            return Err(ctx.error(format!("duplicate class id {id:?}")));
        }
        classes.push(ClassInfo {
            id,
            name: f[1].to_string(),
        });
        Ok(())
    })?;
    ClassSpace::new(classes).map_err(|e| format_error(source, rows.len() + 1, e.to_string()))
}

pub fn load_classes(path: &Path) -> Result<ClassSpace> {
    parse_classes(open(path)?, &path.display().to_string())
}

pub fn write_classes(classes: &ClassSpace, out: impl Write) -> Result<()> {
    let mut w = TableWriter::new(out, CLASSES_HEADER)?;
    for c in classes.classes() {
        if c.name.contains([',', '\n', '\r']) {
            return Err(Error::invalid(format!("class name {:?} contains a delimiter", c.name)));
        }
        w.row(&[&c.id, &c.name])?;
    }
    w.finish()
}

pub fn save_classes(classes: &ClassSpace, path: &Path) -> Result<()> {
    write_classes(classes, create(path)?)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })
}

// ------------------------------------------------------------------ votes

/// Parses a vote file. Yes/no rows name the asked class and answer
/// `yes`/`no`; full rows leave `class_id` empty and answer with the chosen
/// class id.
pub fn parse_votes(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<VoteTable> {
    let rows = Rows::parse(reader, source, VOTES_HEADER)?;
    let mut table = VoteTable::new(classes.len());
    rows.each(|ctx, f| {
        let labeler = LabelerId::new(ctx.id(f[0], "labeler id")?);
        let object = ObjectId::new(ctx.id(f[1], "object id")?);
        match f[3] {
            "yn" => {
                let class = ctx.class(classes, f[2])?;
                let response = match f[4] {
                    "yes" => ResponsePair::YES,
                    "no" => ResponsePair::NO,
                    other => return Err(ctx.error(format!("yes/no response must be yes or no, found {other:?}"))),
                };
                ctx.wrap(table.insert_yn(labeler, object, class, response))
            }
            "full" => {
                if !f[2].is_empty() {
                    return Err(ctx.error("full rows must leave class_id empty"));
                }
                let chosen = ctx.class(classes, f[4])?;
                ctx.wrap(table.insert_full(labeler, object, chosen))
            }
            other => Err(ctx.error(format!("question_type must be yn or full, found {other:?}"))),
        }
    })?;
    Ok(table)
}

pub fn load_votes(path: &Path, classes: &ClassSpace) -> Result<VoteTable> {
    parse_votes(open(path)?, &path.display().to_string(), classes)
}

/// Writes yes/no rows then full rows, each in sorted key order.
pub fn write_votes(table: &VoteTable, classes: &ClassSpace, out: impl Write) -> Result<()> {
    check_width(table.num_classes(), classes)?;
    let mut w = TableWriter::new(out, VOTES_HEADER)?;
    for (j, i, k, r) in table.yn_votes() {
        let answer = if r.is_yes() { "yes" } else { "no" };
        w.row(&[j.as_str(), i.as_str(), classes.id(k), "yn", answer])?;
    }
    for (j, i, c) in table.full_votes() {
        w.row(&[j.as_str(), i.as_str(), "", "full", classes.id(c)])?;
    }
    w.finish()
}

pub fn save_votes(table: &VoteTable, classes: &ClassSpace, path: &Path) -> Result<()> {
    write_votes(table, classes, create(path)?)
}

fn check_width(k: usize, classes: &ClassSpace) -> Result<()> {
    if k != classes.len() {
        return Err(Error::consistency(format!(
            "data has {k} classes but the class file lists {}",
            classes.len()
        )));
    }
    Ok(())
}

// ----------------------------------------------------------------- labels

pub fn parse_labels(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<LabelAssignment> {
    let rows = Rows::parse(reader, source, LABELS_HEADER)?;
    let mut labels = LabelAssignment::new();
    rows.each(|ctx, f| {
        let object = ObjectId::new(ctx.id(f[0], "object id")?);
        let class = ctx.class(classes, f[1])?;
        if labels.contains(&object) {
            return Err(ctx.error(format!("duplicate label for object {object}")));
        }
        labels.insert(object, class);
        Ok(())
    })?;
    Ok(labels)
}

pub fn load_labels(path: &Path, classes: &ClassSpace) -> Result<LabelAssignment> {
    parse_labels(open(path)?, &path.display().to_string(), classes)
}

pub fn write_labels(labels: &LabelAssignment, classes: &ClassSpace, out: impl Write) -> Result<()> {
    labels.validate(classes.len())?;
    let mut w = TableWriter::new(out, LABELS_HEADER)?;
    for (o, c) in labels.iter() {
        w.row(&[o.as_str(), classes.id(c)])?;
    }
    w.finish()
}

pub fn save_labels(labels: &LabelAssignment, classes: &ClassSpace, path: &Path) -> Result<()> {
    write_labels(labels, classes, create(path)?)
}

// ---------------------------------------------------------------- objects

/// What the labeling interface shows for an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    None,
    /// Image URL or path.
    Image(String),
    /// Irregular time series as `(time, value)` pairs.
    Series(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub payload: Payload,
}

/// Series payloads are written as `time:value` pairs separated by `;`.
pub fn parse_objects(reader: impl Read, source: &str) -> Result<Vec<ObjectRecord>> {
    let rows = Rows::parse(reader, source, OBJECTS_HEADER)?;
    let mut out: Vec<ObjectRecord> = Vec::with_capacity(rows.len());
    let mut seen = std::collections::BTreeSet::new();
    rows.each(|ctx, f| {
        let id = ObjectId::new(ctx.id(f[0], "object id")?);
        if !seen.insert(id.clone()) {
            return Err(ctx.error(format!("duplicate object {id}")));
        }
        let payload = match f[1] {
            "none" if f[2].is_empty() => Payload::None,
            "none" => return Err(ctx.error("payload must be empty for kind none")),
            "image" if !f[2].is_empty() => Payload::Image(f[2].to_string()),
            "image" => return Err(ctx.error("empty image payload")),
            "series" => {
                let mut points = Vec::new();
                for pair in f[2].split(';').filter(|p| !p.is_empty()) {
                    let (t, v) = pair
                        .split_once(':')
                        .ok_or_else(|| ctx.error(format!("series point {pair:?} is not time:value")))?;
                    points.push((ctx.float(t, "series time")?, ctx.float(v, "series value")?));
                }
                Payload::Series(points)
            }
            other => return Err(ctx.error(format!("payload_kind must be none, image or series, found {other:?}"))),
        };
        out.push(ObjectRecord { id, payload });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_objects(path: &Path) -> Result<Vec<ObjectRecord>> {
    parse_objects(open(path)?, &path.display().to_string())
}

pub fn write_objects(objects: &[ObjectRecord], out: impl Write) -> Result<()> {
    let mut w = TableWriter::new(out, OBJECTS_HEADER)?;
    for o in objects {
        let (kind, payload) = match &o.payload {
            Payload::None => ("none", String::new()),
            Payload::Image(url) => {
                if url.contains([',', '\n', '\r']) {
                    return Err(Error::invalid(format!("image payload {url:?} contains a delimiter")));
                }
                ("image", url.clone())
            }
            Payload::Series(points) => (
                "series",
                points
                    .iter()
                    .map(|(t, v)| format!("{}:{}", fmt_float(*t), fmt_float(*v)))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
        };
        w.row(&[o.id.as_str(), kind, &payload])?;
    }
    w.finish()
}

pub fn save_objects(objects: &[ObjectRecord], path: &Path) -> Result<()> {
    write_objects(objects, create(path)?)
}

// ------------------------------------------------------------ predictions

/// Long format: one row per (object, class). Probabilities are renormalized
/// after parsing to undo rounding.
pub fn parse_predictions(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<LabelPosterior> {
    let rows = Rows::parse(reader, source, PREDICTIONS_HEADER)?;
    let k = classes.len();
    let mut pending: std::collections::BTreeMap<ObjectId, (usize, Vec<Option<f64>>)> = Default::default();
    rows.each(|ctx, f| {
        let object = ObjectId::new(ctx.id(f[0], "object id")?);
        let class = ctx.class(classes, f[1])?;
        let p = ctx.float(f[2], "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ctx.error(format!("probability {p} outside [0, 1]")));
        }
        let entry = pending.entry(object.clone()).or_insert_with(|| (ctx.line, vec![None; k]));
        if entry.1[class].replace(p).is_some() {
            return Err(ctx.error(format!("duplicate probability for object {object}, class {}", f[1])));
        }
        Ok(())
    })?;
    let mut out = LabelPosterior::new();
    for (object, (line, probs)) in pending {
        let probs: Option<Vec<f64>> = probs.into_iter().collect();
        let mut probs = probs.ok_or_else(|| format_error(source, line, format!("object {object} lacks some classes")))?;
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(format_error(source, line, format!("probabilities of object {object} sum to {total}")));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        out.insert(object, probs).map_err(|e| format_error(source, line, e.to_string()))?;
    }
    Ok(out)
}

pub fn load_predictions(path: &Path, classes: &ClassSpace) -> Result<LabelPosterior> {
    parse_predictions(open(path)?, &path.display().to_string(), classes)
}

pub fn write_predictions(labels: &LabelPosterior, classes: &ClassSpace, out: impl Write) -> Result<()> {
    let mut w = TableWriter::new(out, PREDICTIONS_HEADER)?;
    for (o, probs) in labels.iter() {
        check_width(probs.len(), classes)?;
        for (c, p) in probs.iter().enumerate() {
            w.row(&[o.as_str(), classes.id(c), &fmt_float(*p)])?;
        }
    }
    w.finish()
}

pub fn save_predictions(labels: &LabelPosterior, classes: &ClassSpace, path: &Path) -> Result<()> {
    write_predictions(labels, classes, create(path)?)
}

// ------------------------------------------------------------ credibility

/// Beta posterior per cell. The `mean` and `variance` columns are derived
/// and only checked for being numbers when reading.
pub fn parse_credibility(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<CredibilityPosterior> {
    let rows = Rows::parse(reader, source, CREDIBILITY_HEADER)?;
    let k = classes.len();
    let mut grids: std::collections::BTreeMap<LabelerId, (usize, Vec<Option<BetaParams>>)> = Default::default();
    rows.each(|ctx, f| {
        let labeler = LabelerId::new(ctx.id(f[0], "labeler id")?);
        let t = ctx.class(classes, f[1])?;
        let a = ctx.class(classes, f[2])?;
        let beta = ctx.wrap(BetaParams::new(ctx.float(f[3], "alpha")?, ctx.float(f[4], "beta")?))?;
        ctx.float(f[5], "mean")?;
        ctx.float(f[6], "variance")?;
        let entry = grids.entry(labeler.clone()).or_insert_with(|| (ctx.line, vec![None; k * k]));
        if entry.1[t * k + a].replace(beta).is_some() {
            return Err(ctx.error(format!("duplicate cell for labeler {labeler}")));
        }
        Ok(())
    })?;
    let mut out = CredibilityPosterior::new(k);
    for (labeler, (line, cells)) in grids {
        let cells: Option<Vec<BetaParams>> = cells.into_iter().collect();
        let cells = cells.ok_or_else(|| format_error(source, line, format!("labeler {labeler} lacks some cells")))?;
        out.insert(labeler, cells)?;
    }
    Ok(out)
}

pub fn load_credibility(path: &Path, classes: &ClassSpace) -> Result<CredibilityPosterior> {
    parse_credibility(open(path)?, &path.display().to_string(), classes)
}

pub fn write_credibility(posterior: &CredibilityPosterior, classes: &ClassSpace, out: impl Write) -> Result<()> {
    check_width(posterior.num_classes(), classes)?;
    let k = classes.len();
    let mut w = TableWriter::new(out, CREDIBILITY_HEADER)?;
    for (j, grid) in posterior.iter() {
        for (cell, b) in grid.iter().enumerate() {
            w.row(&[
                j.as_str(),
                classes.id(cell / k),
                classes.id(cell % k),
                &fmt_float(b.alpha),
                &fmt_float(b.beta),
                &fmt_float(b.mean()),
                &fmt_float(b.variance()),
            ])?;
        }
    }
    w.finish()
}

pub fn save_credibility(posterior: &CredibilityPosterior, classes: &ClassSpace, path: &Path) -> Result<()> {
    write_credibility(posterior, classes, create(path)?)
}

// ----------------------------------------------------- point credibilities

/// Point values per cell, e.g. the simulated ground truth.
pub fn parse_theta(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<Credibilities> {
    let rows = Rows::parse(reader, source, THETA_HEADER)?;
    let k = classes.len();
    let mut grids: std::collections::BTreeMap<LabelerId, (usize, Vec<Option<f64>>)> = Default::default();
    rows.each(|ctx, f| {
        let labeler = LabelerId::new(ctx.id(f[0], "labeler id")?);
        let t = ctx.class(classes, f[1])?;
        let a = ctx.class(classes, f[2])?;
        let theta = ctx.float(f[3], "theta")?;
        let entry = grids.entry(labeler.clone()).or_insert_with(|| (ctx.line, vec![None; k * k]));
        if entry.1[t * k + a].replace(theta).is_some() {
            return Err(ctx.error(format!("duplicate cell for labeler {labeler}")));
        }
        Ok(())
    })?;
    grids
        .into_iter()
        .map(|(labeler, (line, cells))| {
            let cells: Option<Vec<f64>> = cells.into_iter().collect();
            let cells = cells.ok_or_else(|| format_error(source, line, format!("labeler {labeler} lacks some cells")))?;
            let m = CredibilityMatrix::new(k, cells).map_err(|e| format_error(source, line, e.to_string()))?;
            Ok((labeler, m))
        })
        .collect()
}

pub fn load_theta(path: &Path, classes: &ClassSpace) -> Result<Credibilities> {
    parse_theta(open(path)?, &path.display().to_string(), classes)
}

pub fn write_theta(thetas: &Credibilities, classes: &ClassSpace, out: impl Write) -> Result<()> {
    let mut w = TableWriter::new(out, THETA_HEADER)?;
    for (j, m) in thetas {
        check_width(m.num_classes(), classes)?;
        for (cell, v) in m.values().iter().enumerate() {
            let k = classes.len();
            w.row(&[j.as_str(), classes.id(cell / k), classes.id(cell % k), &fmt_float(*v)])?;
        }
    }
    w.finish()
}

pub fn save_theta(thetas: &Credibilities, classes: &ClassSpace, path: &Path) -> Result<()> {
    write_theta(thetas, classes, create(path)?)
}

// ---------------------------------------------------------------- samples

#[derive(Debug, Serialize)]
struct SamplesHeader<'a> {
    classes: Vec<&'a str>,
    labelers: Vec<&'a str>,
    objects: Vec<&'a str>,
    burn_in: usize,
    thinning: usize,
}

#[derive(Debug, Serialize)]
struct SampleLine<'a> {
    chain: usize,
    sweep: usize,
    /// Class index per object, in header order.
    z: &'a [u16],
    /// Cells `(labeler·K + true)·K + asked` in header order.
    theta: &'a [f64],
    pi: &'a [f64],
}

/// JSON-lines trace: one header object, then one line per retained draw.
pub fn write_samples_jsonl(samples: &PosteriorSamples, classes: &ClassSpace, out: impl Write) -> Result<()> {
    check_width(samples.problem.num_classes, classes)?;
    let mut out = BufWriter::new(out);
    let header = SamplesHeader {
        classes: classes.classes().iter().map(|c| c.id.as_str()).collect(),
        labelers: samples.problem.labelers.iter().map(LabelerId::as_str).collect(),
        objects: samples.problem.objects.iter().map(ObjectId::as_str).collect(),
        burn_in: samples.burn_in,
        thinning: samples.thinning,
    };
    serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    for chain in 0..samples.n_chains() {
        for t in 0..samples.n_retained() {
            let line = SampleLine {
                chain,
                sweep: samples.sweep_of(t),
                z: samples.z(chain, t),
                theta: samples.theta(chain, t),
                pi: samples.pi(chain, t),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

// ----------------------------------------------------------------- legacy

/// Converts a wide vote table into a [`VoteTable`].
///
/// Expected layout: a header `labeler,object,<class id>...[,full]` followed
/// by one row per (labeler, object). Class cells hold `1` (yes), `0` (no)
/// or are empty / `nan` when the question was not asked. The optional
/// `full` column holds the class id chosen in a full question. Extra
/// whitespace around fields is ignored.
pub fn convert_legacy_votes(reader: impl Read, source: &str, classes: &ClassSpace) -> Result<VoteTable> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| format_error(source, 1, "missing header"))?;
    let header = header?;
    let columns: Vec<String> = header.trim_end_matches('\r').split(',').map(|s| s.trim().to_string()).collect();
    if columns.len() < 3 {
        return Err(format_error(source, 1, "expected labeler, object and class columns"));
    }
    let has_full = columns.last().is_some_and(|c| c == "full");
    let class_columns = &columns[2..columns.len() - has_full as usize];
    let class_index: Vec<usize> = class_columns
        .iter()
        .map(|c| {
            classes
                .index_of(c)
                .ok_or_else(|| format_error(source, 1, format!("unknown class column {c:?}")))
        })
        .collect::<Result<_>>()?;
    let mut table = VoteTable::new(classes.len());
    for (i, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let ctx = RowCtx { source, line: i + 1 };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(ctx.error(format!("expected {} fields, found {}", columns.len(), fields.len())));
        }
        let labeler = LabelerId::new(ctx.id(fields[0], "labeler id")?);
        let object = ObjectId::new(ctx.id(fields[1], "object id")?);
        for (col, &class) in class_index.iter().enumerate() {
            let response = match fields[2 + col] {
                "" | "nan" | "NaN" | "NA" => continue,
                "1" | "1.0" | "yes" => ResponsePair::YES,
                "0" | "0.0" | "no" => ResponsePair::NO,
                other => return Err(ctx.error(format!("unrecognized response {other:?}"))),
            };
            ctx.wrap(table.insert_yn(labeler.clone(), object.clone(), class, response))?;
        }
        if has_full {
            let chosen = fields[fields.len() - 1];
            if !matches!(chosen, "" | "nan" | "NaN" | "NA") {
                let c = ctx.class(classes, chosen)?;
                ctx.wrap(table.insert_full(labeler, object, c))?;
            }
        }
    }
    Ok(table)
}
