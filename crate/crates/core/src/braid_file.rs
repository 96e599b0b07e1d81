//! Text braid files.
//!
//! ```text
//! # braid v1 m=3 U=65536 shift=0 gen=1f2e3d4c5b6a7988
//! # spec dist=uniform m=3 items=2 U=65536 seed=1 interleave=rr noise=variance jitter=0
//! # label none
//! 1 40211
//! 2 118
//! ```
//!
//! The first line is required; `vals=real` is appended to it for the
//! real-valued second-max construction. The `# spec` and `# label` lines are
//! optional and must precede the records. `gen=-` marks a hand-written file.
//!
//! Labels are `none`, `outliers <id,id,...>` or
//! `disj instance=<yes|no> sets=<{..}{..}...> intersection=<id|->`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::datagen::{spec_hash, Braid, GenSpec, Instance, Label};
use crate::error::{Error, Result};
use crate::model::{BraidItem, StreamId, Universe};

#[derive(Debug, Clone, PartialEq)]
pub struct BraidHeader {
    pub m: usize,
    pub universe: Universe,
    pub shift: i64,
    /// Spec hash, or `-` when the file was not generated.
    pub gen: String,
    pub real: bool,
    pub spec: Option<String>,
    pub label: Label,
}

impl BraidHeader {
    fn first_line(&self) -> String {
        let mut s = format!(
            "# braid v1 m={} U={} shift={} gen={}",
            self.m,
            self.universe.top(),
            self.shift,
            self.gen
        );
        if self.real {
            s.push_str(" vals=real");
        }
        s
    }
}

/// Write `braid` to `out`. With a spec, its canonical line and hash are recorded.
pub fn write_braid_to<W: Write>(out: W, braid: &Braid, spec: Option<&GenSpec>) -> Result<()> {
    let header = BraidHeader {
        m: braid.m,
        universe: braid.universe,
        shift: braid.shift,
        gen: spec.map_or_else(|| "-".to_string(), GenSpec::hash),
        real: braid.real,
        spec: spec.map(GenSpec::to_string),
        label: braid.label.clone(),
    };
    let mut out = BufWriter::new(out);
    writeln!(out, "{}", header.first_line())?;
    if let Some(spec) = &header.spec {
        writeln!(out, "# spec {spec}")?;
    }
    writeln!(out, "# label {}", encode_label(&header.label))?;
    for &(id, v) in &braid.records {
        writeln!(out, "{id} {v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Write `braid` to `path` atomically: a sibling temp file renamed into place.
pub fn write_braid(path: &Path, braid: &Braid, spec: Option<&GenSpec>) -> Result<()> {
    write_atomic(path, |f| write_braid_to(f, braid, spec))
}

/// Create `path` through a temp file in the same directory, renamed on success.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut File) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    fill(tmp.as_file_mut())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Forward-only reader: the header is parsed up front, records stream in order.
pub struct BraidReader<R> {
    input: R,
    header: BraidHeader,
    line_no: usize,
    /// A record line read while looking for optional header lines.
    pending: Option<String>,
    count: u64,
}

impl BraidReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: BufRead> BraidReader<R> {
    pub fn new(mut input: R) -> Result<Self> {
        let mut line_no = 0;
        let first = next_line(&mut input, &mut line_no)?
            .ok_or_else(|| format_err(1, "missing `# braid v1` header"))?;
        let mut header = parse_first_line(&first, line_no)?;
        let mut pending = None;
        let mut saw_label = false;
        while let Some(line) = next_line(&mut input, &mut line_no)? {
            if let Some(spec) = line.strip_prefix("# spec ") {
                if header.spec.is_some() || saw_label {
                    return Err(format_err(line_no, "`# spec` must appear once, before `# label`"));
                }
                check_spec_hash(spec, &header.gen, line_no)?;
                header.spec = Some(spec.to_string());
            } else if let Some(label) = line.strip_prefix("# label ") {
                if saw_label {
                    return Err(format_err(line_no, "duplicate `# label` line"));
                }
                header.label = parse_label(label).map_err(|msg| format_err(line_no, &msg))?;
                saw_label = true;
            } else if line.starts_with('#') {
                return Err(format_err(line_no, "unknown header line"));
            } else {
                pending = Some(line);
                break;
            }
        }
        Ok(Self {
            input,
            header,
            line_no,
            pending,
            count: 0,
        })
    }

    pub fn header(&self) -> &BraidHeader {
        &self.header
    }

    /// Records read so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// The next `(id, value)` record, validated against the header.
    pub fn next_record(&mut self) -> Result<Option<(StreamId, f64)>> {
        let line = match self.pending.take() {
            Some(l) => l,
            None => match next_line(&mut self.input, &mut self.line_no)? {
                Some(l) => l,
                None => return Ok(None),
            },
        };
        let record = self.parse_record(&line)?;
        self.count += 1;
        Ok(Some(record))
    }

    /// The next record as an integer item; fails on a `vals=real` file.
    pub fn next_item(&mut self) -> Result<Option<BraidItem>> {
        if self.header.real {
            return Err(Error::InvalidParameter(
                "real-valued braids can only be evaluated by the oracle".into(),
            ));
        }
        let index = self.count;
        Ok(self
            .next_record()?
            .map(|(id, v)| BraidItem::new(id, v as u64, index)))
    }

    /// Read every remaining record into a [`Braid`].
    pub fn into_braid(mut self) -> Result<Braid> {
        let mut records = Vec::new();
        while let Some(r) = self.next_record()? {
            records.push(r);
        }
        Ok(Braid {
            m: self.header.m,
            universe: self.header.universe,
            shift: self.header.shift,
            real: self.header.real,
            records,
            label: self.header.label,
        })
    }

    fn parse_record(&self, line: &str) -> Result<(StreamId, f64)> {
        let err = |msg: String| format_err(self.line_no, &msg);
        let mut fields = line.split_ascii_whitespace();
        let (Some(id), Some(value), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(format!("expected `<stream_id> <value>`, got `{line}`")));
        };
        let id: StreamId = id.parse().map_err(|_| err(format!("bad stream id `{id}`")))?;
        if id < 1 || id > self.header.m as u64 {
            return Err(err(format!("stream id {id} outside [1, {}]", self.header.m)));
        }
        let value = if self.header.real {
            let v: f64 = value.parse().map_err(|_| err(format!("bad value `{value}`")))?;
            if !v.is_finite() {
                return Err(err(format!("bad value `{value}`")));
            }
            v
        } else {
            let v: u64 = value
                .parse()
                .map_err(|_| err(format!("bad integer value `{value}`")))?;
            if !self.header.universe.contains(v) {
                return Err(err(format!(
                    "value {v} outside [1, {}]",
                    self.header.universe.top()
                )));
            }
            v as f64
        };
        Ok((id, value))
    }
}

/// Read a whole braid file.
pub fn read_braid(path: &Path) -> Result<Braid> {
    BraidReader::open(path)?.into_braid()
}

fn format_err(line: usize, msg: &str) -> Error {
    Error::Format {
        line,
        msg: msg.to_string(),
    }
}

/// The next non-blank line without its terminator.
fn next_line<R: BufRead>(input: &mut R, line_no: &mut usize) -> Result<Option<String>> {
    let mut buf = String::new();
    loop {
        buf.clear();
        if input.read_line(&mut buf)? == 0 {
            return Ok(None);
        }
        *line_no += 1;
        let line = buf.trim_end_matches(['\n', '\r']);
        if !line.trim().is_empty() {
            return Ok(Some(line.to_string()));
        }
    }
}

fn parse_first_line(line: &str, line_no: usize) -> Result<BraidHeader> {
    let err = |msg: &str| format_err(line_no, msg);
    let rest = line
        .strip_prefix("# braid v1")
        .ok_or_else(|| err("expected `# braid v1` header"))?;
    let (mut m, mut top, mut shift, mut gen, mut real) = (None, None, None, None, false);
    for field in rest.split_ascii_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(&format!("expected key=value, got `{field}`")))?;
        let bad = || err(&format!("bad value for {key}: `{value}`"));
        match key {
            "m" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
            "U" => top = Some(value.parse::<u64>().map_err(|_| bad())?),
            "shift" => shift = Some(value.parse::<i64>().map_err(|_| bad())?),
            "gen" => gen = Some(value.to_string()),
            "vals" if value == "real" => real = true,
            _ => return Err(err(&format!("unknown header field `{field}`"))),
        }
    }
    let m = m.ok_or_else(|| err("header lacks m="))?;
    if m < 1 {
        return Err(err("m must be at least 1"));
    }
    let universe = Universe::new(top.ok_or_else(|| err("header lacks U="))?)
        .map_err(|e| err(&e.to_string()))?;
    Ok(BraidHeader {
        m,
        universe,
        shift: shift.ok_or_else(|| err("header lacks shift="))?,
        gen: gen.ok_or_else(|| err("header lacks gen="))?,
        real,
        spec: None,
        label: Label::None,
    })
}

fn check_spec_hash(spec: &str, gen: &str, line_no: usize) -> Result<()> {
    let hash = spec_hash(spec);
    if hash != gen {
        return Err(format_err(
            line_no,
            &format!("spec hash {hash} does not match gen={gen}"),
        ));
    }
    Ok(())
}

fn join_ids(ids: &[StreamId]) -> String {
    ids.iter().map(u64::to_string).collect::<Vec<_>>().join(",")
}

fn encode_label(label: &Label) -> String {
    match label {
        Label::None => "none".to_string(),
        Label::Outliers(ids) => format!("outliers {}", join_ids(ids)),
        Label::Disjointness {
            instance,
            sets,
            intersection,
        } => {
            let sets: String = sets.iter().map(|s| format!("{{{}}}", join_ids(s))).collect();
            format!(
                "disj instance={} sets={sets} intersection={}",
                match instance {
                    Instance::Yes => "yes",
                    Instance::No => "no",
                },
                intersection.map_or_else(|| "-".to_string(), |x| x.to_string()),
            )
        }
    }
}

fn parse_ids(s: &str) -> std::result::Result<Vec<StreamId>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse().map_err(|_| format!("bad stream id `{x}` in label")))
        .collect()
}

fn parse_label(s: &str) -> std::result::Result<Label, String> {
    let s = s.trim();
    if s == "none" {
        return Ok(Label::None);
    }
    if let Some(ids) = s.strip_prefix("outliers") {
        return Ok(Label::Outliers(parse_ids(ids.trim())?));
    }
    let rest = s
        .strip_prefix("disj ")
        .ok_or_else(|| format!("unknown label `{s}`"))?;
    let (mut instance, mut sets, mut intersection) = (None, None, None);
    for field in rest.split_ascii_whitespace() {
        match field.split_once('=') {
            Some(("instance", "yes")) => instance = Some(Instance::Yes),
            Some(("instance", "no")) => instance = Some(Instance::No),
            Some(("intersection", "-")) => intersection = Some(None),
            Some(("intersection", x)) => {
                intersection = Some(Some(x.parse().map_err(|_| format!("bad intersection `{x}`"))?))
            }
            Some(("sets", x)) => {
                let body = x
                    .strip_prefix('{')
                    .and_then(|x| x.strip_suffix('}'))
                    .ok_or_else(|| format!("bad sets `{x}`"))?;
                sets = Some(body.split("}{").map(parse_ids).collect::<std::result::Result<_, _>>()?);
            }
            _ => return Err(format!("unknown label field `{field}`")),
        }
    }
    Ok(Label::Disjointness {
        instance: instance.ok_or("label lacks instance=")?,
        sets: sets.ok_or("label lacks sets=")?,
        intersection: intersection.ok_or("label lacks intersection=")?,
    })
}
