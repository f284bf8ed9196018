//! Error classification and deterministic output formatting.

use std::fmt;
use std::path::{Path, PathBuf};

use polarq::algebra::AlgebraError;
use polarq::dmc::DmcError;
use polarq::linmac::LinmacError;
use polarq::macpolar::MacError;
use polarq::polarcode::CodeError;
use polarq::polarize::PolarizeError;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or syntactically invalid input. Exit code 1.
    Parse(String),
    /// Well-formed input rejected by a precondition. Exit code 2.
    Validation(String),
    /// A configured size or depth limit was hit. Exit code 3.
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Resource(m) => write!(f, "resource limit: {m}"),
        }
    }
}

impl From<AlgebraError> for CliError {
    fn from(e: AlgebraError) -> Self {
        match e {
            AlgebraError::AlphabetTooLarge { .. } => CliError::Resource(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DmcError> for CliError {
    fn from(e: DmcError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PolarizeError> for CliError {
    fn from(e: PolarizeError) -> Self {
        match e {
            PolarizeError::OutputExplosion { .. } | PolarizeError::DepthTooLarge(_) => {
                CliError::Resource(e.to_string())
            }
            PolarizeError::Algebra(a) => a.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CodeError> for CliError {
    fn from(e: CodeError) -> Self {
        match e {
            CodeError::Polarize(p) => p.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MacError> for CliError {
    fn from(e: MacError) -> Self {
        match e {
            MacError::UserCountTooLarge { .. } | MacError::BlockTooLarge { .. } => CliError::Resource(e.to_string()),
            MacError::Polarize(p) => p.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<LinmacError> for CliError {
    fn from(e: LinmacError) -> Self {
        match e {
            LinmacError::LatticeTooLarge { .. } | LinmacError::AlphabetTooLarge(_) => CliError::Resource(e.to_string()),
            LinmacError::Mac(m) => m.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))
}

/// Parses JSON in two stages so syntax errors and semantic rejections get
/// different exit codes.
pub fn parse_json<F, T, E>(text: &str, origin: &str) -> Result<T, CliError>
where
    F: serde::de::DeserializeOwned,
    T: TryFrom<F, Error = E>,
    E: Into<CliError>,
{
    let raw: F = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("{origin}: {e}")))?;
    T::try_from(raw).map_err(Into::into)
}

/// Twelve significant digits, plain notation for moderate magnitudes.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `# polarq <version> command=<cmd> seed=<seed> key=value ...`
pub fn header(command: &str, seed: u64, config: &[(&str, String)]) -> String {
    let mut s = format!("# polarq {} command={} seed={}", env!("CARGO_PKG_VERSION"), command, seed);
    for (k, v) in config {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

/// Accumulates CSV rows after a header comment line, plus `#` footer lines.
pub struct CsvReport {
    head: String,
    body: csv::Writer<Vec<u8>>,
    footer: Vec<String>,
}

impl CsvReport {
    pub fn new(head: String, columns: &[&str]) -> Self {
        let mut body = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        body.write_record(columns).expect("in-memory write");
        CsvReport { head, body, footer: Vec::new() }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        self.body.write_record(fields).expect("in-memory write");
    }

    pub fn footer(&mut self, key: &str, value: String) {
        self.footer.push(format!("# {key}={value}"));
    }

    pub fn note(&mut self, text: &str) {
        self.footer.push(format!("# {text}"));
    }

    pub fn finish(self) -> String {
        let body = String::from_utf8(self.body.into_inner().expect("in-memory flush")).expect("utf-8 fields");
        let mut out = self.head;
        out.push('\n');
        out.push_str(&body);
        for f in self.footer {
            out.push_str(&f);
            out.push('\n');
        }
        out
    }
}

/// A JSON document whose first line carries the header string.
pub fn json_document(head: &str, key: &str, body: &str) -> String {
    format!("{{\"header\": {},\n\"{}\": {}\n}}\n", serde_json::to_string(head).expect("string"), key, body)
}

/// Extracts `key` from a [`json_document`], or returns the whole value if it
/// has no header wrapper.
pub fn json_payload(text: &str, key: &str, origin: &str) -> Result<String, CliError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Parse(format!("{origin}: {e}")))?;
    let inner = match v.get(key) {
        Some(inner) if v.get("header").is_some() => inner.clone(),
        _ => v,
    };
    Ok(inner.to_string())
}

pub fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
