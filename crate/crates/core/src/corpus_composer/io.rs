//! Line-delimited corpus files: one manifest header line, then one sample
//! per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Corpus, Counts, Manifest, TurnSample};

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing manifest header")]
    MissingManifest,
    #[error("manifest counts disagree with the samples: {0}")]
    CountMismatch(String),
}

#[derive(Serialize)]
struct HeaderRef<'a> {
    manifest: &'a Manifest,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    manifest: Manifest,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CorpusIoError + '_ {
    move |source| CorpusIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_lines<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(
        &mut out,
        &HeaderRef {
            manifest: &corpus.manifest,
        },
    )?;
    out.write_all(b"\n")?;
    for sample in &corpus.samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_corpus_string(corpus: &Corpus) -> String {
    let mut buf = Vec::new();
    write_lines(corpus, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusIoError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_lines(corpus, BufWriter::new(file)).map_err(io_err(path))
}

fn parse_lines<I: Iterator<Item = std::io::Result<String>>>(
    lines: I,
    on_io: impl Fn(std::io::Error) -> CorpusIoError,
) -> Result<Corpus, CorpusIoError> {
    let mut manifest = None;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(&on_io)?;
        let number = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if manifest.is_none() {
            let header: Header = serde_json::from_str(&line).map_err(|e| CorpusIoError::Parse {
                line: number,
                message: format!("bad manifest header: {e}"),
            })?;
            manifest = Some(header.manifest);
            continue;
        }
        let sample: TurnSample = serde_json::from_str(&line).map_err(|e| CorpusIoError::Parse {
            line: number,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    let manifest = manifest.ok_or(CorpusIoError::MissingManifest)?;
    let actual = Counts::tally(&samples);
    if actual != manifest.counts {
        return Err(CorpusIoError::CountMismatch(format!(
            "header says {} samples, file has {}",
            manifest.counts.total, actual.total
        )));
    }
    Ok(Corpus { manifest, samples })
}

pub fn read_corpus_str(text: &str) -> Result<Corpus, CorpusIoError> {
    parse_lines(text.lines().map(|l| Ok(l.to_string())), |source| CorpusIoError::Io {
        path: "<memory>".into(),
        source,
    })
}

pub fn read_corpus(path: &Path) -> Result<Corpus, CorpusIoError> {
    let file = File::open(path).map_err(io_err(path))?;
    parse_lines(BufReader::new(file).lines(), io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_composer::{compose, CompositionSpec, RefinementMode};
    use crate::schema::Schema;
    use crate::template_engine::TemplateBank;

    fn corpus() -> Corpus {
        let targets = [("train".to_string(), 12)].into_iter().collect();
        let spec = CompositionSpec::percentage("t", targets, 3).with_refinement(RefinementMode::None);
        compose(&Schema::builtin(), &spec, &TemplateBank::builtin(), None).unwrap()
    }

    #[test]
    fn round_trip() {
        let c = corpus();
        let text = write_corpus_string(&c);
        assert_eq!(text.lines().count(), 13);
        assert_eq!(read_corpus_str(&text).unwrap(), c);
    }

    #[test]
    fn truncation_names_the_line() {
        let text = write_corpus_string(&corpus());
        let cut = &text[..text.len() - 40];
        match read_corpus_str(cut) {
            Err(CorpusIoError::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("unexpected {other:?}"),
        }
        let dropped: Vec<&str> = text.lines().take(5).collect();
        assert!(matches!(
            read_corpus_str(&dropped.join("\n")),
            Err(CorpusIoError::CountMismatch(_))
        ));
        assert!(matches!(read_corpus_str(""), Err(CorpusIoError::MissingManifest)));
    }
}
