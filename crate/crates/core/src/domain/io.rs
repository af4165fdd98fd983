//! JSONL ingestion for corpora, queries and relevance labels, and the record
//! types written by the command-line tools.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Corpus, DocId, Document, Query};
use crate::error::{ListkError, Result};

/// A document id as it appeared in the source file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExternalId {
    Int(i64),
    Str(String),
}

impl fmt::Display for ExternalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExternalId::Int(i) => write!(f, "{i}"),
            ExternalId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    id: ExternalId,
    #[serde(default)]
    text: String,
    #[serde(default)]
    score: Option<f64>,
}

#[derive(Deserialize)]
struct QueryLine {
    id: ExternalId,
    text: String,
}

/// One graded relevance judgement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub query_id: String,
    pub doc_id: ExternalId,
    pub relevance: f64,
}

/// One ranked output row: `rank` is 1-based, most relevant first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query_id: String,
    pub rank: usize,
    pub doc_id: ExternalId,
    pub stage_costs: BTreeMap<String, u64>,
}

fn parse_lines<T, R>(reader: R) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| ListkError::Ingest {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads a corpus from JSONL lines `{"id": .., "text": .., "score": ..}`.
///
/// Documents are numbered 0.. in file order; the original ids stay available
/// through [`Corpus::external_id`].
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let lines: Vec<CorpusLine> = parse_lines(reader)?;
    let mut seen = std::collections::HashSet::new();
    let mut docs = Vec::with_capacity(lines.len());
    let mut ext = Vec::with_capacity(lines.len());
    for (i, l) in lines.into_iter().enumerate() {
        if !seen.insert(l.id.clone()) {
            return Err(ListkError::Ingest {
                line: i + 1,
                message: format!("duplicate document id {}", l.id),
            });
        }
        docs.push(Document {
            id: DocId(i as u32),
            text: l.text,
            true_score: l.score,
        });
        ext.push(l.id);
    }
    Ok(Corpus::new(docs)?.with_external_ids(ext))
}

pub fn read_queries<R: BufRead>(reader: R) -> Result<Vec<Query>> {
    let lines: Vec<QueryLine> = parse_lines(reader)?;
    Ok(lines
        .into_iter()
        .map(|l| Query::new(l.id.to_string(), l.text))
        .collect())
}

pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabelRecord>> {
    parse_lines(reader)
}

pub fn read_results<R: BufRead>(reader: R) -> Result<Vec<ResultRecord>> {
    parse_lines(reader)
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// One row of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub query_id: String,
    pub metric: String,
    pub k: usize,
    pub value: f64,
}

/// Writes rows as CSV with header `query_id,metric,k,value`.
pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| ListkError::Io(e.into()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_with_mixed_id_types() {
        let src = r#"{"id": "doc-a", "text": "alpha", "score": 2}
{"id": 17, "text": "beta", "score": 0.5}

{"id": "c", "text": "gamma]", "score": 1}
"#;
        let c = read_corpus(src.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.documents()[2].text, "gamma]");
        assert_eq!(
            c.external_id(DocId(0)),
            Some(&ExternalId::Str("doc-a".into()))
        );
        assert_eq!(c.external_id(DocId(1)), Some(&ExternalId::Int(17)));
        assert_eq!(c.lookup_external(&ExternalId::Int(17)), Some(DocId(1)));
        assert!(c.is_scored());
    }

    #[test]
    fn corpus_errors_report_line() {
        let src = "{\"id\": 1, \"text\": \"a\"}\nnot json\n";
        match read_corpus(src.as_bytes()) {
            Err(ListkError::Ingest { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "{\"id\": 1}\n{\"id\": 1}\n";
        assert!(read_corpus(dup.as_bytes()).is_err());
    }

    #[test]
    fn metrics_csv_header() {
        let mut buf = Vec::new();
        write_metrics_csv(
            &mut buf,
            &[MetricRow {
                query_id: "q,1".into(),
                metric: "recall".into(),
                k: 10,
                value: 0.5,
            }],
        )
        .unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "query_id,metric,k,value\n\"q,1\",recall,10,0.5\n");
    }

    #[test]
    fn queries_and_labels() {
        let q = read_queries("{\"id\": 3, \"text\": \"find x\"}\n".as_bytes()).unwrap();
        assert_eq!(q[0].id, "3");
        let l =
            read_labels("{\"query_id\": \"3\", \"doc_id\": \"d\", \"relevance\": 1}\n".as_bytes())
                .unwrap();
        assert_eq!(l[0].doc_id, ExternalId::Str("d".into()));
    }
}
