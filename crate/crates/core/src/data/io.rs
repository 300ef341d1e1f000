use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Conversation, Dataset, Splits, Utterance};
use crate::error::{Error, Result};
use crate::modality::Modality;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UtteranceRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default)]
    t: Option<Vec<f64>>,
    #[serde(default)]
    v: Option<Vec<f64>>,
    #[serde(default)]
    a: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConversationRecord {
    id: String,
    utterances: Vec<UtteranceRecord>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a JSONL dataset, deriving the label vocabulary (sorted).
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_dataset(&read(path.as_ref())?, None)
}

/// Loads a JSONL dataset against a fixed vocabulary; unknown labels are
/// schema errors.
pub fn load_dataset_with_labels(path: impl AsRef<Path>, labels: &[String]) -> Result<Dataset> {
    parse_dataset(&read(path.as_ref())?, Some(labels))
}

pub fn parse_dataset(text: &str, vocab: Option<&[String]>) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConversationRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    let labels: Vec<String> = match vocab {
        Some(v) => v.to_vec(),
        None => records
            .iter()
            .flat_map(|(_, r)| r.utterances.iter().filter_map(|u| u.label.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut dims: Option<[usize; 3]> = None;
    let mut conversations = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let mut utterances = Vec::with_capacity(rec.utterances.len());
        for u in rec.utterances {
            let schema = |message: String| Error::Schema { line, message };
            let take = |m: Modality, f: Option<Vec<f64>>| {
                f.ok_or_else(|| schema(format!("utterance {} is missing {m} features", u.id)))
            };
            let features = [
                take(Modality::Textual, u.t)?,
                take(Modality::Visual, u.v)?,
                take(Modality::Acoustic, u.a)?,
            ];
            let got = [features[0].len(), features[1].len(), features[2].len()];
            let want = *dims.get_or_insert(got);
            for m in Modality::ALL {
                let k = m.index();
                if got[k] != want[k] {
                    return Err(Error::Dimension {
                        context: format!("line {line}, {m} features of utterance {}", u.id),
                        expected: want[k],
                        actual: got[k],
                    });
                }
                if let Some(j) = features[k].iter().position(|x| !x.is_finite()) {
                    return Err(schema(format!("utterance {} has non-finite {m}[{j}]", u.id)));
                }
            }
            let label = match u.label {
                None => None,
                Some(l) => Some(
                    labels
                        .iter()
                        .position(|x| *x == l)
                        .ok_or_else(|| schema(format!("utterance {} has unknown label {l:?}", u.id)))?,
                ),
            };
            utterances.push(Utterance {
                id: u.id,
                speaker: u.speaker,
                label,
                features,
            });
        }
        conversations.push(Conversation { id: rec.id, utterances });
    }
    Dataset::new(labels, conversations)
}

/// Serialises to JSONL. Floats are written in shortest round-trip form, so
/// a reload reproduces every bit.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for c in &dataset.conversations {
        let rec = ConversationRecord {
            id: c.id.clone(),
            utterances: c
                .utterances
                .iter()
                .map(|u| UtteranceRecord {
                    id: u.id.clone(),
                    speaker: u.speaker.clone(),
                    label: u.label.map(|l| dataset.labels[l].clone()),
                    t: Some(u.features[0].clone()),
                    v: Some(u.features[1].clone()),
                    a: Some(u.features[2].clone()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_splits(path: impl AsRef<Path>) -> Result<Splits> {
    let path = path.as_ref();
    serde_json::from_str(&read(path)?).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

pub fn save_splits(splits: &Splits, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(splits)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::tiny;

    const MINIMAL: &str = r#"{"id":"d1","utterances":[{"id":"u1","speaker":"A","label":"joy","t":[0.5,1],"v":[2],"a":[-1,0]},{"id":"u2","label":"anger","t":[0,0],"v":[1],"a":[3,3]}]}"#;

    #[test]
    fn loads_minimal_file() {
        let d = parse_dataset(MINIMAL, None).unwrap();
        assert_eq!(d.labels, ["anger", "joy"]);
        assert_eq!(d.dims, [2, 1, 2]);
        let u = &d.conversations[0].utterances;
        assert_eq!(u[0].label, Some(1));
        assert_eq!(u[0].speaker.as_deref(), Some("A"));
        assert_eq!(u[1].label, Some(0));
    }

    #[test]
    fn missing_modality_names_utterance() {
        let text = MINIMAL.replace(r#","v":[1]"#, "");
        match parse_dataset(&text, None) {
            Err(Error::Schema { line: 1, message }) => {
                assert!(message.contains("u2") && message.contains(" v "), "{message}")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distinct_error_kinds() {
        assert!(matches!(parse_dataset("{not json", None), Err(Error::Parse { line: 1, .. })));
        let nan = MINIMAL.replace("[0.5,1]", "[NaN,1]");
        assert!(matches!(parse_dataset(&nan, None), Err(Error::Parse { .. })));
        let short = format!("{MINIMAL}\n\n{}", MINIMAL.replace("\"d1\"", "\"d2\"").replace("[2]", "[2,2]"));
        match parse_dataset(&short, None) {
            Err(Error::Dimension { context, .. }) => assert!(context.starts_with("line 3"), "{context}"),
            other => panic!("{other:?}"),
        }
        let vocab = vec!["joy".to_string()];
        assert!(matches!(parse_dataset(MINIMAL, Some(&vocab)), Err(Error::Schema { .. })));
        let extra = MINIMAL.replace(r#""speaker":"A","#, r#""speeker":"A","#);
        assert!(matches!(parse_dataset(&extra, None), Err(Error::Parse { .. })));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut d = tiny();
        d.conversations[0].utterances[1].features[0] = vec![0.1 + 0.2, std::f64::consts::PI];
        d.conversations[1].utterances[0].features[2] = vec![-1.234_567_890_123_456_7e-300];
        d.conversations[2].utterances[3].speaker = Some("B".into());
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = parse_dataset(std::str::from_utf8(&buf).unwrap(), None).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn splits_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("splits.json");
        let s = Splits {
            train: vec!["a".into()],
            val: vec![],
            test: vec!["b".into()],
        };
        save_splits(&s, &p).unwrap();
        assert_eq!(load_splits(&p).unwrap(), s);
        assert!(matches!(load_dataset(dir.path().join("nope.jsonl")), Err(Error::Io { .. })));
    }
}
