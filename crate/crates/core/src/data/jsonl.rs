use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{check_opinion, Dataset, Sample};
use crate::error::{Error, Result};

/// Reads one JSON object per line. The class count is inferred from the
/// widest opinion distribution and the largest gold label.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(fs::File::open(path)?);
    let record_err = |line: usize, message: String| Error::Record {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut samples: Vec<Sample> = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample =
            serde_json::from_str(&line).map_err(|e| record_err(lineno, e.to_string()))?;
        match dim {
            None => dim = Some(sample.features.len()),
            Some(d) if d != sample.features.len() => {
                return Err(record_err(
                    lineno,
                    format!(
                        "{} features, earlier records have {d}",
                        sample.features.len()
                    ),
                ))
            }
            _ => {}
        }
        if sample.features.iter().any(|v| !v.is_finite()) {
            return Err(record_err(lineno, "non-finite feature".into()));
        }
        samples.push(sample);
    }
    let num_classes = samples
        .iter()
        .map(|s| {
            let from_dist = s.opinion_dist.as_ref().map_or(0, Vec::len);
            from_dist.max(s.gold_label + 1)
        })
        .max()
        .unwrap_or(0)
        .max(2);
    for (i, s) in samples.iter().enumerate() {
        if let Some(p) = &s.opinion_dist {
            check_opinion(&s.id, p, num_classes).map_err(|e| record_err(i + 1, e.to_string()))?;
        }
    }
    Ok(Dataset {
        samples,
        num_classes,
    })
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for s in &dataset.samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
