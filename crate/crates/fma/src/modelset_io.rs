//! Candidate sets as JSON lines, one `{"p_fixed", "q", "included"}` object
//! per model.

use std::io::{BufRead, Write};

use fma_core::{CandidateModel, ModelSet};

#[derive(Debug, thiserror::Error)]
pub enum ModelSetError {
    #[error("model set line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] fma_core::Error),
}

pub fn read_model_set<R: BufRead>(input: R) -> Result<ModelSet, ModelSetError> {
    let mut models = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: CandidateModel = serde_json::from_str(&line).map_err(|source| ModelSetError::Json { line: i + 1, source })?;
        models.push(m);
    }
    Ok(ModelSet::new(models)?)
}

pub fn write_model_set<W: Write>(set: &ModelSet, mut out: W) -> Result<(), ModelSetError> {
    for m in set {
        serde_json::to_writer(&mut out, m).map_err(|source| ModelSetError::Json { line: 0, source })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
