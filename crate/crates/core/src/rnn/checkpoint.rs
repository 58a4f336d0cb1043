use serde::{Deserialize, Serialize};

use super::{Model, Objective, RnnError, CHECKPOINT_VERSION};

#[derive(Serialize)]
struct Envelope<'a> {
    version: u32,
    model: &'a Model,
}

#[derive(Deserialize)]
struct OwnedEnvelope {
    version: u32,
    model: Model,
}

pub(super) fn to_json(model: &Model) -> String {
    serde_json::to_string(&Envelope {
        version: CHECKPOINT_VERSION,
        model,
    })
    .expect("model serializes")
}

pub(super) fn from_json(text: &str) -> Result<Model, RnnError> {
    let env: OwnedEnvelope =
        serde_json::from_str(text).map_err(|e| RnnError::Checkpoint(e.to_string()))?;
    if env.version != CHECKPOINT_VERSION {
        return Err(RnnError::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            env.version
        )));
    }
    validate(&env.model)?;
    Ok(env.model)
}

fn validate(m: &Model) -> Result<(), RnnError> {
    let p = &m.params;
    let d = p.dim;
    let (n_tokens, head_in, n_out) = match m.objective {
        Objective::Transduction => (m.input_table.len(), 2 * d, m.vocab.len()),
        Objective::LanguageModel => (m.pairs.len(), d, m.pairs.len()),
        Objective::BinaryClassification => (m.pairs.len(), d, 1),
    };
    let shapes = [
        ("embed", &p.embed, n_tokens, d),
        ("w_h", &p.w_h, d, d),
        ("w_x", &p.w_x, d, d),
        ("w_y", &p.w_y, n_out, head_in),
    ];
    for (name, mat, rows, cols) in shapes {
        if mat.rows != rows || mat.cols != cols || mat.data.len() != rows * cols {
            return Err(RnnError::Checkpoint(format!(
                "{name} has shape {}x{} with {} values, expected {rows}x{cols}",
                mat.rows,
                mat.cols,
                mat.data.len()
            )));
        }
    }
    if p.b_h.len() != d || p.b_y.len() != n_out {
        return Err(RnnError::Checkpoint("bias length mismatch".into()));
    }
    if !p.is_finite() {
        return Err(RnnError::Checkpoint("non-finite parameter".into()));
    }
    for &(input, label) in m.pairs.iter() {
        if input as usize >= m.input_table.len() || label >= m.vocab.len() {
            return Err(RnnError::Checkpoint("pair token out of range".into()));
        }
    }
    Ok(())
}
