//! Resizes a trained network onto a new feature/label layout, keeping every
//! weight whose feature name or status code survives.

use super::model::{init_params, Dims, MlpModel};
use crate::dataprep::TransformManifest;
use crate::seed;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum SurgeryError {
    #[error("source and target share no feature and no status code")]
    Disjoint,
    #[error("target manifest needs at least 1 feature and 2 classes")]
    Degenerate,
}

pub fn transfer_weights(model: &MlpModel, target: &TransformManifest, seed: u64) -> Result<MlpModel, SurgeryError> {
    transfer_to(model, &target.feature_order, &target.label_unmap, seed)
}

pub fn transfer_to(model: &MlpModel, features: &[String], codes: &[u16], seed: u64) -> Result<MlpModel, SurgeryError> {
    if features.is_empty() || codes.len() < 2 {
        return Err(SurgeryError::Degenerate);
    }
    let col_src: Vec<Option<usize>> = features
        .iter()
        .map(|f| model.feature_order.iter().position(|g| g == f))
        .collect();
    let row_src: Vec<Option<usize>> = codes
        .iter()
        .map(|c| model.label_codes.iter().position(|d| d == c))
        .collect();
    if col_src.iter().all(Option::is_none) && row_src.iter().all(Option::is_none) {
        return Err(SurgeryError::Disjoint);
    }
    let old = model.dims;
    let dims = Dims {
        input: features.len(),
        hidden: old.hidden,
        output: codes.len(),
    };
    let mut p = init_params(dims, &mut seed::phase_rng(seed, "surgery"));
    for j in 0..dims.hidden {
        for (i, src) in col_src.iter().enumerate() {
            if let Some(s) = src {
                p[j * dims.input + i] = model.params[j * old.input + s];
            }
        }
    }
    p[dims.b1()..dims.w2()].copy_from_slice(model.b1());
    for (c, src) in row_src.iter().enumerate() {
        if let Some(s) = src {
            let from = &model.w2()[s * old.hidden..(s + 1) * old.hidden];
            p[dims.w2() + c * dims.hidden..dims.w2() + (c + 1) * dims.hidden].copy_from_slice(from);
            p[dims.b2() + c] = model.b2()[*s];
        }
    }
    Ok(MlpModel {
        dims,
        activation: model.activation,
        params: p,
        feature_order: features.to_vec(),
        label_codes: codes.to_vec(),
    })
}
