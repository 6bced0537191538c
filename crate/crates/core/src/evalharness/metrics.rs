//! Confusion-matrix metrics. Rows are gold roles; columns are predicted
//! roles followed by one INVALID column.

use std::collections::BTreeMap;

use crate::data::RoleId;
use crate::{Error, Result};

use super::Label;

pub fn confusion(predicted: &[Label], gold: &[RoleId], roles: &[RoleId]) -> Result<Vec<Vec<usize>>> {
    if predicted.len() != gold.len() {
        return Err(Error::LengthMismatch(predicted.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(Error::Eval("no gold labels".into()));
    }
    let index = |r: &RoleId| {
        roles
            .iter()
            .position(|x| x == r)
            .ok_or_else(|| Error::Eval(format!("role `{r}` is not in the schema")))
    };
    let mut m = vec![vec![0; roles.len() + 1]; roles.len()];
    for (p, g) in predicted.iter().zip(gold) {
        let col = match p {
            Label::Role(r) => index(r)?,
            Label::Invalid => roles.len(),
        };
        m[index(g)?][col] += 1;
    }
    Ok(m)
}

/// F1 per role; INVALID predictions only ever add false negatives.
/// A role with no gold and no predictions scores 0.
pub fn per_class_f1(matrix: &[Vec<usize>]) -> Vec<f64> {
    (0..matrix.len())
        .map(|i| {
            let tp = matrix[i][i];
            let fp: usize = (0..matrix.len()).filter(|&g| g != i).map(|g| matrix[g][i]).sum();
            let fn_: usize = matrix[i].iter().sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            }
        })
        .collect()
}

pub fn macro_f1_from_matrix(matrix: &[Vec<usize>]) -> f64 {
    let f1 = per_class_f1(matrix);
    f1.iter().sum::<f64>() / f1.len() as f64
}

pub fn macro_f1(predicted: &[Label], gold: &[RoleId], roles: &[RoleId]) -> Result<f64> {
    Ok(macro_f1_from_matrix(&confusion(predicted, gold, roles)?))
}

/// Checks that `weights` covers `roles` and sums to one.
pub fn check_weights(weights: &BTreeMap<RoleId, f64>, roles: &[RoleId]) -> Result<()> {
    let mut total = 0.0;
    for r in roles {
        total += weights
            .get(r)
            .ok_or_else(|| Error::Eval(format!("no weight for role `{r}`")))?;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Eval(format!("class weights sum to {total}, not 1")));
    }
    Ok(())
}

pub fn wf2_from_matrix(matrix: &[Vec<usize>], roles: &[RoleId], weights: &BTreeMap<RoleId, f64>) -> Result<f64> {
    check_weights(weights, roles)?;
    Ok(per_class_f1(matrix)
        .iter()
        .zip(roles)
        .map(|(f, r)| weights[r] * f)
        .sum())
}

/// Weighted sum of per-class F1.
pub fn wf2(predicted: &[Label], gold: &[RoleId], roles: &[RoleId], weights: &BTreeMap<RoleId, f64>) -> Result<f64> {
    wf2_from_matrix(&confusion(predicted, gold, roles)?, roles, weights)
}

pub fn accuracy_from_matrix(matrix: &[Vec<usize>]) -> f64 {
    let total: usize = matrix.iter().flatten().sum();
    let correct: usize = (0..matrix.len()).map(|i| matrix[i][i]).sum();
    correct as f64 / total as f64
}

pub fn invalid_rate_from_matrix(matrix: &[Vec<usize>]) -> f64 {
    let total: usize = matrix.iter().flatten().sum();
    let invalid: usize = matrix.iter().map(|row| row[row.len() - 1]).sum();
    invalid as f64 / total as f64
}
