//! Two-batch-size extrapolation of Monte Carlo energies, reaction enthalpies
//! and error statistics against reference data.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// kJ/mol per hartree.
pub const HARTREE_TO_KJ_PER_MOL: f64 = 2625.4996394799;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sample counts must satisfy 0 < n1 < n2 (got n1={n1}, n2={n2})")]
    Counts { n1: f64, n2: f64 },
    #[error("non-finite energy in extrapolation input")]
    NonFinite,
    #[error("no energy for species {0:?}")]
    MissingSpecies(String),
    #[error("reaction {0:?} has no computed value and its species energies are incomplete")]
    Unresolved(String),
    #[error("reaction {0:?} has an empty stoichiometry")]
    EmptyStoichiometry(String),
    #[error("error statistics need at least 2 reactions, got {0}")]
    TooFewReactions(usize),
    #[error("reaction table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationPair {
    pub n1: f64,
    pub i1: f64,
    pub n2: f64,
    pub i2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationResult {
    pub i_left: f64,
    pub i_right: f64,
    pub i_exact: f64,
    /// `i2 < i1`; the extrapolation assumes the estimate decreases with the
    /// sample count.
    pub monotonic: bool,
}

/// Extrapolates two estimates with `1/√n` errors:
/// `I_L = (i2√n2 − i1√n1)/(√n2 − √n1)`, `I_R = (i2√n2 + i1√n1)/(√n2 + √n1)`,
/// and `I = (I_L + I_R)/2`.
pub fn extrapolate(pair: ExtrapolationPair) -> Result<ExtrapolationResult, AnalysisError> {
    let ExtrapolationPair { n1, i1, n2, i2 } = pair;
    if !(n1 > 0.0 && n2 > n1 && n2.is_finite()) {
        return Err(AnalysisError::Counts { n1, n2 });
    }
    if !(i1.is_finite() && i2.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let (s1, s2) = (n1.sqrt(), n2.sqrt());
    // written as corrections to i2 so that equal inputs are reproduced exactly
    let delta = i2 - i1;
    let i_left = i2 + delta * s1 / (s2 - s1);
    let i_right = i2 - delta * s1 / (s2 + s1);
    Ok(ExtrapolationResult {
        i_left,
        i_right,
        i_exact: 0.5 * (i_left + i_right),
        monotonic: i2 < i1,
    })
}

/// `(Σ_s ν_s E_s) · HARTREE_TO_KJ_PER_MOL`, products positive.
pub fn reaction_enthalpy(
    energies: &BTreeMap<String, f64>,
    stoichiometry: &BTreeMap<String, i64>,
) -> Result<f64, AnalysisError> {
    let mut sum = 0.0;
    for (species, &nu) in stoichiometry {
        let e = energies
            .get(species)
            .ok_or_else(|| AnalysisError::MissingSpecies(species.clone()))?;
        sum += nu as f64 * e;
    }
    Ok(sum * HARTREE_TO_KJ_PER_MOL)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reaction {
    #[serde(default)]
    pub name: String,
    pub stoichiometry: BTreeMap<String, i64>,
    /// kJ/mol; derived from `species` energies when absent.
    #[serde(default)]
    pub computed: Option<f64>,
    /// kJ/mol.
    pub reference: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionTable {
    /// Total energies in hartree.
    #[serde(default)]
    pub species: BTreeMap<String, f64>,
    #[serde(default, rename = "reaction")]
    pub reactions: Vec<Reaction>,
}

impl ReactionTable {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let t: ReactionTable = toml::from_str(text)?;
        for r in &t.reactions {
            if r.stoichiometry.is_empty() {
                return Err(AnalysisError::EmptyStoichiometry(r.name.clone()));
            }
        }
        Ok(t)
    }

    /// Computed enthalpy of every reaction, in kJ/mol.
    pub fn computed(&self) -> Result<Vec<f64>, AnalysisError> {
        self.reactions
            .iter()
            .map(|r| match r.computed {
                Some(c) => Ok(c),
                None => reaction_enthalpy(&self.species, &r.stoichiometry)
                    .map_err(|_| AnalysisError::Unresolved(r.name.clone())),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStatistics {
    pub delta_max_abs: f64,
    pub mean_abs: f64,
    /// Sample (n − 1) standard deviation of the signed errors.
    pub std: f64,
}

/// Statistics of `computed − reference` over the reactions.
pub fn error_statistics(table: &ReactionTable) -> Result<ErrorStatistics, AnalysisError> {
    let n = table.reactions.len();
    if n < 2 {
        return Err(AnalysisError::TooFewReactions(n));
    }
    let errors: Vec<f64> = table
        .computed()?
        .iter()
        .zip(&table.reactions)
        .map(|(c, r)| c - r.reference)
        .collect();
    let nf = n as f64;
    let mean = errors.iter().sum::<f64>() / nf;
    Ok(ErrorStatistics {
        delta_max_abs: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        mean_abs: errors.iter().map(|e| e.abs()).sum::<f64>() / nf,
        std: (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt(),
    })
}

#[derive(Debug, Deserialize)]
struct PairRow {
    label: String,
    n1: f64,
    i1_ha: f64,
    n2: f64,
    i2_ha: f64,
}

/// Reads `label,n1,i1_ha,n2,i2_ha` rows and writes them back with
/// `i_left,i_right,i_exact,monotonic` appended. Rows that cannot be
/// extrapolated get empty values and `error` in the last column. Returns the
/// number of such rows.
pub fn extrapolate_csv<R: io::Read, W: io::Write>(input: R, output: W) -> Result<usize, AnalysisError> {
    let mut rd = csv::Reader::from_reader(input);
    let mut wr = csv::Writer::from_writer(output);
    wr.write_record([
        "label", "n1", "i1_ha", "n2", "i2_ha", "i_left", "i_right", "i_exact", "monotonic",
    ])?;
    let mut failed = 0;
    for row in rd.deserialize() {
        let row: PairRow = row?;
        let mut fields = vec![
            row.label,
            row.n1.to_string(),
            row.i1_ha.to_string(),
            row.n2.to_string(),
            row.i2_ha.to_string(),
        ];
        match extrapolate(ExtrapolationPair {
            n1: row.n1,
            i1: row.i1_ha,
            n2: row.n2,
            i2: row.i2_ha,
        }) {
            Ok(r) => fields.extend([
                r.i_left.to_string(),
                r.i_right.to_string(),
                r.i_exact.to_string(),
                r.monotonic.to_string(),
            ]),
            Err(_) => {
                failed += 1;
                fields.extend([String::new(), String::new(), String::new(), "error".into()]);
            }
        }
        wr.write_record(&fields)?;
    }
    wr.flush()?;
    Ok(failed)
}
