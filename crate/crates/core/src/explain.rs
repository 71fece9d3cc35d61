//! Model interpretation: Garson's connection-weight partitioning for global
//! importance, and LIME for local per-case explanations.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignMatrix, EncodedColumn, EncodingMeta, Record};
use crate::matrix::{solve_linear, Matrix};
use crate::network::Network;

#[derive(Debug, thiserror::Error)]
pub enum ExplainError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
}

/// Per-input relative importance, descending, summing to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<(String, f64)>,
}

/// Garson's partitioning of |input->hidden->output| weight products.
/// Per output k, each hidden neuron's |w_ij * v_jk| is normalized by that
/// neuron's total |w| fan-in, then normalized over inputs; the per-output
/// tables are averaged and renormalized. Biases are excluded; a hidden
/// neuron with zero fan-in contributes nothing.
pub fn garson(net: &Network, input_names: &[String]) -> Result<ImportanceTable, ExplainError> {
    if input_names.len() != net.d_in {
        return Err(ExplainError::Domain(format!(
            "{} input names for a {}-input network",
            input_names.len(),
            net.d_in
        )));
    }

    // fan-in totals per hidden neuron
    let fan_in: Vec<f64> = (0..net.d_hidden)
        .map(|h| {
            (0..net.d_in)
                .map(|i| net.w1[h * net.d_in + i].abs())
                .sum()
        })
        .collect();

    let mut mean_q = vec![0.0; net.d_in];
    for k in 0..net.d_out {
        let mut q = vec![0.0; net.d_in];
        for h in 0..net.d_hidden {
            if fan_in[h] == 0.0 {
                continue;
            }
            let v = net.w2[k * net.d_hidden + h].abs();
            for (i, qi) in q.iter_mut().enumerate() {
                *qi += net.w1[h * net.d_in + i].abs() * v / fan_in[h];
            }
        }
        let total: f64 = q.iter().sum();
        if total > 0.0 {
            for (m, qi) in mean_q.iter_mut().zip(&q) {
                *m += qi / total;
            }
        }
    }

    let total: f64 = mean_q.iter().sum();
    if total == 0.0 {
        return Err(ExplainError::Domain(
            "all connection weights are zero; importance undefined".into(),
        ));
    }
    let mut entries: Vec<(String, f64)> = input_names
        .iter()
        .cloned()
        .zip(mean_q.iter().map(|q| q / total))
        .collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    Ok(ImportanceTable { entries })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// None means the default 0.75 * sqrt(d).
    pub kernel_width: Option<f64>,
    pub n_features: usize,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            n_features: 4,
            ridge_lambda: 1e-3,
            seed: 0,
        }
    }
}

/// Training statistics the perturber needs: per-feature categorical level
/// frequencies and per-continuous-column quartiles, all in the encoded,
/// standardized space the model consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbStats {
    pub features: Vec<FeatureStat>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FeatureStat {
    #[serde(rename = "categorical")]
    Categorical {
        name: String,
        /// Observed levels (reference first) with empirical frequencies.
        levels: Vec<String>,
        freqs: Vec<f64>,
        /// Encoded column index per non-reference level, aligned with
        /// `levels[1..]`.
        cols: Vec<usize>,
    },
    #[serde(rename = "continuous")]
    Continuous {
        name: String,
        col: usize,
        /// 25/50/75% points of the standardized training column.
        quartiles: [f64; 3],
    },
}

impl PerturbStats {
    /// Collect perturbation statistics from an encoded training matrix.
    pub fn from_design(dm: &DesignMatrix) -> Result<PerturbStats, ExplainError> {
        let n = dm.n();
        if n == 0 {
            return Err(ExplainError::Domain("empty training matrix".into()));
        }
        let mut features = Vec::new();

        for enc in &dm.meta.categoricals {
            let mut cols = Vec::new();
            for level in &enc.emitted {
                let j = dm
                    .meta
                    .columns
                    .iter()
                    .position(|c| {
                        matches!(c, EncodedColumn::Indicator { feature, level: l }
                            if feature == &enc.feature && l == level)
                    })
                    .ok_or_else(|| {
                        ExplainError::Domain(format!(
                            "no column for level {:?} of {:?}",
                            level, enc.feature
                        ))
                    })?;
                cols.push(j);
            }
            let mut counts = vec![0usize; enc.emitted.len()];
            for i in 0..n {
                for (c, &j) in counts.iter_mut().zip(&cols) {
                    if dm.data.get(i, j) > 0.5 {
                        *c += 1;
                    }
                }
            }
            let emitted_total: usize = counts.iter().sum();
            let mut levels = vec![enc.reference.clone()];
            levels.extend(enc.emitted.iter().cloned());
            let mut freqs = vec![(n - emitted_total) as f64 / n as f64];
            freqs.extend(counts.iter().map(|&c| c as f64 / n as f64));
            features.push(FeatureStat::Categorical {
                name: enc.feature.clone(),
                levels,
                freqs,
                cols,
            });
        }

        for (j, col) in dm.meta.columns.iter().enumerate() {
            if let EncodedColumn::Continuous { feature } = col {
                let mut vals: Vec<f64> = (0..n).map(|i| dm.data.get(i, j)).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let q = |p: f64| -> f64 {
                    let idx = (p * (n - 1) as f64).round() as usize;
                    vals[idx]
                };
                features.push(FeatureStat::Continuous {
                    name: feature.clone(),
                    col: j,
                    quartiles: [q(0.25), q(0.5), q(0.75)],
                });
            }
        }

        // keep schema feature order: categoricals and continuous features
        // were collected separately, so re-sort by first encoded column
        features.sort_by_key(|f| match f {
            FeatureStat::Categorical { cols, .. } => cols.first().copied().unwrap_or(usize::MAX),
            FeatureStat::Continuous { col, .. } => *col,
        });
        Ok(PerturbStats { features })
    }
}

fn quartile_bin(v: f64, q: &[f64; 3]) -> usize {
    if v < q[0] {
        0
    } else if v < q[1] {
        1
    } else if v < q[2] {
        2
    } else {
        3
    }
}

/// Perturbation output: samples in the model's input space and their binary
/// interpretable representations (1 = matches the explained row on that
/// feature).
pub struct Perturbation {
    pub z: Matrix,
    pub z_binary: Matrix,
}

/// Generate `n_samples` perturbed copies of `x_row`. Sample 0 is the row
/// itself (all-ones binary representation). Continuous columns get unit
/// normal noise in standardized space; categorical features are resampled
/// from training frequencies.
pub fn perturb(
    x_row: &[f64],
    stats: &PerturbStats,
    n_samples: usize,
    seed: u64,
) -> Result<Perturbation, ExplainError> {
    if n_samples < 2 {
        return Err(ExplainError::Domain("n_samples must be at least 2".into()));
    }
    let d = x_row.len();
    let d_interp = stats.features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut z = Matrix::zeros(n_samples, d);
    let mut zb = Matrix::zeros(n_samples, d_interp);

    z.row_mut(0).copy_from_slice(x_row);
    for f in 0..d_interp {
        zb.set(0, f, 1.0);
    }

    for t in 1..n_samples {
        let mut row = x_row.to_vec();
        for (f, stat) in stats.features.iter().enumerate() {
            match stat {
                FeatureStat::Categorical {
                    levels,
                    freqs,
                    cols,
                    ..
                } => {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = levels.len() - 1;
                    for (li, p) in freqs.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            pick = li;
                            break;
                        }
                    }
                    // write the indicator block: levels[0] is the reference
                    for (li, &j) in cols.iter().enumerate() {
                        row[j] = if pick == li + 1 { 1.0 } else { 0.0 };
                    }
                    let x_matches = cols
                        .iter()
                        .enumerate()
                        .find(|(_, &j)| x_row[j] > 0.5)
                        .map(|(li, _)| li + 1)
                        .unwrap_or(0);
                    zb.set(t, f, if pick == x_matches { 1.0 } else { 0.0 });
                }
                FeatureStat::Continuous { col, quartiles, .. } => {
                    let eps: f64 = rng.sample(StandardNormal);
                    let v = x_row[*col] + eps;
                    row[*col] = v;
                    let same =
                        quartile_bin(v, quartiles) == quartile_bin(x_row[*col], quartiles);
                    zb.set(t, f, if same { 1.0 } else { 0.0 });
                }
            }
        }
        z.row_mut(t).copy_from_slice(&row);
    }
    Ok(Perturbation { z, z_binary: zb })
}

/// exp(-D^2 / width^2) with D the Euclidean distance in standardized space.
pub fn proximity(x: &[f64], z: &[f64], kernel_width: f64) -> f64 {
    let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (kernel_width * kernel_width)).exp()
}

/// Sparse weighted-ridge surrogate fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateFit {
    pub intercept: f64,
    /// (column index, coefficient), descending by |coefficient|.
    pub coefficients: Vec<(usize, f64)>,
    /// Weighted R-squared of the final fit.
    pub explanation_fit: f64,
}

/// Weighted ridge with unpenalized intercept on the given columns.
/// Returns (intercept, coefficients aligned with `cols`).
fn weighted_ridge(
    zb: &Matrix,
    targets: &[f64],
    weights: &[f64],
    cols: &[usize],
    lambda: f64,
) -> Result<(f64, Vec<f64>), ExplainError> {
    let p = cols.len() + 1;
    let n = zb.rows();
    let mut a = Matrix::zeros(p, p);
    let mut b = vec![0.0; p];

    for i in 0..n {
        let w = weights[i];
        let mut xi = Vec::with_capacity(p);
        xi.push(1.0);
        for &c in cols {
            xi.push(zb.get(i, c));
        }
        for r in 0..p {
            b[r] += w * xi[r] * targets[i];
            for c in 0..p {
                let v = a.get(r, c) + w * xi[r] * xi[c];
                a.set(r, c, v);
            }
        }
    }
    for r in 1..p {
        let v = a.get(r, r) + lambda;
        a.set(r, r, v);
    }
    let beta = solve_linear(&mut a, &mut b)
        .ok_or_else(|| ExplainError::Domain("singular surrogate system".into()))?;
    Ok((beta[0], beta[1..].to_vec()))
}

fn weighted_r2(
    zb: &Matrix,
    targets: &[f64],
    weights: &[f64],
    intercept: f64,
    cols: &[usize],
    coefs: &[f64],
) -> f64 {
    let wsum: f64 = weights.iter().sum();
    let ymean: f64 = targets
        .iter()
        .zip(weights)
        .map(|(y, w)| w * y)
        .sum::<f64>()
        / wsum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..zb.rows() {
        let mut pred = intercept;
        for (&c, &b) in cols.iter().zip(coefs) {
            pred += b * zb.get(i, c);
        }
        ss_res += weights[i] * (targets[i] - pred) * (targets[i] - pred);
        ss_tot += weights[i] * (targets[i] - ymean) * (targets[i] - ymean);
    }
    if ss_tot <= 0.0 {
        0.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Sparsity by hard cap: a preliminary weighted ridge over all columns
/// picks the `n_features` largest-magnitude coefficients, then the final
/// weighted ridge is refit on just those.
pub fn fit_surrogate(
    zb: &Matrix,
    targets: &[f64],
    weights: &[f64],
    cfg: &LimeConfig,
) -> Result<SurrogateFit, ExplainError> {
    let n = zb.rows();
    if targets.len() != n || weights.len() != n {
        return Err(ExplainError::Domain(
            "targets/weights length must match sample count".into(),
        ));
    }
    if weights.iter().any(|w| *w <= 0.0) {
        return Err(ExplainError::Domain("weights must be positive".into()));
    }
    if cfg.ridge_lambda <= 0.0 {
        return Err(ExplainError::Domain("ridge_lambda must be positive".into()));
    }

    // degenerate target: no signal to fit
    let first = targets[0];
    if targets.iter().all(|t| (t - first).abs() < 1e-15) {
        return Ok(SurrogateFit {
            intercept: first,
            coefficients: Vec::new(),
            explanation_fit: 0.0,
        });
    }

    let all_cols: Vec<usize> = (0..zb.cols()).collect();
    let (_, prelim) = weighted_ridge(zb, targets, weights, &all_cols, cfg.ridge_lambda)?;

    let mut ranked: Vec<usize> = all_cols.clone();
    ranked.sort_by(|&a, &b| prelim[b].abs().partial_cmp(&prelim[a].abs()).unwrap());
    let mut selected: Vec<usize> = ranked
        .into_iter()
        .take(cfg.n_features.min(zb.cols()))
        .collect();
    selected.sort_unstable();

    let (intercept, coefs) = weighted_ridge(zb, targets, weights, &selected, cfg.ridge_lambda)?;
    let explanation_fit = weighted_r2(zb, targets, weights, intercept, &selected, &coefs);

    let mut coefficients: Vec<(usize, f64)> =
        selected.into_iter().zip(coefs).collect();
    coefficients.sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap());
    Ok(SurrogateFit {
        intercept,
        coefficients,
        explanation_fit,
    })
}

/// LIME output for one case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Explanation {
    pub case: String,
    pub label: String,
    pub probability: f64,
    pub explanation_fit: f64,
    pub features: Vec<FeatureWeight>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureWeight {
    pub name: String,
    pub weight: f64,
}

/// Interpretable-feature display name: categorical features are tagged
/// with the explained record's own level.
fn interp_feature_name(stat: &FeatureStat, x_row: &[f64]) -> String {
    match stat {
        FeatureStat::Categorical {
            name, levels, cols, ..
        } => {
            let li = cols
                .iter()
                .enumerate()
                .find(|(_, &j)| x_row[j] > 0.5)
                .map(|(li, _)| li + 1)
                .unwrap_or(0);
            format!("{name}_{}", levels[li])
        }
        FeatureStat::Continuous { name, .. } => name.clone(),
    }
}

/// Explain one record: perturb around it, weight by proximity, and fit the
/// sparse surrogate against the black box's probability for the predicted
/// label.
pub fn explain_case(
    net: &Network,
    record: &Record,
    meta: &EncodingMeta,
    stats: &PerturbStats,
    class_labels: &[String],
    cfg: &LimeConfig,
    case_id: &str,
) -> Result<Explanation, ExplainError> {
    let dm = crate::dataset::apply_transform(std::slice::from_ref(record), meta)?;
    let x_row = dm.data.row(0).to_vec();

    let pred = net.forward(&x_row)?;
    let label_idx = pred.label;
    let probability = pred.probabilities[label_idx];

    let pert = perturb(&x_row, stats, cfg.n_samples, cfg.seed)?;
    let kernel_width = cfg
        .kernel_width
        .unwrap_or_else(|| 0.75 * (x_row.len() as f64).sqrt());

    let mut targets = Vec::with_capacity(cfg.n_samples);
    let mut weights = Vec::with_capacity(cfg.n_samples);
    for t in 0..pert.z.rows() {
        let zrow = pert.z.row(t);
        let p = net.forward(zrow)?;
        targets.push(p.probabilities[label_idx]);
        weights.push(proximity(&x_row, zrow, kernel_width));
    }

    let fit = fit_surrogate(&pert.z_binary, &targets, &weights, cfg)?;
    let features = fit
        .coefficients
        .iter()
        .map(|&(f, w)| FeatureWeight {
            name: interp_feature_name(&stats.features[f], &x_row),
            weight: w,
        })
        .collect();

    Ok(Explanation {
        case: case_id.to_string(),
        label: class_labels
            .get(label_idx)
            .cloned()
            .unwrap_or_else(|| label_idx.to_string()),
        probability,
        explanation_fit: fit.explanation_fit,
        features,
    })
}

#[cfg(test)]
mod tests;
