//! k-fold cross-validated grid search over (size, decay), and the
//! evaluation metrics: confusion matrix, observed/expected accuracy, and
//! Cohen's kappa.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::network::{Network, TrainConfig};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

/// Rows are observed classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    /// Row-major counts, classes x classes.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self, SelectionError> {
        if counts.len() != classes * classes {
            return Err(SelectionError::Domain(format!(
                "expected {} counts, got {}",
                classes * classes,
                counts.len()
            )));
        }
        let cm = ConfusionMatrix { classes, counts };
        if cm.total() == 0 {
            return Err(SelectionError::Domain("empty confusion matrix".into()));
        }
        Ok(cm)
    }

    pub fn get(&self, observed: usize, predicted: usize) -> u64 {
        self.counts[observed * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|i| (0..self.classes).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|j| (0..self.classes).map(|i| self.get(i, j)).sum())
            .collect()
    }

    fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

pub fn confusion(
    observed: &[usize],
    predicted: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix, SelectionError> {
    if observed.len() != predicted.len() {
        return Err(SelectionError::Domain(format!(
            "{} observed vs {} predicted",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.is_empty() {
        return Err(SelectionError::Domain("no pairs".into()));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&o, &p) in observed.iter().zip(predicted) {
        if o >= classes || p >= classes {
            return Err(SelectionError::Domain(format!(
                "class index out of range: ({o}, {p}) with {classes} classes"
            )));
        }
        counts[o * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// Observed accuracy: trace / n.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    cm.trace() as f64 / cm.total() as f64
}

/// Chance agreement: sum over classes of rowsum*colsum / n^2.
pub fn expected_accuracy(cm: &ConfusionMatrix) -> f64 {
    let n = cm.total() as f64;
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    rows.iter()
        .zip(&cols)
        .map(|(&r, &c)| r as f64 * c as f64)
        .sum::<f64>()
        / (n * n)
}

/// Cohen's kappa: (observed - expected) / (1 - expected).
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64, SelectionError> {
    let expected = expected_accuracy(cm);
    if expected >= 1.0 {
        return Err(SelectionError::Domain(
            "kappa undefined when expected accuracy is 1".into(),
        ));
    }
    Ok((accuracy(cm) - expected) / (1.0 - expected))
}

/// Seeded shuffle split into k disjoint folds covering 0..n, sizes
/// differing by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SelectionError> {
    if k < 2 || k > n {
        return Err(SelectionError::Domain(format!(
            "need 2 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(indices[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Hyperparameter grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    pub sizes: Vec<usize>,
    pub decays: Vec<f64>,
    pub k: usize,
    pub seed: u64,
}

/// One (size, decay) configuration's cross-validation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub size: usize,
    pub decay: f64,
    pub cv_accuracy: f64,
    /// Mean of per-fold kappas over folds where kappa is defined.
    pub cv_kappa: f64,
    /// Kappa of all fold confusion matrices pooled together.
    pub pooled_kappa: f64,
    pub fold_accuracies: Vec<f64>,
    pub fold_kappas: Vec<Option<f64>>,
    /// Indexes of test folds whose observed labels were a single class.
    pub degenerate_folds: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestConfig {
    pub size: usize,
    pub decay: f64,
}

/// Grid-search outcome: the full CV table plus the refit winner and its
/// training-set metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub grid: Vec<GridCell>,
    pub best: BestConfig,
    pub network: Network,
    pub train_confusion: ConfusionMatrix,
    pub train_accuracy: f64,
    pub train_kappa: f64,
}

/// Cross-validated grid search. Fold assignment is shared across the grid
/// so configuration comparisons are paired. Selection maximizes mean CV
/// accuracy; ties prefer larger decay, then smaller size. The winner is
/// refit on all data.
pub fn grid_search(
    x: &Matrix,
    y: &[usize],
    classes: usize,
    grid: &Grid,
    train_cfg: &TrainConfig,
) -> Result<FitReport, SelectionError> {
    if grid.sizes.is_empty() || grid.decays.is_empty() {
        return Err(SelectionError::Domain("empty grid".into()));
    }
    if x.rows() != y.len() {
        return Err(SelectionError::Domain("row/target count mismatch".into()));
    }
    if x.rows() < grid.k {
        return Err(SelectionError::Domain(format!(
            "n = {} is smaller than k = {}",
            x.rows(),
            grid.k
        )));
    }
    for c in 0..classes {
        if !y.contains(&c) {
            return Err(SelectionError::Domain(format!(
                "class {c} never occurs in the training targets"
            )));
        }
    }

    let folds = kfold_split(x.rows(), grid.k, seed::mix(grid.seed, seed::tag::FOLDS))?;
    let mut cells = Vec::with_capacity(grid.sizes.len() * grid.decays.len());

    for (si, &size) in grid.sizes.iter().enumerate() {
        for (di, &decay) in grid.decays.iter().enumerate() {
            let mut fold_accuracies = Vec::with_capacity(grid.k);
            let mut fold_kappas = Vec::with_capacity(grid.k);
            let mut degenerate_folds = Vec::new();
            let mut pooled: Option<ConfusionMatrix> = None;

            for (fi, test_fold) in folds.iter().enumerate() {
                let train_idx: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != fi)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                let x_train = x.select_rows(&train_idx);
                let y_train: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
                let x_test = x.select_rows(test_fold);
                let y_test: Vec<usize> = test_fold.iter().map(|&i| y[i]).collect();

                let cell_seed = cell_seed(grid.seed, si, di, fi);
                let net = Network::init(
                    x.cols(),
                    size,
                    classes,
                    decay,
                    cell_seed,
                    train_cfg.init_range,
                )?;
                let outcome = net.train(&x_train, &y_train, train_cfg)?;
                let preds = outcome.network.predict_batch(&x_test)?;
                let predicted: Vec<usize> = preds.iter().map(|p| p.label).collect();
                let cm = confusion(&y_test, &predicted, classes)?;

                let first = y_test[0];
                if y_test.iter().all(|&c| c == first) {
                    degenerate_folds.push(fi);
                }
                fold_accuracies.push(accuracy(&cm));
                fold_kappas.push(kappa(&cm).ok());
                match pooled.as_mut() {
                    Some(p) => p.add(&cm),
                    None => pooled = Some(cm),
                }
            }

            let cv_accuracy =
                fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
            let defined: Vec<f64> = fold_kappas.iter().flatten().copied().collect();
            let cv_kappa = if defined.is_empty() {
                f64::NAN
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            };
            let pooled = pooled.expect("k >= 2 folds");
            let pooled_kappa = kappa(&pooled).unwrap_or(f64::NAN);

            cells.push(GridCell {
                size,
                decay,
                cv_accuracy,
                cv_kappa,
                pooled_kappa,
                fold_accuracies,
                fold_kappas,
                degenerate_folds,
            });
        }
    }

    let best_cell = cells
        .iter()
        .max_by(|a, b| {
            a.cv_accuracy
                .partial_cmp(&b.cv_accuracy)
                .unwrap()
                .then(a.decay.partial_cmp(&b.decay).unwrap())
                .then(b.size.cmp(&a.size))
        })
        .expect("nonempty grid");
    let best = BestConfig {
        size: best_cell.size,
        decay: best_cell.decay,
    };

    let refit_seed = seed::mix(grid.seed, 0xf17);
    let net = Network::init(
        x.cols(),
        best.size,
        classes,
        best.decay,
        refit_seed,
        train_cfg.init_range,
    )?;
    let outcome = net.train(x, y, train_cfg)?;
    let preds = outcome.network.predict_batch(x)?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let train_confusion = confusion(y, &predicted, classes)?;
    let train_accuracy = accuracy(&train_confusion);
    let train_kappa = kappa(&train_confusion)?;

    Ok(FitReport {
        grid: cells,
        best,
        network: outcome.network,
        train_confusion,
        train_accuracy,
        train_kappa,
    })
}

fn cell_seed(seed_root: u64, size_idx: usize, decay_idx: usize, fold: usize) -> u64 {
    seed::mix(
        seed_root,
        0x6172 ^ ((size_idx as u64) << 24 | (decay_idx as u64) << 12 | fold as u64),
    )
}
