use serde::{Deserialize, Serialize};

/// Pooled prediction metrics. `auc` is absent when only one class occurs and
/// `r2` when the labels have no variance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: Option<f64>,
    pub acc: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub n_predictions: usize,
}

/// Binary cross-entropy with the prediction clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce(y: f64, label: bool) -> f64 {
    let y = y.clamp(1e-7, 1.0 - 1e-7);
    if label {
        -y.ln()
    } else {
        -(1.0 - y).ln()
    }
}

/// Mann–Whitney estimate of ROC AUC; tied scores share their average rank.
pub fn auc(pairs: &[(f64, bool)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pairs[order[j + 1]].0 == pairs[order[i]].0 {
            j += 1;
        }
        // ranks are 1-based: i+1 ..= j+1
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| pairs[k].1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn metrics(pairs: &[(f64, bool)]) -> MetricsReport {
    let n = pairs.len();
    if n == 0 {
        return MetricsReport::default();
    }
    let nf = n as f64;
    let hits = pairs.iter().filter(|&&(y, l)| (y > 0.5) == l).count();
    let label = |l: bool| if l { 1.0 } else { 0.0 };
    let ss_res: f64 = pairs.iter().map(|&(y, l)| (y - label(l)).powi(2)).sum();
    let mean = pairs.iter().map(|p| label(p.1)).sum::<f64>() / nf;
    let ss_tot: f64 = pairs.iter().map(|p| (label(p.1) - mean).powi(2)).sum();
    MetricsReport {
        auc: auc(pairs),
        acc: hits as f64 / nf,
        rmse: (ss_res / nf).sqrt(),
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        n_predictions: n,
    }
}

/// Averages fold reports; optional metrics average over folds that have them.
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    let avg_opt = |f: fn(&MetricsReport) -> Option<f64>| {
        let vals: Vec<f64> = reports.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let n = reports.len().max(1) as f64;
    MetricsReport {
        auc: avg_opt(|r| r.auc),
        acc: reports.iter().map(|r| r.acc).sum::<f64>() / n,
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
        r2: avg_opt(|r| r.r2),
        n_predictions: reports.iter().map(|r| r.n_predictions).sum(),
    }
}
