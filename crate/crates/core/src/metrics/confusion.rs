use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricsError;

/// `counts[gold][pred]` over a fixed class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    fn index(&self, class: &str) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| MetricsError::UnknownClass(class.to_string()))
    }

    pub fn add(&mut self, gold: &str, pred: &str) -> Result<(), MetricsError> {
        let g = self.index(gold)?;
        let p = self.index(pred)?;
        self.counts[g][p] += 1;
        Ok(())
    }

    pub fn from_sequences<S: AsRef<str>, T: AsRef<str>>(
        classes: Vec<String>,
        gold: &[S],
        pred: &[T],
    ) -> Result<Self, MetricsError> {
        if gold.len() != pred.len() {
            return Err(MetricsError::LengthMismatch {
                gold: gold.len(),
                pred: pred.len(),
            });
        }
        let mut m = Self::new(classes);
        for (g, p) in gold.iter().zip(pred) {
            m.add(g.as_ref(), p.as_ref())?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), MetricsError> {
        if self.classes != other.classes {
            return Err(MetricsError::ShapeMismatch);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Errors only: diagonal zeroed, each row divided by its off-diagonal
    /// total (rows without errors stay zero).
    pub fn display(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let off: u64 = row.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| c).sum();
                row.iter()
                    .enumerate()
                    .map(|(j, &c)| if j == i || off == 0 { 0.0 } else { c as f64 / off as f64 })
                    .collect()
            })
            .collect()
    }

    /// Row-major cell values, optionally skipping the diagonal.
    pub fn flatten(&self, cells: CellSelection) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if cells == CellSelection::All || i != j {
                    out.push(c as f64);
                }
            }
        }
        out
    }

    pub fn to_csv(&self, display: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["gold\\pred".to_string()];
        header.extend(self.classes.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        let shown = self.display();
        for (i, class) in self.classes.iter().enumerate() {
            let mut rec = vec![class.clone()];
            if display {
                rec.extend(shown[i].iter().map(|v| format!("{v:.6}")));
            } else {
                rec.extend(self.counts[i].iter().map(u64::to_string));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CellSelection {
    #[default]
    OffDiagonal,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    /// `None` when either input is constant.
    pub rho: Option<f64>,
    /// Two-sided, from the t distribution with `n - 2` degrees of freedom.
    pub p_value: Option<f64>,
    pub n: usize,
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            gold: x.len(),
            pred: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Ok(SpearmanResult { rho: None, p_value: None, n });
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y));
    let p_value = match rho {
        Some(r) if n > 2 => {
            let df = (n - 2) as f64;
            if (1.0 - r.abs()) < 1e-15 {
                Some(0.0)
            } else {
                let t = r * (df / ((1.0 - r) * (1.0 + r))).sqrt();
                let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
                Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
            }
        }
        _ => None,
    };
    Ok(SpearmanResult { rho, p_value, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSpearman {
    pub first: usize,
    pub second: usize,
    pub result: SpearmanResult,
}

/// Spearman correlation between every pair of matrices (`first < second`).
pub fn confusion_spearman(
    matrices: &[ConfusionMatrix],
    cells: CellSelection,
) -> Result<Vec<PairwiseSpearman>, MetricsError> {
    if matrices.len() < 2 {
        return Err(MetricsError::TooFewRuns(matrices.len()));
    }
    if matrices.iter().any(|m| m.classes != matrices[0].classes) {
        return Err(MetricsError::ShapeMismatch);
    }
    let flat: Vec<Vec<f64>> = matrices.iter().map(|m| m.flatten(cells)).collect();
    let mut out = Vec::new();
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            out.push(PairwiseSpearman {
                first: i,
                second: j,
                result: spearman(&flat[i], &flat[j])?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i}")).collect()
    }

    fn matrix(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix {
            classes: classes(counts.len()),
            counts,
        }
    }

    #[test]
    fn counting() {
        let c = vec!["NOUN".to_string(), "PROPN".to_string()];
        let m = ConfusionMatrix::from_sequences(c.clone(), &["NOUN", "NOUN"], &["NOUN", "NOUN"]).unwrap();
        assert_eq!(m.flatten(CellSelection::OffDiagonal), [0.0, 0.0]);
        let m = ConfusionMatrix::from_sequences(c.clone(), &["NOUN"], &["PROPN"]).unwrap();
        assert_eq!(m.counts, [[0, 1], [0, 0]]);
        let m = ConfusionMatrix::from_sequences(c.clone(), &["NOUN", "NOUN", "PROPN"], &["PROPN", "NOUN", "PROPN"])
            .unwrap();
        assert_eq!(m.row_sums(), [2, 1]);
        assert!(matches!(
            ConfusionMatrix::from_sequences(c, &["VERB"], &["NOUN"]),
            Err(MetricsError::UnknownClass(_))
        ));
    }

    #[test]
    fn display_rows() {
        let m = matrix(vec![vec![5, 2, 1], vec![0, 7, 0], vec![4, 1, 6]]);
        let d = m.display();
        assert_eq!(d[0], [0.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(d[1], [0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(d[2].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(d[2][2], 0.0);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
    }

    // Reference values computed with scipy.stats.spearmanr.
    #[test]
    fn spearman_reference_values() {
        let cases: [(&[f64], &[f64], f64, f64); 4] = [
            (&[2., 1., 0., 3., 4., 1.], &[1., 1., 1., 2., 3., 0.], 0.7700513795421217, 0.07323512813170643),
            (&[0.9, 0.5, 0.7, 0.2], &[0.6, 0.55, 0.3, 0.1], 0.8, 0.2),
            (&[1., 2., 2., 3., 4., 4., 5.], &[2., 1., 3., 3., 5., 4., 6.], 0.9082951062292476, 0.004653274025986364),
            (&[1., 2., 3., 4., 5.], &[1., 3., 2., 5., 4.], 0.8, 0.10408803866182788),
        ];
        for (x, y, rho, p) in cases {
            let r = spearman(x, y).unwrap();
            assert_abs_diff_eq!(r.rho.unwrap(), rho, epsilon = 1e-12);
            assert_abs_diff_eq!(r.p_value.unwrap(), p, epsilon = 1e-9);
        }
    }

    #[test]
    fn spearman_degenerate() {
        let r = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.rho, None);
        assert!(spearman(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn confusion_pairs() {
        let m1 = matrix(vec![vec![5, 2, 1], vec![0, 7, 3], vec![4, 1, 6]]);
        let m2 = matrix(vec![vec![6, 1, 1], vec![1, 5, 2], vec![3, 0, 8]]);
        let pairs = confusion_spearman(&[m1.clone(), m2, m1.clone()], CellSelection::OffDiagonal).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_abs_diff_eq!(pairs[0].result.rho.unwrap(), 0.7700513795421217, epsilon = 1e-12);
        assert_abs_diff_eq!(pairs[1].result.rho.unwrap(), 1.0, epsilon = 1e-12);
        assert!(confusion_spearman(std::slice::from_ref(&m1), CellSelection::All).is_err());
        let other = ConfusionMatrix::new(classes(2));
        assert!(matches!(
            confusion_spearman(&[m1, other], CellSelection::All),
            Err(MetricsError::ShapeMismatch)
        ));
    }

    #[test]
    fn rank_reversal() {
        let m1 = matrix(vec![vec![0, 1, 2], vec![3, 0, 4], vec![5, 6, 0]]);
        let m2 = matrix(vec![vec![9, 6, 5], vec![4, 9, 3], vec![2, 1, 9]]);
        let r = confusion_spearman(&[m1, m2], CellSelection::OffDiagonal).unwrap();
        assert_abs_diff_eq!(r[0].result.rho.unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_output() {
        let m = matrix(vec![vec![1, 1], vec![0, 2]]);
        let csv = m.to_csv(false);
        assert_eq!(csv, "gold\\pred,C0,C1\nC0,1,1\nC1,0,2\n");
        assert!(m.to_csv(true).contains("1.000000"));
    }
}
