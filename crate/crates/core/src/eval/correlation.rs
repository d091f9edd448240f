//! Agreement statistics between system scores and grader scores.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pearson,
    Spearman,
    Kendall,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pearson" => Ok(Method::Pearson),
            "spearman" => Ok(Method::Spearman),
            "kendall" => Ok(Method::Kendall),
            other => Err(format!("unknown method '{other}' (pearson|spearman|kendall)")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pearson => "pearson",
            Method::Spearman => "spearman",
            Method::Kendall => "kendall",
        })
    }
}

/// Tau-b corrects for ties; tau-a divides by all pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KendallVariant {
    TauA,
    #[default]
    TauB,
}

impl FromStr for KendallVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "tau-a" => Ok(KendallVariant::TauA),
            "b" | "tau-b" => Ok(KendallVariant::TauB),
            other => Err(format!("unknown Kendall variant '{other}' (tau-a|tau-b)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrelationError {
    #[error("need at least 2 pairs, got {0}")]
    TooFew(usize),
    #[error("lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("coefficient undefined: a list has zero variance")]
    ZeroVariance,
    #[error("non-finite value")]
    NonFinite,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn check(x: &[f64], y: &[f64]) -> Result<(), CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(CorrelationError::TooFew(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(CorrelationError::NonFinite);
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
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

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, CorrelationError> {
    check(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that returns the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], buf) + sort_counting_swaps(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf.push(v[j]);
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau in O(n log n) (Knight's algorithm).
pub fn kendall(x: &[f64], y: &[f64], variant: KendallVariant) -> Result<f64, CorrelationError> {
    check(x, y)?;
    let n = x.len() as u64;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();

    let all = n * (n - 1) / 2;
    let x_ties = tied_pairs(&xs);
    let mut joint = 0u64;
    let mut run = 1u64;
    for k in 1..xs.len() {
        if xs[k] == xs[k - 1] && ys[k] == ys[k - 1] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;
    let swaps = sort_counting_swaps(&mut ys, &mut Vec::with_capacity(x.len()));
    let y_ties = tied_pairs(&ys);

    let numerator = all as f64 - x_ties as f64 - y_ties as f64 + joint as f64 - 2.0 * swaps as f64;
    let tau = match variant {
        KendallVariant::TauA => numerator / all as f64,
        KendallVariant::TauB => {
            let denom = ((all - x_ties) as f64 * (all - y_ties) as f64).sqrt();
            if denom == 0.0 {
                return Err(CorrelationError::ZeroVariance);
            }
            numerator / denom
        }
    };
    Ok(tau.clamp(-1.0, 1.0))
}

/// Aligned system and grader scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorePairSet {
    pub labels: Vec<String>,
    pub system: Vec<f64>,
    pub grader: Vec<f64>,
}

impl ScorePairSet {
    pub fn new(labels: Vec<String>, system: Vec<f64>, grader: Vec<f64>) -> Result<Self, CorrelationError> {
        if labels.len() != system.len() {
            return Err(CorrelationError::LengthMismatch(labels.len(), system.len()));
        }
        check(&system, &grader)?;
        Ok(Self { labels, system, grader })
    }

    /// Lines of `<label> <system> <grader>`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CorrelationError> {
        let (mut labels, mut system, mut grader) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let [label, s, g] = fields.as_slice() else {
                return Err(CorrelationError::Parse { line, message: "expected '<label> <system> <grader>'".into() });
            };
            let num = |v: &str| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| CorrelationError::Parse { line, message: format!("'{v}' is not a number") })
            };
            labels.push(label.to_string());
            system.push(num(s)?);
            grader.push(num(g)?);
        }
        Self::new(labels, system, grader)
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }
}

pub fn correlate(pairs: &ScorePairSet, method: Method, variant: KendallVariant) -> Result<f64, CorrelationError> {
    match method {
        Method::Pearson => pearson(&pairs.system, &pairs.grader),
        Method::Spearman => spearman(&pairs.system, &pairs.grader),
        Method::Kendall => kendall(&pairs.system, &pairs.grader, variant),
    }
}

/// Published instructor-agreement coefficients (percent) for the
/// hydrometer study: (row, Pearson, Spearman, Kendall).
pub const PUBLISHED_AGREEMENT: [(&str, f64, f64, f64); 5] = [
    ("T1", 87.54, 88.12, 75.28),
    ("T2", 95.45, 89.11, 85.41),
    ("T3", 93.78, 91.77, 81.95),
    ("T4", 82.56, 85.45, 82.00),
    ("Δ", 91.83, 90.69, 77.64),
];

/// Aligned text table of (row, pearson, spearman, kendall) in percent.
pub fn format_agreement_table(rows: &[(&str, f64, f64, f64)]) -> String {
    let mut out = format!("{:<6}{:>10}{:>10}{:>10}\n", "row", "pearson", "spearman", "kendall");
    for (label, p, s, k) in rows {
        out.push_str(&format!("{:<6}{:>10.2}{:>10.2}{:>10.2}\n", label, p, s, k));
    }
    out
}
