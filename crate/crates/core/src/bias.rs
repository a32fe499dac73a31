//! Dummy-coded design matrices, OLS with t and F inference, and the
//! coefficient report.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::{AttributeKind, AttributeValue, Entity, Schema};

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("design matrix is rank deficient; collinear columns: {}", .0.join(", "))]
    RankDeficiency(Vec<String>),
    #[error("level `{level}` of `{attribute}` does not occur in the data")]
    UnknownLevel { attribute: String, level: String },
    #[error("attribute `{attribute}` has {levels} observed level(s); at least 2 are needed")]
    SingleLevel { attribute: String, levels: usize },
    #[error("entity `{entity}`: {message}")]
    Attribute { entity: String, message: String },
    #[error("{rows} observations cannot identify {columns} coefficients")]
    Underdetermined { rows: usize, columns: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} values, got {found}")]
    Dimension { expected: usize, found: usize },
}

pub const INTERCEPT: &str = "(intercept)";

/// How one schema attribute maps onto design columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedAttribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Reference level absorbed into the intercept (categorical only).
    pub reference: Option<String>,
    /// Dummy levels in column order (categorical only).
    pub levels: Vec<String>,
}

/// `N × (P'+1)` regressor matrix with a leading intercept column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub entity_ids: Vec<String>,
    pub encoding: Vec<EncodedAttribute>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Encodes attributes into a feature row without the intercept.
    pub fn encode(
        &self,
        attributes: &BTreeMap<String, AttributeValue>,
    ) -> Result<Vec<f64>, String> {
        let mut row = Vec::with_capacity(self.columns.len() - 1);
        for enc in &self.encoding {
            let value = attributes
                .get(&enc.name)
                .ok_or_else(|| format!("missing attribute `{}`", enc.name))?;
            match enc.kind {
                AttributeKind::Numeric => row.push(
                    value
                        .as_numeric()
                        .ok_or_else(|| format!("`{}` is not numeric", enc.name))?,
                ),
                AttributeKind::Categorical => {
                    let label = value
                        .as_label()
                        .ok_or_else(|| format!("`{}` is not categorical", enc.name))?;
                    if enc.reference.as_deref() != Some(label)
                        && !enc.levels.iter().any(|l| l == label)
                    {
                        return Err(format!("unknown level `{label}` of `{}`", enc.name));
                    }
                    row.extend(enc.levels.iter().map(|l| f64::from(u8::from(l == label))));
                }
            }
        }
        Ok(row)
    }
}

/// Column name of the dummy for `level` of `attribute`.
pub fn dummy_name(attribute: &str, level: &str) -> String {
    format!("{attribute}={level}")
}

fn label_of<'a>(e: &'a Entity, attribute: &str) -> Result<&'a str, BiasError> {
    e.attributes
        .get(attribute)
        .and_then(AttributeValue::as_label)
        .ok_or_else(|| BiasError::Attribute {
            entity: e.id.clone(),
            message: format!("missing categorical `{attribute}`"),
        })
}

fn level_counts<'a>(
    entities: &'a [Entity],
    attribute: &str,
) -> Result<BTreeMap<&'a str, usize>, BiasError> {
    let mut counts = BTreeMap::new();
    for e in entities {
        *counts.entry(label_of(e, attribute)?).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Removes entities holding a categorical level shared by fewer than
/// `min_count` entities. Repeats until stable; returns the kept entities and
/// the dropped `(entity, attribute, level)` triples.
pub fn drop_rare_levels(
    entities: &[Entity],
    schema: &Schema,
    min_count: usize,
) -> Result<(Vec<Entity>, Vec<(String, String, String)>), BiasError> {
    let mut kept = entities.to_vec();
    let mut dropped = Vec::new();
    loop {
        let mut rare: BTreeSet<(String, String)> = BTreeSet::new();
        for spec in schema
            .attributes
            .iter()
            .filter(|a| a.kind == AttributeKind::Categorical)
        {
            for (level, n) in level_counts(&kept, &spec.name)? {
                if n < min_count {
                    rare.insert((spec.name.clone(), level.to_string()));
                }
            }
        }
        if rare.is_empty() {
            return Ok((kept, dropped));
        }
        kept.retain(|e| {
            let hit = rare
                .iter()
                .find(|(a, l)| e.attributes.get(a).and_then(AttributeValue::as_label) == Some(l));
            if let Some((a, l)) = hit {
                info!(
                    "excluding `{}`: level `{l}` of `{a}` has fewer than {min_count} members",
                    e.id
                );
                dropped.push((e.id.clone(), a.clone(), l.clone()));
            }
            hit.is_none()
        });
    }
}

/// Builds the intercept-first design matrix. Categorical attributes get one
/// 0/1 column per non-reference level, ordered by level name; the reference
/// defaults to the most frequent level (ties: alphabetically first).
pub fn build_design_matrix(
    entities: &[Entity],
    schema: &Schema,
    reference_levels: &BTreeMap<String, String>,
) -> Result<DesignMatrix, BiasError> {
    let mut columns = vec![INTERCEPT.to_string()];
    let mut encoding = Vec::new();
    for spec in &schema.attributes {
        match spec.kind {
            AttributeKind::Numeric => {
                columns.push(spec.name.clone());
                encoding.push(EncodedAttribute {
                    name: spec.name.clone(),
                    kind: AttributeKind::Numeric,
                    reference: None,
                    levels: Vec::new(),
                });
            }
            AttributeKind::Categorical => {
                let counts = level_counts(entities, &spec.name)?;
                if counts.len() < 2 {
                    return Err(BiasError::SingleLevel {
                        attribute: spec.name.clone(),
                        levels: counts.len(),
                    });
                }
                let reference = match reference_levels.get(&spec.name).or(spec.reference.as_ref()) {
                    Some(r) if counts.contains_key(r.as_str()) => r.clone(),
                    Some(r) => {
                        return Err(BiasError::UnknownLevel {
                            attribute: spec.name.clone(),
                            level: r.clone(),
                        })
                    }
                    None => {
                        let max = counts.values().max().copied().unwrap_or(0);
                        counts
                            .iter()
                            .find(|(_, &n)| n == max)
                            .map(|(l, _)| l.to_string())
                            .unwrap_or_default()
                    }
                };
                let levels: Vec<String> = counts
                    .keys()
                    .filter(|l| **l != reference)
                    .map(|l| l.to_string())
                    .collect();
                columns.extend(levels.iter().map(|l| dummy_name(&spec.name, l)));
                encoding.push(EncodedAttribute {
                    name: spec.name.clone(),
                    kind: AttributeKind::Categorical,
                    reference: Some(reference),
                    levels,
                });
            }
        }
    }
    let mut dm = DesignMatrix {
        columns,
        rows: Vec::with_capacity(entities.len()),
        entity_ids: entities.iter().map(|e| e.id.clone()).collect(),
        encoding,
    };
    for e in entities {
        let mut row = vec![1.0];
        row.extend(
            dm.encode(&e.attributes)
                .map_err(|message| BiasError::Attribute {
                    entity: e.id.clone(),
                    message,
                })?,
        );
        if row.iter().any(|v| !v.is_finite()) {
            return Err(BiasError::NonFinite("design matrix"));
        }
        dm.rows.push(row);
    }
    if dm.n() > 0 {
        let qr = Qr::new(&dm.rows);
        let deficient = qr.deficient_columns();
        if !deficient.is_empty() {
            return Err(BiasError::RankDeficiency(
                deficient
                    .into_iter()
                    .map(|j| dm.columns[j].clone())
                    .collect(),
            ));
        }
    }
    Ok(dm)
}

/// Householder QR of an `n × p` matrix (`n ≥ p` for a full factorisation).
struct Qr {
    n: usize,
    p: usize,
    /// Column-major; holds R above the diagonal and reflectors below it.
    a: Vec<f64>,
    /// Diagonal of R.
    diag: Vec<f64>,
    col_norms: Vec<f64>,
}

impl Qr {
    fn new(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut a = vec![0.0; n * p];
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a[j * n + i] = v;
            }
        }
        let col_norms = (0..p)
            .map(|j| {
                a[j * n..(j + 1) * n]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mut diag = vec![0.0; p];
        for j in 0..p.min(n) {
            let norm = a[j * n + j..(j + 1) * n]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if a[j * n + j] > 0.0 { -norm } else { norm };
            // v = x − alpha·e1, stored in place and scaled so v[0] = 1 is implicit.
            a[j * n + j] -= alpha;
            let v0 = a[j * n + j];
            for i in j + 1..n {
                a[j * n + i] /= v0;
            }
            let tau = -v0 / alpha;
            for c in j + 1..p {
                let mut dot = a[c * n + j];
                for i in j + 1..n {
                    dot += a[j * n + i] * a[c * n + i];
                }
                let s = tau * dot;
                a[c * n + j] -= s;
                for i in j + 1..n {
                    a[c * n + i] -= s * a[j * n + i];
                }
            }
            a[j * n + j] = tau;
            diag[j] = alpha;
        }
        Qr {
            n,
            p,
            a,
            diag,
            col_norms,
        }
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else {
            self.a[j * self.n + i]
        }
    }

    /// Columns whose new direction is negligible relative to their norm.
    fn deficient_columns(&self) -> Vec<usize> {
        (0..self.p)
            .filter(|&j| {
                j >= self.n
                    || self.diag[j].abs() <= 1e-10 * self.col_norms[j].max(f64::MIN_POSITIVE)
            })
            .collect()
    }

    fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut b = y.to_vec();
        for j in 0..self.p.min(n) {
            let tau = self.a[j * n + j];
            if self.diag[j] == 0.0 {
                continue;
            }
            let mut dot = b[j];
            for i in j + 1..n {
                dot += self.a[j * n + i] * b[i];
            }
            let s = tau * dot;
            b[j] -= s;
            for i in j + 1..n {
                b[i] -= s * self.a[j * n + i];
            }
        }
        b
    }

    fn solve(&self, y: &[f64]) -> Vec<f64> {
        let qty = self.qt_mul(y);
        let mut beta = vec![0.0; self.p];
        for i in (0..self.p).rev() {
            let mut s = qty[i];
            for j in i + 1..self.p {
                s -= self.r(i, j) * beta[j];
            }
            beta[i] = s / self.r(i, i);
        }
        beta
    }

    /// Diagonal of (XᵀX)⁻¹ = R⁻¹R⁻ᵀ.
    fn inverse_gram_diag(&self) -> Vec<f64> {
        let p = self.p;
        // Upper-triangular R⁻¹, column by column.
        let mut rinv = vec![0.0; p * p];
        for c in 0..p {
            rinv[c * p + c] = 1.0 / self.r(c, c);
            for i in (0..c).rev() {
                let mut s = 0.0;
                for k in i + 1..=c {
                    s += self.r(i, k) * rinv[k * p + c];
                }
                rinv[i * p + c] = -s / self.r(i, i);
            }
        }
        (0..p)
            .map(|i| (i..p).map(|c| rinv[i * p + c].powi(2)).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub columns: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    /// Two-sided.
    pub p_values: Vec<f64>,
    /// RSS / residual df.
    pub sigma2: f64,
    pub rss: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub f_statistic: f64,
    pub f_p_value: f64,
    pub df_resid: usize,
    pub n: usize,
}

/// OLS on a design matrix.
pub fn ols_fit(design: &DesignMatrix, y: &[f64]) -> Result<RegressionResult, BiasError> {
    ols(&design.rows, &design.columns, y)
}

/// OLS via Householder QR. The first column is taken to be the intercept;
/// the F-test covers all others.
pub fn ols(
    rows: &[Vec<f64>],
    columns: &[String],
    y: &[f64],
) -> Result<RegressionResult, BiasError> {
    let n = rows.len();
    let p = columns.len();
    if y.len() != n {
        return Err(BiasError::Dimension {
            expected: n,
            found: y.len(),
        });
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != p) {
        return Err(BiasError::Dimension {
            expected: p,
            found: bad.len(),
        });
    }
    if n <= p {
        return Err(BiasError::Underdetermined {
            rows: n,
            columns: p,
        });
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(BiasError::NonFinite("regressors"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(BiasError::NonFinite("response"));
    }
    let qr = Qr::new(rows);
    let deficient = qr.deficient_columns();
    if !deficient.is_empty() {
        return Err(BiasError::RankDeficiency(
            deficient.into_iter().map(|j| columns[j].clone()).collect(),
        ));
    }
    let beta = qr.solve(y);
    let rss: f64 = rows
        .iter()
        .zip(y)
        .map(|(r, yi)| {
            let fit: f64 = r.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n - 1) as f64 / df as f64;
    let slopes = p - 1;
    let (f_statistic, f_p_value) = if slopes == 0 {
        (f64::NAN, f64::NAN)
    } else if r_squared >= 1.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (r_squared / slopes as f64) / ((1.0 - r_squared) / df as f64);
        (f, f_sf(f, slopes as f64, df as f64))
    };
    let std_errors: Vec<f64> = qr
        .inverse_gram_diag()
        .iter()
        .map(|d| (sigma2 * d).sqrt())
        .collect();
    let t_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = t_values
        .iter()
        .map(|t| {
            if t.is_nan() {
                f64::NAN
            } else {
                (2.0 * student_t_sf(t.abs(), df as f64)).min(1.0)
            }
        })
        .collect();
    Ok(RegressionResult {
        columns: columns.to_vec(),
        coefficients: beta,
        std_errors,
        t_values,
        p_values,
        sigma2,
        rss,
        r_squared,
        adj_r_squared,
        f_statistic,
        f_p_value,
        df_resid: df,
        n,
    })
}

/// β₀ + βᵀx for a feature row without the intercept.
pub fn predict(result: &RegressionResult, features: &[f64]) -> Result<f64, BiasError> {
    let expected = result.coefficients.len() - 1;
    if features.len() != expected {
        return Err(BiasError::Dimension {
            expected,
            found: features.len(),
        });
    }
    Ok(result.coefficients[0]
        + result.coefficients[1..]
            .iter()
            .zip(features)
            .map(|(b, x)| b * x)
            .sum::<f64>())
}

/// Lanczos approximation (g = 7, 9 terms) of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// P(T ≥ t) for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    let tail = 0.5 * reg_inc_beta(df / (df + t * t), df / 2.0, 0.5);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// P(F' ≥ f) for the F distribution with (`df1`, `df2`) degrees of freedom.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f == f64::INFINITY {
        return 0.0;
    }
    reg_inc_beta(df2 / (df2 + df1 * f), df2 / 2.0, df1 / 2.0)
}

/// Significance level used when none is configured.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// One report row: a coefficient, a reference marker, or a footer statistic.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportRow {
    Coefficient { term: String, index: usize },
    Reference { attribute: String, level: String },
    Footer(Footer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Footer {
    FStatistic,
    AdjustedR2,
    ResidualDf,
}

/// Coefficient table with one (estimate, p-value) column pair per fit.
#[derive(Debug, Clone)]
pub struct Report {
    pub labels: Vec<String>,
    pub results: Vec<RegressionResult>,
    pub rows: Vec<ReportRow>,
    pub alpha: f64,
}

fn fixed3(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

impl Report {
    /// `true` when coefficient `index` of fit `fit` is significant (p < α).
    pub fn significant(&self, fit: usize, index: usize) -> bool {
        self.results[fit].p_values[index] < self.alpha
    }

    /// CSV: `term` then `<label>_estimate,<label>_p` per fit. Significant
    /// estimates carry a trailing `*`; reference rows leave the cells empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["term".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_estimate"));
            header.push(format!("{l}_p"));
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = Vec::with_capacity(header.len());
            match row {
                ReportRow::Coefficient { term, index } => {
                    rec.push(term.clone());
                    for (f, r) in self.results.iter().enumerate() {
                        let mark = if self.significant(f, *index) { "*" } else { "" };
                        rec.push(format!("{}{mark}", fixed3(r.coefficients[*index])));
                        rec.push(fixed3(r.p_values[*index]));
                    }
                }
                ReportRow::Reference { attribute, level } => {
                    rec.push(format!("{} (reference)", dummy_name(attribute, level)));
                    rec.extend(std::iter::repeat_n(String::new(), 2 * self.results.len()));
                }
                ReportRow::Footer(footer) => {
                    rec.push(
                        match footer {
                            Footer::FStatistic => "F statistic",
                            Footer::AdjustedR2 => "adjusted R2",
                            Footer::ResidualDf => "residual df",
                        }
                        .to_string(),
                    );
                    for r in &self.results {
                        match footer {
                            Footer::FStatistic => {
                                let mark = if r.f_p_value < self.alpha { "*" } else { "" };
                                rec.push(format!("{}{mark}", fixed3(r.f_statistic)));
                                rec.push(fixed3(r.f_p_value));
                            }
                            Footer::AdjustedR2 => {
                                rec.push(fixed3(r.adj_r_squared));
                                rec.push(String::new());
                            }
                            Footer::ResidualDf => {
                                rec.push(r.df_resid.to_string());
                                rec.push(String::new());
                            }
                        }
                    }
                }
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 output")
    }
}

/// Lays out fits that share `design` in design-column order, with a
/// reference row ahead of each categorical attribute's dummies.
pub fn summarize(
    design: &DesignMatrix,
    fits: Vec<(String, RegressionResult)>,
    alpha: f64,
) -> Report {
    let mut rows = vec![ReportRow::Coefficient {
        term: INTERCEPT.to_string(),
        index: 0,
    }];
    let mut index = 1;
    for enc in &design.encoding {
        match enc.kind {
            AttributeKind::Numeric => {
                rows.push(ReportRow::Coefficient {
                    term: enc.name.clone(),
                    index,
                });
                index += 1;
            }
            AttributeKind::Categorical => {
                rows.push(ReportRow::Reference {
                    attribute: enc.name.clone(),
                    level: enc.reference.clone().unwrap_or_default(),
                });
                for level in &enc.levels {
                    rows.push(ReportRow::Coefficient {
                        term: dummy_name(&enc.name, level),
                        index,
                    });
                    index += 1;
                }
            }
        }
    }
    rows.extend(
        [Footer::FStatistic, Footer::AdjustedR2, Footer::ResidualDf].map(ReportRow::Footer),
    );
    let (labels, results) = fits.into_iter().unzip();
    Report {
        labels,
        results,
        rows,
        alpha,
    }
}
