//! Regression and hypothesis testing for case-study style analyses.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("factor `{factor}`: unknown level `{level}`")]
    UnknownLevel { factor: String, level: String },
    #[error("observation {row} has no value for factor `{factor}`")]
    MissingFactor { row: usize, factor: String },
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("rank-deficient design: columns {} depend on earlier columns", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("need more observations than parameters (n={n}, p={p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("full model fits exactly (RSS = 0); F is undefined")]
    DegenerateFit,
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),
}

type Result<T> = std::result::Result<T, StatsError>;

fn check_df(df: f64) -> Result<()> {
    if df.is_finite() && df > 0.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidDf(df))
    }
}

/// Student t cumulative distribution, via the regularized incomplete beta function.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    let tail = 0.5 * t_tail_both(t, df);
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

/// `P(|T| >= |t|)`.
fn t_tail_both(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x)
}

/// Two-sided p-value for a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if t.is_nan() {
        return Ok(f64::NAN);
    }
    Ok(t_tail_both(t, df))
}

/// Quantile of the t distribution, by bisection on [`student_t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidProbability(p));
    }
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while student_t_cdf(lo, df)? > p {
        lo *= 2.0;
    }
    while student_t_cdf(hi, df)? < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if student_t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// F distribution CDF.
pub fn f_cdf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    Ok(1.0 - f_sf(f, df1, df2)?)
}

/// Upper tail `P(F >= f)`, computed directly for accuracy at small p.
pub fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    check_df(df1)?;
    check_df(df2)?;
    if f.is_nan() {
        return Ok(f64::NAN);
    }
    if f <= 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    Ok(beta_reg(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))
}

/// Significance marker: `***` < 0.001, `**` < 0.01, `*` < 0.05, `†` < 0.10.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.10 {
        "†"
    } else {
        ""
    }
}

/// Categorical predictor with an explicit reference level.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
    pub reference: String,
}

impl Factor {
    pub fn new(name: &str, levels: &[&str], reference: &str) -> Self {
        Self { name: name.into(), levels: levels.iter().map(|l| l.to_string()).collect(), reference: reference.into() }
    }

    fn non_reference(&self) -> impl Iterator<Item = &String> {
        self.levels.iter().filter(move |l| **l != self.reference)
    }
}

/// Regression design: intercept first, then predictor columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Named groups of columns tested together (one per factor or interaction).
    pub blocks: Vec<(String, Vec<usize>)>,
}

pub const INTERCEPT: &str = "(Intercept)";

impl DesignMatrix {
    /// Intercept plus the given continuous columns, each its own block.
    pub fn with_intercept(columns: &[(&str, Vec<f64>)]) -> Result<Self> {
        let mut m = Self::intercept_only(columns.first().map(|c| c.1.len()).unwrap_or(0));
        for (name, values) in columns {
            m.add_continuous(name, values)?;
        }
        Ok(m)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Self {
        Self { names: vec![INTERCEPT.into()], rows: vec![vec![1.0]; n], blocks: Vec::new() }
    }

    pub fn add_continuous(&mut self, name: &str, values: &[f64]) -> Result<()> {
        if values.len() != self.rows.len() {
            return Err(StatsError::LengthMismatch(values.len(), self.rows.len()));
        }
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.push(*v);
        }
        self.names.push(name.into());
        self.blocks.push((name.into(), vec![self.names.len() - 1]));
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), self.n_cols(), |i, j| self.rows[i][j])
    }

    /// Copy without the given columns; blocks referring to them are dropped.
    pub fn without_columns(&self, drop: &[usize]) -> Self {
        let keep: Vec<usize> = (0..self.n_cols()).filter(|j| !drop.contains(j)).collect();
        let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, old)| (*old, new)).collect();
        Self {
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect(),
            blocks: self
                .blocks
                .iter()
                .filter(|(_, cols)| cols.iter().all(|c| remap.contains_key(c)))
                .map(|(n, cols)| (n.clone(), cols.iter().map(|c| remap[c]).collect()))
                .collect(),
        }
    }

    fn has_intercept(&self) -> bool {
        (0..self.n_cols()).any(|j| self.rows.iter().all(|r| r[j] == 1.0))
    }
}

fn level_name(factor: &str, level: &str) -> String {
    format!("{factor}[{level}]")
}

/// Dummy-codes categorical observations against reference levels.
///
/// Produces an intercept column, one 0/1 column per non-reference level of
/// each factor, and for each requested factor pair the elementwise products
/// of their dummy columns.
pub fn dummy_code(
    observations: &[BTreeMap<String, String>],
    factors: &[Factor],
    interactions: &[(String, String)],
) -> Result<DesignMatrix> {
    for f in factors {
        if !f.levels.contains(&f.reference) {
            return Err(StatsError::UnknownLevel { factor: f.name.clone(), level: f.reference.clone() });
        }
    }
    let find = |name: &str| factors.iter().find(|f| f.name == name).ok_or_else(|| StatsError::UnknownFactor(name.into()));
    let pairs: Vec<(&Factor, &Factor)> = interactions.iter().map(|(a, b)| Ok((find(a)?, find(b)?))).collect::<Result<_>>()?;

    let mut names = vec![INTERCEPT.to_string()];
    let mut blocks = Vec::new();
    for f in factors {
        let start = names.len();
        names.extend(f.non_reference().map(|l| level_name(&f.name, l)));
        blocks.push((f.name.clone(), (start..names.len()).collect()));
    }
    for (a, b) in &pairs {
        let start = names.len();
        for la in a.non_reference() {
            for lb in b.non_reference() {
                names.push(format!("{}:{}", level_name(&a.name, la), level_name(&b.name, lb)));
            }
        }
        blocks.push((format!("{}:{}", a.name, b.name), (start..names.len()).collect()));
    }

    let mut rows = Vec::with_capacity(observations.len());
    for (i, obs) in observations.iter().enumerate() {
        let mut dummies: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for f in factors {
            let value = obs.get(&f.name).ok_or_else(|| StatsError::MissingFactor { row: i, factor: f.name.clone() })?;
            if !f.levels.contains(value) {
                return Err(StatsError::UnknownLevel { factor: f.name.clone(), level: value.clone() });
            }
            dummies.insert(&f.name, f.non_reference().map(|l| if l == value { 1.0 } else { 0.0 }).collect());
        }
        let mut row = vec![1.0];
        for f in factors {
            row.extend(&dummies[f.name.as_str()]);
        }
        for (a, b) in &pairs {
            for x in &dummies[a.name.as_str()] {
                for y in &dummies[b.name.as_str()] {
                    row.push(x * y);
                }
            }
        }
        rows.push(row);
    }
    Ok(DesignMatrix { names, rows, blocks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEffect {
    pub name: String,
    /// `(R²_full - R²_without_block) / (1 - R²_full)`.
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub p: usize,
    pub df_residual: usize,
    pub rss: f64,
    pub tss: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Overall F test against the intercept-only model, when there are predictors.
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    /// Model-level Cohen's f² = R² / (1 - R²).
    pub cohens_f2: f64,
    pub block_f2: Vec<BlockEffect>,
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub response: Vec<f64>,
}

impl RegressionResult {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.coefficients.iter().map(|c| c.name.as_str())
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }
}

struct QrFit {
    beta: DVector<f64>,
    xtx_inv: DMatrix<f64>,
    fitted: DVector<f64>,
}

/// Least squares through a QR factorization; flags columns whose diagonal
/// of R is negligible relative to the column norm.
fn qr_solve(design: &DesignMatrix, y: &DVector<f64>) -> Result<QrFit> {
    let x = design.to_matrix();
    let (n, p) = x.shape();
    if n <= p {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| {
            let norm = x.column(j).norm();
            norm == 0.0 || r[(j, j)].abs() <= 1e-10 * norm
        })
        .map(|j| design.names[j].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(StatsError::RankDeficient(dependent));
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| StatsError::RankDeficient(design.names.clone()))?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("triangular with non-zero diagonal");
    let xtx_inv = &r_inv * r_inv.transpose();
    let fitted = &x * &beta;
    Ok(QrFit { beta, xtx_inv, fitted })
}

fn r_squared(rss: f64, tss: f64) -> f64 {
    if tss > 0.0 {
        1.0 - rss / tss
    } else {
        f64::NAN
    }
}

fn cohens_f2(r2: f64) -> f64 {
    if r2 >= 1.0 {
        f64::INFINITY
    } else {
        r2 / (1.0 - r2)
    }
}

/// Ordinary least squares with coefficient inference and effect sizes.
pub fn ols_fit(design: &DesignMatrix, y: &[f64]) -> Result<RegressionResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if y.len() != n {
        return Err(StatsError::LengthMismatch(y.len(), n));
    }
    let yv = DVector::from_column_slice(y);
    let fit = qr_solve(design, &yv)?;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fit.fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let tcrit = t_quantile(0.975, df as f64)?;

    let coefficients = (0..p)
        .map(|j| {
            let estimate = fit.beta[j];
            let std_error = (sigma2 * fit.xtx_inv[(j, j)]).max(0.0).sqrt();
            let t = estimate / std_error;
            let p_value = if t.is_nan() { f64::NAN } else { t_tail_both(t, df as f64) };
            Coefficient {
                name: design.names[j].clone(),
                estimate,
                std_error,
                t,
                p: p_value,
                ci_low: estimate - tcrit * std_error,
                ci_high: estimate + tcrit * std_error,
            }
        })
        .collect();

    let r2 = r_squared(rss, tss);
    let adj = 1.0 - (1.0 - r2) * (n as f64 - 1.0) / df as f64;
    let (f_statistic, f_p_value) = if design.has_intercept() && p > 1 {
        let f = ((tss - rss) / (p - 1) as f64) / (rss / df as f64);
        (Some(f), Some(f_sf(f, (p - 1) as f64, df as f64)?))
    } else {
        (None, None)
    };

    let mut block_f2 = Vec::with_capacity(design.blocks.len());
    for (name, cols) in &design.blocks {
        let reduced = design.without_columns(cols);
        let f2 = if reduced.n_cols() == 0 {
            cohens_f2(r2)
        } else {
            let rf = qr_solve(&reduced, &yv)?;
            let rss_r: f64 = (0..n).map(|i| (y[i] - rf.fitted[i]).powi(2)).sum();
            let r2_r = r_squared(rss_r, tss);
            if r2 >= 1.0 {
                f64::INFINITY
            } else {
                (r2 - r2_r) / (1.0 - r2)
            }
        };
        block_f2.push(BlockEffect { name: name.clone(), f2 });
    }

    Ok(RegressionResult {
        coefficients,
        n,
        p,
        df_residual: df,
        rss,
        tss,
        r_squared: r2,
        adj_r_squared: adj,
        f_statistic,
        f_p_value,
        cohens_f2: cohens_f2(r2),
        block_f2,
        residuals,
        fitted: fit.fitted.iter().copied().collect(),
        response: y.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FTest {
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
}

/// Extra-sum-of-squares F test of a reduced model against a full model
/// fitted to the same response.
pub fn nested_f_test(full: &RegressionResult, reduced: &RegressionResult) -> Result<FTest> {
    if full.response != reduced.response {
        return Err(StatsError::NotNested("models were fitted to different responses".into()));
    }
    let full_names: Vec<&str> = full.names().collect();
    if let Some(extra) = reduced.names().find(|n| !full_names.contains(n)) {
        return Err(StatsError::NotNested(format!("column `{extra}` missing from the full model")));
    }
    let df1 = full.p - reduced.p;
    let df2 = full.df_residual;
    if df1 == 0 {
        return Ok(FTest { f: 0.0, df1, df2, p: 1.0 });
    }
    if full.rss <= 1e-12 * full.tss.max(f64::MIN_POSITIVE) || full.rss == 0.0 {
        return Err(StatsError::DegenerateFit);
    }
    let f = ((reduced.rss - full.rss).max(0.0) / df1 as f64) / (full.rss / df2 as f64);
    Ok(FTest { f, df1, df2, p: f_sf(f, df1 as f64, df2 as f64)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
}

/// Paired two-sided t test on `a - b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewObservations { n, p: 1 });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sd = var.sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    Ok(TTestResult { t, df, p: t_two_sided_p(t, df as f64)?, mean_diff: mean, sd_diff: sd })
}

/// Wide summary: one row per behavior with R² and each effect, starred.
pub fn regression_summary_csv(results: &[(String, RegressionResult)], effects: &[String]) -> String {
    let mut out = String::from("behavior,r_squared");
    for e in effects {
        out.push(',');
        out.push_str(e);
    }
    out.push('\n');
    for (behavior, r) in results {
        let model_p = r.f_p_value.unwrap_or(f64::NAN);
        out.push_str(&format!("{behavior},{:.3}{}", r.r_squared, significance_stars(model_p)));
        for e in effects {
            match r.coefficient(e) {
                Some(c) => out.push_str(&format!(",{:.3}{}", c.estimate, significance_stars(c.p))),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Long format: one row per coefficient.
pub fn coefficients_csv(results: &[(String, RegressionResult)]) -> String {
    let mut out = String::from("behavior,term,estimate,std_error,t,p,ci_low,ci_high,stars\n");
    for (behavior, r) in results {
        for c in &r.coefficients {
            out.push_str(&format!(
                "{behavior},{},{},{},{},{},{},{},{}\n",
                c.name,
                c.estimate,
                c.std_error,
                c.t,
                c.p,
                c.ci_low,
                c.ci_high,
                significance_stars(c.p)
            ));
        }
    }
    out
}
