//! The `ethokit` command line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::ingest;
use crate::metrics::{
    annotation_cost, class_metrics, cohens_kappa, confusion_from_pairs, count_matrix_csv, gantt_segments, matrix_csv,
    out_of_sight_fraction, time_budget, transition_matrix, MetricsError, TransitionMatrix, DEFAULT_ANNOTATION_RATE,
};
use crate::miniscene::{extract_miniscenes, manifest_csv};
use crate::model::{AnalysisParams, Ethogram, Method, ObservationStream};
use crate::session::{read_text, simulated_session_files, write_atomic, Session, SessionError};
use crate::simulator::simulate;
use crate::social::{detect_interactions, events_csv, overlap_summary, summarize_counts};
use crate::stats::{coefficients_csv, dummy_code, nested_f_test, ols_fit, regression_summary_csv, Factor, RegressionResult, INTERCEPT};
use crate::svg::{gantt_svg, heatmap_svg, GanttRow};
use crate::timeline::{align_pair, map_labels, propagate_scan, visibility_filter, PairedSeries, TimelineError};
use crate::validate::validate_session;

pub const ETHOGRAM_ENV: &str = "ETHOKIT_ETHOGRAM";

#[derive(Debug, Parser)]
#[command(name = "ethokit", version, about = "Behavior analytics for drone and ground observation sessions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; without it results go to stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Resampling interval in seconds
    #[arg(long, global = true)]
    pub interval: Option<f64>,
    /// Overlap ratio threshold for interactions
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Minimum consecutive overlap frames for an interaction
    #[arg(long = "min-frames", global = true)]
    pub min_frames: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Ethogram CSV (else config, else $ETHOKIT_ETHOGRAM, else built-in)
    #[arg(long, global = true)]
    pub ethogram: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Source {
    Labels,
    Observations,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompareMode {
    ScanVsFocal,
    GroundVsDrone,
    ManualVsMl,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a session directory; exits 1 when violations are found
    Validate { session: Option<PathBuf> },
    /// Extract mini-scene crop windows from tracks
    Miniscenes {
        session: Option<PathBuf>,
        #[arg(long, default_value_t = 400)]
        crop_w: u32,
        #[arg(long, default_value_t = 300)]
        crop_h: u32,
    },
    /// Time budgets per stream
    Timebudget {
        session: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Source::All)]
        source: Source,
    },
    /// Pooled behavior transition matrix
    Transitions {
        session: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Source::Labels)]
        source: Source,
    },
    /// Social interactions from box overlap, or normalization of published counts
    Interactions {
        session: Option<PathBuf>,
        /// `species,count` file
        #[arg(long)]
        composition: Option<PathBuf>,
        /// `species_a,species_b,overlap_count,events` file
        #[arg(long, requires = "composition")]
        counts: Option<PathBuf>,
    },
    /// Agreement between two sampling methods
    Compare {
        session: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: CompareMode,
    },
    /// Dummy-coded OLS regressions on a CSV table
    Regress {
        table: PathBuf,
        #[arg(long = "factor", value_name = "NAME=REFERENCE")]
        factors: Vec<String>,
        #[arg(long = "interaction", value_name = "A:B")]
        interactions: Vec<String>,
        #[arg(long = "response")]
        responses: Vec<String>,
    },
    /// Write a simulated session directory (requires --seed and --out)
    Simulate,
    /// CSV tables plus SVG Gantt chart and transition heatmap (requires --out)
    Report {
        session: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Source::All)]
        source: Source,
    },
    /// Manual annotation effort estimate
    Cost {
        #[arg(long)]
        individuals: u64,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = DEFAULT_ANNOTATION_RATE)]
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Unreadable or malformed input, bad flags or config.
    Input(String),
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Analysis(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Analysis(m) => f.write_str(m),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn analysis(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

/// One machine-readable result, rendered as `<name>.csv` or `<name>.json`.
#[derive(Debug, Clone)]
pub struct Product {
    pub name: String,
    pub csv: String,
    pub json: Value,
}

impl Product {
    fn new(name: &str, csv: String, json: Value) -> Self {
        Self { name: name.into(), csv, json }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub products: Vec<Product>,
    pub svgs: Vec<(String, String)>,
    /// Files written directly (not subject to `--format`).
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
    /// Resolved output directory (flag, else config).
    pub out_dir: Option<PathBuf>,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable result")
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Ctx<'a> {
    global: &'a GlobalArgs,
    cfg: RunConfig,
    ethogram: Ethogram,
    params: AnalysisParams,
}

fn load_ethogram(path: &Path) -> Result<Ethogram, CliError> {
    let text = read_text(path)?;
    ingest::parse_ethogram(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl<'a> Ctx<'a> {
    fn new(global: &'a GlobalArgs) -> Result<Self, CliError> {
        let cfg = match &global.config {
            Some(p) => RunConfig::from_file_text(&read_text(p)?, p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
            None => RunConfig::default(),
        };
        let ethogram_path = global
            .ethogram
            .clone()
            .or_else(|| cfg.ethogram.clone())
            .or_else(|| std::env::var_os(ETHOGRAM_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
        let ethogram = match ethogram_path {
            Some(p) => load_ethogram(&p)?,
            None => Ethogram::kabr_default(),
        };
        let mut params = cfg.params.clone();
        if let Some(v) = global.interval {
            params.downsample_interval_s = v;
        }
        if let Some(v) = global.threshold {
            params.overlap_ratio_threshold = v;
        }
        if let Some(v) = global.min_frames {
            params.min_overlap_frames = v;
        }
        params.check().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(Self { global, cfg, ethogram, params })
    }

    fn out_dir(&self) -> Option<PathBuf> {
        self.global.out.clone().or_else(|| self.cfg.out.clone())
    }

    fn session(&self, arg: &Option<PathBuf>) -> Result<Session, CliError> {
        let dir = arg.clone().or_else(|| self.cfg.session.clone()).ok_or_else(|| CliError::Input("no session directory given".into()))?;
        Ok(Session::load(&dir)?)
    }

    fn scan_propagated(&self, s: &ObservationStream) -> Result<ObservationStream, CliError> {
        propagate_scan(s, self.params.scan_propagation_s).map_err(analysis)
    }

    fn streams(&self, s: &Session, source: Source) -> Result<Vec<ObservationStream>, CliError> {
        let mut out = Vec::new();
        if matches!(source, Source::Labels | Source::All) {
            out.extend(s.label_observations(&s.labels, Method::DroneFocal));
        }
        if matches!(source, Source::Observations | Source::All) {
            for st in &s.observations {
                out.push(if st.method == Method::GroundScan { self.scan_propagated(st)? } else { st.clone() });
            }
        }
        Ok(out)
    }

    /// Distinct codes ordered as in the ethogram, unknown codes last.
    fn ordered_codes<'c>(&self, codes: impl IntoIterator<Item = &'c str>, technical: bool) -> Vec<String> {
        let set: BTreeSet<&str> = codes.into_iter().filter(|c| technical || !self.ethogram.is_technical(c)).collect();
        let mut v: Vec<&str> = set.into_iter().collect();
        v.sort_by_key(|c| (self.ethogram.index_of(c).unwrap_or(usize::MAX), c.to_string()));
        v.into_iter().map(String::from).collect()
    }
}

fn budget_products(ctx: &Ctx, streams: &[ObservationStream], warnings: &mut Vec<String>) -> Vec<Product> {
    let mut rows = Vec::new();
    let mut vis_rows = Vec::new();
    let mut json_rows = Vec::new();
    for s in streams {
        let oos = out_of_sight_fraction(s, &ctx.ethogram).ok();
        vis_rows.push(vec![s.subject_id.clone(), s.method.to_string(), opt(oos)]);
        match time_budget(s, &ctx.ethogram) {
            Ok(b) => {
                for code in ctx.ordered_codes(b.seconds.keys().map(String::as_str), false) {
                    rows.push(vec![
                        s.subject_id.clone(),
                        s.method.to_string(),
                        code.clone(),
                        b.seconds[&code].to_string(),
                        b.proportions[&code].to_string(),
                    ]);
                }
                json_rows.push(json!({"subject_id": s.subject_id, "method": s.method, "out_of_sight_fraction": oos, "budget": b}));
            }
            Err(e) => warnings.push(format!("{} ({}): {e}", s.subject_id, s.method)),
        }
    }
    vec![
        Product::new("timebudget", csv_table(&["subject_id", "method", "code", "seconds", "proportion"], rows), Value::Array(json_rows)),
        Product::new("visibility", csv_table(&["subject_id", "method", "out_of_sight_fraction"], vis_rows.clone()), to_json(&vis_rows)),
    ]
}

fn transitions(ctx: &Ctx, streams: &[ObservationStream]) -> Result<TransitionMatrix, CliError> {
    let codes = ctx.ordered_codes(streams.iter().flat_map(|s| s.intervals.iter().map(|iv| iv.code.as_str())), false);
    if codes.is_empty() {
        return Err(CliError::Analysis("no behavioral codes in the selected streams".into()));
    }
    transition_matrix(streams, ctx.params.downsample_interval_s, &codes).map_err(analysis)
}

fn transition_products(tm: &TransitionMatrix) -> Vec<Product> {
    let probs = tm.probabilities();
    vec![
        Product::new("transitions", matrix_csv(&tm.codes, &probs), json!({"codes": tm.codes, "probabilities": probs})),
        Product::new("transition_counts", count_matrix_csv(&tm.codes, &tm.counts), json!({"codes": tm.codes, "counts": tm.counts})),
    ]
}

fn cmd_validate(ctx: &Ctx, session: &Option<PathBuf>) -> Result<Outcome, CliError> {
    let s = ctx.session(session)?;
    let report = validate_session(&s.tracks, &s.labels, &s.observations, &s.meta, &ctx.ethogram);
    let rows = report.violations.iter().map(|v| vec![v.location.clone(), v.message.clone()]);
    Ok(Outcome {
        products: vec![Product::new("validation", csv_table(&["location", "message"], rows), to_json(&report))],
        exit_code: if report.is_empty() { 0 } else { 1 },
        ..Outcome::default()
    })
}

fn cmd_miniscenes(ctx: &Ctx, session: &Option<PathBuf>, crop: (u32, u32)) -> Result<Outcome, CliError> {
    let s = ctx.session(session)?;
    let scenes = extract_miniscenes(&s.tracks, &s.labels, &ctx.params, &s.meta, crop).map_err(analysis)?;
    let summary: Vec<Value> = scenes
        .iter()
        .map(|m| json!({"track_id": m.track_id, "start_frame": m.start_frame, "end_frame": m.end_frame, "frames": m.len_frames()}))
        .collect();
    Ok(Outcome { products: vec![Product::new("miniscenes", manifest_csv(&scenes), Value::Array(summary))], ..Outcome::default() })
}

fn cmd_timebudget(ctx: &Ctx, session: &Option<PathBuf>, source: Source) -> Result<Outcome, CliError> {
    let s = ctx.session(session)?;
    let streams = ctx.streams(&s, source)?;
    let mut out = Outcome::default();
    out.products = budget_products(ctx, &streams, &mut out.warnings);
    Ok(out)
}

fn cmd_transitions(ctx: &Ctx, session: &Option<PathBuf>, source: Source) -> Result<Outcome, CliError> {
    let s = ctx.session(session)?;
    let tm = transitions(ctx, &ctx.streams(&s, source)?)?;
    Ok(Outcome { products: transition_products(&tm), ..Outcome::default() })
}

fn cmd_interactions(
    ctx: &Ctx,
    session: &Option<PathBuf>,
    composition: &Option<PathBuf>,
    counts: &Option<PathBuf>,
) -> Result<Outcome, CliError> {
    let read_comp = |p: &Path| -> Result<_, CliError> {
        ingest::read_species_counts(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    };
    if let (Some(cp), Some(kp)) = (composition, counts) {
        let comp = read_comp(cp)?;
        let pairs = ingest::read_pair_counts(&read_text(kp)?).map_err(|e| CliError::Input(format!("{}: {e}", kp.display())))?;
        let m = summarize_counts(&pairs, &comp).map_err(analysis)?;
        return Ok(Outcome { products: vec![Product::new("overlap_summary", m.to_csv(), to_json(&m))], ..Outcome::default() });
    }
    let s = ctx.session(session)?;
    let comp = match composition {
        Some(cp) => read_comp(cp)?,
        None => s.composition(),
    };
    let events = detect_interactions(&s.tracks, &s.labels, &ctx.params);
    let m = overlap_summary(&events, &comp).map_err(analysis)?;
    Ok(Outcome {
        products: vec![
            Product::new("interactions", events_csv(&events), to_json(&events)),
            Product::new("overlap_summary", m.to_csv(), to_json(&m)),
        ],
        ..Outcome::default()
    })
}

fn cmd_compare(ctx: &Ctx, session: &Option<PathBuf>, mode: CompareMode) -> Result<Outcome, CliError> {
    let s = ctx.session(session)?;
    let (a, b): (Vec<ObservationStream>, Vec<ObservationStream>) = match mode {
        CompareMode::ScanVsFocal => (
            s.observations_by(Method::GroundScan).iter().map(|x| ctx.scan_propagated(x)).collect::<Result<_, _>>()?,
            s.observations_by(Method::GroundFocal),
        ),
        CompareMode::GroundVsDrone => {
            let mut drone = s.label_observations(&s.labels, Method::DroneFocal);
            drone.extend(s.observations_by(Method::DroneFocal));
            (s.observations_by(Method::GroundFocal), drone)
        }
        CompareMode::ManualVsMl => {
            let ml = s
                .ml_labels
                .as_ref()
                .ok_or_else(|| CliError::Input(format!("{}: no {} in session", s.dir.display(), crate::session::ML_LABELS_FILE)))?;
            (s.label_observations(&s.labels, Method::DroneFocal), s.label_observations(ml, Method::MlAuto))
        }
    };
    let mut by_subject: BTreeMap<&str, &ObservationStream> = BTreeMap::new();
    for st in &b {
        by_subject.entry(st.subject_id.as_str()).or_insert(st);
    }
    let mut a_sorted: Vec<&ObservationStream> = a.iter().collect();
    a_sorted.sort_by(|x, y| x.subject_id.cmp(&y.subject_id));

    let mut out = Outcome::default();
    let mut series: Vec<PairedSeries> = Vec::new();
    let mapped = |st: &ObservationStream, m: &BTreeMap<String, String>| -> Result<ObservationStream, CliError> {
        if m.is_empty() {
            Ok(st.clone())
        } else {
            map_labels(st, m).map_err(analysis)
        }
    };
    for sa in a_sorted {
        let Some(sb) = by_subject.get(sa.subject_id.as_str()) else { continue };
        let ma = mapped(sa, &ctx.cfg.mapping.a)?;
        let mb = mapped(sb, &ctx.cfg.mapping.b)?;
        let (fa, fb) = match visibility_filter(&ma, &mb, &ctx.ethogram) {
            Ok(p) => p,
            Err(e @ TimelineError::NoOverlap { .. }) => {
                out.warnings.push(e.to_string());
                continue;
            }
            Err(e) => return Err(analysis(e)),
        };
        let p = align_pair(&fa, &fb, ctx.params.downsample_interval_s).map_err(analysis)?;
        if !p.is_empty() {
            series.push(p);
        }
    }
    if series.is_empty() {
        return Err(CliError::Analysis("no subject observed by both methods at the same time".into()));
    }
    let codes = ctx.ordered_codes(series.iter().flat_map(|p| p.code_a.iter().chain(&p.code_b).map(String::as_str)), true);
    let cm = confusion_from_pairs(series.iter().flat_map(|p| p.pairs()), &codes).map_err(analysis)?;
    let kappa = match cohens_kappa(&cm) {
        Ok(k) => Some(k),
        Err(e @ MetricsError::DegenerateMarginals) => {
            out.warnings.push(format!("kappa undefined: {e}"));
            None
        }
        Err(e) => return Err(analysis(e)),
    };
    let classes = class_metrics(&cm);

    let paired_rows = series.iter().flat_map(|p| {
        p.times
            .iter()
            .zip(p.pairs())
            .map(|(t, (x, y))| vec![p.subject_id.clone(), t.to_string(), x.to_string(), y.to_string()])
            .collect::<Vec<_>>()
    });
    let n_pairs: usize = series.iter().map(PairedSeries::len).sum();
    let agreement = [
        ("subjects", series.len() as f64),
        ("n_pairs", n_pairs as f64),
        ("observed", kappa.map_or(f64::NAN, |k| k.observed)),
        ("expected", kappa.map_or(f64::NAN, |k| k.expected)),
        ("kappa", kappa.map_or(f64::NAN, |k| k.kappa)),
        ("macro_precision", classes.macro_precision.unwrap_or(f64::NAN)),
        ("macro_recall", classes.macro_recall.unwrap_or(f64::NAN)),
        ("macro_f1", classes.macro_f1.unwrap_or(f64::NAN)),
    ];
    let agreement_rows = agreement.iter().map(|(k, v)| vec![k.to_string(), if v.is_nan() { String::new() } else { v.to_string() }]);
    let class_rows =
        classes.classes.iter().map(|c| vec![c.code.clone(), c.support.to_string(), opt(c.precision), opt(c.recall), opt(c.f1)]);
    out.products = vec![
        Product::new("paired", csv_table(&["subject_id", "t", "code_a", "code_b"], paired_rows), to_json(&series)),
        Product::new("confusion", count_matrix_csv(&cm.codes, &cm.counts), to_json(&cm)),
        Product::new(
            "agreement",
            csv_table(&["metric", "value"], agreement_rows),
            json!({"subjects": series.len(), "n_pairs": n_pairs, "agreement": kappa, "class_metrics": classes}),
        ),
        Product::new("class_metrics", csv_table(&["code", "support", "precision", "recall", "f1"], class_rows), to_json(&classes)),
    ];
    Ok(out)
}

fn cmd_regress(
    ctx: &Ctx,
    table: &Path,
    factor_args: &[String],
    interaction_args: &[String],
    response_args: &[String],
) -> Result<Outcome, CliError> {
    let text = read_text(table)?;
    let input_err = |m: String| CliError::Input(format!("{}: {m}", table.display()));
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(|e| input_err(e.to_string()))?.iter().map(String::from).collect();
    let mut records = Vec::new();
    for rec in reader.records() {
        records.push(rec.map_err(|e| input_err(e.to_string()))?);
    }
    let column = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| input_err(format!("no column `{name}`")));

    let mut factor_specs: Vec<(String, String, Option<Vec<String>>)> = Vec::new();
    if factor_args.is_empty() {
        for f in &ctx.cfg.regress.factors {
            factor_specs.push((f.name.clone(), f.reference.clone(), f.levels.clone()));
        }
    } else {
        for arg in factor_args {
            let (n, r) = arg.split_once('=').ok_or_else(|| CliError::Input(format!("--factor `{arg}` must be NAME=REFERENCE")))?;
            factor_specs.push((n.into(), r.into(), None));
        }
    }
    if factor_specs.is_empty() {
        return Err(CliError::Input("regress needs at least one factor".into()));
    }
    let mut factors = Vec::new();
    for (name, reference, levels) in factor_specs {
        let col = column(&name)?;
        let levels = levels.unwrap_or_else(|| records.iter().map(|r| r[col].to_string()).collect::<BTreeSet<_>>().into_iter().collect());
        factors.push(Factor { name, levels, reference });
    }
    let interactions: Vec<(String, String)> = if interaction_args.is_empty() {
        ctx.cfg.regress.interactions.iter().map(|[a, b]| (a.clone(), b.clone())).collect()
    } else {
        interaction_args
            .iter()
            .map(|arg| {
                arg.split_once(':')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| CliError::Input(format!("--interaction `{arg}` must be A:B")))
            })
            .collect::<Result<_, _>>()?
    };
    let responses: Vec<String> = if !response_args.is_empty() {
        response_args.to_vec()
    } else if !ctx.cfg.regress.responses.is_empty() {
        ctx.cfg.regress.responses.clone()
    } else {
        header.iter().filter(|h| !factors.iter().any(|f| f.name == **h)).cloned().collect()
    };

    let observations: Vec<BTreeMap<String, String>> =
        records.iter().map(|r| factors.iter().map(|f| (f.name.clone(), r[column(&f.name).unwrap()].to_string())).collect()).collect();
    let full = dummy_code(&observations, &factors, &interactions).map_err(analysis)?;
    let reduced = if interactions.is_empty() { None } else { Some(dummy_code(&observations, &factors, &[]).map_err(analysis)?) };

    let mut results: Vec<(String, RegressionResult)> = Vec::new();
    let mut tests = Vec::new();
    for resp in &responses {
        let col = column(resp)?;
        let y: Vec<f64> = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[col]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| input_err(format!("row {}, column `{resp}`: `{}` is not a number", i + 2, &r[col])))
            })
            .collect::<Result<_, _>>()?;
        let fit = ols_fit(&full, &y).map_err(|e| CliError::Analysis(format!("{resp}: {e}")))?;
        if let Some(x) = &reduced {
            let red = ols_fit(x, &y).map_err(|e| CliError::Analysis(format!("{resp}: {e}")))?;
            let t = nested_f_test(&fit, &red).map_err(|e| CliError::Analysis(format!("{resp}: {e}")))?;
            tests.push((resp.clone(), t));
        }
        results.push((resp.clone(), fit));
    }
    let effects: Vec<String> = full.names.iter().filter(|n| *n != INTERCEPT).cloned().collect();
    let fit_rows = results.iter().map(|(r, f)| {
        vec![
            r.clone(),
            f.n.to_string(),
            f.p.to_string(),
            f.r_squared.to_string(),
            f.adj_r_squared.to_string(),
            opt(f.f_statistic),
            opt(f.f_p_value),
            f.cohens_f2.to_string(),
        ]
    });
    let effect_rows = results.iter().flat_map(|(r, f)| f.block_f2.iter().map(move |b| vec![r.clone(), b.name.clone(), b.f2.to_string()]));
    let mut products = vec![
        Product::new("regression_summary", regression_summary_csv(&results, &effects), to_json(&results)),
        Product::new(
            "coefficients",
            coefficients_csv(&results),
            to_json(&results.iter().map(|(r, f)| (r, &f.coefficients)).collect::<Vec<_>>()),
        ),
        Product::new(
            "model_fit",
            csv_table(&["response", "n", "p", "r_squared", "adj_r_squared", "f_statistic", "f_p_value", "cohens_f2"], fit_rows),
            Value::Null,
        ),
        Product::new("effect_sizes", csv_table(&["response", "block", "f2"], effect_rows), Value::Null),
    ];
    if !tests.is_empty() {
        let rows = tests.iter().map(|(r, t)| vec![r.clone(), t.f.to_string(), t.df1.to_string(), t.df2.to_string(), t.p.to_string()]);
        products.push(Product::new("interaction_tests", csv_table(&["response", "f", "df1", "df2", "p"], rows), to_json(&tests)));
    }
    products.retain(|p| !(ctx.global.format == Format::Json && p.json.is_null()));
    Ok(Outcome { products, ..Outcome::default() })
}

fn cmd_simulate(ctx: &Ctx) -> Result<Outcome, CliError> {
    let seed = ctx.global.seed.ok_or_else(|| CliError::Input("simulate requires an explicit --seed".into()))?;
    if ctx.out_dir().is_none() {
        return Err(CliError::Input("simulate requires --out".into()));
    }
    let mut cfg = ctx.cfg.simulator.clone();
    cfg.seed = seed;
    let world = simulate(&cfg).map_err(analysis)?;
    let files = simulated_session_files(&world).into_iter().map(|(n, t)| (n.to_string(), t)).collect();
    let rows = vec![
        vec!["seed".to_string(), seed.to_string()],
        vec!["individuals".into(), cfg.n_individuals.to_string()],
        vec!["duration_s".into(), cfg.duration_s.to_string()],
        vec!["steps".into(), cfg.n_steps().to_string()],
    ];
    Ok(Outcome {
        products: vec![Product::new("simulation", csv_table(&["key", "value"], rows), to_json(&cfg))],
        files,
        ..Outcome::default()
    })
}

fn cmd_report(ctx: &Ctx, session: &Option<PathBuf>, source: Source) -> Result<Outcome, CliError> {
    if ctx.out_dir().is_none() {
        return Err(CliError::Input("report requires --out".into()));
    }
    let s = ctx.session(session)?;
    let streams = ctx.streams(&s, source)?;
    let mut out = Outcome::default();
    out.products = budget_products(ctx, &streams, &mut out.warnings);

    match transitions(ctx, &streams) {
        Ok(tm) => {
            out.svgs.push(("transitions.svg".into(), heatmap_svg("Transition probabilities", &tm.codes, &tm.probabilities())));
            out.products.extend(transition_products(&tm));
        }
        Err(e) => out.warnings.push(format!("transitions skipped: {e}")),
    }

    let segments: Vec<_> = streams.iter().map(gantt_segments).collect();
    let labels: Vec<String> = streams.iter().map(|st| format!("{} {}", st.subject_id, st.method)).collect();
    let rows: Vec<GanttRow> = labels.iter().zip(&segments).map(|(l, seg)| GanttRow { label: l, segments: seg }).collect();
    let codes = ctx.ordered_codes(streams.iter().flat_map(|st| st.intervals.iter().map(|iv| iv.code.as_str())), true);
    out.svgs.push(("gantt.svg".into(), gantt_svg(&s.meta.session_id, &rows, &codes, |c| ctx.ethogram.is_technical(c))));
    let seg_rows = streams.iter().zip(&segments).flat_map(|(st, segs)| {
        segs.iter()
            .map(|g| vec![st.subject_id.clone(), st.method.to_string(), g.start.to_string(), g.end.to_string(), g.code.clone()])
            .collect::<Vec<_>>()
    });
    out.products.push(Product::new(
        "gantt_segments",
        csv_table(&["subject_id", "method", "start", "end", "code"], seg_rows),
        to_json(&segments),
    ));
    Ok(out)
}

fn cmd_cost(individuals: u64, duration: f64, rate: f64) -> Result<Outcome, CliError> {
    let c = annotation_cost(individuals, duration, rate).map_err(|e| CliError::Input(e.to_string()))?;
    let rows = vec![vec![c.n_individuals.to_string(), c.duration_s.to_string(), c.rate.to_string(), c.total_s.to_string()]];
    Ok(Outcome {
        products: vec![Product::new("cost", csv_table(&["n_individuals", "duration_s", "rate", "total_s"], rows), to_json(&c))],
        ..Outcome::default()
    })
}

/// Runs a parsed command without touching stdout or the filesystem.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = Ctx::new(&cli.global)?;
    let mut outcome = match &cli.command {
        Command::Validate { session } => cmd_validate(&ctx, session),
        Command::Miniscenes { session, crop_w, crop_h } => cmd_miniscenes(&ctx, session, (*crop_w, *crop_h)),
        Command::Timebudget { session, source } => cmd_timebudget(&ctx, session, *source),
        Command::Transitions { session, source } => cmd_transitions(&ctx, session, *source),
        Command::Interactions { session, composition, counts } => cmd_interactions(&ctx, session, composition, counts),
        Command::Compare { session, mode } => cmd_compare(&ctx, session, *mode),
        Command::Regress { table, factors, interactions, responses } => cmd_regress(&ctx, table, factors, interactions, responses),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Report { session, source } => cmd_report(&ctx, session, *source),
        Command::Cost { individuals, duration, rate } => cmd_cost(*individuals, *duration, *rate),
    }?;
    outcome.out_dir = ctx.out_dir();
    Ok(outcome)
}

fn render(p: &Product, format: Format) -> String {
    match format {
        Format::Csv => p.csv.clone(),
        Format::Json => serde_json::to_string_pretty(&p.json).expect("json") + "\n",
    }
}

/// Writes an outcome to `out` (one file per product) or returns the stdout text.
pub fn emit(outcome: &Outcome, format: Format, out: Option<&Path>) -> Result<String, CliError> {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    match out {
        Some(dir) => {
            let mut listing = String::new();
            let named = outcome
                .files
                .iter()
                .cloned()
                .chain(outcome.products.iter().map(|p| (format!("{}.{ext}", p.name), render(p, format))))
                .chain(outcome.svgs.iter().cloned());
            for (name, text) in named {
                let path = dir.join(&name);
                write_atomic(&path, &text)?;
                listing.push_str(&format!("{}\n", path.display()));
            }
            Ok(listing)
        }
        None => Ok(match (format, outcome.products.as_slice()) {
            (_, [single]) => render(single, format),
            (Format::Csv, many) => many.iter().map(|p| format!("# {}\n{}", p.name, p.csv)).collect::<Vec<_>>().join("\n"),
            (Format::Json, many) => {
                let obj: serde_json::Map<String, Value> = many.iter().map(|p| (p.name.clone(), p.json.clone())).collect();
                serde_json::to_string_pretty(&Value::Object(obj)).expect("json") + "\n"
            }
        }),
    }
}

/// Entry point shared by the binary and tests; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli).and_then(|outcome| {
        let text = emit(&outcome, cli.global.format, outcome.out_dir.as_deref())?;
        Ok((outcome, text))
    });
    match result {
        Ok((outcome, text)) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{text}");
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
