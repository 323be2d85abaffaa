use std::path::Path;

use serde::Serialize;

use vlat_core::annotations::AnnotationSet;
use vlat_core::temporal::{
    ols_fit, parse_duration, violent_share_series, Bin, BinnedSeries, Category,
    RegressionResult, Scope, SessionConfig, TemporalError, WeightMode, STANDARD_THRESHOLDS,
};
use vlat_core::Corpus;

use crate::config::{report_meta, FileConfig};
use crate::{CliError, RegressArgs};

use super::{load_annotation_sets, load_corpus, out_dir, write_json, write_text};

#[derive(Serialize)]
struct RegressSettings {
    series: Option<String>,
    corpus: Option<String>,
    annotations: Option<String>,
    scope: Option<String>,
    category: Option<String>,
    bin_width: Option<String>,
    weighted: bool,
    seed: u64,
}

#[derive(Serialize)]
struct FitRow {
    scope: String,
    category: String,
    fit: RegressionResult,
}

#[derive(Serialize)]
struct RegressReport {
    meta: vlat_core::report::ReportMeta,
    fits: Vec<FitRow>,
}

fn temporal_error(error: TemporalError) -> CliError {
    CliError::Usage(error.to_string())
}

fn parse_scope(text: &str) -> Result<Scope, CliError> {
    match text {
        "forum" => Ok(Scope::ForumCalendar),
        "user" => Ok(Scope::UserRelative),
        other => match other.strip_prefix("window:") {
            Some(duration) => Ok(Scope::PostInactivity {
                window_secs: parse_duration(duration)
                    .map_err(|e| CliError::Usage(e.to_string()))?,
            }),
            None => Err(CliError::Usage(format!(
                "unknown scope {other:?} (expected forum, user, or window:<duration>)"
            ))),
        },
    }
}

fn read_series_csv(path: &Path) -> Result<BinnedSeries, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut bins = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if i == 0 && line.starts_with("bin_start") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(CliError::Usage(format!(
                "{}:{}: expected bin_start,share,n_posts",
                path.display(),
                i + 1
            )));
        }
        let parse = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| {
                CliError::Usage(format!("{}:{}: bad {what} {s:?}", path.display(), i + 1))
            })
        };
        bins.push(Bin {
            elapsed: parse(fields[0], "bin_start")?,
            share: parse(fields[1], "share")?,
            n_posts: parse(fields[2], "n_posts")? as u64,
        });
    }
    Ok(BinnedSeries::from_bins(Category::Combined, bins))
}

fn series_csv(series: &BinnedSeries) -> String {
    let mut out = String::from("bin_start,share,n_posts\n");
    for bin in &series.bins {
        out.push_str(&format!("{},{},{}\n", bin.elapsed, bin.share, bin.n_posts));
    }
    out
}

fn subfigure_csv(series_list: &[BinnedSeries]) -> String {
    let mut out = String::from("category,bin_start,share,n_posts\n");
    for series in series_list {
        for bin in &series.bins {
            out.push_str(&format!(
                "{},{},{},{}\n",
                series.category.name(),
                bin.elapsed,
                bin.share,
                bin.n_posts
            ));
        }
    }
    out
}

/// The subfigure grid: forum calendar, user journeys, then one inactivity
/// window per standard threshold.
fn subfigures() -> Vec<(char, Scope)> {
    let mut figures = vec![('a', Scope::ForumCalendar), ('b', Scope::UserRelative)];
    for (letter, (_, secs)) in ('c'..='h').zip(STANDARD_THRESHOLDS) {
        figures.push((letter, Scope::PostInactivity { window_secs: secs }));
    }
    figures
}

fn emit_figure_data(
    dir: &Path,
    corpus: &Corpus,
    labels: &AnnotationSet,
    session_config: &SessionConfig,
    mode: WeightMode,
) -> Result<Vec<FitRow>, CliError> {
    super::ensure_dir(dir)?;
    let mut fits = Vec::new();
    for (letter, scope) in subfigures() {
        for (name, categories) in [
            ("violence", &Category::VIOLENCE_SET[..]),
            ("direction", &Category::DIRECTION_SET[..]),
        ] {
            let mut series_list = Vec::new();
            for &category in categories {
                match violent_share_series(corpus, labels, session_config, scope, category) {
                    Ok(series) => {
                        if let Ok(fit) = ols_fit(&series, mode) {
                            fits.push(FitRow {
                                scope: format!("{letter}"),
                                category: category.name().into(),
                                fit,
                            });
                        }
                        series_list.push(series);
                    }
                    Err(TemporalError::NoAnnotatedPosts) => {} // nothing in this scope
                    Err(other) => return Err(temporal_error(other)),
                }
            }
            if !series_list.is_empty() {
                write_text(
                    &dir.join(format!("{name}_{letter}.csv")),
                    &subfigure_csv(&series_list),
                )?;
            }
        }
    }
    let mut table = String::from("scope,category,beta,beta_per_second,p_value,stars,n_bins,unit\n");
    for row in &fits {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.scope,
            row.category,
            row.fit.beta,
            row.fit.beta_per_second,
            row.fit.p_value,
            row.fit.stars,
            row.fit.n_bins,
            row.fit.time_unit,
        ));
    }
    write_text(&dir.join("regressions.csv"), &table)?;
    Ok(fits)
}

pub fn run(args: &RegressArgs, config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mode = if args.weighted || config.temporal.weighted.unwrap_or(false) {
        WeightMode::PostCount
    } else {
        WeightMode::Unweighted
    };
    let settings = RegressSettings {
        series: args.series.as_ref().map(|p| p.display().to_string()),
        corpus: args.corpus.as_ref().map(|p| p.display().to_string()),
        annotations: args.annotations.as_ref().map(|p| p.display().to_string()),
        scope: args.scope.clone(),
        category: args.category.clone(),
        bin_width: args.bin_width.clone(),
        weighted: mode == WeightMode::PostCount,
        seed,
    };
    let dir = out_dir(args.out.as_deref().or(config.output.dir.as_deref()))?;

    // direct series-file mode
    if let Some(series_path) = &args.series {
        let series = read_series_csv(series_path)?;
        let fit = ols_fit(&series, mode).map_err(temporal_error)?;
        let meta = report_meta(&settings, seed, &[series_path.as_path()])?;
        let report = RegressReport {
            meta,
            fits: vec![FitRow {
                scope: "series".into(),
                category: "given".into(),
                fit: fit.clone(),
            }],
        };
        write_json(&dir.join("regression.json"), &report)?;
        println!(
            "beta {:.4}{} (p = {:.6}, {} bins)",
            fit.beta,
            fit.stars,
            fit.p_value,
            fit.n_bins
        );
        return Ok(());
    }

    // corpus + annotations mode
    let corpus_path = args
        .corpus
        .clone()
        .or_else(|| config.corpus.path.clone())
        .ok_or_else(|| CliError::Usage("need either --series or --corpus".into()))?;
    let annotations_path = args
        .annotations
        .clone()
        .ok_or_else(|| CliError::Usage("--annotations is required with --corpus".into()))?;
    let (corpus, _) = load_corpus(&corpus_path, config.corpus.format.as_deref())?;
    let sets = load_annotation_sets(std::slice::from_ref(&annotations_path))?;
    let labels = sets
        .first()
        .ok_or_else(|| CliError::Usage("annotation file holds no annotations".into()))?;
    let bin_width = match args.bin_width.as_deref().or(config.temporal.bin_width.as_deref()) {
        Some(text) => Some(parse_duration(text).map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let threshold = match config.temporal.threshold.as_deref() {
        Some(text) => parse_duration(text).map_err(|e| CliError::Usage(e.to_string()))?,
        None => 86_400,
    };
    let mut session_config =
        SessionConfig::new(threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(width) = bin_width {
        session_config = session_config
            .with_bin_width(width)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }

    if let Some(figure_dir) = &args.figure_data {
        let fits = emit_figure_data(figure_dir, &corpus, labels, &session_config, mode)?;
        let meta = report_meta(
            &settings,
            seed,
            &[corpus_path.as_path(), annotations_path.as_path()],
        )?;
        write_json(&dir.join("regression.json"), &RegressReport { meta, fits })?;
        println!("figure data written to {}", figure_dir.display());
        return Ok(());
    }

    let scope = parse_scope(args.scope.as_deref().unwrap_or("forum"))?;
    let category = args
        .category
        .as_deref()
        .map(|text| {
            Category::parse(text)
                .ok_or_else(|| CliError::Usage(format!("unknown category {text:?}")))
        })
        .transpose()?
        .unwrap_or(Category::Combined);
    let series = violent_share_series(&corpus, labels, &session_config, scope, category)
        .map_err(temporal_error)?;
    let fit = ols_fit(&series, mode).map_err(temporal_error)?;
    write_text(&dir.join("series.csv"), &series_csv(&series))?;
    let meta = report_meta(
        &settings,
        seed,
        &[corpus_path.as_path(), annotations_path.as_path()],
    )?;
    let report = RegressReport {
        meta,
        fits: vec![FitRow {
            scope: args.scope.clone().unwrap_or_else(|| "forum".into()),
            category: category.name().into(),
            fit: fit.clone(),
        }],
    };
    write_json(&dir.join("regression.json"), &report)?;
    println!(
        "beta {:.4}{} per {} (p = {:.6}, {} bins)",
        fit.beta, fit.stars, fit.time_unit, fit.p_value, fit.n_bins
    );
    Ok(())
}
