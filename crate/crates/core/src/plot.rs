//! Cumulative-regret plots as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{read_csv, BoundParameters, CsvRow, HarnessError, Summary};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no regret files given")]
    NoInput,
    #[error("{path}: no rows")]
    Empty { path: String },
    #[error("{path}: seed {seed} has {found} episodes, seed {first_seed} has {expected}")]
    RaggedSeeds {
        path: String,
        seed: u64,
        found: usize,
        first_seed: u64,
        expected: usize,
    },
    #[error("{path} has K = {found} but {first} has K = {expected}")]
    MismatchedEpisodes {
        path: String,
        found: usize,
        first: String,
        expected: usize,
    },
    #[error("{path}: {source}")]
    Read {
        path: String,
        #[source]
        source: HarnessError,
    },
}

/// Mean and min/max envelope of cumulative regret across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Series {
    pub fn episodes(&self) -> usize {
        self.mean.len()
    }
}

/// Groups rows by seed and reduces them episode by episode.
pub fn series_from_rows(rows: &[CsvRow], label: &str) -> Result<Series, PlotError> {
    if rows.is_empty() {
        return Err(PlotError::Empty { path: label.into() });
    }
    let mut by_seed: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for row in rows {
        by_seed
            .entry(row.seed)
            .or_default()
            .push((row.k, row.cumulative_regret));
    }
    let mut seeds = by_seed.into_iter();
    let (first_seed, mut first) = seeds.next().expect("non-empty");
    first.sort_by_key(|&(k, _)| k);
    let n = first.len();
    let mut mean: Vec<f64> = first.iter().map(|&(_, v)| v).collect();
    let mut min = mean.clone();
    let mut max = mean.clone();
    let mut count = 1.0;
    for (seed, mut curve) in seeds {
        if curve.len() != n {
            return Err(PlotError::RaggedSeeds {
                path: label.into(),
                seed,
                found: curve.len(),
                first_seed,
                expected: n,
            });
        }
        curve.sort_by_key(|&(k, _)| k);
        for (i, &(_, v)) in curve.iter().enumerate() {
            mean[i] += v;
            min[i] = min[i].min(v);
            max[i] = max[i].max(v);
        }
        count += 1.0;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    Ok(Series {
        label: label.into(),
        mean,
        min,
        max,
    })
}

/// Reads one or more regret CSVs (one series each) and renders them. All
/// files must cover the same number of episodes.
pub fn plot_files(csvs: &[PathBuf], summary: Option<&Path>) -> Result<String, PlotError> {
    if csvs.is_empty() {
        return Err(PlotError::NoInput);
    }
    let mut series: Vec<Series> = Vec::with_capacity(csvs.len());
    for path in csvs {
        let name = path.display().to_string();
        let rows = read_csv(path).map_err(|source| PlotError::Read {
            path: name.clone(),
            source,
        })?;
        let s = series_from_rows(&rows, &name)?;
        if let Some(first) = series.first() {
            if first.episodes() != s.episodes() {
                return Err(PlotError::MismatchedEpisodes {
                    path: name,
                    found: s.episodes(),
                    first: first.label.clone(),
                    expected: first.episodes(),
                });
            }
        }
        series.push(s);
    }
    let bound = match summary {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PlotError::Read {
                path: path.display().to_string(),
                source: HarnessError::Io {
                    path: path.display().to_string(),
                    source: e,
                },
            })?;
            let parsed: Summary = serde_json::from_str(&text).map_err(|e| PlotError::Read {
                path: path.display().to_string(),
                source: HarnessError::Json(e),
            })?;
            Some(parsed.bound)
        }
        None => None,
    };
    Ok(render_svg(&series, bound.as_ref(), "Cumulative regret"))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
/// Upper limit on points per polyline.
const MAX_POINTS: usize = 800;

/// Renders series against episode index. The bound, when given, is drawn
/// dashed and clipped to the plot area.
pub fn render_svg(series: &[Series], bound: Option<&BoundParameters>, title: &str) -> String {
    let episodes = series
        .iter()
        .map(Series::episodes)
        .max()
        .unwrap_or(0)
        .max(1);
    let data_max = series
        .iter()
        .flat_map(|s| s.max.iter().copied())
        .fold(0.0f64, f64::max);
    // Keep the data readable when the bound is far above it.
    let y_max = nice_ceiling(match bound {
        Some(b) => (b.bound_at(episodes as u64))
            .min(data_max.max(1e-9) * 4.0)
            .max(data_max),
        None => data_max,
    });

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |k: f64| MARGIN_LEFT + plot_w * k / episodes as f64;
    let y = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.05));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="area"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}"/></clipPath></defs>"#
    );

    for i in 0..=5 {
        let frac = i as f64 / 5.0;
        let yy = MARGIN_TOP + plot_h * (1.0 - frac);
        let xx = MARGIN_LEFT + plot_w * frac;
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN_LEFT}" y1="{yy:.1}" x2="{:.1}" y2="{yy:.1}" stroke="#ddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            yy + 4.0,
            format_tick(y_max * frac)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_TOP + plot_h + 18.0,
            format_tick(episodes as f64 * frac)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">episode k</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">Regret(k)</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );

    let _ = writeln!(svg, r#"<g clip-path="url(#area)">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let idx = sample_indices(s.episodes());
        if s.min != s.max {
            let mut band = String::new();
            for &j in &idx {
                let _ = write!(band, "{:.2},{:.2} ", x((j + 1) as f64), y(s.max[j]));
            }
            for &j in idx.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", x((j + 1) as f64), y(s.min[j]));
            }
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
        }
        let line: Vec<String> = idx
            .iter()
            .map(|&j| format!("{:.2},{:.2}", x((j + 1) as f64), y(s.mean[j])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            line.join(" ")
        );
    }
    if let Some(b) = bound {
        let line: Vec<String> = sample_indices(episodes)
            .iter()
            .map(|&j| {
                let k = (j + 1) as f64;
                format!("{:.2},{:.2}", x(k), y(b.bound_at(j as u64 + 1)))
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-dasharray="6 4" stroke-width="1.2"/>"#,
            line.join(" ")
        );
    }
    let _ = writeln!(svg, "</g>");

    let mut legend_y = MARGIN_TOP + 16.0;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{legend_y:.1}" x2="{:.1}" y2="{legend_y:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 30.0,
            MARGIN_LEFT + 36.0,
            legend_y + 4.0,
            escape(&s.label)
        );
        legend_y += 16.0;
    }
    if bound.is_some() {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{legend_y:.1}" x2="{:.1}" y2="{legend_y:.1}" stroke="black" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}">regret bound</text>"#,
            MARGIN_LEFT + 10.0,
            MARGIN_LEFT + 30.0,
            MARGIN_LEFT + 36.0,
            legend_y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn sample_indices(n: usize) -> Vec<usize> {
    if n <= MAX_POINTS {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_POINTS)
        .map(|i| i * (n - 1) / (MAX_POINTS - 1))
        .collect();
    idx.dedup();
    idx
}

fn nice_ceiling(v: f64) -> f64 {
    if v.is_nan() || v <= 0.0 {
        return 1.0;
    }
    let magnitude = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * magnitude >= v {
            return step * magnitude;
        }
    }
    10.0 * magnitude
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e5 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, k: u64, cum: f64) -> CsvRow {
        CsvRow {
            seed,
            k,
            instantaneous_regret: 0.0,
            cumulative_regret: cum,
            evaluated: true,
        }
    }

    #[test]
    fn mean_and_envelope() {
        let rows = vec![
            row(1, 1, 1.0),
            row(1, 2, 3.0),
            row(2, 2, 5.0),
            row(2, 1, 0.0),
        ];
        let s = series_from_rows(&rows, "x").unwrap();
        assert_eq!(s.mean, vec![0.5, 4.0]);
        assert_eq!(s.min, vec![0.0, 3.0]);
        assert_eq!(s.max, vec![1.0, 5.0]);
    }

    #[test]
    fn ragged_seeds_rejected() {
        let rows = vec![row(1, 1, 1.0), row(1, 2, 3.0), row(2, 1, 0.0)];
        let e = series_from_rows(&rows, "runs.csv").unwrap_err();
        assert!(e.to_string().contains("runs.csv"), "{e}");
        assert!(matches!(
            series_from_rows(&[], "empty.csv"),
            Err(PlotError::Empty { .. })
        ));
    }

    #[test]
    fn svg_is_well_formed() {
        let s = series_from_rows(&[row(0, 1, 1.0), row(0, 2, 2.0)], "a<b").unwrap();
        let bound = BoundParameters {
            episodes: 2,
            horizon: 2,
            num_cells: 2,
            delta: 0.1,
            epsilon: 0.0,
        };
        let svg = render_svg(&[s], Some(&bound), "t");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b") && svg.contains("regret bound"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn downsampling_keeps_endpoints() {
        let idx = sample_indices(10_000);
        assert_eq!(idx.first(), Some(&0));
        assert_eq!(idx.last(), Some(&9_999));
        assert!(idx.len() <= MAX_POINTS);
    }

    #[test]
    fn ticks_round_up() {
        assert_eq!(nice_ceiling(7.3), 10.0);
        assert_eq!(nice_ceiling(180.0), 200.0);
        assert_eq!(nice_ceiling(0.0), 1.0);
    }

    #[test]
    fn no_input_is_an_error() {
        assert!(matches!(plot_files(&[], None), Err(PlotError::NoInput)));
    }
}
