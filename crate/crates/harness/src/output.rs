//! CSV and SVG emission.
//!
//! Every CSV row follows `t,x1,x2,x3,y,u,f,xhat1,xhat2,xhat3,yhat,eps,eps_bar,phi`
//! with values in `{:.16e}` (17 significant digits). `phi` is left empty for
//! estimators other than the ASKF.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tankfdi_core::detect::ThresholdCurve;
use tankfdi_core::linalg::Vector;

use crate::error::{HarnessError, Result};
use crate::experiment::{DetectionRun, Estimator, FilterRun, RunArtifacts};

pub const CSV_HEADER: &str = "t,x1,x2,x3,y,u,f,xhat1,xhat2,xhat3,yhat,eps,eps_bar,phi";

/// Files written by [`emit`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmittedFiles {
    /// One Luenberger detection CSV per scenario.
    pub scenario_csvs: Vec<PathBuf>,
    /// Sampled-grid CSVs per (scenario, estimator).
    pub estimator_csvs: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

struct Row<'a> {
    t: f64,
    x: &'a Vector,
    y: f64,
    u: f64,
    f: f64,
    xhat: &'a Vector,
    c: &'a [f64; 3],
    eps_bar: f64,
    phi: Option<f64>,
}

fn push_row(out: &mut String, r: &Row<'_>) {
    let yhat: f64 = (0..3).map(|i| r.c[i] * r.xhat[i]).sum();
    let cols = [
        num(r.t),
        num(r.x[0]),
        num(r.x[1]),
        num(r.x[2]),
        num(r.y),
        num(r.u),
        num(r.f),
        num(r.xhat[0]),
        num(r.xhat[1]),
        num(r.xhat[2]),
        num(yhat),
        num(r.y - yhat),
        num(r.eps_bar),
        r.phi.map(num).unwrap_or_default(),
    ];
    out.push_str(&cols.join(","));
    out.push('\n');
}

fn output_row(c: &tankfdi_core::linalg::Matrix) -> [f64; 3] {
    [c[(0, 0)], c[(0, 1)], c[(0, 2)]]
}

pub fn detection_csv(run: &DetectionRun, threshold: &ThresholdCurve, c: &[f64; 3]) -> String {
    let mut out = String::with_capacity(run.plant.len() * 320);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for k in 0..run.plant.len() {
        let t = run.plant.times[k];
        push_row(
            &mut out,
            &Row {
                t,
                x: &run.plant.states[k],
                y: run.plant.y(k),
                u: run.plant.inputs[k][0],
                f: run.plant.fault_flows[k],
                xhat: &run.observer.states[k],
                c,
                eps_bar: threshold.value(t),
                phi: None,
            },
        );
    }
    out
}

pub fn estimator_csv(
    run: &FilterRun,
    estimator: Estimator,
    threshold: &ThresholdCurve,
    c: &[f64; 3],
) -> Option<String> {
    let est = run.estimate(estimator).ok()?;
    let mut out = String::with_capacity(run.times.len() * 320);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (j, &t) in run.times.iter().enumerate() {
        push_row(
            &mut out,
            &Row {
                t,
                x: &run.truth[j],
                y: run.measured[j],
                u: run.inputs[j],
                f: run.fault_flows[j],
                xhat: &est[j],
                c,
                eps_bar: threshold.value(t),
                phi: (estimator == Estimator::Askf).then(|| run.phi[j]),
            },
        );
    }
    Some(out)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes all CSVs and SVG plots under `dir`.
pub fn emit(artifacts: &RunArtifacts, dir: &Path) -> Result<EmittedFiles> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let c = output_row(&artifacts.design.plant.c);
    let thr = &artifacts.design.threshold;
    let mut files = EmittedFiles::default();

    for (s, run) in artifacts.detections.iter().enumerate() {
        let id = s + 1;
        files.scenario_csvs.push(write(
            dir.join(format!("scenario_{id}.csv")),
            &detection_csv(run, thr, &c),
        )?);
        files
            .plots
            .push(write(dir.join(format!("scenario_{id}_states.svg")), &states_svg(run))?);
        files.plots.push(write(
            dir.join(format!("scenario_{id}_residual.svg")),
            &residual_svg(run, thr),
        )?);
    }

    for (s, run) in artifacts.filter_runs.iter().enumerate() {
        let id = s + 1;
        for est in Estimator::ALL {
            if let Some(text) = estimator_csv(run, est, thr, &c) {
                files.estimator_csvs.push(write(
                    dir.join(format!("scenario_{id}_{}.csv", est.name())),
                    &text,
                )?);
                files.plots.push(write(
                    dir.join(format!("scenario_{id}_{}.svg", est.name())),
                    &estimate_svg(run, est),
                )?);
            }
        }
    }
    Ok(files)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const MAX_POINTS: usize = 1500;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Series<'a> {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
    color: &'a str,
}

#[derive(Clone, Copy)]
enum Scale {
    Linear,
    Log10,
}

struct Chart<'a> {
    title: String,
    y_label: &'a str,
    scale: Scale,
    series: Vec<Series<'a>>,
    marker: Option<(f64, String)>,
}

fn thin(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points;
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let last = *points.last().expect("non-empty");
    let mut out: Vec<_> = points.into_iter().step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

impl Chart<'_> {
    fn render(&self) -> String {
        let tf = |y: f64| match self.scale {
            Scale::Linear => y,
            Scale::Log10 => y.max(1e-300).log10(),
        };
        let all = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in all {
            let y = tf(y);
            if !y.is_finite() {
                continue;
            }
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 + 1.0;
        }
        let pad = 0.05 * (y1 - y0);
        let (y0, y1) = (y0 - pad, y1 + pad);
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (tf(y).clamp(y0, y1) - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            self.title
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            WIDTH - 2.0 * MARGIN,
            HEIGHT - 2.0 * MARGIN
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let ylab = match self.scale {
                Scale::Linear => format!("{fy:.3}"),
                Scale::Log10 => format!("1e{fy:.1}"),
            };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{fx:.2}</text>"#,
                px(fx),
                HEIGHT - MARGIN + 16.0
            );
            let ypix = HEIGHT - MARGIN - (fy - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{ylab}</text>"#,
                MARGIN - 4.0,
                ypix + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">t [s]</text>"#,
            WIDTH / 2.0,
            HEIGHT - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            self.y_label
        );

        for (i, series) in self.series.iter().enumerate() {
            let mut pts = String::new();
            for &(x, y) in &series.points {
                if tf(y).is_finite() {
                    let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
                }
            }
            let dash = if series.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline data-series="{}" fill="none" stroke="{}" stroke-width="1.4"{dash} points="{}"/>"#,
                series.label,
                series.color,
                pts.trim_end()
            );
            let ly = MARGIN + 14.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN - 150.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#,
                lx + 22.0,
                series.color
            );
            let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 28.0, ly + 4.0, series.label);
        }

        if let Some((t, label)) = &self.marker {
            let x = px(*t);
            let _ = writeln!(
                s,
                r##"<line class="detection-marker" data-t-d="{}" x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="#000" stroke-dasharray="2 3"/>"##,
                num(*t),
                HEIGHT - MARGIN
            );
            let _ = writeln!(s, r#"<text x="{:.2}" y="{}">{label}</text>"#, x + 4.0, MARGIN + 14.0);
        }
        s.push_str("</svg>\n");
        s
    }
}

fn states_svg(run: &DetectionRun) -> String {
    let series = (0..3)
        .map(|i| Series {
            label: format!("x{}", i + 1),
            points: thin(
                run.plant
                    .times
                    .iter()
                    .zip(&run.plant.states)
                    .map(|(&t, x)| (t, x[i]))
                    .collect(),
            ),
            dashed: false,
            color: COLORS[i],
        })
        .collect();
    Chart {
        title: format!(
            "Tank levels, x0 = ({}, {}, {})",
            run.x0[0], run.x0[1], run.x0[2]
        ),
        y_label: "level",
        scale: Scale::Linear,
        series,
        marker: None,
    }
    .render()
}

fn estimate_svg(run: &FilterRun, est: Estimator) -> String {
    let xs = run.estimate(est).expect("rendered only for successful estimators");
    let mut series = Vec::new();
    for i in 0..3 {
        series.push(Series {
            label: format!("x{}", i + 1),
            points: thin(run.times.iter().zip(&run.truth).map(|(&t, x)| (t, x[i])).collect()),
            dashed: false,
            color: COLORS[i],
        });
        series.push(Series {
            label: format!("{} x{}", est.name(), i + 1),
            points: thin(run.times.iter().zip(xs).map(|(&t, x)| (t, x[i])).collect()),
            dashed: true,
            color: COLORS[i + 3],
        });
    }
    Chart {
        title: format!("True vs {} estimates", est.name()),
        y_label: "level",
        scale: Scale::Linear,
        series,
        marker: None,
    }
    .render()
}

fn residual_svg(run: &DetectionRun, thr: &ThresholdCurve) -> String {
    let times = &run.residual.times;
    let series = vec![
        Series {
            label: "|eps|".into(),
            points: thin(times.iter().zip(&run.residual.residuals).map(|(&t, e)| (t, e.abs())).collect()),
            dashed: false,
            color: COLORS[0],
        },
        Series {
            label: "threshold".into(),
            points: thin(times.iter().map(|&t| (t, thr.value(t))).collect()),
            dashed: true,
            color: COLORS[1],
        },
    ];
    Chart {
        title: "Residual against threshold".into(),
        y_label: "log10 magnitude",
        scale: Scale::Log10,
        series,
        marker: run.report.t_d.map(|t| (t, format!("t_d = {t:.4}"))),
    }
    .render()
}
