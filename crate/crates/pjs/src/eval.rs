//! Dataset ingestion and tracking metrics.
//!
//! Sequences follow the common benchmark layout: an `img/` folder of
//! zero-padded numbered frames plus a `groundtruth_rect.txt` of per-line
//! `x,y,w,h` boxes (comma or whitespace separated). Metrics are center
//! location error (CLE), VOC overlap (intersection over union), and the
//! success rate / success plot over overlap thresholds. Multi-run results
//! average arithmetically, per frame and per curve point.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::motion::GrayFrame;
use crate::rect::Rect;

/// An on-disk image sequence with per-frame ground truth.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub name: String,
    frame_paths: Vec<PathBuf>,
    pub ground_truth: Vec<Rect>,
}

impl Sequence {
    /// Loads `<dir>/img/*.{jpg,jpeg,png}` (sorted numerically) and
    /// `<dir>/groundtruth_rect.txt`. Boxes are parsed verbatim; no
    /// coordinate-origin shift is applied.
    pub fn load(dir: &Path) -> Result<Self> {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sequence".to_string());
        let img_dir = dir.join("img");
        if !img_dir.is_dir() {
            return Err(Error::Load(format!(
                "missing image folder {}",
                img_dir.display()
            )));
        }
        let mut frame_paths: Vec<PathBuf> = std::fs::read_dir(&img_dir)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
                    .unwrap_or(false)
            })
            .collect();
        if frame_paths.is_empty() {
            return Err(Error::Load(format!(
                "no frames found in {}",
                img_dir.display()
            )));
        }
        frame_paths.sort_by_key(|p| (frame_number(p), p.clone()));

        let gt_path = dir.join("groundtruth_rect.txt");
        let gt_text = std::fs::read_to_string(&gt_path)
            .map_err(|e| Error::Load(format!("reading {}: {e}", gt_path.display())))?;
        let mut ground_truth = Vec::new();
        for (lineno, line) in gt_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 4 {
                return Err(Error::Load(format!(
                    "{}:{}: expected 4 fields, got {}: '{line}'",
                    gt_path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut values = [0.0; 4];
            for (slot, field) in values.iter_mut().zip(&fields) {
                *slot = field.parse().map_err(|e| {
                    Error::Load(format!(
                        "{}:{}: bad number '{field}': {e}",
                        gt_path.display(),
                        lineno + 1
                    ))
                })?;
            }
            let rect = Rect::new(values[0], values[1], values[2], values[3]);
            if !rect.is_valid() {
                return Err(Error::Load(format!(
                    "{}:{}: box has non-positive size: '{line}'",
                    gt_path.display(),
                    lineno + 1
                )));
            }
            ground_truth.push(rect);
        }
        if ground_truth.len() != frame_paths.len() {
            return Err(Error::Load(format!(
                "{name}: {} frames but {} ground-truth boxes",
                frame_paths.len(),
                ground_truth.len()
            )));
        }
        Ok(Sequence {
            name,
            frame_paths,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_paths.is_empty()
    }

    pub fn frame_paths(&self) -> &[PathBuf] {
        &self.frame_paths
    }

    /// Decodes one frame to grayscale (Rec. 601 luma for color inputs).
    pub fn load_frame(&self, index: usize) -> Result<GrayFrame> {
        let path = &self.frame_paths[index];
        let img = image::open(path)
            .map_err(|e| Error::Load(format!("decoding {}: {e}", path.display())))?
            .to_rgb8();
        GrayFrame::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())
    }
}

fn frame_number(path: &Path) -> u64 {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(|s| {
            let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
            digits.parse().unwrap_or(u64::MAX)
        })
        .unwrap_or(u64::MAX)
}

/// Center location error: Euclidean distance between box centers.
pub fn cle(a: &Rect, b: &Rect) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// VOC overlap: intersection over union of the two boxes, via continuous
/// rectangle geometry (agrees with pixel counting on integer boxes).
pub fn voc_overlap(a: &Rect, b: &Rect) -> f64 {
    // Areas go through the same edge arithmetic as the intersection, so
    // identical boxes give exactly 1 and the ratio never exceeds 1.
    let (ax1, ay1) = (a.x + a.w, a.y + a.h);
    let (bx1, by1) = (b.x + b.w, b.y + b.h);
    let ix = ax1.min(bx1) - a.x.max(b.x);
    let iy = ay1.min(by1) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let intersection = ix * iy;
    let area_a = (ax1 - a.x) * (ay1 - a.y);
    let area_b = (bx1 - b.x) * (by1 - b.y);
    intersection / (area_a + area_b - intersection)
}

/// Fraction of frames with overlap strictly greater than `threshold`.
pub fn success_rate(overlaps: &[f64], threshold: f64) -> Result<f64> {
    if overlaps.is_empty() {
        return Err(Error::InvalidInput(
            "success rate of an empty overlap list".into(),
        ));
    }
    let hits = overlaps.iter().filter(|&&o| o > threshold).count();
    Ok(hits as f64 / overlaps.len() as f64)
}

/// Success rate over `resolution` evenly spaced thresholds spanning
/// `[0, 1]`; the curve is non-increasing in the threshold.
pub fn success_plot(overlaps: &[f64], resolution: usize) -> Result<Vec<(f64, f64)>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("resolution must be >= 2".into()));
    }
    (0..resolution)
        .map(|i| {
            let threshold = i as f64 / (resolution - 1) as f64;
            success_rate(overlaps, threshold).map(|rate| (threshold, rate))
        })
        .collect()
}

/// Per-frame accuracy of one tracker run plus its aggregates.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub cle: Vec<f64>,
    pub overlap: Vec<f64>,
    pub mean_cle: f64,
    pub mean_overlap: f64,
    pub success_threshold: f64,
    pub success_rate: f64,
    pub success_curve: Vec<(f64, f64)>,
}

impl RunReport {
    pub fn from_boxes(
        predicted: &[Rect],
        ground_truth: &[Rect],
        threshold: f64,
        resolution: usize,
    ) -> Result<Self> {
        if predicted.len() != ground_truth.len() || predicted.is_empty() {
            return Err(Error::InvalidInput(format!(
                "predicted {} boxes but ground truth has {}",
                predicted.len(),
                ground_truth.len()
            )));
        }
        let cle_series: Vec<f64> = predicted
            .iter()
            .zip(ground_truth)
            .map(|(p, g)| cle(p, g))
            .collect();
        let overlap_series: Vec<f64> = predicted
            .iter()
            .zip(ground_truth)
            .map(|(p, g)| voc_overlap(p, g))
            .collect();
        let n = predicted.len() as f64;
        Ok(RunReport {
            mean_cle: cle_series.iter().sum::<f64>() / n,
            mean_overlap: overlap_series.iter().sum::<f64>() / n,
            success_threshold: threshold,
            success_rate: success_rate(&overlap_series, threshold)?,
            success_curve: success_plot(&overlap_series, resolution)?,
            cle: cle_series,
            overlap: overlap_series,
        })
    }
}

/// Averages reports arithmetically: per-frame series, aggregates, and the
/// success curve pointwise. All reports must cover the same frame count,
/// threshold, and curve resolution.
pub fn aggregate_runs(reports: &[RunReport]) -> Result<RunReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("no reports to aggregate".into()))?;
    let frames = first.cle.len();
    let resolution = first.success_curve.len();
    for report in reports {
        if report.cle.len() != frames
            || report.success_curve.len() != resolution
            || report.success_threshold != first.success_threshold
        {
            return Err(Error::InvalidInput(
                "reports differ in length, resolution, or threshold".into(),
            ));
        }
    }
    let n = reports.len() as f64;
    let mut out = RunReport {
        cle: vec![0.0; frames],
        overlap: vec![0.0; frames],
        mean_cle: 0.0,
        mean_overlap: 0.0,
        success_threshold: first.success_threshold,
        success_rate: 0.0,
        success_curve: first.success_curve.iter().map(|&(t, _)| (t, 0.0)).collect(),
    };
    for report in reports {
        for (acc, v) in out.cle.iter_mut().zip(&report.cle) {
            *acc += v / n;
        }
        for (acc, v) in out.overlap.iter_mut().zip(&report.overlap) {
            *acc += v / n;
        }
        out.mean_cle += report.mean_cle / n;
        out.mean_overlap += report.mean_overlap / n;
        out.success_rate += report.success_rate / n;
        for ((_, acc), (_, v)) in out.success_curve.iter_mut().zip(&report.success_curve) {
            *acc += v / n;
        }
    }
    Ok(out)
}

/// Report CSV: `frame,cle,overlap` rows followed by an aggregate footer.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from("frame,cle,overlap\n");
    for (i, (c, o)) in report.cle.iter().zip(&report.overlap).enumerate() {
        out.push_str(&format!("{i},{c},{o}\n"));
    }
    out.push_str("# aggregate\n");
    out.push_str(&format!("mean_cle,{}\n", report.mean_cle));
    out.push_str(&format!("mean_overlap,{}\n", report.mean_overlap));
    out.push_str(&format!(
        "sr@{:.2},{}\n",
        report.success_threshold, report.success_rate
    ));
    out
}

/// Success-curve CSV: `threshold,rate` rows.
pub fn success_curve_csv(report: &RunReport) -> String {
    let mut out = String::from("threshold,rate\n");
    for (t, r) in &report.success_curve {
        out.push_str(&format!("{t},{r}\n"));
    }
    out
}

/// Parses the frame index, box, and log-likelihood columns of a per-run
/// tracker CSV (occlusion and error columns are ignored here).
pub fn parse_run_csv(text: &str) -> Result<Vec<(usize, Rect, f64)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Load("empty run csv".into()))?;
    if !header.starts_with("frame,x,y,w,h,loglik") {
        return Err(Error::Load(format!("unexpected run csv header: {header}")));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(Error::Load(format!(
                "run csv line {}: expected at least 6 fields",
                lineno + 2
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Load(format!("run csv line {}: {e}", lineno + 2)))
        };
        let frame: usize = fields[0]
            .parse()
            .map_err(|e| Error::Load(format!("run csv line {}: {e}", lineno + 2)))?;
        let rect = Rect::new(
            parse(fields[1])?,
            parse(fields[2])?,
            parse(fields[3])?,
            parse(fields[4])?,
        );
        rows.push((frame, rect, parse(fields[5])?));
    }
    Ok(rows)
}

/// Renders line series as a simple standalone SVG plot.
pub fn svg_line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    const WIDTH: f64 = 640.0;
    const HEIGHT: f64 = 440.0;
    const MARGIN: f64 = 55.0;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

    let points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().copied())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let map_x = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let map_y = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">{title}</text>\n",
        WIDTH / 2.0
    );
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.3}</text>\n",
            map_x(fx),
            HEIGHT - MARGIN + 18.0,
            fx
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
            MARGIN - 6.0,
            map_y(fy) + 4.0,
            fy
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    for (s, (label, pts)) in series.iter().enumerate() {
        let color = colors[s % colors.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", map_x(x), map_y(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{label}</text>\n",
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * s as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
