//! Output directories with a checksummed JSON manifest, and SVG charts.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub code_version: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub status: String,
    pub outputs: Vec<OutputFile>,
}

/// A directory of run artifacts. The manifest is written on creation and
/// rewritten by [`OutputDir::finish`] with a checksum for every file.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl OutputDir {
    pub fn create(root: impl AsRef<Path>, experiment: &str, seed: u64, parameters: serde_json::Value) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)
            .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", root.display())))?;
        let out = OutputDir {
            root,
            manifest: Manifest {
                experiment: experiment.to_string(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                parameters,
                status: "running".into(),
                outputs: Vec::new(),
            },
        };
        out.write_manifest()?;
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.root.join(MANIFEST), text + "\n")?;
        Ok(())
    }

    /// Write `bytes` to `name` and register its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        fs::write(&path, bytes)?;
        self.register(name, bytes);
        Ok(path)
    }

    fn register(&mut self, name: &str, bytes: &[u8]) {
        let entry = OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        };
        match self.manifest.outputs.iter_mut().find(|o| o.path == name) {
            Some(o) => *o = entry,
            None => self.manifest.outputs.push(entry),
        }
    }

    /// Serialize with a writer callback (CSV writers and the like).
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, text.as_bytes())
    }

    /// Render a line chart to `name` and register it.
    pub fn write_chart(&mut self, name: &str, chart: &LineChart) -> Result<PathBuf> {
        let path = self.root.join(name);
        chart.render(&path)?;
        let bytes = fs::read(&path)?;
        self.register(name, &bytes);
        Ok(path)
    }

    /// Record the final status and checksums.
    pub fn finish(mut self, status: &str) -> Result<Manifest> {
        self.manifest.status = status.to_string();
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

/// Verify every checksum listed in a manifest file.
pub fn verify_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    for o in &manifest.outputs {
        let bytes = fs::read(dir.join(&o.path))?;
        if sha256_hex(&bytes) != o.sha256 {
            return Err(Error::Config(format!("checksum mismatch for {}", o.path)));
        }
    }
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log_y(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with_series(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series {
            label: label.into(),
            points,
        });
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| p.0.is_finite() && p.1.is_finite() && (!self.log_y || p.1 > 0.0));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, if self.log_y { 0.1 } else { 0.0 }, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if y1 <= y0 {
            y1 = y0 * 2.0 + 1.0;
        }
        (x0, x1, y0, y1)
    }

    pub fn render(&self, path: &Path) -> Result<()> {
        let plot_err = |e: String| Error::Config(format!("plot {}: {e}", path.display()));
        let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
        let (x0, x1, y0, y1) = self.bounds();
        let mut builder = ChartBuilder::on(&root);
        builder.caption(&self.title, ("sans-serif", 20)).margin(15).x_label_area_size(40).y_label_area_size(70);
        let colors = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];
        macro_rules! draw {
            ($chart:expr, $keep:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(self.x_label.as_str())
                    .y_desc(self.y_label.as_str())
                    .draw()
                    .map_err(|e| plot_err(e.to_string()))?;
                for (i, s) in self.series.iter().enumerate() {
                    let color = colors[i % colors.len()];
                    let pts: Vec<(f64, f64)> = s.points.iter().copied().filter($keep).collect();
                    chart
                        .draw_series(LineSeries::new(pts, color.stroke_width(2)))
                        .map_err(|e| plot_err(e.to_string()))?
                        .label(s.label.as_str())
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
                }
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(|e| plot_err(e.to_string()))?;
            }};
        }
        if self.log_y {
            let chart = builder
                .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
                .map_err(|e| plot_err(e.to_string()))?;
            draw!(chart, |p: &(f64, f64)| p.1 > 0.0 && p.0.is_finite() && p.1.is_finite());
        } else {
            let chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(|e| plot_err(e.to_string()))?;
            draw!(chart, |p: &(f64, f64)| p.0.is_finite() && p.1.is_finite());
        }
        root.present().map_err(|e| plot_err(e.to_string()))?;
        Ok(())
    }
}
