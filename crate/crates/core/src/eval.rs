//! PSNR, whole-image denoising, dataset evaluation and result reports.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::data::{add_awgn, stream_key, Image, NoiseConfig, NoiseDomain};
use crate::layers::{ModelName, Network};
use crate::par;
use crate::{Error, Result};

/// Bundled Table-1 PSNRs (`method,dataset,sigma,psnr_db`), including the
/// BM3D reference rows.
pub const PUBLISHED_TABLE1_CSV: &str = include_str!("../data/table1.csv");

/// Name of the external reference method.
pub const BM3D: &str = "BM3D";

/// PSNR in dB with peak 1.0; `+∞` when the inputs are identical.
pub fn psnr(reference: &Image, test: &Image) -> Result<f64> {
    if !reference.same_dims(test) {
        return Err(Error::invalid(format!(
            "PSNR of a {}x{}x{} and a {}x{}x{} image",
            reference.height(),
            reference.width(),
            reference.channels(),
            test.height(),
            test.width(),
            test.channels()
        )));
    }
    Ok(psnr_values(reference.pixels(), test.pixels()))
}

/// PSNR of two equally long sample slices in `[0, 1]`.
pub fn psnr_values(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let se: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    let mse = se / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Full-image forward pass followed by clipping to `[0, 1]`.
pub fn denoise_image(net: &Network<f32>, noisy: &Image) -> Result<Image> {
    if noisy.channels() != net.channels() {
        return Err(Error::invalid(format!(
            "image has {} channels, network expects {}",
            noisy.channels(),
            net.channels()
        )));
    }
    if noisy.height() < 3 || noisy.width() < 3 {
        return Err(Error::invalid(format!(
            "image {}x{} is smaller than 3x3",
            noisy.height(),
            noisy.width()
        )));
    }
    let y = net.predict(&noisy.to_tensor::<f32>())?;
    Image::from_tensor_clipped(&y, 0)
}

/// Mean PSNR over `images` after corrupting image `i` with the noise stream
/// `(Test, 0, i)` and denoising it.
///
/// If every image scores `+∞` the result is `+∞`; a mix of infinite and
/// finite scores is an error.
pub fn evaluate_dataset(net: &Network<f32>, images: &[Image], cfg: &NoiseConfig) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty dataset"));
    }
    let scores = par::map_range(images.len(), |i| {
        let noisy = add_awgn(&images[i], cfg, stream_key(NoiseDomain::Test, 0, i as u64));
        let out = denoise_image(net, &noisy)?;
        psnr(&images[i], &out)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    mean_psnr(&scores)
}

/// Arithmetic mean with the infinite-score policy of [`evaluate_dataset`].
pub fn mean_psnr(scores: &[f64]) -> Result<f64> {
    let infinite = scores.iter().filter(|s| s.is_infinite()).count();
    if infinite == scores.len() {
        return Ok(f64::INFINITY);
    }
    if infinite > 0 {
        return Err(Error::Numeric(format!(
            "{infinite} of {} images were reproduced exactly (infinite PSNR); \
             a mean over mixed finite/infinite scores is undefined",
            scores.len()
        )));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub psnr_db: f64,
    /// Taken from published results rather than computed here.
    pub external: bool,
}

/// PSNR results indexed by (method, dataset, sigma). Axis order is the
/// order of first insertion, except that sigmas are kept ascending.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalGrid {
    methods: Vec<String>,
    datasets: Vec<String>,
    sigmas: Vec<f64>,
    cells: HashMap<(String, String, u64), Cell>,
}

pub fn format_sigma(s: f64) -> String {
    if s.fract() == 0.0 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

impl EvalGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn insert(&mut self, method: &str, dataset: &str, sigma: f64, cell: Cell) {
        if !self.methods.iter().any(|m| m == method) {
            self.methods.push(method.to_string());
        }
        if !self.datasets.iter().any(|d| d == dataset) {
            self.datasets.push(dataset.to_string());
        }
        if !self.sigmas.contains(&sigma) {
            self.sigmas.push(sigma);
            self.sigmas.sort_by(|a, b| a.total_cmp(b));
        }
        self.cells
            .insert((method.to_string(), dataset.to_string(), sigma.to_bits()), cell);
    }

    pub fn get(&self, method: &str, dataset: &str, sigma: f64) -> Option<Cell> {
        self.cells
            .get(&(method.to_string(), dataset.to_string(), sigma.to_bits()))
            .copied()
    }

    pub fn psnr(&self, method: &str, dataset: &str, sigma: f64) -> Result<f64> {
        self.get(method, dataset, sigma)
            .map(|c| c.psnr_db)
            .ok_or_else(|| {
                Error::IncompleteGrid(format!(
                    "{method} / {dataset} / sigma={}",
                    format_sigma(sigma)
                ))
            })
    }

    /// Parses `method,dataset,sigma,psnr_db` rows (header required).
    pub fn from_results_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "method,dataset,sigma,psnr_db" => {}
            Some(h) => return Err(Error::invalid(format!("unexpected results header {h:?}"))),
            None => return Err(Error::invalid("results file is empty")),
        }
        let mut grid = EvalGrid::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [method, dataset, sigma, value] = fields[..] else {
                return Err(Error::invalid(format!("results row {}: {line:?}", i + 2)));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("results row {}: bad number {s:?}", i + 2)))
            };
            let cell = Cell {
                psnr_db: parse(value)?,
                external: method == BM3D,
            };
            grid.insert(method, dataset, parse(sigma)?, cell);
        }
        Ok(grid)
    }

    /// Rows in method, dataset, sigma order with 4-decimal dB values.
    pub fn to_results_csv(&self) -> String {
        let mut out = String::from("method,dataset,sigma,psnr_db\n");
        for m in &self.methods {
            for d in &self.datasets {
                for &s in &self.sigmas {
                    if let Some(c) = self.get(m, d, s) {
                        let _ = writeln!(out, "{m},{d},{},{:.4}", format_sigma(s), c.psnr_db);
                    }
                }
            }
        }
        out
    }

    /// Bundled Table-1 values.
    pub fn published() -> Self {
        let mut grid = Self::from_results_csv(PUBLISHED_TABLE1_CSV).expect("bundled table parses");
        for cell in grid.cells.values_mut() {
            cell.external = true;
        }
        grid
    }
}

/// Published BM3D PSNR for a Table-1 dataset (case-insensitive name match).
pub fn bm3d_reference(dataset: &str, sigma: f64) -> Option<(String, f64)> {
    let table = EvalGrid::published();
    let canonical = table
        .datasets()
        .iter()
        .find(|d| d.eq_ignore_ascii_case(dataset))?
        .clone();
    let v = table.get(BM3D, &canonical, sigma)?.psnr_db;
    Some((canonical, v))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    /// Cross-dataset mean for each sigma, in grid sigma order.
    pub per_sigma: Vec<f64>,
    /// Mean over all dataset × sigma cells.
    pub overall: f64,
    /// `per_sigma - baseline.per_sigma`, absent for the baseline itself or
    /// when no baseline is present.
    pub margin_per_sigma: Option<Vec<f64>>,
    pub margin_overall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    pub sigmas: Vec<f64>,
    /// `[method][dataset][sigma]`
    pub table: Vec<Vec<Vec<f64>>>,
    pub summaries: Vec<MethodSummary>,
    pub baseline: Option<String>,
}

impl Report {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Fixed-width grid in Table-1 layout followed by per-sigma means,
    /// overall means and margins against the baseline.
    pub fn table1_text(&self) -> String {
        const NAME: usize = 16;
        const COL: usize = 9;
        let span = COL * self.sigmas.len();
        let mut out = format!("{:NAME$}", "");
        for d in &self.datasets {
            let _ = write!(out, "{d:<span$}");
        }
        out = out.trim_end().to_string();
        out.push('\n');
        let _ = write!(out, "{:NAME$}", "Method");
        for _ in &self.datasets {
            for s in &self.sigmas {
                let _ = write!(out, "{:<COL$}", format!("s={}", format_sigma(*s)));
            }
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for (mi, m) in self.methods.iter().enumerate() {
            let mut line = format!("{m:NAME$}");
            for row in &self.table[mi] {
                for v in row {
                    let _ = write!(line, "{:<COL$}", format!("{v:.2}"));
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }

        out.push_str("\nMean over datasets\n");
        let _ = write!(out, "{:NAME$}", "Method");
        for s in &self.sigmas {
            let _ = write!(out, "{:<COL$}", format!("s={}", format_sigma(*s)));
        }
        out.push_str("overall");
        if let Some(b) = &self.baseline {
            let _ = write!(out, "  margin vs {b} (per sigma; overall)");
        }
        out.push('\n');
        for s in &self.summaries {
            let mut line = format!("{:NAME$}", s.method);
            for v in &s.per_sigma {
                let _ = write!(line, "{:<COL$}", format!("{v:.2}"));
            }
            let _ = write!(line, "{:<9}", format!("{:.2}", s.overall));
            if let (Some(ms), Some(mo)) = (&s.margin_per_sigma, s.margin_overall) {
                let parts: Vec<String> = ms.iter().map(|v| format!("{v:+.2}")).collect();
                let _ = write!(line, "{}; {mo:+.2}", parts.join(" "));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    /// `sigma,method,mean_psnr_db` rows.
    pub fn fig2_csv(&self) -> String {
        let mut out = String::from("sigma,method,mean_psnr_db\n");
        for (si, s) in self.sigmas.iter().enumerate() {
            for m in &self.summaries {
                let _ = writeln!(out, "{},{},{:.4}", format_sigma(*s), m.method, m.per_sigma[si]);
            }
        }
        out
    }
}

/// Table-1 grid, per-sigma cross-dataset means, overall means and margins
/// against `baseline` (if it is present in the grid).
pub fn aggregate_report(grid: &EvalGrid, baseline: &str) -> Result<Report> {
    if grid.is_empty() {
        return Err(Error::IncompleteGrid("the grid has no results".into()));
    }
    let mut table = Vec::with_capacity(grid.methods.len());
    for m in &grid.methods {
        let mut rows = Vec::with_capacity(grid.datasets.len());
        for d in &grid.datasets {
            rows.push(
                grid.sigmas
                    .iter()
                    .map(|&s| grid.psnr(m, d, s))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        table.push(rows);
    }
    let nd = grid.datasets.len() as f64;
    let summarize = |rows: &Vec<Vec<f64>>| -> (Vec<f64>, f64) {
        let per_sigma: Vec<f64> = (0..grid.sigmas.len())
            .map(|si| rows.iter().map(|r| r[si]).sum::<f64>() / nd)
            .collect();
        let cells: Vec<f64> = rows.iter().flatten().copied().collect();
        let overall = cells.iter().sum::<f64>() / cells.len() as f64;
        (per_sigma, overall)
    };
    let base = grid
        .methods
        .iter()
        .position(|m| m == baseline)
        .map(|i| summarize(&table[i]));
    let summaries = grid
        .methods
        .iter()
        .zip(&table)
        .map(|(m, rows)| {
            let (per_sigma, overall) = summarize(rows);
            let (margin_per_sigma, margin_overall) = match &base {
                Some((bs, bo)) if m != baseline => (
                    Some(per_sigma.iter().zip(bs).map(|(a, b)| a - b).collect()),
                    Some(overall - bo),
                ),
                _ => (None, None),
            };
            MethodSummary {
                method: m.clone(),
                per_sigma,
                overall,
                margin_per_sigma,
                margin_overall,
            }
        })
        .collect();
    Ok(Report {
        methods: grid.methods.clone(),
        datasets: grid.datasets.clone(),
        sigmas: grid.sigmas.clone(),
        table,
        summaries,
        baseline: base.map(|_| baseline.to_string()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaQRow {
    pub q_from: usize,
    pub q_to: usize,
    /// Percentage change per sigma, in grid sigma order.
    pub percent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaQTable {
    pub width: usize,
    pub sigmas: Vec<f64>,
    pub rows: Vec<DeltaQRow>,
}

/// For each `(q_a, q_b)` and sigma: mean over datasets of
/// `100 · (P_b − P_a) / P_a`, where `P_q` is the PSNR of the width-`width`
/// network of order `q` (`CNN-<width>` for `q = 1`).
pub fn delta_q_table(grid: &EvalGrid, width: usize, q_pairs: &[(usize, usize)]) -> Result<DeltaQTable> {
    if grid.datasets.is_empty() {
        return Err(Error::IncompleteGrid("the grid has no datasets".into()));
    }
    let mut rows = Vec::with_capacity(q_pairs.len());
    for &(qa, qb) in q_pairs {
        let a = ModelName::new(qa, width).to_string();
        let b = ModelName::new(qb, width).to_string();
        let percent = grid
            .sigmas
            .iter()
            .map(|&s| {
                let mut acc = 0.0;
                for d in &grid.datasets {
                    let pa = grid.psnr(&a, d, s)?;
                    let pb = grid.psnr(&b, d, s)?;
                    acc += 100.0 * (pb - pa) / pa;
                }
                Ok(acc / grid.datasets.len() as f64)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(DeltaQRow {
            q_from: qa,
            q_to: qb,
            percent,
        });
    }
    Ok(DeltaQTable {
        width,
        sigmas: grid.sigmas.clone(),
        rows,
    })
}

/// Consecutive-order pairs available for `width` in `grid`, e.g.
/// `[(1, 3), (3, 5), (5, 7)]`.
pub fn available_q_pairs(grid: &EvalGrid, width: usize) -> Vec<(usize, usize)> {
    let mut qs: Vec<usize> = grid
        .methods
        .iter()
        .filter_map(|m| m.parse::<ModelName>().ok())
        .filter(|n| n.width == width)
        .map(|n| n.q_order)
        .collect();
    qs.sort_unstable();
    qs.dedup();
    qs.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Widths that appear with at least two orders.
pub fn delta_q_widths(grid: &EvalGrid) -> Vec<usize> {
    let mut widths: Vec<usize> = grid
        .methods
        .iter()
        .filter_map(|m| m.parse::<ModelName>().ok())
        .map(|n| n.width)
        .collect();
    widths.sort_unstable();
    widths.dedup();
    widths.retain(|&w| !available_q_pairs(grid, w).is_empty());
    widths
}

/// Table-2 layout: one block per width, one row per order change, two
/// decimals.
pub fn table2_text(tables: &[DeltaQTable]) -> String {
    let mut out = String::new();
    let Some(first) = tables.first() else {
        return "Neurons  dQ      (no order pairs available)\n".to_string();
    };
    let _ = write!(out, "{:<9}{:<9}", "Neurons", "dQ");
    for s in &first.sigmas {
        let _ = write!(out, "{:<9}", format!("s={}", format_sigma(*s)));
    }
    out = out.trim_end().to_string();
    out.push('\n');
    for t in tables {
        for (i, r) in t.rows.iter().enumerate() {
            let label = if i == 0 { t.width.to_string() } else { String::new() };
            let mut line = format!("{label:<9}{:<9}", format!("{}->{}", r.q_from, r.q_to));
            for v in &r.percent {
                let _ = write!(line, "{:<9}", format!("{v:.2}"));
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
    }
    out
}
