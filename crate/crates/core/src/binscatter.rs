//! Covariate-adjusted binned scatterplots with separate lines on each side
//! of a split point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::plot::{self, Segment};
use crate::regression::fwl_residualize;
use crate::within::FixedEffectsSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinscatterSpec {
    pub y_var: String,
    pub x_var: String,
    pub controls: Vec<String>,
    pub fe: FixedEffectsSpec,
    pub n_bins: usize,
    pub split_at: f64,
}

impl BinscatterSpec {
    pub fn new(y_var: &str, x_var: &str, n_bins: usize, split_at: f64) -> Self {
        BinscatterSpec {
            y_var: y_var.into(),
            x_var: x_var.into(),
            controls: Vec::new(),
            fe: FixedEffectsSpec::NONE,
            n_bins,
            split_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub x_mean: f64,
    pub y_mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Line {
    pub intercept: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinnedScatter {
    pub bins: Vec<Bin>,
    pub split_point: f64,
    /// `None` when fewer than two bins fall on that side.
    pub line_below: Option<Line>,
    pub line_above: Option<Line>,
    pub n_bins: usize,
    pub n_obs: usize,
    pub empty_side: bool,
    pub line_fit: &'static str,
}

/// Unweighted least-squares line through `points`.
pub fn fit_line(points: &[(f64, f64)]) -> Option<Line> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(Line {
        intercept: my - slope * mx,
        slope,
    })
}

/// Bin sizes for `n` observations in `k` bins; the remainder goes to the
/// leftmost bins.
pub fn equal_count_sizes(n: usize, k: usize) -> Vec<usize> {
    let (base, rem) = (n / k, n % k);
    (0..k).map(|i| base + usize::from(i < rem)).collect()
}

/// Bins `(x, y)` pairs into equal-count bins by `x`; ties keep input order.
pub fn bin_points(x: &[f64], y: &[f64], n_bins: usize) -> Result<Vec<Bin>> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument("binscatter needs at least 2 bins".into()));
    }
    if x.len() < n_bins {
        return Err(Error::TooFewObservations {
            found: x.len(),
            bins: n_bins,
        });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for size in equal_count_sizes(x.len(), n_bins) {
        let idx = &order[start..start + size];
        let c = size as f64;
        bins.push(Bin {
            x_mean: idx.iter().map(|&i| x[i]).sum::<f64>() / c,
            y_mean: idx.iter().map(|&i| y[i]).sum::<f64>() / c,
            count: size,
        });
        start += size;
    }
    Ok(bins)
}

/// Residualizes both variables on controls and fixed effects, restores their
/// sample means, bins by the adjusted `x` and fits a line on each side of the
/// split.
pub fn binscatter(d: &PanelDataset, spec: &BinscatterSpec) -> Result<BinnedScatter> {
    let controls: Vec<&str> = spec.controls.iter().map(String::as_str).collect();
    let res = fwl_residualize(d, &[&spec.y_var, &spec.x_var], &controls, spec.fe)?;
    let n = res.rows.len();
    let mean = |name: &str| -> Result<f64> {
        let v = d.column(name)?;
        Ok(res.rows.iter().map(|&r| v[r]).sum::<f64>() / n as f64)
    };
    let (my, mx) = (mean(&spec.y_var)?, mean(&spec.x_var)?);
    let shift = |v: &[f64], m: f64| -> Vec<f64> {
        // residuals already centred when anything was partialled out
        let c = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|a| a - c + m).collect()
    };
    let y = shift(&res.columns[0], my);
    let x = shift(&res.columns[1], mx);
    let bins = bin_points(&x, &y, spec.n_bins)?;
    let side = |above: bool| -> Vec<(f64, f64)> {
        bins.iter()
            .filter(|b| (b.x_mean > spec.split_at) == above)
            .map(|b| (b.x_mean, b.y_mean))
            .collect()
    };
    let (below, above) = (side(false), side(true));
    let empty_side = below.len() < 2 || above.len() < 2;
    Ok(BinnedScatter {
        line_below: fit_line(&below),
        line_above: fit_line(&above),
        bins,
        split_point: spec.split_at,
        n_bins: spec.n_bins,
        n_obs: n,
        empty_side,
        line_fit: "unweighted least squares on bin means",
    })
}

impl BinnedScatter {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x_mean", "y_mean", "count"])?;
        for b in &self.bins {
            w.write_record([b.x_mean.to_string(), b.y_mean.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self, title: &str, labels: (&str, &str)) -> String {
        let pts: Vec<(f64, f64)> = self.bins.iter().map(|b| (b.x_mean, b.y_mean)).collect();
        let lo = pts.first().map_or(0.0, |p| p.0);
        let hi = pts.last().map_or(1.0, |p| p.0);
        let mut segs = Vec::new();
        if let Some(l) = self.line_below {
            segs.push(Segment {
                from: lo,
                to: self.split_point.min(hi),
                intercept: l.intercept,
                slope: l.slope,
            });
        }
        if let Some(l) = self.line_above {
            segs.push(Segment {
                from: self.split_point.max(lo),
                to: hi,
                intercept: l.intercept,
                slope: l.slope,
            });
        }
        plot::scatter_plot(title, &pts, &segs, self.split_point, labels)
    }
}
