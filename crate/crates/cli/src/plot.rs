//! Static SVG plots of result tables.

use std::path::Path;

use plotters::prelude::*;

use crate::experiments::log_log_slope;
use crate::table::Table;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Rho,
    Fidelity,
    Convergence,
}

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Io(format!("plot: {e:?}"))
}

fn finite_range(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = lo.abs().max(1.0) * 0.05;
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn meta_f64(t: &Table, key: &str) -> Option<f64> {
    t.meta(key).and_then(|v| v.parse().ok())
}

const SIZE: (u32, u32) = (900, 560);

pub fn plot(table_path: &Path, kind: PlotKind, out: &Path) -> Result<(), CliError> {
    let table = Table::read(table_path)?;
    match kind {
        PlotKind::Rho => plot_rho(&table, out),
        PlotKind::Fidelity => plot_fidelity(&table, out),
        PlotKind::Convergence => plot_convergence(&table, out),
    }
}

fn plot_rho(table: &Table, out: &Path) -> Result<(), CliError> {
    let t = table.column("t")?;
    let rho = table.column("rho")?;
    let a2 = table.column("rho_a2").ok();
    let (t0, t1) = finite_range(t.iter().copied()).ok_or_else(|| CliError::Format("no finite times".into()))?;
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("return probability", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(t0..t1, 0.0..1.05)
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("t").y_desc("rho").draw().map_err(draw_err)?;
    let window = meta_f64(table, "window_lo").zip(meta_f64(table, "window_hi"));
    if let Some((lo, hi)) = window {
        chart
            .draw_series(std::iter::once(Rectangle::new(
                [(lo.max(t0), 0.0), (hi.min(t1), 1.05)],
                RGBColor(255, 200, 120).mix(0.35).filled(),
            )))
            .map_err(draw_err)?
            .label("collapse window")
            .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 16, y + 5)], RGBColor(255, 200, 120).filled()));
    }
    chart
        .draw_series(LineSeries::new(
            t.iter().zip(&rho).filter(|(_, r)| r.is_finite()).map(|(a, b)| (*a, *b)),
            &BLUE,
        ))
        .map_err(draw_err)?
        .label("rho")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    if let Some(a2) = a2.filter(|v| v.iter().any(|x| x.is_finite())) {
        chart
            .draw_series(LineSeries::new(
                t.iter().zip(&a2).filter(|(_, r)| r.is_finite()).map(|(a, b)| (*a, *b)),
                RED.mix(0.7),
            ))
            .map_err(draw_err)?
            .label("second-order resummed")
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    }
    // revival peak: largest rho after the collapse window (or after the first tenth)
    let after = window.map_or(t0 + 0.1 * (t1 - t0), |w| w.1);
    if let Some((tp, rp)) = t
        .iter()
        .zip(&rho)
        .filter(|(a, r)| **a > after && r.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        chart
            .draw_series(std::iter::once(Circle::new((*tp, *rp), 5, BLACK.filled())))
            .map_err(draw_err)?;
        chart
            .draw_series(std::iter::once(Text::new(
                format!("revival peak {rp:.3} at t = {tp:.4}"),
                (*tp, (*rp + 0.03).min(1.0)),
                ("sans-serif", 14),
            )))
            .map_err(draw_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn plot_fidelity(table: &Table, out: &Path) -> Result<(), CliError> {
    let t = table.column("t")?;
    let semi = table.column("f_semi")?;
    let exact = table.column("f_exact").ok();
    let hbar = table.column("hbar").unwrap_or_else(|_| vec![f64::NAN; t.len()]);
    let (t0, t1) = finite_range(t.iter().copied()).ok_or_else(|| CliError::Format("no finite times".into()))?;
    let (f0, f1) = finite_range(semi.iter().chain(exact.iter().flatten()).copied()).unwrap_or((0.0, 1.0));
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("fidelity", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(t0..t1, (f0.min(0.0))..(f1.max(1.0) * 1.02))
        .map_err(draw_err)?;
    chart.configure_mesh().x_desc("t").y_desc("f").draw().map_err(draw_err)?;
    let mut groups: Vec<f64> = Vec::new();
    for h in &hbar {
        if !groups.iter().any(|g| g.to_bits() == h.to_bits()) {
            groups.push(*h);
        }
    }
    for (gi, g) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let idx: Vec<usize> = (0..t.len()).filter(|&k| hbar[k].to_bits() == g.to_bits()).collect();
        let tag = if g.is_nan() { String::new() } else { format!(" hbar={g}") };
        chart
            .draw_series(LineSeries::new(
                idx.iter().filter(|&&k| semi[k].is_finite()).map(|&k| (t[k], semi[k])),
                color.stroke_width(2),
            ))
            .map_err(draw_err)?
            .label(format!("semiclassical{tag}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        if let Some(ex) = &exact {
            if idx.iter().any(|&k| ex[k].is_finite()) {
                chart
                    .draw_series(
                        idx.iter()
                            .filter(|&&k| ex[k].is_finite())
                            .map(|&k| Circle::new((t[k], ex[k]), 3, color.filled())),
                    )
                    .map_err(draw_err)?
                    .label(format!("exact{tag}"))
                    .legend(move |(x, y)| Circle::new((x + 8, y), 3, color.filled()));
            }
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

fn plot_convergence(table: &Table, out: &Path) -> Result<(), CliError> {
    let h = table.column("hbar")?;
    let e = table.column("max_err")?;
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(&e)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.log10(), b.log10()))
        .collect();
    if pts.is_empty() {
        return Err(CliError::Format("no positive (hbar, max_err) pairs".into()));
    }
    let (x0, x1) = finite_range(pts.iter().map(|p| p.0)).expect("non-empty");
    let (y0, y1) = finite_range(pts.iter().map(|p| p.1)).expect("non-empty");
    let (px, py) = (0.1 * (x1 - x0).max(0.1), 0.1 * (y1 - y0).max(0.1));
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("error against hbar", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d((x0 - px)..(x1 + px), (y0 - py)..(y1 + py))
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("log10 hbar")
        .y_desc("log10 max_err")
        .draw()
        .map_err(draw_err)?;
    chart
        .draw_series(pts.iter().map(|&p| Circle::new(p, 5, BLUE.filled())))
        .map_err(draw_err)?
        .label("max error")
        .legend(|(x, y)| Circle::new((x + 8, y), 4, BLUE.filled()));
    let slope = log_log_slope(&h, &e);
    if let Some(s) = slope {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let line = [x0 - px, x1 + px].map(|x| (x, my + s * (x - mx)));
        chart
            .draw_series(LineSeries::new(line, RED.stroke_width(2)))
            .map_err(draw_err)?
            .label(format!("fit, slope {s:.3}"))
            .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}
